//! Flat key = value run configuration with CLI-flag overrides.
//!
//! Example file:
//!
//! ```text
//! # desk-scale run
//! train_dir = fixtures/scienceie-mini/train
//! out_dir = runs/mini
//! seed = 42
//! cnn = 2
//! stackers = 2
//! lstms = 1
//! embeddings = toy-5=fixtures/embeddings/toy-5d.txt
//! epochs = 5
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use sciphrase::model::{SamplerConfig, TrainOptions};
use sciphrase::nn::OptimizerKind;

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub train_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n_cnn: Option<usize>,
    pub n_stacker: Option<usize>,
    pub n_lstm: Option<usize>,
    pub workers: Option<usize>,
    /// table name -> file path
    pub embeddings: BTreeMap<String, PathBuf>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub meta_epochs: Option<usize>,
    pub folds: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub attn_filters: Option<usize>,
    pub char_budget: Option<usize>,
    pub trees: Option<usize>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (idx, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", path.display(), idx + 1))?;
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), idx + 1))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "train_dir" => self.train_dir = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "seed" => self.seed = Some(value.parse().context("seed must be a u64")?),
            "cnn" => self.n_cnn = Some(value.parse()?),
            "stackers" => self.n_stacker = Some(value.parse()?),
            "lstms" => self.n_lstm = Some(value.parse()?),
            "workers" => self.workers = Some(value.parse()?),
            "embeddings" => {
                for binding in value.split(',') {
                    let (name, path) = parse_binding(binding)?;
                    self.embeddings.insert(name, path);
                }
            }
            "epochs" => self.epochs = Some(value.parse()?),
            "batch_size" => self.batch_size = Some(value.parse()?),
            "learning_rate" => self.learning_rate = Some(value.parse()?),
            "meta_epochs" => self.meta_epochs = Some(value.parse()?),
            "folds" => self.folds = Some(value.parse()?),
            "lstm_hidden" => self.lstm_hidden = Some(value.parse()?),
            "attn_filters" => self.attn_filters = Some(value.parse()?),
            "char_budget" => self.char_budget = Some(value.parse()?),
            "trees" => self.trees = Some(value.parse()?),
            other => bail!("unknown configuration key {other:?}"),
        }
        Ok(())
    }

    /// Training regimen with any configured overrides applied to defaults.
    pub fn train_options(&self) -> TrainOptions {
        let mut opts = TrainOptions::default();
        if let Some(e) = self.epochs {
            opts.epochs = e;
        }
        if let Some(b) = self.batch_size {
            opts.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            opts.optimizer = OptimizerKind::adam(lr);
            opts.stacker.meta_optimizer = OptimizerKind::adam(lr.max(1e-3));
        }
        if let Some(e) = self.meta_epochs {
            opts.stacker.meta_epochs = e;
        }
        if let Some(f) = self.folds {
            opts.stacker.folds = f;
        }
        if let Some(h) = self.lstm_hidden {
            opts.ab_lstm.hidden = h;
        }
        if let Some(f) = self.attn_filters {
            opts.ab_lstm.attn_filters = f;
        }
        if let Some(t) = self.trees {
            for spec in &mut opts.stacker.roster {
                spec.trees = spec.trees.min(t);
            }
        }
        opts
    }

    /// Hyperparameter sampling ranges; the embedding set is the bound names.
    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        if self.embeddings.is_empty() {
            bail!("no embedding tables bound; pass --embeddings NAME=PATH");
        }
        let mut cfg = SamplerConfig {
            embedding_names: self.embeddings.keys().cloned().collect(),
            ..SamplerConfig::default()
        };
        if let Some(b) = self.char_budget {
            cfg.char_budget = b;
        }
        Ok(cfg)
    }
}

pub fn parse_binding(binding: &str) -> Result<(String, PathBuf)> {
    let (name, path) = binding
        .split_once('=')
        .ok_or_else(|| anyhow!("embedding binding {binding:?} is not NAME=PATH"))?;
    let name = name.trim();
    if name.is_empty() {
        bail!("embedding binding {binding:?} has an empty name");
    }
    Ok((name.to_string(), PathBuf::from(path.trim())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_a_full_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "# comment\ntrain_dir = data/train\nseed = 7\ncnn=2\nembeddings = a=x.txt,b=y.txt\nepochs = 3"
        )
        .unwrap();
        let cfg = RunConfig::from_file(f.path()).unwrap();
        assert_eq!(cfg.train_dir.as_deref(), Some(Path::new("data/train")));
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.n_cnn, Some(2));
        assert_eq!(cfg.embeddings.len(), 2);
        assert_eq!(cfg.train_options().epochs, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "sedd = 7").unwrap();
        assert!(RunConfig::from_file(f.path()).is_err());
    }

    #[test]
    fn sampler_requires_bindings() {
        let cfg = RunConfig::default();
        assert!(cfg.sampler_config().is_err());
    }
}
