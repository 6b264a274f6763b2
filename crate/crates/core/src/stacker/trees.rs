//! Seeded tree-ensemble base learners: random forests, extremely randomized
//! trees and gradient-boosted trees over dense feature vectors.
//!
//! Everything here is deterministic given the learner seed: bootstrap
//! samples, feature subsets and extra-trees thresholds all come from a
//! counter-derived ChaCha stream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::nn::derive_seed;
use crate::nn::ops::softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeAlgorithm {
    RandomForest,
    ExtraTrees,
    GradientBoosting,
}

/// One base learner of the stacking roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseLearnerSpec {
    pub name: String,
    pub algorithm: TreeAlgorithm,
    /// Trees for bagged learners, boosting rounds for gradient boosting.
    pub trees: usize,
    pub max_depth: Option<usize>,
    /// Shrinkage (learning rate); used by gradient boosting only.
    pub shrinkage: f64,
}

/// The five-learner roster: two random-forest and two extra-trees
/// parameterizations plus one gradient-boosted learner.
pub fn canonical_roster() -> Vec<BaseLearnerSpec> {
    vec![
        BaseLearnerSpec {
            name: "random-forest-a".into(),
            algorithm: TreeAlgorithm::RandomForest,
            trees: 200,
            max_depth: None,
            shrinkage: 0.1,
        },
        BaseLearnerSpec {
            name: "random-forest-b".into(),
            algorithm: TreeAlgorithm::RandomForest,
            trees: 400,
            max_depth: None,
            shrinkage: 0.1,
        },
        BaseLearnerSpec {
            name: "extra-trees-a".into(),
            algorithm: TreeAlgorithm::ExtraTrees,
            trees: 200,
            max_depth: None,
            shrinkage: 0.1,
        },
        BaseLearnerSpec {
            name: "extra-trees-b".into(),
            algorithm: TreeAlgorithm::ExtraTrees,
            trees: 200,
            max_depth: Some(20),
            shrinkage: 0.1,
        },
        BaseLearnerSpec {
            name: "gradient-boosted-trees".into(),
            algorithm: TreeAlgorithm::GradientBoosting,
            trees: 300,
            max_depth: Some(6),
            shrinkage: 0.1,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<L> {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(L),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    pub nodes: Vec<Node<L>>,
}

impl<L> Tree<L> {
    pub fn eval(&self, x: &[f64]) -> &L {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// A trained base learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeEnsembleModel {
    /// Averaged leaf class distributions (random forest, extra-trees).
    Bagged {
        spec: BaseLearnerSpec,
        trees: Vec<Tree<[f64; 3]>>,
    },
    /// Additive logit stages (gradient boosting).
    Boosted {
        spec: BaseLearnerSpec,
        base: [f64; 3],
        stages: Vec<[Tree<f64>; 3]>,
    },
}

impl TreeEnsembleModel {
    pub fn spec(&self) -> &BaseLearnerSpec {
        match self {
            TreeEnsembleModel::Bagged { spec, .. } => spec,
            TreeEnsembleModel::Boosted { spec, .. } => spec,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> [f64; 3] {
        match self {
            TreeEnsembleModel::Bagged { trees, .. } => {
                let mut acc = [0.0; 3];
                for t in trees {
                    let leaf = t.eval(x);
                    for k in 0..3 {
                        acc[k] += leaf[k];
                    }
                }
                let n = trees.len() as f64;
                [acc[0] / n, acc[1] / n, acc[2] / n]
            }
            TreeEnsembleModel::Boosted { base, stages, spec } => {
                let mut f = *base;
                for stage in stages {
                    for k in 0..3 {
                        f[k] += spec.shrinkage * stage[k].eval(x);
                    }
                }
                let p = softmax(&f);
                [p[0], p[1], p[2]]
            }
        }
    }
}

/// Train one base learner on `(features, labels)` with a derived seed.
pub fn train_base_learner(
    spec: &BaseLearnerSpec,
    features: &[Vec<f64>],
    labels: &[Label],
    indices: &[usize],
    seed: u64,
) -> TreeEnsembleModel {
    assert!(!indices.is_empty(), "cannot train on zero instances");
    match spec.algorithm {
        TreeAlgorithm::RandomForest => bagged(spec, features, labels, indices, seed, true, false),
        TreeAlgorithm::ExtraTrees => bagged(spec, features, labels, indices, seed, false, true),
        TreeAlgorithm::GradientBoosting => boosted(spec, features, labels, indices, seed),
    }
}

fn bagged(
    spec: &BaseLearnerSpec,
    features: &[Vec<f64>],
    labels: &[Label],
    indices: &[usize],
    seed: u64,
    bootstrap: bool,
    extra_random: bool,
) -> TreeEnsembleModel {
    let d = features[indices[0]].len();
    let mtry = (d as f64).sqrt().round().max(1.0) as usize;
    let max_depth = spec.max_depth.unwrap_or(usize::MAX);
    let mut trees = Vec::with_capacity(spec.trees);
    for t in 0..spec.trees {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
        let sample: Vec<usize> = if bootstrap {
            (0..indices.len())
                .map(|_| indices[rng.random_range(0..indices.len())])
                .collect()
        } else {
            indices.to_vec()
        };
        let mut builder = ClassTreeBuilder {
            features,
            labels,
            mtry,
            max_depth,
            extra_random,
            rng,
            nodes: Vec::new(),
        };
        builder.build(sample, 0);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    TreeEnsembleModel::Bagged {
        spec: spec.clone(),
        trees,
    }
}

struct ClassTreeBuilder<'a> {
    features: &'a [Vec<f64>],
    labels: &'a [Label],
    mtry: usize,
    max_depth: usize,
    extra_random: bool,
    rng: ChaCha8Rng,
    nodes: Vec<Node<[f64; 3]>>,
}

impl ClassTreeBuilder<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for &i in idx {
            counts[self.labels[i].index()] += 1;
        }
        counts
    }

    fn leaf(&mut self, counts: [usize; 3]) -> usize {
        let total: usize = counts.iter().sum();
        let dist = [
            counts[0] as f64 / total as f64,
            counts[1] as f64 / total as f64,
            counts[2] as f64 / total as f64,
        ];
        self.nodes.push(Node::Leaf(dist));
        self.nodes.len() - 1
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || idx.len() < 2 || depth >= self.max_depth {
            return self.leaf(counts);
        }
        let Some((feature, threshold)) = self.best_split(&idx, &counts) else {
            return self.leaf(counts);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.features[i][feature] <= threshold);
        // reserve the slot so children indices are known after recursion
        self.nodes.push(Node::Leaf([0.0; 3]));
        let slot = self.nodes.len() - 1;
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }

    fn candidate_features(&mut self, d: usize) -> Vec<usize> {
        let mut all: Vec<usize> = (0..d).collect();
        let k = self.mtry.min(d);
        for i in 0..k {
            let j = self.rng.random_range(i..d);
            all.swap(i, j);
        }
        all.truncate(k);
        all
    }

    fn best_split(&mut self, idx: &[usize], counts: &[usize; 3]) -> Option<(usize, f64)> {
        let d = self.features[idx[0]].len();
        let candidates = self.candidate_features(d);
        let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
        for f in candidates {
            let split = if self.extra_random {
                self.random_threshold_split(idx, f, counts)
            } else {
                best_gini_split(self.features, self.labels, idx, f, counts)
            };
            if let Some((imp, thr)) = split {
                match best {
                    Some((b, _, _)) if imp >= b => {}
                    _ => best = Some((imp, f, thr)),
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn random_threshold_split(
        &mut self,
        idx: &[usize],
        f: usize,
        counts: &[usize; 3],
    ) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in idx {
            let v = self.features[i][f];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
            return None;
        }
        let threshold = self.rng.random_range(lo..hi);
        let mut left = [0usize; 3];
        let mut nl = 0usize;
        for &i in idx {
            if self.features[i][f] <= threshold {
                left[self.labels[i].index()] += 1;
                nl += 1;
            }
        }
        if nl == 0 || nl == idx.len() {
            return None;
        }
        let right = [
            counts[0] - left[0],
            counts[1] - left[1],
            counts[2] - left[2],
        ];
        Some((weighted_gini(&left, nl, &right, idx.len() - nl), threshold))
    }
}

fn gini(counts: &[usize; 3], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut g = 1.0;
    for &c in counts {
        let p = c as f64 / n as f64;
        g -= p * p;
    }
    g
}

fn weighted_gini(left: &[usize; 3], nl: usize, right: &[usize; 3], nr: usize) -> f64 {
    let n = (nl + nr) as f64;
    (nl as f64 * gini(left, nl) + nr as f64 * gini(right, nr)) / n
}

/// Exact best Gini split on one feature: scan sorted values, thresholds at
/// midpoints between distinct neighbors.
fn best_gini_split(
    features: &[Vec<f64>],
    labels: &[Label],
    idx: &[usize],
    f: usize,
    counts: &[usize; 3],
) -> Option<(f64, f64)> {
    let mut sorted: Vec<usize> = idx.to_vec();
    sorted.sort_by(|&a, &b| {
        features[a][f]
            .partial_cmp(&features[b][f])
            .expect("finite feature values")
    });
    let mut left = [0usize; 3];
    let mut best: Option<(f64, f64)> = None;
    for i in 0..sorted.len() - 1 {
        left[labels[sorted[i]].index()] += 1;
        let v = features[sorted[i]][f];
        let next = features[sorted[i + 1]][f];
        if next <= v {
            continue;
        }
        let nl = i + 1;
        let right = [
            counts[0] - left[0],
            counts[1] - left[1],
            counts[2] - left[2],
        ];
        let imp = weighted_gini(&left, nl, &right, sorted.len() - nl);
        let thr = v + (next - v) / 2.0;
        match best {
            Some((b, _)) if imp >= b => {}
            _ => best = Some((imp, thr)),
        }
    }
    best
}

/// Multiclass gradient boosting with softmax loss. Each round fits one
/// squared-error regression tree per class to the residuals `y - p`, with
/// Friedman leaf values.
fn boosted(
    spec: &BaseLearnerSpec,
    features: &[Vec<f64>],
    labels: &[Label],
    indices: &[usize],
    seed: u64,
) -> TreeEnsembleModel {
    let n = indices.len();
    let max_depth = spec.max_depth.unwrap_or(usize::MAX);
    // Laplace-smoothed log priors keep degenerate single-class sets finite.
    let mut class_n = [0usize; 3];
    for &i in indices {
        class_n[labels[i].index()] += 1;
    }
    let base = [
        ((class_n[0] + 1) as f64 / (n + 3) as f64).ln(),
        ((class_n[1] + 1) as f64 / (n + 3) as f64).ln(),
        ((class_n[2] + 1) as f64 / (n + 3) as f64).ln(),
    ];

    let mut scores: Vec<[f64; 3]> = vec![base; n];
    let mut stages = Vec::new();
    let _ = seed; // boosting is deterministic; no randomness consumed
    for _round in 0..spec.trees {
        let mut residuals: Vec<[f64; 3]> = Vec::with_capacity(n);
        let mut max_abs: f64 = 0.0;
        for (pos, &i) in indices.iter().enumerate() {
            let p = softmax(&scores[pos]);
            let mut r = [0.0; 3];
            for k in 0..3 {
                let y = if labels[i].index() == k { 1.0 } else { 0.0 };
                r[k] = y - p[k];
                max_abs = max_abs.max(r[k].abs());
            }
            residuals.push(r);
        }
        if max_abs < 1e-10 {
            break;
        }
        let mut stage: Vec<Tree<f64>> = Vec::with_capacity(3);
        for k in 0..3 {
            let targets: Vec<f64> = residuals.iter().map(|r| r[k]).collect();
            let tree = fit_regression_tree(features, indices, &targets, max_depth);
            for (pos, &i) in indices.iter().enumerate() {
                scores[pos][k] += spec.shrinkage * tree.eval(&features[i]);
            }
            stage.push(tree);
        }
        let stage: [Tree<f64>; 3] = stage.try_into().expect("three trees per stage");
        stages.push(stage);
    }
    TreeEnsembleModel::Boosted {
        spec: spec.clone(),
        base,
        stages,
    }
}

struct RegTreeBuilder<'a> {
    features: &'a [Vec<f64>],
    /// position of each global index within `targets`
    target_of: std::collections::HashMap<usize, f64>,
    max_depth: usize,
    nodes: Vec<Node<f64>>,
}

impl RegTreeBuilder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        // Friedman's multiclass step: (K-1)/K * sum(r) / sum(|r|(1-|r|))
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in idx {
            let r = self.target_of[&i];
            num += r;
            den += r.abs() * (1.0 - r.abs());
        }
        let value = if den.abs() < 1e-12 {
            0.0
        } else {
            (2.0 / 3.0) * num / den
        };
        self.nodes.push(Node::Leaf(value));
        self.nodes.len() - 1
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        if idx.len() < 2 || depth >= self.max_depth {
            return self.leaf(&idx);
        }
        let Some((feature, threshold)) = self.best_split(&idx) else {
            return self.leaf(&idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.features[i][feature] <= threshold);
        self.nodes.push(Node::Leaf(0.0));
        let slot = self.nodes.len() - 1;
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }

    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let d = self.features[idx[0]].len();
        let total_sum: f64 = idx.iter().map(|i| self.target_of[i]).sum();
        let mut best: Option<(f64, usize, f64)> = None; // (sse, feature, threshold)
        for f in 0..d {
            let mut sorted: Vec<usize> = idx.to_vec();
            sorted.sort_by(|&a, &b| {
                self.features[a][f]
                    .partial_cmp(&self.features[b][f])
                    .expect("finite feature values")
            });
            let mut left_sum = 0.0;
            for i in 0..sorted.len() - 1 {
                left_sum += self.target_of[&sorted[i]];
                let v = self.features[sorted[i]][f];
                let next = self.features[sorted[i + 1]][f];
                if next <= v {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = (sorted.len() - i - 1) as f64;
                let right_sum = total_sum - left_sum;
                // minimizing SSE == maximizing sum^2/n over the two sides
                let score = -(left_sum * left_sum / nl + right_sum * right_sum / nr);
                let thr = v + (next - v) / 2.0;
                match best {
                    Some((b, _, _)) if score >= b => {}
                    _ => best = Some((score, f, thr)),
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn fit_regression_tree(
    features: &[Vec<f64>],
    indices: &[usize],
    targets: &[f64],
    max_depth: usize,
) -> Tree<f64> {
    let target_of = indices
        .iter()
        .copied()
        .zip(targets.iter().copied())
        .collect();
    let mut builder = RegTreeBuilder {
        features,
        target_of,
        max_depth,
        nodes: Vec::new(),
    };
    builder.build(indices.to_vec(), 0);
    Tree {
        nodes: builder.nodes,
    }
}
