//! Named, shape-tagged parameter storage.
//!
//! A [`Bundle`] is an ordered list of named blocks (matrices or vectors) in
//! one flat `f64` store per block. Optimizers and finite-difference checks
//! iterate blocks in insertion order, which makes updates and flattened
//! views deterministic.

use serde::{Deserialize, Serialize};

/// One named parameter block, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Block {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of named blocks. Gradients use a bundle of the same
/// shape ([`Bundle::zeros_like`]).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Bundle {
    blocks: Vec<Block>,
}

impl Bundle {
    pub fn new() -> Self {
        Bundle::default()
    }

    pub fn add_matrix(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        mut init: impl FnMut() -> f64,
    ) {
        assert!(
            !self.blocks.iter().any(|b| b.name == name),
            "duplicate block {name:?}"
        );
        let data = (0..rows * cols).map(|_| init()).collect();
        self.blocks.push(Block {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
    }

    pub fn add_vector(&mut self, name: &str, len: usize, init: impl FnMut() -> f64) {
        self.add_matrix(name, len, 1, init);
    }

    pub fn get(&self, name: &str) -> &Block {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .unwrap_or_else(|| panic!("no parameter block {name:?}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Block {
        self.blocks
            .iter_mut()
            .find(|b| b.name == name)
            .unwrap_or_else(|| panic!("no parameter block {name:?}"))
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    /// Same shapes, all zeros. The gradient accumulator for this bundle.
    pub fn zeros_like(&self) -> Bundle {
        Bundle {
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    name: b.name.clone(),
                    rows: b.rows,
                    cols: b.cols,
                    data: vec![0.0; b.data.len()],
                })
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for b in &mut self.blocks {
            b.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for b in &mut self.blocks {
            b.data.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    /// All parameters as one flat vector, blocks in insertion order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for b in &self.blocks {
            out.extend_from_slice(&b.data);
        }
        out
    }

    /// Overwrite all parameters from a flat vector produced by [`flatten`].
    ///
    /// [`flatten`]: Bundle::flatten
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat length mismatch");
        let mut offset = 0;
        for b in &mut self.blocks {
            let n = b.data.len();
            b.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }
}
