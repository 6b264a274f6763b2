//! Gradient-descent optimizers over parameter bundles.

use serde::{Deserialize, Serialize};

use super::param::Bundle;

/// The update rule. `Adam` is the default training regimen; `Sgd` exists for
/// plain full-batch descent, whose per-epoch loss decrease is easy to test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state sized to one parameter bundle.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        let state = match kind {
            OptimizerKind::Sgd { .. } => 0,
            OptimizerKind::Adam { .. } => param_count,
        };
        Optimizer {
            kind,
            t: 0,
            m: vec![0.0; state],
            v: vec![0.0; state],
        }
    }

    /// Apply one update. `grads` must have the same block layout as `params`.
    pub fn step(&mut self, params: &mut Bundle, grads: &Bundle) {
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (p, g) in params.blocks_mut().iter_mut().zip(grads.blocks()) {
                    debug_assert_eq!(p.name, g.name);
                    for (pv, gv) in p.data.iter_mut().zip(&g.data) {
                        *pv -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                let mut offset = 0;
                for (p, g) in params.blocks_mut().iter_mut().zip(grads.blocks()) {
                    debug_assert_eq!(p.name, g.name);
                    for (i, (pv, gv)) in p.data.iter_mut().zip(&g.data).enumerate() {
                        let k = offset + i;
                        self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * gv;
                        self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * gv * gv;
                        let m_hat = self.m[k] / bc1;
                        let v_hat = self.v[k] / bc2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                    offset += p.data.len();
                }
            }
        }
    }
}
