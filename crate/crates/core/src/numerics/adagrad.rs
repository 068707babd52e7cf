//! Adagrad with a positive initial accumulator.
//!
//! Update order matters and is fixed: the squared gradient is added to the
//! accumulator first, then the step uses the updated accumulator:
//! `acc += g^2; theta -= lr * g / (sqrt(acc) + eps)`.

use super::{EmbeddingTable, Param, SparseGrad};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Adagrad {
    pub lr: f64,
    pub eps: f64,
    /// Accumulators start at this value (not zero), which bounds the very
    /// first effective step at `lr / sqrt(init_acc)`.
    pub init_acc: f64,
}

impl Adagrad {
    pub fn new(lr: f64) -> Self {
        Adagrad {
            lr,
            eps: 1e-8,
            init_acc: 0.1,
        }
    }

    pub fn step_param(&self, p: &mut Param) {
        adagrad_update(&mut p.value, &mut p.acc, &p.grad, self.lr, self.eps);
    }

    /// Applies only the rows present in `grad`; all other rows (value and
    /// accumulator) are untouched.
    pub fn step_table(&self, table: &mut EmbeddingTable, grad: &SparseGrad) -> Result<()> {
        if grad.dim != table.dim {
            return Err(Error::shape(format!(
                "sparse grad dim {} != table dim {}",
                grad.dim, table.dim
            )));
        }
        for (&id, g) in &grad.rows {
            if id >= table.vocab {
                return Err(Error::data(format!(
                    "sparse grad row {id} out of range (vocab {})",
                    table.vocab
                )));
            }
            let lo = id * table.dim;
            adagrad_update(
                &mut table.weight[lo..lo + table.dim],
                &mut table.acc[lo..lo + table.dim],
                g,
                self.lr,
                self.eps,
            );
        }
        Ok(())
    }
}

pub fn adagrad_update(value: &mut [f64], acc: &mut [f64], grad: &[f64], lr: f64, eps: f64) {
    debug_assert_eq!(value.len(), acc.len());
    debug_assert_eq!(value.len(), grad.len());
    for i in 0..value.len() {
        acc[i] += grad[i] * grad[i];
        value[i] -= lr * grad[i] / (acc[i].sqrt() + eps);
    }
}
