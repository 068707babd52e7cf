//! Embedding table with sparse gradients: only rows touched by a batch are
//! updated (and only those rows enter the regularizer).

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vocab: usize,
    pub dim: usize,
    /// `[vocab, dim]` row-major.
    pub weight: Vec<f64>,
    pub acc: Vec<f64>,
}

impl EmbeddingTable {
    /// Rows uniform on `[-bound, +bound]`; row 0 (padding/OOV) is trainable
    /// like any other but is masked out of attention by callers.
    pub fn new<R: Rng>(vocab: usize, dim: usize, bound: f64, init_acc: f64, rng: &mut R) -> Result<Self> {
        if vocab == 0 || dim == 0 {
            return Err(Error::config(format!(
                "embedding table dims must be positive, got vocab {vocab}, dim {dim}"
            )));
        }
        let weight = (0..vocab * dim).map(|_| rng.gen_range(-bound..bound)).collect();
        Ok(EmbeddingTable {
            vocab,
            dim,
            weight,
            acc: vec![init_acc; vocab * dim],
        })
    }

    pub fn lookup(&self, id: usize) -> Result<&[f64]> {
        if id >= self.vocab {
            return Err(Error::data(format!(
                "embedding id {id} out of range (vocab {})",
                self.vocab
            )));
        }
        Ok(&self.weight[id * self.dim..(id + 1) * self.dim])
    }
}

/// Per-row gradient accumulator for one embedding table.
///
/// Rows are kept in a `BTreeMap` so iteration order (and therefore every
/// floating-point reduction over the rows) is deterministic.
#[derive(Debug, Clone, Default)]
pub struct SparseGrad {
    pub dim: usize,
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl SparseGrad {
    pub fn new(dim: usize) -> Self {
        SparseGrad {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, id: usize, grad: &[f64]) {
        debug_assert_eq!(grad.len(), self.dim);
        let row = self.rows.entry(id).or_insert_with(|| vec![0.0; self.dim]);
        for (r, g) in row.iter_mut().zip(grad) {
            *r += g;
        }
    }

    /// Marks a row as touched without contributing gradient.
    pub fn touch(&mut self, id: usize) {
        self.rows.entry(id).or_insert_with(|| vec![0.0; self.dim]);
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lookup_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = EmbeddingTable::new(4, 3, 0.5, 0.1, &mut rng).unwrap();
        assert_eq!(t.lookup(3).unwrap().len(), 3);
        assert!(t.lookup(4).is_err());
        assert!(t.weight.iter().all(|w| w.abs() <= 0.5));
    }

    #[test]
    fn sparse_grad_accumulates_per_row() {
        let mut g = SparseGrad::new(2);
        g.add(5, &[1.0, 2.0]);
        g.add(5, &[0.5, -1.0]);
        g.touch(1);
        assert_eq!(g.rows.len(), 2);
        assert_eq!(g.rows[&5], vec![1.5, 1.0]);
        assert_eq!(g.rows[&1], vec![0.0, 0.0]);
        let keys: Vec<usize> = g.rows.keys().copied().collect();
        assert_eq!(keys, vec![1, 5]); // deterministic order
    }
}
