//! Dense layers, activations, masked softmax, embedding tables, and the
//! Adagrad update. All math is f64; matrices are flat row-major `Vec<f64>`.

mod adagrad;
mod dense;
mod embedding;
mod param;
mod softmax;

pub use adagrad::{adagrad_update, Adagrad};
pub use dense::{Activation, DenseCache, DenseLayer, Mode};
pub use embedding::{EmbeddingTable, SparseGrad};
pub use param::Param;
pub use softmax::{masked_softmax, masked_softmax_backward};

/// Numerical floor used inside Dice normalization and Adagrad denominators.
pub const EPS: f64 = 1e-8;

/// Splitmix64 step, used to derive independent sub-seeds from one root seed.
pub fn subseed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard normal draw via Box-Muller.
pub fn randn<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_symmetry_and_range() {
        assert_eq!(sigmoid(0.0), 0.5);
        for &x in &[-700.0, -30.0, -1.0, 0.3, 25.0, 700.0] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0 || (x > 100.0 && s == 1.0));
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn subseed_changes_with_tag_and_seed() {
        assert_ne!(subseed(7, 0), subseed(7, 1));
        assert_ne!(subseed(7, 0), subseed(8, 0));
        assert_eq!(subseed(42, 3), subseed(42, 3));
    }
}
