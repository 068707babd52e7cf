//! Iterative magnitude pruning of the field-pair strength matrix.
//!
//! Training warms up for a configurable number of epochs, then every
//! `prune_interval` optimizer steps the sparsity target ramps along
//! `S * (1 - D^(j/U))` and the lowest-|R| surviving pairs are masked off until
//! the pruned count reaches `floor(s * P * M)`. Pruned pairs never revive;
//! after training, `finalize` hard-prunes to exactly `floor(S * P * M)`.

use serde::{Deserialize, Serialize};

use crate::attention::PairWeights;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    /// Target sparsity S in [0, 1); 0 disables pruning.
    pub target_sparsity: f64,
    /// Damping ratio D in (0, 1).
    pub damping: f64,
    /// Damping steps U > 0: the schedule's time constant, in optimizer steps.
    pub damping_steps: f64,
    /// Epochs trained before pruning starts.
    pub warmup_epochs: usize,
    /// Optimizer steps between prune actions.
    pub prune_interval: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            target_sparsity: 0.8,
            damping: 0.8,
            damping_steps: 100.0,
            warmup_epochs: 1,
            prune_interval: 1,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.target_sparsity) {
            return Err(Error::config(format!(
                "target_sparsity must be in [0, 1), got {}",
                self.target_sparsity
            )));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::config(format!(
                "damping must be in (0, 1), got {}",
                self.damping
            )));
        }
        if !(self.damping_steps > 0.0) {
            return Err(Error::config(format!(
                "damping_steps must be > 0, got {}",
                self.damping_steps
            )));
        }
        if self.prune_interval == 0 {
            return Err(Error::config("prune_interval must be >= 1"));
        }
        Ok(())
    }
}

/// Mutable pruning progress; the mask itself lives in [`PairWeights`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneState {
    /// Optimizer steps taken since warm-up ended.
    pub step: u64,
    pub current_sparsity: f64,
}

/// Scheduled sparsity after j post-warm-up steps: `S * (1 - D^(j/U))`.
pub fn sparsity_at(j: u64, cfg: &PruneConfig) -> f64 {
    cfg.target_sparsity * (1.0 - cfg.damping.powf(j as f64 / cfg.damping_steps))
}

fn prune_to_count(pw: &mut PairWeights, target_pruned: usize) -> usize {
    let already = pw.pruned_count();
    if target_pruned <= already {
        return 0;
    }
    // Candidates: surviving entries, smallest |R| first, ties toward the
    // smaller lexicographic (p, j).
    let mut candidates: Vec<usize> = (0..pw.n_pairs()).filter(|&i| pw.mask[i]).collect();
    candidates.sort_by(|&a, &b| {
        pw.r.value[a]
            .abs()
            .partial_cmp(&pw.r.value[b].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let n_new = target_pruned - already;
    for &idx in candidates.iter().take(n_new) {
        pw.mask[idx] = false;
        pw.r.value[idx] = 0.0;
        pw.r.grad[idx] = 0.0;
    }
    n_new
}

/// One prune action at scheduled sparsity `s_now`: prunes the smallest-|R|
/// survivors until `floor(s_now * P * M)` pairs are pruned in total. A target
/// below the already-achieved count is a no-op (the mask is monotone).
/// Returns the updated mask.
pub fn prune_step(pw: &mut PairWeights, state: &mut PruneState, s_now: f64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&s_now) {
        return Err(Error::config(format!("sparsity must be in [0, 1), got {s_now}")));
    }
    let target = (s_now * pw.n_pairs() as f64).floor() as usize;
    prune_to_count(pw, target);
    if s_now > state.current_sparsity {
        state.current_sparsity = s_now;
    }
    Ok(pw.mask.clone())
}

/// Hard-prunes to exactly `floor(S * P * M)` pruned pairs and pins the state
/// at the target sparsity. Returns the final mask.
pub fn finalize(pw: &mut PairWeights, state: &mut PruneState, cfg: &PruneConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    let target = (cfg.target_sparsity * pw.n_pairs() as f64).floor() as usize;
    prune_to_count(pw, target);
    state.current_sparsity = cfg.target_sparsity;
    Ok(pw.mask.clone())
}
