//! Finite-difference verification of every analytic gradient path.
//!
//! Each check perturbs one scalar at a time by `FD_EPS`, takes the central
//! difference of a scalar loss, and compares against the hand-derived
//! gradient. All relative errors use a 1e-6 denominator floor so that
//! near-zero gradient pairs compare cleanly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionKind, AttentionUnit, BehaviorBlock};
use crate::error::{Error, Result};
use crate::model::{CtrModel, ModelConfig};
use crate::numerics::{randn, Activation, DenseLayer, Mode};
use crate::schema::{FieldDef, FieldSchema, Sample};

pub const FD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub n_checked: usize,
    pub max_rel_err: f64,
}

impl GradCheckEntry {
    fn new(name: impl Into<String>) -> Self {
        GradCheckEntry { name: name.into(), n_checked: 0, max_rel_err: 0.0 }
    }

    fn record(&mut self, analytic: f64, fd: f64) {
        self.n_checked += 1;
        self.max_rel_err = self.max_rel_err.max(rel_err(analytic, fd));
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err < GRAD_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn fill_randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| randn(rng)).collect()
}

/// Checks one dense layer: weights, biases, activation parameters, and the
/// input gradient, under a fixed random linear readout of the outputs.
pub fn check_dense(activation: Activation, mode: Mode, seed: u64) -> Result<GradCheckEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_in, n_out, batch) = (4, 3, 5);
    let mut layer = DenseLayer::new(n_in, n_out, activation, 0.1, &mut rng)?;
    if mode == Mode::Infer {
        // Move the running statistics off their initial values first.
        for _ in 0..3 {
            let warm = fill_randn(&mut rng, batch * n_in);
            layer.forward(&warm, batch, Mode::Train)?;
        }
    }
    let input = fill_randn(&mut rng, batch * n_in);
    let c = fill_randn(&mut rng, batch * n_out);
    let loss = |layer: &mut DenseLayer, input: &[f64]| -> Result<f64> {
        let (out, _) = layer.forward(input, batch, mode)?;
        Ok(out.iter().zip(&c).map(|(o, w)| o * w).sum())
    };

    layer.zero_grad();
    let (_, cache) = layer.forward(&input, batch, mode)?;
    let d_input = layer.backward(&cache, &c)?;

    fn field(layer: &mut DenseLayer, slot: usize) -> &mut Vec<f64> {
        match slot {
            0 => &mut layer.weight.value,
            1 => &mut layer.bias.value,
            _ => &mut layer.act_param.value,
        }
    }

    let mut entry = GradCheckEntry::new(format!("dense.{activation:?}.{mode:?}"));
    let analytic_w = layer.weight.grad.clone();
    let analytic_b = layer.bias.grad.clone();
    let analytic_a = layer.act_param.grad.clone();
    for (slot, analytic) in [(0usize, analytic_w), (1, analytic_b), (2, analytic_a)] {
        for idx in 0..analytic.len() {
            let orig = field(&mut layer, slot)[idx];
            field(&mut layer, slot)[idx] = orig + FD_EPS;
            let lp = loss(&mut layer, &input)?;
            field(&mut layer, slot)[idx] = orig - FD_EPS;
            let lm = loss(&mut layer, &input)?;
            field(&mut layer, slot)[idx] = orig;
            entry.record(analytic[idx], (lp - lm) / (2.0 * FD_EPS));
        }
    }
    let mut probe = input.clone();
    for idx in 0..probe.len() {
        let orig = probe[idx];
        probe[idx] = orig + FD_EPS;
        let lp = loss(&mut layer, &probe)?;
        probe[idx] = orig - FD_EPS;
        let lm = loss(&mut layer, &probe)?;
        probe[idx] = orig;
        entry.record(d_input[idx], (lp - lm) / (2.0 * FD_EPS));
    }
    Ok(entry)
}

fn unit_param_layout(unit: &mut AttentionUnit) -> Vec<(String, usize)> {
    let mut v = Vec::new();
    unit.for_each_param(&mut |n, p| v.push((n.to_string(), p.value.len())));
    v
}

fn unit_value(unit: &mut AttentionUnit, name: &str, idx: usize) -> f64 {
    let mut out = f64::NAN;
    unit.for_each_param(&mut |n, p| {
        if n == name {
            out = p.value[idx];
        }
    });
    out
}

fn unit_set_value(unit: &mut AttentionUnit, name: &str, idx: usize, v: f64) {
    unit.for_each_param(&mut |n, p| {
        if n == name {
            p.value[idx] = v;
        }
    });
}

fn unit_grad(unit: &mut AttentionUnit, name: &str, idx: usize) -> f64 {
    let mut out = f64::NAN;
    unit.for_each_param(&mut |n, p| {
        if n == name {
            out = p.grad[idx];
        }
    });
    out
}

/// Checks one attention unit end to end: all unit parameters plus the
/// gradients flowing into the behavior and query embeddings, with one masked
/// history slot in the block. Also enforces two structural facts: the
/// softmax-level bias gradient is (numerically) zero, and a pruned pair's
/// strength receives exactly zero gradient.
pub fn check_attention_unit(kind: AttentionKind, mode: Mode, seed: u64) -> Result<GradCheckEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, m, k, slots) = (2, 3, 5, 4);
    let hidden = 6;
    let mut unit = AttentionUnit::new(kind, p, m, k, hidden, &[0, 2], 0.1, &mut rng)?;
    let pruned_idx = if kind == AttentionKind::AutoAttention {
        let pw = unit.pair.as_mut().expect("auto pair weights");
        for x in pw.r.value.iter_mut() {
            *x = randn(&mut rng);
        }
        let idx = m + 1; // pair (p=1, j=1)
        let mut mask = pw.mask.clone();
        mask[idx] = false;
        pw.apply_mask(&mask)?;
        Some(idx)
    } else {
        None
    };
    if mode == Mode::Infer && kind.uses_mlp() {
        for _ in 0..3 {
            let warm = BehaviorBlock {
                n_behavior_fields: p,
                n_query_fields: m,
                embed_dim: k,
                behavior_embeds: fill_randn(&mut rng, slots * p * k),
                behavior_mask: vec![true; slots],
                query_embeds: fill_randn(&mut rng, m * k),
            };
            unit.attend(&warm, Mode::Train)?;
        }
    }
    let mut block = BehaviorBlock {
        n_behavior_fields: p,
        n_query_fields: m,
        embed_dim: k,
        behavior_embeds: fill_randn(&mut rng, slots * p * k),
        behavior_mask: vec![true, true, false, true],
        query_embeds: fill_randn(&mut rng, m * k),
    };
    let c = fill_randn(&mut rng, k);
    let loss = |unit: &mut AttentionUnit, block: &BehaviorBlock| -> Result<f64> {
        let (att, _) = unit.attend(block, mode)?;
        Ok(att.interest.iter().zip(&c).map(|(a, b)| a * b).sum())
    };

    unit.zero_grad();
    let (_, cache) = unit.attend(&block, mode)?;
    let grads = unit.attend_backward(&block, &cache, &c)?;

    // The level bias shifts every logit by the same amount; the softmax is
    // invariant to that, so the analytic gradient must vanish.
    let level_bias = match kind {
        AttentionKind::AutoAttention => Some(("pair.bias", 0)),
        AttentionKind::DotProduct => Some(("bias", 0)),
        AttentionKind::Din | AttentionKind::MafS | AttentionKind::MafC => {
            Some(("mlp.output.bias", 0))
        }
        AttentionKind::SumPooling => None,
    };
    if let Some((name, idx)) = level_bias {
        let g = unit_grad(&mut unit, name, idx);
        if g.abs() > 1e-12 {
            return Err(Error::metric(format!(
                "{kind:?}: softmax level bias gradient {g:e} exceeds 1e-12"
            )));
        }
    }
    if let Some(idx) = pruned_idx {
        let g = unit_grad(&mut unit, "pair.r", idx);
        if g != 0.0 {
            return Err(Error::metric(format!(
                "pruned pair strength received gradient {g:e}, expected exactly 0"
            )));
        }
    }

    let mut entry = GradCheckEntry::new(format!("attention.{}.{mode:?}", kind.as_str()));
    for (name, len) in unit_param_layout(&mut unit) {
        for idx in 0..len {
            let analytic = unit_grad(&mut unit, &name, idx);
            let orig = unit_value(&mut unit, &name, idx);
            unit_set_value(&mut unit, &name, idx, orig + FD_EPS);
            let lp = loss(&mut unit, &block)?;
            unit_set_value(&mut unit, &name, idx, orig - FD_EPS);
            let lm = loss(&mut unit, &block)?;
            unit_set_value(&mut unit, &name, idx, orig);
            entry.record(analytic, (lp - lm) / (2.0 * FD_EPS));
        }
    }
    for idx in 0..block.behavior_embeds.len() {
        let orig = block.behavior_embeds[idx];
        block.behavior_embeds[idx] = orig + FD_EPS;
        let lp = loss(&mut unit, &block)?;
        block.behavior_embeds[idx] = orig - FD_EPS;
        let lm = loss(&mut unit, &block)?;
        block.behavior_embeds[idx] = orig;
        entry.record(grads.behavior[idx], (lp - lm) / (2.0 * FD_EPS));
    }
    for idx in 0..block.query_embeds.len() {
        let orig = block.query_embeds[idx];
        block.query_embeds[idx] = orig + FD_EPS;
        let lp = loss(&mut unit, &block)?;
        block.query_embeds[idx] = orig - FD_EPS;
        let lm = loss(&mut unit, &block)?;
        block.query_embeds[idx] = orig;
        entry.record(grads.query[idx], (lp - lm) / (2.0 * FD_EPS));
    }
    Ok(entry)
}

fn model_value(model: &mut CtrModel, name: &str, idx: usize) -> f64 {
    let mut out = f64::NAN;
    model.for_each_param(&mut |n, p| {
        if n == name {
            out = p.value[idx];
        }
    });
    out
}

fn model_set_value(model: &mut CtrModel, name: &str, idx: usize, v: f64) {
    model.for_each_param(&mut |n, p| {
        if n == name {
            p.value[idx] = v;
        }
    });
}

fn table_value(model: &mut CtrModel, name: &str, idx: usize) -> f64 {
    let mut out = f64::NAN;
    model.for_each_table(&mut |n, t| {
        if n == name {
            out = t.weight[idx];
        }
    });
    out
}

fn table_set_value(model: &mut CtrModel, name: &str, idx: usize, v: f64) {
    model.for_each_table(&mut |n, t| {
        if n == name {
            t.weight[idx] = v;
        }
    });
}

fn gradcheck_samples() -> Vec<Sample> {
    // Mixed history lengths, including an empty one; ids stay below 6 so id 6
    // is provably untouched in every table.
    let s = |user: &str, label: u8, q: [usize; 3], behaviors: &[[usize; 2]]| Sample {
        user_id: user.to_string(),
        label,
        query_ids: q.to_vec(),
        behaviors: behaviors.iter().map(|t| t.to_vec()).collect(),
    };
    vec![
        s("u0", 1, [1, 2, 3], &[[1, 2], [3, 4], [5, 1]]),
        s("u0", 0, [4, 5, 0], &[[2, 2], [0, 5]]),
        s("u1", 1, [2, 2, 2], &[[5, 3]]),
        s("u1", 0, [3, 1, 4], &[]),
        s("u2", 1, [0, 4, 5], &[[4, 0], [1, 1]]),
    ]
}

/// Full-model check: every MLP, attention, and embedding gradient against the
/// finite-difference of the regularized training loss (L2 strength 1e-3).
pub fn check_model(kind: AttentionKind, seed: u64) -> Result<GradCheckEntry> {
    let schema = FieldSchema {
        query_fields: (0..3).map(|j| FieldDef { name: format!("q{j}"), vocab: 7 }).collect(),
        behavior_fields: (0..2).map(|p| FieldDef { name: format!("b{p}"), vocab: 7 }).collect(),
        max_behaviors: 3,
        correspondence_map: Vec::new(),
    };
    let config = ModelConfig {
        embed_dim: 4,
        mlp_dims: vec![5, 3, 1],
        attention: kind,
        attention_hidden: 6,
        din_query_fields: vec![0, 2],
        learning_rate: 0.01,
        l2: 1e-3,
        train_batch: 8,
        eval_batch: 8,
        epochs: 1,
        seed,
    };
    let mut model = CtrModel::new(&schema, &config)?;
    let samples = gradcheck_samples();
    let refs: Vec<&Sample> = samples.iter().collect();

    model.zero_grad();
    let (_, cache) = model.forward(&refs, Mode::Train)?;
    let (_, q_grads, b_grads) = model.backward(&refs, &cache)?;
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    model.for_each_param(&mut |n, p| analytic.push((n.to_string(), p.grad.clone())));

    let mut entry = GradCheckEntry::new(format!("model.{}", kind.as_str()));
    for (name, grads) in &analytic {
        for (idx, &g) in grads.iter().enumerate() {
            let orig = model_value(&mut model, name, idx);
            model_set_value(&mut model, name, idx, orig + FD_EPS);
            let lp = model.batch_loss(&refs, Mode::Train)?;
            model_set_value(&mut model, name, idx, orig - FD_EPS);
            let lm = model.batch_loss(&refs, Mode::Train)?;
            model_set_value(&mut model, name, idx, orig);
            entry.record(g, (lp - lm) / (2.0 * FD_EPS));
        }
    }

    let k = config.embed_dim;
    let table_sets: [(&str, &[crate::numerics::SparseGrad]); 2] =
        [("query", &q_grads), ("behavior", &b_grads)];
    for (prefix, grads) in table_sets {
        for (field, grad) in grads.iter().enumerate() {
            let name = format!("{prefix}.{field}.embed");
            for (&row, g_row) in grad.rows.iter() {
                for d in 0..k {
                    let idx = row * k + d;
                    let orig = table_value(&mut model, &name, idx);
                    table_set_value(&mut model, &name, idx, orig + FD_EPS);
                    let lp = model.batch_loss(&refs, Mode::Train)?;
                    table_set_value(&mut model, &name, idx, orig - FD_EPS);
                    let lm = model.batch_loss(&refs, Mode::Train)?;
                    table_set_value(&mut model, &name, idx, orig);
                    entry.record(g_row[d], (lp - lm) / (2.0 * FD_EPS));
                }
            }
            // id 6 never appears in the batch: the loss (including its
            // touched-rows-only L2 term) must not depend on it at all.
            let untouched = 6 * k;
            let orig = table_value(&mut model, &name, untouched);
            table_set_value(&mut model, &name, untouched, orig + 0.5);
            let lp = model.batch_loss(&refs, Mode::Train)?;
            table_set_value(&mut model, &name, untouched, orig);
            let l0 = model.batch_loss(&refs, Mode::Train)?;
            if lp != l0 {
                return Err(Error::metric(format!(
                    "{name}: loss depends on an embedding row absent from the batch"
                )));
            }
            if grad.rows.contains_key(&6) {
                return Err(Error::metric(format!(
                    "{name}: sparse gradient contains a row absent from the batch"
                )));
            }
        }
    }
    Ok(entry)
}

/// Runs every gradient check; used by the command-line `gradcheck` command.
pub fn full_report(seed: u64) -> Result<GradReport> {
    let mut entries = Vec::new();
    for activation in [Activation::Identity, Activation::Sigmoid, Activation::PRelu, Activation::Dice] {
        for mode in [Mode::Train, Mode::Infer] {
            entries.push(check_dense(activation, mode, seed)?);
        }
    }
    for kind in AttentionKind::ALL {
        for mode in [Mode::Train, Mode::Infer] {
            entries.push(check_attention_unit(kind, mode, seed.wrapping_add(1))?);
        }
    }
    for kind in AttentionKind::ALL {
        entries.push(check_model(kind, seed.wrapping_add(2))?);
    }
    let max_rel_err = entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max);
    Ok(GradReport { entries, max_rel_err, tolerance: GRAD_TOL })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_floors_tiny_denominators() {
        assert_eq!(rel_err(0.0, 0.0), 0.0);
        assert!((rel_err(2e-7, 1e-7) - 1e-7 / 1e-6).abs() < 1e-15);
        assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dense_layers_pass_in_both_modes() {
        for activation in
            [Activation::Identity, Activation::Sigmoid, Activation::PRelu, Activation::Dice]
        {
            for mode in [Mode::Train, Mode::Infer] {
                let e = check_dense(activation, mode, 11).unwrap();
                assert!(e.passed(), "{}: max_rel_err {:e}", e.name, e.max_rel_err);
                assert!(e.n_checked > 0);
            }
        }
    }

    #[test]
    fn attention_units_pass_in_both_modes() {
        for kind in AttentionKind::ALL {
            for mode in [Mode::Train, Mode::Infer] {
                let e = check_attention_unit(kind, mode, 12).unwrap();
                assert!(e.passed(), "{}: max_rel_err {:e}", e.name, e.max_rel_err);
            }
        }
    }

    #[test]
    fn full_models_pass() {
        for kind in AttentionKind::ALL {
            let e = check_model(kind, 13).unwrap();
            assert!(e.passed(), "{}: max_rel_err {:e}", e.name, e.max_rel_err);
        }
    }
}
