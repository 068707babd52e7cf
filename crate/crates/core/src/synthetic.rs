//! Teacher-student synthetic data with planted field-pair structure.
//!
//! The teacher is a frozen attention scorer: random embeddings (seeded
//! separately from sample generation), a sparse pair-strength matrix, and a
//! fixed readout vector. For a sample with behaviors 1..L it computes
//! attention logits `z_i = sum over active pairs of w_pj * <v_Bp_i, e_Fj>`,
//! softmax weights `a`, and labels with
//!
//! `p(click) = sigmoid(scale * <v_u - v_mean, readout>)`
//!
//! where `v_u = sum_i a_i * v_i` and `v_mean` is the uniform average of the
//! same `v_i`. Centering on `v_mean` means the label depends only on *which*
//! behaviors win attention: with all pair weights zero the logit is exactly 0
//! and labels are fair coin flips, and any lift above chance must come from
//! modeling the planted pairs.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{masked_softmax, randn, sigmoid, subseed};
use crate::schema::{Dataset, FieldSchema, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherPair {
    pub behavior_field: usize,
    pub query_field: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    /// Active (behavior field, query field) pairs with their strengths; the
    /// implied P x M matrix is zero everywhere else.
    pub pairs: Vec<TeacherPair>,
    /// Seeds the teacher's embedding tables and readout, independently of
    /// sample generation.
    pub embed_seed: u64,
    /// Multiplier on the teacher logit before the sigmoid.
    pub logit_scale: f64,
    /// Teacher embedding width (independent of the student's K).
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
}

fn default_embed_dim() -> usize {
    8
}

impl TeacherSpec {
    pub fn validate(&self, schema: &FieldSchema) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::config("teacher needs at least one active pair"));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("teacher embed_dim must be >= 1"));
        }
        if !(self.logit_scale > 0.0) {
            return Err(Error::config(format!(
                "teacher logit_scale must be positive, got {}",
                self.logit_scale
            )));
        }
        let mut seen = BTreeSet::new();
        for pr in &self.pairs {
            if pr.behavior_field >= schema.n_behavior() || pr.query_field >= schema.n_query() {
                return Err(Error::config(format!(
                    "teacher pair ({}, {}) out of range for {}x{} fields",
                    pr.behavior_field,
                    pr.query_field,
                    schema.n_behavior(),
                    schema.n_query()
                )));
            }
            if !seen.insert((pr.behavior_field, pr.query_field)) {
                return Err(Error::config(format!(
                    "teacher pair ({}, {}) listed twice",
                    pr.behavior_field, pr.query_field
                )));
            }
        }
        Ok(())
    }

    pub fn active_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.pairs
            .iter()
            .map(|p| (p.behavior_field, p.query_field))
            .collect()
    }

    /// Dense P x M strength matrix, zero outside the active pairs.
    pub fn weight_matrix(&self, schema: &FieldSchema) -> Vec<f64> {
        let m = schema.n_query();
        let mut r = vec![0.0; schema.n_behavior() * m];
        for p in &self.pairs {
            r[p.behavior_field * m + p.query_field] = p.weight;
        }
        r
    }
}

/// The frozen teacher network: embeddings per field plus a readout vector.
#[derive(Debug, Clone)]
pub struct TeacherModel {
    schema: FieldSchema,
    embed_dim: usize,
    r: Vec<f64>,
    /// Per query field: `[vocab, embed_dim]`.
    query_embeds: Vec<Vec<f64>>,
    /// Per behavior field: `[vocab, embed_dim]`.
    behavior_embeds: Vec<Vec<f64>>,
    readout: Vec<f64>,
}

impl TeacherModel {
    pub fn new(schema: &FieldSchema, spec: &TeacherSpec) -> Result<Self> {
        schema.validate()?;
        spec.validate(schema)?;
        let k = spec.embed_dim;
        let bound = 1.0 / (k as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.embed_seed);
        // Tables are drawn uniform and then centered per dimension over the
        // ids the generator can actually emit (1.., id 0 is reserved), so
        // the population-mean history readout is exactly zero: labels stay
        // balanced at any logit scale instead of inheriting a base-rate
        // shift from one finite random table.
        let draw_table = |vocab: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut t: Vec<f64> =
                (0..vocab * k).map(|_| rng.gen_range(-bound..bound)).collect();
            let sampled = vocab.saturating_sub(1).max(1);
            for kk in 0..k {
                let mean =
                    (vocab - sampled..vocab).map(|r| t[r * k + kk]).sum::<f64>() / sampled as f64;
                for r in 0..vocab {
                    t[r * k + kk] -= mean;
                }
            }
            t
        };
        let query_embeds = schema
            .query_fields
            .iter()
            .map(|f| draw_table(f.vocab, &mut rng))
            .collect();
        let behavior_embeds = schema
            .behavior_fields
            .iter()
            .map(|f| draw_table(f.vocab, &mut rng))
            .collect();
        let readout = (0..k).map(|_| randn(&mut rng)).collect();
        Ok(TeacherModel {
            schema: schema.clone(),
            embed_dim: k,
            r: spec.weight_matrix(schema),
            query_embeds,
            behavior_embeds,
            readout,
        })
    }

    /// Readout of the attention-pooled interest vector; 0 for empty
    /// histories. With all pair strengths 0 the attention is uniform, so the
    /// logit collapses to the plain history mean — symmetric around 0 over
    /// the data distribution, hence labels marginally Bernoulli(0.5).
    pub fn logit(&self, sample: &Sample) -> f64 {
        let l = sample.behaviors.len();
        if l == 0 {
            return 0.0;
        }
        let (p, m, k) = (self.schema.n_behavior(), self.schema.n_query(), self.embed_dim);
        let mut v = vec![0.0; l * k];
        let mut z = vec![0.0; l];
        for (i, tuple) in sample.behaviors.iter().enumerate() {
            for fp in 0..p {
                let emb = &self.behavior_embeds[fp][tuple[fp] * k..(tuple[fp] + 1) * k];
                for kk in 0..k {
                    v[i * k + kk] += emb[kk];
                }
                for j in 0..m {
                    let w = self.r[fp * m + j];
                    if w == 0.0 {
                        continue;
                    }
                    let q = &self.query_embeds[j][sample.query_ids[j] * k..(sample.query_ids[j] + 1) * k];
                    let mut dot = 0.0;
                    for kk in 0..k {
                        dot += emb[kk] * q[kk];
                    }
                    z[i] += w * dot;
                }
            }
        }
        let a = masked_softmax(&z, &vec![true; l]);
        let mut logit = 0.0;
        for i in 0..l {
            let mut proj = 0.0;
            for kk in 0..k {
                proj += v[i * k + kk] * self.readout[kk];
            }
            logit += a[i] * proj;
        }
        logit
    }

    pub fn click_probability(&self, sample: &Sample, scale: f64) -> f64 {
        sigmoid(scale * self.logit(sample))
    }
}

fn gen_split(
    schema: &FieldSchema,
    model: &TeacherModel,
    scale: f64,
    n: usize,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_users = (n / 16).max(1);
    let samples = (0..n)
        .map(|_| {
            let user_id = format!("u{}", rng.gen_range(0..n_users));
            let query_ids: Vec<usize> = schema
                .query_fields
                .iter()
                .map(|f| rng.gen_range(1..f.vocab))
                .collect();
            let l = rng.gen_range(1..=schema.max_behaviors);
            let behaviors: Vec<Vec<usize>> = (0..l)
                .map(|_| {
                    schema
                        .behavior_fields
                        .iter()
                        .map(|f| rng.gen_range(1..f.vocab))
                        .collect()
                })
                .collect();
            let mut sample = Sample {
                user_id,
                label: 0,
                query_ids,
                behaviors,
            };
            let p = model.click_probability(&sample, scale);
            sample.label = (rng.gen::<f64>() < p) as u8;
            sample
        })
        .collect();
    Dataset {
        schema: schema.clone(),
        samples,
    }
}

/// Draws train and test splits from the same teacher; deterministic given
/// `seed` (the two splits use derived, independent streams).
pub fn generate_synthetic(
    schema: &FieldSchema,
    teacher: &TeacherSpec,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::config(format!(
            "sample counts must be positive, got n_train={n_train}, n_test={n_test}"
        )));
    }
    let model = TeacherModel::new(schema, teacher)?;
    let train = gen_split(schema, &model, teacher.logit_scale, n_train, subseed(seed, 1));
    let test = gen_split(schema, &model, teacher.logit_scale, n_test, subseed(seed, 2));
    Ok((train, test))
}
