//! The full pCTR network and its training loop.
//!
//! Per sample: look up behavior/query embeddings, pool behaviors into the
//! interest vector via the configured attention unit, feed
//! `[v_u, e_F1, ..., e_FM]` through the prediction MLP (PReLU hidden layers,
//! width-1 logit output), and apply a sigmoid. Training is mini-batch Adagrad
//! on cross-entropy plus `lambda * ||theta||_2` (the L2 *norm*, not its
//! square), where embeddings count only the rows touched by the batch.
//! When pruning is enabled the pair mask ramps toward the target sparsity
//! between epochs' optimizer steps and is hard-finalized after training.

use serde::{Deserialize, Serialize};

use crate::attention::{AttendCache, AttentionKind, AttentionUnit, BehaviorBlock};
use crate::error::{Error, Result};
use crate::eval;
use crate::numerics::{
    sigmoid, subseed, Activation, Adagrad, DenseCache, DenseLayer, EmbeddingTable, Mode, Param,
    SparseGrad,
};
use crate::pruning::{finalize, prune_step, sparsity_at, PruneConfig, PruneState};
use crate::schema::{batch_iter, Dataset, FieldSchema, Sample};

/// Predictions are clamped into `[CLAMP, 1 - CLAMP]` before any logarithm.
pub const CLAMP: f64 = 1e-12;

const INIT_ACC: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Embedding width K.
    pub embed_dim: usize,
    /// Prediction MLP widths; the last must be 1.
    pub mlp_dims: Vec<usize>,
    pub attention: AttentionKind,
    /// Hidden width of the din/maf local activation MLP.
    pub attention_hidden: usize,
    /// Query fields feeding din's `e_t`.
    pub din_query_fields: Vec<usize>,
    pub learning_rate: f64,
    /// L2-norm strength lambda.
    pub l2: f64,
    pub train_batch: usize,
    pub eval_batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            mlp_dims: vec![200, 80, 1],
            attention: AttentionKind::AutoAttention,
            attention_hidden: 200,
            din_query_fields: vec![0],
            learning_rate: 0.01,
            l2: 1e-6,
            train_batch: 4096,
            eval_batch: 16384,
            epochs: 5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim must be >= 1"));
        }
        if self.mlp_dims.is_empty() || self.mlp_dims.iter().any(|&d| d == 0) {
            return Err(Error::config("mlp_dims must be non-empty positive widths"));
        }
        if *self.mlp_dims.last().unwrap() != 1 {
            return Err(Error::config("the final MLP width must be 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.l2 < 0.0 {
            return Err(Error::config("l2 must be >= 0"));
        }
        if self.train_batch == 0 || self.eval_batch == 0 {
            return Err(Error::config("batch sizes must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub predictions: Vec<f64>,
    pub labels: Vec<u8>,
    pub user_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean of full batch losses (data + regularizer).
    pub train_loss: f64,
    /// None when the eval set has no user with both classes.
    pub eval_auc: Option<f64>,
    pub eval_logloss: f64,
    /// Scheduled sparsity reached so far.
    pub sparsity: f64,
    pub pruned_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub eval_auc: Option<f64>,
    pub eval_logloss: f64,
    pub sparsity: f64,
    pub pruned_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    #[serde(rename = "final")]
    pub final_eval: FinalRecord,
}

#[derive(Debug, Clone)]
pub struct CtrModel {
    pub schema: FieldSchema,
    pub config: ModelConfig,
    pub query_tables: Vec<EmbeddingTable>,
    pub behavior_tables: Vec<EmbeddingTable>,
    pub unit: AttentionUnit,
    pub mlp: Vec<DenseLayer>,
}

/// Forward state for one batch, consumed by the backward pass.
pub struct BatchCache {
    blocks: Vec<BehaviorBlock>,
    attend_caches: Vec<AttendCache>,
    mlp_caches: Vec<DenseCache>,
    preds: Vec<f64>,
}

impl CtrModel {
    pub fn new(schema: &FieldSchema, config: &ModelConfig) -> Result<Self> {
        schema.validate()?;
        config.validate()?;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(subseed(config.seed, 0xC0DE));
        let k = config.embed_dim;
        let bound = 1.0 / (k as f64).sqrt();
        let query_tables = schema
            .query_fields
            .iter()
            .map(|f| EmbeddingTable::new(f.vocab, k, bound, INIT_ACC, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let behavior_tables = schema
            .behavior_fields
            .iter()
            .map(|f| EmbeddingTable::new(f.vocab, k, bound, INIT_ACC, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let unit = AttentionUnit::new(
            config.attention,
            schema.n_behavior(),
            schema.n_query(),
            k,
            config.attention_hidden,
            &config.din_query_fields,
            INIT_ACC,
            &mut rng,
        )?;
        let mut mlp = Vec::with_capacity(config.mlp_dims.len());
        let mut in_dim = (schema.n_query() + 1) * k;
        for (i, &out_dim) in config.mlp_dims.iter().enumerate() {
            let act = if i + 1 == config.mlp_dims.len() {
                Activation::Identity // logit head; sigmoid applied in forward
            } else {
                Activation::PRelu
            };
            mlp.push(DenseLayer::new(in_dim, out_dim, act, INIT_ACC, &mut rng)?);
            in_dim = out_dim;
        }
        Ok(CtrModel {
            schema: schema.clone(),
            config: config.clone(),
            query_tables,
            behavior_tables,
            unit,
            mlp,
        })
    }

    fn build_block(&self, sample: &Sample) -> Result<BehaviorBlock> {
        let (p, m, k) = (self.schema.n_behavior(), self.schema.n_query(), self.config.embed_dim);
        let l = sample.behaviors.len();
        let mut behavior_embeds = vec![0.0; l * p * k];
        for (i, tuple) in sample.behaviors.iter().enumerate() {
            for fp in 0..p {
                let row = self.behavior_tables[fp].lookup(tuple[fp])?;
                behavior_embeds[(i * p + fp) * k..(i * p + fp + 1) * k].copy_from_slice(row);
            }
        }
        let mut query_embeds = vec![0.0; m * k];
        for j in 0..m {
            let row = self.query_tables[j].lookup(sample.query_ids[j])?;
            query_embeds[j * k..(j + 1) * k].copy_from_slice(row);
        }
        Ok(BehaviorBlock {
            n_behavior_fields: p,
            n_query_fields: m,
            embed_dim: k,
            behavior_embeds,
            behavior_mask: vec![true; l],
            query_embeds,
        })
    }

    /// Forward over a batch of samples. Predictions are sigmoid(logit),
    /// clamped into `[CLAMP, 1 - CLAMP]`.
    pub fn forward(&mut self, samples: &[&Sample], mode: Mode) -> Result<(Vec<f64>, BatchCache)> {
        let (m, k) = (self.schema.n_query(), self.config.embed_dim);
        let n = samples.len();
        let in_dim = (m + 1) * k;
        let mut blocks = Vec::with_capacity(n);
        let mut attend_caches = Vec::with_capacity(n);
        let mut mlp_input = vec![0.0; n * in_dim];
        for (b, sample) in samples.iter().enumerate() {
            sample.validate(&self.schema)?;
            let block = self.build_block(sample)?;
            let (att, ac) = self.unit.attend(&block, mode)?;
            let row = &mut mlp_input[b * in_dim..(b + 1) * in_dim];
            row[..k].copy_from_slice(&att.interest);
            row[k..].copy_from_slice(&block.query_embeds);
            blocks.push(block);
            attend_caches.push(ac);
        }
        let mut mlp_caches = Vec::with_capacity(self.mlp.len());
        let mut x = mlp_input;
        for layer in self.mlp.iter_mut() {
            let (out, cache) = layer.forward(&x, n, mode)?;
            mlp_caches.push(cache);
            x = out;
        }
        let preds: Vec<f64> = x.iter().map(|&z| sigmoid(z).clamp(CLAMP, 1.0 - CLAMP)).collect();
        Ok((
            preds.clone(),
            BatchCache {
                blocks,
                attend_caches,
                mlp_caches,
                preds,
            },
        ))
    }

    /// Collects the embedding rows a batch touches (query then behavior, one
    /// `SparseGrad` per field) without contributing gradient yet.
    fn touch_rows(&self, samples: &[&Sample]) -> (Vec<SparseGrad>, Vec<SparseGrad>) {
        let k = self.config.embed_dim;
        let mut q: Vec<SparseGrad> = (0..self.schema.n_query()).map(|_| SparseGrad::new(k)).collect();
        let mut bh: Vec<SparseGrad> =
            (0..self.schema.n_behavior()).map(|_| SparseGrad::new(k)).collect();
        for s in samples {
            for (j, &id) in s.query_ids.iter().enumerate() {
                q[j].touch(id);
            }
            for tuple in &s.behaviors {
                for (p, &id) in tuple.iter().enumerate() {
                    bh[p].touch(id);
                }
            }
        }
        (q, bh)
    }

    /// L2 norm over all trainable parameters plus the touched embedding rows;
    /// when `apply` is set, adds `lambda * theta / norm` to every gradient.
    fn l2_term(&mut self, q_grads: &mut [SparseGrad], b_grads: &mut [SparseGrad], apply: bool) -> f64 {
        let lambda = self.config.l2;
        if lambda == 0.0 {
            return 0.0;
        }
        let mut sumsq = 0.0;
        self.for_each_param(&mut |_, p| {
            for v in &p.value {
                sumsq += v * v;
            }
        });
        let k = self.config.embed_dim;
        for (tables, grads) in [
            (&self.query_tables, &mut *q_grads),
            (&self.behavior_tables, &mut *b_grads),
        ] {
            for (table, grad) in tables.iter().zip(grads.iter()) {
                for (&row, _) in &grad.rows {
                    for v in &table.weight[row * k..(row + 1) * k] {
                        sumsq += v * v;
                    }
                }
            }
        }
        let norm = sumsq.sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        if apply {
            let factor = lambda / norm;
            self.for_each_param(&mut |_, p| {
                for (g, v) in p.grad.iter_mut().zip(&p.value) {
                    *g += factor * v;
                }
            });
            for (tables, grads) in [
                (&self.query_tables, &mut *q_grads),
                (&self.behavior_tables, &mut *b_grads),
            ] {
                for (table, grad) in tables.iter().zip(grads.iter_mut()) {
                    for (&row, g) in grad.rows.iter_mut() {
                        for (gi, v) in g.iter_mut().zip(&table.weight[row * k..(row + 1) * k]) {
                            *gi += factor * v;
                        }
                    }
                }
            }
        }
        lambda * norm
    }

    /// Full loss (data + regularizer) of one batch without touching any
    /// gradient or parameter.
    pub fn batch_loss(&mut self, samples: &[&Sample], mode: Mode) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::data("batch_loss over an empty batch"));
        }
        let (preds, _) = self.forward(samples, mode)?;
        let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
        let data = eval::logloss(&preds, &labels)?;
        let (mut q, mut b) = self.touch_rows(samples);
        Ok(data + self.l2_term(&mut q, &mut b, false))
    }

    /// Backward for one batch: accumulates all parameter gradients (dense and
    /// sparse) and returns the full loss. Call on the cache produced by
    /// [`CtrModel::forward`] with the same samples, in training mode.
    pub fn backward(&mut self, samples: &[&Sample], cache: &BatchCache) -> Result<(f64, Vec<SparseGrad>, Vec<SparseGrad>)> {
        let n = samples.len();
        if n == 0 || cache.preds.len() != n {
            return Err(Error::shape("backward cache does not match batch".to_string()));
        }
        let (m, k) = (self.schema.n_query(), self.config.embed_dim);
        let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
        let data_loss = eval::logloss(&cache.preds, &labels)?;

        // d(data loss)/d(logit) = (pred - label) / N.
        let mut d = vec![0.0; n];
        for b in 0..n {
            d[b] = (cache.preds[b] - labels[b] as f64) / n as f64;
        }
        for (layer, lc) in self.mlp.iter_mut().zip(&cache.mlp_caches).rev() {
            d = layer.backward(lc, &d)?;
        }

        let (mut q_grads, mut b_grads) = self.touch_rows(samples);
        let in_dim = (m + 1) * k;
        for (b, sample) in samples.iter().enumerate() {
            let row = &d[b * in_dim..(b + 1) * in_dim];
            let bg = self
                .unit
                .attend_backward(&cache.blocks[b], &cache.attend_caches[b], &row[..k])?;
            for (j, &id) in sample.query_ids.iter().enumerate() {
                let mut g = bg.query[j * k..(j + 1) * k].to_vec();
                // Query embeddings also feed the MLP input directly.
                for (gi, di) in g.iter_mut().zip(&row[k + j * k..k + (j + 1) * k]) {
                    *gi += di;
                }
                q_grads[j].add(id, &g);
            }
            let p = self.schema.n_behavior();
            for (i, tuple) in sample.behaviors.iter().enumerate() {
                for (fp, &id) in tuple.iter().enumerate() {
                    b_grads[fp].add(id, &bg.behavior[(i * p + fp) * k..(i * p + fp + 1) * k]);
                }
            }
        }
        let reg = self.l2_term(&mut q_grads, &mut b_grads, true);
        Ok((data_loss + reg, q_grads, b_grads))
    }

    pub fn zero_grad(&mut self) {
        self.for_each_param(&mut |_, p| p.zero_grad());
    }

    /// One optimizer step over a batch; returns the batch loss.
    pub fn train_step(&mut self, samples: &[&Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::data("train_step over an empty batch"));
        }
        self.zero_grad();
        let (_, cache) = self.forward(samples, Mode::Train)?;
        let (loss, q_grads, b_grads) = self.backward(samples, &cache)?;
        let opt = Adagrad::new(self.config.learning_rate);
        self.for_each_param(&mut |_, p| opt.step_param(p));
        for (table, grad) in self.query_tables.iter_mut().zip(&q_grads) {
            opt.step_table(table, grad)?;
        }
        for (table, grad) in self.behavior_tables.iter_mut().zip(&b_grads) {
            opt.step_table(table, grad)?;
        }
        Ok(loss)
    }

    /// Inference over a dataset in eval-batch chunks; order preserved.
    pub fn predict(&mut self, dataset: &Dataset) -> Result<Predictions> {
        if dataset.schema != self.schema {
            return Err(Error::data("dataset schema does not match the model"));
        }
        let mut out = Predictions {
            predictions: Vec::with_capacity(dataset.len()),
            labels: Vec::with_capacity(dataset.len()),
            user_ids: Vec::with_capacity(dataset.len()),
        };
        for batch in batch_iter(dataset.len(), self.config.eval_batch, false, 0)? {
            let samples: Vec<&Sample> = batch.iter().map(|&i| &dataset.samples[i]).collect();
            let (preds, _) = self.forward(&samples, Mode::Infer)?;
            for (&i, p) in batch.iter().zip(preds) {
                out.predictions.push(p);
                out.labels.push(dataset.samples[i].label);
                out.user_ids.push(dataset.samples[i].user_id.clone());
            }
        }
        Ok(out)
    }

    fn eval_metrics(&mut self, dataset: &Dataset) -> Result<(Option<f64>, f64)> {
        let preds = self.predict(dataset)?;
        let logloss = eval::logloss(&preds.predictions, &preds.labels)?;
        let auc = match eval::user_weighted_auc(&preds.predictions, &preds.labels, &preds.user_ids) {
            Ok(report) => Some(report.user_weighted_auc),
            Err(Error::Metric(_)) => None,
            Err(e) => return Err(e),
        };
        Ok((auc, logloss))
    }

    fn prune_status(&self, state: &PruneState) -> (f64, usize) {
        match &self.unit.pair {
            Some(pw) => (state.current_sparsity, pw.pruned_count()),
            None => (0.0, 0),
        }
    }

    /// Mini-batch Adagrad over `epochs`, evaluating after every epoch; with a
    /// prune config (auto_attention only) the pair mask ramps after warm-up
    /// and is hard-finalized to the target sparsity before the final eval.
    pub fn train(
        &mut self,
        train_set: &Dataset,
        eval_set: &Dataset,
        prune: Option<&PruneConfig>,
    ) -> Result<TrainHistory> {
        if train_set.schema != self.schema || eval_set.schema != self.schema {
            return Err(Error::data("train/eval schema does not match the model"));
        }
        if train_set.is_empty() || eval_set.is_empty() {
            return Err(Error::data("train and eval sets must be non-empty"));
        }
        if let Some(pc) = prune {
            pc.validate()?;
            if self.config.attention != AttentionKind::AutoAttention {
                return Err(Error::config(format!(
                    "pruning requires the auto_attention unit, got {}",
                    self.config.attention.as_str()
                )));
            }
        }
        let mut state = PruneState::default();
        let mut history = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            let batches = batch_iter(
                train_set.len(),
                self.config.train_batch,
                true,
                subseed(self.config.seed, 1000 + epoch as u64),
            )?;
            let mut loss_sum = 0.0;
            let mut n_sum = 0usize;
            for batch in batches {
                let samples: Vec<&Sample> = batch.iter().map(|&i| &train_set.samples[i]).collect();
                let loss = self.train_step(&samples)?;
                loss_sum += loss * samples.len() as f64;
                n_sum += samples.len();
                if let Some(pc) = prune {
                    if epoch >= pc.warmup_epochs {
                        state.step += 1;
                        if state.step % pc.prune_interval as u64 == 0 {
                            let s = sparsity_at(state.step, pc);
                            let pw = self.unit.pair.as_mut().expect("auto_attention unit");
                            prune_step(pw, &mut state, s)?;
                        }
                    }
                }
            }
            let (auc, logloss) = self.eval_metrics(eval_set)?;
            let (sparsity, pruned) = self.prune_status(&state);
            log::info!(
                "epoch {epoch}: train_loss {:.6} eval_logloss {logloss:.6} eval_auc {auc:?} pruned {pruned}",
                loss_sum / n_sum as f64
            );
            history.push(EpochRecord {
                epoch,
                train_loss: loss_sum / n_sum as f64,
                eval_auc: auc,
                eval_logloss: logloss,
                sparsity,
                pruned_pairs: pruned,
            });
        }
        if let Some(pc) = prune {
            let pw = self.unit.pair.as_mut().expect("auto_attention unit");
            finalize(pw, &mut state, pc)?;
        }
        let (auc, logloss) = self.eval_metrics(eval_set)?;
        let (sparsity, pruned) = self.prune_status(&state);
        Ok(TrainHistory {
            epochs: history,
            final_eval: FinalRecord {
                eval_auc: auc,
                eval_logloss: logloss,
                sparsity,
                pruned_pairs: pruned,
            },
        })
    }

    /// Visits every trainable parameter in a fixed, documented order:
    /// prediction MLP layers, then the attention unit, never embedding tables.
    pub fn for_each_param(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, layer) in self.mlp.iter_mut().enumerate() {
            f(&format!("mlp.{i}.weight"), &mut layer.weight);
            f(&format!("mlp.{i}.bias"), &mut layer.bias);
            if !layer.act_param.is_empty() {
                f(&format!("mlp.{i}.act"), &mut layer.act_param);
            }
        }
        if let Some(pw) = self.unit.pair.as_mut() {
            f("attn.pair.r", &mut pw.r);
            f("attn.pair.bias", &mut pw.bias);
        }
        if let Some(b) = self.unit.bias.as_mut() {
            f("attn.bias", b);
        }
        if let Some(mlp) = self.unit.mlp.as_mut() {
            f("attn.mlp.hidden.weight", &mut mlp.hidden.weight);
            f("attn.mlp.hidden.bias", &mut mlp.hidden.bias);
            f("attn.mlp.hidden.act", &mut mlp.hidden.act_param);
            f("attn.mlp.output.weight", &mut mlp.output.weight);
            f("attn.mlp.output.bias", &mut mlp.output.bias);
        }
    }

    /// Visits every embedding table (query fields first, schema order).
    pub fn for_each_table(&mut self, f: &mut dyn FnMut(&str, &mut EmbeddingTable)) {
        for (j, t) in self.query_tables.iter_mut().enumerate() {
            f(&format!("query.{j}.embed"), t);
        }
        for (p, t) in self.behavior_tables.iter_mut().enumerate() {
            f(&format!("behavior.{p}.embed"), t);
        }
    }

    /// Visits non-trainable state arrays (Dice running statistics).
    pub fn for_each_stat(&mut self, f: &mut dyn FnMut(&str, &mut Vec<f64>)) {
        if let Some(mlp) = self.unit.mlp.as_mut() {
            f("attn.mlp.hidden.running_mean", &mut mlp.hidden.running_mean);
            f("attn.mlp.hidden.running_var", &mut mlp.hidden.running_var);
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::schema::FieldDef;

    pub(crate) fn tiny_schema() -> FieldSchema {
        FieldSchema {
            query_fields: (0..3)
                .map(|j| FieldDef {
                    name: format!("q{j}"),
                    vocab: 7,
                })
                .collect(),
            behavior_fields: (0..2)
                .map(|p| FieldDef {
                    name: format!("b{p}"),
                    vocab: 7,
                })
                .collect(),
            max_behaviors: 3,
            correspondence_map: Vec::new(),
        }
    }

    pub(crate) fn tiny_config(kind: AttentionKind) -> ModelConfig {
        ModelConfig {
            embed_dim: 4,
            mlp_dims: vec![5, 3, 1],
            attention: kind,
            attention_hidden: 6,
            din_query_fields: vec![0, 2],
            learning_rate: 0.01,
            l2: 1e-4,
            train_batch: 4,
            eval_batch: 8,
            epochs: 2,
            seed: 3,
        }
    }

    fn sample(user: &str, label: u8, q: [usize; 3], behaviors: &[[usize; 2]]) -> Sample {
        Sample {
            user_id: user.into(),
            label,
            query_ids: q.to_vec(),
            behaviors: behaviors.iter().map(|t| t.to_vec()).collect(),
        }
    }

    fn tiny_dataset() -> Dataset {
        let samples = vec![
            sample("u0", 1, [1, 2, 3], &[[1, 2], [3, 4]]),
            sample("u0", 0, [4, 5, 6], &[[2, 2]]),
            sample("u1", 1, [2, 2, 2], &[[5, 6], [1, 1], [2, 3]]),
            sample("u1", 0, [3, 1, 4], &[]),
            sample("u2", 1, [6, 6, 1], &[[4, 4]]),
            sample("u2", 0, [1, 3, 5], &[[6, 2], [3, 3]]),
        ];
        Dataset::new(tiny_schema(), samples).unwrap()
    }

    #[test]
    fn zeroed_mlp_predicts_exactly_one_half() {
        let schema = tiny_schema();
        let mut model = CtrModel::new(&schema, &tiny_config(AttentionKind::AutoAttention)).unwrap();
        for layer in &mut model.mlp {
            layer.weight.value.iter_mut().for_each(|w| *w = 0.0);
            layer.bias.value.iter_mut().for_each(|b| *b = 0.0);
        }
        let ds = tiny_dataset();
        let preds = model.predict(&ds).unwrap();
        assert!(preds.predictions.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn empty_history_is_a_legal_input() {
        let schema = tiny_schema();
        let mut model = CtrModel::new(&schema, &tiny_config(AttentionKind::DotProduct)).unwrap();
        let s = sample("u9", 0, [1, 1, 1], &[]);
        let (preds, _) = model.forward(&[&s], Mode::Infer).unwrap();
        assert!(preds[0] > 0.0 && preds[0] < 1.0);
    }

    #[test]
    fn predictions_do_not_depend_on_eval_batch_size() {
        let schema = tiny_schema();
        let ds = tiny_dataset();
        for kind in AttentionKind::ALL {
            let mut model = CtrModel::new(&schema, &tiny_config(kind)).unwrap();
            let wide = model.predict(&ds).unwrap();
            model.config.eval_batch = 1;
            let narrow = model.predict(&ds).unwrap();
            for (a, b) in wide.predictions.iter().zip(&narrow.predictions) {
                assert!((a - b).abs() <= 1e-10, "{kind:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn one_small_step_reduces_single_sample_loss() {
        let schema = tiny_schema();
        for kind in AttentionKind::ALL {
            let mut cfg = tiny_config(kind);
            cfg.learning_rate = 1e-3;
            let mut model = CtrModel::new(&schema, &cfg).unwrap();
            let s = sample("u1", 1, [2, 3, 1], &[[1, 5], [2, 2]]);
            let before = model.batch_loss(&[&s], Mode::Train).unwrap();
            model.train_step(&[&s]).unwrap();
            let after = model.batch_loss(&[&s], Mode::Train).unwrap();
            assert!(after < before, "{kind:?}: {before} -> {after}");
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let schema = tiny_schema();
        let ds = tiny_dataset();
        let run = || {
            let mut model = CtrModel::new(&schema, &tiny_config(AttentionKind::AutoAttention)).unwrap();
            model
                .train(&ds, &ds, Some(&PruneConfig::default()))
                .unwrap();
            let mut dump: Vec<(String, Vec<f64>)> = Vec::new();
            model.for_each_param(&mut |name, p| dump.push((name.to_string(), p.value.clone())));
            model.for_each_table(&mut |name, t| dump.push((name.to_string(), t.weight.clone())));
            dump
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for ((na, va), (nb, vb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert!(va.iter().zip(vb).all(|(x, y)| x.to_bits() == y.to_bits()), "{na}");
        }
    }

    #[test]
    fn prune_without_auto_attention_is_rejected() {
        let schema = tiny_schema();
        let ds = tiny_dataset();
        let mut model = CtrModel::new(&schema, &tiny_config(AttentionKind::Din)).unwrap();
        let err = model.train(&ds, &ds, Some(&PruneConfig::default())).unwrap_err();
        assert!(err.to_string().contains("auto_attention"), "{err}");
    }

    #[test]
    fn no_prune_config_keeps_full_mask() {
        let schema = tiny_schema();
        let ds = tiny_dataset();
        let mut cfg = tiny_config(AttentionKind::AutoAttention);
        cfg.epochs = 1;
        let mut model = CtrModel::new(&schema, &cfg).unwrap();
        let history = model.train(&ds, &ds, None).unwrap();
        let pw = model.unit.pair.as_ref().unwrap();
        assert!(pw.mask.iter().all(|&x| x));
        assert_eq!(history.final_eval.pruned_pairs, 0);
        assert_eq!(history.epochs.len(), 1);
    }

    #[test]
    fn history_serializes_with_final_key() {
        let h = TrainHistory {
            epochs: vec![],
            final_eval: FinalRecord {
                eval_auc: Some(0.5),
                eval_logloss: 0.7,
                sparsity: 0.8,
                pruned_pairs: 24,
            },
        };
        let text = serde_json::to_string(&h).unwrap();
        assert!(text.contains("\"final\""), "{text}");
        let back: TrainHistory = serde_json::from_str(&text).unwrap();
        assert_eq!(h, back);
    }
}
