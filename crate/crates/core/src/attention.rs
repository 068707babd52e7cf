//! Target-attention units over behavior sequences.
//!
//! Every unit scores each historical behavior against the query-side features,
//! normalizes the scores with a masked softmax (except plain sum pooling), and
//! pools the per-behavior embeddings into one interest vector:
//!
//! * `sum_pooling`  — weight 1 per behavior, no softmax.
//! * `din`          — MLP over the flattened outer product `v_i (x) e_t`,
//!   where `e_t` sums the selected query-field embeddings (input width K^2).
//! * `maf_s`        — MLP over the element-wise sum `v_i + sum_j e_j` (width K).
//! * `maf_c`        — MLP over the concatenation `[v_i, e_1, ..., e_M]`
//!   (width (M+1)K).
//! * `dot_product`  — logit `b + <v_i, sum_j e_j>`.
//! * `auto_attention` — logit `b + sum_p sum_j <v_Bp, e_j> * R[p,j]` with a
//!   learnable, prunable strength per (behavior field, query field) pair.
//!
//! `v_i` is always the *sum* of the behavior's per-field embeddings, and
//! masked behavior slots contribute nothing anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    masked_softmax, masked_softmax_backward, Activation, DenseCache, DenseLayer, Mode, Param,
};
use crate::schema::FieldSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    SumPooling,
    Din,
    MafS,
    MafC,
    DotProduct,
    AutoAttention,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 6] = [
        AttentionKind::SumPooling,
        AttentionKind::Din,
        AttentionKind::MafS,
        AttentionKind::MafC,
        AttentionKind::DotProduct,
        AttentionKind::AutoAttention,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttentionKind::SumPooling => "sum_pooling",
            AttentionKind::Din => "din",
            AttentionKind::MafS => "maf_s",
            AttentionKind::MafC => "maf_c",
            AttentionKind::DotProduct => "dot_product",
            AttentionKind::AutoAttention => "auto_attention",
        }
    }

    /// Kinds whose weights go through the masked softmax.
    pub fn uses_softmax(&self) -> bool {
        !matches!(self, AttentionKind::SumPooling)
    }

    pub fn uses_mlp(&self) -> bool {
        matches!(self, AttentionKind::Din | AttentionKind::MafS | AttentionKind::MafC)
    }
}

impl std::str::FromStr for AttentionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AttentionKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown attention kind '{s}'")))
    }
}

/// Per-field-pair interaction strengths `R` (P x M), scalar bias, and the
/// binary pair mask. Masked-off entries of `R` are exactly 0 and get zero
/// gradient; the mask starts all-ones.
#[derive(Debug, Clone)]
pub struct PairWeights {
    pub n_behavior_fields: usize,
    pub n_query_fields: usize,
    pub r: Param,
    pub bias: Param,
    pub mask: Vec<bool>,
}

impl PairWeights {
    pub fn new(p: usize, m: usize, init_r: f64, init_acc: f64) -> Self {
        PairWeights {
            n_behavior_fields: p,
            n_query_fields: m,
            r: Param::constant(p * m, init_r, init_acc),
            bias: Param::zeros(1, init_acc),
            mask: vec![true; p * m],
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.mask.len()
    }

    pub fn pruned_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    /// Applies a mask: masked-off entries have value, gradient, and any future
    /// gradient forced to zero.
    pub fn apply_mask(&mut self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.mask.len() {
            return Err(Error::shape(format!(
                "pair mask length {} != {}",
                mask.len(),
                self.mask.len()
            )));
        }
        self.mask.copy_from_slice(mask);
        for (i, &keep) in mask.iter().enumerate() {
            if !keep {
                self.r.value[i] = 0.0;
                self.r.grad[i] = 0.0;
            }
        }
        Ok(())
    }

    /// Surviving pairs with their weights, sorted by |R| descending, ties by
    /// lexicographic (p, j).
    pub fn surviving_pairs(&self) -> Vec<((usize, usize), f64)> {
        let m = self.n_query_fields;
        let mut out: Vec<((usize, usize), f64)> = self
            .mask
            .iter()
            .enumerate()
            .filter(|(_, &keep)| keep)
            .map(|(idx, _)| ((idx / m, idx % m), self.r.value[idx]))
            .collect();
        out.sort_by(|a, b| {
            b.1.abs()
                .partial_cmp(&a.1.abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        out
    }
}

/// Local activation MLP used by din / maf_s / maf_c: hidden layer with Dice,
/// identity output of width 1.
#[derive(Debug, Clone)]
pub struct AttnMlp {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

/// One sample's embeddings as seen by an attention unit.
///
/// `behavior_embeds` is `[slots, P, K]` row-major; `behavior_mask[i]` marks
/// slot i as a real behavior; `query_embeds` is `[M, K]`.
#[derive(Debug, Clone)]
pub struct BehaviorBlock {
    pub n_behavior_fields: usize,
    pub n_query_fields: usize,
    pub embed_dim: usize,
    pub behavior_embeds: Vec<f64>,
    pub behavior_mask: Vec<bool>,
    pub query_embeds: Vec<f64>,
}

impl BehaviorBlock {
    pub fn n_slots(&self) -> usize {
        self.behavior_mask.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, m, k) = (self.n_behavior_fields, self.n_query_fields, self.embed_dim);
        if self.behavior_embeds.len() != self.n_slots() * p * k {
            return Err(Error::shape(format!(
                "behavior_embeds len {} != slots {} * P {} * K {}",
                self.behavior_embeds.len(),
                self.n_slots(),
                p,
                k
            )));
        }
        if self.query_embeds.len() != m * k {
            return Err(Error::shape(format!(
                "query_embeds len {} != M {} * K {}",
                self.query_embeds.len(),
                m,
                k
            )));
        }
        Ok(())
    }
}

/// Attention output: per-slot weights (0 on masked slots) and the pooled
/// interest vector.
#[derive(Debug, Clone)]
pub struct Attended {
    pub weights: Vec<f64>,
    pub interest: Vec<f64>,
}

/// Forward state needed by [`AttentionUnit::attend_backward`].
#[derive(Debug)]
pub struct AttendCache {
    /// Summed per-behavior embeddings `v_i`, `[slots, K]` (zeros on masked).
    v: Vec<f64>,
    /// Unmasked slot indices, in slot order.
    rows: Vec<usize>,
    weights: Vec<f64>,
    /// din: e_t; dot/maf_s: sum of all query embeddings.
    e_agg: Vec<f64>,
    /// auto: `<v_Bp, e_j>` per `[slot, p, j]`.
    dots: Vec<f64>,
    mlp_input: Vec<f64>,
    hidden_cache: Option<DenseCache>,
    output_cache: Option<DenseCache>,
}

/// Gradients flowing back into one sample's embeddings.
#[derive(Debug, Clone)]
pub struct BlockGrads {
    /// `[slots, P, K]`; zeros on masked slots.
    pub behavior: Vec<f64>,
    /// `[M, K]`.
    pub query: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionUnit {
    pub kind: AttentionKind,
    pub n_behavior_fields: usize,
    pub n_query_fields: usize,
    pub embed_dim: usize,
    /// auto_attention only.
    pub pair: Option<PairWeights>,
    /// dot_product only.
    pub bias: Option<Param>,
    /// din / maf_s / maf_c only.
    pub mlp: Option<AttnMlp>,
    /// din only: query fields feeding `e_t`.
    pub din_fields: Vec<usize>,
}

impl AttentionUnit {
    pub fn mlp_input_dim(kind: AttentionKind, m: usize, k: usize) -> usize {
        match kind {
            AttentionKind::Din => k * k,
            AttentionKind::MafS => k,
            AttentionKind::MafC => (m + 1) * k,
            _ => 0,
        }
    }

    pub fn new<R: rand::Rng>(
        kind: AttentionKind,
        p: usize,
        m: usize,
        k: usize,
        hidden_dim: usize,
        din_fields: &[usize],
        init_acc: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if p == 0 || m == 0 || k == 0 {
            return Err(Error::config(format!(
                "attention unit dims must be positive, got P={p}, M={m}, K={k}"
            )));
        }
        let mut unit = AttentionUnit {
            kind,
            n_behavior_fields: p,
            n_query_fields: m,
            embed_dim: k,
            pair: None,
            bias: None,
            mlp: None,
            din_fields: Vec::new(),
        };
        match kind {
            AttentionKind::SumPooling => {}
            AttentionKind::DotProduct => unit.bias = Some(Param::zeros(1, init_acc)),
            AttentionKind::AutoAttention => unit.pair = Some(PairWeights::new(p, m, 0.0, init_acc)),
            AttentionKind::Din | AttentionKind::MafS | AttentionKind::MafC => {
                if hidden_dim == 0 {
                    return Err(Error::config("attention MLP hidden_dim must be positive"));
                }
                if kind == AttentionKind::Din {
                    if din_fields.is_empty() {
                        return Err(Error::config("din needs at least one selected query field"));
                    }
                    let mut seen = vec![false; m];
                    for &j in din_fields {
                        if j >= m {
                            return Err(Error::config(format!(
                                "din query field {j} out of range (M={m})"
                            )));
                        }
                        if seen[j] {
                            return Err(Error::config(format!("din query field {j} listed twice")));
                        }
                        seen[j] = true;
                    }
                    unit.din_fields = din_fields.to_vec();
                }
                let in_dim = Self::mlp_input_dim(kind, m, k);
                unit.mlp = Some(AttnMlp {
                    hidden: DenseLayer::new(in_dim, hidden_dim, Activation::Dice, init_acc, rng)?,
                    output: DenseLayer::new(hidden_dim, 1, Activation::Identity, init_acc, rng)?,
                });
            }
        }
        Ok(unit)
    }

    fn check_block(&self, block: &BehaviorBlock) -> Result<()> {
        block.validate()?;
        if block.n_behavior_fields != self.n_behavior_fields
            || block.n_query_fields != self.n_query_fields
            || block.embed_dim != self.embed_dim
        {
            return Err(Error::shape(format!(
                "block dims (P={}, M={}, K={}) do not match unit (P={}, M={}, K={})",
                block.n_behavior_fields,
                block.n_query_fields,
                block.embed_dim,
                self.n_behavior_fields,
                self.n_query_fields,
                self.embed_dim
            )));
        }
        Ok(())
    }

    /// Scores and pools one sample's behaviors. `mode` only matters for the
    /// MLP kinds (Dice batch statistics over this sample's unmasked slots).
    pub fn attend(&mut self, block: &BehaviorBlock, mode: Mode) -> Result<(Attended, AttendCache)> {
        self.check_block(block)?;
        let (p, m, k) = (self.n_behavior_fields, self.n_query_fields, self.embed_dim);
        let slots = block.n_slots();

        let mut v = vec![0.0; slots * k];
        let mut rows = Vec::new();
        for i in 0..slots {
            if !block.behavior_mask[i] {
                continue;
            }
            rows.push(i);
            for fp in 0..p {
                let e = &block.behavior_embeds[(i * p + fp) * k..(i * p + fp + 1) * k];
                for (kk, &x) in e.iter().enumerate() {
                    v[i * k + kk] += x;
                }
            }
        }

        let mut cache = AttendCache {
            v,
            rows,
            weights: Vec::new(),
            e_agg: Vec::new(),
            dots: Vec::new(),
            mlp_input: Vec::new(),
            hidden_cache: None,
            output_cache: None,
        };

        let weights = match self.kind {
            AttentionKind::SumPooling => {
                let mut w = vec![0.0; slots];
                for &i in &cache.rows {
                    w[i] = 1.0;
                }
                w
            }
            AttentionKind::DotProduct => {
                let mut e_agg = vec![0.0; k];
                for j in 0..m {
                    for kk in 0..k {
                        e_agg[kk] += block.query_embeds[j * k + kk];
                    }
                }
                let b = self.bias.as_ref().expect("dot_product bias").value[0];
                let mut logits = vec![0.0; slots];
                for &i in &cache.rows {
                    let mut z = b;
                    for kk in 0..k {
                        z += cache.v[i * k + kk] * e_agg[kk];
                    }
                    logits[i] = z;
                }
                cache.e_agg = e_agg;
                masked_softmax(&logits, &block.behavior_mask)
            }
            AttentionKind::AutoAttention => {
                let pw = self.pair.as_ref().expect("auto_attention pair weights");
                let mut dots = vec![0.0; slots * p * m];
                for &i in &cache.rows {
                    for fp in 0..p {
                        let vb = &block.behavior_embeds[(i * p + fp) * k..(i * p + fp + 1) * k];
                        for j in 0..m {
                            let e = &block.query_embeds[j * k..(j + 1) * k];
                            let mut d = 0.0;
                            for kk in 0..k {
                                d += vb[kk] * e[kk];
                            }
                            dots[(i * p + fp) * m + j] = d;
                        }
                    }
                }
                let b = pw.bias.value[0];
                let mut logits = vec![0.0; slots];
                for &i in &cache.rows {
                    let mut z = b;
                    for fp in 0..p {
                        for j in 0..m {
                            let idx = fp * m + j;
                            if pw.mask[idx] {
                                z += pw.r.value[idx] * dots[(i * p + fp) * m + j];
                            }
                        }
                    }
                    logits[i] = z;
                }
                cache.dots = dots;
                masked_softmax(&logits, &block.behavior_mask)
            }
            AttentionKind::Din | AttentionKind::MafS | AttentionKind::MafC => {
                let in_dim = Self::mlp_input_dim(self.kind, m, k);
                let mut e_agg = vec![0.0; k];
                match self.kind {
                    AttentionKind::Din => {
                        for &j in &self.din_fields {
                            for kk in 0..k {
                                e_agg[kk] += block.query_embeds[j * k + kk];
                            }
                        }
                    }
                    AttentionKind::MafS => {
                        for j in 0..m {
                            for kk in 0..k {
                                e_agg[kk] += block.query_embeds[j * k + kk];
                            }
                        }
                    }
                    _ => {}
                }
                let n_rows = cache.rows.len();
                let mut input = vec![0.0; n_rows * in_dim];
                for (r, &i) in cache.rows.iter().enumerate() {
                    let dst = &mut input[r * in_dim..(r + 1) * in_dim];
                    match self.kind {
                        AttentionKind::Din => {
                            for k1 in 0..k {
                                let vi = cache.v[i * k + k1];
                                for k2 in 0..k {
                                    dst[k1 * k + k2] = vi * e_agg[k2];
                                }
                            }
                        }
                        AttentionKind::MafS => {
                            for kk in 0..k {
                                dst[kk] = cache.v[i * k + kk] + e_agg[kk];
                            }
                        }
                        AttentionKind::MafC => {
                            dst[..k].copy_from_slice(&cache.v[i * k..(i + 1) * k]);
                            dst[k..].copy_from_slice(&block.query_embeds);
                        }
                        _ => unreachable!(),
                    }
                }
                let mut logits = vec![0.0; slots];
                if n_rows > 0 {
                    let mlp = self.mlp.as_mut().expect("attention mlp");
                    let (h, hc) = mlp.hidden.forward(&input, n_rows, mode)?;
                    let (o, oc) = mlp.output.forward(&h, n_rows, mode)?;
                    for (r, &i) in cache.rows.iter().enumerate() {
                        logits[i] = o[r];
                    }
                    cache.hidden_cache = Some(hc);
                    cache.output_cache = Some(oc);
                }
                cache.mlp_input = input;
                cache.e_agg = e_agg;
                masked_softmax(&logits, &block.behavior_mask)
            }
        };

        let mut interest = vec![0.0; k];
        for &i in &cache.rows {
            let w = weights[i];
            for kk in 0..k {
                interest[kk] += w * cache.v[i * k + kk];
            }
        }
        cache.weights = weights.clone();
        Ok((Attended { weights, interest }, cache))
    }

    /// Backward of [`attend`]: accumulates gradients into the unit's own
    /// parameters and returns the gradients for the block's embeddings.
    pub fn attend_backward(
        &mut self,
        block: &BehaviorBlock,
        cache: &AttendCache,
        d_interest: &[f64],
    ) -> Result<BlockGrads> {
        self.check_block(block)?;
        let (p, m, k) = (self.n_behavior_fields, self.n_query_fields, self.embed_dim);
        if d_interest.len() != k {
            return Err(Error::shape(format!(
                "d_interest len {} != K {}",
                d_interest.len(),
                k
            )));
        }
        let slots = block.n_slots();
        let mut d_v = vec![0.0; slots * k]; // gradient on v_i (shared across fields)
        let mut d_behavior = vec![0.0; slots * p * k]; // per-field extra terms
        let mut d_query = vec![0.0; m * k];

        // interest = sum_i a_i * v_i
        let mut d_a = vec![0.0; slots];
        for &i in &cache.rows {
            let w = cache.weights[i];
            let mut da = 0.0;
            for kk in 0..k {
                d_v[i * k + kk] += w * d_interest[kk];
                da += d_interest[kk] * cache.v[i * k + kk];
            }
            d_a[i] = da;
        }

        if self.kind.uses_softmax() {
            let d_logits = masked_softmax_backward(&cache.weights, &block.behavior_mask, &d_a);
            match self.kind {
                AttentionKind::DotProduct => {
                    let bias = self.bias.as_mut().expect("dot_product bias");
                    let mut d_e_agg = vec![0.0; k];
                    for &i in &cache.rows {
                        let dz = d_logits[i];
                        bias.grad[0] += dz;
                        for kk in 0..k {
                            d_v[i * k + kk] += dz * cache.e_agg[kk];
                            d_e_agg[kk] += dz * cache.v[i * k + kk];
                        }
                    }
                    for j in 0..m {
                        for kk in 0..k {
                            d_query[j * k + kk] += d_e_agg[kk];
                        }
                    }
                }
                AttentionKind::AutoAttention => {
                    let pw = self.pair.as_mut().expect("auto_attention pair weights");
                    for &i in &cache.rows {
                        let dz = d_logits[i];
                        pw.bias.grad[0] += dz;
                        for fp in 0..p {
                            let vb = &block.behavior_embeds[(i * p + fp) * k..(i * p + fp + 1) * k];
                            for j in 0..m {
                                let idx = fp * m + j;
                                if !pw.mask[idx] {
                                    continue; // pruned pair: no gradient anywhere
                                }
                                let r = pw.r.value[idx];
                                pw.r.grad[idx] += dz * cache.dots[(i * p + fp) * m + j];
                                if r != 0.0 || dz != 0.0 {
                                    for kk in 0..k {
                                        d_behavior[(i * p + fp) * k + kk] +=
                                            dz * r * block.query_embeds[j * k + kk];
                                        d_query[j * k + kk] += dz * r * vb[kk];
                                    }
                                }
                            }
                        }
                    }
                }
                AttentionKind::Din | AttentionKind::MafS | AttentionKind::MafC => {
                    let n_rows = cache.rows.len();
                    if n_rows > 0 {
                        let in_dim = Self::mlp_input_dim(self.kind, m, k);
                        let mut d_out = vec![0.0; n_rows];
                        for (r, &i) in cache.rows.iter().enumerate() {
                            d_out[r] = d_logits[i];
                        }
                        let mlp = self.mlp.as_mut().expect("attention mlp");
                        let oc = cache.output_cache.as_ref().expect("output cache");
                        let hc = cache.hidden_cache.as_ref().expect("hidden cache");
                        let d_hidden = mlp.output.backward(oc, &d_out)?;
                        let d_input = mlp.hidden.backward(hc, &d_hidden)?;
                        let mut d_e_agg = vec![0.0; k];
                        for (r, &i) in cache.rows.iter().enumerate() {
                            let din = &d_input[r * in_dim..(r + 1) * in_dim];
                            match self.kind {
                                AttentionKind::Din => {
                                    for k1 in 0..k {
                                        let vi = cache.v[i * k + k1];
                                        let mut dv = 0.0;
                                        for k2 in 0..k {
                                            dv += din[k1 * k + k2] * cache.e_agg[k2];
                                            d_e_agg[k2] += din[k1 * k + k2] * vi;
                                        }
                                        d_v[i * k + k1] += dv;
                                    }
                                }
                                AttentionKind::MafS => {
                                    for kk in 0..k {
                                        d_v[i * k + kk] += din[kk];
                                        d_e_agg[kk] += din[kk];
                                    }
                                }
                                AttentionKind::MafC => {
                                    for kk in 0..k {
                                        d_v[i * k + kk] += din[kk];
                                    }
                                    for j in 0..m {
                                        for kk in 0..k {
                                            d_query[j * k + kk] += din[(j + 1) * k + kk];
                                        }
                                    }
                                }
                                _ => unreachable!(),
                            }
                        }
                        match self.kind {
                            AttentionKind::Din => {
                                for &j in &self.din_fields {
                                    for kk in 0..k {
                                        d_query[j * k + kk] += d_e_agg[kk];
                                    }
                                }
                            }
                            AttentionKind::MafS => {
                                for j in 0..m {
                                    for kk in 0..k {
                                        d_query[j * k + kk] += d_e_agg[kk];
                                    }
                                }
                            }
                            _ => {}
                        }
                    }
                }
                AttentionKind::SumPooling => unreachable!(),
            }
        }

        // v_i = sum_p v_Bp: spread the shared v-gradient to every behavior field.
        for &i in &cache.rows {
            for fp in 0..p {
                for kk in 0..k {
                    d_behavior[(i * p + fp) * k + kk] += d_v[i * k + kk];
                }
            }
        }
        Ok(BlockGrads {
            behavior: d_behavior,
            query: d_query,
        })
    }

    pub fn zero_grad(&mut self) {
        if let Some(pw) = self.pair.as_mut() {
            pw.r.zero_grad();
            pw.bias.zero_grad();
        }
        if let Some(b) = self.bias.as_mut() {
            b.zero_grad();
        }
        if let Some(mlp) = self.mlp.as_mut() {
            mlp.hidden.zero_grad();
            mlp.output.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        if let Some(pw) = &self.pair {
            n += pw.r.len() + pw.bias.len();
        }
        if let Some(b) = &self.bias {
            n += b.len();
        }
        if let Some(mlp) = &self.mlp {
            n += mlp.hidden.param_count() + mlp.output.param_count();
        }
        n
    }

    /// Visits every trainable parameter of the unit in a fixed order.
    pub fn for_each_param(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        if let Some(pw) = self.pair.as_mut() {
            f("pair.r", &mut pw.r);
            f("pair.bias", &mut pw.bias);
        }
        if let Some(b) = self.bias.as_mut() {
            f("bias", b);
        }
        if let Some(mlp) = self.mlp.as_mut() {
            f("mlp.hidden.weight", &mut mlp.hidden.weight);
            f("mlp.hidden.bias", &mut mlp.hidden.bias);
            f("mlp.hidden.act", &mut mlp.hidden.act_param);
            f("mlp.output.weight", &mut mlp.output.weight);
            f("mlp.output.bias", &mut mlp.output.bias);
        }
    }
}

/// Corresponding-field-interaction mask: keep exactly the (p, j) pairs named
/// by the schema's correspondence map.
pub fn cfi_mask(schema: &FieldSchema) -> Result<Vec<bool>> {
    schema.validate()?;
    if schema.correspondence_map.is_empty() {
        return Err(Error::config(
            "cfi mask needs a non-empty correspondence_map in the schema",
        ));
    }
    let m = schema.n_query();
    let mut mask = vec![false; schema.n_behavior() * m];
    for &(p, j) in &schema.correspondence_map {
        mask[p * m + j] = true;
    }
    Ok(mask)
}

/// Keeps the k largest-|R| pairs; ties broken toward the smaller (p, j)
/// lexicographic index.
pub fn topk_mask(r: &[f64], n_behavior: usize, n_query: usize, k: usize) -> Result<Vec<bool>> {
    let n = n_behavior * n_query;
    if r.len() != n {
        return Err(Error::shape(format!(
            "R has {} entries, expected {n_behavior}x{n_query}",
            r.len()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::config(format!("top-k count {k} out of range [1, {n}]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        r[b].abs()
            .partial_cmp(&r[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; n];
    for &idx in order.iter().take(k) {
        mask[idx] = true;
    }
    Ok(mask)
}
