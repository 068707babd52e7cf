//! Metrics, the analytical cost model, and field-pair weight export.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::model::{CtrModel, CLAMP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub user_weighted_auc: f64,
    pub logloss: f64,
    pub n_users_counted: usize,
    pub n_users_skipped: usize,
}

/// Mean binary cross-entropy with the training clamp applied to predictions.
pub fn logloss(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::metric(format!(
            "logloss needs aligned non-empty inputs, got {} predictions / {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut sum = 0.0;
    for (&p, &y) in predictions.iter().zip(labels) {
        if y > 1 {
            return Err(Error::metric(format!("label must be 0 or 1, got {y}")));
        }
        let p = p.clamp(CLAMP, 1.0 - CLAMP);
        sum -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(sum / predictions.len() as f64)
}

/// AUC of one user's samples via the rank statistic; tied predictions get
/// average ranks, i.e. each tied (positive, negative) pair contributes 1/2.
fn single_user_auc(samples: &[(f64, u8)]) -> Option<f64> {
    let n_pos = samples.iter().filter(|(_, y)| *y == 1).count();
    let n_neg = samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].0.partial_cmp(&samples[b].0).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && samples[order[j]].0 == samples[order[i]].0 {
            j += 1;
        }
        // 1-based ranks i+1 ..= j averaged over the tie group.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if samples[idx].1 == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Per-user AUC averaged with impression-count weights. Users whose samples
/// are all one class are skipped (and counted); if every user is skipped the
/// metric is undefined and an error is returned.
pub fn user_weighted_auc(predictions: &[f64], labels: &[u8], user_ids: &[String]) -> Result<MetricReport> {
    if predictions.is_empty()
        || predictions.len() != labels.len()
        || predictions.len() != user_ids.len()
    {
        return Err(Error::metric(format!(
            "user_weighted_auc needs aligned non-empty inputs, got {}/{}/{}",
            predictions.len(),
            labels.len(),
            user_ids.len()
        )));
    }
    // Group per user in first-appearance order (deterministic reductions).
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<(f64, u8)>> = Vec::new();
    for ((&p, &y), uid) in predictions.iter().zip(labels).zip(user_ids) {
        if y > 1 {
            return Err(Error::metric(format!("label must be 0 or 1, got {y}")));
        }
        let slot = *index.entry(uid.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push((p, y));
    }
    let mut weighted = 0.0;
    let mut weight_sum = 0.0;
    let mut counted = 0;
    let mut skipped = 0;
    for g in &groups {
        match single_user_auc(g) {
            Some(auc) => {
                let w = g.len() as f64;
                weighted += w * auc;
                weight_sum += w;
                counted += 1;
            }
            None => skipped += 1,
        }
    }
    if counted == 0 {
        return Err(Error::metric(
            "AUC undefined: no user has both a positive and a negative sample",
        ));
    }
    Ok(MetricReport {
        user_weighted_auc: weighted / weight_sum,
        logloss: logloss(predictions, labels)?,
        n_users_counted: counted,
        n_users_skipped: skipped,
    })
}

/// The FLOPs counting rule used by [`cost_model`], printed in every report.
pub const FLOP_CONVENTION: &str = "per behavior: dense layer = 2*in*out; outer product = K^2; \
dot product = 2K; per-pair scale-and-add = 2; activations, biases, softmax, and the width-1 \
logit layer excluded. Parameter counts cover scoring weights and biases only (no activation \
parameters).";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub unit: AttentionKind,
    pub query_fields: usize,
    pub behavior_fields: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_behaviors: usize,
    pub flops_per_behavior: u64,
    pub param_count: u64,
    pub convention: String,
}

/// Analytical per-behavior cost of one attention unit.
pub fn cost_model(
    kind: AttentionKind,
    m: usize,
    p: usize,
    k: usize,
    d: usize,
    h: usize,
) -> Result<CostReport> {
    if m == 0 || p == 0 || k == 0 || h == 0 {
        return Err(Error::config(format!(
            "cost_model dims must be positive, got M={m}, P={p}, K={k}, H={h}"
        )));
    }
    if kind.uses_mlp() && d == 0 {
        return Err(Error::config("cost_model needs d >= 1 for MLP units"));
    }
    let (m64, p64, k64, d64) = (m as u64, p as u64, k as u64, d as u64);
    let (param_count, flops_per_behavior, note) = match kind {
        AttentionKind::SumPooling => (0, 0, ""),
        AttentionKind::Din => (
            d64 * k64 * k64 + 2 * d64 + 1,
            k64 * k64 + 2 * d64 * k64 * k64,
            "",
        ),
        AttentionKind::MafS => (
            d64 * k64 + 2 * d64 + 1,
            2 * d64 * k64,
            " Parameter formula derived from the layer shapes; no published figure exists.",
        ),
        AttentionKind::MafC => (
            d64 * (m64 + 1) * k64 + 2 * d64 + 1,
            2 * d64 * (m64 + 1) * k64,
            " Parameter formula derived from the layer shapes; no published figure exists.",
        ),
        AttentionKind::DotProduct => (
            1,
            2 * k64,
            " FLOPs follow this report's convention; the published figure for this unit uses an \
unrecoverable counting rule and is not matched.",
        ),
        AttentionKind::AutoAttention => (
            p64 * m64 + 1,
            p64 * m64 * (2 * k64 + 2),
            " FLOPs follow this report's convention; the published figure for this unit uses an \
unrecoverable counting rule and is not matched.",
        ),
    };
    Ok(CostReport {
        unit: kind,
        query_fields: m,
        behavior_fields: p,
        embed_dim: k,
        hidden_dim: if kind.uses_mlp() { d } else { 0 },
        max_behaviors: h,
        flops_per_behavior,
        param_count,
        convention: format!("{FLOP_CONVENTION}{note}"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExportEntry {
    pub behavior_field: String,
    pub query_field: String,
    pub p: usize,
    pub j: usize,
    pub weight: f64,
    /// 1-based position in the |weight|-descending order over all pairs.
    pub rank: usize,
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExport {
    pub behavior_fields: Vec<String>,
    pub query_fields: Vec<String>,
    pub pairs: Vec<PairExportEntry>,
    /// Surviving pairs only, sorted by |weight| descending.
    pub selected: Vec<PairExportEntry>,
}

/// Writes `<base>.csv` (field-pair strength matrix, masked cells 0) and
/// `<base>.json` (per-pair weight/rank/pruned records plus the surviving
/// list). Requires the auto_attention unit.
pub fn export_pair_weights(model: &CtrModel, base: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let pw = model.unit.pair.as_ref().ok_or_else(|| {
        Error::config(format!(
            "pair-weight export requires the auto_attention unit, got {}",
            model.unit.kind.as_str()
        ))
    })?;
    let b_names: Vec<String> = model.schema.behavior_fields.iter().map(|f| f.name.clone()).collect();
    let q_names: Vec<String> = model.schema.query_fields.iter().map(|f| f.name.clone()).collect();
    let m = q_names.len();

    let base = base.as_ref();
    let csv_path = base.with_extension("csv");
    let json_path = base.with_extension("json");

    let mut writer = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["field".to_string()];
    header.extend(q_names.iter().cloned());
    writer.write_record(&header)?;
    for (p, b_name) in b_names.iter().enumerate() {
        let mut rec = vec![b_name.clone()];
        for j in 0..m {
            let idx = p * m + j;
            let cell = if pw.mask[idx] { pw.r.value[idx] } else { 0.0 };
            rec.push(format!("{cell}"));
        }
        writer.write_record(&rec)?;
    }
    writer.flush()?;

    // Rank every pair by |masked weight| descending, ties lexicographic.
    let n = pw.n_pairs();
    let masked_weight =
        |idx: usize| if pw.mask[idx] { pw.r.value[idx] } else { 0.0 };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        masked_weight(b)
            .abs()
            .partial_cmp(&masked_weight(a).abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rank = vec![0usize; n];
    for (pos, &idx) in order.iter().enumerate() {
        rank[idx] = pos + 1;
    }
    let entry = |idx: usize| PairExportEntry {
        behavior_field: b_names[idx / m].clone(),
        query_field: q_names[idx % m].clone(),
        p: idx / m,
        j: idx % m,
        weight: masked_weight(idx),
        rank: rank[idx],
        pruned: !pw.mask[idx],
    };
    let pairs: Vec<PairExportEntry> = (0..n).map(entry).collect();
    let selected: Vec<PairExportEntry> = order
        .iter()
        .filter(|&&idx| pw.mask[idx])
        .map(|&idx| entry(idx))
        .collect();
    let export = PairExport {
        behavior_fields: b_names,
        query_fields: q_names,
        pairs,
        selected,
    };
    std::fs::write(&json_path, serde_json::to_string_pretty(&export)?)?;
    Ok((csv_path, json_path))
}

/// Reads back a matrix written by [`export_pair_weights`]; returns
/// `(behavior field names, query field names, row-major P x M weights)`.
pub fn import_pair_weights(csv_path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<String>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(csv_path.as_ref())?;
    let header = reader.headers()?.clone();
    if header.is_empty() {
        return Err(Error::data("pair-weight CSV has an empty header"));
    }
    let q_names: Vec<String> = header.iter().skip(1).map(|s| s.to_string()).collect();
    let mut b_names = Vec::new();
    let mut matrix = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != q_names.len() + 1 {
            return Err(Error::data(format!(
                "pair-weight CSV row has {} columns, expected {}",
                record.len(),
                q_names.len() + 1
            )));
        }
        b_names.push(record.get(0).unwrap_or("").to_string());
        for cell in record.iter().skip(1) {
            let w: f64 = cell
                .parse()
                .map_err(|_| Error::data(format!("invalid weight '{cell}' in pair-weight CSV")))?;
            matrix.push(w);
        }
    }
    Ok((b_names, q_names, matrix))
}

/// Fraction of teacher pairs found among the top-k surviving pairs by |weight|
/// (ties toward the smaller lexicographic index).
pub fn support_recovery(
    surviving: &[((usize, usize), f64)],
    teacher_pairs: &BTreeSet<(usize, usize)>,
    k: usize,
) -> Result<f64> {
    if teacher_pairs.is_empty() {
        return Err(Error::metric("support_recovery needs a non-empty teacher set"));
    }
    let mut ordered: Vec<&((usize, usize), f64)> = surviving.iter().collect();
    ordered.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let hits = ordered
        .iter()
        .take(k)
        .filter(|((p, j), _)| teacher_pairs.contains(&(*p, *j)))
        .count();
    Ok(hits as f64 / teacher_pairs.len() as f64)
}
