//! Dataset schema, sample validation, CSV round-trip, and batching.
//!
//! CSV contract: header `user_id,label,<query fields...>,<behavior fields...>`.
//! Each behavior-field cell holds the id sequence for that field joined by
//! `;`, most recent first; all behavior cells in a row must have the same
//! length L <= max_behaviors, and an empty cell means no behaviors. With two
//! query fields and two behavior fields, the row `u1,1,3,7,2;5,9;4` parses to
//! query ids `[3, 7]` and behaviors `[[2, 9], [5, 4]]` (per-step tuples).
//!
//! Feature id 0 is reserved for padding/OOV in every field: its embedding row
//! is trainable, but behavior slots are masked by position, never by id.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    /// Id space is `0..vocab`, with 0 reserved for padding/OOV.
    pub vocab: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    /// Query-side fields (ad/content features), M entries.
    pub query_fields: Vec<FieldDef>,
    /// Behavior-side fields (one id per field per behavior), P entries.
    pub behavior_fields: Vec<FieldDef>,
    /// Maximum behavior sequence length H.
    pub max_behaviors: usize,
    /// Optional `(behavior field p, query field j)` pairs naming which query
    /// field corresponds to each behavior field (at most one per p); drives
    /// corresponding-field-interaction masks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correspondence_map: Vec<(usize, usize)>,
}

impl FieldSchema {
    pub fn n_query(&self) -> usize {
        self.query_fields.len()
    }

    pub fn n_behavior(&self) -> usize {
        self.behavior_fields.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.query_fields.is_empty() {
            return Err(Error::config("schema needs at least one query field"));
        }
        if self.behavior_fields.is_empty() {
            return Err(Error::config("schema needs at least one behavior field"));
        }
        if self.max_behaviors == 0 {
            return Err(Error::config("max_behaviors must be >= 1"));
        }
        let mut names: Vec<&str> = self
            .query_fields
            .iter()
            .chain(&self.behavior_fields)
            .map(|f| f.name.as_str())
            .collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("field names must be unique"));
        }
        for f in self.query_fields.iter().chain(&self.behavior_fields) {
            if f.vocab < 2 {
                return Err(Error::config(format!(
                    "field '{}': vocab must be >= 2 (id 0 is reserved for padding)",
                    f.name
                )));
            }
            if f.name.is_empty() {
                return Err(Error::config("field names must be non-empty"));
            }
        }
        let mut seen = vec![false; self.n_behavior()];
        for &(p, j) in &self.correspondence_map {
            if p >= self.n_behavior() || j >= self.n_query() {
                return Err(Error::config(format!(
                    "correspondence_map entry ({p}, {j}) out of range for {}x{} fields",
                    self.n_behavior(),
                    self.n_query()
                )));
            }
            if seen[p] {
                return Err(Error::config(format!(
                    "correspondence_map maps behavior field {p} more than once"
                )));
            }
            seen[p] = true;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub user_id: String,
    /// Click label, 0 or 1.
    pub label: u8,
    /// One id per query field, schema order.
    pub query_ids: Vec<usize>,
    /// Up to `max_behaviors` tuples of one id per behavior field, most recent
    /// first. May be empty (user with no history).
    pub behaviors: Vec<Vec<usize>>,
}

impl Sample {
    pub fn validate(&self, schema: &FieldSchema) -> Result<()> {
        if self.label > 1 {
            return Err(Error::data(format!("label must be 0 or 1, got {}", self.label)));
        }
        if self.query_ids.len() != schema.n_query() {
            return Err(Error::data(format!(
                "expected {} query ids, got {}",
                schema.n_query(),
                self.query_ids.len()
            )));
        }
        for (id, f) in self.query_ids.iter().zip(&schema.query_fields) {
            if *id >= f.vocab {
                return Err(Error::data(format!(
                    "field '{}': id {} out of range (vocab {})",
                    f.name, id, f.vocab
                )));
            }
        }
        if self.behaviors.len() > schema.max_behaviors {
            return Err(Error::data(format!(
                "{} behaviors exceed max_behaviors {}",
                self.behaviors.len(),
                schema.max_behaviors
            )));
        }
        for (i, tuple) in self.behaviors.iter().enumerate() {
            if tuple.len() != schema.n_behavior() {
                return Err(Error::data(format!(
                    "behavior {} has {} ids, expected {}",
                    i,
                    tuple.len(),
                    schema.n_behavior()
                )));
            }
            for (id, f) in tuple.iter().zip(&schema.behavior_fields) {
                if *id >= f.vocab {
                    return Err(Error::data(format!(
                        "field '{}': id {} out of range (vocab {})",
                        f.name, id, f.vocab
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FieldSchema,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(schema: FieldSchema, samples: Vec<Sample>) -> Result<Self> {
        schema.validate()?;
        for (i, s) in samples.iter().enumerate() {
            s.validate(&schema)
                .map_err(|e| Error::data(format!("sample {i}: {e}")))?;
        }
        Ok(Dataset { schema, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let pos: usize = self.samples.iter().map(|s| s.label as usize).sum();
        pos as f64 / self.samples.len() as f64
    }
}

fn expected_header(schema: &FieldSchema) -> Vec<String> {
    let mut h = vec!["user_id".to_string(), "label".to_string()];
    h.extend(schema.query_fields.iter().map(|f| f.name.clone()));
    h.extend(schema.behavior_fields.iter().map(|f| f.name.clone()));
    h
}

/// Loads and fully validates a dataset; every malformed row is an error that
/// names the row and field.
pub fn load_dataset(path: impl AsRef<Path>, schema: &FieldSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path.as_ref())?;
    let expected = expected_header(schema);
    let header = reader.headers()?.clone();
    if header.len() != expected.len() {
        return Err(Error::data(format!(
            "header has {} columns, expected {}",
            header.len(),
            expected.len()
        )));
    }
    for (i, want) in expected.iter().enumerate() {
        if header.get(i) != Some(want.as_str()) {
            return Err(Error::data(format!(
                "header column {}: expected '{}', found '{}'",
                i + 1,
                want,
                header.get(i).unwrap_or("")
            )));
        }
    }

    let m = schema.n_query();
    let p = schema.n_behavior();
    let mut samples = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1; // 1-based data row for messages
        let record = record?;
        let fail = |msg: String| Error::data(format!("row {row}: {msg}"));
        if record.len() != expected.len() {
            return Err(fail(format!(
                "has {} columns, expected {}",
                record.len(),
                expected.len()
            )));
        }
        let user_id = record.get(0).unwrap_or("").to_string();
        if user_id.is_empty() {
            return Err(fail("empty user_id".into()));
        }
        let label = match record.get(1) {
            Some("0") => 0u8,
            Some("1") => 1u8,
            other => {
                return Err(fail(format!(
                    "label must be '0' or '1', found '{}'",
                    other.unwrap_or("")
                )))
            }
        };
        let mut query_ids = Vec::with_capacity(m);
        for (j, f) in schema.query_fields.iter().enumerate() {
            let cell = record.get(2 + j).unwrap_or("");
            let id: usize = cell
                .parse()
                .map_err(|_| fail(format!("field '{}': invalid id '{}'", f.name, cell)))?;
            query_ids.push(id);
        }
        // Behavior columns are per-field sequences; transpose to per-step tuples.
        let mut seqs: Vec<Vec<usize>> = Vec::with_capacity(p);
        for (k, f) in schema.behavior_fields.iter().enumerate() {
            let cell = record.get(2 + m + k).unwrap_or("");
            let seq = if cell.is_empty() {
                Vec::new()
            } else {
                cell.split(';')
                    .map(|tok| {
                        tok.parse::<usize>()
                            .map_err(|_| fail(format!("field '{}': invalid id '{}'", f.name, tok)))
                    })
                    .collect::<Result<Vec<usize>>>()?
            };
            seqs.push(seq);
        }
        let len0 = seqs[0].len();
        for (k, seq) in seqs.iter().enumerate() {
            if seq.len() != len0 {
                return Err(fail(format!(
                    "behavior field '{}' has {} entries but '{}' has {}",
                    schema.behavior_fields[k].name,
                    seq.len(),
                    schema.behavior_fields[0].name,
                    len0
                )));
            }
        }
        let behaviors: Vec<Vec<usize>> = (0..len0).map(|i| seqs.iter().map(|s| s[i]).collect()).collect();
        let sample = Sample {
            user_id,
            label,
            query_ids,
            behaviors,
        };
        sample.validate(schema).map_err(|e| fail(e.to_string()))?;
        samples.push(sample);
    }
    Ok(Dataset {
        schema: schema.clone(),
        samples,
    })
}

/// Writes a dataset back to the CSV contract; `load_dataset` of the result
/// reproduces the dataset exactly.
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(expected_header(&dataset.schema))?;
    let p = dataset.schema.n_behavior();
    for s in &dataset.samples {
        let mut rec: Vec<String> = Vec::with_capacity(2 + s.query_ids.len() + p);
        rec.push(s.user_id.clone());
        rec.push(s.label.to_string());
        rec.extend(s.query_ids.iter().map(|id| id.to_string()));
        for k in 0..p {
            let cell: Vec<String> = s.behaviors.iter().map(|t| t[k].to_string()).collect();
            rec.push(cell.join(";"));
        }
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

/// Deterministic index batches: every sample appears exactly once, the final
/// short batch is kept, and a given `(shuffle, seed)` always yields the same
/// order.
pub fn batch_iter(n_samples: usize, batch_size: usize, shuffle: bool, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    pub(crate) fn toy_schema() -> FieldSchema {
        FieldSchema {
            query_fields: vec![
                FieldDef {
                    name: "item".into(),
                    vocab: 10,
                },
                FieldDef {
                    name: "shop".into(),
                    vocab: 10,
                },
            ],
            behavior_fields: vec![
                FieldDef {
                    name: "hist_item".into(),
                    vocab: 10,
                },
                FieldDef {
                    name: "hist_shop".into(),
                    vocab: 10,
                },
            ],
            max_behaviors: 4,
            correspondence_map: Vec::new(),
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn parses_documented_example_row() {
        let f = write_tmp("user_id,label,item,shop,hist_item,hist_shop\nu1,1,3,7,2;5,9;4\n");
        let ds = load_dataset(f.path(), &toy_schema()).unwrap();
        assert_eq!(ds.len(), 1);
        let s = &ds.samples[0];
        assert_eq!(s.user_id, "u1");
        assert_eq!(s.label, 1);
        assert_eq!(s.query_ids, vec![3, 7]);
        assert_eq!(s.behaviors, vec![vec![2, 9], vec![5, 4]]);
    }

    #[test]
    fn empty_behavior_cells_mean_no_history() {
        let f = write_tmp("user_id,label,item,shop,hist_item,hist_shop\nu1,0,3,7,,\n");
        let ds = load_dataset(f.path(), &toy_schema()).unwrap();
        assert!(ds.samples[0].behaviors.is_empty());
    }

    #[test]
    fn rejects_header_mismatch() {
        let f = write_tmp("user_id,label,item,store,hist_item,hist_shop\n");
        let err = load_dataset(f.path(), &toy_schema()).unwrap_err();
        assert!(err.to_string().contains("column 4"), "{err}");
    }

    #[test]
    fn rejects_unbalanced_behavior_lists() {
        let f = write_tmp("user_id,label,item,shop,hist_item,hist_shop\nu1,1,3,7,2;5,9\n");
        let err = load_dataset(f.path(), &toy_schema()).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        assert!(err.to_string().contains("entries"), "{err}");
    }

    #[test]
    fn rejects_out_of_vocab_and_bad_label_with_row_numbers() {
        let f = write_tmp("user_id,label,item,shop,hist_item,hist_shop\nu1,1,3,7,,\nu2,1,99,7,,\n");
        let err = load_dataset(f.path(), &toy_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("item") && msg.contains("99"), "{msg}");

        let f = write_tmp("user_id,label,item,shop,hist_item,hist_shop\nu1,2,3,7,,\n");
        assert!(load_dataset(f.path(), &toy_schema()).unwrap_err().to_string().contains("label"));
    }

    #[test]
    fn rejects_too_many_behaviors() {
        let f = write_tmp("user_id,label,item,shop,hist_item,hist_shop\nu1,1,3,7,1;2;3;4;5,1;2;3;4;5\n");
        let err = load_dataset(f.path(), &toy_schema()).unwrap_err();
        assert!(err.to_string().contains("max_behaviors"), "{err}");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        use rand::Rng;
        use rand::SeedableRng;
        let schema = toy_schema();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<Sample> = (0..50)
            .map(|i| {
                let l = rng.gen_range(0..=schema.max_behaviors);
                Sample {
                    user_id: format!("u{}", rng.gen_range(0..8)),
                    label: (i % 3 == 0) as u8,
                    query_ids: (0..2).map(|_| rng.gen_range(0..10)).collect(),
                    behaviors: (0..l).map(|_| (0..2).map(|_| rng.gen_range(0..10)).collect()).collect(),
                }
            })
            .collect();
        let ds = Dataset::new(schema.clone(), samples).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_dataset(&ds, f.path()).unwrap();
        let back = load_dataset(f.path(), &schema).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn batches_partition_and_keep_short_tail() {
        let batches = batch_iter(10, 4, false, 0).unwrap();
        assert_eq!(batches, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9]]);

        let shuffled = batch_iter(10, 4, true, 7).unwrap();
        let mut seen: Vec<usize> = shuffled.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(shuffled, batch_iter(10, 4, true, 7).unwrap());
        assert_ne!(shuffled, batch_iter(10, 4, true, 8).unwrap());
        assert!(batch_iter(10, 0, false, 0).is_err());
    }
}
