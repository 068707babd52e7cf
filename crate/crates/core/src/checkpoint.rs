//! Self-describing binary model checkpoints.
//!
//! Layout: 8 magic bytes, a little-endian u64 header length, a JSON header
//! (format version, schema, config, pair mask, array directory), then the
//! arrays from the directory concatenated as raw little-endian f64. Arrays
//! cover parameter values, Adagrad accumulators, embedding tables, and Dice
//! running statistics, so a reloaded model predicts bit-for-bit identically
//! and training can resume with intact optimizer state.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CtrModel, ModelConfig};
use crate::schema::FieldSchema;

const MAGIC: &[u8; 8] = b"PAIRCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    schema: FieldSchema,
    config: ModelConfig,
    /// Pair survival mask for the auto_attention unit; absent otherwise.
    pair_mask: Option<Vec<bool>>,
    arrays: Vec<ArrayEntry>,
}

/// Directory plus flattened payload in directory order.
fn collect_arrays(model: &mut CtrModel) -> (Vec<ArrayEntry>, Vec<f64>) {
    let mut dir = Vec::new();
    let mut payload = Vec::new();
    {
        let mut push = |name: String, data: &[f64]| {
            dir.push(ArrayEntry { name, len: data.len() });
            payload.extend_from_slice(data);
        };
        model.for_each_param(&mut |name, p| {
            push(format!("{name}.value"), &p.value);
            push(format!("{name}.acc"), &p.acc);
        });
        model.for_each_table(&mut |name, t| {
            push(format!("{name}.weight"), &t.weight);
            push(format!("{name}.acc"), &t.acc);
        });
        model.for_each_stat(&mut |name, s| push(name.to_string(), s));
    }
    (dir, payload)
}

pub fn save(model: &mut CtrModel, path: impl AsRef<Path>) -> Result<()> {
    let pair_mask = model.unit.pair.as_ref().map(|pw| pw.mask.clone());
    let (arrays, payload) = collect_arrays(model);
    let header = Header {
        format_version: FORMAT_VERSION,
        schema: model.schema.clone(),
        config: model.config.clone(),
        pair_mask,
        arrays,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    file.write_all(MAGIC)?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&header_bytes)?;
    for x in &payload {
        file.write_all(&x.to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<CtrModel> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path.as_ref())?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::checkpoint(format!(
            "bad magic bytes {magic:?}; not a model checkpoint"
        )));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::checkpoint(format!("unreadable header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::checkpoint(format!(
            "unsupported checkpoint format version {}",
            header.format_version
        )));
    }

    let total: usize = header.arrays.iter().map(|a| a.len).sum();
    let mut raw = vec![0u8; total * 8];
    file.read_exact(&mut raw).map_err(|_| {
        Error::checkpoint(format!("payload truncated; expected {total} f64 values"))
    })?;
    let mut payload = Vec::with_capacity(total);
    for chunk in raw.chunks_exact(8) {
        payload.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }

    let mut model = CtrModel::new(&header.schema, &header.config)?;
    match (&header.pair_mask, model.unit.pair.as_mut()) {
        (Some(mask), Some(pw)) => {
            if mask.len() != pw.mask.len() {
                return Err(Error::checkpoint(format!(
                    "pair mask length {} does not match {} field pairs",
                    mask.len(),
                    pw.mask.len()
                )));
            }
            pw.mask = mask.clone();
        }
        (None, None) => {}
        _ => {
            return Err(Error::checkpoint(
                "pair mask presence disagrees with the configured attention unit",
            ))
        }
    }

    // The freshly built model must expose the same directory; then fill it.
    let (expect_dir, _) = collect_arrays(&mut model);
    if expect_dir != header.arrays {
        return Err(Error::checkpoint(
            "array directory does not match the model built from the stored schema/config",
        ));
    }
    let mut cursor = 0usize;
    {
        let mut take = |name: &str, dst: &mut [f64]| {
            dst.copy_from_slice(&payload[cursor..cursor + dst.len()]);
            let _ = name;
            cursor += dst.len();
        };
        model.for_each_param(&mut |name, p| {
            take(name, &mut p.value);
            take(name, &mut p.acc);
        });
        model.for_each_table(&mut |name, t| {
            take(name, &mut t.weight);
            take(name, &mut t.acc);
        });
        model.for_each_stat(&mut |name, s| take(name, s));
    }
    debug_assert_eq!(cursor, total);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionKind;
    use crate::model::tests::{tiny_config, tiny_schema};
    use crate::synthetic::{generate_synthetic, TeacherPair, TeacherSpec};

    fn trained_model(kind: AttentionKind) -> CtrModel {
        let schema = tiny_schema();
        let teacher = TeacherSpec {
            pairs: vec![TeacherPair { behavior_field: 0, query_field: 1, weight: 2.0 }],
            embed_seed: 5,
            logit_scale: 2.0,
            embed_dim: 4,
        };
        let (train, eval) = generate_synthetic(&schema, &teacher, 64, 32, 9).unwrap();
        let config = tiny_config(kind);
        let mut model = CtrModel::new(&schema, &config).unwrap();
        model.train(&train, &eval, None).unwrap();
        model
    }

    #[test]
    fn round_trip_is_bit_exact_for_every_unit() {
        for kind in AttentionKind::ALL {
            let mut model = trained_model(kind);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.ckpt");
            save(&mut model, &path).unwrap();
            let mut reloaded = load(&path).unwrap();

            let mut before = Vec::new();
            model.for_each_param(&mut |n, p| before.push((n.to_string(), p.value.clone(), p.acc.clone())));
            let mut after = Vec::new();
            reloaded.for_each_param(&mut |n, p| after.push((n.to_string(), p.value.clone(), p.acc.clone())));
            assert_eq!(before.len(), after.len());
            for ((n1, v1, a1), (n2, v2, a2)) in before.iter().zip(&after) {
                assert_eq!(n1, n2);
                for (x, y) in v1.iter().zip(v2).chain(a1.iter().zip(a2)) {
                    assert_eq!(x.to_bits(), y.to_bits(), "{n1} differs after reload");
                }
            }

            // Predictions on fresh data must agree bit-for-bit.
            let schema = tiny_schema();
            let teacher = TeacherSpec {
                pairs: vec![TeacherPair { behavior_field: 1, query_field: 0, weight: 1.0 }],
                embed_seed: 6,
                logit_scale: 1.0,
                embed_dim: 4,
            };
            let (probe, _) = generate_synthetic(&schema, &teacher, 40, 1, 77).unwrap();
            let p1 = model.predict(&probe).unwrap();
            let p2 = reloaded.predict(&probe).unwrap();
            for (a, b) in p1.predictions.iter().zip(&p2.predictions) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn pruned_mask_survives_reload() {
        let mut model = trained_model(AttentionKind::AutoAttention);
        {
            let pw = model.unit.pair.as_mut().unwrap();
            let mut mask = pw.mask.clone();
            mask[2] = false;
            mask[5] = false;
            pw.apply_mask(&mask).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&mut model, &path).unwrap();
        let reloaded = load(&path).unwrap();
        let pw = reloaded.unit.pair.as_ref().unwrap();
        assert_eq!(pw.mask, model.unit.pair.as_ref().unwrap().mask);
        assert_eq!(pw.pruned_count(), 2);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut model = trained_model(AttentionKind::SumPooling);
        save(&mut model, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] ^= 0xFF;
        let bad_path = dir.path().join("bad.ckpt");
        std::fs::write(&bad_path, &bad_magic).unwrap();
        assert!(load(&bad_path).unwrap_err().to_string().contains("magic"));

        let truncated = &bytes[..bytes.len() - 16];
        std::fs::write(&bad_path, truncated).unwrap();
        assert!(load(&bad_path).unwrap_err().to_string().contains("truncated"));
    }
}
