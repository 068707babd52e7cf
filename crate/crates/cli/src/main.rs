//! Command-line front end: synthetic data generation, training with optional
//! pair pruning, evaluation, pair-weight export, cost accounting, and a
//! finite-difference gradient self-check.
//!
//! All commands read one JSON run config (`--config`, defaults otherwise)
//! with `--set dotted.path=value` overrides, and exit nonzero with a single
//! diagnostic line on any error. Log verbosity comes from `RUST_LOG`.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use pairattn_core::{
    checkpoint, cost_model, export_pair_weights, generate_synthetic, gradcheck, user_weighted_auc,
    AttentionKind, CtrModel, Dataset, PruneConfig, TrainHistory,
};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "pairattn",
    version,
    about = "CTR prediction with learned, prunable field-pair attention"
)]
struct Cli {
    /// JSON run config; built-in defaults apply when omitted.
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config field, e.g. --set model.learning_rate=0.05
    /// (repeatable, applied in order).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw synthetic train/test splits from the configured teacher.
    GenData {
        /// Directory for train.csv, test.csv, and teacher.json.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Train a model; writes a checkpoint and a per-epoch history file.
    Train {
        /// Training CSV [default: paths.train_data].
        #[arg(long, value_name = "FILE")]
        train: Option<PathBuf>,
        /// Held-out CSV evaluated each epoch [default: paths.test_data].
        #[arg(long, value_name = "FILE")]
        test: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        history: Option<PathBuf>,
        /// Apply the config's pruning schedule to the pair strengths.
        #[arg(long)]
        prune: bool,
    },
    /// Score a dataset with a saved checkpoint and write the metric report.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Dataset CSV [default: paths.test_data].
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// Report destination [default: paths.metrics].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Export the learned pair-strength matrix as CSV plus ranked JSON.
    ExportWeights {
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Output basename; .csv and .json are appended [default: paths.weights].
        #[arg(long, value_name = "BASE")]
        out: Option<PathBuf>,
    },
    /// Analytical parameter and FLOP cost of one attention unit.
    Cost {
        /// One of: sum_pooling, din, maf_s, maf_c, dot_product, auto_attention.
        #[arg(long)]
        unit: String,
        /// Query fields M.
        #[arg(long, default_value_t = 15)]
        m: usize,
        /// Behavior fields P.
        #[arg(long, default_value_t = 2)]
        p: usize,
        /// Embedding width K.
        #[arg(long, default_value_t = 64)]
        k: usize,
        /// Attention MLP hidden width d.
        #[arg(long, default_value_t = 200)]
        d: usize,
        /// History length H.
        #[arg(long = "hist", default_value_t = 50)]
        h: usize,
        /// Also write the report here (it always prints to stdout).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Compare every analytic gradient against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.cmd {
        Cmd::GenData { out_dir } => cmd_gen_data(&cfg, out_dir),
        Cmd::Train { train, test, checkpoint, history, prune } => {
            cmd_train(&cfg, train, test, checkpoint, history, prune)
        }
        Cmd::Eval { checkpoint, data, out } => cmd_eval(&cfg, checkpoint, data, out),
        Cmd::ExportWeights { checkpoint, out } => cmd_export_weights(&cfg, checkpoint, out),
        Cmd::Cost { unit, m, p, k, d, h, out } => cmd_cost(&unit, m, p, k, d, h, out),
        Cmd::Gradcheck { seed } => cmd_gradcheck(seed),
    }
}

fn parent_ready(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    parent_ready(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_data(path: &Path, schema: &pairattn_core::FieldSchema) -> Result<Dataset> {
    pairattn_core::load_dataset(path, schema)
        .with_context(|| format!("cannot load dataset {}", path.display()))
}

fn cmd_gen_data(cfg: &RunConfig, out_dir: Option<PathBuf>) -> Result<()> {
    let dir = out_dir.unwrap_or_else(|| {
        cfg.paths.train_data.parent().map(Path::to_path_buf).unwrap_or_else(|| ".".into())
    });
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let (train, test) =
        generate_synthetic(&cfg.schema, &cfg.teacher, cfg.n_train, cfg.n_test, cfg.seed)?;
    let train_path = dir.join("train.csv");
    let test_path = dir.join("test.csv");
    pairattn_core::write_dataset(&train, &train_path)?;
    pairattn_core::write_dataset(&test, &test_path)?;
    write_json(&cfg.teacher, &dir.join("teacher.json"))?;
    info!(
        "wrote {} train / {} test samples (positive rate {:.3} / {:.3})",
        train.len(),
        test.len(),
        train.positive_rate(),
        test.positive_rate()
    );
    println!(
        "{} ({} samples), {} ({} samples), {}",
        train_path.display(),
        train.len(),
        test_path.display(),
        test.len(),
        dir.join("teacher.json").display()
    );
    Ok(())
}

fn cmd_train(
    cfg: &RunConfig,
    train: Option<PathBuf>,
    test: Option<PathBuf>,
    ckpt: Option<PathBuf>,
    history: Option<PathBuf>,
    prune: bool,
) -> Result<()> {
    let train_path = train.unwrap_or_else(|| cfg.paths.train_data.clone());
    let test_path = test.unwrap_or_else(|| cfg.paths.test_data.clone());
    let ckpt_path = ckpt.unwrap_or_else(|| cfg.paths.checkpoint.clone());
    let history_path = history.unwrap_or_else(|| cfg.paths.history.clone());

    let train_data = load_data(&train_path, &cfg.schema)?;
    let test_data = load_data(&test_path, &cfg.schema)?;
    let prune_cfg: Option<&PruneConfig> = prune.then_some(&cfg.prune);

    let mut model = CtrModel::new(&cfg.schema, &cfg.model_config())?;
    let hist = model.train(&train_data, &test_data, prune_cfg)?;
    report_history(&hist);

    parent_ready(&ckpt_path)?;
    checkpoint::save(&mut model, &ckpt_path)?;
    write_json(&hist, &history_path)?;
    println!("{} , {}", ckpt_path.display(), history_path.display());
    Ok(())
}

fn report_history(hist: &TrainHistory) {
    for e in &hist.epochs {
        info!(
            "epoch {}: train loss {:.5}, eval logloss {:.5}, eval auc {}, {} pruned (sparsity {:.3})",
            e.epoch,
            e.train_loss,
            e.eval_logloss,
            e.eval_auc.map_or("n/a".into(), |a| format!("{a:.4}")),
            e.pruned_pairs,
            e.sparsity
        );
    }
}

fn cmd_eval(
    cfg: &RunConfig,
    ckpt: Option<PathBuf>,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let ckpt_path = ckpt.unwrap_or_else(|| cfg.paths.checkpoint.clone());
    let data_path = data.unwrap_or_else(|| cfg.paths.test_data.clone());
    let out_path = out.unwrap_or_else(|| cfg.paths.metrics.clone());

    let mut model = checkpoint::load(&ckpt_path)?;
    // The checkpoint's schema is authoritative for reading the dataset; a
    // mismatched file fails the header check instead of predicting garbage.
    let dataset = load_data(&data_path, &model.schema.clone())?;
    let preds = model.predict(&dataset)?;
    let report = user_weighted_auc(&preds.predictions, &preds.labels, &preds.user_ids)?;
    write_json(&report, &out_path)?;
    println!(
        "auc {:.6} logloss {:.6} ({} users counted, {} skipped) -> {}",
        report.user_weighted_auc,
        report.logloss,
        report.n_users_counted,
        report.n_users_skipped,
        out_path.display()
    );
    Ok(())
}

fn cmd_export_weights(cfg: &RunConfig, ckpt: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let ckpt_path = ckpt.unwrap_or_else(|| cfg.paths.checkpoint.clone());
    let base = out.unwrap_or_else(|| cfg.paths.weights.clone());
    let model = checkpoint::load(&ckpt_path)?;
    if model.unit.pair.is_none() {
        bail!(
            "checkpoint {} holds a {:?} model, which has no pair-strength matrix",
            ckpt_path.display(),
            model.config.attention
        );
    }
    parent_ready(&base)?;
    let (csv_path, json_path) = export_pair_weights(&model, &base)?;
    println!("{} , {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_cost(
    unit: &str,
    m: usize,
    p: usize,
    k: usize,
    d: usize,
    h: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let kind: AttentionKind = serde_json::from_value(serde_json::Value::String(unit.to_string()))
        .map_err(|_| {
            anyhow::anyhow!(
                "unknown unit '{unit}'; expected one of sum_pooling, din, maf_s, maf_c, \
                 dot_product, auto_attention"
            )
        })?;
    let report = cost_model(kind, m, p, k, d, h)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    print!("{text}");
    if let Some(path) = out {
        parent_ready(&path)?;
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> Result<()> {
    let report = gradcheck::full_report(seed)?;
    for e in &report.entries {
        info!("{}: {} values, max rel err {:.3e}", e.name, e.n_checked, e.max_rel_err);
    }
    println!(
        "{}, max_rel_err {:.3e} over {} parameter groups (tolerance {:.0e})",
        if report.passed() { "pass" } else { "FAIL" },
        report.max_rel_err,
        report.entries.len(),
        report.tolerance
    );
    if !report.passed() {
        bail!("gradient check exceeded tolerance");
    }
    Ok(())
}
