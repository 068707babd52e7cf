//! Multi-field CTR prediction over user behavior sequences.
//!
//! The model embeds a candidate item's query-side fields and the user's
//! clicked-item history, scores each history step against the candidate with
//! a pluggable attention unit, pools the history into an interest vector, and
//! feeds it through an MLP to a click probability. The headline unit learns
//! one scalar strength per (behavior field, query field) pair and sparsifies
//! them by iterative magnitude pruning; sum pooling, dot-product attention,
//! and three MLP-based units are provided for comparison.
//!
//! Everything is plain `f64` on the CPU with hand-written backpropagation,
//! Adagrad, and seeded RNG throughout: the same config and seed reproduce
//! training bit for bit.

pub mod attention;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod numerics;
pub mod pruning;
pub mod schema;
pub mod synthetic;

pub use attention::{cfi_mask, topk_mask, AttentionKind, AttentionUnit, BehaviorBlock, PairWeights};
pub use error::{Error, Result};
pub use eval::{
    cost_model, export_pair_weights, logloss, support_recovery, user_weighted_auc, CostReport,
    MetricReport,
};
pub use model::{CtrModel, ModelConfig, Predictions, TrainHistory};
pub use numerics::{Activation, Mode};
pub use pruning::PruneConfig;
pub use schema::{load_dataset, write_dataset, Dataset, FieldDef, FieldSchema, Sample};
pub use synthetic::{generate_synthetic, TeacherModel, TeacherPair, TeacherSpec};
