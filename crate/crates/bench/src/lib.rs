//! Shared fixtures for the criterion benchmarks: a filled behavior block at
//! the headline dimensions and a small synthetic training setup.

use pairattn_core::{
    generate_synthetic, AttentionKind, BehaviorBlock, CtrModel, Dataset, FieldDef, FieldSchema,
    ModelConfig, TeacherPair, TeacherSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const M: usize = 15;
pub const P: usize = 2;
pub const K: usize = 64;
pub const HIDDEN: usize = 200;

/// A fully occupied 50-slot block with random embeddings.
pub fn block(seed: u64) -> BehaviorBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = 50;
    BehaviorBlock {
        n_behavior_fields: P,
        n_query_fields: M,
        embed_dim: K,
        behavior_embeds: (0..slots * P * K).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        behavior_mask: vec![true; slots],
        query_embeds: (0..M * K).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

pub fn small_schema() -> FieldSchema {
    FieldSchema {
        query_fields: (0..M).map(|j| FieldDef { name: format!("q{j}"), vocab: 100 }).collect(),
        behavior_fields: (0..P).map(|p| FieldDef { name: format!("b{p}"), vocab: 100 }).collect(),
        max_behaviors: 10,
        correspondence_map: Vec::new(),
    }
}

pub fn small_config(kind: AttentionKind) -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        mlp_dims: vec![64, 32, 1],
        attention: kind,
        attention_hidden: 32,
        din_query_fields: vec![0],
        learning_rate: 0.05,
        l2: 1e-6,
        train_batch: 256,
        eval_batch: 4096,
        epochs: 1,
        seed: 7,
    }
}

/// A model plus one generated dataset to feed training steps.
pub fn training_fixture(kind: AttentionKind, n: usize) -> (CtrModel, Dataset) {
    let schema = small_schema();
    let spec = TeacherSpec {
        pairs: vec![
            TeacherPair { behavior_field: 0, query_field: 2, weight: 5.0 },
            TeacherPair { behavior_field: 1, query_field: 4, weight: 5.0 },
        ],
        embed_seed: 424_242,
        logit_scale: 8.0,
        embed_dim: 16,
    };
    let (train, _) = generate_synthetic(&schema, &spec, n, 16, 9).unwrap();
    let model = CtrModel::new(&schema, &small_config(kind)).unwrap();
    (model, train)
}
