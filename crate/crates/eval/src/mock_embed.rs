//! Structure-aware deterministic embedder for generated corpora.
//!
//! Layout: one block of `B` coordinates per taxonomy level (`B` = widest
//! sibling group), where the node's ancestor at level `l` sets coordinate
//! `sibling_index` to `4 * 0.5^l`; then a part block of `B` coordinates;
//! then one block per detail slot with a one-hot of weight 0.4 on the chosen
//! value; then uniform noise in [-0.02, 0.02] seeded by the entity text.
//!
//! Part leaves borrow the path of their first owner (in forest order) and
//! set their `sibling_index` in the part block to 1.0, so "engine" lands
//! near "car" rather than in a tree of its own.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relmatch_core::embedding::serialize_entity;
use relmatch_core::{EmbedError, EmbeddingProvider, EmbeddingVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::taxonomy::{Corpus, Entity, Forest, NodeKind, ITEM_ATTRIBUTE};

const LEVEL_WEIGHT: f32 = 4.0;
const DETAIL_WEIGHT: f32 = 0.4;
const PART_WEIGHT: f32 = 1.0;
pub const NOISE: f32 = 0.02;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MockEmbedError {
    #[error("unknown taxonomy node `{0}`")]
    UnknownNode(String),
    #[error("unknown detail `{slot}={value}`")]
    UnknownDetail { slot: String, value: String },
}

/// Embedding dimension for a forest.
pub fn mock_dimension(forest: &Forest) -> usize {
    (forest.max_level() + 2) * forest.max_siblings() + forest.slots.len() * forest.max_slot_values()
}

fn first_owner<'a>(forest: &'a Forest, part_id: &str) -> Option<&'a str> {
    forest
        .nodes
        .iter()
        .find(|n| n.parts.iter().any(|p| p == part_id))
        .map(|n| n.node_id.as_str())
}

fn noise(text: &str, seed: u64, dimension: usize) -> Vec<f32> {
    let mut hasher = Sha256::new();
    hasher.update(b"mock-embed");
    hasher.update(seed.to_le_bytes());
    hasher.update(text.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
    (0..dimension).map(|_| rng.random_range(-NOISE..=NOISE)).collect()
}

fn structural(
    node_id: &str,
    details: &BTreeMap<String, String>,
    forest: &Forest,
) -> Result<Vec<f32>, MockEmbedError> {
    let width = forest.max_siblings();
    let levels = forest.max_level() + 1;
    let values = forest.max_slot_values();
    let mut v = vec![0.0f32; mock_dimension(forest)];
    let Some(node) = forest.node(node_id) else {
        return Err(MockEmbedError::UnknownNode(node_id.to_string()));
    };
    let owner = match node.kind {
        NodeKind::Part => first_owner(forest, node_id),
        NodeKind::Category => None,
    };
    if owner.is_some() {
        v[levels * width + node.sibling_index] = PART_WEIGHT;
    }
    for n in forest.path(owner.unwrap_or(node_id)) {
        v[n.level * width + n.sibling_index] = LEVEL_WEIGHT * 0.5f32.powi(n.level as i32);
    }
    for (slot, value) in details {
        let unknown = || MockEmbedError::UnknownDetail {
            slot: slot.clone(),
            value: value.clone(),
        };
        let s = forest.slots.iter().position(|x| &x.name == slot).ok_or_else(unknown)?;
        let i = forest.slots[s]
            .values
            .iter()
            .position(|forms| &forms[0] == value)
            .ok_or_else(unknown)?;
        v[(levels + 1) * width + s * values + i] = DETAIL_WEIGHT;
    }
    Ok(v)
}

/// Embeds one generated entity.
pub fn mock_embed(entity: &Entity, forest: &Forest, seed: u64) -> Result<EmbeddingVector, MockEmbedError> {
    let mut v = structural(&entity.node_id, &entity.details, forest)?;
    let jitter = noise(&entity.text, seed, v.len());
    for (x, n) in v.iter_mut().zip(jitter) {
        *x += n;
    }
    Ok(EmbeddingVector::new(v).expect("mock vectors are finite"))
}

/// [`EmbeddingProvider`] over the serialized rows of one corpus.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    by_text: HashMap<String, Vec<f32>>,
    dimension: usize,
    seed: u64,
    corpus_seed: u64,
}

impl MockEmbedder {
    pub fn new(corpus: &Corpus, seed: u64) -> Result<Self, MockEmbedError> {
        let schema = vec![ITEM_ATTRIBUTE.to_string()];
        let mut by_text = HashMap::new();
        for entity in corpus.sources.iter().chain(&corpus.targets) {
            let text = serialize_entity(&entity.record(), &schema);
            let vector = mock_embed(entity, &corpus.forest, seed)?;
            by_text.insert(text, vector.into_values());
        }
        Ok(Self {
            by_text,
            dimension: mock_dimension(&corpus.forest),
            seed,
            corpus_seed: corpus.seed,
        })
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn id(&self) -> String {
        format!(
            "mock-taxonomy/corpus={}/seed={}/dim={}",
            self.corpus_seed, self.seed, self.dimension
        )
    }

    fn model(&self) -> String {
        "mock-taxonomy".into()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        self.by_text
            .get(text)
            .cloned()
            .ok_or_else(|| EmbedError::ProviderUnavailable(format!("text not in corpus: {text:?}")))
    }
}
