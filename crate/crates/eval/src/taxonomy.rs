//! Seeded synthetic corpora with known relation ground truth.
//!
//! A forest of category trees (vehicle > car > ...) plus one tree of part
//! nouns is generated from the bundled vocabularies. Entities are node
//! instances with optional detail values ("small", "electric") rendered as
//! noun phrases, with synonyms substituted at `synonym_rate`. Targets are
//! derived from sources by controlled mutations so that every relation
//! appears, but the ground truth is computed from the rules below over all
//! (source, target) pairs, not from the mutation that produced a target:
//!
//! | relation | rule |
//! |---|---|
//! | exactly the same | same node, same details |
//! | general without details | target node is the source node or an ancestor of it, every target detail is also a source detail, and the target is strictly less specific |
//! | additional details | same node, target adds a detail on a slot the source leaves open |
//! | wrong details | same node, some shared slot has a different value |
//! | component | target node is one of the source node's parts |

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relmatch_core::{EntityRecord, EntityTable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EXACTLY_THE_SAME: &str = "exactly_the_same";
pub const GENERAL_WITHOUT_DETAILS: &str = "general_without_details";
pub const ADDITIONAL_DETAILS: &str = "similar_with_additional_details";
pub const WRONG_DETAILS: &str = "similar_with_wrong_details";
pub const COMPONENT: &str = "component";

pub const ALL_RELATIONS: [&str; 5] = [
    EXACTLY_THE_SAME,
    GENERAL_WITHOUT_DETAILS,
    ADDITIONAL_DETAILS,
    WRONG_DETAILS,
    COMPONENT,
];

/// Attribute name of the single column in generated tables.
pub const ITEM_ATTRIBUTE: &str = "item";

const NOUNS: &str = include_str!("../data/nouns.txt");
const PARTS: &str = include_str!("../data/parts.txt");
const DETAILS: &str = include_str!("../data/details.txt");

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("corrupt corpus file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub tree_depth: usize,
    pub branching: usize,
    pub targets_count: usize,
    pub sources_count: usize,
    pub synonym_rate: f64,
    pub detail_rate: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            tree_depth: 3,
            branching: 4,
            targets_count: 500,
            sources_count: 50,
            synonym_rate: 0.3,
            detail_rate: 0.5,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), GenerateError> {
        let bad = |m: &str| Err(GenerateError::InvalidParams(m.to_string()));
        if self.tree_depth < 2 {
            return bad("tree_depth must be at least 2");
        }
        if self.branching == 0 {
            return bad("branching must be positive");
        }
        if self.targets_count == 0 || self.sources_count == 0 {
            return bad("targets_count and sources_count must be positive");
        }
        if self.tree_depth > 8 || self.branching.saturating_pow(self.tree_depth as u32) > 100_000 {
            return bad("taxonomy would exceed 100000 nodes");
        }
        for (name, rate) in [("synonym_rate", self.synonym_rate), ("detail_rate", self.detail_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetailSlot {
    pub name: String,
    /// Canonical values; mutually exclusive.
    pub values: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Category,
    Part,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub node_id: String,
    pub label: String,
    /// Canonical label first, then synonyms.
    pub surface_forms: Vec<String>,
    pub parent: Option<String>,
    pub parts: Vec<String>,
    pub detail_slots: Vec<DetailSlot>,
    pub kind: NodeKind,
    pub level: usize,
    pub sibling_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotVocabulary {
    pub name: String,
    /// Per value: canonical form first, then synonyms.
    pub values: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forest {
    pub nodes: Vec<TaxonomyNode>,
    pub slots: Vec<SlotVocabulary>,
}

impl Forest {
    pub fn node(&self, id: &str) -> Option<&TaxonomyNode> {
        // Node ids are `n<position>`.
        id.strip_prefix('n')
            .and_then(|n| n.parse::<usize>().ok())
            .and_then(|i| self.nodes.get(i))
            .filter(|n| n.node_id == id)
    }

    /// Strict ancestors, nearest first.
    pub fn ancestors(&self, id: &str) -> Vec<&TaxonomyNode> {
        let mut out = Vec::new();
        let mut current = self.node(id).and_then(|n| n.parent.as_deref());
        while let Some(pid) = current {
            let Some(parent) = self.node(pid) else { break };
            out.push(parent);
            current = parent.parent.as_deref();
        }
        out
    }

    pub fn is_strict_ancestor(&self, ancestor: &str, of: &str) -> bool {
        self.ancestors(of).iter().any(|a| a.node_id == ancestor)
    }

    /// Root-to-node path, root first.
    pub fn path(&self, id: &str) -> Vec<&TaxonomyNode> {
        let mut path = self.ancestors(id);
        path.reverse();
        if let Some(node) = self.node(id) {
            path.push(node);
        }
        path
    }

    pub fn max_level(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn max_siblings(&self) -> usize {
        self.nodes.iter().map(|n| n.sibling_index + 1).max().unwrap_or(1)
    }

    pub fn max_slot_values(&self) -> usize {
        self.slots.iter().map(|s| s.values.len()).max().unwrap_or(0)
    }

    fn slot_index(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }
}

/// A rendered node instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub node_id: String,
    /// Slot name to canonical value.
    pub details: BTreeMap<String, String>,
    pub text: String,
}

impl Entity {
    pub fn record(&self) -> EntityRecord {
        EntityRecord::new(
            self.id.clone(),
            vec![(ITEM_ATTRIBUTE.to_string(), self.text.clone())],
        )
        .expect("generated ids are non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TruthTriple {
    pub relation_id: String,
    pub source_id: String,
    pub target_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth {
    triples: BTreeSet<TruthTriple>,
}

impl GroundTruth {
    pub fn new(triples: impl IntoIterator<Item = TruthTriple>) -> Self {
        Self {
            triples: triples.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, relation_id: &str, source_id: &str, target_id: &str) {
        self.triples.insert(TruthTriple {
            relation_id: relation_id.into(),
            source_id: source_id.into(),
            target_id: target_id.into(),
        });
    }

    pub fn contains(&self, relation_id: &str, source_id: &str, target_id: &str) -> bool {
        // BTreeSet lookup needs an owned key.
        self.triples.contains(&TruthTriple {
            relation_id: relation_id.into(),
            source_id: source_id.into(),
            target_id: target_id.into(),
        })
    }

    pub fn triples(&self) -> impl Iterator<Item = &TruthTriple> {
        self.triples.iter()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn for_relation<'a>(&'a self, relation_id: &'a str) -> impl Iterator<Item = &'a TruthTriple> {
        self.triples.iter().filter(move |t| t.relation_id == relation_id)
    }

    /// (source, target) pairs that carry at least two distinct relations.
    pub fn multi_relation_pairs(&self) -> Vec<(String, String)> {
        let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for t in &self.triples {
            *counts.entry((&t.source_id, &t.target_id)).or_default() += 1;
        }
        counts
            .into_iter()
            .filter(|(_, c)| *c >= 2)
            .map(|((s, t), _)| (s.to_string(), t.to_string()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GenerateError> {
        serde_json::from_str(text).map_err(|e| GenerateError::Corrupt(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, GenerateError> {
        let text = fs::read_to_string(path).map_err(|e| GenerateError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Relations that hold between two entities under the generation rules.
pub fn relations_between(forest: &Forest, source: &Entity, target: &Entity) -> Vec<&'static str> {
    let mut out = Vec::new();
    let same_node = source.node_id == target.node_id;
    let conflict = target
        .details
        .iter()
        .any(|(slot, value)| source.details.get(slot).is_some_and(|v| v != value));
    let adds = target
        .details
        .keys()
        .any(|slot| !source.details.contains_key(slot));
    let subset = target
        .details
        .iter()
        .all(|(slot, value)| source.details.get(slot) == Some(value));

    if same_node && source.details == target.details {
        out.push(EXACTLY_THE_SAME);
    }
    let ancestor = forest.is_strict_ancestor(&target.node_id, &source.node_id);
    let fewer_details = target.details.len() < source.details.len();
    if subset && (ancestor || (same_node && fewer_details)) {
        out.push(GENERAL_WITHOUT_DETAILS);
    }
    if same_node && adds {
        out.push(ADDITIONAL_DETAILS);
    }
    if same_node && conflict {
        out.push(WRONG_DETAILS);
    }
    if forest
        .node(&source.node_id)
        .is_some_and(|n| n.parts.contains(&target.node_id))
    {
        out.push(COMPONENT);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed: u64,
    pub params: GeneratorParams,
    pub forest: Forest,
    pub sources: Vec<Entity>,
    pub targets: Vec<Entity>,
    pub truth: GroundTruth,
}

impl Corpus {
    fn table(name: &str, entities: &[Entity]) -> EntityTable {
        EntityTable::new(
            name,
            vec![ITEM_ATTRIBUTE.to_string()],
            entities.iter().map(Entity::record).collect(),
        )
        .expect("generated tables are well formed")
    }

    pub fn source_table(&self) -> EntityTable {
        Self::table("source", &self.sources)
    }

    pub fn target_table(&self) -> EntityTable {
        Self::table("target", &self.targets)
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.sources
            .iter()
            .chain(&self.targets)
            .find(|e| e.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("corpus serializes")
    }

    pub fn load(path: &Path) -> Result<Self, GenerateError> {
        let text = fs::read_to_string(path).map_err(|e| GenerateError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GenerateError::Corrupt(e.to_string()))
    }
}

fn parse_groups(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split('|').map(|s| s.trim().to_string()).collect())
        .collect()
}

fn parse_slots(text: &str) -> Vec<SlotVocabulary> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let (name, values) = l.split_once(':')?;
            Some(SlotVocabulary {
                name: name.trim().to_string(),
                values: values
                    .split(';')
                    .map(|v| v.split('|').map(|s| s.trim().to_string()).collect())
                    .collect(),
            })
        })
        .collect()
}

/// Hands out noun groups in shuffled order, suffixing a round marker once
/// the vocabulary is exhausted so labels stay unique.
struct LabelPool {
    groups: Vec<Vec<String>>,
    next: usize,
}

impl LabelPool {
    fn new(mut groups: Vec<Vec<String>>, rng: &mut ChaCha8Rng) -> Self {
        groups.shuffle(rng);
        Self { groups, next: 0 }
    }

    fn take(&mut self) -> Vec<String> {
        let round = self.next / self.groups.len();
        let group = &self.groups[self.next % self.groups.len()];
        self.next += 1;
        if round == 0 {
            group.clone()
        } else {
            group.iter().map(|f| format!("{f} mark {}", round + 1)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Mutation {
    Synonym,
    Ancestor,
    AddDetail,
    Conflict,
    ConflictAndAdd,
    Part,
    Sibling,
    Random,
}

const MUTATION_WEIGHTS: [(Mutation, u32); 8] = [
    (Mutation::Synonym, 10),
    (Mutation::Ancestor, 15),
    (Mutation::AddDetail, 15),
    (Mutation::Conflict, 15),
    (Mutation::ConflictAndAdd, 5),
    (Mutation::Part, 10),
    (Mutation::Sibling, 10),
    (Mutation::Random, 20),
];

struct Generator<'a> {
    rng: ChaCha8Rng,
    params: &'a GeneratorParams,
    forest: Forest,
}

impl Generator<'_> {
    fn build_forest(&mut self) {
        let nouns = parse_groups(NOUNS);
        let parts = parse_groups(PARTS);
        let slots = parse_slots(DETAILS);
        let mut noun_pool = LabelPool::new(nouns, &mut self.rng);
        let mut part_pool = LabelPool::new(parts.clone(), &mut self.rng);
        let b = self.params.branching;
        let mut nodes: Vec<TaxonomyNode> = Vec::new();

        let mut frontier: Vec<Option<usize>> = vec![None];
        for level in 0..self.params.tree_depth {
            let mut next = Vec::new();
            for parent in &frontier {
                for sibling_index in 0..b {
                    let id = nodes.len();
                    let forms = noun_pool.take();
                    nodes.push(TaxonomyNode {
                        node_id: format!("n{id}"),
                        label: forms[0].clone(),
                        surface_forms: forms,
                        parent: parent.map(|p| format!("n{p}")),
                        parts: Vec::new(),
                        detail_slots: Vec::new(),
                        kind: NodeKind::Category,
                        level,
                        sibling_index,
                    });
                    next.push(Some(id));
                }
            }
            frontier = next;
        }

        let part_root = nodes.len();
        nodes.push(TaxonomyNode {
            node_id: format!("n{part_root}"),
            label: "component part".into(),
            surface_forms: vec!["component part".into(), "spare part".into()],
            parent: None,
            parts: Vec::new(),
            detail_slots: Vec::new(),
            kind: NodeKind::Part,
            level: 0,
            sibling_index: b,
        });
        let part_count = (2 * b).clamp(2, parts.len());
        let mut part_ids = Vec::new();
        for sibling_index in 0..part_count {
            let id = nodes.len();
            let forms = part_pool.take();
            nodes.push(TaxonomyNode {
                node_id: format!("n{id}"),
                label: forms[0].clone(),
                surface_forms: forms,
                parent: Some(format!("n{part_root}")),
                parts: Vec::new(),
                detail_slots: Vec::new(),
                kind: NodeKind::Part,
                level: 1,
                sibling_index,
            });
            part_ids.push(format!("n{id}"));
        }

        let slot_defs: Vec<DetailSlot> = slots
            .iter()
            .map(|s| DetailSlot {
                name: s.name.clone(),
                values: s.values.iter().map(|v| v[0].clone()).collect(),
            })
            .collect();
        for node in &mut nodes {
            let wanted = match node.kind {
                NodeKind::Category => 2.min(slot_defs.len()),
                NodeKind::Part if node.parent.is_some() => 1.min(slot_defs.len()),
                NodeKind::Part => 0,
            };
            let mut chosen: Vec<usize> = rand::seq::index::sample(&mut self.rng, slot_defs.len(), wanted).into_vec();
            chosen.sort_unstable();
            node.detail_slots = chosen.into_iter().map(|i| slot_defs[i].clone()).collect();
            if node.kind == NodeKind::Category && node.level > 0 && self.rng.random_bool(0.6) {
                let n = self.rng.random_range(1..=2usize);
                node.parts = part_ids.choose_multiple(&mut self.rng, n).cloned().collect();
                node.parts.sort();
            }
        }
        self.forest = Forest { nodes, slots };
    }

    fn render(&mut self, node_id: &str, details: &BTreeMap<String, String>) -> String {
        let rate = self.params.synonym_rate;
        let mut words = Vec::new();
        for slot in &self.forest.slots {
            let Some(value) = details.get(&slot.name) else { continue };
            let forms = slot
                .values
                .iter()
                .find(|f| &f[0] == value)
                .expect("detail value is in the vocabulary");
            words.push(pick_form(&mut self.rng, forms, rate));
        }
        let node = self.forest.node(node_id).expect("node exists");
        let forms = node.surface_forms.clone();
        words.push(pick_form(&mut self.rng, &forms, rate));
        words.join(" ")
    }

    fn random_details(&mut self, node_id: &str) -> BTreeMap<String, String> {
        let slots = self.forest.node(node_id).expect("node exists").detail_slots.clone();
        let mut details = BTreeMap::new();
        for slot in slots {
            if self.rng.random_bool(self.params.detail_rate) {
                let v = slot.values.choose(&mut self.rng).expect("slot has values");
                details.insert(slot.name.clone(), v.clone());
            }
        }
        details
    }

    fn entity(&mut self, id: String, node_id: String, details: BTreeMap<String, String>) -> Entity {
        let text = self.render(&node_id, &details);
        Entity {
            id,
            node_id,
            details,
            text,
        }
    }

    fn sources(&mut self) -> Vec<Entity> {
        let candidates: Vec<String> = self
            .forest
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Category && n.level > 0)
            .map(|n| n.node_id.clone())
            .collect();
        (0..self.params.sources_count)
            .map(|i| {
                let node_id = candidates.choose(&mut self.rng).expect("taxonomy has nodes").clone();
                let details = if i == 0 && self.params.detail_rate > 0.0 {
                    // The first source carries exactly one detail so a
                    // conflicting-and-extending target can be derived from it.
                    let slot = self.forest.node(&node_id).expect("node exists").detail_slots[0].clone();
                    let value = slot.values.choose(&mut self.rng).expect("slot has values").clone();
                    BTreeMap::from([(slot.name, value)])
                } else {
                    self.random_details(&node_id)
                };
                self.entity(format!("s{}", i + 1), node_id, details)
            })
            .collect()
    }

    fn other_value(&mut self, node_id: &str, slot: &str, not: &str) -> Option<String> {
        let node = self.forest.node(node_id)?;
        let values: Vec<String> = node
            .detail_slots
            .iter()
            .find(|s| s.name == slot)?
            .values
            .iter()
            .filter(|v| v.as_str() != not)
            .cloned()
            .collect();
        values.choose(&mut self.rng).cloned()
    }

    fn add_detail(&mut self, node_id: &str, details: &mut BTreeMap<String, String>) -> bool {
        let node = self.forest.node(node_id).expect("node exists");
        let open: Vec<DetailSlot> = node
            .detail_slots
            .iter()
            .filter(|s| !details.contains_key(&s.name))
            .cloned()
            .collect();
        let Some(slot) = open.choose(&mut self.rng) else {
            return false;
        };
        let value = slot.values.choose(&mut self.rng).expect("slot has values").clone();
        details.insert(slot.name.clone(), value);
        true
    }

    fn conflict(&mut self, node_id: &str, details: &mut BTreeMap<String, String>) -> bool {
        let specified: Vec<(String, String)> =
            details.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let Some((slot, value)) = specified.choose(&mut self.rng).cloned() else {
            return false;
        };
        match self.other_value(node_id, &slot, &value) {
            Some(other) => {
                details.insert(slot, other);
                true
            }
            None => false,
        }
    }

    fn mutate(&mut self, source: &Entity, mutation: Mutation) -> (String, BTreeMap<String, String>) {
        let node_id = source.node_id.clone();
        let mut details = source.details.clone();
        match mutation {
            Mutation::Synonym => (node_id, details),
            Mutation::Ancestor => {
                let ancestors: Vec<String> = self
                    .forest
                    .ancestors(&node_id)
                    .iter()
                    .map(|a| a.node_id.clone())
                    .collect();
                if !details.is_empty() && (ancestors.is_empty() || self.rng.random_bool(0.3)) {
                    (node_id, BTreeMap::new())
                } else {
                    let target = ancestors.choose(&mut self.rng).cloned().unwrap_or(node_id);
                    // Sometimes keep the source details the ancestor can carry
                    // ("small car" -> "small vehicle").
                    let kept = if self.rng.random_bool(0.5) {
                        let slots = &self.forest.node(&target).expect("node exists").detail_slots;
                        details
                            .into_iter()
                            .filter(|(slot, _)| slots.iter().any(|s| &s.name == slot))
                            .collect()
                    } else {
                        BTreeMap::new()
                    };
                    (target, kept)
                }
            }
            Mutation::AddDetail => {
                if self.rng.random_bool(0.5) {
                    details.clear();
                }
                if !self.add_detail(&node_id, &mut details) {
                    self.conflict(&node_id, &mut details);
                }
                (node_id, details)
            }
            Mutation::Conflict => {
                if !self.conflict(&node_id, &mut details) {
                    self.add_detail(&node_id, &mut details);
                }
                (node_id, details)
            }
            Mutation::ConflictAndAdd => {
                self.conflict(&node_id, &mut details);
                self.add_detail(&node_id, &mut details);
                (node_id, details)
            }
            Mutation::Part => {
                let parts = self.forest.node(&node_id).expect("node exists").parts.clone();
                let part = parts.choose(&mut self.rng).cloned().unwrap_or_else(|| {
                    let all: Vec<String> = self
                        .forest
                        .nodes
                        .iter()
                        .filter(|n| n.kind == NodeKind::Part && n.parent.is_some())
                        .map(|n| n.node_id.clone())
                        .collect();
                    all.choose(&mut self.rng).expect("part nodes exist").clone()
                });
                let details = self.random_details(&part);
                (part, details)
            }
            Mutation::Sibling => {
                let parent = self.forest.node(&node_id).and_then(|n| n.parent.clone());
                let siblings: Vec<String> = self
                    .forest
                    .nodes
                    .iter()
                    .filter(|n| n.parent == parent && n.node_id != node_id)
                    .map(|n| n.node_id.clone())
                    .collect();
                let sibling = siblings.choose(&mut self.rng).cloned().unwrap_or(node_id);
                let details = self.random_details(&sibling);
                (sibling, details)
            }
            Mutation::Random => {
                let node = self.forest.nodes.choose(&mut self.rng).expect("nodes exist").node_id.clone();
                let details = self.random_details(&node);
                (node, details)
            }
        }
    }

    fn targets(&mut self, sources: &[Entity]) -> Vec<Entity> {
        let mut targets = Vec::with_capacity(self.params.targets_count);
        for i in 0..self.params.targets_count {
            let (anchor, mutation) = if i == 0 && self.params.detail_rate > 0.0 {
                (&sources[0], Mutation::ConflictAndAdd)
            } else {
                let anchor = sources.choose(&mut self.rng).expect("sources exist");
                let mutation = MUTATION_WEIGHTS
                    .choose_weighted(&mut self.rng, |(_, w)| *w)
                    .expect("weights are positive")
                    .0;
                (anchor, mutation)
            };
            let (node_id, details) = self.mutate(anchor, mutation);
            targets.push(self.entity(format!("t{}", i + 1), node_id, details));
        }
        targets
    }
}

fn pick_form(rng: &mut ChaCha8Rng, forms: &[String], synonym_rate: f64) -> String {
    if forms.len() > 1 && rng.random_bool(synonym_rate) {
        forms[rng.random_range(1..forms.len())].clone()
    } else {
        forms[0].clone()
    }
}

/// Generates a corpus; identical (seed, params) always give identical output.
pub fn generate_taxonomy(seed: u64, params: &GeneratorParams) -> Result<Corpus, GenerateError> {
    params.validate()?;
    let mut generator = Generator {
        rng: ChaCha8Rng::seed_from_u64(seed),
        params,
        forest: Forest {
            nodes: Vec::new(),
            slots: Vec::new(),
        },
    };
    generator.build_forest();
    let sources = generator.sources();
    let targets = generator.targets(&sources);

    let mut truth = GroundTruth::default();
    for s in &sources {
        for t in &targets {
            for rel in relations_between(&generator.forest, s, t) {
                truth.insert(rel, &s.id, &t.id);
            }
        }
    }
    Ok(Corpus {
        seed,
        params: *params,
        forest: generator.forest,
        sources,
        targets,
        truth,
    })
}

/// Index of `slot` in the forest's global slot order.
pub fn slot_position(forest: &Forest, slot: &str) -> Option<usize> {
    forest.slot_index(slot)
}

/// Maps every entity text in the corpus to its entity.
pub fn text_lookup(corpus: &Corpus) -> HashMap<&str, &Entity> {
    corpus
        .sources
        .iter()
        .chain(&corpus.targets)
        .map(|e| (e.text.as_str(), e))
        .collect()
}
