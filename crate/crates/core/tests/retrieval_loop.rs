//! The adaptive batch loop against a hand-simulated recurrence.

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;

use proptest::prelude::*;
use relmatch_core::classifier::match_source;
use relmatch_core::prompt::VERDICTS_MARKER;
use relmatch_core::{
    embed, embed_table, match_relation, Backend, BackendError, BackendResponse, ClassificationRequest,
    Classifier, EntityRecord, EntityTable, LocalHashEmbedder, MatchContext, MemoryCache, Provenance,
    RelationCatalog, RetrievalPolicy, TargetLookup, VectorIndex,
};

/// Confirms the first `schedule[n]` candidates on the n-th call per relation.
struct Scripted {
    schedule: Vec<usize>,
    calls: Mutex<HashMap<String, usize>>,
}

impl Backend for Scripted {
    fn model_hint(&self) -> String {
        format!("scripted{:?}", self.schedule)
    }
    fn complete(&self, request: &ClassificationRequest) -> Result<BackendResponse, BackendError> {
        let mut calls = self.calls.lock().unwrap();
        let n = calls.entry(request.relation_id.clone()).or_default();
        let yes = self.schedule.get(*n).copied().unwrap_or(0);
        *n += 1;
        let mut text = format!("{VERDICTS_MARKER}\n");
        for (i, id) in request.candidate_ids.iter().enumerate() {
            text.push_str(&format!("{id}: {}\n", if i < yes { "YES" } else { "NO" }));
        }
        Ok(BackendResponse {
            raw_text: text,
            provenance: Provenance::Oracle,
        })
    }
}

/// Expected number of fetched batches, by direct simulation.
fn simulate(schedule: &[usize], rows: usize, k: usize, threshold: f64, max_batches: usize) -> usize {
    let mut fetched = 0;
    let mut remaining = rows;
    while fetched < max_batches && remaining > 0 {
        let size = remaining.min(k);
        remaining -= size;
        let yes = schedule.get(fetched).copied().unwrap_or(0).min(size);
        fetched += 1;
        if (yes as f64) < threshold * size as f64 {
            break;
        }
    }
    fetched
}

fn table(prefix: &str, n: usize) -> EntityTable {
    let records = (0..n)
        .map(|i| EntityRecord::new(format!("{prefix}{i}"), vec![("item".into(), format!("{prefix} item {i}"))]).unwrap())
        .collect();
    EntityTable::new(prefix, vec!["item".into()], records).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn batch_counts_follow_the_recurrence(
        schedule in proptest::collection::vec(0usize..=10, 0..8),
        rows in 1usize..80,
        k in 1usize..12,
        threshold in prop_oneof![Just(0.0), Just(0.3), Just(1.0), 0.0f64..=1.0],
        max_batches in 1usize..8,
    ) {
        let provider = LocalHashEmbedder::new(6, 2);
        let targets = table("t", rows);
        let index = VectorIndex::build(embed_table(&targets, &provider).unwrap()).unwrap();
        let lookup = TargetLookup::new(&targets);
        let backend = Scripted { schedule: schedule.clone(), calls: Mutex::new(HashMap::new()) };
        let cache = MemoryCache::new();
        let policy = RetrievalPolicy::new(k, threshold, max_batches).unwrap();
        let ctx = MatchContext { targets: &lookup, index: &index, classifier: Classifier::new(&backend, &cache), policy };
        let source = EntityRecord::new("s", vec![("item".into(), "probe".into())]).unwrap();
        let relation = RelationCatalog::esg_default().relations()[1].clone();
        let out = match_relation(&source, embed("item: probe", &provider).unwrap(), &relation, &ctx);

        // Recompute the threshold test the way the simulation does.
        let expected = simulate(&schedule, rows, k, threshold, max_batches);
        prop_assert_eq!(out.stats.batches_fetched, expected);
        prop_assert!(out.stats.batches_fetched <= max_batches.min(rows.div_ceil(k)));
        for pair in out.stats.per_batch.windows(2) {
            prop_assert!(pair[0].confirmed as f64 >= threshold * pair[0].size as f64);
        }
    }
}

#[test]
fn verdicts_cover_only_retrieved_candidates() {
    let provider = LocalHashEmbedder::new(6, 9);
    let targets = table("t", 57);
    let index = VectorIndex::build(embed_table(&targets, &provider).unwrap()).unwrap();
    let lookup = TargetLookup::new(&targets);
    let backend = Scripted {
        schedule: vec![4, 3, 2],
        calls: Mutex::new(HashMap::new()),
    };
    let cache = MemoryCache::new();
    let ctx = MatchContext {
        targets: &lookup,
        index: &index,
        classifier: Classifier::new(&backend, &cache),
        policy: RetrievalPolicy::default(),
    };
    let source = EntityRecord::new("s", vec![("item".into(), "probe".into())]).unwrap();
    let catalog = RelationCatalog::esg_default();
    let out = match_source(&source, &["item".to_string()], &catalog, &provider, &ctx);
    let retrieved: HashSet<&str> = out.retrieved.iter().map(|c| c.entity_id.as_str()).collect();
    assert_eq!(retrieved.len(), 30);
    assert!(out.verdicts().all(|v| retrieved.contains(v.target_id.as_str())));
    for rel in &out.relations {
        assert_eq!(rel.stats.batches_fetched, 3);
        assert_eq!(
            rel.stats.per_batch.iter().map(|b| b.confirmed).collect::<Vec<_>>(),
            [4, 3, 2]
        );
    }
}
