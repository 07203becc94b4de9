use std::collections::HashMap;

use proptest::prelude::*;
use relmatch_core::cascade::resolve;
use relmatch_core::{MatchStatus, Provenance, RelationCatalog, RelationVerdict};

const TARGETS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

/// Reference resolver: scan ranks 1..=5 in order; take the nearest
/// confirmed target (id ascending on ties), or all of them for components.
fn reference(verdicts: &[(usize, usize, bool)], distances: &[f64]) -> (MatchStatus, Option<String>, Vec<String>) {
    let catalog = RelationCatalog::esg_default();
    for (r, spec) in catalog.relations().iter().enumerate() {
        let mut hits: Vec<usize> = verdicts
            .iter()
            .filter(|(rel, _, yes)| *rel == r && *yes)
            .map(|(_, t, _)| *t)
            .collect();
        hits.sort();
        hits.dedup();
        if hits.is_empty() {
            continue;
        }
        hits.sort_by(|x, y| distances[*x].partial_cmp(&distances[*y]).unwrap().then(TARGETS[*x].cmp(TARGETS[*y])));
        let ids: Vec<String> = hits.iter().map(|t| TARGETS[*t].to_string()).collect();
        return if spec.id == "component" {
            (MatchStatus::ComponentOnly, Some(spec.id.clone()), ids)
        } else {
            (MatchStatus::Resolved, Some(spec.id.clone()), ids[..1].to_vec())
        };
    }
    (MatchStatus::Unresolved, None, vec![])
}

fn to_verdicts(raw: &[(usize, usize, bool)]) -> Vec<RelationVerdict> {
    let catalog = RelationCatalog::esg_default();
    raw.iter()
        .map(|(r, t, yes)| RelationVerdict {
            relation_id: catalog.relations()[*r].id.clone(),
            source_id: "s".into(),
            target_id: TARGETS[*t].into(),
            decision: *yes,
            rationale: String::new(),
            provenance: Provenance::Oracle,
        })
        .collect()
}

fn distance_map(d: &[f64], scale: f64) -> HashMap<String, f64> {
    TARGETS.iter().zip(d).map(|(t, x)| (t.to_string(), x * scale)).collect()
}

fn raw_verdicts() -> impl Strategy<Value = Vec<(usize, usize, bool)>> {
    proptest::collection::vec((0usize..5, 0usize..6, any::<bool>()), 0..20)
}

fn raw_distances() -> impl Strategy<Value = Vec<f64>> {
    // Few distinct values so ties are exercised.
    proptest::collection::vec((0u8..4).prop_map(|x| f64::from(x) * 0.25), 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn agrees_with_reference(raw in raw_verdicts(), d in raw_distances()) {
        let got = resolve("s", &to_verdicts(&raw), &RelationCatalog::esg_default(), &distance_map(&d, 1.0)).unwrap();
        prop_assert_eq!((got.status, got.relation_id, got.target_ids), reference(&raw, &d));
    }

    #[test]
    fn scaling_distances_keeps_the_choice(raw in raw_verdicts(), d in raw_distances(), scale in 0.001f64..1000.0) {
        let catalog = RelationCatalog::esg_default();
        let a = resolve("s", &to_verdicts(&raw), &catalog, &distance_map(&d, 1.0)).unwrap();
        let b = resolve("s", &to_verdicts(&raw), &catalog, &distance_map(&d, scale)).unwrap();
        prop_assert_eq!(a.target_ids, b.target_ids);
    }

    #[test]
    fn better_rank_takes_over_worse_rank_does_not(
        raw in raw_verdicts(),
        d in raw_distances(),
        extra_rel in 0usize..5,
        extra_target in 0usize..6,
    ) {
        let catalog = RelationCatalog::esg_default();
        let dm = distance_map(&d, 1.0);
        let before = resolve("s", &to_verdicts(&raw), &catalog, &dm).unwrap();
        let mut more = raw.clone();
        more.push((extra_rel, extra_target, true));
        let after = resolve("s", &to_verdicts(&more), &catalog, &dm).unwrap();
        let rank = |id: &Option<String>| id.as_ref().map(|id| catalog.get(id).unwrap().priority_rank).unwrap_or(u32::MAX);
        let extra_rank = catalog.relations()[extra_rel].priority_rank;
        if extra_rank < rank(&before.relation_id) {
            prop_assert_eq!(rank(&after.relation_id), extra_rank);
        } else if extra_rank > rank(&before.relation_id) {
            prop_assert_eq!(after, before);
        }
    }

    #[test]
    fn resolved_rank_is_minimal(raw in raw_verdicts(), d in raw_distances()) {
        let catalog = RelationCatalog::esg_default();
        let got = resolve("s", &to_verdicts(&raw), &catalog, &distance_map(&d, 1.0)).unwrap();
        let min_rank = raw.iter().filter(|(_, _, y)| *y).map(|(r, _, _)| catalog.relations()[*r].priority_rank).min();
        prop_assert_eq!(got.relation_id.map(|id| catalog.get(&id).unwrap().priority_rank), min_rank);
    }
}
