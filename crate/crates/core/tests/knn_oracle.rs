//! Exact k-NN against a brute-force full sort.

use proptest::prelude::*;
use relmatch_core::{EmbeddingVector, IndexError, VectorIndex};

/// Full ranking by (squared distance, id), computed independently.
fn brute_force(entries: &[(String, Vec<f32>)], probe: &[f32]) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = entries
        .iter()
        .map(|(id, v)| {
            let sq: f64 = v
                .iter()
                .zip(probe)
                .map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2))
                .sum();
            (id.clone(), sq)
        })
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.into_iter().map(|(id, sq)| (id, sq.sqrt())).collect()
}

fn build(entries: &[(String, Vec<f32>)]) -> VectorIndex {
    VectorIndex::build(
        entries
            .iter()
            .map(|(id, v)| (id.clone(), EmbeddingVector::new(v.clone()).unwrap()))
            .collect(),
    )
    .unwrap()
}

/// Coordinates drawn from a tiny grid so equal distances are common.
fn entries(dim: usize, max: usize, quantized: bool) -> impl Strategy<Value = Vec<(String, Vec<f32>)>> {
    let coord = if quantized {
        (-2i32..=2).prop_map(|x| x as f32 * 0.5).boxed()
    } else {
        (-10.0f32..10.0).boxed()
    };
    proptest::collection::vec(proptest::collection::vec(coord, dim), 1..max).prop_map(|vs| {
        vs.into_iter()
            .enumerate()
            // Unique ids, deliberately not in insertion order.
            .map(|(i, v)| (format!("e{:03}", (i * 37) % 1000), v))
            .collect::<Vec<_>>()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pages_match_brute_force(
        es in entries(4, 60, false),
        probe in proptest::collection::vec(-10.0f32..10.0, 4),
        k in 1usize..12,
    ) {
        let index = build(&es);
        let expected = brute_force(&es, &probe);
        let probe = EmbeddingVector::new(probe).unwrap();
        let mut offset = 0;
        while offset < es.len() + k {
            let batch = index.query_topk(&probe, k, offset).unwrap();
            let want: Vec<_> = expected.iter().skip(offset).take(k).cloned().collect();
            let got: Vec<_> = batch.candidates.iter().map(|c| (c.entity_id.clone(), c.distance)).collect();
            prop_assert_eq!(got, want);
            prop_assert_eq!(batch.batch_index, offset / k);
            offset += k;
        }
    }

    #[test]
    fn ties_break_by_ascending_id(
        es in entries(2, 40, true),
        probe in proptest::collection::vec((-2i32..=2).prop_map(|x| x as f32 * 0.5), 2),
        k in 1usize..8,
    ) {
        let index = build(&es);
        let expected = brute_force(&es, &probe);
        let probe = EmbeddingVector::new(probe).unwrap();
        let mut ranked = Vec::new();
        for page in 0..es.len().div_ceil(k) {
            ranked.extend(index.query_topk(&probe, k, page * k).unwrap().candidates);
        }
        let got: Vec<_> = ranked.iter().map(|c| (c.entity_id.clone(), c.distance)).collect();
        prop_assert_eq!(got, expected);
    }
}

#[test]
fn invalid_queries_are_rejected() {
    let index = build(&[("a".into(), vec![0.0, 1.0])]);
    let probe = EmbeddingVector::new(vec![0.0, 0.0]).unwrap();
    assert!(matches!(index.query_topk(&probe, 0, 0), Err(IndexError::InvalidK)));
    let wrong = EmbeddingVector::new(vec![0.0]).unwrap();
    assert!(matches!(
        index.query_topk(&wrong, 1, 0),
        Err(IndexError::DimensionMismatch { .. })
    ));
    assert!(index.query_topk(&probe, 3, 5).unwrap().candidates.is_empty());
}

#[test]
fn build_rejects_bad_input() {
    assert!(matches!(VectorIndex::build(vec![]), Err(IndexError::EmptyInput)));
    let v = |x: Vec<f32>| EmbeddingVector::new(x).unwrap();
    assert!(matches!(
        VectorIndex::build(vec![("a".into(), v(vec![1.0])), ("a".into(), v(vec![2.0]))]),
        Err(IndexError::DuplicateId(_))
    ));
    assert!(matches!(
        VectorIndex::build(vec![("a".into(), v(vec![1.0])), ("b".into(), v(vec![2.0, 3.0]))]),
        Err(IndexError::DimensionMismatch { .. })
    ));
}
