//! Precision, recall and retrieval coverage against generated ground truth.
//!
//! The examined set of a (source, relation) pair is every target the
//! classifier saw for it. Retrieval-bounded recall only counts truth triples
//! whose target was examined for that pair; retrieval recall is the fraction
//! of truth triples that were examined at all.

use std::collections::{BTreeMap, BTreeSet};

use relmatch_core::RelationVerdict;
use serde::{Serialize, Serializer};

use crate::taxonomy::GroundTruth;

/// A ratio, or `"n/a"` when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Value(f64),
    NotApplicable,
}

impl Score {
    pub fn ratio(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            Score::NotApplicable
        } else {
            Score::Value(numerator as f64 / denominator as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Score::Value(v) => Some(v),
            Score::NotApplicable => None,
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Score::Value(v) => serializer.serialize_f64(*v),
            Score::NotApplicable => serializer.serialize_str("n/a"),
        }
    }
}

fn f1(precision: Score, recall: Score) -> Score {
    match (precision, recall) {
        (Score::Value(p), Score::Value(r)) if p + r > 0.0 => Score::Value(2.0 * p * r / (p + r)),
        (Score::Value(_), Score::Value(_)) => Score::Value(0.0),
        (Score::NotApplicable, Score::Value(_)) => Score::Value(0.0),
        (_, Score::NotApplicable) => Score::NotApplicable,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationMetrics {
    pub truth_pairs: usize,
    pub predicted: usize,
    pub correct: usize,
    pub precision: Score,
    pub recall: Score,
    pub f1: Score,
    pub examined_truth_pairs: usize,
    pub retrieval_bounded_recall: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub relations: BTreeMap<String, RelationMetrics>,
    pub truth_triples: usize,
    pub examined_truth_triples: usize,
    pub retrieval_recall: Score,
}

/// Targets examined per (source_id, relation_id).
pub type Examined = BTreeMap<(String, String), BTreeSet<String>>;

pub fn examined_from_verdicts<'a>(verdicts: impl IntoIterator<Item = &'a RelationVerdict>) -> Examined {
    let mut out = Examined::new();
    for v in verdicts {
        out.entry((v.source_id.clone(), v.relation_id.clone()))
            .or_default()
            .insert(v.target_id.clone());
    }
    out
}

/// Scores `verdicts` against the truth triples of `relations` restricted to
/// `sources`.
pub fn compute_metrics(
    verdicts: &[RelationVerdict],
    truth: &GroundTruth,
    examined: &Examined,
    relations: &[&str],
    sources: &BTreeSet<String>,
) -> Metrics {
    let predicted: BTreeSet<(&str, &str, &str)> = verdicts
        .iter()
        .filter(|v| v.decision)
        .map(|v| (v.relation_id.as_str(), v.source_id.as_str(), v.target_id.as_str()))
        .collect();
    let was_examined = |rel: &str, source: &str, target: &str| {
        examined
            .get(&(source.to_string(), rel.to_string()))
            .is_some_and(|set| set.contains(target))
    };

    let mut out = BTreeMap::new();
    let (mut total, mut total_examined) = (0, 0);
    for &rel in relations {
        let truth_set: BTreeSet<(&str, &str)> = truth
            .for_relation(rel)
            .filter(|t| sources.contains(&t.source_id))
            .map(|t| (t.source_id.as_str(), t.target_id.as_str()))
            .collect();
        let predicted_set: BTreeSet<(&str, &str)> = predicted
            .iter()
            .filter(|(r, _, _)| *r == rel)
            .map(|(_, s, t)| (*s, *t))
            .collect();
        let correct = predicted_set.intersection(&truth_set).count();
        let examined_truth: Vec<&(&str, &str)> = truth_set
            .iter()
            .filter(|(s, t)| was_examined(rel, s, t))
            .collect();
        let confirmed_examined = examined_truth.iter().filter(|p| predicted_set.contains(p)).count();
        let precision = Score::ratio(correct, predicted_set.len());
        let recall = Score::ratio(correct, truth_set.len());
        total += truth_set.len();
        total_examined += examined_truth.len();
        out.insert(
            rel.to_string(),
            RelationMetrics {
                truth_pairs: truth_set.len(),
                predicted: predicted_set.len(),
                correct,
                precision,
                recall,
                f1: f1(precision, recall),
                examined_truth_pairs: examined_truth.len(),
                retrieval_bounded_recall: Score::ratio(confirmed_examined, examined_truth.len()),
            },
        );
    }
    Metrics {
        relations: out,
        truth_triples: total,
        examined_truth_triples: total_examined,
        retrieval_recall: Score::ratio(total_examined, total),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use relmatch_core::Provenance;

    fn verdict(rel: &str, s: &str, t: &str, decision: bool) -> RelationVerdict {
        RelationVerdict {
            relation_id: rel.into(),
            source_id: s.into(),
            target_id: t.into(),
            decision,
            rationale: String::new(),
            provenance: Provenance::Oracle,
        }
    }

    fn truth(triples: &[(&str, &str, &str)]) -> GroundTruth {
        let mut t = GroundTruth::default();
        for (r, s, x) in triples {
            t.insert(r, s, x);
        }
        t
    }

    fn sources() -> BTreeSet<String> {
        ["s1".to_string()].into()
    }

    #[test]
    fn perfect_verdicts_score_one() {
        let gt = truth(&[("r", "s1", "a"), ("r", "s1", "b")]);
        let v = vec![verdict("r", "s1", "a", true), verdict("r", "s1", "b", true)];
        let m = compute_metrics(&v, &gt, &examined_from_verdicts(&v), &["r"], &sources());
        let r = &m.relations["r"];
        assert_eq!((r.precision, r.recall, r.f1), (Score::Value(1.0), Score::Value(1.0), Score::Value(1.0)));
        assert_eq!(m.retrieval_recall, Score::Value(1.0));
    }

    #[test]
    fn empty_verdicts_have_no_precision() {
        let gt = truth(&[("r", "s1", "a")]);
        let m = compute_metrics(&[], &gt, &Examined::new(), &["r"], &sources());
        let r = &m.relations["r"];
        assert_eq!(r.precision, Score::NotApplicable);
        assert_eq!(r.recall, Score::Value(0.0));
        assert_eq!(r.retrieval_bounded_recall, Score::NotApplicable);
        assert_eq!(serde_json::to_string(&r.precision).unwrap(), "\"n/a\"");
    }

    #[test]
    fn bounded_recall_ignores_unexamined_truth() {
        let gt = truth(&[("r", "s1", "a"), ("r", "s1", "far")]);
        let v = vec![verdict("r", "s1", "a", true), verdict("r", "s1", "b", false)];
        let m = compute_metrics(&v, &gt, &examined_from_verdicts(&v), &["r"], &sources());
        let r = &m.relations["r"];
        assert_eq!(r.recall, Score::Value(0.5));
        assert_eq!(r.retrieval_bounded_recall, Score::Value(1.0));
        assert_eq!(m.retrieval_recall, Score::Value(0.5));
    }
}
