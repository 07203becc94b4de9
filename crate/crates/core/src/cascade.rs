//! Relation-priority cascade: turns a verdict set into one resolved match.
//!
//! Relations are visited by ascending `priority_rank`; the first relation
//! with at least one confirmed target wins. Within that relation a
//! single-multiplicity relation yields its most specific target, while a
//! many-multiplicity relation (components) yields every confirmed target.
//! Specificity is approximated by retrieval distance; callers can plug in a
//! different ordering through [`resolve_with`].

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::model::{
    MatchStatus, Multiplicity, RelationCatalog, RelationSpec, RelationVerdict, ResolvedMatch,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CascadeError {
    #[error("confirmed target `{target_id}` of `{source_id}` has no retrieval distance")]
    MissingDistance { source_id: String, target_id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfirmedTarget {
    pub target_id: String,
    pub distance: f64,
}

/// Orders targets from most to least preferred.
pub type SpecificityOrder = dyn Fn(&ConfirmedTarget, &ConfirmedTarget) -> Ordering + Send + Sync;

/// Smallest distance first, ties by ascending id.
pub fn by_distance(a: &ConfirmedTarget, b: &ConfirmedTarget) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.target_id.cmp(&b.target_id))
}

pub fn select_within_rank(relation: &RelationSpec, confirmed: &[ConfirmedTarget]) -> Vec<String> {
    select_with(relation, confirmed, &by_distance)
}

fn select_with(
    relation: &RelationSpec,
    confirmed: &[ConfirmedTarget],
    order: &SpecificityOrder,
) -> Vec<String> {
    assert!(!confirmed.is_empty(), "selection needs a confirmed target");
    let mut sorted: Vec<&ConfirmedTarget> = confirmed.iter().collect();
    sorted.sort_by(|a, b| order(a, b));
    let take = match relation.multiplicity {
        Multiplicity::Single => 1,
        Multiplicity::Many => sorted.len(),
    };
    sorted
        .into_iter()
        .take(take)
        .map(|t| t.target_id.clone())
        .collect()
}

pub fn resolve(
    source_id: &str,
    verdicts: &[RelationVerdict],
    catalog: &RelationCatalog,
    distances: &HashMap<String, f64>,
) -> Result<ResolvedMatch, CascadeError> {
    resolve_with(source_id, verdicts, catalog, distances, &by_distance)
}

pub fn resolve_with(
    source_id: &str,
    verdicts: &[RelationVerdict],
    catalog: &RelationCatalog,
    distances: &HashMap<String, f64>,
    order: &SpecificityOrder,
) -> Result<ResolvedMatch, CascadeError> {
    for relation in catalog.relations() {
        let targets: BTreeSet<&str> = verdicts
            .iter()
            .filter(|v| v.decision && v.source_id == source_id && v.relation_id == relation.id)
            .map(|v| v.target_id.as_str())
            .collect();
        if targets.is_empty() {
            continue;
        }
        let confirmed = targets
            .iter()
            .map(|id| {
                distances
                    .get(*id)
                    .map(|d| ConfirmedTarget {
                        target_id: id.to_string(),
                        distance: *d,
                    })
                    .ok_or_else(|| CascadeError::MissingDistance {
                        source_id: source_id.to_string(),
                        target_id: id.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let target_ids = select_with(relation, &confirmed, order);
        let (status, selection_reason) = match relation.multiplicity {
            Multiplicity::Single => (
                MatchStatus::Resolved,
                format!(
                    "first relation with confirmed targets in priority order: {} (rank {}); \
                     most specific of {} confirmed target(s) by retrieval distance",
                    relation.display_name,
                    relation.priority_rank,
                    confirmed.len()
                ),
            ),
            Multiplicity::Many => (
                MatchStatus::ComponentOnly,
                format!(
                    "only {} (rank {}) has confirmed targets; all {} listed for manual aggregation",
                    relation.display_name,
                    relation.priority_rank,
                    confirmed.len()
                ),
            ),
        };
        return Ok(ResolvedMatch {
            source_id: source_id.to_string(),
            status,
            relation_id: Some(relation.id.clone()),
            target_ids,
            selection_reason,
        });
    }
    Ok(ResolvedMatch {
        source_id: source_id.to_string(),
        status: MatchStatus::Unresolved,
        relation_id: None,
        target_ids: Vec::new(),
        selection_reason: "no relation has a confirmed target".into(),
    })
}
