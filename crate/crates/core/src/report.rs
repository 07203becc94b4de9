//! Analyst-facing match report.

use std::collections::HashMap;

use serde::Serialize;

use crate::cascade::{resolve, CascadeError};
use crate::classifier::{MatchRun, RetrievalPolicy, SourceOutcome};
use crate::model::{MatchStatus, RelationCatalog, ResolvedMatch};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunInfo {
    pub source_table: String,
    pub target_rows: usize,
    pub embedding_provider: String,
    pub embedding_dimension: usize,
    pub backend_model: String,
    pub k: usize,
    pub continuation_threshold: f64,
    pub max_batches: usize,
    pub relations: Vec<String>,
}

impl RunInfo {
    pub fn policy(&self) -> RetrievalPolicy {
        RetrievalPolicy {
            k: self.k,
            continuation_threshold: self.continuation_threshold,
            max_batches: self.max_batches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfirmedEntry {
    pub target_id: String,
    pub distance: f64,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureEntry {
    pub kind: String,
    pub batch_index: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationSection {
    pub relation_id: String,
    pub display_name: String,
    pub priority_rank: u32,
    pub confirmed: Vec<ConfirmedEntry>,
    pub batches_fetched: usize,
    pub candidates_examined: usize,
    pub confirmed_per_batch: Vec<usize>,
    pub failure: Option<FailureEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityStats {
    pub batches_fetched: usize,
    pub candidates_examined: usize,
    pub failed_relations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityReport {
    pub source_id: String,
    pub resolutions: ResolvedMatch,
    pub verdicts_by_relation: Vec<RelationSection>,
    pub stats: EntityStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub run: RunInfo,
    pub entities: Vec<EntityReport>,
}

fn entity_report(
    outcome: &SourceOutcome,
    catalog: &RelationCatalog,
) -> Result<EntityReport, CascadeError> {
    let distances: HashMap<String, f64> = outcome.distances();
    let verdicts: Vec<_> = outcome.verdicts().cloned().collect();
    let resolutions = resolve(&outcome.source_id, &verdicts, catalog, &distances)?;
    let sections = catalog
        .relations()
        .iter()
        .zip(&outcome.relations)
        .map(|(spec, rel)| {
            let mut confirmed: Vec<ConfirmedEntry> = rel
                .verdicts
                .iter()
                .filter(|v| v.decision)
                .map(|v| ConfirmedEntry {
                    target_id: v.target_id.clone(),
                    distance: distances.get(&v.target_id).copied().unwrap_or(f64::NAN),
                    rationale: v.rationale.clone(),
                })
                .collect();
            confirmed.sort_by(|a, b| {
                a.distance
                    .total_cmp(&b.distance)
                    .then_with(|| a.target_id.cmp(&b.target_id))
            });
            RelationSection {
                relation_id: spec.id.clone(),
                display_name: spec.display_name.clone(),
                priority_rank: spec.priority_rank,
                confirmed,
                batches_fetched: rel.stats.batches_fetched,
                candidates_examined: rel.stats.candidates_examined,
                confirmed_per_batch: rel.stats.per_batch.iter().map(|b| b.confirmed).collect(),
                failure: rel.stats.failure.as_ref().map(|f| FailureEntry {
                    kind: f.kind.to_string(),
                    batch_index: f.batch_index,
                    message: f.message.clone(),
                }),
            }
        })
        .collect::<Vec<_>>();
    Ok(EntityReport {
        source_id: outcome.source_id.clone(),
        resolutions,
        stats: EntityStats {
            batches_fetched: outcome.batches_fetched(),
            candidates_examined: outcome.candidates_examined(),
            failed_relations: sections.iter().filter(|s| s.failure.is_some()).count(),
        },
        verdicts_by_relation: sections,
    })
}

impl MatchReport {
    pub fn build(
        run: RunInfo,
        outcome: &MatchRun,
        catalog: &RelationCatalog,
    ) -> Result<Self, CascadeError> {
        let entities = outcome
            .sources
            .iter()
            .map(|s| entity_report(s, catalog))
            .collect::<Result<_, _>>()?;
        Ok(Self { run, entities })
    }

    /// Pretty JSON with keys in sorted order.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "relmatch report: {} source entities, {} relations, k={}, threshold={}, max_batches={}\n",
            self.entities.len(),
            self.run.relations.len(),
            self.run.k,
            self.run.continuation_threshold,
            self.run.max_batches
        );
        for entity in &self.entities {
            let res = &entity.resolutions;
            let outcome = match res.status {
                MatchStatus::Unresolved => "UNRESOLVED".to_string(),
                MatchStatus::Resolved | MatchStatus::ComponentOnly => format!(
                    "{} via {} -> {}",
                    if res.status == MatchStatus::Resolved {
                        "RESOLVED"
                    } else {
                        "COMPONENT ONLY"
                    },
                    res.relation_id.as_deref().unwrap_or("?"),
                    res.target_ids.join(", ")
                ),
            };
            out.push_str(&format!("\n[{}] {}\n", entity.source_id, outcome));
            for section in &entity.verdicts_by_relation {
                let targets: Vec<String> = section
                    .confirmed
                    .iter()
                    .map(|c| format!("{} ({:.4})", c.target_id, c.distance))
                    .collect();
                out.push_str(&format!(
                    "  {}. {}: {}{}\n",
                    section.priority_rank,
                    section.display_name,
                    if targets.is_empty() {
                        "-".to_string()
                    } else {
                        targets.join(", ")
                    },
                    section
                        .failure
                        .as_ref()
                        .map(|f| format!("  [FAILED: {}]", f.kind))
                        .unwrap_or_default()
                ));
            }
            out.push_str(&format!(
                "  retrieval: {} batch(es), {} candidate(s)\n",
                entity.stats.batches_fetched, entity.stats.candidates_examined
            ));
        }
        out
    }
}
