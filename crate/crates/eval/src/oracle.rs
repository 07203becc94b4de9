//! Deterministic stand-ins for the language model.

use std::collections::HashMap;
use std::sync::Mutex;

use relmatch_core::prompt::{NAIVE_MATCH_RELATION, VERDICTS_MARKER};
use relmatch_core::{Backend, BackendError, BackendResponse, ClassificationRequest, Provenance};

use crate::taxonomy::{GroundTruth, EXACTLY_THE_SAME};

fn render(request: &ClassificationRequest, decide: impl Fn(usize, &str) -> bool) -> String {
    let mut text = format!(
        "Input entity [{}]; relation `{}`.\n",
        request.source_id, request.relation_id
    );
    let decisions: Vec<bool> = request
        .candidate_ids
        .iter()
        .enumerate()
        .map(|(i, id)| decide(i, id))
        .collect();
    for (i, (id, yes)) in request.candidate_ids.iter().zip(&decisions).enumerate() {
        text.push_str(&format!(
            "{}. [{id}] {} the relation.\n",
            i + 1,
            if *yes { "has" } else { "does not have" }
        ));
    }
    text.push_str(VERDICTS_MARKER);
    text.push('\n');
    for (id, yes) in request.candidate_ids.iter().zip(&decisions) {
        text.push_str(&format!("{id}: {}\n", if *yes { "YES" } else { "NO" }));
    }
    text
}

/// Answers YES exactly for candidates whose triple is in `truth`. Reads only
/// the structured request fields, never the prompt.
pub fn oracle_classify(request: &ClassificationRequest, truth: &GroundTruth) -> BackendResponse {
    BackendResponse {
        raw_text: render(request, |_, id| {
            truth.contains(&request.relation_id, &request.source_id, id)
        }),
        provenance: Provenance::Oracle,
    }
}

#[derive(Debug, Clone)]
pub struct OracleBackend {
    truth: GroundTruth,
    aliases: HashMap<String, String>,
}

impl OracleBackend {
    /// The naive "match" question is answered with exactly-the-same semantics.
    pub fn new(truth: GroundTruth) -> Self {
        Self {
            truth,
            aliases: HashMap::from([(NAIVE_MATCH_RELATION.to_string(), EXACTLY_THE_SAME.to_string())]),
        }
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }
}

impl Backend for OracleBackend {
    fn model_hint(&self) -> String {
        "oracle".into()
    }

    fn complete(&self, request: &ClassificationRequest) -> Result<BackendResponse, BackendError> {
        match self.aliases.get(&request.relation_id) {
            Some(alias) => {
                let aliased = ClassificationRequest {
                    relation_id: alias.clone(),
                    ..request.clone()
                };
                Ok(oracle_classify(&aliased, &self.truth))
            }
            None => Ok(oracle_classify(request, &self.truth)),
        }
    }
}

/// Confirms the first `schedule[n]` candidates on the n-th call for a given
/// (source, relation); calls past the schedule reuse its last entry.
#[derive(Debug)]
pub struct ScriptedBackend {
    schedule: Vec<usize>,
    calls: Mutex<HashMap<(String, String), usize>>,
}

impl ScriptedBackend {
    pub fn new(schedule: Vec<usize>) -> Self {
        Self {
            schedule,
            calls: Mutex::new(HashMap::new()),
        }
    }
}

impl Backend for ScriptedBackend {
    fn model_hint(&self) -> String {
        format!("scripted/{:?}", self.schedule)
    }

    fn complete(&self, request: &ClassificationRequest) -> Result<BackendResponse, BackendError> {
        let n = {
            let mut calls = self.calls.lock().expect("call counter poisoned");
            let slot = calls
                .entry((request.source_id.clone(), request.relation_id.clone()))
                .or_default();
            *slot += 1;
            *slot - 1
        };
        let yes = self
            .schedule
            .get(n)
            .or(self.schedule.last())
            .copied()
            .unwrap_or(0);
        Ok(BackendResponse {
            raw_text: render(request, |i, _| i < yes),
            provenance: Provenance::Oracle,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(relation: &str, ids: &[&str]) -> ClassificationRequest {
        ClassificationRequest {
            prompt: String::new(),
            source_id: "s1".into(),
            relation_id: relation.into(),
            candidate_ids: ids.iter().map(|s| s.to_string()).collect(),
            model_hint: "oracle".into(),
        }
    }

    #[test]
    fn oracle_answers_from_truth() {
        let mut truth = GroundTruth::default();
        truth.insert("component", "s1", "t2");
        let text = oracle_classify(&request("component", &["t1", "t2"]), &truth).raw_text;
        assert!(text.contains("\nt1: NO\n"));
        assert!(text.contains("\nt2: YES\n"));
        assert_eq!(text.lines().filter(|l| l.contains("the relation")).count(), 2);
    }

    #[test]
    fn naive_match_is_aliased() {
        let mut truth = GroundTruth::default();
        truth.insert(EXACTLY_THE_SAME, "s1", "t1");
        let backend = OracleBackend::new(truth);
        let text = backend.complete(&request(NAIVE_MATCH_RELATION, &["t1", "t2"])).unwrap().raw_text;
        assert!(text.contains("t1: YES"));
        assert!(text.contains("t2: NO"));
    }

    #[test]
    fn scripted_follows_schedule_per_pair() {
        let backend = ScriptedBackend::new(vec![3, 1]);
        let ids = ["a", "b", "c", "d"];
        let count = |r: &str| {
            backend
                .complete(&request(r, &ids))
                .unwrap()
                .raw_text
                .matches(": YES")
                .count()
        };
        assert_eq!(count("x"), 3);
        assert_eq!(count("y"), 3);
        assert_eq!(count("x"), 1);
        assert_eq!(count("x"), 1);
    }
}
