//! Prompt construction and verdict parsing.
//!
//! Every prompt ends with an output contract: after its reasoning the model
//! writes a `VERDICTS:` line followed by one `<entity_id>: YES|NO` line per
//! candidate. [`parse_response`] reads the last such block and treats all
//! text before it as the rationale.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::embedding::serialize_entity;
use crate::model::{EntityRecord, Provenance, RelationSpec, RelationVerdict};

/// Relation id used for the plain "does it match" baseline.
pub const NAIVE_MATCH_RELATION: &str = "match";

pub const VERDICTS_MARKER: &str = "VERDICTS:";

const OUTPUT_CONTRACT: &str = "After reasoning, output a line \"VERDICTS:\" followed by one line per output entity: \"<entity_id>: YES\" or \"<entity_id>: NO\".";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationRequest {
    pub prompt: String,
    pub source_id: String,
    pub relation_id: String,
    pub candidate_ids: Vec<String>,
    pub model_hint: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendResponse {
    pub raw_text: String,
    pub provenance: Provenance,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse model response: {reason}")]
pub struct ParseError {
    pub reason: String,
    pub raw_text: String,
}

fn record_text(record: &EntityRecord) -> String {
    let names: Vec<String> = record.attributes().iter().map(|(n, _)| n.clone()).collect();
    serialize_entity(record, &names)
}

fn candidate_rows(candidates: &[&EntityRecord]) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. [{}] {}", i + 1, c.id(), record_text(c)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn relation_text(relation: &RelationSpec) -> String {
    let mut text = relation.description.clone();
    for example in &relation.examples {
        text.push_str(&format!(
            "\nE.g., input \"{}\" and output \"{}\": {}",
            example.source_text, example.target_text, example.explanation
        ));
    }
    text
}

fn request(
    prompt: String,
    source: &EntityRecord,
    relation_id: &str,
    candidates: &[&EntityRecord],
    model_hint: &str,
) -> ClassificationRequest {
    ClassificationRequest {
        prompt,
        source_id: source.id().to_string(),
        relation_id: relation_id.to_string(),
        candidate_ids: candidates.iter().map(|c| c.id().to_string()).collect(),
        model_hint: model_hint.to_string(),
    }
}

/// Fills the relation-discovery template for one source entity, one relation
/// and a batch of retrieved candidates.
pub fn build_prompt(
    source: &EntityRecord,
    candidates: &[&EntityRecord],
    relation: &RelationSpec,
    model_hint: &str,
) -> ClassificationRequest {
    assert!(!candidates.is_empty(), "prompt needs at least one candidate");
    let prompt = format!(
        "Task: Decide input & output entity relation.\n\
         Data: The input entity: {input}\n\
         The output entities: {outputs}\n\
         Relation: {relation}\n\
         Steps:\n\
         1. Repeat input entity and relation.\n\
         2. Go through each output entity. \n\
         Reason if it has the relation to input entity.\n\
         {OUTPUT_CONTRACT}",
        input = record_text(source),
        outputs = candidate_rows(candidates),
        relation = relation_text(relation),
    );
    request(prompt, source, &relation.id, candidates, model_hint)
}

/// Binary "same entity?" prompt with no notion of relations.
pub fn build_naive_prompt(
    source: &EntityRecord,
    candidates: &[&EntityRecord],
    model_hint: &str,
) -> ClassificationRequest {
    assert!(!candidates.is_empty(), "prompt needs at least one candidate");
    let prompt = format!(
        "Task: Decide whether the input entity matches each output entity.\n\
         Data: The input entity: {input}\n\
         The output entities: {outputs}\n\
         Steps:\n\
         1. Repeat input entity.\n\
         2. Go through each output entity. \n\
         Reason if it matches (refers to exactly the same entity as) the input entity.\n\
         {OUTPUT_CONTRACT}",
        input = record_text(source),
        outputs = candidate_rows(candidates),
    );
    request(prompt, source, NAIVE_MATCH_RELATION, candidates, model_hint)
}

fn normalize_marker(line: &str) -> &str {
    line.trim().trim_matches(|c| c == '*' || c == '#' || c == '`').trim()
}

fn parse_verdict_line(line: &str) -> Option<(&str, &str)> {
    let line = line.trim().trim_start_matches(['-', '*']).trim();
    let (id, token) = line.rsplit_once(':')?;
    let id = id.trim().trim_matches('`').trim();
    let id = id
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(id);
    let token = token.trim().trim_matches(|c: char| c == '*' || c == '.' || c == '`');
    Some((id, token))
}

/// Extracts exactly one verdict per requested candidate, in request order.
pub fn parse_response(
    response: &BackendResponse,
    request: &ClassificationRequest,
) -> Result<Vec<RelationVerdict>, ParseError> {
    let fail = |reason: String| ParseError {
        reason,
        raw_text: response.raw_text.clone(),
    };
    let lines: Vec<&str> = response.raw_text.lines().collect();
    let marker = lines
        .iter()
        .rposition(|l| normalize_marker(l) == VERDICTS_MARKER)
        .ok_or_else(|| fail("missing VERDICTS block".into()))?;
    let rationale = lines[..marker].join("\n").trim().to_string();

    let wanted: HashSet<&str> = request.candidate_ids.iter().map(String::as_str).collect();
    let mut decisions: HashMap<&str, bool> = HashMap::new();
    for line in lines[marker + 1..].iter().filter(|l| !l.trim().is_empty()) {
        let (id, token) =
            parse_verdict_line(line).ok_or_else(|| fail(format!("unreadable verdict line `{line}`")))?;
        if !wanted.contains(id) {
            return Err(fail(format!("unknown entity id `{id}`")));
        }
        let decision = if token.eq_ignore_ascii_case("yes") {
            true
        } else if token.eq_ignore_ascii_case("no") {
            false
        } else {
            return Err(fail(format!("verdict for `{id}` is `{token}`, expected YES or NO")));
        };
        if decisions.insert(id, decision).is_some() {
            return Err(fail(format!("duplicate verdict for `{id}`")));
        }
    }
    request
        .candidate_ids
        .iter()
        .map(|id| {
            let decision = *decisions
                .get(id.as_str())
                .ok_or_else(|| fail(format!("missing verdict for `{id}`")))?;
            Ok(RelationVerdict {
                relation_id: request.relation_id.clone(),
                source_id: request.source_id.clone(),
                target_id: id.clone(),
                decision,
                rationale: rationale.clone(),
                provenance: response.provenance.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RelationCatalog;
    use proptest::prelude::*;

    fn rec(id: &str, item: &str) -> EntityRecord {
        EntityRecord::new(id, vec![("item".into(), item.into())]).unwrap()
    }

    fn req(ids: &[&str]) -> ClassificationRequest {
        ClassificationRequest {
            prompt: String::new(),
            source_id: "s1".into(),
            relation_id: "rel".into(),
            candidate_ids: ids.iter().map(|s| s.to_string()).collect(),
            model_hint: "m".into(),
        }
    }

    fn resp(text: &str) -> BackendResponse {
        BackendResponse {
            raw_text: text.into(),
            provenance: Provenance::Oracle,
        }
    }

    #[test]
    fn prompt_starts_with_template_and_lists_each_candidate() {
        let catalog = RelationCatalog::esg_default();
        let source = rec("s1", "Charger for Consumer Electronics");
        let a = rec("e1", "Power Adapter");
        let b = rec("e2", "Charger for Smartphone");
        let request = build_prompt(&source, &[&a, &b], &catalog.relations()[1], "gpt-4");
        let first = request.prompt.lines().next().unwrap();
        assert_eq!(first, "Task: Decide input & output entity relation.");
        assert!(request
            .prompt
            .contains("The output entities: 1. [e1] item: Power Adapter\n2. [e2] item: Charger for Smartphone\n"));
        assert_eq!(request.candidate_ids, ["e1", "e2"]);
        assert_eq!(request.relation_id, "general_without_details");

        let single = build_prompt(&source, &[&a], &catalog.relations()[1], "gpt-4");
        assert_eq!(single.prompt.matches("[e1]").count(), 1);
        assert_eq!(single.prompt.lines().filter(|l| l.contains(". [")).count(), 1);
        assert_eq!(
            single,
            build_prompt(&source, &[&a], &catalog.relations()[1], "gpt-4")
        );
    }

    #[test]
    fn all_negative_response() {
        let verdicts = parse_response(&resp("thinking\nVERDICTS:\ne1: NO\ne2: NO"), &req(&["e1", "e2"])).unwrap();
        assert_eq!(verdicts.len(), 2);
        assert!(verdicts.iter().all(|v| !v.decision));
        assert_eq!(verdicts[0].rationale, "thinking");
    }

    #[test]
    fn shuffled_lines_are_normalized_to_request_order() {
        let verdicts = parse_response(&resp("VERDICTS:\ne2: YES\ne1: NO\n"), &req(&["e1", "e2"])).unwrap();
        assert_eq!(verdicts[0].target_id, "e1");
        assert!(!verdicts[0].decision);
        assert!(verdicts[1].decision);
    }

    #[test]
    fn last_block_wins_and_decorations_are_tolerated() {
        let text = "I will output VERDICTS: later\nVERDICTS:\ne1: NO\n\n**VERDICTS:**\n- [e1]: yes\n";
        let verdicts = parse_response(&resp(text), &req(&["e1"])).unwrap();
        assert!(verdicts[0].decision);
    }

    #[test]
    fn malformed_responses_fail() {
        let r = req(&["e1", "e2"]);
        for text in [
            "no block here",
            "VERDICTS:\ne1: NO",
            "VERDICTS:\ne1: NO\ne2: NO\ne3: YES",
            "VERDICTS:\ne1: NO\ne2: MAYBE",
            "VERDICTS:\ne1: NO\ne1: YES\ne2: NO",
            "VERDICTS:\ne1 NO\ne2: NO",
        ] {
            let err = parse_response(&resp(text), &r).unwrap_err();
            assert_eq!(err.raw_text, text);
        }
    }

    #[test]
    fn ids_containing_colons_parse() {
        let verdicts = parse_response(&resp("VERDICTS:\nurn:x:1: YES"), &req(&["urn:x:1"])).unwrap();
        assert!(verdicts[0].decision);
    }

    proptest! {
        #[test]
        fn verdict_order_is_independent_of_line_order(
            decisions in proptest::collection::vec(any::<bool>(), 1..12),
            seed in any::<u64>(),
        ) {
            let ids: Vec<String> = (0..decisions.len()).map(|i| format!("t{i}")).collect();
            let mut lines: Vec<String> = ids
                .iter()
                .zip(&decisions)
                .map(|(id, d)| format!("{id}: {}", if *d { "YES" } else { "NO" }))
                .collect();
            // Fisher-Yates driven by a simple LCG so the shuffle is reproducible.
            let mut state = seed;
            for i in (1..lines.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                lines.swap(i, j);
            }
            let text = format!("reasoning\nVERDICTS:\n{}", lines.join("\n"));
            let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let verdicts = parse_response(&resp(&text), &req(&id_refs)).unwrap();
            let got: Vec<bool> = verdicts.iter().map(|v| v.decision).collect();
            prop_assert_eq!(got, decisions);
            let got_ids: Vec<&str> = verdicts.iter().map(|v| v.target_id.as_str()).collect();
            prop_assert_eq!(got_ids, id_refs);
        }
    }
}
