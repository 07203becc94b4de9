//! Domain types shared across the matching pipeline.
//!
//! Tables and records mirror the usual relational data model: a table has an
//! ordered attribute schema and a list of records whose attribute sequence
//! follows that schema. Relations are analyst-defined concepts ("exactly the
//! same", "component", ...) collected in a [`RelationCatalog`] that also fixes
//! the order in which the cascade resolver tries them.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed catalog {path}: {message}")]
    MalformedCatalog { path: String, message: String },
    #[error("invalid catalog, relation `{relation}`: {reason}")]
    InvalidCatalog { relation: String, reason: String },
    #[error("malformed csv {path}: {message}")]
    MalformedCsv { path: String, message: String },
    #[error("EmptyTable: {path} has no data rows")]
    EmptyTable { path: String },
    #[error("invalid record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One row of a table: an id plus attribute/value pairs in schema order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRecord {
    id: String,
    attributes: Vec<(String, String)>,
}

impl EntityRecord {
    pub fn new(
        id: impl Into<String>,
        attributes: Vec<(String, String)>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ModelError::InvalidRecord {
                id,
                reason: "id is empty".into(),
            });
        }
        let mut seen = HashSet::new();
        for (name, _) in &attributes {
            if !seen.insert(name.as_str()) {
                return Err(ModelError::InvalidRecord {
                    id,
                    reason: format!("duplicate attribute `{name}`"),
                });
            }
        }
        Ok(Self { id, attributes })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn attributes(&self) -> &[(String, String)] {
        &self.attributes
    }

    pub fn value(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|(n, _)| n.as_str())
    }
}

/// A named table with an ordered schema. Record ids are unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityTable {
    name: String,
    schema: Vec<String>,
    records: Vec<EntityRecord>,
}

impl EntityTable {
    pub fn new(
        name: impl Into<String>,
        schema: Vec<String>,
        records: Vec<EntityRecord>,
    ) -> Result<Self, ModelError> {
        let mut ids = HashSet::new();
        for record in &records {
            if !record.attribute_names().eq(schema.iter().map(String::as_str)) {
                return Err(ModelError::InvalidRecord {
                    id: record.id.clone(),
                    reason: "attribute order does not follow the table schema".into(),
                });
            }
            if !ids.insert(record.id.as_str()) {
                return Err(ModelError::InvalidRecord {
                    id: record.id.clone(),
                    reason: "duplicate record id".into(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            schema,
            records,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn records(&self) -> &[EntityRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EntityRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Writes the table as CSV with a leading `id` column.
    pub fn write_csv(&self, path: &Path) -> Result<(), ModelError> {
        let io = |source| ModelError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut writer = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| ModelError::MalformedCsv {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        writer
            .write_record(std::iter::once("id").chain(self.schema.iter().map(String::as_str)))
            .map_err(csv_err)?;
        for record in &self.records {
            writer
                .write_record(
                    std::iter::once(record.id.as_str())
                        .chain(record.attributes.iter().map(|(_, v)| v.as_str())),
                )
                .map_err(csv_err)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| io(std::io::Error::other(e.to_string())))?;
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(io)
    }
}

/// Reads a UTF-8 CSV file with a header row into a table.
///
/// A column named `id` supplies record ids; without one, ids are the 1-based
/// row ordinals. Values are kept verbatim apart from a leading BOM.
pub fn load_table(path: &Path, table_name: &str) -> Result<EntityTable, ModelError> {
    let display = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: display.clone(),
        source,
    })?;
    parse_table(&bytes, table_name, &display)
}

pub fn parse_table(bytes: &[u8], table_name: &str, origin: &str) -> Result<EntityTable, ModelError> {
    let malformed = |message: String| ModelError::MalformedCsv {
        path: origin.to_string(),
        message,
    };
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(malformed("missing header row".into()));
    }
    let mut names = HashSet::new();
    for name in &header {
        if !names.insert(name.as_str()) {
            return Err(malformed(format!("duplicate column `{name}`")));
        }
    }
    let id_column = header.iter().position(|h| h == "id");
    let schema: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != id_column)
        .map(|(_, h)| h.clone())
        .collect();

    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (row, result) in reader.records().enumerate() {
        let row_data = result.map_err(|e| malformed(e.to_string()))?;
        let id = match id_column {
            Some(col) => row_data[col].to_string(),
            None => (row + 1).to_string(),
        };
        if id.is_empty() {
            return Err(malformed(format!("row {} has an empty id", row + 1)));
        }
        if !ids.insert(id.clone()) {
            return Err(malformed(format!("duplicate id `{id}`")));
        }
        let attributes = row_data
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != id_column)
            .zip(&schema)
            .map(|((_, value), name)| (name.clone(), value.to_string()))
            .collect();
        records.push(EntityRecord { id, attributes });
    }
    if records.is_empty() {
        return Err(ModelError::EmptyTable {
            path: origin.to_string(),
        });
    }
    EntityTable::new(table_name, schema, records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    Single,
    Many,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationExample {
    pub source_text: String,
    pub target_text: String,
    pub explanation: String,
}

/// An analyst-defined relation with its few-shot examples and cascade rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub id: String,
    pub display_name: String,
    pub description: String,
    pub examples: Vec<RelationExample>,
    pub priority_rank: u32,
    pub multiplicity: Multiplicity,
}

/// The relation domain, kept in priority order (rank 1 first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelationCatalog {
    relations: Vec<RelationSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    relations: Vec<RelationSpec>,
}

const ESG_CATALOG: &str = include_str!("../data/esg_catalog.json");

impl RelationCatalog {
    pub fn new(mut relations: Vec<RelationSpec>) -> Result<Self, ModelError> {
        let invalid = |relation: &str, reason: String| ModelError::InvalidCatalog {
            relation: relation.to_string(),
            reason,
        };
        if relations.is_empty() {
            return Err(invalid("<none>", "catalog defines no relations".into()));
        }
        let mut ids = HashSet::new();
        for rel in &relations {
            if rel.id.is_empty() {
                return Err(invalid(&rel.display_name, "empty id".into()));
            }
            if !ids.insert(rel.id.as_str()) {
                return Err(invalid(&rel.id, "duplicate relation id".into()));
            }
            if rel.description.trim().is_empty() {
                return Err(invalid(&rel.id, "empty description".into()));
            }
            if rel.examples.is_empty() {
                return Err(invalid(&rel.id, "at least one example is required".into()));
            }
            if rel.priority_rank == 0 {
                return Err(invalid(&rel.id, "priority_rank must be positive".into()));
            }
        }
        relations.sort_by_key(|r| r.priority_rank);
        for (expected, rel) in (1u32..).zip(&relations) {
            if rel.priority_rank != expected {
                let reason = if rel.priority_rank < expected {
                    format!("duplicate priority_rank {}", rel.priority_rank)
                } else {
                    format!(
                        "priority ranks are not contiguous: expected {expected}, found {}",
                        rel.priority_rank
                    )
                };
                return Err(invalid(&rel.id, reason));
            }
        }
        Ok(Self { relations })
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ModelError> {
        let file: CatalogFile =
            serde_json::from_str(text).map_err(|e| ModelError::MalformedCatalog {
                path: origin.to_string(),
                message: e.to_string(),
            })?;
        Self::new(file.relations)
    }

    /// The five-relation ESG emission-factor catalog.
    pub fn esg_default() -> Self {
        Self::from_json(ESG_CATALOG, "esg_catalog.json").expect("bundled catalog is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn relations(&self) -> &[RelationSpec] {
        &self.relations
    }

    pub fn get(&self, id: &str) -> Option<&RelationSpec> {
        self.relations.iter().find(|r| r.id == id)
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

pub fn load_catalog(path: &Path) -> Result<RelationCatalog, ModelError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: display.clone(),
        source,
    })?;
    RelationCatalog::from_json(&text, &display)
}

/// Where a verdict came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "model")]
pub enum Provenance {
    RemoteModel(String),
    Oracle,
    Cache,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::RemoteModel(m) => write!(f, "remote:{m}"),
            Provenance::Oracle => f.write_str("oracle"),
            Provenance::Cache => f.write_str("cache"),
        }
    }
}

/// One evaluation of the relation predicate for (relation, source, target).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationVerdict {
    pub relation_id: String,
    pub source_id: String,
    pub target_id: String,
    pub decision: bool,
    pub rationale: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Resolved,
    ComponentOnly,
    Unresolved,
}

/// Single best outcome of the cascade for one source entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedMatch {
    pub source_id: String,
    pub status: MatchStatus,
    pub relation_id: Option<String>,
    pub target_ids: Vec<String>,
    pub selection_reason: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: &str, rank: u32) -> RelationSpec {
        RelationSpec {
            id: id.into(),
            display_name: id.into(),
            description: format!("{id} description"),
            examples: vec![RelationExample {
                source_text: "a".into(),
                target_text: "b".into(),
                explanation: "c".into(),
            }],
            priority_rank: rank,
            multiplicity: Multiplicity::Single,
        }
    }

    #[test]
    fn esg_catalog_has_five_relations_in_rank_order() {
        let catalog = RelationCatalog::esg_default();
        let names: Vec<_> = catalog
            .relations()
            .iter()
            .map(|r| r.display_name.as_str())
            .collect();
        assert_eq!(
            names,
            [
                "Exactly the same",
                "General without additional details",
                "Similar with Additional Details",
                "Similar with wrong Details",
                "Component"
            ]
        );
        assert_eq!(catalog.relations()[4].multiplicity, Multiplicity::Many);
    }

    #[test]
    fn non_contiguous_ranks_are_rejected() {
        let err = RelationCatalog::new(vec![spec("a", 1), spec("b", 3)]).unwrap_err();
        match err {
            ModelError::InvalidCatalog { relation, reason } => {
                assert_eq!(relation, "b");
                assert!(reason.contains("contiguous"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn relation_without_examples_is_rejected() {
        let mut bad = spec("b", 2);
        bad.examples.clear();
        let err = RelationCatalog::new(vec![spec("a", 1), bad]).unwrap_err();
        assert!(matches!(err, ModelError::InvalidCatalog { ref relation, .. } if relation == "b"));
    }

    #[test]
    fn duplicate_ids_and_ranks_are_rejected() {
        assert!(matches!(
            RelationCatalog::new(vec![spec("a", 1), spec("a", 2)]),
            Err(ModelError::InvalidCatalog { .. })
        ));
        assert!(matches!(
            RelationCatalog::new(vec![spec("a", 1), spec("b", 1)]),
            Err(ModelError::InvalidCatalog { .. })
        ));
        let mut empty = spec("x", 1);
        empty.description = "  ".into();
        assert!(RelationCatalog::new(vec![empty]).is_err());
    }

    #[test]
    fn malformed_json_is_reported_as_such() {
        let err = RelationCatalog::from_json("{\"relations\": [", "x.json").unwrap_err();
        assert!(matches!(err, ModelError::MalformedCatalog { .. }));
    }

    #[test]
    fn table_with_id_column() {
        let csv = "id,item\ne1,Power Adapter\ne2,Charger for Smartphone\n";
        let table = parse_table(csv.as_bytes(), "target", "mem").unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.schema(), ["item"]);
        assert_eq!(table.records()[0].id(), "e1");
        assert_eq!(table.records()[1].value("item"), Some("Charger for Smartphone"));
    }

    #[test]
    fn table_without_id_column_uses_ordinals() {
        let csv = "item\na\nb\nc\n";
        let table = parse_table(csv.as_bytes(), "t", "mem").unwrap();
        let ids: Vec<_> = table.records().iter().map(EntityRecord::id).collect();
        assert_eq!(ids, ["1", "2", "3"]);
    }

    #[test]
    fn duplicate_ids_and_ragged_rows_are_malformed() {
        let dup = "id,item\ne1,a\ne1,b\n";
        assert!(matches!(
            parse_table(dup.as_bytes(), "t", "mem"),
            Err(ModelError::MalformedCsv { .. })
        ));
        let ragged = "id,item\ne1,a,extra\n";
        assert!(matches!(
            parse_table(ragged.as_bytes(), "t", "mem"),
            Err(ModelError::MalformedCsv { .. })
        ));
    }

    #[test]
    fn header_only_is_empty_table() {
        assert!(matches!(
            parse_table(b"id,item\n", "t", "mem"),
            Err(ModelError::EmptyTable { .. })
        ));
    }

    #[test]
    fn bom_is_stripped_and_values_kept_verbatim() {
        let csv = "\u{feff}id,item\ne1,  padded \n";
        let table = parse_table(csv.as_bytes(), "t", "mem").unwrap();
        assert_eq!(table.schema(), ["item"]);
        assert_eq!(table.records()[0].value("item"), Some("  padded "));
    }

    #[test]
    fn id_column_may_appear_anywhere() {
        let csv = "item,id,size\nsmall car,x,small\n";
        let table = parse_table(csv.as_bytes(), "t", "mem").unwrap();
        assert_eq!(table.schema(), ["item", "size"]);
        assert_eq!(table.records()[0].id(), "x");
    }

    #[test]
    fn record_rejects_duplicate_attribute_names() {
        let attrs = vec![("a".into(), "1".into()), ("a".into(), "2".into())];
        assert!(EntityRecord::new("r", attrs).is_err());
        assert!(EntityRecord::new("", vec![]).is_err());
    }
}
