//! CSV ingestion and export.
//!
//! `attrs.csv` is the node manifest: every node must appear there at least once
//! (a row with an empty `attr` column only declares the node). `triples.csv`
//! rows whose endpoints are not declared are dangling and get rejected.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::error::{KgError, Result};
use super::model::{EntityNode, NodeId, NodeKind, Provenance, Quantity, RelationEdge, TripleKey, Unit};
use super::registry::{RelationRegistry, CONTAINS};
use super::snapshot::GraphSnapshot;

pub const TRIPLES_HEADER: [&str; 4] = ["subject", "relation", "object", "provenance"];
pub const ATTRS_HEADER: [&str; 6] = ["node_id", "attr", "value", "unit", "kind_hint", "label"];

const CALORIES: &str = "calories";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestMode {
    /// Skip and report bad rows.
    #[default]
    Lenient,
    /// Fail on the first bad row.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub version: u64,
    pub nodes: usize,
    pub edges: usize,
    pub duplicate_triples: usize,
    pub rejected: Vec<RejectedRow>,
    pub warnings: Vec<String>,
}

struct Sink<'a> {
    mode: IngestMode,
    report: &'a mut IngestReport,
}

impl Sink<'_> {
    fn reject(&mut self, err: KgError, file: &str, line: u64) -> Result<()> {
        if self.mode == IngestMode::Strict {
            return Err(err);
        }
        self.report.rejected.push(RejectedRow {
            file: file.to_string(),
            line,
            reason: err.to_string(),
        });
        Ok(())
    }
}

pub(crate) fn malformed(file: &str, line: u64, reason: impl Into<String>) -> KgError {
    KgError::MalformedRow {
        file: file.to_string(),
        line,
        reason: reason.into(),
    }
}

/// Reads all records, checking the header. An empty stream yields no rows.
pub(crate) fn read_rows<R: Read>(reader: R, file: &str, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut records = rdr.records();
    match records.next() {
        None => return Ok(rows),
        Some(first) => {
            let first = first?;
            let got: Vec<&str> = first.iter().collect();
            if got != header {
                return Err(malformed(
                    file,
                    1,
                    format!("expected header `{}`, found `{}`", header.join(","), got.join(",")),
                ));
            }
        }
    }
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, rec));
    }
    Ok(rows)
}

#[derive(Default)]
struct PendingNode {
    kind: Option<NodeKind>,
    label: Option<String>,
    numeric: BTreeMap<String, Quantity>,
    categorical: BTreeMap<String, String>,
}

/// Parses one attribute row's value. Mass values are normalized to grams.
fn parse_attr_value(attr: &str, value: &str, unit: &str) -> std::result::Result<Option<AttrValue>, String> {
    if attr.is_empty() {
        return Ok(None);
    }
    if unit.is_empty() {
        if value.is_empty() {
            return Err(format!("categorical attribute `{attr}` has no value"));
        }
        return Ok(Some(AttrValue::Categorical(value.to_string())));
    }
    let unit: Unit = unit.parse()?;
    let v: f64 = value
        .parse()
        .map_err(|_| format!("attribute `{attr}` value `{value}` is not a number"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("attribute `{attr}` value must be finite and >= 0"));
    }
    if attr == CALORIES && unit != Unit::Kcal {
        return Err(format!("calories must be in kcal, got `{unit}`"));
    }
    if attr != CALORIES && unit == Unit::Kcal {
        return Err(format!("only `calories` may use kcal (attribute `{attr}`)"));
    }
    Ok(Some(AttrValue::Numeric(Quantity::new(v, unit).canonicalized())))
}

enum AttrValue {
    Numeric(Quantity),
    Categorical(String),
}

/// Loads a validated snapshot (version 1) from the two CSV streams.
pub fn load_triples<T: Read, A: Read>(
    triples: T,
    attrs: A,
    registry: &RelationRegistry,
    mode: IngestMode,
) -> Result<(GraphSnapshot, IngestReport)> {
    let mut report = IngestReport::default();
    let mut registry = registry.clone();
    let mut sink = Sink {
        mode,
        report: &mut report,
    };

    // nodes
    let mut pending: BTreeMap<NodeId, PendingNode> = BTreeMap::new();
    for (line, rec) in read_rows(attrs, "attrs.csv", &ATTRS_HEADER)? {
        if rec.len() != ATTRS_HEADER.len() {
            sink.reject(
                malformed("attrs.csv", line, format!("expected 6 fields, found {}", rec.len())),
                "attrs.csv",
                line,
            )?;
            continue;
        }
        let (id, attr, value, unit, kind_hint, label) =
            (&rec[0], &rec[1], &rec[2], &rec[3], &rec[4], &rec[5]);
        if id.is_empty() {
            sink.reject(malformed("attrs.csv", line, "empty node_id"), "attrs.csv", line)?;
            continue;
        }
        let kind = if kind_hint.is_empty() {
            None
        } else {
            match kind_hint.parse::<NodeKind>() {
                Ok(k) => Some(k),
                Err(e) => {
                    sink.reject(malformed("attrs.csv", line, e), "attrs.csv", line)?;
                    continue;
                }
            }
        };
        let parsed = match parse_attr_value(attr, value, unit) {
            Ok(p) => p,
            Err(e) => {
                sink.reject(malformed("attrs.csv", line, e), "attrs.csv", line)?;
                continue;
            }
        };
        let entry = pending.entry(NodeId::new(id)).or_default();
        if let (Some(k), Some(existing)) = (kind, entry.kind) {
            if k != existing {
                sink.reject(
                    malformed(
                        "attrs.csv",
                        line,
                        format!("kind `{k}` conflicts with earlier kind `{existing}` for `{id}`"),
                    ),
                    "attrs.csv",
                    line,
                )?;
                continue;
            }
        }
        if entry.kind.is_none() {
            entry.kind = kind;
        }
        if entry.label.is_none() && !label.is_empty() {
            entry.label = Some(label.to_string());
        }
        match parsed {
            Some(AttrValue::Numeric(q)) => {
                entry.numeric.insert(attr.to_string(), q);
            }
            Some(AttrValue::Categorical(c)) => {
                entry.categorical.insert(attr.to_string(), c);
            }
            None => {}
        }
    }

    // edges
    let mut edges: HashMap<TripleKey, RelationEdge> = HashMap::new();
    let mut edge_lines: HashMap<TripleKey, u64> = HashMap::new();
    for (line, rec) in read_rows(triples, "triples.csv", &TRIPLES_HEADER)? {
        if rec.len() != TRIPLES_HEADER.len() && rec.len() != 3 {
            sink.reject(
                malformed("triples.csv", line, format!("expected 4 fields, found {}", rec.len())),
                "triples.csv",
                line,
            )?;
            continue;
        }
        let (s, r, o) = (&rec[0], &rec[1], &rec[2]);
        let prov = rec.get(3).unwrap_or("");
        if s.is_empty() || r.is_empty() || o.is_empty() {
            sink.reject(malformed("triples.csv", line, "empty field"), "triples.csv", line)?;
            continue;
        }
        let provenance: Provenance = match prov.parse() {
            Ok(p) => p,
            Err(e) => {
                sink.reject(malformed("triples.csv", line, e), "triples.csv", line)?;
                continue;
            }
        };
        let relation = match registry.get(r) {
            Some(rel) => rel,
            None => {
                if mode == IngestMode::Strict {
                    return Err(KgError::UnknownRelation(r.to_string()));
                }
                sink.report
                    .warnings
                    .push(format!("triples.csv:{line}: registered unknown relation `{r}`"));
                registry.register(r, "", None)
            }
        };
        let key = TripleKey {
            subject: NodeId::new(s),
            relation: relation.clone(),
            object: NodeId::new(o),
        };
        let missing = if !pending.contains_key(s) {
            Some(s)
        } else if !pending.contains_key(o) {
            Some(o)
        } else {
            None
        };
        if let Some(m) = missing {
            sink.reject(
                KgError::DanglingReference {
                    edge: key,
                    missing: NodeId::new(m),
                },
                "triples.csv",
                line,
            )?;
            continue;
        }
        if edges.contains_key(&key) {
            sink.report.duplicate_triples += 1;
            continue;
        }
        edge_lines.insert(key.clone(), line);
        edges.insert(
            key.clone(),
            RelationEdge {
                subject: key.subject,
                relation,
                object: key.object,
                provenance,
                version: 1,
            },
        );
    }

    // kinds: explicit hint, else recipe when it has `contains` edges, else ingredient
    let has_contains: std::collections::HashSet<NodeId> = edges
        .keys()
        .filter(|k| &*k.relation == CONTAINS)
        .map(|k| k.subject.clone())
        .collect();
    let mut nodes: HashMap<NodeId, EntityNode> = HashMap::with_capacity(pending.len());
    for (id, p) in pending {
        let kind = p.kind.unwrap_or(if has_contains.contains(&id) {
            NodeKind::Recipe
        } else {
            NodeKind::Ingredient
        });
        let label = p.label.unwrap_or_else(|| id.to_string());
        nodes.insert(
            id.clone(),
            EntityNode {
                id,
                label,
                kind,
                numeric_attrs: p.numeric,
                categorical_attrs: p.categorical,
            },
        );
    }

    // recipes must have at least one `contains` edge
    let mut orphan_recipes: Vec<NodeId> = nodes
        .values()
        .filter(|n| n.kind == NodeKind::Recipe && !has_contains.contains(&n.id))
        .map(|n| n.id.clone())
        .collect();
    orphan_recipes.sort();
    for id in orphan_recipes {
        sink.reject(KgError::RecipeWithoutIngredients(id.clone()), "attrs.csv", 0)?;
        nodes.remove(&id);
        let mut dropped: Vec<TripleKey> = edges
            .keys()
            .filter(|k| k.subject == id || k.object == id)
            .cloned()
            .collect();
        dropped.sort();
        for k in dropped {
            let line = edge_lines.get(&k).copied().unwrap_or(0);
            edges.remove(&k);
            sink.report.rejected.push(RejectedRow {
                file: "triples.csv".into(),
                line,
                reason: format!("edge {k} dropped with recipe `{id}`"),
            });
        }
    }

    let snapshot = GraphSnapshot::from_parts(1, nodes, edges, Arc::new(registry));
    report.version = snapshot.version();
    report.nodes = snapshot.node_count();
    report.edges = snapshot.triple_count();
    Ok((snapshot, report))
}

/// Writes `triples.csv` for the snapshot, rows sorted.
pub fn export_triples<W: Write>(snapshot: &GraphSnapshot, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRIPLES_HEADER)?;
    for e in snapshot.edges_sorted() {
        w.write_record([e.subject.as_str(), &e.relation, e.object.as_str(), e.provenance.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `attrs.csv` for the snapshot. The first row of every node carries
/// its kind and label; mass values are written in grams.
pub fn export_attrs<W: Write>(snapshot: &GraphSnapshot, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(ATTRS_HEADER)?;
    for id in snapshot.node_ids_sorted() {
        let n = &snapshot.nodes[&id];
        let mut rows: Vec<[String; 4]> = Vec::new();
        for (k, q) in &n.numeric_attrs {
            rows.push([k.clone(), format_number(q.value), q.unit.as_str().to_string(), String::new()]);
        }
        for (k, v) in &n.categorical_attrs {
            rows.push([k.clone(), v.clone(), String::new(), String::new()]);
        }
        if rows.is_empty() {
            rows.push([String::new(), String::new(), String::new(), String::new()]);
        }
        for (i, [attr, value, unit, _]) in rows.into_iter().enumerate() {
            let (kind, label) = if i == 0 {
                (n.kind.as_str(), n.label.as_str())
            } else {
                ("", "")
            };
            w.write_record([id.as_str(), &attr, &value, &unit, kind, label])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest decimal rendering that round-trips (`320`, `0.42`).
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
