//! The symbolic constraint language.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kg::{format_number, NodeId, Quantity, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }

    pub fn is_upper(self) -> bool {
        matches!(self, Comparator::Lt | Comparator::Le)
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Comparator::Lt | Comparator::Gt)
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }
}

impl std::str::FromStr for Comparator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "<" => Ok(Comparator::Lt),
            "<=" | "≤" => Ok(Comparator::Le),
            ">" => Ok(Comparator::Gt),
            ">=" | "≥" => Ok(Comparator::Ge),
            other => Err(format!("unknown comparator `{other}`")),
        }
    }
}

/// What an include/exclude constraint points at.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EntityRef {
    Node { id: NodeId },
    /// A categorical class value such as `dairy` or `highCarb`.
    Class { name: String },
    /// A mention that has not been linked to the graph yet.
    Unresolved { text: String },
}

impl EntityRef {
    pub fn node(id: impl Into<NodeId>) -> Self {
        EntityRef::Node { id: id.into() }
    }

    pub fn class(name: impl Into<String>) -> Self {
        EntityRef::Class { name: name.into() }
    }

    pub fn is_resolved(&self) -> bool {
        !matches!(self, EntityRef::Unresolved { .. })
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityRef::Node { id } => write!(f, "node:{id}"),
            EntityRef::Class { name } => write!(f, "class:{name}"),
            EntityRef::Unresolved { text } => write!(f, "unresolved:{text}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintBody {
    Flag { name: String, value: bool },
    Bound { attr: String, cmp: Comparator, value: f64, unit: Unit },
    IncludeEntity { entity: EntityRef },
    ExcludeEntity { entity: EntityRef },
    MethodFlag { name: String, value: bool },
    /// Taste words like "tasty"; never used as a filter.
    Subjective { term: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Flag,
    Bound,
    IncludeEntity,
    ExcludeEntity,
    MethodFlag,
    Subjective,
}

impl ConstraintBody {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            ConstraintBody::Flag { .. } => ConstraintKind::Flag,
            ConstraintBody::Bound { .. } => ConstraintKind::Bound,
            ConstraintBody::IncludeEntity { .. } => ConstraintKind::IncludeEntity,
            ConstraintBody::ExcludeEntity { .. } => ConstraintKind::ExcludeEntity,
            ConstraintBody::MethodFlag { .. } => ConstraintKind::MethodFlag,
            ConstraintBody::Subjective { .. } => ConstraintKind::Subjective,
        }
    }

    /// The attribute or entity the constraint talks about. Include and exclude
    /// of the same entity share a key.
    pub fn key(&self) -> String {
        match self {
            ConstraintBody::Flag { name, .. } => format!("flag:{name}"),
            ConstraintBody::Bound { attr, .. } => format!("bound:{attr}"),
            ConstraintBody::IncludeEntity { entity } | ConstraintBody::ExcludeEntity { entity } => {
                format!("entity:{entity}")
            }
            ConstraintBody::MethodFlag { name, .. } => format!("method:{name}"),
            ConstraintBody::Subjective { term } => format!("subjective:{term}"),
        }
    }

    /// Stable identity string, unique per distinct constraint value.
    pub fn signature(&self) -> String {
        match self {
            ConstraintBody::Flag { name, value } => format!("flag:{name}={value}"),
            ConstraintBody::Bound { attr, cmp, value, unit } => {
                format!("bound:{attr}{}{}{}", cmp.symbol(), format_number(*value), unit_suffix(*unit))
            }
            ConstraintBody::IncludeEntity { entity } => format!("include:{entity}"),
            ConstraintBody::ExcludeEntity { entity } => format!("exclude:{entity}"),
            ConstraintBody::MethodFlag { name, value } => format!("method:{name}={value}"),
            ConstraintBody::Subjective { term } => format!("subjective:{term}"),
        }
    }

    /// Bound threshold in canonical units (g for mass, kcal for energy).
    pub fn canonical_limit(&self) -> Option<f64> {
        match self {
            ConstraintBody::Bound { value, unit, .. } => Some(Quantity::new(*value, *unit).canonical_value()),
            _ => None,
        }
    }

    /// Whether the matcher may use this constraint to drop recipes.
    pub fn is_filter_effective(&self) -> bool {
        match self {
            ConstraintBody::Subjective { .. } => false,
            ConstraintBody::IncludeEntity { entity } | ConstraintBody::ExcludeEntity { entity } => {
                entity.is_resolved()
            }
            _ => true,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ConstraintBody::Flag { name, value: true } => name.clone(),
            ConstraintBody::Flag { name, value: false } => format!("not {name}"),
            ConstraintBody::Bound { attr, cmp, value, unit } => {
                format!("{attr} {} {}{}", cmp.symbol(), format_number(*value), unit_suffix_spaced(*unit))
            }
            ConstraintBody::IncludeEntity { entity } => format!("includes {}", entity_text(entity)),
            ConstraintBody::ExcludeEntity { entity } => format!("excludes {}", entity_text(entity)),
            ConstraintBody::MethodFlag { name, value: true } => name.clone(),
            ConstraintBody::MethodFlag { name, value: false } => format!("not {name}"),
            ConstraintBody::Subjective { term } => term.clone(),
        }
    }
}

fn entity_text(e: &EntityRef) -> String {
    match e {
        EntityRef::Node { id } => id.to_string(),
        EntityRef::Class { name } => name.clone(),
        EntityRef::Unresolved { text } => format!("\"{text}\""),
    }
}

fn unit_suffix(unit: Unit) -> &'static str {
    match unit {
        Unit::None => "",
        u => u.as_str(),
    }
}

fn unit_suffix_spaced(unit: Unit) -> String {
    match unit {
        Unit::None => String::new(),
        u => format!(" {}", u.as_str()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Text,
    GraphAction,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintStatus {
    #[default]
    Active,
    /// Lost a conflict; kept for the record and for undo.
    Superseded,
    /// Waiting on the user (an unresolved mention or an open conflict).
    Pending,
}

/// The rejection counter behind a learned constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub counter: EntityRef,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    #[serde(flatten)]
    pub body: ConstraintBody,
    pub origin: Origin,
    pub turn: u32,
    #[serde(default)]
    pub status: ConstraintStatus,
    /// Message text the constraint was read from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cites: Option<Citation>,
}

impl Constraint {
    pub fn new(body: ConstraintBody, origin: Origin, turn: u32) -> Self {
        Constraint {
            body,
            origin,
            turn,
            status: ConstraintStatus::Active,
            source: None,
            cites: None,
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn with_status(mut self, status: ConstraintStatus) -> Self {
        self.status = status;
        self
    }

    pub fn kind(&self) -> ConstraintKind {
        self.body.kind()
    }

    pub fn key(&self) -> String {
        self.body.key()
    }

    pub fn signature(&self) -> String {
        self.body.signature()
    }

    pub fn is_active(&self) -> bool {
        self.status == ConstraintStatus::Active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClarificationKind {
    /// A taste word with a fixed list of readings.
    Subjective,
    /// An unknown mention; candidates are proposed graph labels.
    Synonym,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clarification {
    pub term: String,
    pub kind: ClarificationKind,
    pub candidates: Vec<String>,
}

/// A static synonym that was applied during parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub alias: String,
    pub canonical: String,
    pub node: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    /// An inclusion brings in a class the flag rules out.
    FlagViolation,
    OppositeFlags,
    IncludeExclude,
    EmptyInterval,
    OppositeMethods,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ResolutionStatus {
    Unresolved,
    Resolved { kept: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    /// `"<sig a> vs <sig b>"` with the signatures in sorted order.
    pub id: String,
    pub a: String,
    pub b: String,
    pub kind: ConflictKind,
    pub explanation: String,
    pub status: ResolutionStatus,
}

impl Conflict {
    pub fn new(x: &ConstraintBody, y: &ConstraintBody, kind: ConflictKind, explanation: String) -> Self {
        let (a, b) = ordered_pair(x.signature(), y.signature());
        Conflict {
            id: conflict_id(&a, &b),
            a,
            b,
            kind,
            explanation,
            status: ResolutionStatus::Unresolved,
        }
    }

    pub fn involves(&self, signature: &str) -> bool {
        self.a == signature || self.b == signature
    }

    pub fn other(&self, signature: &str) -> Option<&str> {
        if self.a == signature {
            Some(&self.b)
        } else if self.b == signature {
            Some(&self.a)
        } else {
            None
        }
    }

    pub fn is_unresolved(&self) -> bool {
        self.status == ResolutionStatus::Unresolved
    }
}

pub fn ordered_pair(x: String, y: String) -> (String, String) {
    if x <= y {
        (x, y)
    } else {
        (y, x)
    }
}

pub fn conflict_id(a: &str, b: &str) -> String {
    format!("{a} vs {b}")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
    #[serde(default)]
    pub pending_clarifications: Vec<Clarification>,
    #[serde(default)]
    pub conflicts: Vec<Conflict>,
    #[serde(default)]
    pub substitutions: Vec<Substitution>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty() && self.pending_clarifications.is_empty()
    }

    pub fn active(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter().filter(|c| c.is_active())
    }

    /// Active constraints the matcher may filter on.
    pub fn filters(&self) -> impl Iterator<Item = &Constraint> {
        self.active().filter(|c| c.body.is_filter_effective())
    }

    pub fn find(&self, signature: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.signature() == signature)
    }

    pub fn unresolved_conflicts(&self) -> impl Iterator<Item = &Conflict> {
        self.conflicts.iter().filter(|c| c.is_unresolved())
    }
}
