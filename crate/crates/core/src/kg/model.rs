use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Stable, opaque node identifier. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(Arc<str>);

impl NodeId {
    pub fn new(id: impl AsRef<str>) -> Self {
        NodeId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId::new(s)
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(Arc::from(s))
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Interned relation name.
pub type Relation = Arc<str>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Recipe,
    Ingredient,
    Nutrient,
    Condition,
    Cuisine,
    Method,
    Benefit,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Recipe => "recipe",
            NodeKind::Ingredient => "ingredient",
            NodeKind::Nutrient => "nutrient",
            NodeKind::Condition => "condition",
            NodeKind::Cuisine => "cuisine",
            NodeKind::Method => "method",
            NodeKind::Benefit => "benefit",
        }
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "recipe" => NodeKind::Recipe,
            "ingredient" => NodeKind::Ingredient,
            "nutrient" => NodeKind::Nutrient,
            "condition" => NodeKind::Condition,
            "cuisine" => NodeKind::Cuisine,
            "method" => NodeKind::Method,
            "benefit" => NodeKind::Benefit,
            other => return Err(format!("unknown node kind `{other}`")),
        })
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Kcal,
    G,
    Mg,
    None,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Kcal => "kcal",
            Unit::G => "g",
            Unit::Mg => "mg",
            Unit::None => "none",
        }
    }

    pub fn is_mass(self) -> bool {
        matches!(self, Unit::G | Unit::Mg)
    }

    /// Factor that converts a value in this unit to the canonical unit of its
    /// dimension (grams for mass).
    pub fn to_canonical_factor(self) -> f64 {
        match self {
            Unit::Mg => 0.001,
            _ => 1.0,
        }
    }

    pub fn canonical(self) -> Unit {
        match self {
            Unit::Mg => Unit::G,
            u => u,
        }
    }

    /// Two units can be compared when they measure the same dimension.
    pub fn compatible(self, other: Unit) -> bool {
        self.canonical() == other.canonical()
    }
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "kcal" | "cal" | "calories" => Unit::Kcal,
            "g" | "gram" | "grams" => Unit::G,
            "mg" | "milligram" | "milligrams" => Unit::Mg,
            "none" | "-" => Unit::None,
            other => return Err(format!("unknown unit `{other}`")),
        })
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Quantity { value, unit }
    }

    /// Value expressed in the canonical unit (g for mass, kcal for energy).
    pub fn canonical_value(&self) -> f64 {
        self.value * self.unit.to_canonical_factor()
    }

    pub fn canonicalized(&self) -> Quantity {
        Quantity::new(self.canonical_value(), self.unit.canonical())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityNode {
    pub id: NodeId,
    pub label: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub numeric_attrs: BTreeMap<String, Quantity>,
    #[serde(default)]
    pub categorical_attrs: BTreeMap<String, String>,
}

impl EntityNode {
    pub fn new(id: impl Into<NodeId>, label: impl Into<String>, kind: NodeKind) -> Self {
        EntityNode {
            id: id.into(),
            label: label.into(),
            kind,
            numeric_attrs: BTreeMap::new(),
            categorical_attrs: BTreeMap::new(),
        }
    }

    pub fn with_numeric(mut self, attr: &str, value: f64, unit: Unit) -> Self {
        self.numeric_attrs
            .insert(attr.to_string(), Quantity::new(value, unit).canonicalized());
        self
    }

    pub fn with_categorical(mut self, attr: &str, value: &str) -> Self {
        self.categorical_attrs
            .insert(attr.to_string(), value.to_string());
        self
    }

    /// All categorical values carried by this node; these act as class labels.
    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.categorical_attrs.values().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Curated,
    Inferred,
    User,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Curated => "curated",
            Provenance::Inferred => "inferred",
            Provenance::User => "user",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "" | "curated" => Provenance::Curated,
            "inferred" => Provenance::Inferred,
            "user" => Provenance::User,
            other => return Err(format!("unknown provenance `{other}`")),
        })
    }
}

/// (subject, relation, object) identity of an edge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripleKey {
    pub subject: NodeId,
    pub relation: Relation,
    pub object: NodeId,
}

impl TripleKey {
    pub fn new(subject: impl Into<NodeId>, relation: &str, object: impl Into<NodeId>) -> Self {
        TripleKey {
            subject: subject.into(),
            relation: Arc::from(relation),
            object: object.into(),
        }
    }
}

impl fmt::Display for TripleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub subject: NodeId,
    pub relation: Relation,
    pub object: NodeId,
    pub provenance: Provenance,
    pub version: u64,
}

impl RelationEdge {
    pub fn new(
        subject: impl Into<NodeId>,
        relation: &str,
        object: impl Into<NodeId>,
        provenance: Provenance,
    ) -> Self {
        RelationEdge {
            subject: subject.into(),
            relation: Arc::from(relation),
            object: object.into(),
            provenance,
            version: 0,
        }
    }

    pub fn key(&self) -> TripleKey {
        TripleKey {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
            object: self.object.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Out,
    In,
    Both,
}

/// One adjacency-list entry as stored on a node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Adjacent {
    pub relation: Relation,
    pub neighbor: NodeId,
    pub outgoing: bool,
}
