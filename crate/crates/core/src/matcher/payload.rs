//! Structured per-dish facts handed to text generation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::eval::{RecipeFacts, Verdict};
use super::{MatchResult, MatchStatus};
use crate::corpus::Entailments;
use crate::kg::{format_number, GraphSnapshot, Quantity, Unit};
use crate::query::{ConstraintBody, ConstraintSet, EntityRef};

/// A qualitative label for values of `nutrient` below `below` (in `unit`);
/// the last band of a nutrient may leave `below` unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub nutrient: String,
    #[serde(default)]
    pub below: Option<f64>,
    pub unit: Unit,
    pub label: String,
}

pub fn default_bands() -> Vec<Band> {
    let b = |nutrient: &str, below: Option<f64>, unit, label: &str| Band {
        nutrient: nutrient.into(),
        below,
        unit,
        label: label.into(),
    };
    vec![
        b("protein", Some(8.0), Unit::G, "low in protein"),
        b("protein", Some(15.0), Unit::G, "moderate in protein"),
        b("protein", Some(25.0), Unit::G, "moderately high in protein"),
        b("protein", None, Unit::G, "high in protein"),
        b("sodium", Some(140.0), Unit::Mg, "very low in sodium"),
        b("sodium", Some(400.0), Unit::Mg, "low in sodium"),
        b("sodium", Some(800.0), Unit::Mg, "moderate in sodium"),
        b("sodium", None, Unit::Mg, "high in sodium"),
        b("fiber", Some(3.0), Unit::G, "low in fiber"),
        b("fiber", Some(6.0), Unit::G, "a good source of fiber"),
        b("fiber", None, Unit::G, "high in fiber"),
    ]
}

/// First band of `nutrient` whose upper limit lies above `q`.
pub fn band_label<'b>(bands: &'b [Band], nutrient: &str, q: &Quantity) -> Option<&'b str> {
    bands
        .iter()
        .filter(|b| b.nutrient == nutrient)
        .find(|b| match b.below {
            Some(limit) => q.canonical_value() < Quantity::new(limit, b.unit).canonical_value(),
            None => true,
        })
        .map(|b| b.label.as_str())
}

/// Attributes always reported when present.
const KEY_ATTRS: [&str; 3] = ["calories", "protein", "sodium"];
/// Allergen classes reported as "excludes X" when provably absent.
const FREE_OF: [&str; 3] = ["dairy", "gluten", "shellfish"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrFact {
    pub attr: String,
    pub value: f64,
    pub unit: Unit,
    /// Human rendering such as "420 mg"; every numeral in generated text must
    /// come from one of these.
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DishFacts {
    pub id: String,
    pub name: String,
    pub status: MatchStatus,
    pub key_attrs: Vec<AttrFact>,
    pub tags: Vec<String>,
    pub satisfied: Vec<String>,
    pub unknown: Vec<String>,
    pub substitutions: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryPayload {
    pub dishes: Vec<DishFacts>,
    /// Descriptions of the active constraints.
    pub constraints: Vec<String>,
}

/// Mass values shown in the unit people expect: sodium in mg, the rest in g.
fn display_quantity(attr: &str, q: &Quantity) -> (f64, Unit) {
    let (v, u) = match (attr, q.unit.canonical()) {
        ("sodium", Unit::G) => (q.canonical_value() * 1000.0, Unit::Mg),
        (_, Unit::G) => (q.canonical_value(), Unit::G),
        (_, u) => (q.value, u),
    };
    ((v * 100.0).round() / 100.0, u)
}

pub fn attr_fact(attr: &str, q: &Quantity) -> AttrFact {
    let (value, unit) = display_quantity(attr, q);
    let display = match unit {
        Unit::None => format_number(value),
        u => format!("{} {}", format_number(value), u.as_str()),
    };
    AttrFact {
        attr: attr.to_string(),
        value,
        unit,
        display,
    }
}

pub fn build_payload(
    results: &[MatchResult],
    set: &ConstraintSet,
    graph: &GraphSnapshot,
    entailments: &Entailments,
    bands: &[Band],
) -> SummaryPayload {
    let mut attrs: Vec<String> = KEY_ATTRS.iter().map(|s| s.to_string()).collect();
    let mut classes: BTreeSet<String> = FREE_OF.iter().map(|s| s.to_string()).collect();
    for c in set.filters() {
        match &c.body {
            ConstraintBody::Bound { attr, .. } if !attrs.contains(attr) => attrs.push(attr.clone()),
            ConstraintBody::Flag { name, value: true } => classes.extend(entailments.classes(name).map(String::from)),
            ConstraintBody::ExcludeEntity {
                entity: EntityRef::Class { name },
            } => {
                classes.insert(name.clone());
            }
            _ => {}
        }
    }

    let dishes = results
        .iter()
        .filter_map(|r| {
            let node = graph.node(r.recipe.as_str())?;
            let facts = RecipeFacts::new(graph, &node.id);
            let key_attrs: Vec<AttrFact> = attrs
                .iter()
                .filter_map(|a| node.numeric_attrs.get(a).map(|q| attr_fact(a, q)))
                .collect();
            let mut tags = Vec::new();
            if facts.unclassified.is_empty() {
                for class in &classes {
                    let probe = ConstraintBody::ExcludeEntity {
                        entity: EntityRef::class(class.clone()),
                    };
                    if facts.evaluate(&probe, entailments) == Verdict::Satisfied {
                        tags.push(format!("excludes {class}"));
                    }
                }
            }
            for a in &attrs {
                if let Some(label) = node.numeric_attrs.get(a).and_then(|q| band_label(bands, a, q)) {
                    tags.push(label.to_string());
                }
            }
            Some(DishFacts {
                id: node.id.to_string(),
                name: node.label.clone(),
                status: r.status,
                key_attrs,
                tags,
                satisfied: r
                    .satisfied
                    .iter()
                    .filter_map(|sig| set.find(sig))
                    .map(|c| c.body.describe())
                    .collect(),
                unknown: r.violated_or_unknown.iter().map(|u| u.detail.clone()).collect(),
                substitutions: r
                    .substitutions
                    .iter()
                    .map(|s| format!("{} stands in for {}", s.via, s.wanted))
                    .collect(),
            })
        })
        .collect();

    SummaryPayload {
        dishes,
        constraints: set.filters().map(|c| c.body.describe()).collect(),
    }
}
