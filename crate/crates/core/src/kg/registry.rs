//! Relation vocabulary, loaded from `relations.csv`.

use std::collections::BTreeMap;
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::error::{KgError, Result};
use super::model::Relation;

pub const CONTAINS: &str = "contains";
pub const CONTAINS_INGREDIENT: &str = "containsIngredient";
pub const BELONGS_TO_CUISINE: &str = "belongsToCuisine";
pub const RECOMMENDS_FOR: &str = "recommendsFor";
pub const SUBSTITUTABLE_BY: &str = "substitutableBy";
pub const DERIVES_FROM: &str = "derivesFrom";
pub const NEUTRALIZE_ODOR: &str = "neutralizeOdor";

/// Relations followed when asking what a recipe is made of.
pub const COMPOSITION: [&str; 3] = [CONTAINS, CONTAINS_INGREDIENT, DERIVES_FROM];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub name: Relation,
    pub description: String,
    pub inverse_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationRegistry {
    relations: BTreeMap<Relation, RelationSpec>,
}

impl Default for RelationRegistry {
    /// The seven relations every corpus is expected to use.
    fn default() -> Self {
        let mut reg = RelationRegistry {
            relations: BTreeMap::new(),
        };
        for (name, inverse) in [
            (CONTAINS, "containedIn"),
            (BELONGS_TO_CUISINE, "cuisineOf"),
            (RECOMMENDS_FOR, "recommendedBy"),
            (SUBSTITUTABLE_BY, "substitutes"),
            (CONTAINS_INGREDIENT, "ingredientOf"),
            (DERIVES_FROM, "sourceOf"),
            (NEUTRALIZE_ODOR, "odorNeutralizedBy"),
        ] {
            reg.register(name, "", Some(inverse));
        }
        reg
    }
}

#[derive(Debug, Deserialize)]
struct RelationRow {
    relation: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    inverse_name: String,
}

impl RelationRegistry {
    pub fn empty() -> Self {
        RelationRegistry {
            relations: BTreeMap::new(),
        }
    }

    /// Reads a `relation,description,inverse_name` manifest. The default seven
    /// relations are always present; the manifest may add to or describe them.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut reg = RelationRegistry::default();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        for row in rdr.deserialize::<RelationRow>() {
            let row = row?;
            if row.relation.is_empty() {
                return Err(KgError::MalformedRow {
                    file: "relations.csv".into(),
                    line: 0,
                    reason: "empty relation name".into(),
                });
            }
            let inverse = (!row.inverse_name.is_empty()).then_some(row.inverse_name.as_str());
            reg.register(&row.relation, &row.description, inverse);
        }
        Ok(reg)
    }

    pub fn register(&mut self, name: &str, description: &str, inverse_name: Option<&str>) -> Relation {
        let rel: Relation = Arc::from(name);
        self.relations.insert(
            rel.clone(),
            RelationSpec {
                name: rel.clone(),
                description: description.to_string(),
                inverse_name: inverse_name.map(str::to_string),
            },
        );
        rel
    }

    /// Returns the interned name if registered.
    pub fn get(&self, name: &str) -> Option<Relation> {
        self.relations.get_key_value(name).map(|(k, _)| k.clone())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.relations.contains_key(name)
    }

    pub fn spec(&self, name: &str) -> Option<&RelationSpec> {
        self.relations.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &Relation> {
        self.relations.keys()
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}
