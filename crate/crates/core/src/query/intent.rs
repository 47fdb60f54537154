//! Intent categories and the deterministic keyword classifier that backs the
//! offline provider.
//!
//! Rules, first match wins:
//! 1. a recommendation is already on screen and the message carries an
//!    override word ("remove", "instead", "without", ...) → constraint_override
//! 2. a search verb ("recommend", "find", "suggest", "show", ...) → recipe_search
//! 3. the message opens with a question word ("what", "how", "why", ...) →
//!    information_request
//! 4. a dietary keyword or meal noun ("vegan", "calories", "lunch", ...) →
//!    recipe_search
//! 5. an override word with nothing on screen yet → recipe_search
//! 6. otherwise → general_clarification

use serde::{Deserialize, Serialize};

use super::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentCategory {
    RecipeSearch,
    ConstraintOverride,
    InformationRequest,
    GeneralClarification,
}

impl IntentCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            IntentCategory::RecipeSearch => "recipe_search",
            IntentCategory::ConstraintOverride => "constraint_override",
            IntentCategory::InformationRequest => "information_request",
            IntentCategory::GeneralClarification => "general_clarification",
        }
    }

    /// Intents whose messages are parsed into constraints.
    pub fn bears_constraints(self) -> bool {
        matches!(self, IntentCategory::RecipeSearch | IntentCategory::ConstraintOverride)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub category: IntentCategory,
    pub confidence: f64,
    pub rationale: String,
}

/// What the classifier needs to know about earlier turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorTurn {
    pub message: String,
    pub produced_recommendation: bool,
}

const OVERRIDE_WORDS: &[&str] = &[
    "remove", "instead", "without", "exclude", "add", "replace", "swap", "drop", "dislike", "avoid",
    "skip", "include", "substitute",
];

const SEARCH_PHRASES: &[&str] = &[
    "recommend", "recommendation", "recommendations", "find", "suggest", "suggestions", "show", "looking for",
    "give me", "search", "list",
];

const QUESTION_WORDS: &[&str] = &[
    "what", "how", "why", "which", "is", "are", "does", "do", "can", "could", "should", "when", "where", "who",
];

const DIET_WORDS: &[&str] = &[
    "recipe", "recipes", "dish", "dishes", "meal", "meals", "lunch", "dinner", "breakfast", "snack", "vegan",
    "vegetarian", "pescatarian", "keto", "calories", "calorie", "kcal", "protein", "sodium", "salt", "sugar",
    "fiber", "fibre", "carbs", "carb", "fat", "gluten", "dairy", "under", "below", "reduce", "low", "high",
    "healthy", "cook", "eat",
];

fn has_phrase(words: &[String], phrase: &str) -> Option<String> {
    let parts: Vec<&str> = phrase.split(' ').collect();
    words
        .windows(parts.len())
        .any(|w| w.iter().zip(&parts).all(|(a, b)| a == b))
        .then(|| phrase.to_string())
}

fn first_hit(words: &[String], table: &[&str]) -> Option<String> {
    table.iter().find_map(|p| has_phrase(words, p))
}

/// Deterministic rule classifier. `message` must be non-blank.
pub fn classify_by_rules(message: &str, history: &[PriorTurn]) -> Intent {
    let words: Vec<String> = tokenize(message).into_iter().map(|t| t.text).collect();
    let on_screen = history.iter().any(|t| t.produced_recommendation);
    let make = |category, confidence, rationale: String| Intent { category, confidence, rationale };

    if on_screen {
        if let Some(w) = first_hit(&words, OVERRIDE_WORDS) {
            return make(
                IntentCategory::ConstraintOverride,
                0.85,
                format!("override word `{w}` after a recommendation"),
            );
        }
    }
    if let Some(w) = first_hit(&words, SEARCH_PHRASES) {
        return make(IntentCategory::RecipeSearch, 0.9, format!("search phrase `{w}`"));
    }
    if let Some(first) = words.first().filter(|w| QUESTION_WORDS.contains(&w.as_str())) {
        return make(
            IntentCategory::InformationRequest,
            0.8,
            format!("opens with question word `{first}`"),
        );
    }
    if let Some(w) = first_hit(&words, DIET_WORDS) {
        return make(IntentCategory::RecipeSearch, 0.7, format!("dietary keyword `{w}`"));
    }
    if let Some(w) = first_hit(&words, OVERRIDE_WORDS) {
        return make(
            IntentCategory::RecipeSearch,
            0.6,
            format!("preference word `{w}` with no recommendation yet"),
        );
    }
    make(IntentCategory::GeneralClarification, 0.5, "no rule matched".to_string())
}

/// Whether the message asks for recipes outright, so an empty constraint set
/// means "show everything".
pub fn is_bare_search(message: &str) -> bool {
    let words: Vec<String> = tokenize(message).into_iter().map(|t| t.text).collect();
    first_hit(&words, SEARCH_PHRASES).is_some() || first_hit(&words, &DIET_WORDS[..10]).is_some()
}
