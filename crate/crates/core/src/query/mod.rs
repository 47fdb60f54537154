//! From a free-text message to an intent and a symbolic constraint set.

mod conflict;
mod constraint;
pub mod intent;
pub mod lexicon;
mod parse;
pub mod text;

use thiserror::Error;

pub use conflict::{composition_classes, detect_conflicts, pair_conflict};
pub use constraint::{
    conflict_id, Citation, Clarification, ClarificationKind, Comparator, Conflict, ConflictKind, Constraint,
    ConstraintBody, ConstraintKind, ConstraintSet, ConstraintStatus, EntityRef, Origin, ResolutionStatus,
    Substitution,
};
pub use intent::{classify_by_rules, Intent, IntentCategory, PriorTurn};
pub use lexicon::{Lexicon, Resolution};
pub use parse::{
    default_nutrient_defaults, extract_keywords, parse_constraints, GoalDirection, Mention, MentionKind,
    NutrientDefault, ParseContext, Parsed, Threshold,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("message is empty")]
    EmptyMessage,
    #[error("message contains no dietary constraint or recognizable ingredient")]
    NoParsableContent,
}
