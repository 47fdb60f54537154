//! Offline provider whose every answer is a fixed function of the envelope.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::{json, Value};

use super::prompt::{PromptEnvelope, Task};
use super::{LlmError, LlmProvider, QueryContext, Result};
use crate::matcher::{DishFacts, MatchStatus, SummaryPayload};
use crate::query::{classify_by_rules, Clarification, ClarificationKind, PriorTurn};

pub const EMPTY_SUMMARY: &str = "No recipes match the current preferences.";
const NOTHING_SHOWN: &str = "There are no recipes on screen yet. Ask for recommendations first.";
const STARTERS: [&str; 3] = [
    "Find me a vegan lunch under 400 kcal",
    "Recommend some low sodium dinners",
    "Show me high protein recipes with chicken",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider;

fn bad_input(task: Task, e: impl std::fmt::Display) -> LlmError {
    LlmError::Transport {
        provider: "mock".into(),
        detail: format!("malformed {} input: {e}", task.as_str()),
    }
}

fn field<T: serde::de::DeserializeOwned>(env: &PromptEnvelope, key: &str) -> Result<T> {
    let v = env.structured_inputs.get(key).cloned().unwrap_or(Value::Null);
    serde_json::from_value(v).map_err(|e| bad_input(env.task, e))
}

impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, env: &PromptEnvelope) -> Result<Value> {
        match env.task {
            Task::IntentClassification => {
                let message: String = field(env, "message")?;
                let history: Vec<PriorTurn> = field(env, "history")?;
                let intent = classify_by_rules(&message, &history);
                Ok(json!({
                    "category": intent.category,
                    "confidence": intent.confidence,
                    "rationale": intent.rationale,
                }))
            }
            Task::Summary => {
                let payload: SummaryPayload = field(env, "payload")?;
                let question: Option<String> = field(env, "question")?;
                let text = match question {
                    Some(_) => nutrition_answer(&payload),
                    None => summary_text(&payload),
                };
                Ok(json!({ "text": text }))
            }
            Task::QueryGeneration => {
                let ctx: QueryContext =
                    serde_json::from_value(env.structured_inputs.clone()).map_err(|e| bad_input(env.task, e))?;
                Ok(json!({ "queries": suggestions(&ctx) }))
            }
            Task::RelationExtraction => {
                let text: String = field(env, "text")?;
                let allowed: Vec<String> = field(env, "relations")?;
                let relations: Vec<Value> = extract(&text)
                    .into_iter()
                    .filter(|r| allowed.iter().any(|a| a == r.1))
                    .map(|(s, rel, o, ev)| json!({"subject": s, "relation": rel, "object": o, "evidence": ev}))
                    .collect();
                Ok(json!({ "relations": relations }))
            }
            Task::SynonymProposal => {
                let term: String = field(env, "term")?;
                let labels: Vec<String> = field(env, "labels")?;
                Ok(json!({ "candidates": similar_labels(&term, &labels) }))
            }
            Task::Clarification => {
                let c: Clarification = field(env, "clarification")?;
                Ok(json!({ "text": clarification_text(&c) }))
            }
        }
    }
}

/// "a", "a and b", "a, b and c".
fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn join_or(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} or {last}", init.join(", ")),
    }
}

fn attr_phrase(attr: &str, display: &str) -> String {
    if attr == "calories" {
        display.to_string()
    } else {
        format!("{display} {attr}")
    }
}

fn reason_phrase(detail: &str) -> String {
    if let Some(attr) = detail.strip_prefix("attribute_missing: ") {
        format!("its {attr} is not recorded")
    } else if let Some(nodes) = detail.strip_prefix("unknown class: ") {
        format!("the class of {nodes} is unknown")
    } else {
        detail.to_string()
    }
}

fn dish_paragraph(d: &DishFacts) -> String {
    let mut s = d.name.clone();
    let facts: Vec<String> = d.key_attrs.iter().map(|a| attr_phrase(&a.attr, &a.display)).collect();
    if facts.is_empty() {
        s.push_str(" fits your request.");
    } else {
        s.push_str(&format!(" has {}.", join_and(&facts)));
    }
    let tags: Vec<String> = d
        .tags
        .iter()
        .map(|t| if t.starts_with("excludes ") { t.clone() } else { format!("is {t}") })
        .collect();
    if !tags.is_empty() {
        s.push_str(&format!(" It {}.", join_and(&tags)));
    }
    if !d.satisfied.is_empty() {
        s.push_str(&format!(" It meets: {}.", d.satisfied.join("; ")));
    }
    if d.status == MatchStatus::Borderline {
        let why: Vec<String> = d.unknown.iter().map(|u| reason_phrase(u)).collect();
        s.push_str(&format!(" It is a borderline match because {}.", join_and(&why)));
    }
    for sub in &d.substitutions {
        s.push_str(&format!(" {sub}."));
    }
    s
}

pub fn summary_text(p: &SummaryPayload) -> String {
    if p.dishes.is_empty() {
        return EMPTY_SUMMARY.to_string();
    }
    p.dishes.iter().map(dish_paragraph).collect::<Vec<_>>().join("\n\n")
}

pub fn nutrition_answer(p: &SummaryPayload) -> String {
    if p.dishes.is_empty() {
        return NOTHING_SHOWN.to_string();
    }
    let mut s = String::from("Nutritional values of the current recipes:");
    for d in &p.dishes {
        let facts: Vec<String> = d.key_attrs.iter().map(|a| attr_phrase(&a.attr, &a.display)).collect();
        let facts = if facts.is_empty() {
            "no values recorded".to_string()
        } else {
            facts.join(", ")
        };
        s.push_str(&format!("\n- {}: {facts}", d.name));
    }
    s
}

fn nutrient_word(attr: &str) -> &str {
    match attr {
        "calories" => "calorie",
        other => other,
    }
}

const FLAG_WORDS: [(&str, &str); 4] = [
    ("isVegan", "vegan"),
    ("isGlutenFree", "gluten free"),
    ("isDairyFree", "dairy free"),
    ("isLowCarb", "low carb"),
];

fn suggestions(ctx: &QueryContext) -> Vec<String> {
    if ctx.dishes.is_empty() && ctx.constraints.is_empty() {
        return STARTERS.iter().map(|s| s.to_string()).collect();
    }
    let top = ctx.dishes.first().map(String::as_str).unwrap_or("these recipes");
    let first = if let Some(a) = ctx.reduced.first() {
        format!("Show lower {} alternatives to {top}", nutrient_word(a))
    } else if let Some(a) = ctx.increased.first() {
        format!("Find high {} recipes like {top}", nutrient_word(a))
    } else {
        format!("Show lower sodium alternatives to {top}")
    };
    let third = FLAG_WORDS
        .iter()
        .find(|(flag, _)| !ctx.flags.iter().any(|f| f == flag))
        .map(|(_, word)| format!("Find {word} recipes similar to {top}"))
        .unwrap_or_else(|| "Recommend some high fiber recipes".to_string());
    vec![
        first,
        "What are the nutritional values of these recipes?".to_string(),
        third,
    ]
}

type Pattern = (Regex, &'static str);

/// Sentence patterns and the relation each one states.
static PATTERNS: LazyLock<Vec<Pattern>> = LazyLock::new(|| {
    let p = |re: &str, rel| (Regex::new(re).unwrap(), rel);
    vec![
        p(
            r"(?i)^(.+?)\s+(?:alleviates|neutralizes|neutralises|masks|removes)\s+(?:the\s+)?(\w+?)\s+(?:odou?r|smell)\b",
            "neutralizeOdor",
        ),
        p(
            r"(?i)^(.+?)\s+can\s+be\s+(?:replaced|substituted)\s+(?:with|by)\s+(.+?)(?:\s+in\s+.*)?$",
            "substitutableBy",
        ),
        p(r"(?i)^(.+?)\s+is\s+(?:recommended|good)\s+for\s+(.+)$", "recommendsFor"),
        p(r"(?i)^(.+?)\s+is\s+(?:made|produced|derived)\s+from\s+(.+)$", "derivesFrom"),
    ]
});

/// (subject, relation, object, evidence) for every sentence a pattern fits.
pub fn extract(text: &str) -> Vec<(String, &'static str, String, String)> {
    let mut out = Vec::new();
    for sentence in text.split(['.', '!', '?', '\n']).map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((caps, rel)) = PATTERNS.iter().find_map(|(re, rel)| re.captures(sentence).map(|c| (c, *rel))) {
            out.push((
                caps[1].trim().to_lowercase(),
                rel,
                caps[2].trim().to_lowercase(),
                sentence.to_string(),
            ));
        }
    }
    out
}

fn similar_labels(term: &str, labels: &[String]) -> Vec<String> {
    let t = term.to_lowercase();
    let mut scored: Vec<(f64, &String)> = labels
        .iter()
        .map(|l| (strsim::jaro_winkler(&t, &l.to_lowercase()), l))
        .filter(|(s, _)| *s >= 0.85)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.dedup_by(|a, b| a.1 == b.1);
    scored.into_iter().take(3).map(|(_, l)| l.clone()).collect()
}

fn clarification_text(c: &Clarification) -> String {
    match (c.kind, c.candidates.is_empty()) {
        (ClarificationKind::Subjective, _) => {
            format!("When you say \"{}\", do you mean {}?", c.term, join_or(&c.candidates))
        }
        (ClarificationKind::Synonym, false) => {
            format!("I could not find \"{}\". Did you mean {}?", c.term, join_or(&c.candidates))
        }
        (ClarificationKind::Synonym, true) => format!(
            "I could not find \"{}\" among the known ingredients. Could you describe it differently?",
            c.term
        ),
    }
}
