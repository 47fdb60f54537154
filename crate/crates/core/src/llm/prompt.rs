//! Task envelopes and their prompt templates.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    IntentClassification,
    Summary,
    QueryGeneration,
    RelationExtraction,
    SynonymProposal,
    Clarification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::IntentClassification => "intent_classification",
            Task::Summary => "summary",
            Task::QueryGeneration => "query_generation",
            Task::RelationExtraction => "relation_extraction",
            Task::SynonymProposal => "synonym_proposal",
            Task::Clarification => "clarification",
        }
    }

    fn instruction(self) -> &'static str {
        match self {
            Task::IntentClassification => {
                "Classify the user's message about food and nutrition into exactly one category: \
                 recipe_search, constraint_override, information_request or general_clarification. \
                 A message that changes earlier preferences after recipes were shown is a constraint_override."
            }
            Task::Summary => {
                "Write a short explanation of why each dish fits the user's preferences. Use only the \
                 facts in the input. Never state a number that does not appear in the input. If a \
                 question is given, answer it from the same facts."
            }
            Task::QueryGeneration => {
                "Propose exactly three short follow-up queries the user could send next. Refer to the \
                 current constraints or the dishes shown when there are any."
            }
            Task::RelationExtraction => {
                "Extract food-knowledge relations stated in the text. Use only relation names from the \
                 provided list. Return an empty list if the text states none."
            }
            Task::SynonymProposal => {
                "The term was not found in the food graph. Propose up to three graph labels it most \
                 likely refers to, best first, or none."
            }
            Task::Clarification => "Ask the user one short question that resolves the ambiguous term.",
        }
    }

    /// Shape the response must have.
    pub fn response_schema(self) -> Value {
        let obj = |required: &[&str], props: Value| {
            json!({"type": "object", "required": required, "properties": props})
        };
        let strings = json!({"type": "array", "items": {"type": "string"}});
        match self {
            Task::IntentClassification => obj(
                &["category", "confidence", "rationale"],
                json!({
                    "category": {"enum": ["recipe_search", "constraint_override", "information_request", "general_clarification"]},
                    "confidence": {"type": "number"},
                    "rationale": {"type": "string"}
                }),
            ),
            Task::Summary | Task::Clarification => obj(&["text"], json!({"text": {"type": "string"}})),
            Task::QueryGeneration => obj(&["queries"], json!({"queries": strings})),
            Task::RelationExtraction => obj(
                &["relations"],
                json!({"relations": {"type": "array", "items": obj(
                    &["subject", "relation", "object", "evidence"],
                    json!({
                        "subject": {"type": "string"},
                        "relation": {"type": "string"},
                        "object": {"type": "string"},
                        "evidence": {"type": "string"}
                    }),
                )}}),
            ),
            Task::SynonymProposal => obj(&["candidates"], json!({"candidates": strings})),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEnvelope {
    pub task: Task,
    pub structured_inputs: Value,
    pub rendered_prompt: String,
    pub response_schema: Value,
}

impl PromptEnvelope {
    pub fn new(task: Task, structured_inputs: Value) -> Self {
        let response_schema = task.response_schema();
        let rendered_prompt = render(task, &structured_inputs, &response_schema);
        PromptEnvelope {
            task,
            structured_inputs,
            rendered_prompt,
            response_schema,
        }
    }
}

/// The one template shared by every provider.
pub fn render(task: Task, inputs: &Value, schema: &Value) -> String {
    let pretty = |v: &Value| serde_json::to_string_pretty(v).expect("json values serialize");
    format!(
        "Task: {}\n{}\n\nInput:\n{}\n\nRespond with one JSON object matching this schema and nothing else:\n{}\n",
        task.as_str(),
        task.instruction(),
        pretty(inputs),
        pretty(schema)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_deterministic() {
        let a = PromptEnvelope::new(Task::Summary, json!({"dishes": [], "constraints": ["x"]}));
        let b = PromptEnvelope::new(Task::Summary, json!({"constraints": ["x"], "dishes": []}));
        assert_eq!(a.rendered_prompt, b.rendered_prompt);
        assert!(a.rendered_prompt.starts_with("Task: summary\n"));
    }
}
