//! Model engine: structured analyst prompts, backend abstraction, and
//! strict parsing of model replies.

mod backend;
mod parse;
mod prompt;

pub use backend::{
    elicit, elicit_all, query, BackendKind, HttpPost, ModelBackend, PostError, QueryError,
    RemoteBackend, ReqwestPost, ScriptError, ScriptedBackend,
};
pub use parse::{parse_model_response, ParseError};
pub use prompt::{
    build_prompt, build_prompt_with_budget, build_reflection_prompt, render_verdict_line, Prompt,
    PromptError, ReflectionBlock, DEFAULT_SECTION_BUDGET, SCHEMA_INSTRUCTIONS,
};

use thiserror::Error;

use crate::model::RiskLabel;

/// Tolerance for the importance sum before a reply is rejected outright.
pub const IMPORTANCE_SUM_TOLERANCE: f64 = 0.02;
/// Tolerance for the importance sum after normalization.
pub const IMPORTANCE_NORMALIZED_TOLERANCE: f64 = 1e-9;

/// Per-dimension feature importance reported by a model. Sums to one after
/// parsing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Importance {
    pub behavior: f64,
    pub context: f64,
    pub ui: f64,
    pub database: f64,
}

impl Importance {
    pub fn sum(&self) -> f64 {
        self.behavior + self.context + self.ui + self.database
    }
}

/// One model's structured verdict for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub model_id: String,
    pub risk: RiskLabel,
    pub confidence: f64,
    pub justification: String,
    pub summary: String,
    pub importance: Importance,
    pub recommendations: Vec<String>,
}

/// Renders a model output back into the reply schema JSON. This is the
/// inverse of `parse_model_response` for valid outputs.
pub fn render_model_output(output: &ModelOutput) -> String {
    serde_json::json!({
        "risk": output.risk.as_str(),
        "confidence": output.confidence,
        "justification": output.justification,
        "summary": output.summary,
        "importance": {
            "behavior": output.importance.behavior,
            "context": output.importance.context,
            "ui": output.importance.ui,
            "database": output.importance.database,
        },
        "recommendations": output.recommendations,
    })
    .to_string()
}

/// Failures raised while eliciting a structured verdict from a backend.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}
