//! Strict parsing of model replies: find the first JSON object in the raw
//! text, then validate it against the reply schema.

use serde_json::Value;
use thiserror::Error;

use crate::model::RiskLabel;

use super::{Importance, ModelOutput, IMPORTANCE_NORMALIZED_TOLERANCE, IMPORTANCE_SUM_TOLERANCE};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("model {model} returned no JSON object")]
    NoJson { model: String },
    #[error("model {model} reply rejected, field {field}: {reason}")]
    Schema { model: String, field: String, reason: String },
}

fn schema_err(model: &str, field: &str, reason: impl std::fmt::Display) -> ParseError {
    ParseError::Schema {
        model: model.to_string(),
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

/// Finds the first parseable JSON object inside `raw`, tolerating prose and
/// code fences around it. Every `{` starts a candidate; the first balanced
/// span that parses as an object wins.
fn extract_first_object(raw: &str) -> Option<Value> {
    let bytes = raw.as_bytes();
    for start in 0..bytes.len() {
        if bytes[start] != b'{' {
            continue;
        }
        if let Some(end) = matching_brace(bytes, start) {
            if let Ok(value) = serde_json::from_str::<Value>(&raw[start..=end]) {
                if value.is_object() {
                    return Some(value);
                }
            }
        }
    }
    None
}

/// Returns the index of the `}` balancing the `{` at `start`, honouring
/// JSON string quoting and escapes.
fn matching_brace(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn required_str(obj: &Value, model: &str, field: &str) -> Result<String, ParseError> {
    obj.get(field)
        .ok_or_else(|| schema_err(model, field, "missing"))?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| schema_err(model, field, "must be a string"))
}

fn required_number(obj: &Value, model: &str, field: &str) -> Result<f64, ParseError> {
    let n = obj
        .get(field)
        .ok_or_else(|| schema_err(model, field, "missing"))?
        .as_f64()
        .ok_or_else(|| schema_err(model, field, "must be a number"))?;
    if !n.is_finite() {
        return Err(schema_err(model, field, "must be finite"));
    }
    Ok(n)
}

/// Parses and validates one raw model reply.
///
/// Validation: `risk` must be one of the three labels, `confidence` must lie
/// in [0,1], and the four importance weights must be non-negative and sum to
/// 1 within 0.02; they are then renormalized to sum to 1 exactly (within
/// 1e-9). Missing `recommendations` defaults to an empty list; every other
/// field is required.
pub fn parse_model_response(raw: &str, model_id: &str) -> Result<ModelOutput, ParseError> {
    let obj =
        extract_first_object(raw).ok_or_else(|| ParseError::NoJson { model: model_id.to_string() })?;

    let risk_text = required_str(&obj, model_id, "risk")?;
    let risk: RiskLabel =
        risk_text.parse().map_err(|e: String| schema_err(model_id, "risk", e))?;

    let confidence = required_number(&obj, model_id, "confidence")?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(schema_err(model_id, "confidence", format!("{confidence} outside [0,1]")));
    }

    let justification = required_str(&obj, model_id, "justification")?;
    let summary = required_str(&obj, model_id, "summary")?;

    let importance_obj = obj
        .get("importance")
        .ok_or_else(|| schema_err(model_id, "importance", "missing"))?;
    if !importance_obj.is_object() {
        return Err(schema_err(model_id, "importance", "must be an object"));
    }
    let mut importance = Importance {
        behavior: required_number(importance_obj, model_id, "behavior")?,
        context: required_number(importance_obj, model_id, "context")?,
        ui: required_number(importance_obj, model_id, "ui")?,
        database: required_number(importance_obj, model_id, "database")?,
    };
    for (name, w) in [
        ("behavior", importance.behavior),
        ("context", importance.context),
        ("ui", importance.ui),
        ("database", importance.database),
    ] {
        if w < 0.0 {
            return Err(schema_err(model_id, "importance", format!("{name} weight {w} is negative")));
        }
    }
    let sum = importance.sum();
    if (sum - 1.0).abs() > IMPORTANCE_SUM_TOLERANCE {
        return Err(schema_err(
            model_id,
            "importance",
            format!("weights sum to {sum}, deviation exceeds {IMPORTANCE_SUM_TOLERANCE}"),
        ));
    }
    if (sum - 1.0).abs() > IMPORTANCE_NORMALIZED_TOLERANCE {
        importance = Importance {
            behavior: importance.behavior / sum,
            context: importance.context / sum,
            ui: importance.ui / sum,
            database: importance.database / sum,
        };
    }

    let recommendations = match obj.get("recommendations") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| schema_err(model_id, "recommendations", "entries must be strings"))
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(schema_err(model_id, "recommendations", "must be a list")),
    };

    Ok(ModelOutput {
        model_id: model_id.to_string(),
        risk,
        confidence,
        justification,
        summary,
        importance,
        recommendations,
    })
}
