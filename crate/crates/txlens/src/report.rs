//! Final report assembly: the structured JSON audit document and the
//! plain-text summary shown to the user before signing.
//!
//! Reports carry per-dimension component scores (mean of the final-round
//! models' importance weights), the evidence weights used in the prompt,
//! and full consensus provenance. Key order is fixed by struct declaration
//! so emitted documents diff cleanly.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusMode, ConsensusResult};
use crate::features::FeatureVector;
use crate::model::RiskLabel;

/// JSON Schema the emitted report validates against, shipped with the
/// crate for external consumers.
pub const REPORT_SCHEMA_JSON: &str = include_str!("../schemas/report.schema.json");

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Score, weight, and reasoning for one evidence dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    /// Mean importance the final-round models assigned this dimension,
    /// in [0, 1].
    pub score: f64,
    /// Evidence weight used in the prompt, mirroring the feature vector.
    pub weight: f64,
    pub reasoning: String,
}

/// The four evidence dimensions in report order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScores {
    pub behavior: ComponentScore,
    pub context: ComponentScore,
    pub ui: ComponentScore,
    pub database: ComponentScore,
}

/// One model's final verdict, kept in the report for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVerdict {
    pub id: String,
    pub risk: RiskLabel,
    pub confidence: f64,
}

/// How the consensus was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusMeta {
    pub mode: ConsensusMode,
    pub rounds_used: u32,
    pub primary_model: String,
    /// Final-round verdicts, in model order.
    pub models: Vec<ModelVerdict>,
}

/// The structured analysis report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub tx_reference: String,
    pub risk: RiskLabel,
    pub confidence: f64,
    pub summary: String,
    pub justification: String,
    pub recommendations: Vec<String>,
    pub components: ComponentScores,
    pub consensus: ConsensusMeta,
    pub tool_version: String,
    pub timestamp: DateTime<Utc>,
}

/// Run identity fields supplied by the caller.
#[derive(Debug, Clone)]
pub struct ReportMeta {
    pub tx_reference: String,
    pub tool_version: String,
    pub timestamp: DateTime<Utc>,
}

fn behavior_reasoning(fv: &FeatureVector) -> String {
    let b = &fv.behavior;
    format!(
        "{} call frame(s), {} transfer(s), {} approval(s), {} state change(s)",
        b.call_chain.len(),
        b.transfers.len(),
        b.approvals.len(),
        b.state_changes.len()
    )
}

fn context_reasoning(fv: &FeatureVector) -> String {
    let ctx = &fv.context;
    let mut flags = Vec::new();
    if ctx.excessive_unused_flag {
        flags.push("excessive unused gas");
    }
    if ctx.acceleration_flag {
        flags.push("gas price acceleration");
    }
    if ctx.rapid_sequence_flag {
        flags.push("rapid transaction sequence");
    }
    if flags.is_empty() {
        "no gas anomalies".to_string()
    } else {
        flags.join(", ")
    }
}

fn ui_reasoning(fv: &FeatureVector) -> String {
    let ui = &fv.ui;
    if !ui.present {
        return "no page context provided".to_string();
    }
    let domain = ui.main_domain.as_deref().unwrap_or("unknown");
    format!(
        "origin {domain}, {} calldata construction site(s), {} signing site(s)",
        ui.calldata_construction_sites.len(),
        ui.signing_initiation_sites.len()
    )
}

fn database_reasoning(fv: &FeatureVector) -> String {
    match fv.database.len() {
        0 => "no threat intelligence hits".to_string(),
        n => format!("{n} threat intelligence hit(s)"),
    }
}

/// Assembles the report from a consensus result and the feature vector
/// that produced the prompts.
pub fn build_report(
    result: &ConsensusResult,
    fv: &FeatureVector,
    meta: ReportMeta,
) -> AnalysisReport {
    let finals = result.transcripts.last().expect("consensus ran at least one round");
    let n = finals.len() as f64;
    let mean = |f: fn(&crate::llm::ModelOutput) -> f64| -> f64 {
        finals.iter().map(f).sum::<f64>() / n
    };
    let components = ComponentScores {
        behavior: ComponentScore {
            score: mean(|o| o.importance.behavior),
            weight: fv.weights.behavior,
            reasoning: behavior_reasoning(fv),
        },
        context: ComponentScore {
            score: mean(|o| o.importance.context),
            weight: fv.weights.context,
            reasoning: context_reasoning(fv),
        },
        ui: ComponentScore {
            score: mean(|o| o.importance.ui),
            weight: fv.weights.ui,
            reasoning: ui_reasoning(fv),
        },
        database: ComponentScore {
            score: mean(|o| o.importance.database),
            weight: fv.weights.database,
            reasoning: database_reasoning(fv),
        },
    };
    let models = finals
        .iter()
        .map(|o| ModelVerdict { id: o.model_id.clone(), risk: o.risk, confidence: o.confidence })
        .collect();
    AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tx_reference: meta.tx_reference,
        risk: result.decided_label,
        confidence: result.final_output.confidence,
        summary: result.final_output.summary.clone(),
        justification: result.final_output.justification.clone(),
        recommendations: result.final_output.recommendations.clone(),
        components,
        consensus: ConsensusMeta {
            mode: result.mode,
            rounds_used: result.rounds_used,
            primary_model: result.primary_model.clone(),
            models,
        },
        tool_version: meta.tool_version,
        timestamp: meta.timestamp,
    }
}

/// Serializes the report as pretty-printed JSON with stable key order.
pub fn emit_report_json(report: &AnalysisReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

/// Parses a previously emitted report document.
pub fn parse_report(text: &str) -> Result<AnalysisReport, serde_json::Error> {
    serde_json::from_str(text)
}

fn provenance_line(meta: &ConsensusMeta) -> String {
    match meta.mode {
        ConsensusMode::Unanimous => format!(
            "Decision: unanimous across {} model(s), primary {}",
            meta.models.len(),
            meta.primary_model
        ),
        ConsensusMode::ReflectedConsensus => format!(
            "Decision: consensus after {} reflection round(s), primary {}",
            meta.rounds_used, meta.primary_model
        ),
        ConsensusMode::WeightedVote => format!(
            "Decision: weighted vote after {} round(s), primary {}",
            meta.rounds_used, meta.primary_model
        ),
    }
}

/// Renders the plain-text summary shown to the user: banner with label
/// and confidence, summary paragraph, numbered recommendations, and a
/// one-line consensus provenance.
pub fn render_summary(report: &AnalysisReport) -> String {
    let banner = format!(
        "RISK: {}  confidence: {:.1}%",
        report.risk.as_str().to_uppercase(),
        report.confidence * 100.0
    );
    let rule = "=".repeat(banner.len());
    let mut text = format!("{rule}\n{banner}\n{rule}\n\n{}\n\nRecommendations:\n", report.summary);
    if report.recommendations.is_empty() {
        text.push_str("  none\n");
    }
    for (i, rec) in report.recommendations.iter().enumerate() {
        text.push_str(&format!("  {}. {rec}\n", i + 1));
    }
    text.push('\n');
    text.push_str(&provenance_line(&report.consensus));
    text.push('\n');
    text
}
