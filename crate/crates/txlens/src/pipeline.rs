//! End-to-end analysis orchestration: ingest, enrich, extract features,
//! query threat intel, prompt the models, run consensus, emit the report.
//!
//! Every stage failure is tagged with the stage name and maps to a
//! distinct exit code at or above 10, so operational problems can never be
//! mistaken for a SAFE verdict (exit 0).

use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::Utc;
use thiserror::Error;
use url::Url;

use crate::consensus::{
    run_consensus, BackendReflector, BackendSummarizer, ConsensusConfig, ConsensusError,
    ConsensusResult,
};
use crate::features::{
    assemble_feature_vector, extract_behavior_features, extract_gas_context, extract_ui_features,
    FeatureError, GasThresholds, SlotHints, Weights,
};
use crate::ingest::{
    enrich_code_snippets, fetch_trace, EtherscanStyleExplorer, HttpTransport, IngestError,
    NoSourceProvider, TraceSource,
};
use crate::llm::{build_prompt_with_budget, elicit_all, ModelBackend, ModelOutput};
use crate::model::{Address, RiskLabel};
use crate::report::{build_report, emit_report_json, render_summary, AnalysisReport, ReportMeta};
use crate::threat::{load_db, query_all, LoadError};

/// Everything a single analysis run needs besides the trace source and
/// the target reference.
pub struct RunConfig {
    pub db_paths: Vec<PathBuf>,
    pub weights_path: Option<PathBuf>,
    pub hints_path: Option<PathBuf>,
    pub backends: Vec<Box<dyn ModelBackend>>,
    pub consensus: ConsensusConfig,
    pub section_budget: usize,
    pub timeout: Duration,
    /// Directory for the JSON report; `None` skips writing.
    pub out_dir: Option<PathBuf>,
    pub explorer_api_url: Option<String>,
    pub explorer_api_key: Option<String>,
    /// Unix timestamps of the sender's recent transactions, when known.
    pub recent_timestamps: Option<Vec<u64>>,
    pub gas_thresholds: GasThresholds,
    pub tool_version: String,
}

/// What is being analyzed.
#[derive(Debug, Clone)]
pub enum AnalysisTarget {
    /// A transaction already observed on chain, by hash or fixture name.
    Historical { reference: String },
    /// A prospective call to simulate before the user signs.
    Simulate { to: Address, signature: String, args: Vec<String> },
}

impl AnalysisTarget {
    /// The reference string recorded in the report and sent to remote
    /// simulators.
    pub fn reference(&self) -> String {
        match self {
            AnalysisTarget::Historical { reference } => reference.clone(),
            AnalysisTarget::Simulate { to, signature, args } => {
                format!("{to} {signature} [{}]", args.join(", "))
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("threat-db: {0}")]
    ThreatDb(#[from] LoadError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("llm: {0}")]
    Llm(String),
    #[error("consensus: {0}")]
    Consensus(#[from] ConsensusError),
    #[error("report-io: {0}")]
    Io(String),
}

impl PipelineError {
    /// Operational exit code for this failure; always at or above 10.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 10,
            PipelineError::Ingest(_) => 11,
            PipelineError::ThreatDb(_) => 12,
            PipelineError::Features(_) => 13,
            PipelineError::Llm(_) => 14,
            PipelineError::Consensus(_) => 15,
            PipelineError::Io(_) => 16,
        }
    }
}

/// Exit code for a successful run: 0 safe, 1 suspicious, 2 malicious.
pub fn exit_code_for_label(label: RiskLabel) -> i32 {
    match label {
        RiskLabel::Safe => 0,
        RiskLabel::Suspicious => 1,
        RiskLabel::Malicious => 2,
    }
}

/// Result of a completed analysis.
#[derive(Debug)]
pub struct AnalysisOutcome {
    pub report: AnalysisReport,
    pub summary_text: String,
    pub report_path: Option<PathBuf>,
    pub consensus: ConsensusResult,
}

fn sanitize_reference(reference: &str) -> String {
    let cleaned: String = reference
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '-' })
        .collect();
    cleaned.chars().take(80).collect()
}

/// Deterministic report file name: the fixture stem for file-backed
/// sources, the sanitized reference otherwise.
pub fn report_file_name(source: &TraceSource, target: &AnalysisTarget) -> String {
    let stem = match source {
        TraceSource::FixtureFile { path } | TraceSource::LocalSimulator { path } => path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(sanitize_reference),
        _ => None,
    };
    let base = stem.unwrap_or_else(|| sanitize_reference(&target.reference()));
    format!("{base}.report.json")
}

fn initial_round(
    backends: &[Box<dyn ModelBackend>],
    prompt_text: &str,
    timeout: Duration,
) -> Result<(Vec<ModelOutput>, Vec<String>), PipelineError> {
    let results = elicit_all(backends, prompt_text, 0, timeout);
    let total = results.len();
    let mut outputs = Vec::new();
    let mut notes = Vec::new();
    let mut errors = Vec::new();
    for (id, result) in results {
        match result {
            Ok(output) => outputs.push(output),
            Err(e) => {
                log::warn!("model {id} failed the initial assessment: {e}");
                notes.push(format!("model {id} failed the initial assessment: {e}"));
                errors.push(format!("{id}: {e}"));
            }
        }
    }
    if outputs.len() < 2 {
        return Err(PipelineError::Llm(format!(
            "only {} of {total} models produced a valid initial assessment ({})",
            outputs.len(),
            errors.join("; ")
        )));
    }
    Ok((outputs, notes))
}

/// Runs the full analysis pipeline and, when configured, writes the JSON
/// report under the output directory.
pub fn run_analysis(
    cfg: &RunConfig,
    source: &TraceSource,
    target: &AnalysisTarget,
) -> Result<AnalysisOutcome, PipelineError> {
    let weights = match &cfg.weights_path {
        Some(path) => Some(Weights::load(path).map_err(|e| PipelineError::Config(e.to_string()))?),
        None => None,
    };
    let hints = match &cfg.hints_path {
        Some(path) => SlotHints::load(path).map_err(|e| PipelineError::Config(e.to_string()))?,
        None => SlotHints::empty(),
    };
    let explorer_url = match &cfg.explorer_api_url {
        Some(raw) => Some(
            Url::parse(raw)
                .map_err(|e| PipelineError::Config(format!("bad explorer api url {raw:?}: {e}")))?,
        ),
        None => None,
    };
    if cfg.backends.len() < 2 {
        return Err(PipelineError::Config(format!(
            "need at least 2 model backends, got {}",
            cfg.backends.len()
        )));
    }

    let reference = target.reference();
    let transport = HttpTransport::new(cfg.timeout);
    let (tx, mut trace) = fetch_trace(source, &reference, &transport)?;

    match explorer_url {
        Some(url) => {
            let explorer = EtherscanStyleExplorer::new(url, cfg.explorer_api_key.clone());
            enrich_code_snippets(&mut trace, &explorer, &NoSourceProvider);
        }
        None => {
            enrich_code_snippets(&mut trace, &NoSourceProvider, &NoSourceProvider);
        }
    }

    let db = load_db(&cfg.db_paths)?;

    let behavior = extract_behavior_features(&trace, &hints);
    let context =
        extract_gas_context(&tx, &trace, cfg.recent_timestamps.as_deref(), &cfg.gas_thresholds);
    let ui = extract_ui_features(&tx);
    let hits = query_all(&db, &tx, &trace, &ui);
    let fv = assemble_feature_vector(behavior, context, ui, hits, weights)?;

    let prompt = build_prompt_with_budget(&fv, &fv.database, cfg.section_budget);
    let prompt_text = prompt.render();

    let (outputs, round0_notes) = initial_round(&cfg.backends, &prompt_text, cfg.timeout)?;

    let mut consensus_cfg = cfg.consensus.clone();
    consensus_cfg.n = outputs.len();
    let mut primary_notes = Vec::new();
    if !outputs.iter().any(|o| o.model_id == consensus_cfg.primary_model) {
        let fallback = outputs[0].model_id.clone();
        log::warn!(
            "primary model {} produced no initial assessment; promoting {fallback}",
            consensus_cfg.primary_model
        );
        primary_notes.push(format!(
            "primary model {} produced no initial assessment; promoted {fallback}",
            consensus_cfg.primary_model
        ));
        consensus_cfg.primary_model = fallback;
    }
    let primary_backend = cfg
        .backends
        .iter()
        .find(|b| b.id() == consensus_cfg.primary_model)
        .expect("primary model id comes from a configured backend");

    let reflector = BackendReflector { backends: &cfg.backends, base: &prompt, timeout: cfg.timeout };
    let summarizer = BackendSummarizer { backend: primary_backend.as_ref(), timeout: cfg.timeout };
    let mut result = run_consensus(outputs, &reflector, &summarizer, &consensus_cfg)?;
    let mut merged_notes = round0_notes;
    merged_notes.extend(primary_notes);
    merged_notes.append(&mut result.notes);
    result.notes = merged_notes;

    let meta = ReportMeta {
        tx_reference: reference,
        tool_version: cfg.tool_version.clone(),
        timestamp: Utc::now(),
    };
    let report = build_report(&result, &fv, meta);
    let summary_text = render_summary(&report);

    let report_path = match &cfg.out_dir {
        Some(dir) => {
            let write = |path: &Path, text: &str| {
                std::fs::write(path, text)
                    .map_err(|e| PipelineError::Io(format!("writing {}: {e}", path.display())))
            };
            std::fs::create_dir_all(dir)
                .map_err(|e| PipelineError::Io(format!("creating {}: {e}", dir.display())))?;
            let path = dir.join(report_file_name(source, target));
            write(&path, &emit_report_json(&report))?;
            Some(path)
        }
        None => None,
    };

    Ok(AnalysisOutcome { report, summary_text, report_path, consensus: result })
}
