//! Feature extraction: turns a validated trace into the four-part evidence
//! vector (behavior, context, UI, database) the classifier consumes.

pub mod behavior;
pub mod context;
pub mod ui;

pub use behavior::{
    analyze_storage_writes, detect_approvals, detect_token_transfers, extract_call_chain,
    ApprovalFinding, AssetKind, CallChainEntry, SlotHints, StateChangeFinding, StateChangeKind,
    TokenTransfer, TransferEvidence,
};
pub use context::{extract_gas_context, GasContextFindings, GasRatio, GasThresholds};
pub use ui::{extract_ui_features, registrable_domain, ConstructionSite, SigningSite, UiFindings};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Address, CodeSnippet, ExecutionTrace};
use crate::threat::ThreatHit;

/// Tolerance for the weight-sum invariant.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("weight configuration error: {0}")]
    Config(String),
}

/// Everything the transaction did on chain, summarized for the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorFeatures {
    pub call_chain: Vec<CallChainEntry>,
    pub transfers: Vec<TokenTransfer>,
    pub approvals: Vec<ApprovalFinding>,
    pub state_changes: Vec<StateChangeFinding>,
    pub code_excerpts: BTreeMap<Address, CodeSnippet>,
    pub warnings: Vec<String>,
}

/// Runs every behavioral extractor over the trace.
pub fn extract_behavior_features(trace: &ExecutionTrace, hints: &SlotHints) -> BehaviorFeatures {
    let call_chain = extract_call_chain(trace);
    let (transfers, mut warnings) = detect_token_transfers(trace);
    let (approvals, mut approval_warnings) = detect_approvals(trace);
    warnings.append(&mut approval_warnings);
    let state_changes = analyze_storage_writes(trace, hints);
    BehaviorFeatures {
        call_chain,
        transfers,
        approvals,
        state_changes,
        code_excerpts: trace.code_snippets.clone(),
        warnings,
    }
}

/// Per-dimension weights. Must be non-negative and, once assembled into a
/// feature vector, sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub behavior: f64,
    pub context: f64,
    pub ui: f64,
    pub database: f64,
}

impl Weights {
    pub const DEFAULT: Weights =
        Weights { behavior: 0.40, context: 0.20, ui: 0.25, database: 0.15 };

    pub fn sum(&self) -> f64 {
        self.behavior + self.context + self.ui + self.database
    }

    /// Loads a weight config file of `{behavior, context, ui, database}`.
    pub fn load(path: &std::path::Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FeatureError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| FeatureError::Config(format!("bad weight file {}: {e}", path.display())))
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights::DEFAULT
    }
}

/// The assembled four-part evidence vector with its final weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub behavior: BehaviorFeatures,
    pub context: GasContextFindings,
    pub ui: UiFindings,
    pub database: Vec<ThreatHit>,
    pub weights: Weights,
}

/// Combines the four evidence parts and resolves the final weights.
///
/// Defaults weight behavior 0.40, context 0.20, ui 0.25, database 0.15.
/// When the UI part is absent its weight is redistributed proportionally
/// over the other three, and the result is renormalized to sum to one.
pub fn assemble_feature_vector(
    behavior: BehaviorFeatures,
    context: GasContextFindings,
    ui: UiFindings,
    db_hits: Vec<ThreatHit>,
    weight_config: Option<Weights>,
) -> Result<FeatureVector, FeatureError> {
    let base = weight_config.unwrap_or(Weights::DEFAULT);
    for (name, w) in [
        ("behavior", base.behavior),
        ("context", base.context),
        ("ui", base.ui),
        ("database", base.database),
    ] {
        if !w.is_finite() || w < 0.0 {
            return Err(FeatureError::Config(format!("weight {name} must be finite and >= 0, got {w}")));
        }
    }
    if base.sum() <= 0.0 {
        return Err(FeatureError::Config("weights sum to zero".to_string()));
    }

    let weights = if ui.present {
        let sum = base.sum();
        Weights {
            behavior: base.behavior / sum,
            context: base.context / sum,
            ui: base.ui / sum,
            database: base.database / sum,
        }
    } else {
        let rest = base.behavior + base.context + base.database;
        if rest <= 0.0 {
            return Err(FeatureError::Config(
                "UI evidence is absent but all non-UI weights are zero".to_string(),
            ));
        }
        Weights {
            behavior: base.behavior / rest,
            context: base.context / rest,
            ui: 0.0,
            database: base.database / rest,
        }
    };
    debug_assert!((weights.sum() - 1.0).abs() <= WEIGHT_SUM_TOLERANCE);

    Ok(FeatureVector { behavior, context, ui, database: db_hits, weights })
}
