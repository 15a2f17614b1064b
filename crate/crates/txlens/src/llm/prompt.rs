//! Analyst prompt construction. Prompts are fully deterministic functions
//! of the feature vector so reruns produce byte-identical text.

use thiserror::Error;

use crate::features::{FeatureVector, GasContextFindings, UiFindings};
use crate::model::U256;
use crate::threat::ThreatHit;
use crate::util::truncate_with_marker;

use super::ModelOutput;

/// Default per-section character budget.
pub const DEFAULT_SECTION_BUDGET: usize = 8_000;

const ROLE_PREAMBLE: &str = "You are a blockchain security analyst reviewing a transaction before the user signs it. \
Decide whether executing it would be safe, suspicious, or malicious for the sender. \
Weigh each evidence section according to the stated weights and justify your verdict from the evidence alone.";

/// The reply format contract included in every analyst and summary prompt.
pub const SCHEMA_INSTRUCTIONS: &str = r#"Reply with exactly one JSON object and no other text:
{"risk": "safe" | "suspicious" | "malicious",
 "confidence": <number between 0 and 1>,
 "justification": "<why, grounded in the evidence>",
 "summary": "<one-paragraph plain-language summary for the user>",
 "importance": {"behavior": <n>, "context": <n>, "ui": <n>, "database": <n>},
 "recommendations": ["<action the user should take>", ...]}
The four importance weights must sum to 1."#;

const REASSESS_INSTRUCTION: &str = "Reassess the evidence in light of these counterexamples. \
If they expose a flaw in your reasoning, change your verdict; otherwise defend it. \
Reply again with the same JSON schema.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("reflection requires at least one counterexample")]
    EmptyCounterexamples,
}

/// Rendered prior verdicts attached to a reflection prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReflectionBlock {
    pub own: String,
    pub counters: Vec<String>,
}

/// A structured analyst prompt; `render` produces the final text.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub role_preamble: String,
    pub behavior_section: String,
    pub context_section: String,
    pub ui_section: String,
    pub database_section: String,
    pub weights_note: String,
    pub output_schema_instructions: String,
    pub counterexamples: Option<ReflectionBlock>,
    weights: (f64, f64, f64, f64),
}

impl Prompt {
    /// Renders the prompt into the text sent to a backend.
    pub fn render(&self) -> String {
        let (wb, wc, wu, wd) = self.weights;
        let mut out = String::new();
        out.push_str(&self.role_preamble);
        out.push_str("\n\n## Evidence: behavior (weight ");
        out.push_str(&format!("{wb:.3})\n"));
        out.push_str(&self.behavior_section);
        out.push_str("\n\n## Evidence: context (weight ");
        out.push_str(&format!("{wc:.3})\n"));
        out.push_str(&self.context_section);
        out.push_str("\n\n## Evidence: ui (weight ");
        out.push_str(&format!("{wu:.3})\n"));
        out.push_str(&self.ui_section);
        out.push_str("\n\n## Evidence: database (weight ");
        out.push_str(&format!("{wd:.3})\n"));
        out.push_str(&self.database_section);
        out.push_str("\n\n");
        out.push_str(&self.weights_note);
        out.push_str("\n\n");
        out.push_str(&self.output_schema_instructions);
        if let Some(block) = &self.counterexamples {
            out.push_str("\n\n## Reflection\nYour previous assessment:\n");
            out.push_str(&block.own);
            out.push_str("\nCounterexamples from other analysts:\n");
            for counter in &block.counters {
                out.push_str(counter);
                out.push('\n');
            }
            out.push_str(REASSESS_INSTRUCTION);
        }
        out
    }
}

/// Builds the analyst prompt with the default section budget.
pub fn build_prompt(fv: &FeatureVector, hits: &[ThreatHit]) -> Prompt {
    build_prompt_with_budget(fv, hits, DEFAULT_SECTION_BUDGET)
}

/// Builds the analyst prompt, truncating each evidence section to at most
/// `section_budget` characters with an explicit `[truncated]` marker.
pub fn build_prompt_with_budget(
    fv: &FeatureVector,
    hits: &[ThreatHit],
    section_budget: usize,
) -> Prompt {
    let w = &fv.weights;
    let weights_note = format!(
        "Evidence weights: behavior {:.3}, context {:.3}, ui {:.3}, database {:.3}. \
Weigh the sections accordingly; a section with weight 0.000 carries no signal.",
        w.behavior, w.context, w.ui, w.database
    );
    Prompt {
        role_preamble: ROLE_PREAMBLE.to_string(),
        behavior_section: truncate_with_marker(&render_behavior(fv), section_budget),
        context_section: truncate_with_marker(&render_context(&fv.context), section_budget),
        ui_section: truncate_with_marker(&render_ui(&fv.ui), section_budget),
        database_section: truncate_with_marker(&render_database(hits), section_budget),
        weights_note,
        output_schema_instructions: SCHEMA_INSTRUCTIONS.to_string(),
        counterexamples: None,
        weights: (w.behavior, w.context, w.ui, w.database),
    }
}

/// Builds a reflection prompt: the base prompt plus the model's own prior
/// verdict and every counterexample, rendered in model_id order.
pub fn build_reflection_prompt(
    own: &ModelOutput,
    counters: &[ModelOutput],
    base: &Prompt,
) -> Result<Prompt, PromptError> {
    if counters.is_empty() {
        return Err(PromptError::EmptyCounterexamples);
    }
    let mut sorted: Vec<&ModelOutput> = counters.iter().collect();
    sorted.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    let mut prompt = base.clone();
    prompt.counterexamples = Some(ReflectionBlock {
        own: render_verdict_line(own),
        counters: sorted.into_iter().map(render_verdict_line).collect(),
    });
    Ok(prompt)
}

/// One-line rendering of a verdict, used for counterexamples.
pub fn render_verdict_line(output: &ModelOutput) -> String {
    format!(
        "- model={} risk={} confidence={:.3} justification={}",
        output.model_id, output.risk, output.confidence, output.justification
    )
}

fn amount_display(amount: &U256) -> String {
    if *amount == U256::MAX {
        "unlimited (2^256-1)".to_string()
    } else {
        amount.to_string()
    }
}

fn render_behavior(fv: &FeatureVector) -> String {
    let b = &fv.behavior;
    let mut out = String::new();

    out.push_str(&format!("Call chain ({} frames):\n", b.call_chain.len()));
    for entry in &b.call_chain {
        let selector = match &entry.selector {
            Some(s) => s.to_string(),
            None => "none".to_string(),
        };
        let reverted = if entry.reverted { " (reverted)" } else { "" };
        out.push_str(&format!(
            "  [depth {}] {} {} -> {} selector={}{}\n",
            entry.depth, entry.call_kind, entry.caller, entry.callee, selector, reverted
        ));
    }

    out.push_str("Transfers:\n");
    if b.transfers.is_empty() {
        out.push_str("  none\n");
    }
    for t in &b.transfers {
        let asset = match &t.asset {
            crate::features::AssetKind::Native => "NATIVE".to_string(),
            crate::features::AssetKind::Erc20 { token } => format!("ERC20 token={token}"),
        };
        out.push_str(&format!(
            "  - {asset} from={} to={} amount={} evidence={:?}\n",
            t.from,
            t.to,
            amount_display(&t.amount),
            t.evidence
        ));
    }

    out.push_str("Approvals:\n");
    if b.approvals.is_empty() {
        out.push_str("  none\n");
    }
    for a in &b.approvals {
        let amount = match &a.amount {
            Some(x) => amount_display(x),
            None => "all tokens (operator approval)".to_string(),
        };
        let kind = if a.approve_all { "setApprovalForAll" } else { "approve" };
        out.push_str(&format!(
            "  - {kind} token={} owner={} spender={} amount={amount}\n",
            a.token, a.owner, a.spender
        ));
    }

    out.push_str("State changes:\n");
    if b.state_changes.is_empty() {
        out.push_str("  none\n");
    }
    for s in &b.state_changes {
        out.push_str(&format!("  - {} on {}: {}\n", s.kind, s.contract, s.description));
    }

    if !b.code_excerpts.is_empty() {
        out.push_str("Contract source excerpts:\n");
        for (addr, snippet) in &b.code_excerpts {
            if let Some(src) = &snippet.verified_source {
                out.push_str(&format!("  -- {addr} (verified source) --\n{src}\n"));
            } else if let Some(dec) = &snippet.decompiled {
                out.push_str(&format!("  -- {addr} (decompiled) --\n{dec}\n"));
            }
        }
    }

    for warning in &b.warnings {
        out.push_str(&format!("Warning: {warning}\n"));
    }

    out.trim_end().to_string()
}

fn ratio_line(ratio: &Option<crate::features::GasRatio>) -> String {
    match ratio {
        Some(r) => format!("{}/{} (~{})", r.numer(), r.denom(), crate::features::context::ratio_display(r)),
        None => "not computable".to_string(),
    }
}

fn render_context(ctx: &GasContextFindings) -> String {
    let mut out = format!(
        "gas_limit={} gas_used={}\nunused_gas_ratio={} excessive_unused={}\nprice_to_basefee_ratio={} acceleration={}\nrapid_sequence={}",
        ctx.gas_limit,
        ctx.gas_used,
        ratio_line(&ctx.unused_gas_ratio),
        ctx.excessive_unused_flag,
        ratio_line(&ctx.price_to_basefee_ratio),
        ctx.acceleration_flag,
        ctx.rapid_sequence_flag,
    );
    for note in &ctx.notes {
        out.push_str(&format!("\nnote: {note}"));
    }
    out
}

fn render_ui(ui: &UiFindings) -> String {
    if !ui.present {
        return "UI: not available".to_string();
    }
    let mut out = String::new();
    match &ui.main_domain {
        Some(domain) => out.push_str(&format!("origin main_domain={domain}\n")),
        None => out.push_str("origin main_domain=unknown\n"),
    }
    out.push_str("Calldata construction sites:\n");
    if ui.calldata_construction_sites.is_empty() {
        out.push_str("  none\n");
    }
    for site in &ui.calldata_construction_sites {
        out.push_str(&format!(
            "  - script {} line {}: {}\n",
            site.script_index, site.line, site.snippet
        ));
    }
    out.push_str("Signature initiation sites:\n");
    if ui.signing_initiation_sites.is_empty() {
        out.push_str("  none\n");
    }
    for site in &ui.signing_initiation_sites {
        out.push_str(&format!(
            "  - script {} line {}: {}\n",
            site.script_index, site.line, site.api_name
        ));
    }
    for note in &ui.notes {
        out.push_str(&format!("note: {note}\n"));
    }
    out.trim_end().to_string()
}

fn render_database(hits: &[ThreatHit]) -> String {
    if hits.is_empty() {
        return "No threat intelligence hits.".to_string();
    }
    let mut out = String::new();
    for hit in hits {
        let severity = match &hit.severity {
            Some(s) => s.to_string(),
            None => "unrated".to_string(),
        };
        out.push_str(&format!(
            "- {:?} {} label={} severity={severity} source={}\n",
            hit.kind, hit.subject, hit.label, hit.source
        ));
    }
    out.trim_end().to_string()
}
