//! Multi-model consensus: unanimity checking, self-reflection rounds, and
//! the confidence-weighted vote that decides when models never agree.
//!
//! The flow over `n` model outputs runs at most `max_rounds` reflection
//! rounds. Each round starts with a unanimity check over the surviving
//! models; on agreement a summarizer consolidates the verdicts, otherwise
//! every model is re-asked with the others' outputs as counterexamples.
//! When the rounds are exhausted without agreement, the label with the
//! highest cumulative confidence wins. Vote tallies are accumulated as
//! exact rationals so equal-confidence ties are true ties rather than
//! floating-point accidents.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{
    build_reflection_prompt, elicit, render_verdict_line, EngineError, ModelBackend, ModelOutput,
    Prompt, SCHEMA_INSTRUCTIONS,
};
use crate::model::RiskLabel;
use crate::util::map_slice;

/// How label ties in the weighted vote are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// The most severe tied label wins. The safer default: a tie between
    /// safe and malicious should warn the user, not wave them through.
    HigherSeverity,
    /// The tied label held by the earliest-configured model wins.
    LowestModelIndex,
}

/// Consensus run parameters.
#[derive(Debug, Clone)]
pub struct ConsensusConfig {
    /// Number of models expected in the initial round.
    pub n: usize,
    /// Maximum self-reflection rounds before falling back to a vote.
    pub max_rounds: u32,
    /// Model whose output backstops summarizer failures.
    pub primary_model: String,
    pub tie_break: TieBreak,
}

impl ConsensusConfig {
    pub fn new(n: usize, primary_model: &str) -> Self {
        ConsensusConfig {
            n,
            max_rounds: 3,
            primary_model: primary_model.to_string(),
            tie_break: TieBreak::HigherSeverity,
        }
    }
}

/// Cumulative confidence per label from the weighted vote.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTally {
    pub scores: BTreeMap<RiskLabel, BigRational>,
}

impl VoteTally {
    /// Approximate score for a label, 0 for labels nobody voted for.
    pub fn score_f64(&self, label: RiskLabel) -> f64 {
        use num_traits::ToPrimitive;
        self.scores.get(&label).map_or(0.0, |s| s.to_f64().unwrap_or(f64::NAN))
    }
}

/// How the final label was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConsensusMode {
    Unanimous,
    ReflectedConsensus,
    WeightedVote,
}

impl fmt::Display for ConsensusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConsensusMode::Unanimous => "UNANIMOUS",
            ConsensusMode::ReflectedConsensus => "REFLECTED_CONSENSUS",
            ConsensusMode::WeightedVote => "WEIGHTED_VOTE",
        };
        f.write_str(s)
    }
}

/// Outcome of a consensus run, including the full per-round transcripts
/// for auditing.
#[derive(Debug, Clone)]
pub struct ConsensusResult {
    pub final_output: ModelOutput,
    pub decided_label: RiskLabel,
    pub mode: ConsensusMode,
    pub rounds_used: u32,
    /// `transcripts[r]` holds the outputs of round `r`; round 0 is the
    /// initial assessment.
    pub transcripts: Vec<Vec<ModelOutput>>,
    pub primary_model: String,
    /// Vote tally, present only for `WeightedVote` outcomes.
    pub tally: Option<VoteTally>,
    /// Human-readable events: dropped models, summarizer divergence.
    pub notes: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("consensus needs at least 2 model outputs, got {got}")]
    TooFewModels { got: usize },
    #[error("configured for {expected} models but received {got} initial outputs")]
    WrongModelCount { expected: usize, got: usize },
    #[error("primary model {0} is not among the initial outputs")]
    UnknownPrimary(String),
    #[error("only {survivors} model(s) survived reflection round {round}; need at least 2")]
    TooFewSurvivors { round: u32, survivors: usize },
}

/// Re-asks one model for its verdict given the other models' outputs.
pub trait Reflector: Sync {
    /// `round` is 1-based: the first reflection after the initial
    /// assessment is round 1.
    fn reflect(
        &self,
        own: &ModelOutput,
        counters: &[ModelOutput],
        round: u32,
    ) -> Result<ModelOutput, EngineError>;
}

impl<F> Reflector for F
where
    F: Fn(&ModelOutput, &[ModelOutput], u32) -> Result<ModelOutput, EngineError> + Sync,
{
    fn reflect(
        &self,
        own: &ModelOutput,
        counters: &[ModelOutput],
        round: u32,
    ) -> Result<ModelOutput, EngineError> {
        self(own, counters, round)
    }
}

/// Consolidates agreeing verdicts into the final user-facing output.
pub trait Summarizer {
    fn summarize(&self, outputs: &[ModelOutput]) -> Result<ModelOutput, EngineError>;
}

impl<F> Summarizer for F
where
    F: Fn(&[ModelOutput]) -> Result<ModelOutput, EngineError>,
{
    fn summarize(&self, outputs: &[ModelOutput]) -> Result<ModelOutput, EngineError> {
        self(outputs)
    }
}

/// Reflector backed by real model backends: rebuilds the base prompt with
/// a reflection block and re-queries the model that produced `own`.
pub struct BackendReflector<'a> {
    pub backends: &'a [Box<dyn ModelBackend>],
    pub base: &'a Prompt,
    pub timeout: Duration,
}

impl Reflector for BackendReflector<'_> {
    fn reflect(
        &self,
        own: &ModelOutput,
        counters: &[ModelOutput],
        round: u32,
    ) -> Result<ModelOutput, EngineError> {
        let backend = self
            .backends
            .iter()
            .find(|b| b.id() == own.model_id)
            .ok_or_else(|| crate::llm::QueryError::Transport {
                model: own.model_id.clone(),
                reason: "no backend configured for this model".to_string(),
            })?;
        let prompt = build_reflection_prompt(own, counters, self.base)
            .expect("reflection always has at least one counterexample");
        elicit(backend.as_ref(), &prompt.render(), round, self.timeout)
    }
}

/// Summarizer backed by a model backend, usually the primary model's.
pub struct BackendSummarizer<'a> {
    pub backend: &'a dyn ModelBackend,
    pub timeout: Duration,
}

impl Summarizer for BackendSummarizer<'_> {
    fn summarize(&self, outputs: &[ModelOutput]) -> Result<ModelOutput, EngineError> {
        let prompt = build_summary_prompt(outputs);
        elicit(self.backend, &prompt, 0, self.timeout)
    }
}

/// Deterministic consolidation prompt handed to the summarizer backend.
pub fn build_summary_prompt(outputs: &[ModelOutput]) -> String {
    let shared = outputs.first().map(|o| o.risk).unwrap_or(RiskLabel::Suspicious);
    let mut text = String::from(
        "You are the lead analyst consolidating a completed transaction review. \
All analysts agree on the risk label.\n",
    );
    text.push_str(&format!("Agreed label: {shared}\n"));
    text.push_str("Analyst verdicts:\n");
    for output in outputs {
        text.push_str(&render_verdict_line(output));
        text.push('\n');
    }
    text.push_str(
        "Write the final consolidated assessment for the user, keeping the agreed label.\n",
    );
    text.push_str(SCHEMA_INSTRUCTIONS);
    text
}

fn shared_label(outputs: &[ModelOutput]) -> Option<RiskLabel> {
    let first = outputs.first()?.risk;
    outputs.iter().all(|o| o.risk == first).then_some(first)
}

/// Consolidates agreeing outputs through the summarizer.
///
/// The consensus label is authoritative: a summarizer that returns a
/// different label keeps its text but has the label overwritten, with a
/// divergence note. A summarizer failure falls back to the primary model's
/// own output verbatim.
pub fn summarize(
    outputs: &[ModelOutput],
    primary_model: &str,
    summarizer: &dyn Summarizer,
) -> (ModelOutput, Vec<String>) {
    let shared = shared_label(outputs).expect("summarize requires agreeing outputs");
    let mut notes = Vec::new();
    match summarizer.summarize(outputs) {
        Ok(mut output) => {
            if output.risk != shared {
                notes.push(format!(
                    "summarizer returned {} against the consensus label {shared}; label overwritten",
                    output.risk
                ));
                output.risk = shared;
            }
            (output, notes)
        }
        Err(e) => {
            notes.push(format!(
                "summarizer failed ({e}); falling back to primary model {primary_model}"
            ));
            let fallback = match outputs.iter().find(|o| o.model_id == primary_model) {
                Some(output) => output.clone(),
                None => {
                    notes.push(format!(
                        "primary model {primary_model} absent from the final round; using {}",
                        outputs[0].model_id
                    ));
                    outputs[0].clone()
                }
            };
            (fallback, notes)
        }
    }
}

fn exact_confidence(output: &ModelOutput) -> BigRational {
    BigRational::from_float(output.confidence).expect("confidence is finite")
}

/// Confidence-weighted vote over the final round of outputs.
///
/// Each label's score is the sum of the confidences of the models that
/// chose it, accumulated exactly. Returns the winning label, the surfaced
/// output (highest confidence among winners, lowest index on equal
/// confidence), and the full tally.
pub fn weighted_vote(
    outputs: &[ModelOutput],
    tie_break: TieBreak,
) -> (RiskLabel, ModelOutput, VoteTally) {
    assert!(!outputs.is_empty(), "weighted_vote requires at least one output");
    let mut scores: BTreeMap<RiskLabel, BigRational> = BTreeMap::new();
    for output in outputs {
        *scores.entry(output.risk).or_insert_with(BigRational::zero) += exact_confidence(output);
    }
    let max_score = scores.values().max().expect("scores nonempty").clone();
    let winners: Vec<RiskLabel> =
        scores.iter().filter(|(_, s)| **s == max_score).map(|(label, _)| *label).collect();
    let decided = match tie_break {
        TieBreak::HigherSeverity => *winners.iter().max().expect("winners nonempty"),
        TieBreak::LowestModelIndex => {
            outputs
                .iter()
                .find(|o| winners.contains(&o.risk))
                .expect("some output holds a winning label")
                .risk
        }
    };
    let surfaced = outputs
        .iter()
        .filter(|o| o.risk == decided)
        .reduce(|best, o| if o.confidence > best.confidence { o } else { best })
        .expect("decided label came from an output")
        .clone();
    (decided, surfaced, VoteTally { scores })
}

/// Runs the full consensus flow over the initial model outputs.
///
/// Unanimity is checked at the top of every round, including after the
/// final reflection round; only when `max_rounds` rounds pass without
/// agreement does the weighted vote decide. Models whose reflection query
/// fails are dropped from later rounds; the run aborts if fewer than two
/// survive.
pub fn run_consensus(
    initial_outputs: Vec<ModelOutput>,
    reflector: &dyn Reflector,
    summarizer: &dyn Summarizer,
    cfg: &ConsensusConfig,
) -> Result<ConsensusResult, ConsensusError> {
    let got = initial_outputs.len();
    if cfg.n < 2 || got < 2 {
        return Err(ConsensusError::TooFewModels { got });
    }
    if got != cfg.n {
        return Err(ConsensusError::WrongModelCount { expected: cfg.n, got });
    }
    if !initial_outputs.iter().any(|o| o.model_id == cfg.primary_model) {
        return Err(ConsensusError::UnknownPrimary(cfg.primary_model.clone()));
    }

    let mut transcripts: Vec<Vec<ModelOutput>> = vec![initial_outputs];
    let mut notes: Vec<String> = Vec::new();
    let mut rounds_done: u32 = 0;

    loop {
        let current = transcripts.last().expect("at least the initial round");
        if let Some(shared) = shared_label(current) {
            let mode = if rounds_done == 0 {
                ConsensusMode::Unanimous
            } else {
                ConsensusMode::ReflectedConsensus
            };
            let (final_output, mut summary_notes) =
                summarize(current, &cfg.primary_model, summarizer);
            notes.append(&mut summary_notes);
            return Ok(ConsensusResult {
                final_output,
                decided_label: shared,
                mode,
                rounds_used: rounds_done,
                transcripts,
                primary_model: cfg.primary_model.clone(),
                tally: None,
                notes,
            });
        }
        if rounds_done == cfg.max_rounds {
            break;
        }

        let round = rounds_done + 1;
        let inputs: Vec<(ModelOutput, Vec<ModelOutput>)> = current
            .iter()
            .enumerate()
            .map(|(i, own)| {
                let counters: Vec<ModelOutput> = current
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, o)| o.clone())
                    .collect();
                (own.clone(), counters)
            })
            .collect();
        let results = map_slice(&inputs, |(own, counters)| {
            reflector.reflect(own, counters, round)
        });

        let mut next = Vec::with_capacity(inputs.len());
        for ((own, _), result) in inputs.iter().zip(results) {
            match result {
                Ok(output) => next.push(output),
                Err(e) => {
                    log::warn!("model {} dropped in round {round}: {e}", own.model_id);
                    notes.push(format!("model {} dropped in round {round}: {e}", own.model_id));
                }
            }
        }
        if next.len() < 2 {
            return Err(ConsensusError::TooFewSurvivors { round, survivors: next.len() });
        }
        transcripts.push(next);
        rounds_done = round;
    }

    let final_round = transcripts.last().expect("at least the initial round");
    let (decided, surfaced, tally) = weighted_vote(final_round, cfg.tie_break);
    Ok(ConsensusResult {
        final_output: surfaced,
        decided_label: decided,
        mode: ConsensusMode::WeightedVote,
        rounds_used: rounds_done,
        transcripts,
        primary_model: cfg.primary_model.clone(),
        tally: Some(tally),
        notes,
    })
}
