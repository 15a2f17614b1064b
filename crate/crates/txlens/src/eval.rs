//! Detection-quality harness: runs the pipeline over a labeled fixture
//! corpus and reports precision, recall, and F1 with mean and population
//! standard deviation across repeated runs.
//!
//! A phishing case counts as detected when it is labeled suspicious or
//! malicious. A phishing case that fails operationally is a false
//! negative; a benign case that fails is excluded from the tally, so
//! crashes can never inflate precision. Both are reported as warnings.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TraceSource;
use crate::model::RiskLabel;
use crate::pipeline::{run_analysis, AnalysisTarget, RunConfig};
use crate::util::{map_slice, run_in_mode, ExecMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GroundTruth {
    Phishing,
    Benign,
}

/// One labeled corpus entry.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub fixture: PathBuf,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("failed to read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("eval config: {0}")]
    Config(String),
}

#[derive(Deserialize)]
struct ManifestEntry {
    fixture: String,
    ground_truth: GroundTruth,
}

/// Loads a case manifest; fixture paths are resolved relative to the
/// manifest's own directory.
pub fn load_manifest(path: &Path) -> Result<Vec<EvalCase>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| EvalError::Parse { path: path.to_path_buf(), reason: e.to_string() })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(entries
        .into_iter()
        .map(|entry| EvalCase {
            fixture: base.join(entry.fixture),
            ground_truth: entry.ground_truth,
        })
        .collect())
}

/// Counts and derived metrics for one run over the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub true_positives: u32,
    pub false_positives: u32,
    pub false_negatives: u32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Computes precision, recall, and F1, defining each as 0 when its
/// denominator is 0.
pub fn compute_run_metrics(tp: u32, fp: u32, fn_: u32) -> RunMetrics {
    let ratio = |num: u32, den: u32| if den == 0 { 0.0 } else { f64::from(num) / f64::from(den) };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    RunMetrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision,
        recall,
        f1,
    }
}

/// Mean and population standard deviation of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub std_dev: f64,
}

impl fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std_dev)
    }
}

fn summarize_metric(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    MetricSummary { mean, std_dev: variance.sqrt() }
}

/// Full evaluation outcome.
#[derive(Debug, Clone)]
pub struct EvalMetrics {
    pub per_run: Vec<RunMetrics>,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    pub warnings: Vec<String>,
}

fn case_name(case: &EvalCase) -> String {
    case.fixture
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("case")
        .to_string()
}

/// Runs the corpus `runs` times and aggregates detection metrics. Cases
/// within a run are independent and execute per `mode`.
pub fn run_eval(
    cases: &[EvalCase],
    runs: u32,
    cfg: &RunConfig,
    mode: ExecMode,
) -> Result<EvalMetrics, EvalError> {
    if runs == 0 {
        return Err(EvalError::Config("need at least 1 run".to_string()));
    }
    if cases.is_empty() {
        return Err(EvalError::Config("case list is empty".to_string()));
    }

    let mut per_run = Vec::with_capacity(runs as usize);
    let mut warnings = Vec::new();
    for run in 0..runs {
        let labels: Vec<Result<RiskLabel, String>> = run_in_mode(mode, || {
            map_slice(cases, |case| {
                let source = TraceSource::FixtureFile { path: case.fixture.clone() };
                let target = AnalysisTarget::Historical { reference: case_name(case) };
                run_analysis(cfg, &source, &target)
                    .map(|outcome| outcome.report.risk)
                    .map_err(|e| e.to_string())
            })
        });

        let (mut tp, mut fp, mut fn_) = (0u32, 0u32, 0u32);
        for (case, label) in cases.iter().zip(labels) {
            let detected = matches!(label, Ok(RiskLabel::Suspicious) | Ok(RiskLabel::Malicious));
            match (case.ground_truth, label) {
                (GroundTruth::Phishing, Ok(_)) => {
                    if detected {
                        tp += 1;
                    } else {
                        fn_ += 1;
                    }
                }
                (GroundTruth::Phishing, Err(e)) => {
                    fn_ += 1;
                    warnings.push(format!(
                        "run {run}: phishing case {} errored, counted as missed: {e}",
                        case_name(case)
                    ));
                }
                (GroundTruth::Benign, Ok(_)) => {
                    if detected {
                        fp += 1;
                    }
                }
                (GroundTruth::Benign, Err(e)) => {
                    warnings.push(format!(
                        "run {run}: benign case {} errored, excluded from the tally: {e}",
                        case_name(case)
                    ));
                }
            }
        }
        per_run.push(compute_run_metrics(tp, fp, fn_));
    }

    for warning in &warnings {
        log::warn!("{warning}");
    }
    let collect = |f: fn(&RunMetrics) -> f64| -> Vec<f64> { per_run.iter().map(f).collect() };
    Ok(EvalMetrics {
        precision: summarize_metric(&collect(|m| m.precision)),
        recall: summarize_metric(&collect(|m| m.recall)),
        f1: summarize_metric(&collect(|m| m.f1)),
        per_run,
        warnings,
    })
}
