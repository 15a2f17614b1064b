//! Pre-signing risk analysis for EVM transactions.
//!
//! The pipeline ingests a normalized execution trace, extracts behavior,
//! context, and UI evidence, enriches it with threat intelligence lookups,
//! asks a panel of language models to classify the transaction with
//! self-reflection rounds until they agree (or a weighted vote decides), and
//! renders the verdict as an explainable report.

pub mod config;
pub mod consensus;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod llm;
pub mod pipeline;
pub mod model;
pub mod report;
pub mod threat;
pub mod util;

pub use model::{RiskLabel, U256};
