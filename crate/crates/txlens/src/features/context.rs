//! Transaction-context evidence: gas sizing, fee pressure, and submission
//! cadence. Ratios are kept as exact rationals so threshold comparisons
//! never depend on float rounding.

use num_rational::Ratio;
use num_traits::ToPrimitive;

use crate::model::{ExecutionTrace, TxEnvelope, U256};

/// An exact non-negative ratio.
pub type GasRatio = Ratio<u128>;

/// Tunable thresholds for the context flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GasThresholds {
    /// Flag when `(gas_limit - gas_used) / gas_limit` exceeds this.
    pub excessive_unused_ratio: GasRatio,
    /// Flag when `effective_gas_price / base_fee` exceeds this.
    pub acceleration_multiplier: GasRatio,
    /// Flag when at least this many transactions land inside the window.
    pub rapid_sequence_count: usize,
    pub rapid_sequence_window_secs: u64,
}

impl Default for GasThresholds {
    fn default() -> Self {
        GasThresholds {
            excessive_unused_ratio: Ratio::new(9, 10),
            acceleration_multiplier: Ratio::from_integer(3),
            rapid_sequence_count: 3,
            rapid_sequence_window_secs: 60,
        }
    }
}

/// Gas and cadence findings for one transaction.
#[derive(Debug, Clone, PartialEq)]
pub struct GasContextFindings {
    pub gas_limit: u64,
    pub gas_used: u64,
    /// `(gas_limit - gas_used) / gas_limit`; `None` when the limit is zero.
    pub unused_gas_ratio: Option<GasRatio>,
    pub excessive_unused_flag: bool,
    /// `effective_gas_price / base_fee`; `None` when the base fee is zero
    /// or a quantity exceeds the 128-bit range.
    pub price_to_basefee_ratio: Option<GasRatio>,
    pub acceleration_flag: bool,
    pub rapid_sequence_flag: bool,
    pub notes: Vec<String>,
}

fn u256_to_u128(value: &U256, what: &str, notes: &mut Vec<String>) -> Option<u128> {
    if *value > U256::from(u128::MAX) {
        notes.push(format!("{what} exceeds the 128-bit range, ratio omitted"));
        return None;
    }
    Some(value.as_u128())
}

/// Computes exact gas ratios and threshold flags.
///
/// `recent_timestamps` holds unix timestamps (seconds) of the sender's
/// recent transactions, when the caller has that history; without it the
/// rapid-sequence flag stays false.
pub fn extract_gas_context(
    tx: &TxEnvelope,
    trace: &ExecutionTrace,
    recent_timestamps: Option<&[u64]>,
    thresholds: &GasThresholds,
) -> GasContextFindings {
    let mut notes = Vec::new();

    let unused_gas_ratio = if tx.gas_limit == 0 {
        notes.push("gas limit is zero, unused-gas ratio omitted".to_string());
        None
    } else {
        let unused = tx.gas_limit.saturating_sub(trace.gas_used);
        Some(Ratio::new(unused as u128, tx.gas_limit as u128))
    };
    let excessive_unused_flag = match &unused_gas_ratio {
        Some(r) => *r > thresholds.excessive_unused_ratio,
        None => false,
    };

    let price_to_basefee_ratio = if tx.base_fee.is_zero() {
        notes.push("base fee is zero, price-to-base-fee ratio omitted".to_string());
        None
    } else {
        let price = u256_to_u128(&tx.effective_gas_price, "effective gas price", &mut notes);
        let base = u256_to_u128(&tx.base_fee, "base fee", &mut notes);
        match (price, base) {
            (Some(p), Some(b)) => Some(Ratio::new(p, b)),
            _ => None,
        }
    };
    let acceleration_flag = match &price_to_basefee_ratio {
        Some(r) => *r > thresholds.acceleration_multiplier,
        None => false,
    };

    let rapid_sequence_flag = match recent_timestamps {
        Some(times) if !times.is_empty() => {
            max_in_window(times, thresholds.rapid_sequence_window_secs)
                >= thresholds.rapid_sequence_count
        }
        _ => false,
    };

    GasContextFindings {
        gas_limit: tx.gas_limit,
        gas_used: trace.gas_used,
        unused_gas_ratio,
        excessive_unused_flag,
        price_to_basefee_ratio,
        acceleration_flag,
        rapid_sequence_flag,
        notes,
    }
}

/// Largest number of timestamps that fit in any closed window of
/// `window_secs` seconds.
fn max_in_window(timestamps: &[u64], window_secs: u64) -> usize {
    let mut sorted = timestamps.to_vec();
    sorted.sort_unstable();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..sorted.len() {
        while sorted[hi] - sorted[lo] > window_secs {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}

/// Renders a ratio as a decimal approximation for display, keeping enough
/// digits to distinguish threshold-adjacent values.
pub fn ratio_display(ratio: &GasRatio) -> String {
    match ratio.to_f64() {
        Some(f) => format!("{f:.4}"),
        None => format!("{}/{}", ratio.numer(), ratio.denom()),
    }
}
