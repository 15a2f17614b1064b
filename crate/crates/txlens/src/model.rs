//! Core domain types shared by every analysis stage: transaction envelopes,
//! execution traces, and the risk label ordering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use primitive_types::U256;

/// Minimum intrinsic gas for a plain value transfer on EVM chains.
pub const MIN_TRANSFER_GAS: u64 = 21_000;

/// Error raised when a hex string cannot be decoded into a fixed-width value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HexParseError {
    #[error("expected {expected} hex digits, got {got}")]
    Length { expected: &'static str, got: usize },
    #[error("invalid hex digit")]
    Digit,
}

fn strip_hex_prefix(s: &str) -> &str {
    s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s)
}

/// A 20-byte account address, normalized to lowercase hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| *b == 0)
    }
}

impl FromStr for Address {
    type Err = HexParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = strip_hex_prefix(s);
        if digits.len() != 40 {
            return Err(HexParseError::Length { expected: "40", got: digits.len() });
        }
        let mut out = [0u8; 20];
        hex::decode_to_slice(digits, &mut out).map_err(|_| HexParseError::Digit)?;
        Ok(Address(out))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct AddrVisitor;
        impl Visitor<'_> for AddrVisitor {
            type Value = Address;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a 20-byte hex address")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Address, E> {
                v.parse().map_err(|e: HexParseError| E::custom(format!("bad address: {e}")))
            }
        }
        deserializer.deserialize_str(AddrVisitor)
    }
}

/// A 32-byte EVM word (storage slot, storage value, or log topic).
///
/// Shorter hex inputs are zero-padded on the left so `0x1` and the full
/// 64-digit form compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word(pub [u8; 32]);

impl Word {
    pub const ZERO: Word = Word([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| *b == 0)
    }

    /// Interprets the low 20 bytes as an address when the high 12 are zero.
    pub fn as_address(&self) -> Option<Address> {
        if self.0[..12].iter().any(|b| *b != 0) {
            return None;
        }
        let mut out = [0u8; 20];
        out.copy_from_slice(&self.0[12..]);
        Some(Address(out))
    }
}

impl FromStr for Word {
    type Err = HexParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = strip_hex_prefix(s);
        if digits.is_empty() || digits.len() > 64 {
            return Err(HexParseError::Length { expected: "1..=64", got: digits.len() });
        }
        let padded = format!("{digits:0>64}");
        let mut out = [0u8; 32];
        hex::decode_to_slice(&padded, &mut out).map_err(|_| HexParseError::Digit)?;
        Ok(Word(out))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct WordVisitor;
        impl Visitor<'_> for WordVisitor {
            type Value = Word;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a 32-byte hex word")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Word, E> {
                v.parse().map_err(|e: HexParseError| E::custom(format!("bad word: {e}")))
            }
        }
        deserializer.deserialize_str(WordVisitor)
    }
}

/// A 4-byte function selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Selector(pub [u8; 4]);

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl FromStr for Selector {
    type Err = HexParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = strip_hex_prefix(s);
        if digits.len() != 8 {
            return Err(HexParseError::Length { expected: "8", got: digits.len() });
        }
        let mut out = [0u8; 4];
        hex::decode_to_slice(digits, &mut out).map_err(|_| HexParseError::Digit)?;
        Ok(Selector(out))
    }
}

impl Serialize for Selector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

/// Returns the 4-byte selector of a calldata buffer, or `None` when the
/// buffer is shorter than 4 bytes (plain transfers, fallback calls).
pub fn selector_of(data: &[u8]) -> Option<Selector> {
    if data.len() < 4 {
        return None;
    }
    let mut out = [0u8; 4];
    out.copy_from_slice(&data[..4]);
    Some(Selector(out))
}

/// Serde codec mapping `Vec<u8>` to 0x-prefixed lowercase hex strings.
pub mod bytes_hex {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format!("0x{}", hex::encode(bytes)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(&s);
        hex::decode(digits).map_err(|e| D::Error::custom(format!("bad hex bytes: {e}")))
    }
}

/// Serde codec mapping `U256` to decimal strings, which survive JSON readers
/// that clamp large integers to 53-bit floats.
pub mod u256_decimal {
    use primitive_types::U256;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &U256, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&value.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<U256, D::Error> {
        let s = String::deserialize(deserializer)?;
        U256::from_dec_str(&s).map_err(|e| D::Error::custom(format!("bad decimal integer: {e:?}")))
    }
}

/// How a page script arrived at the wallet: inlined in the document or
/// fetched from a separate URL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptSourceKind {
    Inline,
    External,
}

/// A script captured from the page that initiated the transaction request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageScript {
    pub source_kind: ScriptSourceKind,
    pub content: String,
    #[serde(default)]
    pub url: Option<String>,
}

/// The transaction as the wallet would sign it, plus optional capture
/// metadata from the requesting page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxEnvelope {
    pub chain_id: u64,
    #[serde(rename = "from")]
    pub sender: Address,
    /// `None` for contract creation.
    #[serde(rename = "to")]
    pub recipient: Option<Address>,
    #[serde(with = "u256_decimal")]
    pub value: U256,
    #[serde(with = "bytes_hex")]
    pub calldata: Vec<u8>,
    pub gas_limit: u64,
    #[serde(with = "u256_decimal")]
    pub effective_gas_price: U256,
    #[serde(with = "u256_decimal")]
    pub base_fee: U256,
    pub nonce: u64,
    #[serde(default)]
    pub origin_url: Option<String>,
    #[serde(default)]
    pub page_scripts: Option<Vec<PageScript>>,
}

/// The kind of frame in the call tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CallKind {
    Call,
    Delegatecall,
    Staticcall,
    Create,
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CallKind::Call => "CALL",
            CallKind::Delegatecall => "DELEGATECALL",
            CallKind::Staticcall => "STATICCALL",
            CallKind::Create => "CREATE",
        };
        f.write_str(s)
    }
}

/// One frame of the execution call tree. Reverted frames stay in the tree
/// because attempted actions carry signal even when they fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallNode {
    pub call_kind: CallKind,
    pub caller: Address,
    pub callee: Address,
    #[serde(with = "u256_decimal")]
    pub value: U256,
    #[serde(with = "bytes_hex")]
    pub input: Vec<u8>,
    #[serde(with = "bytes_hex", default)]
    pub output: Vec<u8>,
    pub gas_used: u64,
    /// Distance from the root frame; recomputed on ingest, not serialized.
    #[serde(skip)]
    pub depth: u32,
    #[serde(default)]
    pub children: Vec<CallNode>,
    #[serde(default)]
    pub reverted: bool,
}

impl CallNode {
    /// Walks the subtree in pre-order (parent before children, children in
    /// recorded order), which is the canonical ordering everywhere.
    pub fn iter_preorder(&self) -> PreorderIter<'_> {
        PreorderIter { stack: vec![self] }
    }
}

pub struct PreorderIter<'a> {
    stack: Vec<&'a CallNode>,
}

impl<'a> Iterator for PreorderIter<'a> {
    type Item = &'a CallNode;

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

/// One storage slot mutation observed during execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageWrite {
    pub contract: Address,
    pub slot: Word,
    #[serde(rename = "old")]
    pub old_value: Word,
    #[serde(rename = "new")]
    pub new_value: Word,
}

/// One emitted log with up to four indexed topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub emitter: Address,
    pub topics: Vec<Word>,
    #[serde(with = "bytes_hex", default)]
    pub data: Vec<u8>,
}

/// Terminal status of the traced execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TraceStatus {
    Success,
    Revert,
}

/// Source material available for a contract touched by the trace.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CodeSnippet {
    #[serde(default)]
    pub verified_source: Option<String>,
    #[serde(default)]
    pub decompiled: Option<String>,
}

/// A full normalized execution trace for one transaction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub root: CallNode,
    pub storage_writes: Vec<StorageWrite>,
    pub logs: Vec<LogEntry>,
    pub gas_used: u64,
    pub status: TraceStatus,
    pub code_snippets: BTreeMap<Address, CodeSnippet>,
}

impl ExecutionTrace {
    /// Distinct addresses touched as caller or callee, in pre-order of first
    /// appearance.
    pub fn touched_addresses(&self) -> Vec<Address> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for node in self.root.iter_preorder() {
            for addr in [node.caller, node.callee] {
                if seen.insert(addr) {
                    out.push(addr);
                }
            }
        }
        out
    }
}

/// Final risk classification, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskLabel {
    Safe,
    Suspicious,
    Malicious,
}

impl RiskLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RiskLabel::Safe => "safe",
            RiskLabel::Suspicious => "suspicious",
            RiskLabel::Malicious => "malicious",
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "safe" => Ok(RiskLabel::Safe),
            "suspicious" => Ok(RiskLabel::Suspicious),
            "malicious" => Ok(RiskLabel::Malicious),
            other => Err(format!("unknown risk label: {other:?}")),
        }
    }
}

/// Returns the most severe label, or `None` for an empty slice.
pub fn max_severity(labels: &[RiskLabel]) -> Option<RiskLabel> {
    labels.iter().copied().max()
}

/// A structural invariant broken by a trace, with enough detail to locate
/// the offending node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

/// Checks every structural invariant of a trace against its envelope and
/// returns all violations rather than stopping at the first.
pub fn validate_trace(trace: &ExecutionTrace, envelope: &TxEnvelope) -> Vec<Violation> {
    let mut violations = Vec::new();

    if trace.root.depth != 0 {
        violations.push(Violation {
            invariant: "root_depth",
            detail: format!("root frame has depth {}", trace.root.depth),
        });
    }
    if trace.gas_used > envelope.gas_limit {
        violations.push(Violation {
            invariant: "gas_within_limit",
            detail: format!("trace used {} gas with a limit of {}", trace.gas_used, envelope.gas_limit),
        });
    }
    if envelope.value > U256::zero() && envelope.gas_limit < MIN_TRANSFER_GAS {
        violations.push(Violation {
            invariant: "min_transfer_gas",
            detail: format!("value-bearing envelope has gas limit {}", envelope.gas_limit),
        });
    }

    let mut callees = std::collections::HashSet::new();
    for node in trace.root.iter_preorder() {
        callees.insert(node.callee);
        if node.call_kind == CallKind::Staticcall && node.value > U256::zero() {
            violations.push(Violation {
                invariant: "staticcall_value",
                detail: format!("STATICCALL to {} carries value {}", node.callee, node.value),
            });
        }
        for child in &node.children {
            if child.depth != node.depth + 1 {
                violations.push(Violation {
                    invariant: "child_depth",
                    detail: format!(
                        "child of {} at depth {} has depth {}",
                        node.callee, node.depth, child.depth
                    ),
                });
            }
        }
    }

    for write in &trace.storage_writes {
        if !callees.contains(&write.contract) {
            violations.push(Violation {
                invariant: "storage_write_target",
                detail: format!("write to {} slot {} hits a contract absent from the call tree", write.contract, write.slot),
            });
        }
    }
    for log in &trace.logs {
        if log.topics.len() > 4 {
            violations.push(Violation {
                invariant: "log_topic_count",
                detail: format!("log from {} has {} topics", log.emitter, log.topics.len()),
            });
        }
    }

    violations
}

/// Assigns `depth` over a freshly parsed call tree: root 0, children one
/// deeper than their parent.
pub fn assign_depths(root: &mut CallNode) {
    fn walk(node: &mut CallNode, depth: u32) {
        node.depth = depth;
        for child in &mut node.children {
            walk(child, depth + 1);
        }
    }
    walk(root, 0);
}
