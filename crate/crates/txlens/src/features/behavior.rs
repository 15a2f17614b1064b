//! Behavioral evidence: what the transaction actually does on chain.
//! Covers the call chain, asset movements, approvals, and storage effects.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    selector_of, Address, CallKind, ExecutionTrace, LogEntry, Selector, Word, U256,
};

/// `transfer(address,uint256)`.
pub const SELECTOR_TRANSFER: Selector = Selector([0xa9, 0x05, 0x9c, 0xbb]);
/// `transferFrom(address,address,uint256)`.
pub const SELECTOR_TRANSFER_FROM: Selector = Selector([0x23, 0xb8, 0x72, 0xdd]);
/// `approve(address,uint256)`.
pub const SELECTOR_APPROVE: Selector = Selector([0x09, 0x5e, 0xa7, 0xb3]);
/// `setApprovalForAll(address,bool)`.
pub const SELECTOR_SET_APPROVAL_FOR_ALL: Selector = Selector([0xa2, 0x2c, 0xb4, 0x65]);

/// Topic 0 of `Transfer(address,address,uint256)`.
pub const TRANSFER_EVENT_TOPIC: Word = Word([
    0xdd, 0xf2, 0x52, 0xad, 0x1b, 0xe2, 0xc8, 0x9b, 0x69, 0xc2, 0xb0, 0x68, 0xfc, 0x37, 0x8d,
    0xaa, 0x95, 0x2b, 0xa7, 0xf1, 0x63, 0xc4, 0xa1, 0x16, 0x28, 0xf5, 0x5a, 0x4d, 0xf5, 0x23,
    0xb3, 0xef,
]);
/// Topic 0 of `Approval(address,address,uint256)`.
pub const APPROVAL_EVENT_TOPIC: Word = Word([
    0x8c, 0x5b, 0xe1, 0xe5, 0xeb, 0xec, 0x7d, 0x5b, 0xd1, 0x4f, 0x71, 0x42, 0x7d, 0x1e, 0x84,
    0xf3, 0xdd, 0x03, 0x14, 0xc0, 0xf7, 0xb2, 0x29, 0x1e, 0x5b, 0x20, 0x0a, 0xc8, 0xc7, 0xc3,
    0xb9, 0x25,
]);

/// Storage slot of the EIP-1967 proxy implementation pointer.
pub fn eip1967_implementation_slot() -> Word {
    Word::from_str("0x360894a13ba1a3210667c828492db98dca3e2076cc3735a920a3ca505d382bbc").unwrap()
}

/// Storage slot of the EIP-1967 proxy admin.
pub fn eip1967_admin_slot() -> Word {
    Word::from_str("0xb53127684a568b3173ae13b9f8a6016e243e63b6e8ee1178d6a717850b5d6103").unwrap()
}

/// One row of the flattened call chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallChainEntry {
    pub depth: u32,
    pub call_kind: CallKind,
    pub caller: Address,
    pub callee: Address,
    pub selector: Option<Selector>,
    pub reverted: bool,
}

/// Flattens the call tree into pre-order rows, one per frame.
pub fn extract_call_chain(trace: &ExecutionTrace) -> Vec<CallChainEntry> {
    trace
        .root
        .iter_preorder()
        .map(|node| CallChainEntry {
            depth: node.depth,
            call_kind: node.call_kind,
            caller: node.caller,
            callee: node.callee,
            selector: selector_of(&node.input),
            reverted: node.reverted,
        })
        .collect()
}

/// What is being moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AssetKind {
    Native,
    Erc20 { token: Address },
}

/// Where the transfer was observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransferEvidence {
    /// Native value field on a call frame.
    ValueField,
    /// Decoded from a token call's input.
    SelectorCall,
    /// Decoded from an emitted Transfer log.
    EventLog,
    /// Call input and a matching log agree.
    Both,
}

/// One detected asset movement with amount always greater than zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenTransfer {
    pub asset: AssetKind,
    pub from: Address,
    pub to: Address,
    #[serde(with = "crate::model::u256_decimal")]
    pub amount: U256,
    pub evidence: TransferEvidence,
}

/// One token approval granted by the transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApprovalFinding {
    pub token: Address,
    pub owner: Address,
    pub spender: Address,
    /// `None` for `setApprovalForAll`, which has no amount.
    #[serde(with = "option_u256_decimal")]
    pub amount: Option<U256>,
    pub approve_all: bool,
    pub unlimited: bool,
}

mod option_u256_decimal {
    use crate::model::U256;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &Option<U256>, serializer: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => serializer.serialize_some(&x.to_string()),
            None => serializer.serialize_none(),
        }
    }
}

fn abi_word(input: &[u8], index: usize) -> Option<Word> {
    let start = 4 + index * 32;
    let end = start + 32;
    if input.len() < end {
        return None;
    }
    let mut out = [0u8; 32];
    out.copy_from_slice(&input[start..end]);
    Some(Word(out))
}

fn abi_address(input: &[u8], index: usize) -> Option<Address> {
    abi_word(input, index)?.as_address()
}

fn word_to_u256(w: &Word) -> U256 {
    U256::from_big_endian(&w.0)
}

/// Detects native and ERC-20 transfers across the whole call tree.
///
/// Native transfers come from value-bearing frames. ERC-20 transfers are
/// decoded from `transfer`/`transferFrom` inputs and upgraded to `BOTH`
/// when a Transfer log from the same token matches sender, recipient, and
/// amount. Returns the transfers in pre-order (then log-only ones in log
/// order) plus warnings for undecodable token calls.
pub fn detect_token_transfers(trace: &ExecutionTrace) -> (Vec<TokenTransfer>, Vec<String>) {
    let mut transfers = Vec::new();
    let mut warnings = Vec::new();

    let mut decoded_logs: Vec<(usize, TokenTransfer)> = Vec::new();
    for (i, log) in trace.logs.iter().enumerate() {
        if let Some(t) = decode_transfer_log(log) {
            decoded_logs.push((i, t));
        }
    }
    let mut log_used = vec![false; decoded_logs.len()];

    for node in trace.root.iter_preorder() {
        if node.value > U256::zero() && node.call_kind != CallKind::Delegatecall {
            transfers.push(TokenTransfer {
                asset: AssetKind::Native,
                from: node.caller,
                to: node.callee,
                amount: node.value,
                evidence: TransferEvidence::ValueField,
            });
        }

        let selector = match selector_of(&node.input) {
            Some(s) => s,
            None => continue,
        };
        let decoded = match selector {
            SELECTOR_TRANSFER => match (abi_address(&node.input, 0), abi_word(&node.input, 1)) {
                (Some(to), Some(amount)) => Some((node.caller, to, word_to_u256(&amount))),
                _ => {
                    warnings.push(format!(
                        "could not decode transfer() input on call to {}",
                        node.callee
                    ));
                    None
                }
            },
            SELECTOR_TRANSFER_FROM => {
                match (
                    abi_address(&node.input, 0),
                    abi_address(&node.input, 1),
                    abi_word(&node.input, 2),
                ) {
                    (Some(from), Some(to), Some(amount)) => {
                        Some((from, to, word_to_u256(&amount)))
                    }
                    _ => {
                        warnings.push(format!(
                            "could not decode transferFrom() input on call to {}",
                            node.callee
                        ));
                        None
                    }
                }
            }
            _ => None,
        };

        if let Some((from, to, amount)) = decoded {
            if amount.is_zero() {
                warnings.push(format!("dropped zero-amount token transfer on {}", node.callee));
                continue;
            }
            let token = node.callee;
            let matched = decoded_logs.iter().enumerate().find(|(j, (_, logt))| {
                !log_used[*j]
                    && logt.asset == AssetKind::Erc20 { token }
                    && logt.from == from
                    && logt.to == to
                    && logt.amount == amount
            });
            let evidence = match matched {
                Some((j, _)) => {
                    log_used[j] = true;
                    TransferEvidence::Both
                }
                None => TransferEvidence::SelectorCall,
            };
            transfers.push(TokenTransfer {
                asset: AssetKind::Erc20 { token },
                from,
                to,
                amount,
                evidence,
            });
        }
    }

    for (j, (_, logt)) in decoded_logs.into_iter().enumerate() {
        if !log_used[j] && logt.amount > U256::zero() {
            transfers.push(logt);
        }
    }

    (transfers, warnings)
}

fn decode_transfer_log(log: &LogEntry) -> Option<TokenTransfer> {
    if log.topics.len() != 3 || log.topics[0] != TRANSFER_EVENT_TOPIC || log.data.len() != 32 {
        return None;
    }
    let from = log.topics[1].as_address()?;
    let to = log.topics[2].as_address()?;
    let mut amount = [0u8; 32];
    amount.copy_from_slice(&log.data);
    Some(TokenTransfer {
        asset: AssetKind::Erc20 { token: log.emitter },
        from,
        to,
        amount: U256::from_big_endian(&amount),
        evidence: TransferEvidence::EventLog,
    })
}

/// Detects `approve` and `setApprovalForAll` grants across the call tree,
/// in pre-order. Undecodable approval calls produce warnings.
pub fn detect_approvals(trace: &ExecutionTrace) -> (Vec<ApprovalFinding>, Vec<String>) {
    let mut approvals = Vec::new();
    let mut warnings = Vec::new();
    for node in trace.root.iter_preorder() {
        match selector_of(&node.input) {
            Some(SELECTOR_APPROVE) => {
                match (abi_address(&node.input, 0), abi_word(&node.input, 1)) {
                    (Some(spender), Some(amount)) => {
                        let amount = word_to_u256(&amount);
                        approvals.push(ApprovalFinding {
                            token: node.callee,
                            owner: node.caller,
                            spender,
                            unlimited: amount == U256::MAX,
                            amount: Some(amount),
                            approve_all: false,
                        });
                    }
                    _ => warnings.push(format!(
                        "could not decode approve() input on call to {}",
                        node.callee
                    )),
                }
            }
            Some(SELECTOR_SET_APPROVAL_FOR_ALL) => {
                match (abi_address(&node.input, 0), abi_word(&node.input, 1)) {
                    (Some(operator), Some(flag)) => {
                        let enabled = !flag.is_zero();
                        if enabled {
                            approvals.push(ApprovalFinding {
                                token: node.callee,
                                owner: node.caller,
                                spender: operator,
                                amount: None,
                                approve_all: true,
                                unlimited: true,
                            });
                        }
                    }
                    _ => warnings.push(format!(
                        "could not decode setApprovalForAll() input on call to {}",
                        node.callee
                    )),
                }
            }
            _ => {}
        }
    }
    (approvals, warnings)
}

/// Classification of a storage mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateChangeKind {
    OwnershipChange,
    RoleUpdate,
    ProxyUpgrade,
    BalanceWrite,
    UnclassifiedWrite,
}

impl std::fmt::Display for StateChangeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StateChangeKind::OwnershipChange => "OWNERSHIP_CHANGE",
            StateChangeKind::RoleUpdate => "ROLE_UPDATE",
            StateChangeKind::ProxyUpgrade => "PROXY_UPGRADE",
            StateChangeKind::BalanceWrite => "BALANCE_WRITE",
            StateChangeKind::UnclassifiedWrite => "UNCLASSIFIED_WRITE",
        };
        f.write_str(s)
    }
}

/// One meaningful storage mutation with its classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateChangeFinding {
    pub kind: StateChangeKind,
    pub contract: Address,
    pub slot: Word,
    pub old_value: Word,
    pub new_value: Word,
    pub description: String,
}

/// Errors raised while loading a slot-hint file.
#[derive(Debug, Error)]
pub enum HintError {
    #[error("failed to read hint file {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad hint file {path}: {reason}")]
    Parse { path: std::path::PathBuf, reason: String },
}

/// Known slot layouts, mapping `(contract, slot)` to the kind of state the
/// slot holds. Hints never cover proxy slots; those are recognized by the
/// well-known EIP-1967 locations.
#[derive(Debug, Clone, Default)]
pub struct SlotHints {
    map: HashMap<(Address, Word), StateChangeKind>,
}

#[derive(Deserialize)]
struct HintFile {
    hints: Vec<HintEntry>,
}

#[derive(Deserialize)]
struct HintEntry {
    contract: Address,
    slot: Word,
    kind: StateChangeKind,
}

impl SlotHints {
    pub fn empty() -> Self {
        SlotHints::default()
    }

    pub fn insert(&mut self, contract: Address, slot: Word, kind: StateChangeKind) {
        self.map.insert((contract, slot), kind);
    }

    /// Loads hints from a JSON file of `{"hints": [{contract, slot, kind}]}`.
    /// Only layout kinds are accepted; proxy and unclassified kinds are
    /// rejected because they are derived, not declared.
    pub fn load(path: &std::path::Path) -> Result<Self, HintError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| HintError::Io { path: path.to_path_buf(), source })?;
        let file: HintFile = serde_json::from_str(&text)
            .map_err(|e| HintError::Parse { path: path.to_path_buf(), reason: e.to_string() })?;
        let mut hints = SlotHints::default();
        for entry in file.hints {
            match entry.kind {
                StateChangeKind::OwnershipChange
                | StateChangeKind::RoleUpdate
                | StateChangeKind::BalanceWrite => {
                    hints.insert(entry.contract, entry.slot, entry.kind);
                }
                other => {
                    return Err(HintError::Parse {
                        path: path.to_path_buf(),
                        reason: format!("hint kind {other} cannot be declared in a hint file"),
                    })
                }
            }
        }
        Ok(hints)
    }

    pub fn get(&self, contract: &Address, slot: &Word) -> Option<StateChangeKind> {
        self.map.get(&(*contract, *slot)).copied()
    }
}

/// Classifies every effective storage write (no-op writes are dropped).
///
/// EIP-1967 slots are recognized without hints: the implementation slot
/// becomes `PROXY_UPGRADE`, the admin slot `OWNERSHIP_CHANGE`. Everything
/// else consults the hints and falls back to `UNCLASSIFIED_WRITE`.
pub fn analyze_storage_writes(
    trace: &ExecutionTrace,
    hints: &SlotHints,
) -> Vec<StateChangeFinding> {
    let impl_slot = eip1967_implementation_slot();
    let admin_slot = eip1967_admin_slot();
    let mut findings = Vec::new();
    for write in &trace.storage_writes {
        if write.old_value == write.new_value {
            continue;
        }
        let (kind, description) = if write.slot == impl_slot {
            (
                StateChangeKind::ProxyUpgrade,
                format!(
                    "proxy implementation pointer changed from {} to {}",
                    short_word(&write.old_value),
                    short_word(&write.new_value)
                ),
            )
        } else if write.slot == admin_slot {
            (
                StateChangeKind::OwnershipChange,
                format!(
                    "proxy admin changed from {} to {}",
                    short_word(&write.old_value),
                    short_word(&write.new_value)
                ),
            )
        } else if let Some(kind) = hints.get(&write.contract, &write.slot) {
            let what = match kind {
                StateChangeKind::OwnershipChange => "owner slot",
                StateChangeKind::RoleUpdate => "role slot",
                StateChangeKind::BalanceWrite => "balance slot",
                _ => "slot",
            };
            (kind, format!("{what} rewritten on {}", write.contract))
        } else {
            (
                StateChangeKind::UnclassifiedWrite,
                format!("slot {} rewritten on {}", short_word(&write.slot), write.contract),
            )
        };
        findings.push(StateChangeFinding {
            kind,
            contract: write.contract,
            slot: write.slot,
            old_value: write.old_value,
            new_value: write.new_value,
            description,
        });
    }
    findings
}

fn short_word(w: &Word) -> String {
    match w.as_address() {
        Some(addr) => addr.to_string(),
        None => w.to_string(),
    }
}
