//! Threat intelligence: file-backed blacklists, contract tags, and calldata
//! patterns, queried as additional evidence for the classifier.
//!
//! Hits never short-circuit the verdict; they are passed to the models as
//! one of the four evidence sections.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::UiFindings;
use crate::model::{selector_of, Address, ExecutionTrace, RiskLabel, Selector, TxEnvelope};

/// Errors raised while loading threat intelligence files.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("unrecognized threat file name {path} (expected addresses.txt, domains.txt, tags.json, or patterns.json)")]
    UnknownFile { path: PathBuf },
}

/// One calldata pattern: selector equality plus an optional regex over the
/// full input rendered as lowercase hex (no 0x prefix).
#[derive(Debug, Clone)]
pub struct SelectorPattern {
    pub selector: Selector,
    pub calldata_regex: Option<Regex>,
    pub label: String,
    pub severity: RiskLabel,
}

/// In-memory threat intelligence, immutable after load.
#[derive(Debug, Clone, Default)]
pub struct ThreatDB {
    blacklisted_addresses: HashMap<Address, String>,
    blacklisted_domains: HashMap<String, String>,
    contract_tags: HashMap<Address, (Vec<String>, String)>,
    selector_patterns: Vec<SelectorPattern>,
}

/// The lookup category a hit came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HitKind {
    Address,
    Domain,
    Tag,
    Pattern,
}

/// A single threat intelligence match.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreatHit {
    pub kind: HitKind,
    pub subject: String,
    pub label: String,
    pub severity: Option<RiskLabel>,
    pub source: String,
}

impl ThreatDB {
    pub fn is_empty(&self) -> bool {
        self.blacklisted_addresses.is_empty()
            && self.blacklisted_domains.is_empty()
            && self.contract_tags.is_empty()
            && self.selector_patterns.is_empty()
    }

    pub fn address_count(&self) -> usize {
        self.blacklisted_addresses.len()
    }

    pub fn pattern_count(&self) -> usize {
        self.selector_patterns.len()
    }
}

/// Loads and unions a set of threat files, dispatching on file name:
/// `addresses.txt`, `domains.txt`, `tags.json`, `patterns.json`. Duplicate
/// entries are deduplicated; on tag conflicts the last file wins.
pub fn load_db(paths: &[PathBuf]) -> Result<ThreatDB, LoadError> {
    let mut db = ThreatDB::default();
    for path in paths {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match name {
            "addresses.txt" => load_addresses(path, &mut db)?,
            "domains.txt" => load_domains(path, &mut db)?,
            "tags.json" => load_tags(path, &mut db)?,
            "patterns.json" => load_patterns(path, &mut db)?,
            _ => return Err(LoadError::UnknownFile { path: path.clone() }),
        }
    }
    Ok(db)
}

/// Loads every recognized threat file directly under `dir`.
pub fn load_dir(dir: &Path) -> Result<ThreatDB, LoadError> {
    let mut paths = Vec::new();
    for name in ["addresses.txt", "domains.txt", "tags.json", "patterns.json"] {
        let candidate = dir.join(name);
        if candidate.is_file() {
            paths.push(candidate);
        }
    }
    load_db(&paths)
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path)
        .map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

fn source_name(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("unknown").to_string()
}

fn load_addresses(path: &Path, db: &mut ThreatDB) -> Result<(), LoadError> {
    for (idx, line) in read(path)?.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (addr_text, source) = split_tabbed(trimmed, path, line_no)?;
        let addr = Address::from_str(addr_text).map_err(|e| LoadError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason: format!("bad address {addr_text:?}: {e}"),
        })?;
        db.blacklisted_addresses.insert(addr, source.to_string());
    }
    Ok(())
}

fn load_domains(path: &Path, db: &mut ThreatDB) -> Result<(), LoadError> {
    for (idx, line) in read(path)?.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (domain, source) = split_tabbed(trimmed, path, line_no)?;
        if domain.is_empty() || domain.contains(char::is_whitespace) {
            return Err(LoadError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("bad domain {domain:?}"),
            });
        }
        db.blacklisted_domains.insert(domain.to_ascii_lowercase(), source.to_string());
    }
    Ok(())
}

fn split_tabbed<'a>(line: &'a str, path: &Path, line_no: usize) -> Result<(&'a str, &'a str), LoadError> {
    line.split_once('\t').map(|(a, b)| (a.trim(), b.trim())).ok_or_else(|| LoadError::Parse {
        path: path.to_path_buf(),
        line: line_no,
        reason: "expected `entry<TAB>source`".to_string(),
    })
}

fn load_tags(path: &Path, db: &mut ThreatDB) -> Result<(), LoadError> {
    let text = read(path)?;
    let parsed: HashMap<String, Vec<String>> =
        serde_json::from_str(&text).map_err(|e| LoadError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;
    let source = source_name(path);
    for (addr_text, tags) in parsed {
        let addr = Address::from_str(&addr_text).map_err(|e| LoadError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("bad address key {addr_text:?}: {e}"),
        })?;
        db.contract_tags.insert(addr, (tags, source.clone()));
    }
    Ok(())
}

#[derive(Deserialize)]
struct PatternEntry {
    selector: String,
    #[serde(default)]
    calldata_regex: Option<String>,
    label: String,
    severity: String,
}

fn load_patterns(path: &Path, db: &mut ThreatDB) -> Result<(), LoadError> {
    let text = read(path)?;
    let entries: Vec<PatternEntry> =
        serde_json::from_str(&text).map_err(|e| LoadError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;
    let parse_err = |reason: String| LoadError::Parse { path: path.to_path_buf(), line: 0, reason };
    for entry in entries {
        let selector = Selector::from_str(&entry.selector)
            .map_err(|e| parse_err(format!("bad selector {:?}: {e}", entry.selector)))?;
        let severity = match entry.severity.as_str() {
            "SUSPICIOUS" => RiskLabel::Suspicious,
            "MALICIOUS" => RiskLabel::Malicious,
            other => {
                return Err(parse_err(format!(
                    "pattern severity must be SUSPICIOUS or MALICIOUS, got {other:?}"
                )))
            }
        };
        let calldata_regex = match entry.calldata_regex {
            Some(raw) => Some(
                Regex::new(&raw).map_err(|e| parse_err(format!("bad regex {raw:?}: {e}")))?,
            ),
            None => None,
        };
        db.selector_patterns.push(SelectorPattern {
            selector,
            calldata_regex,
            label: entry.label,
            severity,
        });
    }
    Ok(())
}

/// Queries every lookup against the transaction and returns all hits in
/// deterministic order: addresses in pre-order of first appearance, then the
/// page domain, then calldata patterns in pre-order.
pub fn query_all(
    db: &ThreatDB,
    tx: &TxEnvelope,
    trace: &ExecutionTrace,
    ui: &UiFindings,
) -> Vec<ThreatHit> {
    let mut hits = Vec::new();

    let mut addresses = vec![tx.sender];
    if let Some(recipient) = tx.recipient {
        addresses.push(recipient);
    }
    addresses.extend(trace.touched_addresses());
    let mut seen = std::collections::HashSet::new();
    for addr in addresses {
        if !seen.insert(addr) {
            continue;
        }
        if let Some(source) = db.blacklisted_addresses.get(&addr) {
            hits.push(ThreatHit {
                kind: HitKind::Address,
                subject: addr.to_string(),
                label: "blacklisted address".to_string(),
                severity: Some(RiskLabel::Malicious),
                source: source.clone(),
            });
        }
        if let Some((tags, source)) = db.contract_tags.get(&addr) {
            for tag in tags {
                hits.push(ThreatHit {
                    kind: HitKind::Tag,
                    subject: addr.to_string(),
                    label: tag.clone(),
                    severity: None,
                    source: source.clone(),
                });
            }
        }
    }

    if let Some(domain) = &ui.main_domain {
        if let Some(source) = db.blacklisted_domains.get(&domain.to_ascii_lowercase()) {
            hits.push(ThreatHit {
                kind: HitKind::Domain,
                subject: domain.clone(),
                label: "blacklisted domain".to_string(),
                severity: Some(RiskLabel::Malicious),
                source: source.clone(),
            });
        }
    }

    for node in trace.root.iter_preorder() {
        let selector = match selector_of(&node.input) {
            Some(s) => s,
            None => continue,
        };
        let input_hex = hex::encode(&node.input);
        for pattern in &db.selector_patterns {
            if pattern.selector != selector {
                continue;
            }
            if let Some(re) = &pattern.calldata_regex {
                if !re.is_match(&input_hex) {
                    continue;
                }
            }
            hits.push(ThreatHit {
                kind: HitKind::Pattern,
                subject: format!("{} input to {}", selector, node.callee),
                label: pattern.label.clone(),
                severity: Some(pattern.severity),
                source: "patterns".to_string(),
            });
        }
    }

    hits
}
