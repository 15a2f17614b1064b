//! Page-side evidence: where the signing request came from and what the
//! page scripts do around calldata construction and signature initiation.
//!
//! The scan is token and pattern based by design; identifying the sites is
//! enough for the classifier, full JavaScript semantics are out of scope.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::model::{ScriptSourceKind, TxEnvelope};

/// Signing API tokens recognized in page scripts.
pub const SIGNING_TOKENS: [&str; 4] =
    ["eth_sendTransaction", "eth_signTypedData", "personal_sign", "sendTransaction("];

const SNIPPET_CAP: usize = 120;

/// A line that appears to build calldata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructionSite {
    pub script_index: usize,
    /// 1-based line number.
    pub line: u32,
    pub snippet: String,
}

/// A line that appears to initiate a signature request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigningSite {
    pub script_index: usize,
    /// 1-based line number.
    pub line: u32,
    pub api_name: String,
}

/// UI evidence for one transaction. `present=false` means the wallet had no
/// page metadata at all, and every other field is empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UiFindings {
    pub present: bool,
    pub main_domain: Option<String>,
    pub calldata_construction_sites: Vec<ConstructionSite>,
    pub signing_initiation_sites: Vec<SigningSite>,
    pub notes: Vec<String>,
}

fn hex_literal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"0x[0-9a-fA-F]{8,}").unwrap())
}

fn selector_literal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"0x[0-9a-fA-F]{8}([^0-9a-fA-F]|$)").unwrap())
}

fn data_key_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"\bdata\s*:"#).unwrap())
}

fn concat_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"["']\s*\+"#).unwrap())
}

fn is_construction_line(line: &str) -> bool {
    if line.contains("encodeFunctionData") {
        return true;
    }
    if data_key_re().is_match(line)
        && (hex_literal_re().is_match(line) || concat_re().is_match(line))
    {
        return true;
    }
    selector_literal_re().is_match(line)
}

fn cap_snippet(line: &str) -> String {
    let trimmed = line.trim();
    if trimmed.chars().count() <= SNIPPET_CAP {
        trimmed.to_string()
    } else {
        trimmed.chars().take(SNIPPET_CAP).collect()
    }
}

/// Scans the envelope's page metadata for construction and signing sites.
///
/// Returns `present=false` when neither an origin URL nor page scripts were
/// captured. Scripts that cannot be scanned produce notes, never errors.
pub fn extract_ui_features(tx: &TxEnvelope) -> UiFindings {
    let scripts = tx.page_scripts.as_deref().unwrap_or(&[]);
    if tx.origin_url.is_none() && scripts.is_empty() {
        return UiFindings::default();
    }

    let mut findings = UiFindings { present: true, ..UiFindings::default() };

    if let Some(origin) = &tx.origin_url {
        match url::Url::parse(origin) {
            Ok(parsed) => match parsed.host_str() {
                Some(host) => findings.main_domain = Some(registrable_domain(host)),
                None => findings.notes.push(format!("origin URL {origin:?} has no host")),
            },
            Err(e) => findings.notes.push(format!("origin URL {origin:?} is unparseable: {e}")),
        }
    }

    for (script_index, script) in scripts.iter().enumerate() {
        if script.content.is_empty() {
            if script.source_kind == ScriptSourceKind::External {
                let which = script.url.as_deref().unwrap_or("<unknown>");
                findings.notes.push(format!("external script {which} has no captured content"));
            }
            continue;
        }
        for (line_idx, line) in script.content.lines().enumerate() {
            let line_no = (line_idx + 1) as u32;
            for token in SIGNING_TOKENS {
                if line.contains(token) {
                    findings.signing_initiation_sites.push(SigningSite {
                        script_index,
                        line: line_no,
                        api_name: token.trim_end_matches('(').to_string(),
                    });
                }
            }
            if is_construction_line(line) {
                findings.calldata_construction_sites.push(ConstructionSite {
                    script_index,
                    line: line_no,
                    snippet: cap_snippet(line),
                });
            }
        }
    }

    findings
}

fn suffix_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        include_str!("../../data/public_suffix_snapshot.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Reduces a host name to its registrable domain using the bundled public
/// suffix snapshot. Unknown suffixes fall back to the last two labels, and
/// IP addresses pass through unchanged.
pub fn registrable_domain(host: &str) -> String {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    if host.parse::<std::net::IpAddr>().is_ok() {
        return host;
    }
    let labels: Vec<&str> = host.split('.').collect();
    if labels.len() <= 1 {
        return host;
    }
    let suffixes = suffix_set();
    for i in 0..labels.len() {
        let candidate = labels[i..].join(".");
        if suffixes.contains(candidate.as_str()) {
            if i == 0 {
                return host;
            }
            return labels[i - 1..].join(".");
        }
    }
    labels[labels.len() - 2..].join(".")
}
