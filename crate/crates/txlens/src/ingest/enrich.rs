//! Code snippet enrichment: look up verified source for every contract the
//! trace touches, falling back to a decompiler when the explorer has
//! nothing.

use url::Url;

use crate::model::{Address, CodeSnippet, ExecutionTrace};
use crate::util;

/// Source-of-truth lookup for verified contract source.
pub trait ExplorerClient: Sync + Send {
    /// Returns the verified source text, `Ok(None)` when the contract is
    /// unverified, or an error string on lookup failure.
    fn verified_source(&self, address: &Address) -> Result<Option<String>, String>;
}

/// Fallback lookup producing decompiled pseudocode from bytecode.
pub trait DecompilerClient: Sync + Send {
    fn decompile(&self, address: &Address) -> Result<Option<String>, String>;
}

/// A client that knows nothing; useful offline and as a default.
pub struct NoSourceProvider;

impl ExplorerClient for NoSourceProvider {
    fn verified_source(&self, _address: &Address) -> Result<Option<String>, String> {
        Ok(None)
    }
}

impl DecompilerClient for NoSourceProvider {
    fn decompile(&self, _address: &Address) -> Result<Option<String>, String> {
        Ok(None)
    }
}

/// Explorer client speaking the etherscan-style `getsourcecode` API.
pub struct EtherscanStyleExplorer {
    url: Url,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl EtherscanStyleExplorer {
    pub fn new(url: Url, api_key: Option<String>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .expect("reqwest client builds");
        EtherscanStyleExplorer { url, api_key, client }
    }
}

impl ExplorerClient for EtherscanStyleExplorer {
    fn verified_source(&self, address: &Address) -> Result<Option<String>, String> {
        let mut target = self.url.clone();
        target
            .query_pairs_mut()
            .append_pair("module", "contract")
            .append_pair("action", "getsourcecode")
            .append_pair("address", &address.to_string());
        if let Some(key) = &self.api_key {
            target.query_pairs_mut().append_pair("apikey", key);
        }
        let resp = self.client.get(target).send().map_err(|e| e.to_string())?;
        let body: serde_json::Value =
            resp.error_for_status().map_err(|e| e.to_string())?.json().map_err(|e| e.to_string())?;
        let source = body
            .pointer("/result/0/SourceCode")
            .and_then(|v| v.as_str())
            .unwrap_or_default();
        if source.is_empty() {
            Ok(None)
        } else {
            Ok(Some(source.to_string()))
        }
    }
}

/// Fills `trace.code_snippets` for every touched contract that does not have
/// an entry yet. Existing entries are never overwritten, so the operation is
/// idempotent; per-address failures are skipped and returned as warnings.
pub fn enrich_code_snippets(
    trace: &mut ExecutionTrace,
    explorer: &dyn ExplorerClient,
    decompiler: &dyn DecompilerClient,
) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let pending: Vec<Address> = trace
        .root
        .iter_preorder()
        .map(|node| node.callee)
        .filter(|addr| seen.insert(*addr) && !trace.code_snippets.contains_key(addr))
        .collect();

    let looked_up: Vec<(Address, Option<CodeSnippet>, Vec<String>)> =
        util::map_slice(&pending, |addr| lookup(addr, explorer, decompiler));

    let mut warnings = Vec::new();
    for (addr, snippet, mut addr_warnings) in looked_up {
        for w in &addr_warnings {
            log::warn!("code snippet enrichment: {w}");
        }
        warnings.append(&mut addr_warnings);
        if let Some(snippet) = snippet {
            trace.code_snippets.insert(addr, snippet);
        }
    }
    warnings
}

fn lookup(
    addr: &Address,
    explorer: &dyn ExplorerClient,
    decompiler: &dyn DecompilerClient,
) -> (Address, Option<CodeSnippet>, Vec<String>) {
    let mut warnings = Vec::new();
    match explorer.verified_source(addr) {
        Ok(Some(source)) => {
            return (*addr, Some(CodeSnippet { verified_source: Some(source), decompiled: None }), warnings)
        }
        Ok(None) => {}
        Err(reason) => warnings.push(format!("explorer lookup failed for {addr}: {reason}")),
    }
    match decompiler.decompile(addr) {
        Ok(Some(text)) => {
            (*addr, Some(CodeSnippet { verified_source: None, decompiled: Some(text) }), warnings)
        }
        Ok(None) => {
            warnings.push(format!("no source available for {addr}"));
            (*addr, None, warnings)
        }
        Err(reason) => {
            warnings.push(format!("decompiler failed for {addr}: {reason}"));
            (*addr, None, warnings)
        }
    }
}
