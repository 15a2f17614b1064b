//! Trace acquisition: parsing the normalized interchange document, fetching
//! raw traces from simulators or explorers, and enriching them with contract
//! source material.

mod adapter;
mod enrich;

pub use adapter::convert_call_tracer;
pub use enrich::{
    enrich_code_snippets, DecompilerClient, EtherscanStyleExplorer, ExplorerClient,
    NoSourceProvider,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::model::{
    assign_depths, validate_trace, Address, CallNode, CodeSnippet, ExecutionTrace, LogEntry,
    StorageWrite, TraceStatus, TxEnvelope, Violation,
};

/// Version of the normalized trace interchange document this build accepts.
pub const SCHEMA_VERSION: u32 = 1;

/// Errors produced while acquiring or decoding a trace.
#[derive(Debug, Error)]
pub enum IngestError {
    /// The document does not match the interchange schema; `path` points at
    /// the offending element in JSONPath notation.
    #[error("schema error at {path}: {reason}")]
    Schema { path: String, reason: String },
    /// The document parsed but breaks structural trace invariants.
    #[error("trace failed validation: {}", format_violations(.0))]
    Validation(Vec<Violation>),
    /// The request was rejected before any network or file access happened.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// A network-level failure; safe to retry.
    #[error("transport failure contacting {endpoint}: {reason}")]
    Transport { endpoint: String, reason: String },
    /// The external tool returned something the adapter does not recognize.
    #[error("unrecognized external trace format: {0}")]
    Adapter(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Where a trace comes from. Remote variants carry the endpoint URL and an
/// optional API credential.
#[derive(Debug, Clone)]
pub enum TraceSource {
    /// A normalized trace document on disk.
    FixtureFile { path: PathBuf },
    /// Recorded output of a local simulator run, in the external format.
    LocalSimulator { path: PathBuf },
    /// A simulator service that executes the transaction and returns the
    /// external format.
    RemoteSimulator { url: Url, api_key: Option<String> },
    /// A block explorer debug-trace endpoint for mined transactions.
    ChainExplorer { url: Url, api_key: Option<String> },
}

impl TraceSource {
    /// Parses a `kind:locator` spec such as `fixture:traces/a.json` or
    /// `explorer:https://api.example.com/trace`.
    pub fn parse_spec(spec: &str) -> Result<Self, IngestError> {
        let (kind, locator) = spec.split_once(':').ok_or_else(|| {
            IngestError::Precondition(format!(
                "trace source {spec:?} is missing a kind prefix (fixture:, local:, simulator:, explorer:)"
            ))
        })?;
        match kind {
            "fixture" => Ok(TraceSource::FixtureFile { path: PathBuf::from(locator) }),
            "local" => Ok(TraceSource::LocalSimulator { path: PathBuf::from(locator) }),
            "simulator" => Ok(TraceSource::RemoteSimulator {
                url: parse_endpoint(locator)?,
                api_key: None,
            }),
            "explorer" => Ok(TraceSource::ChainExplorer {
                url: parse_endpoint(locator)?,
                api_key: None,
            }),
            other => Err(IngestError::Precondition(format!("unknown trace source kind {other:?}"))),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        match &mut self {
            TraceSource::RemoteSimulator { api_key, .. }
            | TraceSource::ChainExplorer { api_key, .. } => *api_key = key,
            _ => {}
        }
        self
    }
}

fn parse_endpoint(locator: &str) -> Result<Url, IngestError> {
    Url::parse(locator).map_err(|e| {
        IngestError::Precondition(format!("remote trace source needs a URL, got {locator:?}: {e}"))
    })
}

/// Wire form of the normalized trace document.
#[derive(Debug, Serialize, Deserialize)]
struct NormalizedDoc {
    schema_version: u32,
    tx: TxEnvelope,
    trace: TraceBody,
    #[serde(default)]
    code_snippets: BTreeMap<Address, CodeSnippet>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceBody {
    status: TraceStatus,
    gas_used: u64,
    root: CallNode,
    #[serde(default)]
    storage_writes: Vec<StorageWrite>,
    #[serde(default)]
    logs: Vec<LogEntry>,
}

/// Parses a normalized trace document, assigning call depths and checking
/// every structural invariant before handing the trace on.
pub fn parse_normalized_trace(text: &str) -> Result<(TxEnvelope, ExecutionTrace), IngestError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let doc: NormalizedDoc = serde_path_to_error::deserialize(&mut de).map_err(schema_error)?;

    if doc.schema_version != SCHEMA_VERSION {
        return Err(IngestError::Schema {
            path: "$.schema_version".to_string(),
            reason: format!("unsupported version {} (expected {SCHEMA_VERSION})", doc.schema_version),
        });
    }

    let NormalizedDoc { tx, trace, code_snippets, .. } = doc;
    let mut root = trace.root;
    assign_depths(&mut root);
    let trace = ExecutionTrace {
        root,
        storage_writes: trace.storage_writes,
        logs: trace.logs,
        gas_used: trace.gas_used,
        status: trace.status,
        code_snippets,
    };

    let violations = validate_trace(&trace, &tx);
    if !violations.is_empty() {
        return Err(IngestError::Validation(violations));
    }
    Ok((tx, trace))
}

/// Maps a deserialization failure to a schema error whose path names the
/// offending element, e.g. `$.tx.gas_limit`.
fn schema_error(err: serde_path_to_error::Error<serde_json::Error>) -> IngestError {
    let track = err.path().to_string();
    let mut path = if track == "." { "$".to_string() } else { format!("$.{track}") };
    let full_reason = err.inner().to_string();
    let reason = full_reason.split(" at line ").next().unwrap_or(&full_reason).to_string();
    if let Some(field) = reason.strip_prefix("missing field `").and_then(|r| r.strip_suffix('`')) {
        path = format!("{path}.{field}");
    }
    IngestError::Schema { path, reason }
}

/// Serializes an envelope and trace back into the normalized document,
/// producing the same structure `parse_normalized_trace` accepts.
pub fn serialize_normalized_trace(tx: &TxEnvelope, trace: &ExecutionTrace) -> String {
    let doc = NormalizedDoc {
        schema_version: SCHEMA_VERSION,
        tx: tx.clone(),
        trace: TraceBody {
            status: trace.status,
            gas_used: trace.gas_used,
            root: trace.root.clone(),
            storage_writes: trace.storage_writes.clone(),
            logs: trace.logs.clone(),
        },
        code_snippets: trace.code_snippets.clone(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("normalized document serializes");
    out.push('\n');
    out
}

/// Network seam for the remote trace sources, stubbed out in tests.
pub trait TraceTransport: Sync + Send {
    fn get(&self, url: &Url) -> Result<String, String>;
    fn post_json(
        &self,
        url: &Url,
        body: &serde_json::Value,
        bearer: Option<&str>,
    ) -> Result<String, String>;
}

/// Blocking HTTP transport used outside of tests.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: std::time::Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("reqwest client builds");
        HttpTransport { client }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport::new(std::time::Duration::from_secs(30))
    }
}

impl TraceTransport for HttpTransport {
    fn get(&self, url: &Url) -> Result<String, String> {
        let resp = self.client.get(url.clone()).send().map_err(|e| e.to_string())?;
        let resp = resp.error_for_status().map_err(|e| e.to_string())?;
        resp.text().map_err(|e| e.to_string())
    }

    fn post_json(
        &self,
        url: &Url,
        body: &serde_json::Value,
        bearer: Option<&str>,
    ) -> Result<String, String> {
        let mut req = self.client.post(url.clone()).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let resp = resp.error_for_status().map_err(|e| e.to_string())?;
        resp.text().map_err(|e| e.to_string())
    }
}

fn is_tx_hash(s: &str) -> bool {
    let digits = match s.strip_prefix("0x") {
        Some(d) => d,
        None => return false,
    };
    digits.len() == 64 && digits.chars().all(|c| c.is_ascii_hexdigit())
}

/// Fetches a trace from the given source and normalizes it.
///
/// Fixture files are parsed as-is; every other source returns the external
/// call-tracer format, which is adapted to the normalized schema first.
pub fn fetch_trace(
    source: &TraceSource,
    reference: &str,
    transport: &dyn TraceTransport,
) -> Result<(TxEnvelope, ExecutionTrace), IngestError> {
    match source {
        TraceSource::FixtureFile { path } => {
            let text = read_file(path)?;
            parse_normalized_trace(&text)
        }
        TraceSource::LocalSimulator { path } => {
            let text = read_file(path)?;
            let normalized = convert_call_tracer(&text)?;
            parse_normalized_trace(&normalized)
        }
        TraceSource::RemoteSimulator { url, api_key } => {
            if reference.trim().is_empty() {
                return Err(IngestError::Precondition(
                    "remote simulation needs a non-empty transaction reference".to_string(),
                ));
            }
            let body = serde_json::json!({ "reference": reference });
            let text = transport.post_json(url, &body, api_key.as_deref()).map_err(|reason| {
                IngestError::Transport { endpoint: url.to_string(), reason }
            })?;
            let normalized = convert_call_tracer(&text)?;
            parse_normalized_trace(&normalized)
        }
        TraceSource::ChainExplorer { url, api_key } => {
            if !is_tx_hash(reference) {
                return Err(IngestError::Precondition(format!(
                    "explorer lookup needs a 32-byte 0x-prefixed transaction hash, got {reference:?}"
                )));
            }
            let mut target = url.clone();
            target.query_pairs_mut().append_pair("txhash", reference);
            if let Some(key) = api_key {
                target.query_pairs_mut().append_pair("apikey", key);
            }
            let text = transport.get(&target).map_err(|reason| IngestError::Transport {
                endpoint: url.to_string(),
                reason,
            })?;
            let normalized = convert_call_tracer(&text)?;
            parse_normalized_trace(&normalized)
        }
    }
}

fn read_file(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CallKind;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "tx": {
            "chain_id": 1,
            "from": "0x1111111111111111111111111111111111111111",
            "to": "0x2222222222222222222222222222222222222222",
            "value": "1000000000000000000",
            "calldata": "0x",
            "gas_limit": 21000,
            "effective_gas_price": "20000000000",
            "base_fee": "12000000000",
            "nonce": 5,
            "origin_url": null,
            "page_scripts": null
        },
        "trace": {
            "status": "SUCCESS",
            "gas_used": 21000,
            "root": {
                "call_kind": "CALL",
                "caller": "0x1111111111111111111111111111111111111111",
                "callee": "0x2222222222222222222222222222222222222222",
                "value": "1000000000000000000",
                "input": "0x",
                "output": "0x",
                "gas_used": 21000,
                "reverted": false,
                "children": []
            },
            "storage_writes": [],
            "logs": []
        },
        "code_snippets": {}
    }"#;

    struct NoNet;
    impl TraceTransport for NoNet {
        fn get(&self, _url: &Url) -> Result<String, String> {
            Err("offline".to_string())
        }
        fn post_json(
            &self,
            _url: &Url,
            _body: &serde_json::Value,
            _bearer: Option<&str>,
        ) -> Result<String, String> {
            Err("offline".to_string())
        }
    }

    #[test]
    fn parses_minimal_document() {
        let (tx, trace) = parse_normalized_trace(MINIMAL).unwrap();
        assert_eq!(tx.chain_id, 1);
        assert_eq!(tx.value, crate::model::U256::from(10u64).pow(18.into()));
        assert_eq!(trace.root.depth, 0);
        assert_eq!(trace.status, TraceStatus::Success);
    }

    #[test]
    fn missing_field_names_json_path() {
        let broken = MINIMAL.replace("\"gas_limit\": 21000,", "");
        let err = parse_normalized_trace(&broken).unwrap_err();
        match err {
            IngestError::Schema { path, .. } => assert_eq!(path, "$.tx.gas_limit"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_type_names_json_path() {
        let broken = MINIMAL.replace("\"gas_used\": 21000,\n            \"root\"", "\"gas_used\": \"lots\",\n            \"root\"");
        let err = parse_normalized_trace(&broken).unwrap_err();
        match err {
            IngestError::Schema { path, .. } => assert_eq!(path, "$.trace.gas_used"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn bad_address_names_json_path() {
        let broken = MINIMAL.replacen("0x1111111111111111111111111111111111111111", "0x1111", 1);
        let err = parse_normalized_trace(&broken).unwrap_err();
        match err {
            IngestError::Schema { path, .. } => assert_eq!(path, "$.tx.from"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_future_schema_version() {
        let broken = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        let err = parse_normalized_trace(&broken).unwrap_err();
        match err {
            IngestError::Schema { path, reason } => {
                assert_eq!(path, "$.schema_version");
                assert!(reason.contains("unsupported version 2"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn validation_failure_carries_violations() {
        let broken = MINIMAL.replace("\"call_kind\": \"CALL\"", "\"call_kind\": \"STATICCALL\"");
        let err = parse_normalized_trace(&broken).unwrap_err();
        match err {
            IngestError::Validation(violations) => {
                assert!(violations.iter().any(|v| v.invariant == "staticcall_value"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let (tx, trace) = parse_normalized_trace(MINIMAL).unwrap();
        let text = serialize_normalized_trace(&tx, &trace);
        let (tx2, trace2) = parse_normalized_trace(&text).unwrap();
        assert_eq!(tx, tx2);
        assert_eq!(trace, trace2);
    }

    #[test]
    fn nested_call_depths_are_recomputed() {
        let nested = MINIMAL.replace(
            "\"reverted\": false,\n                \"children\": []",
            r#""reverted": false,
                "children": [{
                    "call_kind": "CALL",
                    "caller": "0x2222222222222222222222222222222222222222",
                    "callee": "0x3333333333333333333333333333333333333333",
                    "value": "0",
                    "input": "0x",
                    "output": "0x",
                    "gas_used": 400,
                    "reverted": false,
                    "children": []
                }]"#,
        );
        let (_, trace) = parse_normalized_trace(&nested).unwrap();
        let child = &trace.root.children[0];
        assert_eq!(child.depth, 1);
        assert_eq!(child.call_kind, CallKind::Call);
    }

    #[test]
    fn spec_parsing_covers_all_kinds() {
        assert!(matches!(
            TraceSource::parse_spec("fixture:a.json").unwrap(),
            TraceSource::FixtureFile { .. }
        ));
        assert!(matches!(
            TraceSource::parse_spec("local:out.json").unwrap(),
            TraceSource::LocalSimulator { .. }
        ));
        assert!(matches!(
            TraceSource::parse_spec("simulator:https://sim.example/api").unwrap(),
            TraceSource::RemoteSimulator { .. }
        ));
        assert!(matches!(
            TraceSource::parse_spec("explorer:https://scan.example/api").unwrap(),
            TraceSource::ChainExplorer { .. }
        ));
        assert!(TraceSource::parse_spec("ftp:whatever").is_err());
        assert!(TraceSource::parse_spec("justapath").is_err());
        assert!(TraceSource::parse_spec("simulator:not a url").is_err());
    }

    #[test]
    fn explorer_rejects_malformed_hash_before_any_network_use() {
        let source = TraceSource::ChainExplorer {
            url: Url::parse("https://scan.example/api").unwrap(),
            api_key: None,
        };
        let err = fetch_trace(&source, "0x123", &NoNet).unwrap_err();
        assert!(matches!(err, IngestError::Precondition(_)));
    }

    #[test]
    fn remote_simulator_rejects_empty_reference() {
        let source = TraceSource::RemoteSimulator {
            url: Url::parse("https://sim.example/api").unwrap(),
            api_key: None,
        };
        let err = fetch_trace(&source, "  ", &NoNet).unwrap_err();
        assert!(matches!(err, IngestError::Precondition(_)));
    }

    #[test]
    fn transport_failure_is_reported_as_retriable_transport_error() {
        let source = TraceSource::ChainExplorer {
            url: Url::parse("https://scan.example/api").unwrap(),
            api_key: None,
        };
        let hash = format!("0x{}", "ab".repeat(32));
        let err = fetch_trace(&source, &hash, &NoNet).unwrap_err();
        match err {
            IngestError::Transport { endpoint, reason } => {
                assert_eq!(endpoint, "https://scan.example/api");
                assert_eq!(reason, "offline");
            }
            other => panic!("expected transport error, got {other:?}"),
        }
    }
}
