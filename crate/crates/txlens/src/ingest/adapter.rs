//! Adapter from the external call-tracer format (what simulators and
//! explorer debug endpoints return) to the normalized trace document.

use serde::Deserialize;
use serde_json::{json, Value};

use crate::model::{Address, U256};

use super::IngestError;

/// Top-level shape of an external call-tracer result. Quantities are hex
/// strings, addresses may be checksummed, and child frames nest under
/// `calls`.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ExternalTraceDoc {
    #[serde(default)]
    #[allow(dead_code)]
    tx_hash: Option<String>,
    chain_id: String,
    from: String,
    #[serde(default)]
    to: Option<String>,
    #[serde(default)]
    value: Option<String>,
    input: String,
    gas: String,
    effective_gas_price: String,
    base_fee_per_gas: String,
    nonce: String,
    status: String,
    gas_used: String,
    call_trace: ExternalFrame,
    #[serde(default)]
    logs: Vec<ExternalLog>,
    #[serde(default)]
    storage_writes: Vec<ExternalWrite>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ExternalFrame {
    #[serde(rename = "type")]
    kind: String,
    from: String,
    to: Option<String>,
    #[serde(default)]
    value: Option<String>,
    #[serde(default)]
    #[allow(dead_code)]
    gas: Option<String>,
    gas_used: String,
    input: String,
    #[serde(default)]
    output: Option<String>,
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    calls: Vec<ExternalFrame>,
}

#[derive(Debug, Deserialize)]
struct ExternalLog {
    address: String,
    topics: Vec<String>,
    #[serde(default)]
    data: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ExternalWrite {
    address: String,
    slot: String,
    before: String,
    after: String,
}

fn adapter_err(context: &str, detail: impl std::fmt::Display) -> IngestError {
    IngestError::Adapter(format!("{context}: {detail}"))
}

fn parse_quantity(s: &str, context: &str) -> Result<U256, IngestError> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    if digits.is_empty() || digits.len() > 64 || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(adapter_err(context, format!("bad hex quantity {s:?}")));
    }
    let padded = format!("{digits:0>64}");
    let mut buf = [0u8; 32];
    hex::decode_to_slice(&padded, &mut buf)
        .map_err(|e| adapter_err(context, format!("bad hex quantity {s:?}: {e}")))?;
    Ok(U256::from_big_endian(&buf))
}

fn parse_quantity_u64(s: &str, context: &str) -> Result<u64, IngestError> {
    let q = parse_quantity(s, context)?;
    if q > U256::from(u64::MAX) {
        return Err(adapter_err(context, format!("quantity {s:?} exceeds u64 range")));
    }
    Ok(q.as_u64())
}

fn parse_address(s: &str, context: &str) -> Result<String, IngestError> {
    let addr: Address =
        s.parse().map_err(|e| adapter_err(context, format!("bad address {s:?}: {e}")))?;
    Ok(addr.to_string())
}

fn normalize_hex_data(s: &str) -> String {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    format!("0x{}", digits.to_ascii_lowercase())
}

fn convert_frame(frame: &ExternalFrame) -> Result<Value, IngestError> {
    let kind = frame.kind.to_ascii_uppercase();
    match kind.as_str() {
        "CALL" | "DELEGATECALL" | "STATICCALL" | "CREATE" => {}
        other => return Err(adapter_err("call frame", format!("unknown call type {other:?}"))),
    }
    let callee = frame
        .to
        .as_deref()
        .ok_or_else(|| adapter_err("call frame", "frame is missing a target address"))?;
    let value = match frame.value.as_deref() {
        Some(v) => parse_quantity(v, "call frame value")?,
        None => U256::zero(),
    };
    let children = frame.calls.iter().map(convert_frame).collect::<Result<Vec<_>, _>>()?;
    Ok(json!({
        "call_kind": kind,
        "caller": parse_address(&frame.from, "call frame caller")?,
        "callee": parse_address(callee, "call frame callee")?,
        "value": value.to_string(),
        "input": normalize_hex_data(&frame.input),
        "output": normalize_hex_data(frame.output.as_deref().unwrap_or("0x")),
        "gas_used": parse_quantity_u64(&frame.gas_used, "call frame gasUsed")?,
        "reverted": frame.error.is_some(),
        "children": children,
    }))
}

/// Converts external call-tracer output into the normalized trace document.
///
/// The output is a JSON string ready for `parse_normalized_trace`, which
/// performs all structural validation; this function only rejects documents
/// it cannot recognize at all.
pub fn convert_call_tracer(text: &str) -> Result<String, IngestError> {
    let doc: ExternalTraceDoc =
        serde_json::from_str(text).map_err(|e| adapter_err("external document", e))?;

    let status = match doc.status.as_str() {
        "0x1" | "0x01" => "SUCCESS",
        "0x0" | "0x00" => "REVERT",
        other => return Err(adapter_err("external document", format!("unknown status {other:?}"))),
    };
    let to = match doc.to.as_deref() {
        Some(addr) => Value::String(parse_address(addr, "tx to")?),
        None => Value::Null,
    };
    let value = match doc.value.as_deref() {
        Some(v) => parse_quantity(v, "tx value")?,
        None => U256::zero(),
    };

    let logs = doc
        .logs
        .iter()
        .map(|log| {
            let topics = log
                .topics
                .iter()
                .map(|t| {
                    let digits = t.strip_prefix("0x").unwrap_or(t);
                    if digits.len() != 64 || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
                        return Err(adapter_err("log topic", format!("bad topic {t:?}")));
                    }
                    Ok(format!("0x{}", digits.to_ascii_lowercase()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(json!({
                "emitter": parse_address(&log.address, "log address")?,
                "topics": topics,
                "data": normalize_hex_data(log.data.as_deref().unwrap_or("0x")),
            }))
        })
        .collect::<Result<Vec<_>, IngestError>>()?;

    let storage_writes = doc
        .storage_writes
        .iter()
        .map(|w| {
            Ok(json!({
                "contract": parse_address(&w.address, "storage write address")?,
                "slot": normalize_word(&w.slot, "storage write slot")?,
                "old": normalize_word(&w.before, "storage write before")?,
                "new": normalize_word(&w.after, "storage write after")?,
            }))
        })
        .collect::<Result<Vec<_>, IngestError>>()?;

    let normalized = json!({
        "schema_version": super::SCHEMA_VERSION,
        "tx": {
            "chain_id": parse_quantity_u64(&doc.chain_id, "tx chainId")?,
            "from": parse_address(&doc.from, "tx from")?,
            "to": to,
            "value": value.to_string(),
            "calldata": normalize_hex_data(&doc.input),
            "gas_limit": parse_quantity_u64(&doc.gas, "tx gas")?,
            "effective_gas_price": parse_quantity(&doc.effective_gas_price, "tx effectiveGasPrice")?.to_string(),
            "base_fee": parse_quantity(&doc.base_fee_per_gas, "tx baseFeePerGas")?.to_string(),
            "nonce": parse_quantity_u64(&doc.nonce, "tx nonce")?,
            "origin_url": Value::Null,
            "page_scripts": Value::Null,
        },
        "trace": {
            "status": status,
            "gas_used": parse_quantity_u64(&doc.gas_used, "trace gasUsed")?,
            "root": convert_frame(&doc.call_trace)?,
            "storage_writes": storage_writes,
            "logs": logs,
        },
        "code_snippets": {},
    });
    Ok(serde_json::to_string_pretty(&normalized).expect("normalized value serializes"))
}

fn normalize_word(s: &str, context: &str) -> Result<String, IngestError> {
    let word: crate::model::Word =
        s.parse().map_err(|e| adapter_err(context, format!("bad word {s:?}: {e}")))?;
    Ok(word.to_string())
}
