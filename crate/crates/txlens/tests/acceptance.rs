//! Acceptance suite: one test per release criterion, each printing a
//! `[acceptance]` line on success (visible with `--nocapture`). Derived
//! constants are checked against independent oracles computed in-test:
//! keccak digests via the `sha3` crate and vote tallies via integer
//! arithmetic on a fixed confidence grid.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;

use chrono::TimeZone;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha3::{Digest, Keccak256};

use txlens::consensus::{
    run_consensus, weighted_vote, BackendReflector, BackendSummarizer, ConsensusConfig,
    ConsensusMode, ConsensusResult, TieBreak, VoteTally,
};
use txlens::eval::{load_manifest, run_eval};
use txlens::features::behavior::{
    eip1967_admin_slot, eip1967_implementation_slot, APPROVAL_EVENT_TOPIC, SELECTOR_APPROVE,
    SELECTOR_SET_APPROVAL_FOR_ALL, SELECTOR_TRANSFER, SELECTOR_TRANSFER_FROM,
    TRANSFER_EVENT_TOPIC,
};
use txlens::features::{
    assemble_feature_vector, extract_behavior_features, extract_gas_context, extract_ui_features,
    AssetKind, FeatureVector, GasThresholds, SlotHints, StateChangeKind, TransferEvidence, Weights,
};
use txlens::ingest::parse_normalized_trace;
use txlens::llm::{
    build_prompt, elicit, parse_model_response, Importance, ModelBackend, ModelOutput,
    ScriptedBackend,
};
use txlens::model::{ExecutionTrace, TxEnvelope};
use txlens::pipeline::exit_code_for_label;
use txlens::report::{
    build_report, emit_report_json, parse_report, ReportMeta, REPORT_SCHEMA_JSON,
};
use txlens::threat::{load_db, query_all, HitKind};
use txlens::util::ExecMode;
use txlens::{RiskLabel, U256};

fn fixture_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn load_fixture(dir: &str, name: &str) -> (TxEnvelope, ExecutionTrace) {
    let text = std::fs::read_to_string(fixture_root().join(dir).join(name)).unwrap();
    parse_normalized_trace(&text).unwrap()
}

fn output(id: &str, risk: RiskLabel, confidence: f64) -> ModelOutput {
    ModelOutput {
        model_id: id.to_string(),
        risk,
        confidence,
        justification: format!("{id} sees {}", risk.as_str()),
        summary: format!("{id} verdict"),
        importance: Importance { behavior: 0.4, context: 0.2, ui: 0.2, database: 0.2 },
        recommendations: vec![],
    }
}

fn fixture_feature_vector(name: &str) -> FeatureVector {
    let (tx, trace) = load_fixture("traces", name);
    let behavior = extract_behavior_features(&trace, &SlotHints::empty());
    let context = extract_gas_context(&tx, &trace, None, &GasThresholds::default());
    let ui = extract_ui_features(&tx);
    let db = load_db(&db_paths()).unwrap();
    let hits = query_all(&db, &tx, &trace, &ui);
    assemble_feature_vector(behavior, context, ui, hits, None).unwrap()
}

fn db_paths() -> Vec<PathBuf> {
    ["addresses.txt", "domains.txt", "tags.json", "patterns.json"]
        .iter()
        .map(|n| fixture_root().join("threatdb").join(n))
        .collect()
}

#[test]
fn acceptance_01_unanimous_panel_summarizes_once_without_reflection() {
    let initial = vec![
        output("m1", RiskLabel::Safe, 0.95),
        output("m2", RiskLabel::Safe, 0.9),
        output("m3", RiskLabel::Safe, 0.88),
    ];
    let reflections = AtomicU32::new(0);
    let summaries = AtomicU32::new(0);
    let reflector = |own: &ModelOutput, _: &[ModelOutput], _: u32| {
        reflections.fetch_add(1, Ordering::SeqCst);
        Ok(own.clone())
    };
    let summarizer = |outputs: &[ModelOutput]| {
        summaries.fetch_add(1, Ordering::SeqCst);
        Ok(outputs[0].clone())
    };

    let result =
        run_consensus(initial, &reflector, &summarizer, &ConsensusConfig::new(3, "m1")).unwrap();

    assert_eq!(result.mode, ConsensusMode::Unanimous);
    assert_eq!(result.rounds_used, 0);
    assert_eq!(result.decided_label, RiskLabel::Safe);
    assert_eq!(summaries.load(Ordering::SeqCst), 1, "summarizer runs exactly once");
    assert_eq!(reflections.load(Ordering::SeqCst), 0, "no reflection on unanimity");
    println!("[acceptance] 01 unanimity short-circuit: pass");
}

#[test]
fn acceptance_02_round_keyed_disagreement_converges_after_one_reflection() {
    let dir = tempfile::tempdir().unwrap();
    let flip = serde_json::json!({
        "rounds": {
            "0": {"risk": "safe", "confidence": 0.7, "justification": "looks routine",
                   "summary": "initial", "importance": {"behavior": 0.4, "context": 0.2, "ui": 0.2, "database": 0.2},
                   "recommendations": []},
            "1": {"risk": "malicious", "confidence": 0.85, "justification": "peers are right about the spender",
                   "summary": "revised", "importance": {"behavior": 0.4, "context": 0.2, "ui": 0.2, "database": 0.2},
                   "recommendations": ["Reject the transaction"]}
        }
    });
    let hold = serde_json::json!({
        "default": {"risk": "malicious", "confidence": 0.8, "justification": "drain setup",
                     "summary": "held", "importance": {"behavior": 0.4, "context": 0.2, "ui": 0.2, "database": 0.2},
                     "recommendations": []}
    });
    let mut backends: Vec<Box<dyn ModelBackend>> = Vec::new();
    for (name, script) in [("m1", &flip), ("m2", &hold), ("m3", &hold)] {
        let path = dir.path().join(format!("{name}.json"));
        std::fs::write(&path, serde_json::to_string(script).unwrap()).unwrap();
        backends.push(Box::new(ScriptedBackend::from_file(name, &path).unwrap()));
    }

    let fv = fixture_feature_vector("benign-transfer.json");
    let prompt = build_prompt(&fv, &fv.database);
    let rendered = prompt.render();
    let timeout = Duration::from_secs(1);
    let initial: Vec<ModelOutput> =
        backends.iter().map(|b| elicit(b.as_ref(), &rendered, 0, timeout).unwrap()).collect();

    let reflector = BackendReflector { backends: &backends, base: &prompt, timeout };
    let summarizer_backend = ScriptedBackend::from_file(
        "summarizer",
        &fixture_root().join("scripted/summarizer.json"),
    )
    .unwrap();
    let summarizer = BackendSummarizer { backend: &summarizer_backend, timeout };

    let result =
        run_consensus(initial, &reflector, &summarizer, &ConsensusConfig::new(3, "m2")).unwrap();

    assert_eq!(result.mode, ConsensusMode::ReflectedConsensus);
    assert_eq!(result.rounds_used, 1);
    assert_eq!(result.transcripts.len(), 2, "initial round plus one reflection");
    assert_eq!(result.decided_label, RiskLabel::Malicious);
    assert!(result.transcripts[1].iter().all(|o| o.risk == RiskLabel::Malicious));
    println!("[acceptance] 02 reflection convergence: pass");
}

/// Integer-grid replica of the weighted vote: confidences are `k/64`, so
/// tallies can be reproduced with plain integer sums and compared exactly.
fn oracle_argmax(votes: &[(RiskLabel, u32)]) -> RiskLabel {
    let mut sums: BTreeMap<RiskLabel, u64> = BTreeMap::new();
    for (label, k) in votes {
        *sums.entry(*label).or_insert(0) += u64::from(*k);
    }
    let best = sums.values().max().copied().unwrap();
    sums.iter().filter(|(_, s)| **s == best).map(|(l, _)| *l).max().unwrap()
}

#[test]
fn acceptance_03_weighted_vote_matches_integer_brute_force() {
    let initial = vec![
        output("m1", RiskLabel::Safe, 0.9),
        output("m2", RiskLabel::Malicious, 0.8),
        output("m3", RiskLabel::Malicious, 0.7),
    ];
    let reflector = |own: &ModelOutput, _: &[ModelOutput], _: u32| Ok(own.clone());
    let summaries = AtomicU32::new(0);
    let summarizer = |outputs: &[ModelOutput]| {
        summaries.fetch_add(1, Ordering::SeqCst);
        Ok(outputs[0].clone())
    };
    let result =
        run_consensus(initial, &reflector, &summarizer, &ConsensusConfig::new(3, "m1")).unwrap();

    assert_eq!(result.mode, ConsensusMode::WeightedVote);
    assert_eq!(result.rounds_used, 3);
    assert_eq!(result.decided_label, RiskLabel::Malicious);
    assert_eq!(summaries.load(Ordering::SeqCst), 0, "vote path skips the summarizer");
    let tally = result.tally.as_ref().unwrap();
    assert_eq!(tally.scores[&RiskLabel::Malicious], BigRational::new(3.into(), 2.into()));
    assert_eq!(tally.score_f64(RiskLabel::Malicious), 1.5);
    assert_eq!(tally.score_f64(RiskLabel::Safe), 0.9);
    assert_eq!(result.final_output.model_id, "m2", "highest-confidence holder of the label");

    let labels = [RiskLabel::Safe, RiskLabel::Suspicious, RiskLabel::Malicious];
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a11e5);
    for _ in 0..1_000 {
        let n = rng.gen_range(1..=5);
        let votes: Vec<(RiskLabel, u32)> =
            (0..n).map(|_| (labels[rng.gen_range(0..3)], rng.gen_range(0..=64))).collect();
        let outputs: Vec<ModelOutput> = votes
            .iter()
            .enumerate()
            .map(|(i, (label, k))| output(&format!("m{i}"), *label, f64::from(*k) / 64.0))
            .collect();
        let (decided, _, _) = weighted_vote(&outputs, TieBreak::HigherSeverity);
        assert_eq!(decided, oracle_argmax(&votes), "votes: {votes:?}");
    }
    println!("[acceptance] 03 weighted-vote fallback vs brute force: pass");
}

#[test]
fn acceptance_04_vote_argmax_is_invariant_under_positive_scaling() {
    let labels = [RiskLabel::Safe, RiskLabel::Suspicious, RiskLabel::Malicious];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1e);
    for _ in 0..200 {
        let n = rng.gen_range(1..=5);
        let votes: Vec<(RiskLabel, u32)> =
            (0..n).map(|_| (labels[rng.gen_range(0..3)], rng.gen_range(0..=64))).collect();
        let base: Vec<ModelOutput> = votes
            .iter()
            .enumerate()
            .map(|(i, (l, k))| output(&format!("m{i}"), *l, f64::from(*k) / 64.0))
            .collect();
        // Powers of two keep the scaled confidences exactly representable,
        // so even tied tallies stay tied after scaling.
        let factor = (2.0f64).powi(rng.gen_range(-4..=8));
        let scaled: Vec<ModelOutput> = base
            .iter()
            .map(|o| ModelOutput { confidence: o.confidence * factor, ..o.clone() })
            .collect();
        let (a, _, _) = weighted_vote(&base, TieBreak::HigherSeverity);
        let (b, _, _) = weighted_vote(&scaled, TieBreak::HigherSeverity);
        assert_eq!(a, b, "factor {factor}, votes {votes:?}");
    }
    println!("[acceptance] 04 vote argmax scale invariance: pass");
}

fn keccak(data: &[u8]) -> [u8; 32] {
    let mut h = Keccak256::new();
    h.update(data);
    h.finalize().into()
}

#[test]
fn acceptance_05_feature_extraction_matches_keccak_oracle() {
    for (signature, selector) in [
        ("transfer(address,uint256)", SELECTOR_TRANSFER),
        ("transferFrom(address,address,uint256)", SELECTOR_TRANSFER_FROM),
        ("approve(address,uint256)", SELECTOR_APPROVE),
        ("setApprovalForAll(address,bool)", SELECTOR_SET_APPROVAL_FOR_ALL),
    ] {
        assert_eq!(selector.0, keccak(signature.as_bytes())[..4], "{signature}");
    }
    assert_eq!(TRANSFER_EVENT_TOPIC.0, keccak(b"Transfer(address,address,uint256)"));
    assert_eq!(APPROVAL_EVENT_TOPIC.0, keccak(b"Approval(address,address,uint256)"));
    for (tag, slot) in [
        ("eip1967.proxy.implementation", eip1967_implementation_slot()),
        ("eip1967.proxy.admin", eip1967_admin_slot()),
    ] {
        let minus_one = U256::from_big_endian(&keccak(tag.as_bytes())) - U256::from(1u8);
        assert_eq!(slot.0, minus_one.to_big_endian(), "{tag}");
    }

    let (_, trace) = load_fixture("traces", "approval-phish.json");
    let behavior = extract_behavior_features(&trace, &SlotHints::empty());
    assert_eq!(behavior.call_chain[0].selector, Some(SELECTOR_APPROVE));
    let approval = &behavior.approvals[0];
    assert_eq!(approval.spender, "0x4444444444444444444444444444444444444444".parse().unwrap());
    assert_eq!(approval.amount, Some(U256::MAX));
    assert!(approval.unlimited);

    let (_, trace) = load_fixture("traces", "token-transfer.json");
    let behavior = extract_behavior_features(&trace, &SlotHints::empty());
    let transfer = &behavior.transfers[0];
    assert_eq!(transfer.evidence, TransferEvidence::Both, "calldata and log agree");
    assert_eq!(transfer.amount, U256::from(10u128.pow(18)));
    assert_eq!(
        transfer.asset,
        AssetKind::Erc20 { token: "0x3333333333333333333333333333333333333333".parse().unwrap() }
    );

    let (_, trace) = load_fixture("traces", "proxy-upgrade.json");
    let behavior = extract_behavior_features(&trace, &SlotHints::empty());
    let upgrade = behavior
        .state_changes
        .iter()
        .find(|c| c.kind == StateChangeKind::ProxyUpgrade)
        .expect("implementation-slot write is classified");
    assert_eq!(upgrade.slot, eip1967_implementation_slot());
    assert_eq!(upgrade.contract, "0x5555555555555555555555555555555555555555".parse().unwrap());
    println!("[acceptance] 05 feature extraction vs keccak oracle: pass");
}

#[test]
fn acceptance_06_gas_thresholds_flag_exact_ratios() {
    let (tx, trace) = load_fixture("traces", "reverted-probe.json");
    assert_eq!(tx.gas_limit, 1_000_000);
    assert_eq!(trace.gas_used, 21_000);
    let findings = extract_gas_context(&tx, &trace, None, &GasThresholds::default());

    let unused = findings.unused_gas_ratio.unwrap();
    assert_eq!(unused, num_rational::Ratio::new(979u128, 1000u128));
    assert_eq!(*unused.numer() as f64 / *unused.denom() as f64, 0.979);
    assert!(findings.excessive_unused_flag);

    let accel = findings.price_to_basefee_ratio.unwrap();
    assert_eq!(accel, num_rational::Ratio::new(5u128, 1u128));
    assert!(findings.acceleration_flag);
    println!("[acceptance] 06 gas-context exact ratios: pass");
}

#[test]
fn acceptance_07_weight_normalization_holds_under_fuzzing() {
    let base = fixture_feature_vector("benign-transfer.json");
    let mut rng = ChaCha8Rng::seed_from_u64(0xbead);

    for _ in 0..1_000 {
        let raw = Weights {
            behavior: rng.gen_range(0.01..100.0),
            context: rng.gen_range(0.01..100.0),
            ui: rng.gen_range(0.01..100.0),
            database: rng.gen_range(0.01..100.0),
        };
        let fv = assemble_feature_vector(
            base.behavior.clone(),
            base.context.clone(),
            base.ui.clone(),
            base.database.clone(),
            Some(raw),
        )
        .unwrap();
        assert!((fv.weights.sum() - 1.0).abs() < 1e-9, "weights {:?}", fv.weights);
    }

    let mut accepted = 0;
    let mut rejected = 0;
    for i in 0..1_000 {
        let spread: [f64; 4] = [
            rng.gen_range(0.05..1.0),
            rng.gen_range(0.05..1.0),
            rng.gen_range(0.05..1.0),
            rng.gen_range(0.05..1.0),
        ];
        let total: f64 = spread.iter().sum();
        let target = if i % 2 == 0 {
            rng.gen_range(0.985..1.015)
        } else if rng.gen_bool(0.5) {
            rng.gen_range(1.03..1.9)
        } else {
            rng.gen_range(0.1..0.97)
        };
        let scale = target / total;
        let reply = format!(
            concat!(
                r#"{{"risk":"safe","confidence":0.5,"justification":"j","summary":"s","#,
                r#""importance":{{"behavior":{},"context":{},"ui":{},"database":{}}},"#,
                r#""recommendations":[]}}"#
            ),
            spread[0] * scale,
            spread[1] * scale,
            spread[2] * scale,
            spread[3] * scale,
        );
        match parse_model_response(&reply, "fuzz") {
            Ok(out) => {
                assert!(i % 2 == 0, "sum {target} should have been rejected");
                assert!((out.importance.sum() - 1.0).abs() < 1e-9);
                accepted += 1;
            }
            Err(_) => {
                assert!(i % 2 == 1, "sum {target} should have been accepted");
                rejected += 1;
            }
        }
    }
    assert_eq!(accepted, 500);
    assert_eq!(rejected, 500);
    println!("[acceptance] 07 weight normalization invariants: pass");
}

fn hex40(rng: &mut ChaCha8Rng) -> String {
    (0..40).map(|_| "0123456789abcdef".as_bytes()[rng.gen_range(0..16)] as char).collect()
}

#[test]
fn acceptance_08_threat_db_is_monotone_and_case_insensitive() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdb5eed);

    for _ in 0..100 {
        let dir = tempfile::tempdir().unwrap();
        let pool: Vec<String> = (0..6).map(|_| format!("0x{}", hex40(&mut rng))).collect();
        let base_count = rng.gen_range(0..=3);
        let write_files = |subdir: &str, count: usize| -> Vec<PathBuf> {
            let root = dir.path().join(subdir);
            std::fs::create_dir_all(&root).unwrap();
            let addr_lines: String =
                pool[..count].iter().map(|a| format!("{a}\tfeed\n")).collect();
            let domain_lines = if count > 0 { "evil.example\tfeed\n" } else { "" }.to_string();
            let tags: BTreeMap<&String, Vec<&str>> =
                pool[..count].iter().map(|a| (a, vec!["tagged"])).collect();
            std::fs::write(root.join("addresses.txt"), addr_lines).unwrap();
            std::fs::write(root.join("domains.txt"), domain_lines).unwrap();
            std::fs::write(root.join("tags.json"), serde_json::to_string(&tags).unwrap())
                .unwrap();
            ["addresses.txt", "domains.txt", "tags.json"]
                .iter()
                .map(|n| root.join(n))
                .collect()
        };
        let small = load_db(&write_files("small", base_count)).unwrap();
        let large = load_db(&write_files("large", base_count + 3)).unwrap();

        let (mut tx, trace) = load_fixture("traces", "benign-transfer.json");
        tx.recipient = Some(pool[rng.gen_range(0..pool.len())].parse().unwrap());
        tx.origin_url = Some("https://app.evil.example/claim".to_string());
        let ui = extract_ui_features(&tx);
        let before = query_all(&small, &tx, &trace, &ui);
        let after = query_all(&large, &tx, &trace, &ui);
        for hit in &before {
            assert!(after.contains(hit), "adding entries dropped {hit:?}");
        }
        assert!(after.len() >= before.len());
    }

    let dir = tempfile::tempdir().unwrap();
    let checksummed = "0xAb5801a7D398351b8bE11C439e05C5b3259aEC9B";
    std::fs::write(dir.path().join("addresses.txt"), format!("{checksummed}\tfeed\n")).unwrap();
    let db = load_db(&[dir.path().join("addresses.txt")]).unwrap();
    let (mut tx, trace) = load_fixture("traces", "benign-transfer.json");
    tx.recipient = Some(checksummed.to_ascii_lowercase().parse().unwrap());
    let ui = extract_ui_features(&tx);
    assert!(query_all(&db, &tx, &trace, &ui)
        .iter()
        .any(|h| h.kind == HitKind::Address && h.label == "blacklisted address"));

    let db = load_db(&db_paths()).unwrap();
    let (tx, trace) = load_fixture("traces", "approval-phish.json");
    let ui = extract_ui_features(&tx);
    assert!(query_all(&db, &tx, &trace, &ui)
        .iter()
        .any(|h| h.kind == HitKind::Pattern && h.label == "unlimited approval to drainer wallet"));
    println!("[acceptance] 08 threat-db monotonicity and case folding: pass");
}

#[test]
fn acceptance_09_all_emitted_reports_validate_and_round_trip() {
    let schema_doc: serde_json::Value = serde_json::from_str(REPORT_SCHEMA_JSON).unwrap();
    let schema = jsonschema::JSONSchema::compile(&schema_doc).unwrap();
    let fv = fixture_feature_vector("approval-phish.json");
    let labels = [RiskLabel::Safe, RiskLabel::Suspicious, RiskLabel::Malicious];
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e9047);

    for i in 0..50 {
        let rounds = rng.gen_range(1..=4);
        let n = rng.gen_range(2..=4);
        let transcripts: Vec<Vec<ModelOutput>> = (0..rounds)
            .map(|r| {
                (0..n)
                    .map(|m| {
                        let mut o = output(
                            &format!("m{m}"),
                            labels[rng.gen_range(0..3)],
                            f64::from(rng.gen_range(0..=64)) / 64.0,
                        );
                        o.summary = format!("round {r} model {m}");
                        if rng.gen_bool(0.5) {
                            o.recommendations.push("Reject the transaction".to_string());
                        }
                        o
                    })
                    .collect()
            })
            .collect();
        let finals = transcripts.last().unwrap().clone();
        let final_output = finals[rng.gen_range(0..finals.len())].clone();
        let (mode, tally) = match i % 3 {
            0 => (ConsensusMode::Unanimous, None),
            1 => (ConsensusMode::ReflectedConsensus, None),
            _ => {
                let (_, _, tally) = weighted_vote(&finals, TieBreak::HigherSeverity);
                (ConsensusMode::WeightedVote, Some(tally))
            }
        };
        let result = ConsensusResult {
            decided_label: final_output.risk,
            final_output,
            mode,
            rounds_used: rounds as u32 - 1,
            transcripts,
            primary_model: "m0".to_string(),
            tally,
            notes: if rng.gen_bool(0.3) { vec!["m9 failed".to_string()] } else { vec![] },
        };
        let meta = ReportMeta {
            tx_reference: format!("0xcase{i}"),
            tool_version: "acceptance".to_string(),
            timestamp: chrono::Utc.timestamp_opt(1_700_000_000 + i64::from(i), 250_000_000).unwrap(),
        };
        let report = build_report(&result, &fv, meta);
        let emitted = emit_report_json(&report);
        let doc: serde_json::Value = serde_json::from_str(&emitted).unwrap();
        assert!(schema.is_valid(&doc), "schema rejects report {i}: {emitted}");
        let parsed = parse_report(&emitted).unwrap();
        assert_eq!(parsed, report, "round-trip changed report {i}");
    }
    println!("[acceptance] 09 report schema validation and round-trip: pass");
}

#[test]
fn acceptance_11_batch_eval_reproduces_closed_form_metrics() {
    let cases = load_manifest(&fixture_root().join("eval/manifest.json")).unwrap();
    let backends: Vec<Box<dyn ModelBackend>> = ["analyst-a", "analyst-b", "analyst-c"]
        .iter()
        .map(|name| {
            let path = fixture_root().join("scripted").join(format!("{name}.json"));
            Box::new(ScriptedBackend::from_file(name, &path).unwrap()) as Box<dyn ModelBackend>
        })
        .collect();
    let cfg = txlens::pipeline::RunConfig {
        db_paths: db_paths(),
        weights_path: None,
        hints_path: None,
        backends,
        consensus: ConsensusConfig::new(3, "analyst-a"),
        section_budget: 8_000,
        timeout: Duration::from_secs(5),
        out_dir: None,
        explorer_api_url: None,
        explorer_api_key: None,
        recent_timestamps: None,
        gas_thresholds: GasThresholds::default(),
        tool_version: "acceptance".to_string(),
    };

    let metrics = run_eval(&cases, 3, &cfg, ExecMode::Sequential).unwrap();

    for run in &metrics.per_run {
        assert_eq!((run.true_positives, run.false_positives, run.false_negatives), (11, 0, 1));
        assert_eq!(run.precision, 1.0);
        assert!((run.recall - 11.0 / 12.0).abs() < 1e-12);
        assert!((run.f1 - 22.0 / 23.0).abs() < 1e-12);
    }
    assert_eq!(metrics.precision.mean, 1.0);
    assert_eq!(metrics.precision.std_dev, 0.0);
    assert!(metrics.recall.std_dev.abs() < 1e-12);
    assert!(metrics.f1.std_dev.abs() < 1e-12);
    assert_eq!(metrics.precision.to_string(), "1.0000 ± 0.0000");
    assert_eq!(metrics.recall.to_string(), "0.9167 ± 0.0000");
    assert_eq!(metrics.f1.to_string(), "0.9565 ± 0.0000");
    println!("[acceptance] 11 batch evaluation metrics: pass");
}

#[test]
fn exit_codes_follow_decided_labels() {
    assert_eq!(exit_code_for_label(RiskLabel::Safe), 0);
    assert_eq!(exit_code_for_label(RiskLabel::Suspicious), 1);
    assert_eq!(exit_code_for_label(RiskLabel::Malicious), 2);
    let _ = VoteTally { scores: BTreeMap::new() };
}
