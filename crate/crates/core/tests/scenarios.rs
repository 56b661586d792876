use std::collections::BTreeSet;

use ringchain::chain::{read_chain_file, verify_chain};
use ringchain::contracts;
use ringchain::par::ExecMode;
use ringchain::scenario::{
    bundled, patterns_covered, run_script, Script, ScenarioError, AUDIT_FILE, CHAIN_FILE, PATTERNS, TRANSCRIPT_FILE,
};

fn parse(name: &str, text: &str) -> Script {
    Script::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn bundled_scenarios_pass_and_conserve_supply() {
    for (name, text) in bundled() {
        let script = parse(name, text);
        assert_eq!(script.name, name);
        let out = run_script(&script, script.seed, None, ExecMode::Parallel).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(out.passed(), "{name}: {:#?}", out.failures);
        assert!(out.assertions > 0, "{name} asserts nothing");
        assert!(out.runner.sim.chain_ref().unwrap().conservation_holds(), "{name}");
    }
}

#[test]
fn runs_are_byte_identical_across_repeats_and_modes() {
    for (name, text) in bundled() {
        let script = parse(name, text);
        let a = run_script(&script, script.seed, None, ExecMode::Parallel).unwrap();
        let b = run_script(&script, script.seed, None, ExecMode::Parallel).unwrap();
        let c = run_script(&script, script.seed, None, ExecMode::Sequential).unwrap();
        assert_eq!(a.transcript, b.transcript, "{name}");
        assert_eq!(a.chain, b.chain, "{name}");
        assert_eq!(a.transcript, c.transcript, "{name}");
        assert_eq!(a.chain, c.chain, "{name}");
    }
}

#[test]
fn seed_changes_keys_and_therefore_bytes() {
    let (name, text) = bundled()[0];
    let script = parse(name, text);
    let a = run_script(&script, 1, None, ExecMode::Parallel).unwrap();
    let b = run_script(&script, 2, None, ExecMode::Parallel).unwrap();
    assert!(a.passed() && b.passed());
    assert_ne!(a.chain, b.chain);
}

#[test]
fn bundled_suite_covers_every_pattern() {
    let covered: BTreeSet<&str> = bundled().iter().flat_map(|(n, t)| patterns_covered(&parse(n, t))).collect();
    let all: BTreeSet<&str> = PATTERNS.into_iter().collect();
    assert_eq!(covered, all);
}

#[test]
fn output_directory_holds_verifiable_artifacts() {
    let (name, text) = bundled().into_iter().find(|(n, _)| *n == "end-to-end-data-share").unwrap();
    let script = parse(name, text);
    let dir = tempfile::tempdir().unwrap();
    let out = run_script(&script, script.seed, Some(dir.path()), ExecMode::Parallel).unwrap();
    assert_eq!(std::fs::read(dir.path().join(TRANSCRIPT_FILE)).unwrap(), out.transcript);
    let blocks = read_chain_file(&dir.path().join(CHAIN_FILE)).unwrap();
    verify_chain(&blocks, &contracts::catalog(), ExecMode::Parallel).unwrap();
    let audit = ringchain::offchain::read_audit_file(&dir.path().join(AUDIT_FILE)).unwrap();
    assert_eq!(audit.len(), out.runner.proxy.trail.len());
    assert!(dir.path().join("silos/home-monitor.json").exists());
    assert!(dir.path().join("messengers/doctor-inbox/messenger-cursor.json").exists());
}

#[test]
fn empty_script_yields_only_the_summary() {
    let script = Script::parse(r#"{"name":"empty"}"#).unwrap();
    let out = run_script(&script, 0, None, ExecMode::Parallel).unwrap();
    assert!(out.passed());
    assert_eq!(out.transcript.iter().filter(|b| **b == b'\n').count(), 1);
    assert!(out.chain.is_empty());
}

#[test]
fn failing_assertions_name_their_step() {
    let text = r#"{"name":"f","steps":[
        {"action":"create-accounts","names":["a"],"balance":5},
        {"action":"repeat","times":2,"steps":[{"action":"assert","check":"balance","account":"a","eq":6}]}
    ]}"#;
    let out = run_script(&Script::parse(text).unwrap(), 0, None, ExecMode::Parallel).unwrap();
    assert_eq!(out.failures.len(), 2);
    assert!(out.failures[0].starts_with("step 1[0].0:"), "{}", out.failures[0]);
    assert!(out.failures[1].starts_with("step 1[1].0:"), "{}", out.failures[1]);
}

#[test]
fn malformed_scripts_are_rejected() {
    for bad in [
        "{",
        r#"{"name":"x","steps":[{"action":"fly"}]}"#,
        r#"{"name":"x","steps":[{"action":"mine","extra":1}]}"#,
        r#"{"name":"x","config":{"difficulty":0}}"#,
        r#"{"name":"x","config":{"unknown":1}}"#,
    ] {
        assert!(matches!(Script::parse(bad), Err(ScenarioError::Parse(_))), "{bad}");
    }
    let unbound = r#"{"name":"x","steps":[{"action":"create-accounts","names":["a"],"balance":1},
        {"action":"call","from":"a","to":"@nobody"}]}"#;
    let r = run_script(&Script::parse(unbound).unwrap(), 0, None, ExecMode::Parallel);
    assert!(matches!(r, Err(ScenarioError::Invalid { ref step, .. }) if step == "1"));
}
