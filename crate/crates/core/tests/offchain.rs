use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use ringchain::crypto::{Digest, KeyPair};
use ringchain::offchain::{
    create_connector, read_audit_file, redeem_token, tokenize_connector, verify_audit, verify_connector,
    write_audit_file, AccessPolicy, AccessRight, AuditAction, AuditTrail, ConnectorDescriptor, DataSilo,
    DatabaseProxy, OffchainError, ProxyOp, ProxyOutcome, ProxyRequest, SiloKind, SiloStore, TokenLabels,
    DEFAULT_DESCRIPTOR_BOUND,
};

fn keys(i: u8) -> KeyPair {
    KeyPair::from_seed([i; 32])
}

fn store_with(owner: &KeyPair) -> SiloStore {
    let mut silo = DataSilo::new("ward-3", SiloKind::Lfq, owner.clone());
    silo.put("obs-1", json!({ "hr": 72 }));
    silo.put("obs-2", json!({ "hr": 88 }));
    let mut store = SiloStore::new();
    store.insert(silo);
    store
}

fn connector(store: &SiloStore) -> ConnectorDescriptor {
    create_connector(store, "ward-3", "ward-3-feed", BTreeMap::new(), DEFAULT_DESCRIPTOR_BOUND).unwrap()
}

#[test]
fn silo_round_trips_through_a_file() {
    let owner = keys(1);
    let store = store_with(&owner);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ward-3.json");
    store.get("ward-3").unwrap().save(&path).unwrap();
    let loaded = DataSilo::load(&path, owner).unwrap();
    assert_eq!(loaded.get("obs-2"), Some(&json!({ "hr": 88 })));
    assert_eq!(loaded.kind, SiloKind::Lfq);
}

#[test]
fn connector_carries_locator_and_verifies_only_under_owner() {
    let owner = keys(1);
    let store = store_with(&owner);
    let d = connector(&store);
    assert_eq!(d.meta["locator"], "silo://ward-3");
    assert_eq!(d.meta["schema"], "LFQ");
    assert!(verify_connector(&d, &owner.public_key()));
    assert!(!verify_connector(&d, &keys(2).public_key()));
    let mut edited = d.clone();
    edited.meta.insert("locator".into(), "silo://elsewhere".into());
    assert!(!verify_connector(&edited, &owner.public_key()));
}

#[test]
fn connector_errors() {
    let store = store_with(&keys(1));
    let r = create_connector(&store, "missing", "x", BTreeMap::new(), DEFAULT_DESCRIPTOR_BOUND);
    assert!(matches!(r, Err(OffchainError::NotFound(_))));
    let r = create_connector(&store, "ward-3", "x", BTreeMap::from([("locator".into(), "y".into())]), 1024);
    assert!(matches!(r, Err(OffchainError::InvalidInput(_))));
    let big = BTreeMap::from([("note".to_string(), "z".repeat(2_000))]);
    let r = create_connector(&store, "ward-3", "x", big, DEFAULT_DESCRIPTOR_BOUND);
    assert!(matches!(r, Err(OffchainError::TooLarge { bound: DEFAULT_DESCRIPTOR_BOUND, .. })));
}

#[test]
fn token_redeems_for_recipient_only() {
    let (owner, rcpt) = (keys(1), keys(2));
    let store = store_with(&owner);
    let d = connector(&store);
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let token = tokenize_connector(&d, &owner, &rcpt.public_key(), &TokenLabels::default(), &mut rng).unwrap();
    assert_eq!(redeem_token(&token, &rcpt).unwrap(), d);
    assert!(matches!(redeem_token(&token, &owner), Err(OffchainError::Decryption)));

    let mut tampered = token.clone();
    tampered.sealed_payload.ciphertext[3] ^= 0x40;
    assert!(matches!(redeem_token(&tampered, &rcpt), Err(OffchainError::TokenIntegrity(_))));
    let mut renamed = token.clone();
    renamed.token_id = Digest::ZERO;
    assert!(matches!(redeem_token(&renamed, &rcpt), Err(OffchainError::TokenIntegrity(_))));

    // a descriptor that does not verify under the owner cannot be tokenized
    let foreign = create_connector(&store_with(&keys(3)), "ward-3", "f", BTreeMap::new(), 1024).unwrap();
    let r = tokenize_connector(&foreign, &owner, &rcpt.public_key(), &TokenLabels::default(), &mut rng);
    assert!(matches!(r, Err(OffchainError::InvalidInput(_))));
}

fn proxy(owner: &KeyPair, reader: &KeyPair) -> DatabaseProxy {
    let policy = AccessPolicy::default()
        .allow(reader.public_key(), &[AccessRight::Read])
        .allow(owner.public_key(), &[AccessRight::Read, AccessRight::Write]);
    DatabaseProxy::new(policy, store_with(owner))
}

#[test]
fn proxy_runs_checks_in_order_and_audits_each_request() {
    let (owner, reader, stranger) = (keys(1), keys(2), keys(3));
    let mut p = proxy(&owner, &reader);
    let d = connector(&p.store);
    let read = |id: &str| ProxyOp::Read { record_id: id.into() };

    let mut unsigned = ProxyRequest::new(&reader, d.clone(), read("obs-1"));
    unsigned.signature = None;
    let mut wrong_sig = ProxyRequest::new(&reader, d.clone(), read("obs-1"));
    wrong_sig.actor = stranger.public_key();
    let mut bad_desc = d.clone();
    bad_desc.name = "renamed".into();
    let cases = [
        (ProxyRequest::new(&reader, d.clone(), read("obs-1")), ProxyOutcome::Granted(json!({ "hr": 72 }))),
        (unsigned, ProxyOutcome::Denied("signature-present".into())),
        (wrong_sig, ProxyOutcome::Denied("signature-present".into())),
        (ProxyRequest::new(&reader, bad_desc, read("obs-1")), ProxyOutcome::Denied("descriptor-valid".into())),
        (ProxyRequest::new(&stranger, d.clone(), read("obs-1")), ProxyOutcome::Denied("actor-allowed".into())),
        (
            ProxyRequest::new(&reader, d.clone(), ProxyOp::Write { record_id: "obs-1".into(), document: json!(1) }),
            ProxyOutcome::Denied("actor-allowed".into()),
        ),
        (ProxyRequest::new(&reader, d.clone(), read("obs-9")), ProxyOutcome::Denied("record-exists".into())),
        (
            ProxyRequest::new(&owner, d.clone(), ProxyOp::Write { record_id: "obs-9".into(), document: json!(2) }),
            ProxyOutcome::Granted(json!(null)),
        ),
        (ProxyRequest::new(&reader, d.clone(), read("obs-9")), ProxyOutcome::Granted(json!(2))),
    ];
    let n = cases.len();
    for (i, (req, want)) in cases.into_iter().enumerate() {
        assert_eq!(p.handle(&req), want, "case {i}");
        assert_eq!(p.trail.len(), i + 1);
    }
    assert_eq!(p.trail.len(), n);
    assert_eq!(p.trail.count(AuditAction::Denied), 6);
    assert_eq!(p.trail.entries()[4].reason, "actor-allowed");
    assert!(verify_audit(p.trail.entries()).is_ok());
}

#[test]
fn spawned_proxy_serializes_concurrent_requests() {
    let (owner, reader) = (keys(1), keys(2));
    let p = proxy(&owner, &reader);
    let d = connector(&p.store);
    let handle = p.spawn();
    let threads: Vec<_> = (0..8)
        .map(|t| {
            let (h, d, who) = (handle.clone(), d.clone(), if t % 2 == 0 { keys(2) } else { keys(5) });
            std::thread::spawn(move || {
                for _ in 0..25 {
                    h.submit(ProxyRequest::new(&who, d.clone(), ProxyOp::Read { record_id: "obs-1".into() }));
                }
                h.record(who.public_key(), AuditAction::TokenAccess, "tok", "");
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    let p = handle.shutdown();
    assert_eq!(p.trail.len(), 8 * 26);
    assert_eq!(p.trail.count(AuditAction::Read), 4 * 25);
    assert_eq!(p.trail.count(AuditAction::Denied), 4 * 25);
    assert_eq!(p.trail.count(AuditAction::TokenAccess), 8);
    assert!(verify_audit(p.trail.entries()).is_ok());
}

#[test]
fn audit_file_round_trips() {
    let mut trail = AuditTrail::new();
    for i in 0..5 {
        trail.append(keys(i).public_key(), AuditAction::Read, format!("r{i}"), "");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.jsonl");
    write_audit_file(&path, trail.entries()).unwrap();
    let back = read_audit_file(&path).unwrap();
    assert_eq!(back, trail.entries());
    assert!(verify_audit(&back).is_ok());
}

fn action(i: u8) -> AuditAction {
    [
        AuditAction::Read,
        AuditAction::Write,
        AuditAction::TokenCreate,
        AuditAction::TokenAccess,
        AuditAction::TokenRevoke,
        AuditAction::Denied,
    ][i as usize % 6]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any single-field edit, deletion, or swap is located by verification.
    #[test]
    fn audit_mutations_are_detected(
        ops in prop::collection::vec((0u8..6, 0u8..4, "[a-z0-9]{1,6}"), 2..20),
        pick in any::<prop::sample::Index>(),
        how in 0u8..5,
    ) {
        let mut trail = AuditTrail::new();
        for (a, who, target) in &ops {
            trail.append(keys(*who).public_key(), action(*a), target.clone(), "");
        }
        let mut entries = trail.entries().to_vec();
        let i = pick.index(entries.len());
        match how {
            0 => entries[i].target.push('x'),
            1 => entries[i].action = action(entries[i].action as u8 + 1),
            2 => entries[i].actor = keys(200).public_key(),
            3 => {
                entries.remove(i);
            }
            _ => {
                let j = (i + 1) % entries.len();
                entries.swap(i, j);
            }
        }
        let expected = match how {
            4 => i.min((i + 1) % ops.len()) as u64,
            _ => i as u64,
        };
        if how == 3 && i == ops.len() - 1 {
            // truncation of the tail is indistinguishable from a shorter trail;
            // the head digest, not the entries, pins the length
            prop_assert!(verify_audit(&entries).is_ok());
            prop_assert_ne!(entries.last().map(|e| e.entry_digest), Some(trail.head()));
        } else {
            prop_assert_eq!(verify_audit(&entries), Err(expected));
        }
    }

    /// Random wrong keys never open a token.
    #[test]
    fn wrong_keys_never_redeem(seed in any::<[u8; 32]>()) {
        let (owner, rcpt) = (keys(1), keys(2));
        prop_assume!(seed != [2; 32]);
        let d = connector(&store_with(&owner));
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let token = tokenize_connector(&d, &owner, &rcpt.public_key(), &TokenLabels::default(), &mut rng).unwrap();
        prop_assert!(matches!(redeem_token(&token, &KeyPair::from_seed(seed)), Err(OffchainError::Decryption)));
    }
}
