use std::collections::BTreeMap;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use ringchain::chain::{verify_chain, Address, Chain, ChainConfig, Payload, TxRequest};
use ringchain::contracts;
use ringchain::crypto::KeyPair;
use ringchain::par::ExecMode;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn funded(n: u8) -> (Vec<KeyPair>, BTreeMap<Address, u64>) {
    let keys: Vec<KeyPair> = (1..=n).map(|i| KeyPair::from_seed([i; 32])).collect();
    let alloc = keys.iter().map(|k| (Address::from_public_key(&k.public_key()), 1_000_000_000)).collect();
    (keys, alloc)
}

fn fill(chain: &mut Chain, keys: &[KeyPair], txs: usize) {
    for i in 0..txs {
        let from = &keys[i % keys.len()];
        let to = Address::from_public_key(&keys[(i + 1) % keys.len()].public_key());
        let tx = TxRequest {
            nonce: chain.next_nonce(&Address::from_public_key(&from.public_key())),
            recipient: Some(to),
            payload: Payload::transfer(to),
            value: 1,
            gas_limit: 1_000,
            gas_price: 1,
        }
        .sign(from);
        chain.submit(tx);
    }
}

fn build(mode: ExecMode, difficulty: u64, blocks: usize, txs: usize) -> Chain {
    let (keys, alloc) = funded(8);
    let config = ChainConfig { difficulty, ..ChainConfig::default() };
    let mut chain = Chain::new(config, alloc, Arc::new(contracts::catalog()), mode).unwrap();
    for _ in 0..blocks {
        fill(&mut chain, &keys, txs);
        chain.mine(Address::default());
    }
    chain
}

fn mine(c: &mut Criterion) {
    let mut group = c.benchmark_group("mine_block");
    group.sample_size(20);
    for difficulty in [1u64 << 12, 1 << 16] {
        for (label, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(label, difficulty), &difficulty, |b, &d| {
                b.iter_batched(
                    || {
                        let (keys, alloc) = funded(8);
                        let config = ChainConfig { difficulty: d, ..ChainConfig::default() };
                        let mut chain = Chain::new(config, alloc, Arc::new(contracts::catalog()), mode).unwrap();
                        fill(&mut chain, &keys, 64);
                        chain
                    },
                    |mut chain| chain.mine(Address::default()),
                    BatchSize::SmallInput,
                )
            });
        }
    }
    group.finish();
}

fn verify(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify_chain");
    group.sample_size(20);
    let chain = build(ExecMode::Parallel, 1 << 10, 30, 40);
    let catalog = contracts::catalog();
    for (label, mode) in MODES {
        group.bench_function(label, |b| b.iter(|| verify_chain(chain.blocks(), &catalog, mode).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, mine, verify);
criterion_main!(benches);
