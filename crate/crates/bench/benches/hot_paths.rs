use std::hint::black_box;
use std::sync::Arc;

use chainbench_bench::{linear_chain, linear_trace, samples};
use chainbench_core::analysis::{decompose, reconstruct_paths, summarize};
use chainbench_core::middleware::wire::{fragment, Reassembler, MAX_FRAGMENT_PAYLOAD};
use chainbench_core::middleware::{MessageEnvelope, Notifier, SubscriptionQueue};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn wire(c: &mut Criterion) {
    let mut g = c.benchmark_group("wire");
    let src = "127.0.0.1:9".parse().unwrap();
    for size in [1024usize, 1 << 20, 8 << 20] {
        let payload = vec![7u8; size];
        g.throughput(Throughput::Bytes(size as u64));
        g.bench_with_input(BenchmarkId::new("fragment_reassemble", size), &payload, |b, p| {
            let mut seq = 0;
            b.iter(|| {
                seq += 1;
                let frags = fragment(1, seq, 0, 0, p, MAX_FRAGMENT_PAYLOAD);
                let mut r = Reassembler::new();
                let mut out = None;
                for f in &frags {
                    out = r.insert(src, f, 0);
                }
                black_box(out.expect("complete"))
            })
        });
    }
    g.finish();
}

fn keep_last(c: &mut Criterion) {
    let q = SubscriptionQueue::new(1, Notifier::new());
    let env = Arc::new(MessageEnvelope {
        topic: "t".into(),
        seq: 1,
        publish_ts: 0,
        source: 1,
        payload: Arc::new(vec![0; 64]),
    });
    c.bench_function("keep_last_push_overwrite", |b| b.iter(|| black_box(q.push(env.clone()))));
}

fn analysis(c: &mut Criterion) {
    let mut g = c.benchmark_group("analysis");
    for n in [1_000usize, 10_000] {
        let xs = samples(n);
        g.bench_with_input(BenchmarkId::new("summarize", n), &xs, |b, xs| b.iter(|| summarize(black_box(xs))));
    }
    let chain = linear_chain(17);
    let trace = linear_trace(17, 1_000);
    g.bench_function("reconstruct_17_hops_1000_msgs", |b| {
        b.iter(|| reconstruct_paths(black_box(&trace), &chain).unwrap())
    });
    let paths = reconstruct_paths(&trace, &chain).unwrap();
    g.bench_function("decompose_17_hops", |b| b.iter(|| decompose(black_box(&paths[0])).unwrap()));
    g.finish();
}

criterion_group!(benches, wire, keep_last, analysis);
criterion_main!(benches);
