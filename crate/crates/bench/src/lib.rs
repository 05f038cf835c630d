//! Fixtures for the criterion benches.

use std::sync::Arc;

use chainbench_core::model::{ChainHop, ChainSpec, HopKind};
use chainbench_core::trace::{EventKind, TraceEvent, TraceLog};

fn topic(i: usize) -> String {
    format!("t{i}")
}

/// Subscription-only chain `n0 -> n1 -> ...` where hop `i` reads `t{i}`
/// and publishes `t{i+1}`.
pub fn linear_chain(hops: usize) -> ChainSpec {
    ChainSpec {
        hops: (0..hops)
            .map(|i| ChainHop {
                node: format!("n{i}"),
                kind: HopKind::Subscription {
                    signature: topic(i),
                    topic: Some(topic(i)),
                },
                output_topic: Some(topic(i + 1)),
            })
            .collect(),
        sensor_topic: Some(topic(0)),
    }
}

/// Trace of `messages` sensor messages each travelling the whole chain,
/// 100 us per callback and 50 us per transfer.
pub fn linear_trace(hops: usize, messages: u64) -> TraceLog {
    let mut events = Vec::with_capacity(messages as usize * (3 * hops + 1));
    let period = (hops as u64 + 1) * 200_000;
    for seq in 1..=messages {
        let mut t = seq * period;
        events.push(TraceEvent::new(t, 1, "sensor", EventKind::publish(&topic(0), seq)));
        for i in 0..hops {
            let node = format!("n{i}");
            let input: Arc<str> = topic(i).into();
            t += 50_000;
            events.push(TraceEvent::new(t, 1, &node, EventKind::SubCbStart { topic: input.clone(), seq }));
            t += 100_000;
            events.push(TraceEvent::new(t, 1, &node, EventKind::publish(&topic(i + 1), seq)));
            events.push(TraceEvent::new(t + 1, 1, &node, EventKind::SubCbEnd { topic: input, seq }));
        }
    }
    TraceLog {
        run_id: "bench".into(),
        events,
        dropped_count: 0,
    }
}

/// Deterministic latency-like samples in ms.
pub fn samples(n: usize) -> Vec<f64> {
    let mut x = 0x2545_f491_4f6c_dd1du64;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            50.0 + (x % 100_000) as f64 / 1000.0
        })
        .collect()
}
