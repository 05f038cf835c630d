//! Instrumented middleware scenarios for the QoS and reliability contracts.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chainbench_core::clock::{now_ns, sleep_until};
use chainbench_core::middleware::{Bus, BusConfig, DeliveryMode, FaultInjection, RemoteRoute};
use chainbench_core::model::QosPolicy;
use chainbench_core::trace::TraceSession;
use chainbench_core::workload::busy_compute;

pub struct KeepLastOutcome {
    pub published: u64,
    pub delivered: u64,
    pub evicted: u64,
    pub high_water: usize,
    /// Every broken expectation, empty when the contract holds.
    pub violations: Vec<String>,
}

/// A producer publishing every `consumer_ns / 10` against a keep_last(1)
/// subscriber whose callback spins for `consumer_ns`.
pub fn keep_last_contract(messages: u64, consumer_ns: u64) -> KeepLastOutcome {
    let bus = Bus::new(BusConfig::local(["fast"]), TraceSession::disabled()).unwrap();
    let publisher = bus.advertise(&bus.create_node("producer"), "fast").unwrap();
    let node = bus.create_node("consumer");
    let seen = Arc::new(Mutex::new(Vec::new()));
    let s = seen.clone();
    let mut sub = bus
        .subscribe(&node, "fast", QosPolicy::keep_last(1), "slow", move |env| {
            s.lock().unwrap().push(env.seq);
            busy_compute(consumer_ns);
        })
        .unwrap();

    let latest = Arc::new(AtomicU64::new(0));
    let done = Arc::new(AtomicBool::new(false));
    let period = (consumer_ns / 10).max(1);
    let producer = {
        let (latest, done) = (latest.clone(), done.clone());
        std::thread::spawn(move || {
            let start = now_ns();
            for i in 0..messages {
                sleep_until(start + i * period);
                let seq = publisher.publish(vec![0u8; 16]).unwrap();
                latest.store(seq, Ordering::SeqCst);
            }
            done.store(true, Ordering::SeqCst);
        })
    };

    let mut violations = Vec::new();
    let mut last = 0u64;
    loop {
        let newest_before = latest.load(Ordering::SeqCst);
        let buffered = sub.queue().len();
        if buffered > 1 {
            violations.push(format!("{buffered} envelopes buffered"));
        }
        match sub.dispatch_next() {
            Some(d) => {
                if d.seq < newest_before {
                    violations.push(format!("dispatched seq {} while {newest_before} was available", d.seq));
                }
                if d.seq <= last {
                    violations.push(format!("seq {} after {last}", d.seq));
                }
                last = d.seq;
            }
            None if done.load(Ordering::SeqCst) && sub.queue().is_empty() => break,
            None => {
                node.notifier.wait_until(now_ns() + 1_000_000);
            }
        }
    }
    producer.join().unwrap();

    let stats = sub.queue().stats();
    let delivered = seen.lock().unwrap().len() as u64;
    if stats.taken + stats.evicted != stats.enqueued {
        violations.push(format!(
            "taken {} + evicted {} != enqueued {}",
            stats.taken, stats.evicted, stats.enqueued
        ));
    }
    if last != messages {
        violations.push(format!("newest message {messages} never delivered (last {last})"));
    }
    KeepLastOutcome {
        published: messages,
        delivered,
        evicted: stats.evicted,
        high_water: stats.high_water,
        violations,
    }
}

pub struct ReliableOutcome {
    /// (seq, counter carried in the payload) in delivery order.
    pub received: Vec<(u64, u64)>,
    pub injected_drops: u64,
    pub retransmissions: u64,
    pub duplicates: u64,
    pub elapsed_ns: u64,
}

/// `messages` reliable publishes over loopback UDP with `drop_rate` of the
/// sender's data datagrams discarded.
pub fn reliable_contract(messages: u64, drop_rate: f64, seed: u64, ack_timeout_ns: u64) -> ReliableOutcome {
    let topics: BTreeSet<String> = ["r".to_string()].into();
    let rx = Bus::new(
        BusConfig {
            topics: topics.clone(),
            listen: Some("127.0.0.1:0".parse().unwrap()),
            ..BusConfig::default()
        },
        TraceSession::disabled(),
    )
    .unwrap();
    let received = Arc::new(Mutex::new(Vec::new()));
    let r = received.clone();
    // deep enough that the subscriber never evicts
    let mut sub = rx
        .subscribe(
            &rx.create_node("rx"),
            "r",
            QosPolicy::keep_last(messages as usize).reliable(),
            "cb",
            move |env| {
                let counter = u64::from_le_bytes(env.payload[..8].try_into().unwrap());
                r.lock().unwrap().push((env.seq, counter));
            },
        )
        .unwrap();

    let route = RemoteRoute {
        group: "rx".into(),
        addr: rx.local_addr().unwrap(),
        mode: DeliveryMode::Reliable {
            ack_timeout_ns,
            max_retries: 1000,
        },
    };
    let tx = Bus::new(
        BusConfig {
            topics,
            routes: HashMap::from([("r".to_string(), vec![route])]),
            fault: Some(FaultInjection { drop_rate, seed }),
            ..BusConfig::default()
        },
        TraceSession::disabled(),
    )
    .unwrap();
    let publisher = tx.advertise(&tx.create_node("tx"), "r").unwrap();

    let start = now_ns();
    for i in 1..=messages {
        let mut payload = i.to_le_bytes().to_vec();
        payload.extend_from_slice(&[0xa5; 56]);
        publisher.publish(payload).unwrap();
    }
    while sub.dispatch_next().is_some() {}
    let elapsed_ns = now_ns() - start;
    let stats = (
        tx.stats().injected_drops.load(Ordering::Relaxed),
        tx.stats().retransmissions.load(Ordering::Relaxed),
        rx.stats().duplicates.load(Ordering::Relaxed),
    );
    tx.shutdown();
    rx.shutdown();
    let received = std::mem::take(&mut *received.lock().unwrap());
    ReliableOutcome {
        received,
        injected_drops: stats.0,
        retransmissions: stats.1,
        duplicates: stats.2,
        elapsed_ns,
    }
}
