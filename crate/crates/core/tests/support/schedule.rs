//! Discrete-event simulation of a chain under keep-last(1) queues. Emits the
//! trace a real run would record plus the ground-truth set of paths, found
//! by carrying each message's lineage forward rather than by matching the
//! trace afterwards.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;

use chainbench_core::analysis::{HopEvent, PathInstance};
use chainbench_core::model::{ChainHop, ChainSpec, HopKind};
use chainbench_core::trace::{EventKind, TraceEvent, TraceLog};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Lineage = (u64, u64, Vec<HopEvent>);

#[derive(Clone)]
struct Msg {
    topic: String,
    seq: u64,
    lineage: Vec<Lineage>,
}

struct NodeSim {
    name: String,
    /// Chain position of its subscription hop.
    sub_hop: usize,
    timer_hop: Option<usize>,
    period: u64,
    next_timer: u64,
    busy_until: u64,
    queue: Option<Msg>,
    stored: Option<(Msg, bool)>,
}

enum Ev {
    Sensor(u64),
    Arrive(usize, Msg),
    Wake(usize),
}

pub struct Schedule {
    pub chain: ChainSpec,
    pub trace: TraceLog,
    pub truth: Vec<PathInstance>,
}

fn topic_of(i: usize) -> String {
    format!("t{i}")
}

/// Random chain of `1..=max_hops` hops (timer hops never first and never
/// back to back), simulated for `sensor_msgs` sensor messages.
pub fn generate(rng: &mut ChaCha8Rng, max_hops: usize, sensor_msgs: u64) -> Schedule {
    let len = rng.random_range(1..=max_hops);
    let mut timer = vec![false; len];
    for i in 1..len {
        if !timer[i - 1] && rng.random_bool(0.25) {
            timer[i] = true;
        }
    }
    let final_output = rng.random_bool(0.5);
    // node per subscription hop
    let mut nodes: Vec<NodeSim> = Vec::new();
    let mut node_of = vec![0usize; len];
    for i in 0..len {
        if timer[i] {
            let n = node_of[i - 1];
            nodes[n].timer_hop = Some(i);
            node_of[i] = n;
        } else {
            node_of[i] = nodes.len();
            nodes.push(NodeSim {
                name: format!("n{i}"),
                sub_hop: i,
                timer_hop: None,
                period: rng.random_range(3..40),
                next_timer: 0,
                busy_until: 0,
                queue: None,
                stored: None,
            });
        }
    }
    for n in &mut nodes {
        n.next_timer = n.period;
    }
    let hops: Vec<ChainHop> = (0..len)
        .map(|i| {
            let kind = if timer[i] {
                HopKind::Timer
            } else {
                HopKind::Subscription {
                    signature: "Msg".into(),
                    topic: Some(topic_of(i)),
                }
            };
            let output_topic = if i + 1 < len {
                (!timer[i + 1]).then(|| topic_of(i + 1))
            } else {
                final_output.then(|| "out".to_string())
            };
            ChainHop {
                node: if timer[i] { nodes[node_of[i]].name.clone() } else { format!("n{i}") },
                kind,
                output_topic,
            }
        })
        .collect();
    let chain = ChainSpec {
        hops,
        sensor_topic: Some(topic_of(0)),
    };

    let mut events: Vec<TraceEvent> = Vec::new();
    let mut truth: Vec<PathInstance> = Vec::new();
    let mut seqs: BTreeMap<String, u64> = BTreeMap::new();
    let mut heap: BinaryHeap<Reverse<(u64, u64, usize)>> = BinaryHeap::new();
    let mut payload: Vec<Option<Ev>> = Vec::new();
    let push = |heap: &mut BinaryHeap<Reverse<(u64, u64, usize)>>, payload: &mut Vec<Option<Ev>>, t: u64, ev: Ev| {
        payload.push(Some(ev));
        heap.push(Reverse((t, payload.len() as u64, payload.len() - 1)));
    };

    let mut t = 0;
    for s in 1..=sensor_msgs {
        t += rng.random_range(1..30);
        push(&mut heap, &mut payload, t, Ev::Sensor(s));
    }
    let horizon = t + 200;
    for (i, n) in nodes.iter().enumerate() {
        if n.timer_hop.is_some() {
            push(&mut heap, &mut payload, n.next_timer, Ev::Wake(i));
        }
    }

    let mut ev = |t: u64, node: &str, kind: EventKind| events.push(TraceEvent::new(t, 1, node, kind));
    let publish = |seqs: &mut BTreeMap<String, u64>, topic: &str| {
        let s = seqs.entry(topic.to_string()).or_insert(0);
        *s += 1;
        *s
    };
    let dead = |truth: &mut Vec<PathInstance>, lineage: Vec<Lineage>| {
        for (seq, ts, hops) in lineage {
            truth.push(PathInstance {
                sensor_seq: seq,
                sensor_ts: ts,
                hops,
                complete: false,
            });
        }
    };

    while let Some(Reverse((now, _, id))) = heap.pop() {
        match payload[id].take().unwrap() {
            Ev::Sensor(s) => {
                let seq = publish(&mut seqs, &topic_of(0));
                debug_assert_eq!(seq, s);
                ev(now, "sensor", EventKind::publish(&topic_of(0), seq));
                let msg = Msg {
                    topic: topic_of(0),
                    seq,
                    lineage: vec![(seq, now, Vec::new())],
                };
                let delay = rng.random_range(0..5);
                push(&mut heap, &mut payload, now + delay, Ev::Arrive(0, msg));
            }
            Ev::Arrive(n, msg) => {
                if let Some(old) = nodes[n].queue.replace(msg) {
                    dead(&mut truth, old.lineage);
                }
                push(&mut heap, &mut payload, now, Ev::Wake(n));
            }
            Ev::Wake(n) => {
                if now < nodes[n].busy_until {
                    continue;
                }
                let timer_due = nodes[n].timer_hop.is_some() && now >= nodes[n].next_timer && now <= horizon;
                let (hop, input) = if timer_due {
                    // coalesce: one firing for every missed target
                    let p = nodes[n].period;
                    nodes[n].next_timer = (now / p + 1) * p;
                    let next = nodes[n].next_timer;
                    push(&mut heap, &mut payload, next, Ev::Wake(n));
                    let consumed = nodes[n].stored.as_mut().map(|(m, used)| {
                        *used = true;
                        m.clone()
                    });
                    (nodes[n].timer_hop.unwrap(), consumed)
                } else if let Some(m) = nodes[n].queue.take() {
                    (nodes[n].sub_hop, Some(m))
                } else {
                    continue;
                };
                let is_timer = hop != nodes[n].sub_hop;
                let in_key = input.as_ref().map(|m| (m.topic.clone(), m.seq));
                let name = nodes[n].name.clone();
                let start = now;
                let dur = rng.random_range(2..12);
                let end = start + dur;
                if is_timer {
                    ev(start, &name, EventKind::timer_start(input.as_ref().map(|m| (m.topic.as_str(), m.seq))));
                } else {
                    let m = input.as_ref().unwrap();
                    ev(start, &name, EventKind::sub_start(&m.topic, m.seq));
                }
                let out_topic = chain.hops[hop].output_topic.clone();
                let out_ts = out_topic.as_ref().map(|_| start + rng.random_range(1..dur));
                // a timer with no stored input still publishes, but carries no lineage
                let lineage: Vec<Lineage> = input
                    .as_ref()
                    .map(|m| {
                        m.lineage
                            .iter()
                            .map(|(s, ts, h)| {
                                let mut h = h.clone();
                                h.push(HopEvent {
                                    timer: is_timer,
                                    start,
                                    end,
                                    output_ts: out_ts,
                                });
                                (*s, *ts, h)
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                if let (Some(topic), Some(ots)) = (&out_topic, out_ts) {
                    let seq = publish(&mut seqs, topic);
                    ev(ots, &name, EventKind::publish(topic, seq));
                    if hop + 1 == len {
                        for (s, ts, h) in lineage {
                            truth.push(PathInstance {
                                sensor_seq: s,
                                sensor_ts: ts,
                                hops: h,
                                complete: true,
                            });
                        }
                    } else {
                        let next = node_of[hop + 1];
                        let delay = rng.random_range(0..6);
                        let msg = Msg {
                            topic: topic.clone(),
                            seq,
                            lineage,
                        };
                        push(&mut heap, &mut payload, ots + delay, Ev::Arrive(next, msg));
                    }
                } else if hop + 1 == len {
                    for (s, ts, h) in lineage {
                        truth.push(PathInstance {
                            sensor_seq: s,
                            sensor_ts: ts,
                            hops: h,
                            complete: true,
                        });
                    }
                } else {
                    // next hop is this node's timer, which reads the same input
                    let m = input.unwrap();
                    let stored = Msg {
                        topic: m.topic,
                        seq: m.seq,
                        lineage,
                    };
                    if let Some((old, used)) = nodes[n].stored.replace((stored, false)) {
                        if !used {
                            dead(&mut truth, old.lineage);
                        }
                    }
                }
                match (is_timer, in_key) {
                    (false, Some((topic, seq))) => ev(end, &name, EventKind::sub_end(&topic, seq)),
                    _ => ev(end, &name, EventKind::TimerCbEnd),
                }
                nodes[n].busy_until = end;
                push(&mut heap, &mut payload, end, Ev::Wake(n));
            }
        }
    }
    // whatever is still queued or stored unused never completed
    for n in &mut nodes {
        if let Some(m) = n.queue.take() {
            dead(&mut truth, m.lineage);
        }
        if let Some((m, used)) = n.stored.take() {
            if !used {
                dead(&mut truth, m.lineage);
            }
        }
    }
    events.sort_by_key(|e| e.t);
    Schedule {
        chain,
        trace: TraceLog {
            run_id: "sim".into(),
            events,
            dropped_count: 0,
        },
        truth,
    }
}

/// Canonical order for comparing path sets.
pub fn canonical(mut paths: Vec<PathInstance>) -> Vec<(u64, u64, bool, Vec<HopEvent>)> {
    let mut v: Vec<_> = paths
        .drain(..)
        .map(|p| (p.sensor_seq, p.sensor_ts, p.complete, p.hops))
        .collect();
    v.sort();
    v
}

/// A random complete path built from drawn components:
/// (path, idle, communication, compute).
pub fn random_path(rng: &mut ChaCha8Rng, hops: usize) -> (PathInstance, u64, u64, u64) {
    let mut timer = vec![false; hops];
    for i in 1..hops {
        timer[i] = !timer[i - 1] && rng.random_bool(0.3);
    }
    let sensor_ts = rng.random_range(0..1_000_000_000u64);
    let mut t = sensor_ts;
    let (mut idle, mut comm, mut compute) = (0, 0, 0);
    let mut out = Vec::with_capacity(hops);
    for i in 0..hops {
        let wait = rng.random_range(0..5_000_000u64);
        if timer[i] {
            idle += wait;
        } else {
            comm += wait;
        }
        let start = t + wait;
        let work = rng.random_range(0..20_000_000u64);
        compute += work;
        let feeds_timer = i + 1 < hops && timer[i + 1];
        if feeds_timer {
            out.push(HopEvent {
                timer: timer[i],
                start,
                end: start + work,
                output_ts: None,
            });
        } else {
            let tail = rng.random_range(0..1_000_000u64);
            out.push(HopEvent {
                timer: timer[i],
                start,
                end: start + work + tail,
                output_ts: Some(start + work),
            });
        }
        t = start + work;
    }
    let path = PathInstance {
        sensor_seq: 1,
        sensor_ts,
        hops: out,
        complete: true,
    };
    (path, idle, comm, compute)
}
