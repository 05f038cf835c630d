//! Structural checks of a workload graph and resolution of a chain against it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::types::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    /// The chain with every topic filled in, present when all hops resolved.
    pub chain: Option<ChainSpec>,
    pub resolved_hops: usize,
}

impl ValidationReport {
    pub fn valid(&self) -> bool {
        !self.findings.iter().any(|f| f.severity == Severity::Fatal)
    }

    pub fn fatal(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Fatal)
    }

    fn push(&mut self, severity: Severity, message: String) {
        self.findings.push(Finding { severity, message });
    }
}

/// Graph-level findings plus chain resolution. Pure: same inputs, same report.
pub fn validate_graph(spec: &WorkloadSpec, chain: &ChainSpec) -> ValidationReport {
    let mut report = ValidationReport {
        findings: Vec::new(),
        chain: None,
        resolved_hops: 0,
    };
    check_topics(spec, &mut report);
    check_manifest(spec, &mut report);
    if let Some(resolved) = resolve_chain(spec, chain, &mut report) {
        report.resolved_hops = resolved.hops.len();
        report.chain = Some(resolved);
    }
    report
}

fn check_topics(spec: &WorkloadSpec, report: &mut ValidationReport) {
    let mut published: BTreeMap<&str, usize> = BTreeMap::new();
    let mut subscribed: BTreeMap<&str, usize> = BTreeMap::new();
    for n in &spec.nodes {
        for p in &n.publications {
            *published.entry(p.topic.as_str()).or_default() += 1;
        }
        for s in &n.subscriptions {
            *subscribed.entry(s.topic.as_str()).or_default() += 1;
        }
    }
    for n in &spec.nodes {
        for s in &n.subscriptions {
            if !published.contains_key(s.topic.as_str()) {
                report.push(
                    Severity::Warning,
                    format!(
                        "dangling subscription: `{}` subscribes to `{}` which nobody publishes",
                        n.name, s.topic
                    ),
                );
            }
        }
    }
    for topic in published.keys() {
        if !subscribed.contains_key(topic) {
            report.push(
                Severity::Info,
                format!("unreachable topic: `{topic}` is published but never subscribed"),
            );
        }
    }
}

fn check_manifest(spec: &WorkloadSpec, report: &mut ValidationReport) {
    let manifest = &spec.manifest;
    if manifest.modules.is_empty() {
        return;
    }
    let known: BTreeSet<&str> = spec.nodes.iter().map(|n| n.name.as_str()).collect();
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    for m in &manifest.modules {
        for n in &m.nodes {
            if !known.contains(n.as_str()) {
                report.push(
                    Severity::Fatal,
                    format!("module `{}` references undeclared node `{n}`", m.name),
                );
            }
            if let Some(prev) = seen.insert(n.as_str(), m.name.as_str()) {
                report.push(
                    Severity::Fatal,
                    format!("node `{n}` appears in modules `{prev}` and `{}`", m.name),
                );
            }
        }
    }
    for n in &known {
        if !seen.contains_key(n) {
            report.push(Severity::Fatal, format!("node `{n}` belongs to no module"));
        }
    }
}

/// The callback a hop stands for, plus the topic it consumes.
struct HopBinding<'a> {
    callback: &'a str,
    input: Option<&'a str>,
}

fn resolve_chain(
    spec: &WorkloadSpec,
    chain: &ChainSpec,
    report: &mut ValidationReport,
) -> Option<ChainSpec> {
    if chain.hops.is_empty() {
        report.push(Severity::Fatal, "chain has no hops".into());
        return None;
    }
    let mut nodes = Vec::with_capacity(chain.hops.len());
    for (i, hop) in chain.hops.iter().enumerate() {
        match spec.node(&hop.node) {
            Some(n) => nodes.push(n),
            None => {
                report.push(
                    Severity::Fatal,
                    format!("hop ({i}): chain references undeclared node `{}`", hop.node),
                );
                return None;
            }
        }
        if hop.is_timer() && (i == 0 || chain.hops[i - 1].node != hop.node) {
            report.push(
                Severity::Fatal,
                format!("hop ({i}): timer hop must follow a hop on node `{}`", hop.node),
            );
            return None;
        }
    }

    let fatal = |report: &mut ValidationReport, i: usize, msg: String| {
        report.push(Severity::Fatal, format!("hop ({i}): {msg}"));
    };

    let mut bindings: Vec<HopBinding<'_>> = Vec::with_capacity(nodes.len());
    let mut resolved = chain.clone();

    for (i, hop) in chain.hops.iter().enumerate() {
        let node = nodes[i];
        let binding = if hop.is_timer() {
            let prev_input = bindings[i - 1].input;
            let timer = match node.timers.len() {
                0 => {
                    fatal(report, i, format!("node `{}` declares no timer", node.name));
                    return None;
                }
                1 => &node.timers[0],
                _ => {
                    let mut matching = node
                        .timers
                        .iter()
                        .filter(|t| t.reads.as_deref() == prev_input);
                    match (matching.next(), matching.next()) {
                        (Some(t), None) => t,
                        _ => {
                            fatal(
                                report,
                                i,
                                format!(
                                    "node `{}` has several timers; none reads the chain input unambiguously",
                                    node.name
                                ),
                            );
                            return None;
                        }
                    }
                }
            };
            if let (Some(r), Some(p)) = (timer.reads.as_deref(), prev_input) {
                if r != p {
                    fatal(
                        report,
                        i,
                        format!("timer `{}` reads `{r}`, but the chain delivers `{p}`", timer.callback),
                    );
                    return None;
                }
            }
            HopBinding {
                callback: &timer.callback,
                input: prev_input,
            }
        } else if i == 0 {
            let next = chain.hops.get(1).map(|h| (h, nodes[1]));
            let candidates: Vec<&SubscriptionSpec> = node
                .subscriptions
                .iter()
                .filter(|s| match next {
                    None => true,
                    Some((h, next_node)) if h.is_timer() => next_node
                        .timers
                        .iter()
                        .all(|t| t.reads.as_deref().is_none_or(|r| r == s.topic)),
                    Some((_, next_node)) => node
                        .publications_of(&s.callback)
                        .any(|p| next_node.subscriptions.iter().any(|ns| ns.topic == p.topic)),
                })
                .collect();
            match candidates.as_slice() {
                [only] => HopBinding {
                    callback: &only.callback,
                    input: Some(&only.topic),
                },
                [] => {
                    fatal(
                        report,
                        i,
                        format!("no subscription of `{}` feeds the next hop", node.name),
                    );
                    return None;
                }
                _ => {
                    fatal(
                        report,
                        i,
                        format!("ambiguous sensor subscription on `{}`", node.name),
                    );
                    return None;
                }
            }
        } else {
            let topic = match resolved.hops[i - 1].output_topic.clone() {
                Some(t) => t,
                None => {
                    fatal(report, i, "previous hop produces no output".into());
                    return None;
                }
            };
            match node.subscriptions.iter().find(|s| s.topic == topic) {
                Some(s) => HopBinding {
                    callback: &s.callback,
                    input: Some(&s.topic),
                },
                None => {
                    fatal(
                        report,
                        i,
                        format!("`{}` does not subscribe to `{topic}`", node.name),
                    );
                    return None;
                }
            }
        };

        // output topic of this hop
        let outputs: Vec<&str> = node
            .publications_of(binding.callback)
            .map(|p| p.topic.as_str())
            .collect();
        let output = match chain.hops.get(i + 1) {
            Some(next) if next.is_timer() => None,
            Some(_) => {
                let next_node = nodes[i + 1];
                let linked: Vec<&str> = outputs
                    .iter()
                    .copied()
                    .filter(|t| next_node.subscriptions.iter().any(|s| s.topic == *t))
                    .collect();
                match linked.as_slice() {
                    [one] => Some(one.to_string()),
                    [] => {
                        fatal(
                            report,
                            i,
                            format!(
                                "callback `{}::{}` publishes nothing `{}` subscribes to",
                                node.name, binding.callback, next_node.name
                            ),
                        );
                        return None;
                    }
                    _ => {
                        fatal(
                            report,
                            i,
                            format!("ambiguous link from `{}` to `{}`", node.name, next_node.name),
                        );
                        return None;
                    }
                }
            }
            None => match outputs.as_slice() {
                [] => None,
                [one] => Some(one.to_string()),
                _ => {
                    fatal(report, i, format!("final hop `{}` has several outputs", node.name));
                    return None;
                }
            },
        };
        if let HopKind::Subscription { topic, .. } = &mut resolved.hops[i].kind {
            *topic = binding.input.map(str::to_string);
        }
        resolved.hops[i].output_topic = output;
        bindings.push(binding);
    }
    resolved.sensor_topic = bindings[0].input.map(str::to_string);
    Some(resolved)
}
