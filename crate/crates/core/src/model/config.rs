//! `workload.spec`: a line-oriented description of a node graph.
//!
//! ```text
//! # comment
//! param vehicle_model=sample
//! node lidar
//!   timer 100 on_scan
//!   pub sensing/points 65536 on on_scan
//!   compute uniform 1 2.5
//! node filter
//!   sub sensing/points on_points depth=1 best_effort
//!   pub filtered 4096 on on_points
//!   compute fixed 3
//! node ekf
//!   sub filtered on_pose
//!   timer 20 on_predict reads filtered
//! module sensing: lidar
//! module localization: filter,ekf
//! ```
//!
//! Durations are milliseconds with up to six decimals (nanosecond
//! resolution). Payload sizes accept an optional `B`/`KB`/`MB` suffix
//! (binary multiples). `lognormal <mu> <sigma>` draws `exp(N(mu, sigma))` ms.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use super::types::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub kind: ConfigErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("invalid value: {0}")]
    Invalid(String),
}

/// Parse a payload size such as `1024`, `1KB`, `8MB` or `0.92MB`.
pub fn parse_size(text: &str) -> Option<usize> {
    let t = text.trim();
    let upper = t.to_ascii_uppercase();
    let (num, mult) = if let Some(n) = upper.strip_suffix("MB") {
        (n, 1024.0 * 1024.0)
    } else if let Some(n) = upper.strip_suffix("KB") {
        (n, 1024.0)
    } else if let Some(n) = upper.strip_suffix('B') {
        (n, 1.0)
    } else {
        (upper.as_str(), 1.0)
    };
    let value: f64 = num.trim().parse().ok()?;
    if !value.is_finite() || value < 0.0 {
        return None;
    }
    Some((value * mult).round() as usize)
}

/// Exact decimal milliseconds to nanoseconds.
pub fn parse_ms(text: &str) -> Option<u64> {
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if frac.len() > 6 || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let mut frac_ns = 0u64;
    for (i, c) in frac.chars().enumerate() {
        frac_ns += (c as u64 - '0' as u64) * 10u64.pow(5 - i as u32);
    }
    int.checked_mul(1_000_000)?.checked_add(frac_ns)
}

pub fn format_ms(ns: u64) -> String {
    let int = ns / 1_000_000;
    let frac = ns % 1_000_000;
    if frac == 0 {
        int.to_string()
    } else {
        let f = format!("{frac:06}");
        format!("{int}.{}", f.trim_end_matches('0'))
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/' | '~'))
}

struct Line<'a> {
    number: usize,
    raw: &'a str,
    tokens: Vec<(usize, &'a str)>,
}

impl<'a> Line<'a> {
    fn new(number: usize, raw: &'a str) -> Self {
        let content = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, c) in content.char_indices() {
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push((s, &content[s..i]));
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            tokens.push((s, &content[s..]));
        }
        Self {
            number,
            raw,
            tokens,
        }
    }

    fn err_at(&self, token: usize, kind: ConfigErrorKind) -> ConfigError {
        let column = self
            .tokens
            .get(token)
            .map(|(c, _)| c + 1)
            .unwrap_or_else(|| self.raw.trim_end().len() + 1);
        ConfigError {
            line: self.number,
            column,
            kind,
        }
    }

    fn syntax(&self, token: usize, msg: impl Into<String>) -> ConfigError {
        self.err_at(token, ConfigErrorKind::Syntax(msg.into()))
    }

    fn invalid(&self, token: usize, msg: impl Into<String>) -> ConfigError {
        self.err_at(token, ConfigErrorKind::Invalid(msg.into()))
    }

    fn tok(&self, i: usize) -> Option<&'a str> {
        self.tokens.get(i).map(|(_, t)| *t)
    }

    fn ident(&self, i: usize, what: &str) -> Result<&'a str, ConfigError> {
        match self.tok(i) {
            Some(t) if is_identifier(t) => Ok(t),
            Some(t) => Err(self.syntax(i, format!("`{t}` is not a valid {what}"))),
            None => Err(self.syntax(i, format!("expected {what}"))),
        }
    }

    fn ms(&self, i: usize, what: &str) -> Result<u64, ConfigError> {
        let t = self
            .tok(i)
            .ok_or_else(|| self.syntax(i, format!("expected {what} in ms")))?;
        parse_ms(t).ok_or_else(|| self.syntax(i, format!("`{t}` is not a duration in ms")))
    }

    fn float(&self, i: usize, what: &str) -> Result<f64, ConfigError> {
        let t = self
            .tok(i)
            .ok_or_else(|| self.syntax(i, format!("expected {what}")))?;
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.syntax(i, format!("`{t}` is not a finite number"))),
        }
    }

    fn end(&self, i: usize) -> Result<(), ConfigError> {
        match self.tok(i) {
            None => Ok(()),
            Some(t) => Err(self.syntax(i, format!("unexpected trailing `{t}`"))),
        }
    }
}

struct OpenNode {
    line: usize,
    spec: NodeSpec,
}

fn close_node(open: OpenNode) -> Result<NodeSpec, ConfigError> {
    let spec = open.spec;
    let at = |msg: String| ConfigError {
        line: open.line,
        column: 1,
        kind: ConfigErrorKind::Invalid(msg),
    };
    if spec.timers.is_empty() && spec.subscriptions.is_empty() {
        return Err(at(format!(
            "node `{}` has neither a timer nor a subscription",
            spec.name
        )));
    }
    for p in &spec.publications {
        if !spec.declares_callback(&p.trigger) {
            return Err(at(format!(
                "node `{}` publishes `{}` on undeclared callback `{}`",
                spec.name, p.topic, p.trigger
            )));
        }
    }
    Ok(spec)
}

/// Parse a `workload.spec` document. Subscriptions default to keep_last(1)
/// and best effort.
pub fn parse_workload_spec(text: &str) -> Result<WorkloadSpec, ConfigError> {
    let mut spec = WorkloadSpec::default();
    let mut names = HashSet::new();
    let mut current: Option<OpenNode> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = Line::new(idx + 1, raw);
        let Some(keyword) = line.tok(0) else { continue };
        match keyword {
            "node" => {
                let name = line.ident(1, "node name")?;
                line.end(2)?;
                if let Some(open) = current.take() {
                    spec.nodes.push(close_node(open)?);
                }
                if !names.insert(name.to_string()) {
                    return Err(line.err_at(1, ConfigErrorKind::DuplicateNode(name.into())));
                }
                current = Some(OpenNode {
                    line: line.number,
                    spec: NodeSpec::new(name),
                });
            }
            "timer" | "sub" | "pub" | "compute" => {
                let node = current
                    .as_mut()
                    .ok_or_else(|| line.syntax(0, format!("`{keyword}` outside a node section")))?;
                parse_node_line(&line, keyword, &mut node.spec)?;
            }
            "module" => {
                // `module name: a,b,c` with free spacing around ':' and ','
                let content = match raw.find('#') {
                    Some(i) => &raw[..i],
                    None => raw,
                };
                let rest = content.trim_start()["module".len()..].trim();
                let (name, list) = rest
                    .split_once(':')
                    .ok_or_else(|| line.syntax(1, "expected `module <name>: node,node,...`"))?;
                let name = name.trim();
                if !is_identifier(name) {
                    return Err(line.syntax(1, format!("`{name}` is not a valid module name")));
                }
                let mut nodes = Vec::new();
                for n in list.split(',').map(str::trim).filter(|n| !n.is_empty()) {
                    if !is_identifier(n) {
                        return Err(line.syntax(1, format!("`{n}` is not a valid node name")));
                    }
                    nodes.push(n.to_string());
                }
                if spec.manifest.module(name).is_some() {
                    return Err(line.invalid(1, format!("module `{name}` declared twice")));
                }
                spec.manifest.modules.push(ModuleEntry {
                    name: name.to_string(),
                    nodes,
                });
            }
            "param" => {
                let content = match raw.find('#') {
                    Some(i) => &raw[..i],
                    None => raw,
                };
                let rest = content.trim_start()["param".len()..].trim();
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| line.syntax(1, "expected `param <key>=<value>`"))?;
                let k = k.trim();
                if !is_identifier(k) {
                    return Err(line.syntax(1, format!("`{k}` is not a valid parameter key")));
                }
                spec.manifest
                    .launch_params
                    .insert(k.to_string(), v.trim().to_string());
            }
            other => {
                return Err(line.err_at(0, ConfigErrorKind::UnknownField(other.to_string())));
            }
        }
    }
    if let Some(open) = current.take() {
        spec.nodes.push(close_node(open)?);
    }
    Ok(spec)
}

fn parse_node_line(line: &Line<'_>, keyword: &str, node: &mut NodeSpec) -> Result<(), ConfigError> {
    match keyword {
        "timer" => {
            let period_ns = line.ms(1, "period")?;
            if period_ns == 0 {
                return Err(line.invalid(1, "timer period must be > 0"));
            }
            let callback = line.ident(2, "callback name")?.to_string();
            let reads = match line.tok(3) {
                None => None,
                Some("reads") => {
                    let t = line.ident(4, "topic")?.to_string();
                    line.end(5)?;
                    Some(t)
                }
                Some(other) => return Err(line.err_at(3, ConfigErrorKind::UnknownField(other.into()))),
            };
            node.timers.push(TimerSpec {
                period_ns,
                callback,
                reads,
            });
        }
        "sub" => {
            let topic = line.ident(1, "topic")?.to_string();
            let callback = line.ident(2, "callback name")?.to_string();
            let mut qos = QosPolicy::default();
            let mut i = 3;
            while let Some(t) = line.tok(i) {
                if let Some(d) = t.strip_prefix("depth=") {
                    qos.depth = d
                        .parse()
                        .map_err(|_| line.syntax(i, format!("`{d}` is not a queue depth")))?;
                    if qos.depth == 0 {
                        return Err(line.invalid(i, "queue depth must be >= 1"));
                    }
                } else if t == "best_effort" || t == "best-effort" {
                    qos.reliability = Reliability::BestEffort;
                } else if t == "reliable" {
                    qos.reliability = Reliability::Reliable;
                } else {
                    return Err(line.err_at(i, ConfigErrorKind::UnknownField(t.into())));
                }
                i += 1;
            }
            node.subscriptions.push(SubscriptionSpec {
                topic,
                callback,
                qos,
            });
        }
        "pub" => {
            let topic = line.ident(1, "topic")?.to_string();
            let size_tok = line.tok(2).ok_or_else(|| line.syntax(2, "expected payload size"))?;
            let payload_size = parse_size(size_tok)
                .ok_or_else(|| line.syntax(2, format!("`{size_tok}` is not a payload size")))?;
            match line.tok(3) {
                Some("on") => {}
                Some(other) => return Err(line.syntax(3, format!("expected `on`, found `{other}`"))),
                None => return Err(line.syntax(3, "expected `on <callback>`")),
            }
            let trigger = line.ident(4, "callback name")?.to_string();
            line.end(5)?;
            node.publications.push(PublicationSpec {
                topic,
                payload_size,
                trigger,
            });
        }
        "compute" => {
            let model = match line.tok(1) {
                Some("fixed") => {
                    let d = line.ms(2, "duration")?;
                    line.end(3)?;
                    ComputeModel::Fixed(d)
                }
                Some("uniform") => {
                    let lo = line.ms(2, "lower bound")?;
                    let hi = line.ms(3, "upper bound")?;
                    line.end(4)?;
                    if lo > hi {
                        return Err(line.invalid(2, "uniform compute needs lo <= hi"));
                    }
                    ComputeModel::Uniform { lo, hi }
                }
                Some("lognormal") => {
                    let mu = line.float(2, "mu")?;
                    let sigma = line.float(3, "sigma")?;
                    line.end(4)?;
                    if sigma < 0.0 {
                        return Err(line.invalid(3, "sigma must be >= 0"));
                    }
                    ComputeModel::LogNormal { mu, sigma }
                }
                Some(other) => return Err(line.err_at(1, ConfigErrorKind::UnknownField(other.into()))),
                None => return Err(line.syntax(1, "expected fixed|uniform|lognormal")),
            };
            node.compute = model;
        }
        _ => unreachable!(),
    }
    Ok(())
}

/// Canonical text form; `parse_workload_spec(&render_workload_spec(s)) == s`.
pub fn render_workload_spec(spec: &WorkloadSpec) -> String {
    let mut out = String::new();
    for (k, v) in &spec.manifest.launch_params {
        let _ = writeln!(out, "param {k}={v}");
    }
    for node in &spec.nodes {
        let _ = write!(out, "{}", NodeDisplay(node));
    }
    for m in &spec.manifest.modules {
        let _ = writeln!(out, "module {}: {}", m.name, m.nodes.join(","));
    }
    out
}

struct NodeDisplay<'a>(&'a NodeSpec);

impl fmt::Display for NodeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.0;
        writeln!(f, "node {}", n.name)?;
        for t in &n.timers {
            write!(f, "  timer {} {}", format_ms(t.period_ns), t.callback)?;
            if let Some(r) = &t.reads {
                write!(f, " reads {r}")?;
            }
            writeln!(f)?;
        }
        for s in &n.subscriptions {
            let rel = match s.qos.reliability {
                Reliability::BestEffort => "best_effort",
                Reliability::Reliable => "reliable",
            };
            writeln!(f, "  sub {} {} depth={} {rel}", s.topic, s.callback, s.qos.depth)?;
        }
        for p in &n.publications {
            writeln!(f, "  pub {} {} on {}", p.topic, p.payload_size, p.trigger)?;
        }
        match &n.compute {
            ComputeModel::Fixed(d) => writeln!(f, "  compute fixed {}", format_ms(*d)),
            ComputeModel::Uniform { lo, hi } => {
                writeln!(f, "  compute uniform {} {}", format_ms(*lo), format_ms(*hi))
            }
            ComputeModel::LogNormal { mu, sigma } => writeln!(f, "  compute lognormal {mu} {sigma}"),
        }
    }
}
