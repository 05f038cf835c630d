//! `chain.spec`: one callback signature per line.
//!
//! ```text
//! # optional "(index)" prefixes are accepted and ignored
//! (2) EKFLocalizer::(PoseWithCovarianceStamped)
//! (3) EKFLocalizer::()
//! ```
//!
//! Empty parentheses denote a timer callback; anything else is a
//! subscription callback whose signature is kept as an opaque label.

use std::fmt::Write as _;

use thiserror::Error;

use super::config::is_identifier;
use super::types::{ChainHop, ChainSpec, HopKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("line {line}: malformed hop `{text}`: {reason}")]
    Malformed {
        line: usize,
        text: String,
        reason: &'static str,
    },
    #[error("line {line}: timer hop `{node}::()` must follow a hop on the same node")]
    TimerWithoutPredecessor { line: usize, node: String },
    #[error("chain has no hops")]
    Empty,
}

pub fn parse_chain_spec(text: &str) -> Result<ChainSpec, ChainError> {
    let mut hops: Vec<ChainHop> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let mut s = content.trim();
        if s.is_empty() {
            continue;
        }
        let malformed = |reason| ChainError::Malformed {
            line: line_no,
            text: s.to_string(),
            reason,
        };
        if s.starts_with('(') {
            // "(12) Node::(Sig)" index prefix
            let close = s.find(')').ok_or_else(|| malformed("unterminated index prefix"))?;
            if !s[1..close].trim().chars().all(|c| c.is_ascii_digit()) {
                return Err(malformed("index prefix must be a number"));
            }
            s = s[close + 1..].trim_start();
        }
        let (node, sig) = s.split_once("::").ok_or_else(|| malformed("expected `Node::(Sig)`"))?;
        let node = node.trim();
        if !is_identifier(node) {
            return Err(malformed("invalid node name"));
        }
        let sig = sig.trim();
        let inner = sig
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| malformed("signature must be parenthesised"))?
            .trim();
        if inner.contains('(') || inner.contains(')') {
            return Err(malformed("nested parentheses in signature"));
        }
        let kind = if inner.is_empty() {
            match hops.last() {
                Some(prev) if prev.node == node => HopKind::Timer,
                _ => {
                    return Err(ChainError::TimerWithoutPredecessor {
                        line: line_no,
                        node: node.to_string(),
                    })
                }
            }
        } else {
            let signature = inner
                .split(',')
                .map(str::trim)
                .collect::<Vec<_>>()
                .join(",");
            HopKind::Subscription {
                signature,
                topic: None,
            }
        };
        hops.push(ChainHop {
            node: node.to_string(),
            kind,
            output_topic: None,
        });
    }
    if hops.is_empty() {
        return Err(ChainError::Empty);
    }
    Ok(ChainSpec {
        hops,
        sensor_topic: None,
    })
}

/// Render with `(index)` prefixes, one hop per line.
pub fn render_chain_spec(chain: &ChainSpec) -> String {
    let mut out = String::new();
    for (i, hop) in chain.hops.iter().enumerate() {
        let sig = match &hop.kind {
            HopKind::Subscription { signature, .. } => signature.as_str(),
            HopKind::Timer => "",
        };
        let _ = writeln!(out, "({i}) {}::({sig})", hop.node);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timer_hop_links_to_same_node() {
        let chain = parse_chain_spec(
            "EKFLocalizer::(PoseWithCovarianceStamped)\nEKFLocalizer::()\n",
        )
        .unwrap();
        assert_eq!(chain.hops.len(), 2);
        assert!(!chain.hops[0].is_timer());
        assert!(chain.hops[1].is_timer());
        assert_eq!(chain.hops[1].node, chain.hops[0].node);
    }

    #[test]
    fn timer_first_is_error() {
        assert_eq!(
            parse_chain_spec("Controller::()\n"),
            Err(ChainError::TimerWithoutPredecessor {
                line: 1,
                node: "Controller".into()
            })
        );
        assert!(matches!(
            parse_chain_spec("A::(X)\nB::()\n"),
            Err(ChainError::TimerWithoutPredecessor { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse_chain_spec("Filter(PointCloud2)"), Err(ChainError::Malformed { .. })));
        assert!(matches!(parse_chain_spec("Filter::PointCloud2"), Err(ChainError::Malformed { .. })));
        assert!(matches!(parse_chain_spec("(x) A::(B)"), Err(ChainError::Malformed { .. })));
        assert_eq!(parse_chain_spec("# nothing\n\n"), Err(ChainError::Empty));
    }

    #[test]
    fn multi_type_signature_and_round_trip() {
        let chain = parse_chain_spec("(0) Filter::(PointCloud2, PointIndices)  # sensor\n").unwrap();
        match &chain.hops[0].kind {
            HopKind::Subscription { signature, .. } => assert_eq!(signature, "PointCloud2,PointIndices"),
            _ => panic!(),
        }
        assert_eq!(parse_chain_spec(&render_chain_spec(&chain)).unwrap(), chain);
    }
}
