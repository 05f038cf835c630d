//! Inter-process framing.
//!
//! Every datagram starts with a 24-byte big-endian header:
//!
//! | bytes | field          |
//! |-------|----------------|
//! | 0..8  | topic hash u64 |
//! | 8..16 | seq u64        |
//! | 16..18| fragment index |
//! | 18..20| fragment count |
//! | 20..24| flags u32      |
//!
//! followed by the fragment's payload bytes. Fragment 0 additionally ends
//! with the 8-byte publish timestamp (ns). Acks are 16 bytes: topic hash
//! and seq.

use std::collections::HashMap;
use std::net::SocketAddr;

pub const HEADER_LEN: usize = 24;
pub const TRAILER_LEN: usize = 8;
pub const ACK_LEN: usize = 16;
/// Largest fragment payload (60 KiB); header and trailer come on top.
pub const MAX_FRAGMENT_PAYLOAD: usize = 60 * 1024;
/// Partial messages older than this are discarded.
pub const REASSEMBLY_WINDOW_NS: u64 = 100_000_000;

pub const FLAG_RELIABLE: u32 = 1;

/// FNV-1a: stable across processes and builds.
pub fn topic_hash(topic: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in topic.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentHeader {
    pub topic_hash: u64,
    pub seq: u64,
    pub index: u16,
    pub count: u16,
    pub flags: u32,
}

impl FragmentHeader {
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.topic_hash.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.index.to_be_bytes());
        out.extend_from_slice(&self.count.to_be_bytes());
        out.extend_from_slice(&self.flags.to_be_bytes());
    }

    pub fn decode(buf: &[u8]) -> Option<Self> {
        if buf.len() < HEADER_LEN {
            return None;
        }
        let h = FragmentHeader {
            topic_hash: u64::from_be_bytes(buf[0..8].try_into().ok()?),
            seq: u64::from_be_bytes(buf[8..16].try_into().ok()?),
            index: u16::from_be_bytes(buf[16..18].try_into().ok()?),
            count: u16::from_be_bytes(buf[18..20].try_into().ok()?),
            flags: u32::from_be_bytes(buf[20..24].try_into().ok()?),
        };
        (h.count > 0 && h.index < h.count).then_some(h)
    }
}

/// Split one message into datagrams.
pub fn fragment(
    topic_hash: u64,
    seq: u64,
    publish_ts: u64,
    flags: u32,
    payload: &[u8],
    max_fragment: usize,
) -> Vec<Vec<u8>> {
    let max_fragment = max_fragment.clamp(1, MAX_FRAGMENT_PAYLOAD);
    let count = payload.len().div_ceil(max_fragment).max(1);
    assert!(count <= u16::MAX as usize, "payload too large to fragment");
    (0..count)
        .map(|i| {
            let chunk = &payload[(i * max_fragment).min(payload.len())
                ..((i + 1) * max_fragment).min(payload.len())];
            let mut d = Vec::with_capacity(HEADER_LEN + chunk.len() + TRAILER_LEN);
            FragmentHeader {
                topic_hash,
                seq,
                index: i as u16,
                count: count as u16,
                flags,
            }
            .encode(&mut d);
            d.extend_from_slice(chunk);
            if i == 0 {
                d.extend_from_slice(&publish_ts.to_be_bytes());
            }
            d
        })
        .collect()
}

pub fn encode_ack(topic_hash: u64, seq: u64) -> [u8; ACK_LEN] {
    let mut a = [0u8; ACK_LEN];
    a[..8].copy_from_slice(&topic_hash.to_be_bytes());
    a[8..].copy_from_slice(&seq.to_be_bytes());
    a
}

pub fn decode_ack(buf: &[u8]) -> Option<(u64, u64)> {
    if buf.len() != ACK_LEN {
        return None;
    }
    Some((
        u64::from_be_bytes(buf[..8].try_into().ok()?),
        u64::from_be_bytes(buf[8..].try_into().ok()?),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reassembled {
    pub source: SocketAddr,
    pub topic_hash: u64,
    pub seq: u64,
    pub flags: u32,
    pub publish_ts: u64,
    pub payload: Vec<u8>,
}

struct Partial {
    first_seen: u64,
    flags: u32,
    publish_ts: Option<u64>,
    chunks: Vec<Option<Vec<u8>>>,
    missing: usize,
}

/// Collects fragments per `(source, topic, seq)`. Retransmitted copies fill
/// holes of an existing partial message.
#[derive(Default)]
pub struct Reassembler {
    partial: HashMap<(SocketAddr, u64, u64), Partial>,
    expired: u64,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, source: SocketAddr, datagram: &[u8], now: u64) -> Option<Reassembled> {
        let h = FragmentHeader::decode(datagram)?;
        let mut body = &datagram[HEADER_LEN..];
        let mut ts = None;
        if h.index == 0 {
            if body.len() < TRAILER_LEN {
                return None;
            }
            let split = body.len() - TRAILER_LEN;
            ts = Some(u64::from_be_bytes(body[split..].try_into().ok()?));
            body = &body[..split];
        }
        if h.count == 1 {
            return Some(Reassembled {
                source,
                topic_hash: h.topic_hash,
                seq: h.seq,
                flags: h.flags,
                publish_ts: ts?,
                payload: body.to_vec(),
            });
        }
        let key = (source, h.topic_hash, h.seq);
        let p = self.partial.entry(key).or_insert_with(|| Partial {
            first_seen: now,
            flags: h.flags,
            publish_ts: None,
            chunks: vec![None; h.count as usize],
            missing: h.count as usize,
        });
        if p.chunks.len() != h.count as usize {
            return None;
        }
        if ts.is_some() {
            p.publish_ts = ts;
        }
        let slot = &mut p.chunks[h.index as usize];
        if slot.is_none() {
            *slot = Some(body.to_vec());
            p.missing -= 1;
        }
        if p.missing > 0 {
            return None;
        }
        let p = self.partial.remove(&key)?;
        let total: usize = p.chunks.iter().map(|c| c.as_ref().map_or(0, Vec::len)).sum();
        let mut payload = Vec::with_capacity(total);
        for c in p.chunks.into_iter().flatten() {
            payload.extend_from_slice(&c);
        }
        Some(Reassembled {
            source,
            topic_hash: h.topic_hash,
            seq: h.seq,
            flags: p.flags,
            publish_ts: p.publish_ts?,
            payload,
        })
    }

    /// Drop partial messages older than the reassembly window.
    pub fn expire(&mut self, now: u64) -> u64 {
        let before = self.partial.len();
        self.partial
            .retain(|_, p| now.saturating_sub(p.first_seen) < REASSEMBLY_WINDOW_NS);
        let n = (before - self.partial.len()) as u64;
        self.expired += n;
        n
    }

    pub fn expired(&self) -> u64 {
        self.expired
    }

    pub fn pending(&self) -> usize {
        self.partial.len()
    }
}
