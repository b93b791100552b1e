//! Interconnect timing between the DMA and the cores.

use super::SimError;
use crate::arch::{ArchConfig, Topology};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Dma,
    Core(u32),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Dma => f.write_str("dma"),
            Node::Core(c) => write!(f, "core{c}"),
        }
    }
}

/// A serially occupied hardware resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    DmaRead,
    DmaWrite,
    Core(u32),
    /// The bus or the ring as a whole.
    Net,
    /// Crossbar input port.
    NetSrc(Node),
    /// Crossbar output port.
    NetDst(Node),
    /// Dedicated point-to-point link.
    Link(Node, Node),
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resource::DmaRead => f.write_str("dma_read"),
            Resource::DmaWrite => f.write_str("dma_write"),
            Resource::Core(c) => write!(f, "core{c}"),
            Resource::Net => f.write_str("net"),
            Resource::NetSrc(n) => write!(f, "net.src.{n}"),
            Resource::NetDst(n) => write!(f, "net.dst.{n}"),
            Resource::Link(a, b) => write!(f, "link.{a}->{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetTiming {
    pub duration: u64,
    pub first_word: u64,
    pub resources: Vec<Resource>,
}

fn ring_position(node: Node) -> u64 {
    match node {
        Node::Dma => 0,
        Node::Core(c) => c as u64 + 1,
    }
}

/// Hops from `src` to `dst` on the unidirectional ring DMA, core0, core1, ...
pub fn ring_hops(p: u32, src: Node, dst: Node) -> u64 {
    let n = p as u64 + 1;
    (ring_position(dst) + n - ring_position(src)) % n
}

/// Ring transfer time: the head travels `hops` links, the rest follows
/// pipelined one flit per cycle behind it.
pub fn ring_delay(hops: u64, hop_latency: u32, words: u64, link_width: u32) -> u64 {
    hops * hop_latency as u64 + words.div_ceil(link_width as u64)
}

/// Time and resources for moving `words` words from `source` to every node
/// in `dests`.
pub fn network_delay(
    cfg: &ArchConfig,
    source: Node,
    dests: &[u32],
    words: u64,
) -> Result<NetTiming, SimError> {
    if let Some(&bad) = dests.iter().find(|&&d| d >= cfg.num_cores) {
        return Err(SimError::UnknownDestination(bad));
    }
    let ic = &cfg.interconnect;
    let w = ic.link_width_words as u64;
    let hl = ic.hop_latency_cycles as u64;
    let xfer = words.div_ceil(w);
    let (duration, first_word, resources) = match ic.topology {
        Topology::BusBroadcast => (xfer, xfer.min(1), vec![Resource::Net]),
        Topology::Ring => {
            let hops = dests
                .iter()
                .map(|&d| ring_hops(cfg.num_cores, source, Node::Core(d)))
                .max()
                .unwrap_or(0);
            (
                ring_delay(hops, ic.hop_latency_cycles, words, ic.link_width_words),
                hops * hl + xfer.min(1),
                vec![Resource::Net],
            )
        }
        Topology::Crossbar => {
            let mut r = vec![Resource::NetSrc(source)];
            r.extend(dests.iter().map(|&d| Resource::NetDst(Node::Core(d))));
            (hl + xfer, hl + xfer.min(1), r)
        }
        Topology::PointToPoint => {
            let r = dests
                .iter()
                .map(|&d| Resource::Link(source, Node::Core(d)))
                .collect();
            (hl + xfer, hl + xfer.min(1), r)
        }
    };
    let (duration, first_word) = if words == 0 {
        (0, 0)
    } else {
        (duration, first_word)
    };
    Ok(NetTiming {
        duration,
        first_word,
        resources,
    })
}
