//! DMA burst cache.
//!
//! Every read the DMA issues goes through a small fully associative cache.
//! A miss fetches a burst of `cacheline_words` sequential words starting at
//! the requested address, and the requested word is forwarded as soon as it
//! arrives rather than at the end of the burst. Lines are replaced in FIFO
//! order; hits never touch the replacement order.

use crate::arch::DmaConfig;
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Line {
    base: usize,
    /// Absolute cycle at which the burst started arriving.
    fill_start: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmaCacheState {
    capacity: usize,
    line_words: usize,
    /// Oldest line at the front.
    lines: VecDeque<Line>,
}

impl DmaCacheState {
    pub fn new(cachelines: u32, cacheline_words: u32) -> Self {
        DmaCacheState {
            capacity: cachelines as usize,
            line_words: cacheline_words as usize,
            lines: VecDeque::with_capacity(cachelines as usize),
        }
    }

    pub fn from_config(dma: &DmaConfig) -> Self {
        Self::new(dma.cachelines, dma.cacheline_words)
    }

    fn find(&self, addr: usize) -> Option<&Line> {
        self.lines
            .iter()
            .find(|l| addr >= l.base && addr < l.base + self.line_words)
    }

    pub fn contains(&self, addr: usize) -> bool {
        self.find(addr).is_some()
    }

    /// Base addresses of the valid lines, oldest first.
    pub fn tags(&self) -> Vec<usize> {
        self.lines.iter().map(|l| l.base).collect()
    }

    pub fn valid_lines(&self) -> usize {
        self.lines.len()
    }

    fn install(&mut self, base: usize, fill_start: f64) {
        if self.lines.len() == self.capacity {
            self.lines.pop_front();
        }
        self.lines.push_back(Line { base, fill_start });
    }
}

/// One standalone cache access: the outcome, the cycles it costs, and the
/// state afterwards. A hit costs one word transfer; a miss costs the memory
/// latency plus the whole burst.
pub fn cache_access(
    state: &DmaCacheState,
    dma: &DmaConfig,
    addr: usize,
) -> (Outcome, u64, DmaCacheState) {
    let mut next = state.clone();
    if state.contains(addr) {
        let cycles = (1.0 / dma.read_words_per_cycle).ceil() as u64;
        (Outcome::Hit, cycles, next)
    } else {
        next.install(addr, 0.0);
        (
            Outcome::Miss,
            dma.mem_latency_cycles as u64 + dma.burst_cycles(),
            next,
        )
    }
}

/// Timing of one DMA read transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadTiming {
    /// Cycles from start until the first requested word is available.
    pub first_word: u64,
    /// Cycles the read channel is occupied delivering the payload.
    pub duration: u64,
    pub hits: u64,
    pub misses: u64,
}

/// Width of the DMA datapath that feeds staging buffers.
pub const DELIVERY_WORDS_PER_CYCLE: f64 = 1.0;

/// The read side of the DMA: burst cache plus the memory port behind it.
///
/// The DMA hands out [`DELIVERY_WORDS_PER_CYCLE`] words per cycle; bursts
/// from external memory fill lines at `read_words_per_cycle`. A miss starts a burst once the
/// memory port is free; the burst pays `mem_latency_cycles` unless it
/// continues a sequential stream, in which case the port had it in flight
/// already. Later words of a line are available as the burst streams in.
///
/// A stream is a run of requests to consecutive addresses. The port tracks
/// the last address of up to `cachelines` streams, independently of which
/// lines are still cached, so a slow stream interleaved with fast ones keeps
/// its latency hidden even after its line was evicted.
#[derive(Debug, Clone)]
pub struct DmaReadPort {
    cfg: DmaConfig,
    cache: DmaCacheState,
    mem_free: f64,
    /// Last requested address of each tracked stream, least recent first.
    streams: VecDeque<usize>,
}

impl DmaReadPort {
    pub fn new(cfg: &DmaConfig) -> Self {
        DmaReadPort {
            cfg: *cfg,
            cache: DmaCacheState::from_config(cfg),
            mem_free: 0.0,
            streams: VecDeque::with_capacity(cfg.cachelines as usize),
        }
    }

    pub fn cache(&self) -> &DmaCacheState {
        &self.cache
    }

    /// Records a request; true if it continues a tracked stream.
    fn follow(&mut self, addr: usize) -> bool {
        let hit = addr
            .checked_sub(1)
            .and_then(|prev| self.streams.iter().position(|&a| a == prev));
        if let Some(i) = hit {
            self.streams.remove(i);
        }
        // streams that meet at one address merge
        self.streams.retain(|&a| a != addr);
        if self.streams.len() >= self.cfg.cachelines as usize {
            self.streams.pop_front();
        }
        self.streams.push_back(addr);
        hit.is_some()
    }

    /// Delivers `addrs` in order starting at absolute cycle `start`.
    pub fn load(&mut self, start: u64, addrs: impl IntoIterator<Item = usize>) -> LoadTiming {
        let word = 1.0 / DELIVERY_WORDS_PER_CYCLE;
        let mem_word = 1.0 / self.cfg.read_words_per_cycle;
        let lat = self.cfg.mem_latency_cycles as f64;
        let burst = self.cfg.cacheline_words as f64 * mem_word;
        let t0 = start as f64;
        let mut t = t0;
        let mut first = None;
        let mut timing = LoadTiming::default();
        for addr in addrs {
            let streaming = self.follow(addr);
            if let Some(line) = self.cache.find(addr) {
                let avail = line.fill_start + (addr - line.base + 1) as f64 * mem_word;
                t = (t + word).max(avail);
                timing.hits += 1;
            } else {
                let issue = t.max(self.mem_free) + if streaming { 0.0 } else { lat };
                self.cache.install(addr, issue);
                self.mem_free = issue + burst;
                t = issue + word.max(mem_word);
                timing.misses += 1;
            }
            first.get_or_insert(t);
        }
        timing.first_word = (first.unwrap_or(t0) - t0).ceil() as u64;
        timing.duration = (t - t0).ceil() as u64;
        timing
    }
}
