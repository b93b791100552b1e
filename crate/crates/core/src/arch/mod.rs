//! Architecture parameter space of the many-core overlay.
//!
//! An [`ArchConfig`] describes one instance of the overlay: how many cores
//! there are and how they are grouped into clusters, how much local memory
//! each core owns, the interconnect between the DMA and the cores, and the
//! DMA itself (burst cache plus independent read and write channels).
//!
//! Configurations are exchanged as flat JSON documents. Every key is
//! optional except `num_cores`, `local_mem_words` and `clock_hz`; omitted keys
//! take the defaults listed on [`ArchConfig::default`] and [`DmaConfig::default`].

mod resources;

pub use resources::{estimate_resources, peak_flops, ResourceEstimate, CALIBRATED_CORES};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Size of one machine word in bytes. Everything is single precision.
pub const WORD_BYTES: u32 = 4;

/// Smallest local memory able to hold a doubled 1x1 B buffer, a 1x1 C block
/// and one temporary.
pub const MIN_LOCAL_MEM_WORDS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Single shared bus; one transfer reaches every destination at once.
    BusBroadcast,
    /// Unidirectional ring starting at the DMA node, pipelined links.
    Ring,
    /// Full crossbar, one port per node.
    Crossbar,
    /// Dedicated links between every pair of nodes.
    PointToPoint,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Topology::BusBroadcast => "bus_broadcast",
            Topology::Ring => "ring",
            Topology::Crossbar => "crossbar",
            Topology::PointToPoint => "point_to_point",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interconnect {
    pub topology: Topology,
    pub hop_latency_cycles: u32,
    pub link_width_words: u32,
}

impl Default for Interconnect {
    fn default() -> Self {
        Interconnect {
            topology: Topology::BusBroadcast,
            hop_latency_cycles: 1,
            link_width_words: 1,
        }
    }
}

/// External-memory DMA engine with a fully associative burst cache.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmaConfig {
    pub cachelines: u32,
    pub cacheline_words: u32,
    pub read_words_per_cycle: f64,
    pub write_words_per_cycle: f64,
    /// Cycles from issuing a non-sequential burst to its first word.
    pub mem_latency_cycles: u32,
}

/// Calibrated first-word latency of the external memory, in cycles.
///
/// Tuned against the reference dense matrix-multiplication cycle counts;
/// see the calibration chapter of the book.
pub const CALIBRATED_MEM_LATENCY: u32 = 160;

/// Calibrated external-memory burst bandwidth, in words per cycle. Tuned
/// against the reference sparse timings. The DMA still hands out one word
/// per cycle.
pub const CALIBRATED_READ_WORDS_PER_CYCLE: f64 = 4.0;

impl Default for DmaConfig {
    fn default() -> Self {
        DmaConfig {
            cachelines: 16,
            cacheline_words: 16,
            read_words_per_cycle: CALIBRATED_READ_WORDS_PER_CYCLE,
            write_words_per_cycle: 1.0,
            mem_latency_cycles: CALIBRATED_MEM_LATENCY,
        }
    }
}

impl DmaConfig {
    /// Cycles the memory side is busy fetching one full line.
    pub fn burst_cycles(&self) -> u64 {
        (self.cacheline_words as f64 / self.read_words_per_cycle).ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub num_cores: u32,
    pub cores_per_cluster: u32,
    /// Local memory per core, in words.
    pub local_mem_words: u32,
    pub cluster_shared_mem_words: u32,
    pub clock_hz: u64,
    pub interconnect: Interconnect,
    pub dma: DmaConfig,
    pub fma_latency_cycles: u32,
    /// Depth of each core's input buffer, in packets.
    pub input_fifo_depth: u32,
}

impl Default for ArchConfig {
    /// The 16-core, 32 KB-per-core, 250 MHz instance.
    fn default() -> Self {
        ArchConfig {
            num_cores: 16,
            cores_per_cluster: 16,
            local_mem_words: 8192,
            cluster_shared_mem_words: 0,
            clock_hz: 250_000_000,
            interconnect: Interconnect::default(),
            dma: DmaConfig::default(),
            fma_latency_cycles: 5,
            input_fifo_depth: 8,
        }
    }
}

/// A broken invariant: which field, and which rule it breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// The on-disk document: one flat object, every key optional.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_cores: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cores_per_cluster: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_mem_words: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_shared_mem_words: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clock_hz: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interconnect: Option<Topology>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hop_latency_cycles: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link_width_words: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cachelines: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cacheline_words: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub read_words_per_cycle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub write_words_per_cycle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mem_latency_cycles: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fma_latency_cycles: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_fifo_depth: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_bytes: Option<u32>,
}

/// Keys accepted in a configuration document, in canonical order.
pub const CONFIG_KEYS: &[&str] = &[
    "num_cores",
    "cores_per_cluster",
    "local_mem_words",
    "cluster_shared_mem_words",
    "clock_hz",
    "interconnect",
    "hop_latency_cycles",
    "link_width_words",
    "cachelines",
    "cacheline_words",
    "read_words_per_cycle",
    "write_words_per_cycle",
    "mem_latency_cycles",
    "fma_latency_cycles",
    "input_fifo_depth",
    "word_bytes",
];

impl ConfigDocument {
    fn into_config(self) -> Result<ArchConfig, ConfigError> {
        let mut missing = Vec::new();
        if self.num_cores.is_none() {
            missing.push("num_cores");
        }
        if self.local_mem_words.is_none() {
            missing.push("local_mem_words");
        }
        if self.clock_hz.is_none() {
            missing.push("clock_hz");
        }
        if !missing.is_empty() {
            return Err(ConfigError::Invalid(
                missing
                    .into_iter()
                    .map(|field| Violation {
                        field,
                        rule: "required key is missing".into(),
                    })
                    .collect(),
            ));
        }
        if let Some(b) = self.word_bytes {
            if b != WORD_BYTES {
                return Err(ConfigError::Invalid(vec![Violation {
                    field: "word_bytes",
                    rule: format!("word size is fixed at {WORD_BYTES} bytes"),
                }]));
            }
        }
        let num_cores = self.num_cores.unwrap();
        let d = ArchConfig::default();
        let dma = DmaConfig::default();
        let ic = Interconnect::default();
        Ok(ArchConfig {
            num_cores,
            cores_per_cluster: self.cores_per_cluster.unwrap_or(num_cores),
            local_mem_words: self.local_mem_words.unwrap(),
            cluster_shared_mem_words: self
                .cluster_shared_mem_words
                .unwrap_or(d.cluster_shared_mem_words),
            clock_hz: self.clock_hz.unwrap(),
            interconnect: Interconnect {
                topology: self.interconnect.unwrap_or(ic.topology),
                hop_latency_cycles: self.hop_latency_cycles.unwrap_or(ic.hop_latency_cycles),
                link_width_words: self.link_width_words.unwrap_or(ic.link_width_words),
            },
            dma: DmaConfig {
                cachelines: self.cachelines.unwrap_or(dma.cachelines),
                cacheline_words: self.cacheline_words.unwrap_or(dma.cacheline_words),
                read_words_per_cycle: self
                    .read_words_per_cycle
                    .unwrap_or(dma.read_words_per_cycle),
                write_words_per_cycle: self
                    .write_words_per_cycle
                    .unwrap_or(dma.write_words_per_cycle),
                mem_latency_cycles: self.mem_latency_cycles.unwrap_or(dma.mem_latency_cycles),
            },
            fma_latency_cycles: self.fma_latency_cycles.unwrap_or(d.fma_latency_cycles),
            input_fifo_depth: self.input_fifo_depth.unwrap_or(d.input_fifo_depth),
        })
    }
}

impl From<&ArchConfig> for ConfigDocument {
    fn from(c: &ArchConfig) -> Self {
        ConfigDocument {
            num_cores: Some(c.num_cores),
            cores_per_cluster: Some(c.cores_per_cluster),
            local_mem_words: Some(c.local_mem_words),
            cluster_shared_mem_words: Some(c.cluster_shared_mem_words),
            clock_hz: Some(c.clock_hz),
            interconnect: Some(c.interconnect.topology),
            hop_latency_cycles: Some(c.interconnect.hop_latency_cycles),
            link_width_words: Some(c.interconnect.link_width_words),
            cachelines: Some(c.dma.cachelines),
            cacheline_words: Some(c.dma.cacheline_words),
            read_words_per_cycle: Some(c.dma.read_words_per_cycle),
            write_words_per_cycle: Some(c.dma.write_words_per_cycle),
            mem_latency_cycles: Some(c.dma.mem_latency_cycles),
            fma_latency_cycles: Some(c.fma_latency_cycles),
            input_fifo_depth: Some(c.input_fifo_depth),
            word_bytes: Some(WORD_BYTES),
        }
    }
}

/// Parses a JSON configuration document, fills defaults and checks every
/// invariant.
pub fn parse_config(text: &str) -> Result<ArchConfig, ConfigError> {
    let doc: ConfigDocument = serde_json::from_str(text).map_err(classify_json_error)?;
    let cfg = doc.into_config()?;
    let violations = validate(&cfg);
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

pub fn load_config(path: &std::path::Path) -> Result<ArchConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

fn classify_json_error(e: serde_json::Error) -> ConfigError {
    let msg = e.to_string();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return ConfigError::UnknownKey(rest[..end].to_string());
        }
    }
    match e.classify() {
        serde_json::error::Category::Data => ConfigError::Value(msg),
        _ => ConfigError::Syntax {
            line: e.line(),
            column: e.column(),
            msg,
        },
    }
}

/// Canonical pretty-printed document with every key present.
pub fn serialize_config(cfg: &ArchConfig) -> String {
    let mut s = serde_json::to_string_pretty(&ConfigDocument::from(cfg))
        .expect("config document serializes");
    s.push('\n');
    s
}

/// Replaces keys of `cfg` as if they had been written in its document, then
/// revalidates the result as a whole.
pub fn with_overrides<'a>(
    cfg: &ArchConfig,
    overrides: impl IntoIterator<Item = (&'a str, &'a serde_json::Value)>,
) -> Result<ArchConfig, ConfigError> {
    let mut doc =
        serde_json::to_value(ConfigDocument::from(cfg)).expect("config document serializes");
    for (key, value) in overrides {
        if !CONFIG_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        doc[key] = value.clone();
    }
    parse_config(&doc.to_string())
}

pub fn with_override(
    cfg: &ArchConfig,
    key: &str,
    value: &serde_json::Value,
) -> Result<ArchConfig, ConfigError> {
    with_overrides(cfg, [(key, value)])
}

/// Checks every invariant; an empty list means the configuration is valid.
pub fn validate(cfg: &ArchConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut check = |ok: bool, field: &'static str, rule: String| {
        if !ok {
            v.push(Violation { field, rule });
        }
    };
    check(
        cfg.num_cores >= 1,
        "num_cores",
        "num_cores must be ≥ 1".into(),
    );
    check(
        cfg.cores_per_cluster >= 1,
        "cores_per_cluster",
        "cores_per_cluster must be ≥ 1".into(),
    );
    if cfg.num_cores >= 1 && cfg.cores_per_cluster >= 1 {
        check(
            cfg.num_cores.is_multiple_of(cfg.cores_per_cluster),
            "num_cores",
            "num_cores not a multiple of cores_per_cluster".into(),
        );
    }
    check(
        cfg.local_mem_words >= MIN_LOCAL_MEM_WORDS,
        "local_mem_words",
        format!("local_mem_words below minimum {MIN_LOCAL_MEM_WORDS}"),
    );
    check(cfg.clock_hz >= 1, "clock_hz", "clock_hz must be ≥ 1".into());
    check(
        cfg.interconnect.hop_latency_cycles >= 1,
        "hop_latency_cycles",
        "hop_latency_cycles must be ≥ 1".into(),
    );
    check(
        cfg.interconnect.link_width_words >= 1,
        "link_width_words",
        "link_width_words must be ≥ 1".into(),
    );
    check(
        cfg.fma_latency_cycles >= 1,
        "fma_latency_cycles",
        "fma_latency_cycles must be ≥ 1".into(),
    );
    check(
        cfg.input_fifo_depth >= 1,
        "input_fifo_depth",
        "input_fifo_depth must be ≥ 1".into(),
    );
    check(
        cfg.dma.cachelines >= 1,
        "cachelines",
        "cachelines must be ≥ 1".into(),
    );
    check(
        cfg.dma.cacheline_words >= 1,
        "cacheline_words",
        "cacheline_words must be ≥ 1".into(),
    );
    let rate_ok = |r: f64| r.is_finite() && r > 0.0;
    check(
        rate_ok(cfg.dma.read_words_per_cycle),
        "read_words_per_cycle",
        "read_words_per_cycle must be a positive finite rate".into(),
    );
    check(
        rate_ok(cfg.dma.write_words_per_cycle),
        "write_words_per_cycle",
        "write_words_per_cycle must be a positive finite rate".into(),
    );
    v
}

impl ArchConfig {
    pub fn clusters(&self) -> u32 {
        self.num_cores / self.cores_per_cluster.max(1)
    }

    pub fn total_local_mem_words(&self) -> u64 {
        self.num_cores as u64 * self.local_mem_words as u64
    }

    /// The 32-core, 16 KB-per-core instance.
    pub fn baseline_32core() -> Self {
        ArchConfig {
            num_cores: 32,
            cores_per_cluster: 32,
            local_mem_words: 4096,
            ..ArchConfig::default()
        }
    }

    /// Two cores at 100 MHz, the sparse matrix-vector instance.
    pub fn spmv_2core() -> Self {
        ArchConfig {
            num_cores: 2,
            cores_per_cluster: 2,
            clock_hz: 100_000_000,
            ..ArchConfig::default()
        }
    }
}
