//! Programs: dependency-ordered transactions over external memory and
//! core-local buffers.

use std::collections::BTreeMap;
use std::fmt;

pub type TxnId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Dma,
    Core(u32),
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Dma => f.write_str("dma"),
            Owner::Core(c) => write!(f, "core{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferKind {
    /// Core local memory; counts against `local_mem_words`.
    Local,
    /// Core input buffer fed by the network.
    Input,
    /// DMA-side staging between a load and the network.
    Staging,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferDecl {
    pub owner: Owner,
    pub name: String,
    pub words: usize,
    pub kind: BufferKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BufId(pub usize);

/// A contiguous run of external-memory words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub addr: usize,
    pub len: usize,
}

impl Segment {
    pub fn new(addr: usize, len: usize) -> Self {
        Segment { addr, len }
    }
}

/// One copy performed by a network transfer, from the source buffer into a
/// destination core's buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub src_offset: usize,
    pub dst: BufId,
    pub dst_offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FmaOp {
    /// `c[i][j] += a[kk][i] * b[kk][j]` for `kk` in `0..z`, `i` in `0..y`,
    /// `j` in `0..x`, in that loop order. `a` holds `z` columns of `y` words
    /// (the order the elements arrive in), `b` is `z x x` row-major and `c`
    /// is `y x x` row-major. With `init` the block is cleared first.
    OuterProduct {
        a: BufId,
        b: BufId,
        c: BufId,
        y: usize,
        x: usize,
        z: usize,
        init: bool,
    },
    /// A column packet `[x_j, v0, r0, v1, r1, ...]` in `input`: for each
    /// pair, `acc[r / row_divisor] += v * x_j`.
    SparseColumn {
        input: BufId,
        input_offset: usize,
        pairs: usize,
        row_divisor: u32,
        acc: BufId,
    },
    /// `acc[0] += a[i] * b[i]` for `i` in `0..len`.
    Dot {
        a: BufId,
        b: BufId,
        acc: BufId,
        len: usize,
    },
}

impl FmaOp {
    pub fn count(&self) -> u64 {
        match *self {
            FmaOp::OuterProduct { y, x, z, .. } => (y * x * z) as u64,
            FmaOp::SparseColumn { pairs, .. } => pairs as u64,
            FmaOp::Dot { len, .. } => len as u64,
        }
    }

    pub fn buffers(&self) -> Vec<BufId> {
        match *self {
            FmaOp::OuterProduct { a, b, c, .. } => vec![a, b, c],
            FmaOp::SparseColumn { input, acc, .. } => vec![input, acc],
            FmaOp::Dot { a, b, acc, .. } => vec![a, b, acc],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Gather words from external memory into a DMA staging buffer or
    /// straight into a buffer.
    DmaLoad {
        src: Vec<Segment>,
        dst: BufId,
        dst_offset: usize,
    },
    /// Scatter a contiguous buffer range to external memory.
    DmaStore {
        src: BufId,
        src_offset: usize,
        dst: Vec<Segment>,
    },
    /// Network transfer of `words` words from `src` to the cores in `dests`.
    Broadcast {
        src: BufId,
        dests: Vec<u32>,
        words: usize,
        deliveries: Vec<Delivery>,
    },
    ComputeFma {
        core: u32,
        op: FmaOp,
    },
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    DmaLoad,
    DmaStore,
    Broadcast,
    ComputeFma,
    Barrier,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Action {
    pub fn kind(&self) -> Kind {
        match self {
            Action::DmaLoad { .. } => Kind::DmaLoad,
            Action::DmaStore { .. } => Kind::DmaStore,
            Action::Broadcast { .. } => Kind::Broadcast,
            Action::ComputeFma { .. } => Kind::ComputeFma,
            Action::Barrier => Kind::Barrier,
        }
    }

    /// Payload in words (FMAs for compute bursts).
    pub fn payload(&self) -> u64 {
        match self {
            Action::DmaLoad { src, .. } => src.iter().map(|s| s.len as u64).sum(),
            Action::DmaStore { dst, .. } => dst.iter().map(|s| s.len as u64).sum(),
            Action::Broadcast { words, .. } => *words as u64,
            Action::ComputeFma { op, .. } => op.count(),
            Action::Barrier => 0,
        }
    }
}

/// Which point of a predecessor a dependency waits for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DepPoint {
    /// The whole payload has been delivered.
    Done,
    /// The first word is available (forwarded ahead of the rest).
    FirstWord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dep {
    pub id: TxnId,
    pub on: DepPoint,
}

impl Dep {
    pub fn done(id: TxnId) -> Self {
        Dep {
            id,
            on: DepPoint::Done,
        }
    }

    pub fn first_word(id: TxnId) -> Self {
        Dep {
            id,
            on: DepPoint::FirstWord,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: TxnId,
    pub deps: Vec<Dep>,
    pub action: Action,
}

impl Transaction {
    pub fn kind(&self) -> Kind {
        self.action.kind()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub name: String,
    pub meta: BTreeMap<String, String>,
    pub buffers: Vec<BufferDecl>,
    pub txns: Vec<Transaction>,
    /// Memory regions holding the result of the program.
    pub outputs: Vec<String>,
}

impl Program {
    pub fn new(name: &str) -> Self {
        Program {
            name: name.to_string(),
            ..Program::default()
        }
    }

    pub fn buffer(&mut self, owner: Owner, name: &str, words: usize, kind: BufferKind) -> BufId {
        self.buffers.push(BufferDecl {
            owner,
            name: name.to_string(),
            words,
            kind,
        });
        BufId(self.buffers.len() - 1)
    }

    /// Appends a transaction and returns its id.
    pub fn push(&mut self, action: Action, deps: Vec<Dep>) -> TxnId {
        let id = self.txns.len();
        self.txns.push(Transaction { id, deps, action });
        id
    }

    pub fn len(&self) -> usize {
        self.txns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_empty()
    }

    pub fn fma_count(&self) -> u64 {
        self.txns
            .iter()
            .filter_map(|t| match &t.action {
                Action::ComputeFma { op, .. } => Some(op.count()),
                _ => None,
            })
            .sum()
    }

    /// Local-memory words declared per core.
    pub fn local_footprint(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for b in &self.buffers {
            if let (Owner::Core(c), BufferKind::Local) = (b.owner, b.kind) {
                *m.entry(c).or_insert(0) += b.words;
            }
        }
        m
    }
}
