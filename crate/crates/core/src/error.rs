use thiserror::Error;

use crate::graph::NodeId;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite component at index {0}")]
    NonFiniteComponent(usize),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),

    #[error("duplicate edge {src} -> {dst}")]
    DuplicateEdge { src: NodeId, dst: NodeId },

    #[error("degree cap {cap} exceeded on node {node}")]
    DegreeCapExceeded { node: NodeId, cap: u16 },

    #[error("operation requires a non-empty graph")]
    EmptyGraph,

    #[error("no out-edge {src} -> {dst}")]
    UnknownEdge { src: NodeId, dst: NodeId },

    #[error("corrupt embedding payload: expected {expected} bytes, got {got}")]
    CorruptPayload { expected: usize, got: usize },

    #[error("node size must be positive")]
    ZeroNodeSize,

    #[error("bad snapshot magic")]
    BadMagic,

    #[error("unsupported snapshot version {0}")]
    VersionMismatch(u16),

    #[error("snapshot truncated while reading node {node_index}")]
    Truncated { node_index: u64 },

    #[error("corrupt snapshot record at byte offset {offset}: {reason}")]
    CorruptRecord { offset: u64, reason: String },

    #[error("scale sweep needs at least 2 scales, got {0}")]
    TooFewScales(usize),

    #[error("insufficient memory for scale n={scale}: need ~{needed} bytes, ~{available} available")]
    InsufficientMemory {
        scale: u64,
        needed: u64,
        available: u64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
