//! Embedded deterministic semantic-graph substrate.
//!
//! State lives as an addressable graph of quantized embeddings with bounded
//! adjacency. All reads and writes are confined to k-hop neighborhoods, so
//! per-operation work is bounded by local structure and independent of total
//! node count; scale is a memory-envelope question, which the persistence
//! layer answers with exact per-node byte accounting.

pub mod bench;
pub mod error;
pub mod evolution;
pub mod graph;
pub mod persist;
pub mod quant;

pub use error::{Error, Result};
pub use evolution::{
    apply_delta, effective_weight, magnitude_suppress, step, traverse, traverse_read_only,
    MutationReceipt, OperatorParams, SemanticDelta, StepError, TraversalResult,
};
pub use graph::{
    generate_synthetic, DegreeStats, Edge, GraphConfig, GraphView, NodeId, NodeRecord,
    SemanticGraph,
};
pub use persist::{
    density_report_from_file, deserialize, measure_density, read_snapshot, serialize,
    write_snapshot, DensityReport,
};
pub use quant::{
    capacity_projection, dequantize, node_size_model, quantization_envelope_report, quantize,
    PrecisionRegime, QuantizedEmbedding, TIB_BYTES,
};
