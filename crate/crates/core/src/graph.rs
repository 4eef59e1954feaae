//! The addressable semantic graph: node records with quantized embeddings,
//! bounded ordered adjacency, k-hop neighborhood queries, and deterministic
//! synthetic generation.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{dequantize, quantize, PrecisionRegime, QuantizedEmbedding};

/// Dense 0-based node identifier. Never reused after assignment.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Directed out-edge. Weight and velocity are finite and unitless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub target: NodeId,
    pub weight: f32,
    pub velocity: f32,
}

/// One node: quantized embedding, ordered bounded adjacency, opaque
/// metadata, and the tick it was last touched.
#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub id: NodeId,
    pub embedding: QuantizedEmbedding,
    pub edges: Vec<Edge>,
    pub metadata: Vec<u8>,
    pub last_touched: u64,
}

impl NodeRecord {
    pub fn degree(&self) -> usize {
        self.edges.len()
    }
}

/// Construction parameters for a graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Embedding dimension d.
    pub d: u16,
    pub precision: PrecisionRegime,
    pub target_mean_degree: f64,
    /// Hard per-node out-degree cap.
    pub d_max: u16,
    /// Locality radius in hops.
    pub k: u32,
    pub seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            d: 128,
            precision: PrecisionRegime::F64,
            target_mean_degree: 9.96,
            d_max: 64,
            k: 2,
            seed: 42,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("d must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if !(self.target_mean_degree >= 1.0) {
            return Err(Error::InvalidConfig(
                "target_mean_degree must be >= 1".into(),
            ));
        }
        if self.target_mean_degree > self.d_max as f64 {
            return Err(Error::InvalidConfig(
                "target_mean_degree exceeds degree cap".into(),
            ));
        }
        Ok(())
    }
}

/// Read-only node access. Traversal is written against this trait so tests
/// can interpose an access-counting wrapper.
pub trait GraphView {
    fn node_count(&self) -> u64;
    fn node_record(&self, id: NodeId) -> Option<&NodeRecord>;
}

/// Degree statistics over the whole graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeStats {
    pub mean: f64,
    pub max: usize,
    /// histogram[deg] = number of nodes with that out-degree.
    pub histogram: Vec<u64>,
}

/// The persistent semantic state: an indexed collection of node records
/// under a single (d, precision) regime.
///
/// Reads are safe from multiple threads; mutations require exclusive
/// access (single writer or externally serialized writers).
#[derive(Debug, Clone)]
pub struct SemanticGraph {
    config: GraphConfig,
    nodes: Vec<NodeRecord>,
    /// Digest carried over from a deserialized snapshot, so re-serialization
    /// is byte-identical even though the snapshot does not encode the full
    /// generation config.
    pub(crate) stored_digest: Option<[u8; 6]>,
}

impl SemanticGraph {
    pub fn new(config: GraphConfig) -> Result<Self> {
        config.validate()?;
        Ok(SemanticGraph {
            config,
            nodes: Vec::new(),
            stored_digest: None,
        })
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.d as usize
    }

    pub fn precision(&self) -> PrecisionRegime {
        self.config.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRecord> {
        self.nodes.get(id.index())
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Option<&mut NodeRecord> {
        self.nodes.get_mut(id.index())
    }

    /// Used by deserialization, which reconstructs records wholesale.
    pub(crate) fn push_record(&mut self, record: NodeRecord) {
        self.nodes.push(record);
    }

    /// Insert a node; embeddings are quantized once at insertion and persist.
    pub fn add_node(&mut self, embedding: &[f64], metadata: Vec<u8>) -> Result<NodeId> {
        if embedding.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: embedding.len(),
            });
        }
        let quantized = quantize(embedding, self.config.precision)?;
        let id = NodeId(self.nodes.len() as u64);
        self.nodes.push(NodeRecord {
            id,
            embedding: quantized,
            edges: Vec::new(),
            metadata,
            last_touched: 0,
        });
        Ok(id)
    }

    /// Insert a directed edge, preserving ascending-target order.
    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, weight: f32, velocity: f32) -> Result<()> {
        if !weight.is_finite() || !velocity.is_finite() {
            return Err(Error::NonFiniteComponent(0));
        }
        if self.node(src).is_none() {
            return Err(Error::UnknownNode(src));
        }
        if self.node(dst).is_none() {
            return Err(Error::UnknownNode(dst));
        }
        if src == dst {
            return Err(Error::SelfLoop(src));
        }
        let cap = self.config.d_max;
        let record = self.node_mut(src).unwrap();
        if record.edges.len() >= cap as usize {
            return Err(Error::DegreeCapExceeded { node: src, cap });
        }
        match record.edges.binary_search_by_key(&dst, |e| e.target) {
            Ok(_) => Err(Error::DuplicateEdge { src, dst }),
            Err(pos) => {
                record.edges.insert(
                    pos,
                    Edge {
                        target: dst,
                        weight,
                        velocity,
                    },
                );
                Ok(())
            }
        }
    }

    /// Dequantized embedding of a node.
    pub fn embedding(&self, id: NodeId) -> Result<Vec<f64>> {
        let record = self.node(id).ok_or(Error::UnknownNode(id))?;
        dequantize(&record.embedding)
    }

    /// Nodes reachable from `center` in at most `k` directed hops,
    /// including `center` itself. Pure.
    pub fn neighborhood(&self, center: NodeId, k: u32) -> Result<BTreeSet<NodeId>> {
        if self.node(center).is_none() {
            return Err(Error::UnknownNode(center));
        }
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        let mut queue: VecDeque<(NodeId, u32)> = VecDeque::new();
        seen.insert(center);
        queue.push_back((center, 0));
        while let Some((id, depth)) = queue.pop_front() {
            if depth == k {
                continue;
            }
            let record = self.node(id).expect("reachable node exists");
            for edge in &record.edges {
                if seen.insert(edge.target) {
                    queue.push_back((edge.target, depth + 1));
                }
            }
        }
        Ok(seen)
    }

    pub fn degree_stats(&self) -> Result<DegreeStats> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let max = self.nodes.iter().map(NodeRecord::degree).max().unwrap_or(0);
        let mut histogram = vec![0u64; max + 1];
        let mut total = 0u64;
        for record in &self.nodes {
            histogram[record.degree()] += 1;
            total += record.degree() as u64;
        }
        Ok(DegreeStats {
            mean: total as f64 / self.nodes.len() as f64,
            max,
            histogram,
        })
    }
}

impl GraphView for SemanticGraph {
    fn node_count(&self) -> u64 {
        self.nodes.len() as u64
    }

    fn node_record(&self, id: NodeId) -> Option<&NodeRecord> {
        self.node(id)
    }
}

/// Deterministic uniform draw in [-1, 1] from a raw 64-bit sample.
fn unit_interval(bits: u64) -> f64 {
    ((bits >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

/// Deterministic unbiased-enough index draw in [0, n) via widening multiply.
fn index_below(bits: u64, n: u64) -> u64 {
    ((bits as u128 * n as u128) >> 64) as u64
}

/// Generate a synthetic graph: seeded-PRNG embeddings with components in
/// [-1, 1] and random out-edges with mean degree tracking the configured
/// target. Byte-identical snapshots for identical (config, n).
pub fn generate_synthetic(config: GraphConfig, n: u64) -> Result<SemanticGraph> {
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("n must be >= 1".into()));
    }
    let mut graph = SemanticGraph::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.d as usize;
    let mut buf = vec![0.0f64; d];
    for _ in 0..n {
        for slot in buf.iter_mut() {
            *slot = unit_interval(rng.next_u64());
        }
        graph.add_node(&buf, Vec::new())?;
    }
    // Out-degree: floor(mu) plus a Bernoulli(frac) extra edge, capped by
    // d_max and available targets.
    let base = config.target_mean_degree.floor() as u64;
    let frac = config.target_mean_degree - base as f64;
    let mut chosen: BTreeSet<NodeId> = BTreeSet::new();
    for src_idx in 0..n {
        let src = NodeId(src_idx);
        let extra = (unit_interval(rng.next_u64()) + 1.0) / 2.0 < frac;
        let want = (base + extra as u64).min(config.d_max as u64).min(n - 1);
        chosen.clear();
        let mut attempts = 0u64;
        let max_attempts = 32 * want + 64;
        while (chosen.len() as u64) < want && attempts < max_attempts {
            attempts += 1;
            let dst = NodeId(index_below(rng.next_u64(), n));
            if dst != src {
                chosen.insert(dst);
            }
        }
        for &dst in &chosen {
            // Per-edge weight/velocity drawn deterministically from the stream.
            let w = 0.05 + unit_interval(rng.next_u64()).abs() as f32;
            let v = 0.1 * unit_interval(rng.next_u64()) as f32;
            graph.add_edge(src, dst, w, v)?;
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_graph() -> SemanticGraph {
        let config = GraphConfig {
            d: 4,
            ..GraphConfig::default()
        };
        let mut g = SemanticGraph::new(config).unwrap();
        g.add_node(&[0.0; 4], Vec::new()).unwrap();
        g.add_node(&[1.0, 0.0, 0.0, 0.0], Vec::new()).unwrap();
        g
    }

    #[test]
    fn create_graph_validates_config() {
        let ok = GraphConfig::default();
        let g = SemanticGraph::new(ok).unwrap();
        assert_eq!(g.len(), 0);

        let bad = GraphConfig {
            d: 0,
            ..GraphConfig::default()
        };
        assert!(matches!(SemanticGraph::new(bad), Err(Error::InvalidConfig(_))));

        let bad_target = GraphConfig {
            target_mean_degree: 100.0,
            d_max: 64,
            ..GraphConfig::default()
        };
        assert!(SemanticGraph::new(bad_target).is_err());
    }

    #[test]
    fn dense_id_assignment() {
        let mut g = SemanticGraph::new(GraphConfig {
            d: 2,
            ..GraphConfig::default()
        })
        .unwrap();
        assert_eq!(g.add_node(&[0.0, 0.0], Vec::new()).unwrap(), NodeId(0));
        assert_eq!(g.add_node(&[0.5, 0.5], Vec::new()).unwrap(), NodeId(1));
    }

    #[test]
    fn add_node_dimension_mismatch() {
        let mut g = SemanticGraph::new(GraphConfig {
            d: 128,
            ..GraphConfig::default()
        })
        .unwrap();
        let short = vec![0.0; 127];
        assert!(matches!(
            g.add_node(&short, Vec::new()),
            Err(Error::DimensionMismatch { expected: 128, got: 127 })
        ));
    }

    #[test]
    fn add_edge_contracts() {
        let mut g = two_node_graph();
        g.add_edge(NodeId(0), NodeId(1), 0.5, 0.0).unwrap();
        assert_eq!(g.node(NodeId(0)).unwrap().degree(), 1);
        assert!(matches!(
            g.add_edge(NodeId(0), NodeId(0), 1.0, 0.0),
            Err(Error::SelfLoop(_))
        ));
        assert!(matches!(
            g.add_edge(NodeId(0), NodeId(1), 1.0, 0.0),
            Err(Error::DuplicateEdge { .. })
        ));
        assert!(matches!(
            g.add_edge(NodeId(0), NodeId(7), 1.0, 0.0),
            Err(Error::UnknownNode(_))
        ));
        assert!(g.add_edge(NodeId(0), NodeId(1), f32::NAN, 0.0).is_err());
    }

    #[test]
    fn degree_cap_enforced() {
        let config = GraphConfig {
            d: 2,
            d_max: 3,
            target_mean_degree: 2.0,
            ..GraphConfig::default()
        };
        let mut g = SemanticGraph::new(config).unwrap();
        for _ in 0..5 {
            g.add_node(&[0.0, 0.0], Vec::new()).unwrap();
        }
        for dst in 1..=3u64 {
            g.add_edge(NodeId(0), NodeId(dst), 1.0, 0.0).unwrap();
        }
        assert!(matches!(
            g.add_edge(NodeId(0), NodeId(4), 1.0, 0.0),
            Err(Error::DegreeCapExceeded { cap: 3, .. })
        ));
    }

    #[test]
    fn adjacency_stays_sorted() {
        let mut g = SemanticGraph::new(GraphConfig {
            d: 2,
            ..GraphConfig::default()
        })
        .unwrap();
        for _ in 0..6 {
            g.add_node(&[0.0, 0.0], Vec::new()).unwrap();
        }
        for dst in [5u64, 2, 4, 1, 3] {
            g.add_edge(NodeId(0), NodeId(dst), 1.0, 0.0).unwrap();
        }
        let targets: Vec<u64> = g.node(NodeId(0)).unwrap().edges.iter().map(|e| e.target.0).collect();
        assert_eq!(targets, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn neighborhood_zero_radius_and_star() {
        let mut g = SemanticGraph::new(GraphConfig {
            d: 2,
            ..GraphConfig::default()
        })
        .unwrap();
        for _ in 0..4 {
            g.add_node(&[0.0, 0.0], Vec::new()).unwrap();
        }
        for dst in 1..=3u64 {
            g.add_edge(NodeId(0), NodeId(dst), 1.0, 0.0).unwrap();
        }
        let n0 = g.neighborhood(NodeId(0), 0).unwrap();
        assert_eq!(n0.into_iter().collect::<Vec<_>>(), vec![NodeId(0)]);
        let n1 = g.neighborhood(NodeId(0), 1).unwrap();
        assert_eq!(n1.len(), 4);
        assert!(matches!(g.neighborhood(NodeId(9), 1), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn degree_stats_small() {
        let mut g = two_node_graph();
        g.add_edge(NodeId(0), NodeId(1), 1.0, 0.0).unwrap();
        let stats = g.degree_stats().unwrap();
        assert_eq!(stats.mean, 0.5);
        assert_eq!(stats.max, 1);
        assert_eq!(stats.histogram, vec![1, 1]);

        let empty = SemanticGraph::new(GraphConfig::default()).unwrap();
        assert!(matches!(empty.degree_stats(), Err(Error::EmptyGraph)));
    }

    #[test]
    fn synthetic_mean_degree_near_target() {
        let g = generate_synthetic(GraphConfig::default(), 1000).unwrap();
        let stats = g.degree_stats().unwrap();
        assert!(stats.mean >= 8.96 && stats.mean <= 10.96, "mean {}", stats.mean);
        assert!(stats.max <= 64);
        // independent recount
        let naive: u64 = g.nodes().iter().map(|r| r.edges.len() as u64).sum();
        assert_eq!(stats.mean, naive as f64 / 1000.0);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(GraphConfig::default(), 200).unwrap();
        let b = generate_synthetic(GraphConfig::default(), 200).unwrap();
        for (ra, rb) in a.nodes().iter().zip(b.nodes()) {
            assert_eq!(ra.embedding.payload, rb.embedding.payload);
            assert_eq!(ra.edges, rb.edges);
        }
    }
}
