//! Time-modulated bounded-local state evolution: edge scoring, greedy beam
//! traversal, magnitude suppression, localized delta application, and the
//! deterministic work counter.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::graph::{Edge, GraphView, NodeId, NodeRecord, SemanticGraph};
use crate::quant::{dequantize, quantize};

/// Parameters of the evolution operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorParams {
    /// Norm bound C on applied deltas.
    pub c: f64,
    /// Locality radius in hops.
    pub k: u32,
    /// Beam width: max edges followed per node per step.
    pub beam: usize,
    /// Exponential weight-decay rate per tick.
    pub lambda: f64,
    /// Velocity saturation horizon in ticks.
    pub tau_max: u64,
    /// 1-hop neighbor propagation attenuation, in [0, 1).
    pub alpha: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        OperatorParams {
            c: 1.0,
            k: 2,
            beam: 8,
            lambda: 0.01,
            tau_max: 100,
            alpha: 0.1,
        }
    }
}

impl OperatorParams {
    pub fn validate(&self) -> Result<()> {
        let finite = self.c.is_finite() && self.lambda.is_finite() && self.alpha.is_finite();
        if !finite || self.c <= 0.0 || self.beam == 0 || self.k == 0 {
            return Err(Error::InvalidConfig("bad operator params".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig("alpha must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A localized update: target node, embedding delta, and optional weight
/// deltas on existing out-edges of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticDelta {
    pub target: NodeId,
    pub embedding_delta: Vec<f64>,
    pub edge_weight_deltas: Vec<(NodeId, f32)>,
}

impl SemanticDelta {
    pub fn embedding_only(target: NodeId, embedding_delta: Vec<f64>) -> Self {
        SemanticDelta {
            target,
            embedding_delta,
            edge_weight_deltas: Vec::new(),
        }
    }
}

/// Outcome of a traversal, with the deterministic work counter
/// (nodes visited + edges evaluated).
#[derive(Debug, Clone)]
pub struct TraversalResult {
    pub path: Vec<NodeId>,
    pub visited: BTreeSet<NodeId>,
    pub work: u64,
    pub elapsed: Duration,
}

/// Outcome of a delta application.
#[derive(Debug, Clone)]
pub struct MutationReceipt {
    pub touched: BTreeSet<NodeId>,
    pub work: u64,
    /// Euclidean norm of the (suppressed) delta written to the target.
    pub applied_norm: f64,
}

/// Failure inside `step`: position of the failing delta plus receipts for
/// the deltas already applied.
#[derive(Debug)]
pub struct StepError {
    pub position: usize,
    pub receipts: Vec<MutationReceipt>,
    pub source: Error,
}

impl std::fmt::Display for StepError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "delta {} failed: {}", self.position, self.source)
    }
}

impl std::error::Error for StepError {}

/// Time-modulated edge score: exponential decay of the stored weight plus a
/// saturating velocity term.
///
/// `weight * exp(-lambda * dt) + velocity * min(dt, tau_max)` with
/// `dt = t - t_last`.
pub fn effective_weight(edge: &Edge, t: u64, t_last: u64, params: &OperatorParams) -> f64 {
    let dt = t.saturating_sub(t_last) as f64;
    let sat = dt.min(params.tau_max as f64);
    edge.weight as f64 * (-params.lambda * dt).exp() + edge.velocity as f64 * sat
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Magnitude suppression: clamp the Euclidean norm of a delta to C.
/// Identity when the norm is already within bound.
pub fn magnitude_suppress(delta_vec: &[f64], params: &OperatorParams) -> Vec<f64> {
    let n = norm(delta_vec);
    if n <= params.c || n == 0.0 {
        delta_vec.to_vec()
    } else {
        let scale = params.c / n;
        delta_vec.iter().map(|x| x * scale).collect()
    }
}

struct TraversalPlan {
    result: TraversalResult,
}

/// Greedy beam walk over a read-only view. Never reads outside N_k(start).
fn plan_traversal<V: GraphView>(
    view: &V,
    start: NodeId,
    t: u64,
    params: &OperatorParams,
) -> Result<TraversalPlan> {
    if view.node_record(start).is_none() {
        return Err(Error::UnknownNode(start));
    }
    let began = Instant::now();
    let mut visited: BTreeSet<NodeId> = BTreeSet::new();
    let mut path: Vec<NodeId> = Vec::new();
    let mut work: u64 = 0;
    let mut frontier: Vec<NodeId> = vec![start];
    visited.insert(start);
    let mut candidates: Vec<(f64, NodeId)> = Vec::new();
    for depth in 0..=params.k {
        let mut next: Vec<NodeId> = Vec::new();
        for &id in &frontier {
            path.push(id);
            work += 1; // node visit
            if depth == params.k {
                continue;
            }
            let record = view.node_record(id).expect("frontier node exists");
            candidates.clear();
            for edge in &record.edges {
                work += 1; // edge evaluation
                if !visited.contains(&edge.target) {
                    candidates.push((
                        effective_weight(edge, t, record.last_touched, params),
                        edge.target,
                    ));
                }
            }
            // top-b by score, ties broken by ascending target id
            candidates.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            });
            for &(_, target) in candidates.iter().take(params.beam) {
                if visited.insert(target) {
                    next.push(target);
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(TraversalPlan {
        result: TraversalResult {
            path,
            visited,
            work,
            elapsed: began.elapsed(),
        },
    })
}

/// Traversal without any mutation (benchmark purity / concurrent readers).
pub fn traverse_read_only<V: GraphView>(
    view: &V,
    start: NodeId,
    t: u64,
    params: &OperatorParams,
) -> Result<TraversalResult> {
    Ok(plan_traversal(view, start, t, params)?.result)
}

/// Traversal that stamps `last_touched = t` on every visited node.
pub fn traverse(
    graph: &mut SemanticGraph,
    start: NodeId,
    t: u64,
    params: &OperatorParams,
) -> Result<TraversalResult> {
    let plan = plan_traversal(graph, start, t, params)?;
    for &id in &plan.result.visited {
        graph.node_mut(id).expect("visited node exists").last_touched = t;
    }
    Ok(plan.result)
}

/// Apply one localized delta: suppressed embedding update on the target,
/// weight increments on listed out-edges, and attenuated propagation to
/// 1-hop neighbors when alpha > 0.
pub fn apply_delta(
    graph: &mut SemanticGraph,
    delta: &SemanticDelta,
    t: u64,
    params: &OperatorParams,
) -> Result<MutationReceipt> {
    let dim = graph.dim();
    if delta.embedding_delta.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: delta.embedding_delta.len(),
        });
    }
    for (i, &x) in delta.embedding_delta.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFiniteComponent(i));
        }
    }
    let target = delta.target;
    let record = graph.node(target).ok_or(Error::UnknownNode(target))?;
    // Validate edge deltas before mutating anything.
    for &(dst, _) in &delta.edge_weight_deltas {
        if record.edges.binary_search_by_key(&dst, |e| e.target).is_err() {
            return Err(Error::UnknownEdge { src: target, dst });
        }
    }
    let precision = graph.precision();
    let suppressed = magnitude_suppress(&delta.embedding_delta, params);
    let applied_norm = norm(&suppressed);

    let mut touched: BTreeSet<NodeId> = BTreeSet::new();
    let mut work: u64 = 0;

    // Target embedding update.
    {
        let record = graph.node_mut(target).unwrap();
        let mut vec = dequantize(&record.embedding)?;
        for (slot, dv) in vec.iter_mut().zip(&suppressed) {
            *slot += dv;
        }
        record.embedding = quantize(&vec, precision)?;
        record.last_touched = t;
        touched.insert(target);
        work += 1;
    }

    // Edge weight increments on the target's out-edges.
    for &(dst, dw) in &delta.edge_weight_deltas {
        let record = graph.node_mut(target).unwrap();
        let pos = record
            .edges
            .binary_search_by_key(&dst, |e| e.target)
            .expect("validated above");
        record.edges[pos].weight += dw;
        work += 1;
    }

    // 1-hop propagation, attenuated and suppressed again against C.
    if params.alpha > 0.0 {
        let neighbors: Vec<NodeId> = graph
            .node(target)
            .unwrap()
            .edges
            .iter()
            .map(|e| e.target)
            .collect();
        work += neighbors.len() as u64; // edges read
        let attenuated: Vec<f64> = suppressed.iter().map(|x| x * params.alpha).collect();
        let propagated = magnitude_suppress(&attenuated, params);
        for id in neighbors {
            let record = graph.node_mut(id).expect("edge target exists");
            let mut vec = dequantize(&record.embedding)?;
            for (slot, dv) in vec.iter_mut().zip(&propagated) {
                *slot += dv;
            }
            record.embedding = quantize(&vec, precision)?;
            record.last_touched = t;
            touched.insert(id);
            work += 1;
        }
    }

    Ok(MutationReceipt {
        touched,
        work,
        applied_norm,
    })
}

/// Apply deltas in list order. The graph after a step is a pure function of
/// (graph-before, deltas, t); the first failing delta aborts with partial
/// receipts and its position.
pub fn step(
    graph: &mut SemanticGraph,
    deltas: &[SemanticDelta],
    t: u64,
    params: &OperatorParams,
) -> std::result::Result<Vec<MutationReceipt>, StepError> {
    let mut receipts = Vec::with_capacity(deltas.len());
    for (position, delta) in deltas.iter().enumerate() {
        match apply_delta(graph, delta, t, params) {
            Ok(receipt) => receipts.push(receipt),
            Err(source) => {
                return Err(StepError {
                    position,
                    receipts,
                    source,
                })
            }
        }
    }
    Ok(receipts)
}

/// Read-only wrapper that records every node record access. Used to verify
/// that traversal never reads outside N_k(start).
pub struct AccessTracingView<'a> {
    inner: &'a SemanticGraph,
    accessed: RefCell<Vec<NodeId>>,
}

impl<'a> AccessTracingView<'a> {
    pub fn new(inner: &'a SemanticGraph) -> Self {
        AccessTracingView {
            inner,
            accessed: RefCell::new(Vec::new()),
        }
    }

    pub fn accessed(&self) -> Vec<NodeId> {
        self.accessed.borrow().clone()
    }
}

impl GraphView for AccessTracingView<'_> {
    fn node_count(&self) -> u64 {
        self.inner.node_count()
    }

    fn node_record(&self, id: NodeId) -> Option<&NodeRecord> {
        self.accessed.borrow_mut().push(id);
        self.inner.node_record(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, GraphConfig};
    use crate::quant::PrecisionRegime;

    fn params() -> OperatorParams {
        OperatorParams::default()
    }

    fn chain(len: u64) -> SemanticGraph {
        let mut g = SemanticGraph::new(GraphConfig {
            d: 4,
            precision: PrecisionRegime::F64,
            ..GraphConfig::default()
        })
        .unwrap();
        for _ in 0..len {
            g.add_node(&[0.0; 4], Vec::new()).unwrap();
        }
        for i in 0..len - 1 {
            g.add_edge(NodeId(i), NodeId(i + 1), 1.0, 0.0).unwrap();
        }
        g
    }

    #[test]
    fn effective_weight_closed_form() {
        let edge = Edge {
            target: NodeId(1),
            weight: 1.0,
            velocity: 0.5,
        };
        let p = params();
        assert_eq!(effective_weight(&edge, 5, 5, &p), 1.0);

        let frozen = OperatorParams {
            lambda: 0.0,
            ..params()
        };
        let still = Edge {
            velocity: 0.0,
            ..edge
        };
        assert_eq!(effective_weight(&still, 1000, 0, &frozen), 1.0);

        // 1*e^(-0.1) + 0.5*10
        let got = effective_weight(&edge, 10, 0, &p);
        assert!((got - 5.904837418035959).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn suppress_clamps_norm() {
        let p = params();
        assert_eq!(magnitude_suppress(&[0.0; 8], &p), vec![0.0; 8]);
        let small = vec![0.3, 0.4];
        assert_eq!(magnitude_suppress(&small, &p), small);
        let big = vec![6.0, 8.0];
        let out = magnitude_suppress(&big, &p);
        let n = norm(&out);
        assert!((n - 1.0).abs() <= 1e-12);
        assert!((out[0] / out[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn traverse_isolated_node() {
        let mut g = SemanticGraph::new(GraphConfig {
            d: 4,
            precision: PrecisionRegime::F64,
            ..GraphConfig::default()
        })
        .unwrap();
        g.add_node(&[0.0; 4], Vec::new()).unwrap();
        let r = traverse(&mut g, NodeId(0), 3, &params()).unwrap();
        assert_eq!(r.path, vec![NodeId(0)]);
        assert_eq!(r.visited.len(), 1);
        assert_eq!(r.work, 1);
        assert_eq!(g.node(NodeId(0)).unwrap().last_touched, 3);
    }

    #[test]
    fn traverse_depth_bound_on_chain() {
        let mut g = chain(4);
        let p = OperatorParams {
            beam: 1,
            k: 2,
            ..params()
        };
        let r = traverse(&mut g, NodeId(0), 1, &p).unwrap();
        let visited: Vec<u64> = r.visited.iter().map(|n| n.0).collect();
        assert_eq!(visited, vec![0, 1, 2]);
        assert_eq!(g.node(NodeId(3)).unwrap().last_touched, 0);
    }

    #[test]
    fn traverse_unknown_start() {
        let g = chain(2);
        assert!(matches!(
            traverse_read_only(&g, NodeId(99), 0, &params()),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn read_only_traverse_leaves_graph_untouched() {
        let g = chain(4);
        let r = traverse_read_only(&g, NodeId(0), 7, &params()).unwrap();
        assert!(r.work >= r.visited.len() as u64);
        for record in g.nodes() {
            assert_eq!(record.last_touched, 0);
        }
    }

    #[test]
    fn apply_zero_delta_is_noop() {
        let mut g = chain(3);
        let before = g.node(NodeId(0)).unwrap().embedding.payload.clone();
        let p = OperatorParams { alpha: 0.0, ..params() };
        let delta = SemanticDelta::embedding_only(NodeId(0), vec![0.0; 4]);
        let receipt = apply_delta(&mut g, &delta, 1, &p).unwrap();
        assert_eq!(receipt.touched.len(), 1);
        assert_eq!(receipt.work, 1);
        assert_eq!(receipt.applied_norm, 0.0);
        assert_eq!(g.node(NodeId(0)).unwrap().embedding.payload, before);
    }

    #[test]
    fn apply_delta_clamps_applied_norm() {
        let mut g = chain(2);
        let p = OperatorParams { alpha: 0.0, ..params() };
        let delta = SemanticDelta::embedding_only(NodeId(0), vec![10.0, 0.0, 0.0, 0.0]);
        let receipt = apply_delta(&mut g, &delta, 1, &p).unwrap();
        assert!((receipt.applied_norm - 1.0).abs() < 1e-12);
        let written = g.embedding(NodeId(0)).unwrap();
        assert!((norm(&written) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_delta_propagates_one_hop() {
        let mut g = SemanticGraph::new(GraphConfig {
            d: 4,
            precision: PrecisionRegime::F64,
            ..GraphConfig::default()
        })
        .unwrap();
        for _ in 0..6 {
            g.add_node(&[0.0; 4], Vec::new()).unwrap();
        }
        for dst in 1..=5u64 {
            g.add_edge(NodeId(0), NodeId(dst), 1.0, 0.0).unwrap();
        }
        let delta = SemanticDelta::embedding_only(NodeId(0), vec![0.5, 0.0, 0.0, 0.0]);
        let receipt = apply_delta(&mut g, &delta, 2, &params()).unwrap();
        assert_eq!(receipt.touched.len(), 6);
        let neighbor = g.embedding(NodeId(1)).unwrap();
        assert!((neighbor[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn apply_delta_unknown_edge_rejected() {
        let mut g = chain(3);
        let delta = SemanticDelta {
            target: NodeId(0),
            embedding_delta: vec![0.0; 4],
            edge_weight_deltas: vec![(NodeId(2), 0.1)],
        };
        assert!(matches!(
            apply_delta(&mut g, &delta, 0, &params()),
            Err(Error::UnknownEdge { .. })
        ));
    }

    #[test]
    fn step_aborts_with_position() {
        let mut g = chain(3);
        let good = SemanticDelta::embedding_only(NodeId(0), vec![0.1; 4]);
        let bad = SemanticDelta::embedding_only(NodeId(42), vec![0.1; 4]);
        let err = step(&mut g, &[good.clone(), bad, good], 1, &params()).unwrap_err();
        assert_eq!(err.position, 1);
        assert_eq!(err.receipts.len(), 1);
    }

    #[test]
    fn empty_step_changes_nothing() {
        let mut g = generate_synthetic(
            GraphConfig {
                d: 8,
                ..GraphConfig::default()
            },
            50,
        )
        .unwrap();
        let before: Vec<Vec<u8>> = g.nodes().iter().map(|r| r.embedding.payload.clone()).collect();
        let receipts = step(&mut g, &[], 9, &params()).unwrap();
        assert!(receipts.is_empty());
        let after: Vec<Vec<u8>> = g.nodes().iter().map(|r| r.embedding.payload.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn tracing_view_stays_within_neighborhood() {
        let g = generate_synthetic(
            GraphConfig {
                d: 8,
                ..GraphConfig::default()
            },
            300,
        )
        .unwrap();
        let p = params();
        let hood = g.neighborhood(NodeId(5), p.k).unwrap();
        let view = AccessTracingView::new(&g);
        let r = traverse_read_only(&view, NodeId(5), 0, &p).unwrap();
        for id in view.accessed() {
            assert!(hood.contains(&id), "read outside N_k: {id}");
        }
        assert!(r.visited.iter().all(|id| hood.contains(id)));
    }
}
