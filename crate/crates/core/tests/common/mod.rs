//! Shared test oracles, kept independent of the library's own traversal
//! and neighborhood code paths.

use std::collections::HashSet;

use sgs::{NodeId, SemanticGraph};

/// Brute-force k-hop reachability oracle: frontier-by-frontier expansion
/// over raw edge lists.
pub fn bfs_oracle(graph: &SemanticGraph, start: NodeId, k: u32) -> HashSet<NodeId> {
    let mut reached: HashSet<NodeId> = HashSet::new();
    reached.insert(start);
    let mut frontier: Vec<NodeId> = vec![start];
    for _ in 0..k {
        let mut next: Vec<NodeId> = Vec::new();
        for &id in &frontier {
            let record = graph.node(id).expect("oracle node exists");
            for edge in &record.edges {
                if reached.insert(edge.target) {
                    next.push(edge.target);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    reached
}
