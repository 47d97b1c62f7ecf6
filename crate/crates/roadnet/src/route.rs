//! Shortest-route queries over a road graph, weighted by geometric length
//! or by travel time.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, RoadGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteWeight {
    Length,
    Time,
}

/// A found route: ordered edge indices, the node sequence they visit, and
/// the total weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub edges: Vec<usize>,
    pub nodes: Vec<NodeId>,
    pub total: f64,
    /// True when time-weighted search skipped edges lacking travel time.
    pub skipped_unweighted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RouteResult {
    Found(Route),
    NoPath { skipped_unweighted: bool },
}

struct HeapEntry {
    cost: f64,
    node: NodeId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (cost, node id).
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn reconstruct(prev: &HashMap<NodeId, (NodeId, usize)>, src: NodeId, dst: NodeId) -> Vec<NodeId> {
    let mut nodes = vec![dst];
    let mut cur = dst;
    while cur != src {
        let (p, _) = prev[&cur];
        nodes.push(p);
        cur = p;
    }
    nodes.reverse();
    nodes
}

/// Dijkstra with a deterministic tie-break: among equal-weight routes the
/// lexicographically smallest node-id sequence wins.
pub fn shortest_route(
    graph: &RoadGraph,
    src: NodeId,
    dst: NodeId,
    weight: RouteWeight,
) -> Result<RouteResult> {
    if !graph.contains_node(src) {
        return Err(Error::NodeNotFound(src));
    }
    if !graph.contains_node(dst) {
        return Err(Error::NodeNotFound(dst));
    }
    let mut skipped_unweighted = false;
    if src == dst {
        return Ok(RouteResult::Found(Route {
            edges: Vec::new(),
            nodes: vec![src],
            total: 0.0,
            skipped_unweighted,
        }));
    }

    let adj = graph.adjacency();
    let mut dist: HashMap<NodeId, f64> = HashMap::new();
    let mut prev: HashMap<NodeId, (NodeId, usize)> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(src, 0.0);
    heap.push(HeapEntry { cost: 0.0, node: src });

    while let Some(HeapEntry { cost, node }) = heap.pop() {
        if cost > dist[&node] {
            continue;
        }
        for &(ei, nb) in &adj[&node] {
            if nb == node {
                continue;
            }
            let e = &graph.edges()[ei];
            let w = match weight {
                RouteWeight::Length => e.length_m,
                RouteWeight::Time => match e.travel_time_s {
                    Some(t) => t,
                    None => {
                        skipped_unweighted = true;
                        continue;
                    }
                },
            };
            let cand = cost + w;
            match dist.get(&nb) {
                Some(&d) if cand > d => {}
                Some(&d) if cand == d => {
                    // Equal weight: keep the lexicographically smaller
                    // node sequence.
                    let old = reconstruct(&prev, src, nb);
                    let mut new = reconstruct(&prev, src, node);
                    new.push(nb);
                    if new < old {
                        prev.insert(nb, (node, ei));
                    }
                }
                _ => {
                    dist.insert(nb, cand);
                    prev.insert(nb, (node, ei));
                    heap.push(HeapEntry { cost: cand, node: nb });
                }
            }
        }
    }

    match dist.get(&dst) {
        None => Ok(RouteResult::NoPath { skipped_unweighted }),
        Some(&total) => {
            let nodes = reconstruct(&prev, src, dst);
            let edges = nodes.windows(2).map(|w| prev[&w[1]].1).collect();
            Ok(RouteResult::Found(Route {
                edges,
                nodes,
                total,
                skipped_unweighted,
            }))
        }
    }
}

/// Shortest-path weights from `src` to every reachable node. Edges without
/// travel time are impassable under time weighting.
pub fn shortest_distances(
    graph: &RoadGraph,
    src: NodeId,
    weight: RouteWeight,
) -> HashMap<NodeId, f64> {
    let adj = graph.adjacency();
    let mut dist: HashMap<NodeId, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(src, 0.0);
    heap.push(HeapEntry { cost: 0.0, node: src });
    while let Some(HeapEntry { cost, node }) = heap.pop() {
        if cost > dist[&node] {
            continue;
        }
        for &(ei, nb) in &adj[&node] {
            if nb == node {
                continue;
            }
            let e = &graph.edges()[ei];
            let w = match weight {
                RouteWeight::Length => e.length_m,
                RouteWeight::Time => match e.travel_time_s {
                    Some(t) => t,
                    None => continue,
                },
            };
            let cand = cost + w;
            if dist.get(&nb).map_or(true, |&d| cand < d) {
                dist.insert(nb, cand);
                heap.push(HeapEntry { cost: cand, node: nb });
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RoadGraph;

    fn triangle() -> RoadGraph {
        // A-B 100 m @65, B-C 100 m @65, A-C 150 m @20.
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [100.0, 0.0]], Some(65.0), None)
            .unwrap();
        b.polyline(vec![[100.0, 0.0], [100.0, 100.0]], Some(65.0), None)
            .unwrap();
        // Two 75 m legs via a bend, exactly 150 m end to end.
        let mid = [50.0 - 25.0 / 2f64.sqrt(), 50.0 + 25.0 / 2f64.sqrt()];
        b.polyline(vec![[0.0, 0.0], mid, [100.0, 100.0]], Some(20.0), None)
            .unwrap();
        let g = b.build();
        assert!((g.edges()[2].length_m - 150.0).abs() < 1e-9);
        g
    }

    #[test]
    fn src_equals_dst_is_empty_route() {
        let g = triangle();
        match shortest_route(&g, 0, 0, RouteWeight::Length).unwrap() {
            RouteResult::Found(r) => {
                assert!(r.edges.is_empty());
                assert_eq!(r.total, 0.0);
            }
            _ => panic!("expected a route"),
        }
    }

    #[test]
    fn length_and_time_pick_different_routes() {
        let g = triangle();
        // Node ids: A=0, B=1, C=2 (builder order).
        let by_len = match shortest_route(&g, 0, 2, RouteWeight::Length).unwrap() {
            RouteResult::Found(r) => r,
            _ => panic!(),
        };
        assert_eq!(by_len.nodes, vec![0, 2]);
        let by_time = match shortest_route(&g, 0, 2, RouteWeight::Time).unwrap() {
            RouteResult::Found(r) => r,
            _ => panic!(),
        };
        assert_eq!(by_time.nodes, vec![0, 1, 2]);
        // 200 m at 65 mph beats ~152 m at 20 mph.
        assert!((by_time.total - 200.0 / (65.0 * 0.44704)).abs() < 1e-9);
    }

    #[test]
    fn disconnected_gives_no_path() {
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [10.0, 0.0]], None, None).unwrap();
        b.polyline(vec![[100.0, 0.0], [110.0, 0.0]], None, None).unwrap();
        let g = b.build();
        assert!(matches!(
            shortest_route(&g, 0, 2, RouteWeight::Length).unwrap(),
            RouteResult::NoPath { .. }
        ));
    }

    #[test]
    fn missing_node_is_an_error() {
        let g = triangle();
        assert!(matches!(
            shortest_route(&g, 0, 99, RouteWeight::Length),
            Err(Error::NodeNotFound(99))
        ));
    }

    #[test]
    fn unweighted_edges_are_impassable_under_time() {
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [10.0, 0.0]], Some(30.0), None).unwrap();
        b.polyline(vec![[10.0, 0.0], [20.0, 0.0]], None, None).unwrap();
        let g = b.build();
        match shortest_route(&g, 0, 2, RouteWeight::Time).unwrap() {
            RouteResult::NoPath { skipped_unweighted } => assert!(skipped_unweighted),
            _ => panic!("edge without time should be impassable"),
        }
    }

    #[test]
    fn tie_break_is_lexicographic() {
        // Two equal-length routes 0-1-3 and 0-2-3.
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [10.0, 10.0]], None, None).unwrap(); // 0-1
        b.polyline(vec![[0.0, 0.0], [10.0, -10.0]], None, None).unwrap(); // 0-2
        b.polyline(vec![[10.0, 10.0], [20.0, 0.0]], None, None).unwrap(); // 1-3
        b.polyline(vec![[10.0, -10.0], [20.0, 0.0]], None, None).unwrap(); // 2-3
        let g = b.build();
        match shortest_route(&g, 0, 3, RouteWeight::Length).unwrap() {
            RouteResult::Found(r) => assert_eq!(r.nodes, vec![0, 1, 3]),
            _ => panic!(),
        }
    }

    #[test]
    fn uniform_speed_time_route_equals_length_route() {
        let g = triangle();
        let mut b = RoadGraph::builder();
        for e in g.edges() {
            b.polyline(e.geometry.clone(), Some(30.0), None).unwrap();
        }
        let g = b.build();
        let a = match shortest_route(&g, 0, 2, RouteWeight::Length).unwrap() {
            RouteResult::Found(r) => r.nodes,
            _ => panic!(),
        };
        let t = match shortest_route(&g, 0, 2, RouteWeight::Time).unwrap() {
            RouteResult::Found(r) => r.nodes,
            _ => panic!(),
        };
        assert_eq!(a, t);
    }
}
