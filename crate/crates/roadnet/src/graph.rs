//! Planar embedded road graph: nodes with metric coordinates, undirected
//! edges with polyline geometry, length, and optional speed / travel time.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTransform;

pub type NodeId = u64;

/// A point in the planar metric frame (meters east, meters north).
pub type Point = [f64; 2];

/// Arc length of a polyline.
pub fn polyline_length(points: &[Point]) -> f64 {
    points
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Exactly 1 mph in meters per second.
pub const MPH_TO_MPS: f64 = 0.44704;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadType {
    Motorway,
    Primary,
    Secondary,
    Tertiary,
    Residential,
    Unclassified,
    CartTrack,
}

impl RoadType {
    pub const ALL: [RoadType; 7] = [
        RoadType::Motorway,
        RoadType::Primary,
        RoadType::Secondary,
        RoadType::Tertiary,
        RoadType::Residential,
        RoadType::Unclassified,
        RoadType::CartTrack,
    ];

    pub fn parse(s: &str) -> Option<RoadType> {
        match s.to_ascii_lowercase().as_str() {
            "motorway" => Some(RoadType::Motorway),
            "primary" => Some(RoadType::Primary),
            "secondary" => Some(RoadType::Secondary),
            "tertiary" => Some(RoadType::Tertiary),
            "residential" => Some(RoadType::Residential),
            "unclassified" => Some(RoadType::Unclassified),
            "cart_track" | "cart track" | "track" => Some(RoadType::CartTrack),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RoadType::Motorway => "motorway",
            RoadType::Primary => "primary",
            RoadType::Secondary => "secondary",
            RoadType::Tertiary => "tertiary",
            RoadType::Residential => "residential",
            RoadType::Unclassified => "unclassified",
            RoadType::CartTrack => "cart_track",
        }
    }
}

/// Per-edge label attributes driving speed assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadMetadata {
    pub road_type: RoadType,
    pub lanes: u32,
    pub paved: bool,
    #[serde(default)]
    pub bridge: bool,
}

impl RoadMetadata {
    pub fn new(road_type: RoadType, lanes: u32, paved: bool) -> Self {
        RoadMetadata {
            road_type,
            lanes: lanes.max(1),
            paved,
            bridge: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadNode {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

impl RoadNode {
    pub fn point(&self) -> Point {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadEdge {
    pub u: NodeId,
    pub v: NodeId,
    /// Polyline of at least two metric points; endpoints coincide with the
    /// coordinates of `u` and `v`.
    pub geometry: Vec<Point>,
    pub length_m: f64,
    pub speed_mph: Option<f64>,
    pub travel_time_s: Option<f64>,
    pub metadata: Option<RoadMetadata>,
}

impl RoadEdge {
    /// The endpoint opposite to `n`, assuming `n` is one of the endpoints.
    pub fn other(&self, n: NodeId) -> NodeId {
        if n == self.u {
            self.v
        } else {
            self.u
        }
    }

    pub fn is_loop(&self) -> bool {
        self.u == self.v
    }

    /// Geometry oriented so it starts at node `from`.
    pub fn geometry_from(&self, from: NodeId) -> Vec<Point> {
        if from == self.u {
            self.geometry.clone()
        } else {
            let mut g = self.geometry.clone();
            g.reverse();
            g
        }
    }
}

/// Immutable planar road graph. Build one with [`GraphBuilder`]; pipeline
/// stages transform graphs into new graphs.
#[derive(Debug, Clone, Default)]
pub struct RoadGraph {
    nodes: Vec<RoadNode>,
    edges: Vec<RoadEdge>,
    transform: Option<GeoTransform>,
    index: HashMap<NodeId, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub total_length_km: f64,
    pub component_count: usize,
}

impl RoadGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&RoadNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn transform(&self) -> Option<&GeoTransform> {
        self.transform.as_ref()
    }

    pub fn with_transform(mut self, t: Option<GeoTransform>) -> Self {
        self.transform = t;
        self
    }

    /// Adjacency lists keyed by node id: `(edge index, neighbor id)`.
    /// Self-loops appear once.
    pub fn adjacency(&self) -> HashMap<NodeId, Vec<(usize, NodeId)>> {
        let mut adj: HashMap<NodeId, Vec<(usize, NodeId)>> =
            self.nodes.iter().map(|n| (n.id, Vec::new())).collect();
        for (i, e) in self.edges.iter().enumerate() {
            adj.get_mut(&e.u).unwrap().push((i, e.v));
            if e.u != e.v {
                adj.get_mut(&e.v).unwrap().push((i, e.u));
            }
        }
        adj
    }

    pub fn total_length_m(&self) -> f64 {
        self.edges.iter().map(|e| e.length_m).sum()
    }

    /// Node-id labelling of connected components (isolated nodes count).
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let adj = self.adjacency();
        let mut seen: HashMap<NodeId, bool> =
            self.nodes.iter().map(|n| (n.id, false)).collect();
        let mut comps = Vec::new();
        for n in &self.nodes {
            if seen[&n.id] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![n.id];
            seen.insert(n.id, true);
            while let Some(id) = stack.pop() {
                comp.push(id);
                for &(_, nb) in &adj[&id] {
                    if !seen[&nb] {
                        seen.insert(nb, true);
                        stack.push(nb);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            node_count: self.nodes.len(),
            edge_count: self.edges.len(),
            total_length_km: self.total_length_m() / 1000.0,
            component_count: self.components().len(),
        }
    }

    /// Check the structural invariants; used by tests and the generator.
    pub fn validate(&self) -> Result<()> {
        for n in &self.nodes {
            if !n.x.is_finite() || !n.y.is_finite() {
                return Err(Error::domain(format!("node {} has non-finite coordinates", n.id)));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            let (u, v) = match (self.node(e.u), self.node(e.v)) {
                (Some(u), Some(v)) => (u, v),
                _ => return Err(Error::domain(format!("edge {i} references a missing node"))),
            };
            if e.geometry.len() < 2 {
                return Err(Error::domain(format!("edge {i} has fewer than 2 geometry points")));
            }
            let first = e.geometry[0];
            let last = *e.geometry.last().unwrap();
            if dist(first, u.point()) > 1e-6 || dist(last, v.point()) > 1e-6 {
                return Err(Error::domain(format!(
                    "edge {i} geometry endpoints do not coincide with its nodes"
                )));
            }
            let len = polyline_length(&e.geometry);
            if (len - e.length_m).abs() > 1e-6 * len.max(1.0) {
                return Err(Error::domain(format!(
                    "edge {i} length {} differs from geometry arc length {}",
                    e.length_m, len
                )));
            }
            if let Some(s) = e.speed_mph {
                if !(1.0..=65.0).contains(&s) {
                    return Err(Error::domain(format!("edge {i} speed {s} outside [1, 65] mph")));
                }
                if let Some(t) = e.travel_time_s {
                    let expect = e.length_m / (s * MPH_TO_MPS);
                    if (t - expect).abs() > 1e-6 * expect.max(1e-9) {
                        return Err(Error::domain(format!(
                            "edge {i} travel time {t} inconsistent with length/speed"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Incremental graph construction with endpoint merging.
///
/// Points closer than the merge tolerance (1e-6 m by default) collapse onto
/// one node; the tolerance only absorbs float noise, not label error.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    nodes: Vec<RoadNode>,
    edges: Vec<RoadEdge>,
    transform: Option<GeoTransform>,
    merge: HashMap<(i64, i64), NodeId>,
    tol: f64,
    next_id: NodeId,
}

impl Default for GraphBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            edges: Vec::new(),
            transform: None,
            merge: HashMap::new(),
            tol: 1e-6,
            next_id: 0,
        }
    }

    pub fn transform(mut self, t: GeoTransform) -> Self {
        self.transform = Some(t);
        self
    }

    fn key(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.tol).round() as i64, (y / self.tol).round() as i64)
    }

    /// Node at (x, y), merging with any previously added node within tolerance.
    pub fn node_at(&mut self, x: f64, y: f64) -> NodeId {
        let key = self.key(x, y);
        if let Some(&id) = self.merge.get(&key) {
            return id;
        }
        // Check the 8 neighboring cells so points straddling a cell
        // boundary still merge.
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                if let Some(&id) = self.merge.get(&(key.0 + dx, key.1 + dy)) {
                    let n = &self.nodes[id as usize];
                    if dist([x, y], [n.x, n.y]) <= self.tol {
                        self.merge.insert(key, id);
                        return id;
                    }
                }
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.push(RoadNode { id, x, y });
        self.merge.insert(key, id);
        id
    }

    /// Add one polyline as an edge, creating/merging endpoint nodes.
    pub fn polyline(
        &mut self,
        geometry: Vec<Point>,
        speed_mph: Option<f64>,
        metadata: Option<RoadMetadata>,
    ) -> Result<()> {
        if geometry.len() < 2 {
            return Err(Error::domain("polyline needs at least 2 points"));
        }
        let u = self.node_at(geometry[0][0], geometry[0][1]);
        let last = *geometry.last().unwrap();
        let v = self.node_at(last[0], last[1]);
        // Snap geometry endpoints exactly onto the (possibly merged) nodes.
        let mut geometry = geometry;
        let (nu, nv) = (self.nodes[u as usize], self.nodes[v as usize]);
        geometry[0] = nu.point();
        *geometry.last_mut().unwrap() = nv.point();
        let length_m = polyline_length(&geometry);
        let travel_time_s = speed_mph.map(|s| length_m / (s * MPH_TO_MPS));
        self.edges.push(RoadEdge {
            u,
            v,
            geometry,
            length_m,
            speed_mph,
            travel_time_s,
            metadata,
        });
        Ok(())
    }

    /// Add a fully specified edge between existing nodes.
    pub fn edge(&mut self, e: RoadEdge) {
        self.edges.push(e);
    }

    pub fn node_point(&self, id: NodeId) -> Point {
        self.nodes[id as usize].point()
    }

    pub fn build(self) -> RoadGraph {
        let index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id, i))
            .collect();
        RoadGraph {
            nodes: self.nodes,
            edges: self.edges,
            transform: self.transform,
            index,
        }
    }
}

/// Build a straight edge between two points with optional speed/metadata.
pub fn straight_edge(
    b: &mut GraphBuilder,
    from: Point,
    to: Point,
    speed_mph: Option<f64>,
    metadata: Option<RoadMetadata>,
) {
    b.polyline(vec![from, to], speed_mph, metadata).unwrap();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_merge_within_tolerance() {
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [100.0, 0.0]], None, None).unwrap();
        b.polyline(vec![[100.0 + 4e-7, -3e-7], [200.0, 0.0]], None, None)
            .unwrap();
        let g = b.build();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        let adj = g.adjacency();
        let shared = g.nodes().iter().find(|n| (n.x - 100.0).abs() < 1e-3).unwrap();
        assert_eq!(adj[&shared.id].len(), 2);
        g.validate().unwrap();
    }

    #[test]
    fn distinct_points_do_not_merge() {
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [100.0, 0.0]], None, None).unwrap();
        b.polyline(vec![[100.0, 1e-4], [200.0, 0.0]], None, None).unwrap();
        assert_eq!(b.build().node_count(), 4);
    }

    #[test]
    fn stats_and_components() {
        let g = RoadGraph::builder().build();
        assert_eq!(
            g.stats(),
            GraphStats {
                node_count: 0,
                edge_count: 0,
                total_length_km: 0.0,
                component_count: 0
            }
        );

        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [500.0, 0.0]], None, None).unwrap();
        b.polyline(vec![[0.0, 100.0], [500.0, 100.0]], None, None).unwrap();
        let g = b.build();
        let s = g.stats();
        assert_eq!(s.edge_count, 2);
        assert!((s.total_length_km - 1.0).abs() < 1e-12);
        assert_eq!(s.component_count, 2);
    }

    #[test]
    fn travel_time_follows_speed() {
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [447.04, 0.0]], Some(10.0), None)
            .unwrap();
        let g = b.build();
        let t = g.edges()[0].travel_time_s.unwrap();
        assert!((t - 100.0).abs() < 1e-9);
        g.validate().unwrap();
    }
}
