//! Graph-similarity metrics: path-length similarity (APLS) and local
//! topology precision/recall (TOPO).

mod apls;
mod topo;

pub use apls::{
    apls, apls_directional, inject_midpoints, snap_control_nodes, snap_points, AplsConfig,
    SnapResult, Symmetrize,
};
pub use topo::{topo, TopoConfig, TopoScore};

use crate::graph::{dist, polyline_length, Point, RoadEdge, RoadGraph, MPH_TO_MPS};

/// Point at arc position `arc` along a polyline (clamped to its ends).
pub(crate) fn point_at_arc(geom: &[Point], arc: f64) -> Point {
    if arc <= 0.0 {
        return geom[0];
    }
    let mut acc = 0.0;
    for w in geom.windows(2) {
        let seg = dist(w[0], w[1]);
        if acc + seg >= arc {
            let t = if seg > 0.0 { (arc - acc) / seg } else { 0.0 };
            return [
                w[0][0] + (w[1][0] - w[0][0]) * t,
                w[0][1] + (w[1][1] - w[0][1]) * t,
            ];
        }
        acc += seg;
    }
    *geom.last().unwrap()
}

/// Nearest point on a polyline: `(distance, arc position, point)`.
pub(crate) fn nearest_on_polyline(geom: &[Point], p: Point) -> (f64, f64, Point) {
    let mut best = (f64::INFINITY, 0.0, geom[0]);
    let mut acc = 0.0;
    for w in geom.windows(2) {
        let seg = dist(w[0], w[1]);
        let t = if seg > 0.0 {
            (((p[0] - w[0][0]) * (w[1][0] - w[0][0]) + (p[1] - w[0][1]) * (w[1][1] - w[0][1]))
                / (seg * seg))
                .clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [
            w[0][0] + (w[1][0] - w[0][0]) * t,
            w[0][1] + (w[1][1] - w[0][1]) * t,
        ];
        let d = dist(p, q);
        if d < best.0 {
            best = (d, acc + t * seg, q);
        }
        acc += seg;
    }
    best
}

/// Split a polyline at the given strictly-increasing interior arc
/// positions, producing consecutive pieces that share boundary points.
pub(crate) fn split_geometry(geom: &[Point], arcs: &[f64]) -> Vec<Vec<Point>> {
    if arcs.is_empty() {
        return vec![geom.to_vec()];
    }
    let mut pieces = Vec::with_capacity(arcs.len() + 1);
    let mut current: Vec<Point> = vec![geom[0]];
    let mut acc = 0.0;
    let mut ai = 0;
    for w in geom.windows(2) {
        let seg = dist(w[0], w[1]);
        while ai < arcs.len() && arcs[ai] <= acc + seg {
            let cut = point_at_arc(geom, arcs[ai]);
            if dist(*current.last().unwrap(), cut) > 0.0 {
                current.push(cut);
            }
            pieces.push(std::mem::replace(&mut current, vec![cut]));
            ai += 1;
        }
        if dist(*current.last().unwrap(), w[1]) > 0.0 {
            current.push(w[1]);
        }
        acc += seg;
    }
    if current.len() < 2 {
        current.push(*geom.last().unwrap());
    }
    pieces.push(current);
    pieces
}

/// Edge attributes for a piece cut from `parent`: speed and metadata carry
/// over; travel time is recomputed from speed, or prorated by length when
/// only a time is present.
pub(crate) fn sub_edge_attrs(parent: &RoadEdge, length_m: f64) -> (Option<f64>, Option<f64>) {
    let speed = parent.speed_mph;
    let time = match (speed, parent.travel_time_s) {
        (Some(s), _) => Some(length_m / (s * MPH_TO_MPS)),
        (None, Some(t)) if parent.length_m > 0.0 => Some(t * length_m / parent.length_m),
        _ => None,
    };
    (speed, time)
}

/// Rebuild `graph` with one edge split at the given arc position and
/// return the node id sitting at that position. Positions at (or within
/// 1e-9 of) an endpoint return the existing endpoint node.
pub(crate) fn insert_point_on_edge(
    graph: &RoadGraph,
    edge_idx: usize,
    arc: f64,
) -> (RoadGraph, crate::graph::NodeId) {
    const EPS: f64 = 1e-9;
    let target = &graph.edges()[edge_idx];
    let geom = target.geometry_from(target.u);
    let total = polyline_length(&geom);
    let mut b = RoadGraph::builder();
    for n in graph.nodes() {
        b.node_at(n.x, n.y);
    }
    let mut inserted = None;
    for (i, e) in graph.edges().iter().enumerate() {
        if i != edge_idx || arc < EPS || arc > total - EPS {
            add_piece(&mut b, e.geometry.clone(), e);
            continue;
        }
        for piece in split_geometry(&geom, &[arc]) {
            add_piece(&mut b, piece, e);
        }
        let p = point_at_arc(&geom, arc);
        inserted = Some(b.node_at(p[0], p[1]));
    }
    let id = match inserted {
        Some(id) => id,
        None => {
            let p = if arc < EPS {
                geom[0]
            } else {
                *geom.last().unwrap()
            };
            b.node_at(p[0], p[1])
        }
    };
    (
        b.build().with_transform(graph.transform().cloned()),
        id,
    )
}

pub(crate) fn add_piece(b: &mut crate::graph::GraphBuilder, geom: Vec<Point>, parent: &RoadEdge) {
    let u = b.node_at(geom[0][0], geom[0][1]);
    let last = *geom.last().unwrap();
    let v = b.node_at(last[0], last[1]);
    let length_m = polyline_length(&geom);
    let (speed_mph, travel_time_s) = sub_edge_attrs(parent, length_m);
    b.edge(RoadEdge {
        u,
        v,
        geometry: geom,
        length_m,
        speed_mph,
        travel_time_s,
        metadata: parent.metadata,
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_interpolation_round_trips() {
        let geom = vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]];
        assert_eq!(point_at_arc(&geom, 0.0), [0.0, 0.0]);
        assert_eq!(point_at_arc(&geom, 5.0), [5.0, 0.0]);
        assert_eq!(point_at_arc(&geom, 15.0), [10.0, 5.0]);
        assert_eq!(point_at_arc(&geom, 99.0), [10.0, 10.0]);
        let (d, arc, q) = nearest_on_polyline(&geom, [7.0, -3.0]);
        assert!((d - 3.0).abs() < 1e-12);
        assert!((arc - 7.0).abs() < 1e-12);
        assert_eq!(q, [7.0, 0.0]);
    }

    #[test]
    fn split_preserves_length() {
        let geom = vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]];
        let pieces = split_geometry(&geom, &[4.0, 10.0, 17.5]);
        assert_eq!(pieces.len(), 4);
        let total: f64 = pieces.iter().map(|p| polyline_length(p)).sum();
        assert!((total - 20.0).abs() < 1e-12);
        for w in pieces.windows(2) {
            assert_eq!(*w[0].last().unwrap(), w[1][0]);
        }
    }

    #[test]
    fn insert_point_splits_edge() {
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [100.0, 0.0]], Some(30.0), None)
            .unwrap();
        let g = b.build();
        let (g2, id) = insert_point_on_edge(&g, 0, 40.0);
        assert_eq!(g2.node_count(), 3);
        assert_eq!(g2.edge_count(), 2);
        assert_eq!(g2.node(id).unwrap().point(), [40.0, 0.0]);
        assert!((g2.total_length_m() - 100.0).abs() < 1e-9);
        g2.validate().unwrap();
        // Endpoint arc returns the existing node, no split.
        let (g3, id3) = insert_point_on_edge(&g, 0, 0.0);
        assert_eq!(g3.edge_count(), 1);
        assert_eq!(g3.node(id3).unwrap().point(), [0.0, 0.0]);
    }
}
