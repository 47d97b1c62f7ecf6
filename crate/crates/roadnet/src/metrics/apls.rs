//! Average path length similarity: compares shortest-path lengths (or
//! travel times) between matched control-node pairs of two road graphs.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, Point, RoadGraph};
use crate::route::{shortest_distances, RouteWeight};

use super::{add_piece, nearest_on_polyline, point_at_arc, split_geometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrize {
    Mean,
    HarmonicMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AplsConfig {
    /// Maximum snap distance between a control node and the other graph.
    pub buffer_m: f64,
    pub weight: RouteWeight,
    /// Large-area mode: no midpoint injection, rely on the control-node cap.
    pub large_mode: bool,
    /// Upper bound on control nodes per direction (seeded subsample).
    pub max_control_nodes: usize,
    /// Midpoint spacing for small-chip mode.
    pub midpoint_spacing_m: f64,
    pub seed: u64,
    pub symmetrize: Symmetrize,
}

impl Default for AplsConfig {
    fn default() -> Self {
        AplsConfig {
            buffer_m: 4.0,
            weight: RouteWeight::Length,
            large_mode: false,
            max_control_nodes: 500,
            midpoint_spacing_m: 50.0,
            seed: 0,

            symmetrize: Symmetrize::Mean,
        }
    }
}

impl AplsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.buffer_m > 0.0) {
            return Err(Error::config("buffer_m must be positive"));
        }
        if self.max_control_nodes < 2 {
            return Err(Error::config("max_control_nodes must be at least 2"));
        }
        if !(self.midpoint_spacing_m > 0.0) {
            return Err(Error::config("midpoint_spacing_m must be positive"));
        }
        Ok(())
    }
}

/// Insert degree-2 nodes so no stretch of an edge between nodes exceeds
/// `spacing_m`; each edge of length L is divided into ceil(L / spacing)
/// equal pieces. Geometry and total length are unchanged.
pub fn inject_midpoints(graph: &RoadGraph, spacing_m: f64) -> RoadGraph {
    let mut b = RoadGraph::builder();
    for n in graph.nodes() {
        b.node_at(n.x, n.y);
    }
    for e in graph.edges() {
        let k = (e.length_m / spacing_m).ceil().max(1.0) as usize;
        if k <= 1 || e.length_m <= 0.0 {
            add_piece(&mut b, e.geometry.clone(), e);
            continue;
        }
        let geom = e.geometry_from(e.u);
        let arcs: Vec<f64> = (1..k).map(|i| e.length_m * i as f64 / k as f64).collect();
        for piece in split_geometry(&geom, &arcs) {
            add_piece(&mut b, piece, e);
        }
    }
    b.build().with_transform(graph.transform().cloned())
}

/// Result of snapping a set of control points onto a target graph.
#[derive(Debug, Clone)]
pub struct SnapResult {
    /// Target graph with a node inserted at every snap location.
    pub target: RoadGraph,
    /// Node id in `target` for each input point; `None` beyond the buffer.
    pub mapping: Vec<Option<NodeId>>,
}

/// Snap each point to the nearest location on any target edge within
/// `buffer_m` (inclusive) and insert nodes there, splitting edges.
pub fn snap_points(points: &[Point], target: &RoadGraph, buffer_m: f64) -> SnapResult {
    const EPS: f64 = 1e-9;
    // Best (edge, arc) per point.
    let mut best: Vec<Option<(f64, usize, f64)>> = vec![None; points.len()];
    for (ei, e) in target.edges().iter().enumerate() {
        let geom = e.geometry_from(e.u);
        for (pi, &p) in points.iter().enumerate() {
            let (d, arc, _) = nearest_on_polyline(&geom, p);
            if d <= buffer_m && best[pi].map_or(true, |(bd, _, _)| d < bd) {
                best[pi] = Some((d, ei, arc));
            }
        }
    }
    // Interior split arcs per edge.
    let mut splits: HashMap<usize, Vec<f64>> = HashMap::new();
    for b in best.iter().flatten() {
        let (_, ei, arc) = *b;
        let total = target.edges()[ei].length_m;
        if arc > EPS && arc < total - EPS {
            splits.entry(ei).or_default().push(arc);
        }
    }
    for arcs in splits.values_mut() {
        arcs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        arcs.dedup_by(|a, b| (*a - *b).abs() < EPS);
    }

    let mut b = RoadGraph::builder();
    for n in target.nodes() {
        b.node_at(n.x, n.y);
    }
    for (ei, e) in target.edges().iter().enumerate() {
        match splits.get(&ei) {
            None => add_piece(&mut b, e.geometry.clone(), e),
            Some(arcs) => {
                let geom = e.geometry_from(e.u);
                for piece in split_geometry(&geom, arcs) {
                    add_piece(&mut b, piece, e);
                }
            }
        }
    }
    let mapping = best
        .iter()
        .map(|s| {
            s.map(|(_, ei, arc)| {
                let e = &target.edges()[ei];
                let geom = e.geometry_from(e.u);
                let total = e.length_m;
                let q = if arc <= EPS {
                    geom[0]
                } else if arc >= total - EPS {
                    *geom.last().unwrap()
                } else {
                    // Snap exactly to the dedup'd split arc used above.
                    let arcs = &splits[&ei];
                    let i = arcs
                        .iter()
                        .position(|&a| (a - arc).abs() < EPS)
                        .expect("snap arc present");
                    point_at_arc(&geom, arcs[i])
                };
                b.node_at(q[0], q[1])
            })
        })
        .collect();
    SnapResult {
        target: b.build().with_transform(target.transform().cloned()),
        mapping,
    }
}

/// Snap every node of `source` onto `target`; returns the augmented
/// target plus a source-node → target-node mapping.
pub fn snap_control_nodes(
    source: &RoadGraph,
    target: &RoadGraph,
    buffer_m: f64,
) -> (RoadGraph, HashMap<NodeId, Option<NodeId>>) {
    let points: Vec<Point> = source.nodes().iter().map(|n| n.point()).collect();
    let snap = snap_points(&points, target, buffer_m);
    let mapping = source
        .nodes()
        .iter()
        .zip(snap.mapping)
        .map(|(n, m)| (n.id, m))
        .collect();
    (snap.target, mapping)
}

fn require_times(g: &RoadGraph, name: &str) -> Result<()> {
    for (i, e) in g.edges().iter().enumerate() {
        if e.travel_time_s.is_none() {
            return Err(Error::domain(format!(
                "time-weighted comparison needs travel times: {name} edge {i} has none"
            )));
        }
    }
    Ok(())
}

/// One direction of the score: control nodes drawn from `g`, paths
/// compared against `gp`. `None` when fewer than two control nodes yield
/// any connected pair in `g` (undefined score).
pub fn apls_directional(g: &RoadGraph, gp: &RoadGraph, cfg: &AplsConfig) -> Result<Option<f64>> {
    cfg.validate()?;
    if cfg.weight == RouteWeight::Time {
        require_times(g, "reference")?;
        require_times(gp, "proposal")?;
    }
    let gref = if cfg.large_mode {
        g.clone()
    } else {
        inject_midpoints(g, cfg.midpoint_spacing_m)
    };
    let mut control: Vec<NodeId> = gref.nodes().iter().map(|n| n.id).collect();
    control.sort_unstable();
    if control.len() > cfg.max_control_nodes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let idx = rand::seq::index::sample(&mut rng, control.len(), cfg.max_control_nodes);
        let mut picked: Vec<NodeId> = idx.into_iter().map(|i| control[i]).collect();
        picked.sort_unstable();
        control = picked;
    }
    if control.len() < 2 {
        return Ok(None);
    }
    let points: Vec<Point> = control
        .iter()
        .map(|&id| gref.node(id).unwrap().point())
        .collect();
    let snap = snap_points(&points, gp, cfg.buffer_m);

    let mut sum = 0.0;
    let mut count = 0u64;
    for (i, &a) in control.iter().enumerate() {
        let d_ref = shortest_distances(&gref, a, cfg.weight);
        let d_prop: Option<HashMap<NodeId, f64>> = snap.mapping[i]
            .map(|aid| shortest_distances(&snap.target, aid, cfg.weight));
        for (j, &bnode) in control.iter().enumerate().skip(i + 1) {
            let Some(&l_ref) = d_ref.get(&bnode) else {
                continue; // no path in the reference graph: pair excluded
            };
            if l_ref <= 0.0 {
                continue;
            }
            let term = match (&d_prop, snap.mapping[j]) {
                (Some(dp), Some(bid)) => match dp.get(&bid) {
                    Some(&l_prop) => 1.0 - ((l_ref - l_prop).abs() / l_ref).min(1.0),
                    None => 0.0,
                },
                _ => 0.0,
            };
            sum += term;
            count += 1;
        }
    }
    if count == 0 {
        return Ok(None);
    }
    Ok(Some(sum / count as f64))
}

/// Symmetric score: both directions combined (arithmetic mean by default).
/// Two empty graphs score 1; an empty graph against a non-empty one
/// scores 0.
pub fn apls(g: &RoadGraph, gp: &RoadGraph, cfg: &AplsConfig) -> Result<f64> {
    cfg.validate()?;
    match (g.is_empty(), gp.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let a = apls_directional(g, gp, cfg)?;
    let b = apls_directional(gp, g, cfg)?;
    match (a, b) {
        (Some(a), Some(b)) => Ok(match cfg.symmetrize {
            Symmetrize::Mean => (a + b) / 2.0,
            Symmetrize::HarmonicMean => {
                if a + b > 0.0 {
                    2.0 * a * b / (a + b)
                } else {
                    0.0
                }
            }
        }),
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Err(Error::domain(
            "score undefined: fewer than 2 connected control nodes in both graphs",
        )),
    }
}
