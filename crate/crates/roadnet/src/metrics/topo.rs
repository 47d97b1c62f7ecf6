//! TOPO metric: around seed locations on the reference graph, compare the
//! sets of places reachable within a fixed radius along each graph, scored
//! as precision/recall/F1 under a spatial matching tolerance (the "hole").

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{dist, NodeId, Point, RoadGraph};
use crate::route::{shortest_distances, RouteWeight};

use super::{insert_point_on_edge, nearest_on_polyline, point_at_arc};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopoConfig {
    /// Matching tolerance and sampling interval, meters.
    pub hole_m: f64,
    /// Extent of the local subregion explored from each seed, meters.
    pub radius_m: f64,
    pub n_seeds: usize,
    pub seed: u64,
}

impl Default for TopoConfig {
    fn default() -> Self {
        TopoConfig {
            hole_m: 4.0,
            radius_m: 300.0,
            n_seeds: 50,
            seed: 0,
        }
    }
}

impl TopoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hole_m > 0.0) {
            return Err(Error::domain("hole_m must be positive"));
        }
        if self.radius_m <= self.hole_m {
            return Err(Error::domain("radius_m must exceed hole_m"));
        }
        if self.n_seeds < 1 {
            return Err(Error::domain("n_seeds must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopoScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

/// Sample points every `step` meters along every stretch of the graph
/// reachable within `radius` of `src` (path distance), deduplicated.
fn reachable_samples(g: &RoadGraph, src: NodeId, radius: f64, step: f64) -> Vec<Point> {
    let d = shortest_distances(g, src, RouteWeight::Length);
    let mut seen: HashSet<(i64, i64)> = HashSet::new();
    let mut pts = Vec::new();
    let mut push = |p: Point| {
        let key = ((p[0] / 1e-6).round() as i64, (p[1] / 1e-6).round() as i64);
        if seen.insert(key) {
            pts.push(p);
        }
    };
    for e in g.edges() {
        let du = d.get(&e.u).copied();
        let dv = d.get(&e.v).copied();
        if du.is_none() && dv.is_none() {
            continue;
        }
        let total = e.length_m;
        let geom = e.geometry_from(e.u);
        let mut a = 0.0;
        loop {
            let from_u = du.map_or(f64::INFINITY, |x| x + a);
            let from_v = dv.map_or(f64::INFINITY, |x| x + (total - a));
            if from_u.min(from_v) <= radius {
                push(point_at_arc(&geom, a));
            }
            if a >= total {
                break;
            }
            a = (a + step).min(total);
        }
    }
    pts
}

/// Count of greedy one-to-one matches between two point sets within `tol`.
fn greedy_match(a: &[Point], b: &[Point], tol: f64) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &p) in a.iter().enumerate() {
        for (j, &q) in b.iter().enumerate() {
            let d = dist(p, q);
            if d <= tol {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            matched += 1;
        }
    }
    matched
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Compare `gp` against the reference `g`. Seeds are drawn uniformly along
/// the reference's total length, deterministically from `cfg.seed`; a seed
/// with no proposal road within `hole_m` contributes all its reference
/// samples as false negatives.
pub fn topo(g: &RoadGraph, gp: &RoadGraph, cfg: &TopoConfig) -> Result<TopoScore> {
    cfg.validate()?;
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fneg = 0u64;
    let total: f64 = g.total_length_m();
    if total > 0.0 {
        let mut cum = Vec::with_capacity(g.edge_count());
        let mut acc = 0.0;
        for e in g.edges() {
            acc += e.length_m;
            cum.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.n_seeds {
            let u: f64 = rng.gen_range(0.0..total);
            let ei = cum.partition_point(|&c| c <= u).min(g.edge_count() - 1);
            let arc = u - if ei == 0 { 0.0 } else { cum[ei - 1] };
            let seed_pt = {
                let e = &g.edges()[ei];
                point_at_arc(&e.geometry_from(e.u), arc)
            };
            let (g_aug, sid) = insert_point_on_edge(g, ei, arc);
            let truth = reachable_samples(&g_aug, sid, cfg.radius_m, cfg.hole_m);

            // Locate the seed on the proposal.
            let mut best: Option<(f64, usize, f64)> = None;
            for (pei, pe) in gp.edges().iter().enumerate() {
                let (d, parc, _) = nearest_on_polyline(&pe.geometry_from(pe.u), seed_pt);
                if d <= cfg.hole_m && best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, pei, parc));
                }
            }
            match best {
                None => fneg += truth.len() as u64,
                Some((_, pei, parc)) => {
                    let (gp_aug, pid) = insert_point_on_edge(gp, pei, parc);
                    let prop = reachable_samples(&gp_aug, pid, cfg.radius_m, cfg.hole_m);
                    let m = greedy_match(&truth, &prop, cfg.hole_m) as u64;
                    tp += m;
                    fneg += truth.len() as u64 - m;
                    fp += prop.len() as u64 - m;
                }
            }
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(TopoScore {
        precision,
        recall,
        f1,
        true_pos: tp,
        false_pos: fp,
        false_neg: fneg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> RoadGraph {
        let mut b = RoadGraph::builder();
        for i in 0..4 {
            let y = i as f64 * 100.0;
            b.polyline(vec![[0.0, y], [300.0, y]], None, None).unwrap();
            let x = i as f64 * 100.0;
            b.polyline(vec![[x, 0.0], [x, 300.0]], None, None).unwrap();
        }
        b.build()
    }

    #[test]
    fn identical_graphs_are_perfect() {
        let g = grid();
        let s = topo(&g, &g, &TopoConfig::default()).unwrap();
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.f1, 1.0);
        assert!(s.true_pos > 0);
    }

    #[test]
    fn empty_proposal_has_zero_recall() {
        let g = grid();
        let empty = RoadGraph::builder().build();
        let s = topo(&g, &empty, &TopoConfig::default()).unwrap();
        assert_eq!(s.recall, 0.0);
        assert_eq!(s.true_pos, 0);
        assert!(s.false_neg > 0);
    }

    #[test]
    fn truncated_road_halves_recall() {
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [300.0, 0.0]], None, None).unwrap();
        let g = b.build();
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [150.0, 0.0]], None, None).unwrap();
        let gp = b.build();
        // One deterministic seed; force it near the shared start by
        // sampling with radius covering the whole road.
        let cfg = TopoConfig {
            n_seeds: 40,
            radius_m: 300.0,
            ..Default::default()
        };
        let s = topo(&g, &gp, &cfg).unwrap();
        // Matched seeds see half the truth samples (~0.5 recall each);
        // seeds landing past 154 m are entirely unmatched (all-FN), so
        // the aggregate sits well below 0.5 but above 0.
        assert!(s.recall < 0.55, "recall {}", s.recall);
        assert!(s.recall > 0.1, "recall {}", s.recall);
        assert_eq!(s.false_pos, 0);
        assert_eq!(s.precision, 1.0);
    }

    #[test]
    fn determinism_and_range() {
        let g = grid();
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [300.0, 0.0]], None, None).unwrap();
        b.polyline(vec![[0.0, 100.0], [300.0, 100.0]], None, None).unwrap();
        let gp = b.build();
        let a = topo(&g, &gp, &TopoConfig::default()).unwrap();
        let b2 = topo(&g, &gp, &TopoConfig::default()).unwrap();
        assert_eq!(a, b2);
        for v in [a.precision, a.recall, a.f1] {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn bad_config_rejected() {
        let g = grid();
        let cfg = TopoConfig {
            n_seeds: 0,
            ..Default::default()
        };
        assert!(topo(&g, &g, &cfg).is_err());
        let cfg = TopoConfig {
            radius_m: 2.0,
            ..Default::default()
        };
        assert!(topo(&g, &g, &cfg).is_err());
    }
}
