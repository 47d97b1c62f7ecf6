//! Thin a binary road mask to a 1-px skeleton (Zhang-Suen) and trace the
//! skeleton into a geometric road graph.
//!
//! The tracer keeps working memory proportional to the number of skeleton
//! pixels, never the raster area, so it holds up on city-scale images.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::graph::{polyline_length, Point, RoadEdge, RoadGraph};
use crate::raster::BinaryMask;

// Neighbor offsets in Zhang-Suen order: P2..P9 = N, NE, E, SE, S, SW, W, NW.
const NB: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

#[inline]
fn at(mask: &BinaryMask, c: isize, r: isize) -> bool {
    if c < 0 || r < 0 || c >= mask.width() as isize || r >= mask.height() as isize {
        false
    } else {
        mask.get(c as usize, r as usize)
    }
}

fn neighbors_bits(mask: &BinaryMask, c: isize, r: isize) -> [bool; 8] {
    let mut n = [false; 8];
    for (i, (dc, dr)) in NB.iter().enumerate() {
        n[i] = at(mask, c + dc, r + dr);
    }
    n
}

// Number of 0 -> 1 transitions around the neighborhood ring.
fn transitions(n: &[bool; 8]) -> usize {
    (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count()
}

// Yokoi connectivity number for 8-connected foreground: how many distinct
// foreground components around the pixel touch it. 1 means the pixel can
// be removed without splitting or merging anything.
fn connectivity8(n: &[bool; 8]) -> usize {
    // 4-neighbors sit at ring positions 0, 2, 4, 6.
    [0usize, 2, 4, 6]
        .iter()
        .filter(|&&k| !n[k] && (n[(k + 1) % 8] || n[(k + 2) % 8]))
        .count()
}

/// Zhang-Suen iterative thinning. The output foreground is a subset of the
/// input and preserves 8-connectivity of every component.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut m = mask.clone();
    let w = m.width();
    let mut active: Vec<usize> = (0..m.data.len()).filter(|&i| m.data[i] != 0).collect();
    let mut to_delete = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            to_delete.clear();
            for &i in &active {
                if m.data[i] == 0 {
                    continue;
                }
                let (c, r) = ((i % w) as isize, (i / w) as isize);
                let n = neighbors_bits(&m, c, r);
                let b: usize = n.iter().filter(|&&x| x).count();
                if !(2..=6).contains(&b) || transitions(&n) != 1 {
                    continue;
                }
                // n = [P2, P3, P4, P5, P6, P7, P8, P9]
                let ok = if step == 0 {
                    (!n[0] || !n[2] || !n[4]) && (!n[2] || !n[4] || !n[6])
                } else {
                    (!n[0] || !n[2] || !n[6]) && (!n[0] || !n[4] || !n[6])
                };
                if ok {
                    to_delete.push(i);
                }
            }
            for &i in &to_delete {
                m.data[i] = 0;
            }
            changed |= !to_delete.is_empty();
        }
        active.retain(|&i| m.data[i] != 0);
        if !changed {
            break;
        }
    }
    // Zhang-Suen can leave 2x2 staircase blocks; strip pixels that are
    // simple (removal keeps local connectivity) until none remain.
    loop {
        let mut removed = false;
        for r in 0..m.height().saturating_sub(1) {
            for c in 0..m.width().saturating_sub(1) {
                if m.get(c, r) && m.get(c + 1, r) && m.get(c, r + 1) && m.get(c + 1, r + 1) {
                    for &(cc, rr) in &[(c, r), (c + 1, r), (c, r + 1), (c + 1, r + 1)] {
                        let n = neighbors_bits(&m, cc as isize, rr as isize);
                        let b = n.iter().filter(|&&x| x).count();
                        if connectivity8(&n) == 1 && b >= 2 {
                            m.set(cc, rr, false);
                            removed = true;
                            break;
                        }
                    }
                }
            }
        }
        if !removed {
            break;
        }
    }
    m
}

/// Trace a 1-px skeleton into a road graph.
///
/// Pixels with a neighbor count other than 2 become nodes; adjacent
/// junction pixels collapse to a single node at their centroid. Maximal
/// 2-neighbor chains become edges whose geometry is the pixel chain in
/// world coordinates. Isolated cycles get one node at their smallest
/// row-major pixel.
pub fn skeleton_to_graph(skeleton: &BinaryMask) -> Result<RoadGraph> {
    let w = skeleton.width();
    let t = &skeleton.transform;

    // Reject non-thin input.
    for r in 0..skeleton.height().saturating_sub(1) {
        for c in 0..w.saturating_sub(1) {
            if skeleton.get(c, r)
                && skeleton.get(c + 1, r)
                && skeleton.get(c, r + 1)
                && skeleton.get(c + 1, r + 1)
            {
                return Err(Error::domain(format!(
                    "skeleton is not 1-px thin: solid 2x2 block at pixel ({c}, {r})"
                )));
            }
        }
    }

    // Sparse representation: sorted row-major list + membership set.
    let fg: Vec<usize> = skeleton
        .data
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, _)| i)
        .collect();
    let fg_set: HashSet<usize> = fg.iter().copied().collect();
    let idx = |c: isize, r: isize| -> Option<usize> {
        if c < 0 || r < 0 || c >= w as isize || r >= skeleton.height() as isize {
            None
        } else {
            let i = r as usize * w + c as usize;
            fg_set.contains(&i).then_some(i)
        }
    };
    let neighbors = |i: usize| -> Vec<usize> {
        let (c, r) = ((i % w) as isize, (i / w) as isize);
        NB.iter().filter_map(|(dc, dr)| idx(c + dc, r + dr)).collect()
    };
    let ncount: HashMap<usize, usize> = fg.iter().map(|&i| (i, neighbors(i).len())).collect();

    let world = |i: usize| -> Point {
        let (x, y) = t.pixel_to_world(i % w, i / w);
        [x, y]
    };

    // Group node pixels (neighbor count != 2) into clusters: junction
    // pixels that touch collapse together, endpoints stay alone.
    let mut pixel_node: HashMap<usize, u64> = HashMap::new();
    let mut node_coord: Vec<Point> = Vec::new();
    let mut seen: HashSet<usize> = HashSet::new();
    for &i in &fg {
        let nc = ncount[&i];
        if nc == 2 || seen.contains(&i) {
            continue;
        }
        let id = node_coord.len() as u64;
        if nc >= 3 {
            // Flood over adjacent junction pixels.
            let mut cluster = Vec::new();
            let mut stack = vec![i];
            seen.insert(i);
            while let Some(p) = stack.pop() {
                cluster.push(p);
                for q in neighbors(p) {
                    if ncount[&q] >= 3 && !seen.contains(&q) {
                        seen.insert(q);
                        stack.push(q);
                    }
                }
            }
            cluster.sort_unstable();
            let mut cx = 0.0;
            let mut cy = 0.0;
            for &p in &cluster {
                let pt = world(p);
                cx += pt[0];
                cy += pt[1];
            }
            let n = cluster.len() as f64;
            node_coord.push([cx / n, cy / n]);
            for p in cluster {
                pixel_node.insert(p, id);
            }
        } else {
            seen.insert(i);
            node_coord.push(world(i));
            pixel_node.insert(i, id);
        }
    }

    let mut b = RoadGraph::builder();
    let mut node_ids = Vec::with_capacity(node_coord.len());
    for pt in &node_coord {
        node_ids.push(b.node_at(pt[0], pt[1]));
    }

    let push_edge = |b: &mut crate::graph::GraphBuilder, u: u64, v: u64, mut geom: Vec<Point>| {
        let nu = node_ids[u as usize];
        let nv = node_ids[v as usize];
        geom.insert(0, node_coord[u as usize]);
        geom.push(node_coord[v as usize]);
        geom.dedup_by(|a, bb| (a[0] - bb[0]).abs() < 1e-9 && (a[1] - bb[1]).abs() < 1e-9);
        if geom.len() < 2 {
            geom = vec![node_coord[u as usize], node_coord[v as usize]];
        }
        let length_m = polyline_length(&geom);
        if nu == nv && length_m <= 0.0 {
            return; // degenerate in-cluster connection
        }
        b.edge(RoadEdge {
            u: nu,
            v: nv,
            geometry: geom,
            length_m,
            speed_mph: None,
            travel_time_s: None,
            metadata: None,
        });
    };

    // Trace chains out of every node pixel.
    let mut visited_chain: HashSet<usize> = HashSet::new();
    let mut direct_links: HashSet<(usize, usize)> = HashSet::new();
    for &i in &fg {
        let Some(&uid) = pixel_node.get(&i) else { continue };
        for q in neighbors(i) {
            if let Some(&vid) = pixel_node.get(&q) {
                // Direct node-node adjacency (distinct clusters only).
                if vid != uid {
                    let key = (i.min(q), i.max(q));
                    if direct_links.insert(key) {
                        push_edge(&mut b, uid, vid, vec![world(i), world(q)]);
                    }
                }
                continue;
            }
            if visited_chain.contains(&q) {
                continue;
            }
            // Walk the 2-neighbor chain until the next node pixel.
            let mut chain = vec![world(i)];
            let mut prev = i;
            let mut cur = q;
            let vid = loop {
                visited_chain.insert(cur);
                chain.push(world(cur));
                let nbs = neighbors(cur);
                let next = nbs.into_iter().find(|&n| n != prev);
                match next {
                    Some(n) => {
                        if let Some(&vid) = pixel_node.get(&n) {
                            chain.push(world(n));
                            break vid;
                        }
                        prev = cur;
                        cur = n;
                    }
                    None => break uid, // dead-ends back (shouldn't happen on valid chains)
                }
            };
            push_edge(&mut b, uid, vid, chain);
        }
    }

    // Remaining unvisited 2-neighbor pixels form isolated cycles.
    for &i in &fg {
        if ncount[&i] != 2 || visited_chain.contains(&i) || pixel_node.contains_key(&i) {
            continue;
        }
        // Anchor the cycle at its smallest row-major pixel (which is `i`,
        // because fg is sorted and we scan in order).
        let anchor = b.node_at(world(i)[0], world(i)[1]);
        let mut chain = vec![world(i)];
        visited_chain.insert(i);
        let mut prev = i;
        let mut cur = neighbors(i)[0];
        while cur != i {
            visited_chain.insert(cur);
            chain.push(world(cur));
            let nbs = neighbors(cur);
            let next = nbs.into_iter().find(|&n| n != prev).unwrap_or(i);
            prev = cur;
            cur = next;
        }
        chain.push(world(i));
        let length_m = polyline_length(&chain);
        b.edge(RoadEdge {
            u: anchor,
            v: anchor,
            geometry: chain,
            length_m,
            speed_mph: None,
            travel_time_s: None,
            metadata: None,
        });
    }

    Ok(b.build().with_transform(Some(t.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoTransform;

    fn transform(w: usize, h: usize, ps: f64) -> GeoTransform {
        GeoTransform::new(0.0, h as f64 * ps, ps, w, h).unwrap()
    }

    #[test]
    fn empty_mask_gives_empty_skeleton_and_graph() {
        let m = BinaryMask::zeros(transform(20, 20, 1.0));
        let s = skeletonize(&m);
        assert_eq!(s.count_foreground(), 0);
        let g = skeleton_to_graph(&s).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn wide_band_thins_to_single_row() {
        let mut m = BinaryMask::zeros(transform(60, 21, 1.0));
        for r in 7..14 {
            for c in 2..58 {
                m.set(c, r, true);
            }
        }
        let s = skeletonize(&m);
        // Away from the ends, each column holds exactly one skeleton pixel.
        for c in 10..50 {
            let n = (0..21).filter(|&r| s.get(c, r)).count();
            assert_eq!(n, 1, "column {c} has {n} skeleton pixels");
        }
        // Foreground subset of input.
        for r in 0..21 {
            for c in 0..60 {
                assert!(!s.get(c, r) || m.get(c, r));
            }
        }
    }

    #[test]
    fn plus_crossing_has_one_junction() {
        let mut m = BinaryMask::zeros(transform(41, 41, 1.0));
        for i in 5..36 {
            for t in 18..23 {
                m.set(i, t, true);
                m.set(t, i, true);
            }
        }
        let s = skeletonize(&m);
        let mut junctions = 0;
        for r in 0..41 {
            for c in 0..41 {
                if s.get(c, r) {
                    let n = neighbors_bits(&s, c as isize, r as isize)
                        .iter()
                        .filter(|&&x| x)
                        .count();
                    if n >= 3 {
                        junctions += 1;
                    }
                }
            }
        }
        assert!(junctions >= 1);

        let g = skeleton_to_graph(&s).unwrap();
        // A cross: four endpoints, one junction (possibly a small cluster),
        // four edges.
        let adj = g.adjacency();
        let deg1 = adj.values().filter(|v| v.len() == 1).count();
        assert_eq!(deg1, 4);
        assert_eq!(g.edge_count(), 4);
    }

    #[test]
    fn straight_chain_to_graph() {
        let mut m = BinaryMask::zeros(transform(20, 5, 0.3));
        for c in 4..15 {
            m.set(c, 2, true);
        }
        let g = skeleton_to_graph(&m).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert!((g.edges()[0].length_m - 3.0).abs() < 1e-9);
    }

    #[test]
    fn diagonal_steps_count_sqrt2() {
        let mut m = BinaryMask::zeros(transform(20, 20, 1.0));
        for i in 3..14 {
            m.set(i, i, true);
        }
        let g = skeleton_to_graph(&m).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!((g.edges()[0].length_m - 10.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn closed_ring_becomes_self_loop() {
        // Diamond ring: every pixel has exactly two (diagonal) neighbors.
        let mut m = BinaryMask::zeros(transform(21, 21, 1.0));
        let r = 5i32;
        for dx in -r..=r {
            let dy = r - dx.abs();
            m.set((10 + dx) as usize, (10 + dy) as usize, true);
            m.set((10 + dx) as usize, (10 - dy) as usize, true);
        }
        let g = skeleton_to_graph(&m).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 1);
        let e = &g.edges()[0];
        assert!(e.is_loop());
        // 4r diagonal steps around the diamond.
        assert!((e.length_m - 4.0 * r as f64 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn non_thin_input_is_rejected() {
        let mut m = BinaryMask::zeros(transform(10, 10, 1.0));
        for r in 3..5 {
            for c in 3..5 {
                m.set(c, r, true);
            }
        }
        let err = skeleton_to_graph(&m).unwrap_err();
        assert!(err.to_string().contains("(3, 3)"));
    }

    #[test]
    fn node_degrees_match_pixel_neighbor_counts() {
        // T-junction drawn directly as a thin skeleton.
        let mut m = BinaryMask::zeros(transform(21, 21, 1.0));
        for c in 2..19 {
            m.set(c, 10, true);
        }
        for r in 10..19 {
            m.set(10, r, true);
        }
        let g = skeleton_to_graph(&m).unwrap();
        let adj = g.adjacency();
        let mut degrees: Vec<usize> = adj.values().map(|v| v.len()).collect();
        degrees.sort_unstable();
        assert_eq!(degrees, vec![1, 1, 1, 3]);
    }
}
