//! Seeded generator of synthetic planar road networks with full metadata.
//! These serve as independent ground truth for round-trip testing: render
//! a mask from a generated graph, run the extraction pipeline, and compare
//! the result against the generator's output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{RoadGraph, RoadMetadata, RoadType};
use crate::speed::SpeedTable;

/// Grid spacing at density 1.0, meters.
const BASE_SPACING_M: f64 = 250.0;
/// Vertex jitter amplitude as a fraction of the grid spacing. Kept well
/// under 0.5 so jittered edges never cross edges of neighboring rows or
/// columns (the network stays planar).
const JITTER_FRAC: f64 = 0.2;

fn draw_metadata(rng: &mut ChaCha8Rng) -> RoadMetadata {
    let road_type = RoadType::ALL[rng.gen_range(0..RoadType::ALL.len())];
    let lanes = rng.gen_range(1..=3);
    let paved = rng.gen_bool(0.75);
    RoadMetadata::new(road_type, lanes, paved)
}

/// Generate a connected, planar street grid with jittered intersections
/// covering roughly `extent_m` × `extent_m` meters. `density` scales the
/// number of streets (1.0 ≈ one street every 250 m); densities too low
/// for a 2×2 grid degenerate to a single road. Deterministic in `seed`.
///
/// Every street (grid row or column) carries one metadata draw shared by
/// all its segments; the four border streets share a single draw so that
/// corner segments merged during extraction stay single-speed. Speeds
/// come from the default speed table.
pub fn gen_synthetic_city(extent_m: f64, density: f64, seed: u64) -> RoadGraph {
    let table = SpeedTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = if density > 0.0 {
        (extent_m * density / BASE_SPACING_M).floor() as usize
    } else {
        0
    };
    if n < 2 {
        // Minimal network: one straight road across the extent.
        let md = draw_metadata(&mut rng);
        let s = table.assign_speed(&md);
        let mut b = RoadGraph::builder();
        let y = extent_m / 2.0;
        b.polyline(
            vec![[extent_m * 0.05, y], [extent_m * 0.95, y]],
            Some(s),
            Some(md),
        )
        .unwrap();
        return b.build();
    }

    let spacing = extent_m / n as f64;
    let offset = spacing / 2.0;
    // Street metadata: border streets (first/last row and column) share
    // one draw; interior rows and columns each get their own.
    let border_md = draw_metadata(&mut rng);
    let row_md: Vec<RoadMetadata> = (0..n)
        .map(|j| {
            if j == 0 || j == n - 1 {
                border_md
            } else {
                draw_metadata(&mut rng)
            }
        })
        .collect();
    let col_md: Vec<RoadMetadata> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                border_md
            } else {
                draw_metadata(&mut rng)
            }
        })
        .collect();

    // Jittered vertex positions, row-major.
    let jitter = JITTER_FRAC * spacing;
    let mut pos = vec![[0.0f64; 2]; n * n];
    for j in 0..n {
        for i in 0..n {
            let x = offset + i as f64 * spacing + rng.gen_range(-jitter..jitter);
            let y = offset + j as f64 * spacing + rng.gen_range(-jitter..jitter);
            pos[j * n + i] = [x.clamp(5.0, extent_m - 5.0), y.clamp(5.0, extent_m - 5.0)];
        }
    }

    let mut b = RoadGraph::builder();
    for j in 0..n {
        let md = row_md[j];
        let s = table.assign_speed(&md);
        for i in 0..n - 1 {
            b.polyline(vec![pos[j * n + i], pos[j * n + i + 1]], Some(s), Some(md))
                .unwrap();
        }
    }
    for i in 0..n {
        let md = col_md[i];
        let s = table.assign_speed(&md);
        for j in 0..n - 1 {
            b.polyline(vec![pos[j * n + i], pos[(j + 1) * n + i]], Some(s), Some(md))
                .unwrap();
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn deterministic_given_seed() {
        let a = gen_synthetic_city(2000.0, 1.0, 42);
        let b = gen_synthetic_city(2000.0, 1.0, 42);
        assert_eq!(a.edges(), b.edges());
        let c = gen_synthetic_city(2000.0, 1.0, 43);
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn zero_density_gives_minimal_graph() {
        let g = gen_synthetic_city(1000.0, 0.0, 1);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        g.validate().unwrap();
    }

    #[test]
    fn valid_connected_and_in_bounds() {
        for seed in 0..5 {
            let g = gen_synthetic_city(2000.0, 1.0, seed);
            g.validate().unwrap();
            assert_eq!(g.stats().component_count, 1);
            for node in g.nodes() {
                assert!(node.x >= 0.0 && node.x <= 2000.0);
                assert!(node.y >= 0.0 && node.y <= 2000.0);
            }
            for e in g.edges() {
                assert!(e.speed_mph.is_some());
                assert!(e.metadata.is_some());
            }
        }
    }

    #[test]
    fn twenty_scenes_cover_all_types_and_lane_buckets() {
        let mut types = HashSet::new();
        let mut lanes = HashSet::new();
        for seed in 0..20 {
            let g = gen_synthetic_city(2000.0, 1.0, seed);
            for e in g.edges() {
                let md = e.metadata.unwrap();
                types.insert(md.road_type);
                lanes.insert(md.lanes.min(3));
            }
        }
        assert_eq!(types.len(), 7);
        assert_eq!(lanes.len(), 3);
    }

    #[test]
    fn border_streets_share_metadata() {
        // extent 2000, density 1.0 → n = 8, spacing 250, offset 125,
        // jitter ≤ 50: bottom-row vertices sit at y < 200, left-column
        // vertices at x < 200.
        let g = gen_synthetic_city(2000.0, 1.0, 3);
        let border: Vec<_> = g
            .edges()
            .iter()
            .filter(|e| {
                e.geometry.iter().all(|p| p[1] < 200.0) // bottom row
                    || e.geometry.iter().all(|p| p[0] < 200.0) // left column
            })
            .collect();
        assert!(border.len() >= 14, "expected two full border streets");
        let md = border[0].metadata.unwrap();
        assert!(border.iter().all(|e| e.metadata.unwrap() == md));
        assert!(border.iter().all(|e| e.speed_mph == border[0].speed_mph));
    }
}
