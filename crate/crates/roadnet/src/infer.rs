//! Assign speeds to extracted edges by sampling the predicted speed mask
//! with small patches along each edge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{RoadEdge, RoadGraph, MPH_TO_MPS};
use crate::raster::RasterMask;
use crate::speed::{channel_to_speed, MAX_SPEED_MPH, N_CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    /// Side length of the square sampling patch, in pixels.
    pub patch_px: usize,
    /// Mask activations below this are treated as background.
    pub background_filter: f64,
    /// Speed used for edges whose patches see no road signal at all.
    pub fallback_mph: f64,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            patch_px: 8,
            background_filter: 0.3,
            fallback_mph: 20.0,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_px == 0 {
            return Err(Error::config("patch_px must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.background_filter) {
            return Err(Error::config("background_filter must be in [0, 1]"));
        }
        if self.fallback_mph <= 0.0 || self.fallback_mph > MAX_SPEED_MPH {
            return Err(Error::config(format!(
                "fallback_mph must be in (0, {MAX_SPEED_MPH}]"
            )));
        }
        Ok(())
    }
}

fn patch_bounds(center: i64, half: i64, extent: usize) -> std::ops::Range<usize> {
    let lo = (center - half).clamp(0, extent as i64) as usize;
    let hi = (center + half).clamp(0, extent as i64) as usize;
    lo..hi
}

/// Speed estimate from one square patch centered on a pixel, or `None`
/// when no pixel in the patch clears the background filter.
///
/// Multi-band masks (7+ channels) vote: each channel counts its pixels
/// that clear the background filter, and the patch reports the bin-center
/// speed of the channel with the most such pixels (ties to the lower
/// channel). A pixel active in several channels counts for each of them,
/// so at crossings the road the patch is centered on keeps the larger
/// count. Single-band masks average the foreground activations and scale
/// to the maximum speed.
pub fn patch_speed(mask: &RasterMask, col: i64, row: i64, cfg: &InferConfig) -> Option<f64> {
    let half = (cfg.patch_px / 2) as i64;
    let reach = half.max(((cfg.patch_px + 1) / 2) as i64);
    let rows = patch_bounds(row, reach, mask.height());
    let cols = patch_bounds(col, reach, mask.width());
    let thresh = cfg.background_filter as f32;
    if mask.bands() >= N_CHANNELS {
        let mut votes = [0u32; N_CHANNELS];
        for r in rows.clone() {
            for c in cols.clone() {
                for (b, count) in votes.iter_mut().enumerate() {
                    if mask.get(b, c, r) >= thresh {
                        *count += 1;
                    }
                }
            }
        }
        let total: u32 = votes.iter().sum();
        if total == 0 {
            return None;
        }
        let winner = votes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap()
            .0;
        Some(channel_to_speed(winner).unwrap())
    } else {
        let mut sum = 0.0f64;
        let mut n = 0u32;
        for r in rows {
            for c in cols.clone() {
                let v = mask.get(0, c, r);
                if v >= thresh {
                    sum += v as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sum / n as f64) * MAX_SPEED_MPH)
    }
}

/// Mean of patch estimates taken at the midpoint of every geometry
/// segment of the edge; `None` when no patch sees any road signal.
pub fn edge_speed(mask: &RasterMask, edge: &RoadEdge, cfg: &InferConfig) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u32;
    for w in edge.geometry.windows(2) {
        let mid = [(w[0][0] + w[1][0]) / 2.0, (w[0][1] + w[1][1]) / 2.0];
        let (pc, pr) = mask.transform.world_to_pixel_f(mid[0], mid[1]);
        if let Some(s) = patch_speed(mask, pc.floor() as i64, pr.floor() as i64, cfg) {
            sum += s;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Return a copy of the graph with every edge's speed and travel time
/// filled in from the mask. Edges with no signal get `fallback_mph`.
pub fn infer_speeds(graph: &RoadGraph, mask: &RasterMask, cfg: &InferConfig) -> Result<RoadGraph> {
    cfg.validate()?;
    let mut b = RoadGraph::builder();
    for n in graph.nodes() {
        b.node_at(n.x, n.y);
    }
    for e in graph.edges() {
        let s = edge_speed(mask, e, cfg)
            .unwrap_or(cfg.fallback_mph)
            .clamp(1.0, MAX_SPEED_MPH);
        b.edge(RoadEdge {
            speed_mph: Some(s),
            travel_time_s: Some(e.length_m / (s * MPH_TO_MPS)),
            ..e.clone()
        });
    }
    Ok(b.build().with_transform(graph.transform().cloned()))
}
