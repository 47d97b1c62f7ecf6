//! Rasterize labeled road graphs into training/prediction masks, and the
//! noisy oracle segmenter that stands in for a trained model.
//!
//! Three mask formats share one buffering rule: a pixel belongs to a road
//! when its center lies within `halfwidth_m` (2 m by default) of the edge
//! polyline.
//!
//!   * binary: one band, road = 1.
//!   * continuous: one band, road = speed / 65 mph, overlaps take the max.
//!   * multi-class: 7 speed-channel bands plus a background band.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTransform;
use crate::graph::{polyline_length, Point, RoadGraph};
use crate::raster::RasterMask;
use crate::speed::{speed_to_channel, N_CHANNELS};

pub const DEFAULT_HALFWIDTH_M: f64 = 2.0;

/// Band index of the background channel in a multi-class mask.
pub const BACKGROUND_BAND: usize = N_CHANNELS;

fn point_segment_dist2(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = ap[0] - t * ab[0];
    let dy = ap[1] - t * ab[1];
    dx * dx + dy * dy
}

/// Visit every pixel whose center lies within `halfwidth_m` of the polyline.
/// Pixels may be visited more than once when segment boxes overlap.
fn for_each_buffer_pixel(
    transform: &GeoTransform,
    polyline: &[Point],
    halfwidth_m: f64,
    mut f: impl FnMut(usize, usize),
) {
    let ps = transform.pixel_size;
    let hw2 = halfwidth_m * halfwidth_m;
    for seg in polyline.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let minx = a[0].min(b[0]) - halfwidth_m;
        let maxx = a[0].max(b[0]) + halfwidth_m;
        let miny = a[1].min(b[1]) - halfwidth_m;
        let maxy = a[1].max(b[1]) + halfwidth_m;
        // Pixel-center ranges covering the expanded segment box.
        let c0 = (((minx - transform.origin_x) / ps - 0.5).ceil().max(0.0)) as usize;
        let c1 = ((maxx - transform.origin_x) / ps - 0.5).floor();
        let r0 = (((transform.origin_y - maxy) / ps - 0.5).ceil().max(0.0)) as usize;
        let r1 = ((transform.origin_y - miny) / ps - 0.5).floor();
        if c1 < 0.0 || r1 < 0.0 {
            continue;
        }
        let c1 = (c1 as usize).min(transform.width.saturating_sub(1));
        let r1 = (r1 as usize).min(transform.height.saturating_sub(1));
        for row in r0..=r1 {
            let y = transform.origin_y - (row as f64 + 0.5) * ps;
            for col in c0..=c1 {
                let x = transform.origin_x + (col as f64 + 0.5) * ps;
                if point_segment_dist2([x, y], a, b) <= hw2 {
                    f(col, row);
                }
            }
        }
    }
}

/// Binary road mask: 1 on the buffered centerlines, 0 elsewhere.
pub fn render_binary_mask(
    graph: &RoadGraph,
    transform: &GeoTransform,
    halfwidth_m: f64,
) -> Result<RasterMask> {
    if !(halfwidth_m > 0.0) {
        return Err(Error::domain("halfwidth must be positive"));
    }
    let mut mask = RasterMask::zeros(1, transform.clone())?;
    let w = transform.width;
    for e in graph.edges() {
        let band = mask.band_mut(0);
        for_each_buffer_pixel(transform, &e.geometry, halfwidth_m, |c, r| {
            band[r * w + c] = 1.0;
        });
    }
    Ok(mask)
}

/// Continuous speed mask: road pixels carry speed / 65 mph; overlapping
/// edges take the maximum.
pub fn render_continuous_mask(
    graph: &RoadGraph,
    transform: &GeoTransform,
    halfwidth_m: f64,
    max_speed_mph: f64,
) -> Result<RasterMask> {
    if !(halfwidth_m > 0.0) {
        return Err(Error::domain("halfwidth must be positive"));
    }
    let mut mask = RasterMask::zeros(1, transform.clone())?;
    let w = transform.width;
    for (i, e) in graph.edges().iter().enumerate() {
        let speed = e.speed_mph.ok_or_else(|| {
            Error::precondition(format!(
                "continuous mask needs a speed on every edge; edge {i} ({} - {}) has none",
                e.u, e.v
            ))
        })?;
        let v = ((speed / max_speed_mph) as f32).min(1.0);
        let band = mask.band_mut(0);
        for_each_buffer_pixel(transform, &e.geometry, halfwidth_m, |c, r| {
            let px = &mut band[r * w + c];
            if v > *px {
                *px = v;
            }
        });
    }
    Ok(mask)
}

/// Multi-class mask: 7 speed-channel bands (road = 1 in the edge's channel)
/// plus a background band set where no channel is.
pub fn render_multiclass_mask(
    graph: &RoadGraph,
    transform: &GeoTransform,
    halfwidth_m: f64,
) -> Result<RasterMask> {
    if !(halfwidth_m > 0.0) {
        return Err(Error::domain("halfwidth must be positive"));
    }
    let mut mask = RasterMask::zeros(N_CHANNELS + 1, transform.clone())?;
    let w = transform.width;
    for (i, e) in graph.edges().iter().enumerate() {
        let speed = e.speed_mph.ok_or_else(|| {
            Error::precondition(format!(
                "multi-class mask needs a speed on every edge; edge {i} ({} - {}) has none",
                e.u, e.v
            ))
        })?;
        let ch = speed_to_channel(speed)?;
        let band = mask.band_mut(ch);
        for_each_buffer_pixel(transform, &e.geometry, halfwidth_m, |c, r| {
            band[r * w + c] = 1.0;
        });
    }
    recompute_background(&mut mask);
    Ok(mask)
}

fn recompute_background(mask: &mut RasterMask) {
    let n = mask.width() * mask.height();
    let mut bg = vec![1.0f32; n];
    for b in 0..N_CHANNELS {
        let band = mask.band(b);
        for i in 0..n {
            if band[i] > 0.0 {
                bg[i] = 0.0;
            }
        }
    }
    mask.band_mut(BACKGROUND_BAND).copy_from_slice(&bg);
}

/// Noise model of the oracle segmenter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleNoise {
    /// Std of clipped additive Gaussian noise on every band, in [0, 1].
    pub gaussian_sigma: f64,
    /// Per-edge probability of one simulated segmentation gap.
    pub dropout_prob: f64,
    /// Length of each simulated gap in meters.
    pub dropout_len_m: f64,
    pub seed: u64,
}

impl Default for OracleNoise {
    fn default() -> Self {
        OracleNoise {
            gaussian_sigma: 0.0,
            dropout_prob: 0.0,
            dropout_len_m: 0.0,
            seed: 0,
        }
    }
}

impl OracleNoise {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gaussian_sigma) {
            return Err(Error::domain("gaussian_sigma must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::domain("dropout_prob must be in [0, 1]"));
        }
        if self.dropout_len_m < 0.0 {
            return Err(Error::domain("dropout_len_m must be non-negative"));
        }
        Ok(())
    }
}

/// Piece of a polyline between arc positions `from` and `to` (meters).
fn sub_polyline(points: &[Point], from: f64, to: f64) -> Vec<Point> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    let interp = |a: Point, b: Point, t: f64| -> Point {
        [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
    };
    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let (s0, s1) = (acc, acc + len);
        if s1 >= from && s0 <= to && len > 0.0 {
            let t0 = ((from - s0) / len).clamp(0.0, 1.0);
            let t1 = ((to - s0) / len).clamp(0.0, 1.0);
            let p0 = interp(a, b, t0);
            let p1 = interp(a, b, t1);
            if out.is_empty() {
                out.push(p0);
            }
            out.push(p1);
        }
        acc = s1;
    }
    out
}

/// Deterministic synthetic prediction mask: the multi-class render with
/// simulated segmentation gaps and clipped Gaussian noise.
pub fn oracle_predict(
    graph: &RoadGraph,
    transform: &GeoTransform,
    halfwidth_m: f64,
    noise: &OracleNoise,
) -> Result<RasterMask> {
    noise.validate()?;
    let mut mask = render_multiclass_mask(graph, transform, halfwidth_m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let w = transform.width;

    if noise.dropout_prob > 0.0 && noise.dropout_len_m > 0.0 {
        // Erase a little wider than the road so the gap severs the band.
        let erase_r = halfwidth_m + transform.pixel_size;
        for e in graph.edges() {
            // Always draw so the stream stays aligned across configs.
            let roll: f64 = rng.gen();
            let len = polyline_length(&e.geometry);
            let start = rng.gen::<f64>() * (len - noise.dropout_len_m).max(0.0);
            if roll >= noise.dropout_prob {
                continue;
            }
            let cut = sub_polyline(&e.geometry, start, start + noise.dropout_len_m);
            if cut.len() < 2 {
                continue;
            }
            for b in 0..N_CHANNELS {
                let band = mask.band_mut(b);
                for_each_buffer_pixel(transform, &cut, erase_r, |c, r| {
                    band[r * w + c] = 0.0;
                });
            }
        }
        recompute_background(&mut mask);
    }

    if noise.gaussian_sigma > 0.0 {
        let normal = Normal::new(0.0f32, noise.gaussian_sigma as f32)
            .map_err(|e| Error::domain(format!("bad noise sigma: {e}")))?;
        for v in mask.samples_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok(mask)
}
