//! Prediction-mask refinement: Gaussian smoothing, thresholding, disk
//! morphology (closing then opening), and small object / hole removal.
//!
//! Kernel sizes are given in meters and converted to pixels through the
//! raster's ground sample distance. Morphology uses a Euclidean disk
//! structuring element implemented with an exact distance transform, so it
//! stays fast at city scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RasterMask};
use crate::speed::N_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Gaussian sigma in meters.
    pub smooth_kernel_m: f64,
    /// Binarization threshold (inclusive).
    pub threshold: f64,
    /// Disk radius for closing/opening, in meters.
    pub morph_kernel_m: f64,
    /// Foreground objects and holes below this area are dropped/filled.
    pub min_area_m2: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            smooth_kernel_m: 2.0,
            threshold: 0.3,
            morph_kernel_m: 2.0,
            min_area_m2: 30.0,
        }
    }
}

/// Per-band Gaussian blur with sigma `kernel_m` meters, truncated at 4
/// sigma, reflect padding at borders.
pub fn gaussian_smooth(mask: &RasterMask, kernel_m: f64) -> Result<RasterMask> {
    if !(kernel_m > 0.0) {
        return Err(Error::domain("smoothing kernel must be positive"));
    }
    let sigma = kernel_m / mask.transform.pixel_size;
    let radius = (4.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        kernel.push((-0.5 * (d / sigma).powi(2)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    let kernel: Vec<f32> = kernel.iter().map(|&k| (k / sum) as f32).collect();

    let (w, h) = (mask.width(), mask.height());
    let mut out = mask.clone();
    let mut tmp = vec![0.0f32; w * h];
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - 1 - i;
            } else {
                return i as usize;
            }
        }
    };
    for b in 0..mask.bands() {
        let src = mask.band(b);
        // Horizontal pass.
        for r in 0..h {
            let row = &src[r * w..(r + 1) * w];
            for c in 0..w {
                let mut acc = 0.0f32;
                for (k, &kv) in kernel.iter().enumerate() {
                    let i = reflect(c as isize + k as isize - radius as isize, w);
                    acc += kv * row[i];
                }
                tmp[r * w + c] = acc;
            }
        }
        // Vertical pass.
        let dst = out.band_mut(b);
        for c in 0..w {
            for r in 0..h {
                let mut acc = 0.0f32;
                for (k, &kv) in kernel.iter().enumerate() {
                    let i = reflect(r as isize + k as isize - radius as isize, h);
                    acc += kv * tmp[i * w + c];
                }
                dst[r * w + c] = acc.clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Threshold a single-band mask; values >= threshold become foreground.
pub fn binarize(mask: &RasterMask, threshold: f64) -> Result<BinaryMask> {
    if mask.bands() != 1 {
        return Err(Error::precondition(
            "binarize expects a single band; flatten multi-class masks first",
        ));
    }
    let mut out = BinaryMask::zeros(mask.transform.clone());
    let src = mask.band(0);
    for (dst, &v) in out.data.iter_mut().zip(src) {
        *dst = (v as f64 >= threshold) as u8;
    }
    Ok(out)
}

// Felzenszwalb-Huttenlocher 1-D squared distance transform.
fn dt1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    // f[p] is +inf everywhere so far; replace.
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

/// Squared Euclidean distance (in pixels) to the nearest foreground pixel.
/// Pixels outside the raster are ignored, which clips structuring elements
/// at the borders.
fn edt_squared(mask: &BinaryMask, invert: bool) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    const BIG: f64 = 1e18;
    let mut grid: Vec<f64> = mask
        .data
        .iter()
        .map(|&v| {
            let fg = (v != 0) != invert;
            if fg {
                0.0
            } else {
                BIG
            }
        })
        .collect();
    let maxdim = w.max(h);
    let mut f = vec![0.0; maxdim];
    let mut d = vec![0.0; maxdim];
    let mut v = vec![0usize; maxdim];
    let mut z = vec![0.0; maxdim + 1];
    // Columns.
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        dt1d(&f[..h], &mut d[..h], &mut v[..h], &mut z[..h + 1]);
        for r in 0..h {
            grid[r * w + c] = d[r];
        }
    }
    // Rows.
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        dt1d(&f[..w], &mut d[..w], &mut v[..w], &mut z[..w + 1]);
        grid[r * w..(r + 1) * w].copy_from_slice(&d[..w]);
    }
    grid
}

fn dilate(mask: &BinaryMask, radius_px: f64) -> BinaryMask {
    let d2 = edt_squared(mask, false);
    let r2 = radius_px * radius_px;
    let mut out = mask.clone();
    for (o, &d) in out.data.iter_mut().zip(&d2) {
        *o = (d <= r2) as u8;
    }
    out
}

fn erode(mask: &BinaryMask, radius_px: f64) -> BinaryMask {
    let d2 = edt_squared(mask, true);
    let r2 = radius_px * radius_px;
    let mut out = mask.clone();
    for (o, &d) in out.data.iter_mut().zip(&d2) {
        *o = (d > r2) as u8;
    }
    out
}

/// Morphological closing followed by opening with a Euclidean disk of
/// radius `kernel_m` meters. Closing runs first so thin roads are not
/// erased before their cracks are filled.
pub fn morph_refine(mask: &BinaryMask, kernel_m: f64) -> Result<BinaryMask> {
    if !(kernel_m > 0.0) {
        return Err(Error::domain("morphology kernel must be positive"));
    }
    let r = kernel_m / mask.transform.pixel_size;
    let closed = erode(&dilate(mask, r), r);
    let opened = dilate(&erode(&closed, r), r);
    Ok(opened)
}

// Flood fill one component starting at `start`; returns its pixels.
// `diag` selects 8- vs 4-connectivity.
fn component(
    data: &[u8],
    visited: &mut [bool],
    w: usize,
    h: usize,
    start: usize,
    value: u8,
    diag: bool,
) -> Vec<usize> {
    let mut stack = vec![start];
    let mut pixels = Vec::new();
    visited[start] = true;
    while let Some(i) = stack.pop() {
        pixels.push(i);
        let (c, r) = (i % w, i / w);
        let mut push = |cc: isize, rr: isize| {
            if cc < 0 || rr < 0 || cc >= w as isize || rr >= h as isize {
                return;
            }
            let j = rr as usize * w + cc as usize;
            if !visited[j] && data[j] == value {
                visited[j] = true;
                stack.push(j);
            }
        };
        push(c as isize - 1, r as isize);
        push(c as isize + 1, r as isize);
        push(c as isize, r as isize - 1);
        push(c as isize, r as isize + 1);
        if diag {
            push(c as isize - 1, r as isize - 1);
            push(c as isize + 1, r as isize - 1);
            push(c as isize - 1, r as isize + 1);
            push(c as isize + 1, r as isize + 1);
        }
    }
    pixels
}

/// Delete foreground components (8-connected) and fill background holes
/// (4-connected, not touching the border) whose area is strictly below
/// `min_area_m2`.
pub fn remove_small(mask: &BinaryMask, min_area_m2: f64) -> Result<BinaryMask> {
    let (w, h) = (mask.width(), mask.height());
    let px_area = mask.transform.pixel_size * mask.transform.pixel_size;
    let mut out = mask.clone();

    // Small foreground objects.
    let mut visited = vec![false; w * h];
    for i in 0..w * h {
        if out.data[i] == 1 && !visited[i] {
            let pixels = component(&out.data, &mut visited, w, h, i, 1, true);
            if (pixels.len() as f64) * px_area < min_area_m2 {
                for p in pixels {
                    out.data[p] = 0;
                }
            }
        }
    }

    // Small holes: background components that never touch the border.
    let mut visited = vec![false; w * h];
    for i in 0..w * h {
        if out.data[i] == 0 && !visited[i] {
            let pixels = component(&out.data, &mut visited, w, h, i, 0, false);
            let touches_border = pixels
                .iter()
                .any(|&p| p % w == 0 || p % w == w - 1 || p / w == 0 || p / w == h - 1);
            if !touches_border && (pixels.len() as f64) * px_area < min_area_m2 {
                for p in pixels {
                    out.data[p] = 1;
                }
            }
        }
    }
    Ok(out)
}

/// Full refinement: flatten (max over speed channels) -> smooth ->
/// binarize -> closing/opening -> small object and hole removal.
pub fn refine_pipeline(mask: &RasterMask, config: &RefineConfig) -> Result<BinaryMask> {
    let flat = if mask.bands() == 1 {
        mask.clone()
    } else {
        mask.flatten_max(0..mask.bands().min(N_CHANNELS))
    };
    let smoothed = gaussian_smooth(&flat, config.smooth_kernel_m)?;
    drop(flat);
    let binary = binarize(&smoothed, config.threshold)?;
    drop(smoothed);
    let refined = morph_refine(&binary, config.morph_kernel_m)?;
    remove_small(&refined, config.min_area_m2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoTransform;

    fn transform(w: usize, h: usize, ps: f64) -> GeoTransform {
        GeoTransform::new(0.0, h as f64 * ps, ps, w, h).unwrap()
    }

    #[test]
    fn smoothing_constant_mask_is_identity() {
        let t = transform(40, 40, 0.3);
        let m = RasterMask::from_band(vec![0.6; 1600], t).unwrap();
        let s = gaussian_smooth(&m, 2.0).unwrap();
        for &v in s.band(0) {
            assert!((v - 0.6).abs() < 1e-6);
        }
    }

    #[test]
    fn smoothing_impulse_matches_kernel() {
        let t = transform(81, 81, 1.0);
        let mut vals = vec![0.0f32; 81 * 81];
        vals[40 * 81 + 40] = 1.0;
        let m = RasterMask::from_band(vals, t).unwrap();
        let sigma = 3.0f64;
        let s = gaussian_smooth(&m, sigma).unwrap();
        // Compare to the directly evaluated separable kernel.
        let radius = (4.0 * sigma).ceil() as i64;
        let k1d: Vec<f64> = (-radius..=radius)
            .map(|d| (-0.5 * (d as f64 / sigma).powi(2)).exp())
            .collect();
        let ksum: f64 = k1d.iter().sum();
        let mut total = 0.0f64;
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                let expect =
                    k1d[(dr + radius) as usize] / ksum * k1d[(dc + radius) as usize] / ksum;
                let got = s.get(0, (40 + dc) as usize, (40 + dr) as usize) as f64;
                assert!((got - expect).abs() < 1e-6);
                total += got;
            }
        }
        assert!((total - 1.0).abs() < 1e-4);
    }

    #[test]
    fn binarize_threshold_is_inclusive() {
        let t = transform(3, 1, 1.0);
        let m = RasterMask::from_band(vec![0.0, 0.3, 0.29999], t).unwrap();
        let b = binarize(&m, 0.3).unwrap();
        assert_eq!(b.data, vec![0, 1, 0]);
    }

    #[test]
    fn morphology_examples() {
        let t = transform(60, 60, 1.0);
        // Solid rectangle much larger than the kernel: unchanged.
        let mut rect = BinaryMask::zeros(t.clone());
        for r in 10..50 {
            for c in 10..50 {
                rect.set(c, r, true);
            }
        }
        let opened_rect = morph_refine(&rect, 2.0).unwrap();
        // Unchanged except that the disk SE rounds the four corners.
        for r in 10..50usize {
            for c in 10..50usize {
                let near_corner = (c < 13 || c >= 47) && (r < 13 || r >= 47);
                if !near_corner {
                    assert!(opened_rect.get(c, r), "lost interior pixel {c},{r}");
                }
            }
        }
        for r in 0..60 {
            for c in 0..60 {
                assert!(!opened_rect.get(c, r) || rect.get(c, r));
            }
        }

        // Isolated speckle: removed by opening.
        let mut speck = rect.clone();
        speck.set(2, 2, true);
        let out = morph_refine(&speck, 2.0).unwrap();
        assert_eq!(out, opened_rect);

        // A 1-px crack across a road band: filled by closing.
        let mut band = BinaryMask::zeros(t);
        for r in 20..30 {
            for c in 0..60 {
                band.set(c, r, c != 31);
            }
        }
        let out = morph_refine(&band, 2.0).unwrap();
        for r in 22..28 {
            assert!(out.get(31, r), "crack not closed at row {r}");
        }
    }

    #[test]
    fn remove_small_area_boundaries() {
        // 0.3 m/px -> 0.09 m^2 per pixel.
        let t = transform(200, 200, 0.3);
        let mut m = BinaryMask::zeros(t);
        // 300 px blob = 27 m^2 < 30: removed.
        for r in 10..25 {
            for c in 10..30 {
                m.set(c, r, true);
            }
        }
        // 334 px blob = 30.06 m^2: kept.
        let mut kept = Vec::new();
        let mut n = 0;
        'outer: for r in 100..120 {
            for c in 100..120 {
                m.set(c, r, true);
                kept.push((c, r));
                n += 1;
                if n == 334 {
                    break 'outer;
                }
            }
        }
        let out = remove_small(&m, 30.0).unwrap();
        assert!(!out.get(15, 15));
        for &(c, r) in &kept {
            assert!(out.get(c, r));
        }
    }

    #[test]
    fn remove_small_fills_holes() {
        let t = transform(100, 100, 0.3);
        let mut m = BinaryMask::zeros(t);
        for r in 20..60 {
            for c in 20..60 {
                m.set(c, r, true);
            }
        }
        // 10-px hole inside the band.
        for i in 0..10 {
            m.set(30 + i, 40, false);
        }
        let out = remove_small(&m, 30.0).unwrap();
        for i in 0..10 {
            assert!(out.get(30 + i, 40));
        }
        // No remaining component or hole below the threshold.
        assert_eq!(out.count_foreground(), 40 * 40);
    }

    #[test]
    fn refine_stages_are_translation_equivariant() {
        let t = transform(80, 80, 1.0);
        let mut m = BinaryMask::zeros(t.clone());
        for r in 30..40 {
            for c in 10..60 {
                m.set(c, r, (c + r) % 17 != 0);
            }
        }
        let shifted = {
            let mut s = BinaryMask::zeros(t);
            for r in 0..75 {
                for c in 0..75 {
                    s.set(c + 5, r + 5, m.get(c, r));
                }
            }
            s
        };
        let a = morph_refine(&m, 2.0).unwrap();
        let b = morph_refine(&shifted, 2.0).unwrap();
        for r in 10..70 {
            for c in 10..70 {
                assert_eq!(a.get(c - 5, r - 5), b.get(c, r), "mismatch at {c},{r}");
            }
        }
    }

    #[test]
    fn morph_and_remove_small_are_idempotent() {
        let t = transform(120, 120, 0.5);
        let mut m = BinaryMask::zeros(t);
        for r in 40..80 {
            for c in 10..110 {
                m.set(c, r, (c * 7 + r) % 23 != 0);
            }
        }
        let once = remove_small(&morph_refine(&m, 2.0).unwrap(), 30.0).unwrap();
        let twice = remove_small(&morph_refine(&once, 2.0).unwrap(), 30.0).unwrap();
        assert_eq!(once, twice);
    }

    // Smoothing followed by the 0.3 threshold dilates a clean band by
    // roughly 0.52 sigma, so the full pipeline is stable rather than
    // exactly idempotent: a second application contains the first and grows
    // by no more than that bound.
    #[test]
    fn refine_pipeline_is_stable_on_clean_binary() {
        let t = transform(120, 120, 0.5);
        let mut m = BinaryMask::zeros(t);
        for r in 40..80 {
            for c in 10..110 {
                m.set(c, r, true);
            }
        }
        let cfg = RefineConfig::default();
        let once = refine_pipeline(&m.to_raster(), &cfg).unwrap();
        let twice = refine_pipeline(&once.to_raster(), &cfg).unwrap();
        let grow_px = (0.6 * cfg.smooth_kernel_m / 0.5).ceil() as isize;
        for r in 0..120isize {
            for c in 0..120isize {
                if once.get(c as usize, r as usize) {
                    assert!(twice.get(c as usize, r as usize), "pipeline lost {c},{r}");
                }
                if twice.get(c as usize, r as usize) {
                    // Some pixel of `once` lies within the growth bound.
                    let mut near = false;
                    'scan: for dr in -grow_px..=grow_px {
                        for dc in -grow_px..=grow_px {
                            let (cc, rr) = (c + dc, r + dr);
                            if cc >= 0
                                && rr >= 0
                                && cc < 120
                                && rr < 120
                                && once.get(cc as usize, rr as usize)
                            {
                                near = true;
                                break 'scan;
                            }
                        }
                    }
                    assert!(near, "pipeline grew beyond bound at {c},{r}");
                }
            }
        }
    }
}
