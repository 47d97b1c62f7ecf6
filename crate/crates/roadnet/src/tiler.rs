//! Large-image execution: split the extent into overlapping windows,
//! predict each window (oracle or external mask files), optionally merge
//! cross-validation folds, and stitch the normalized full mask back
//! together before running the extraction pipeline.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTransform;
use crate::graph::RoadGraph;
use crate::graph_clean::{clean_pipeline, CleanConfig};
use crate::infer::{infer_speeds, InferConfig};
use crate::raster::RasterMask;
use crate::refine::{refine_pipeline, RefineConfig};
use crate::render::{oracle_predict, OracleNoise};
use crate::skeleton::{skeleton_to_graph, skeletonize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TilerConfig {
    pub window_px: usize,
    pub overlap_px: usize,
}

impl Default for TilerConfig {
    fn default() -> Self {
        TilerConfig {
            window_px: 2000,
            overlap_px: 500,
        }
    }
}

/// One window of a larger raster extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub col_off: usize,
    pub row_off: usize,
    pub width: usize,
    pub height: usize,
    pub overlap: usize,
}

/// Window offsets along one axis: regular stride `window − overlap`, last
/// window shifted inward so it never exceeds the extent.
fn axis_offsets(extent: usize, window: usize, overlap: usize) -> Vec<usize> {
    if window >= extent {
        return vec![0];
    }
    let stride = window - overlap;
    let last = extent - window;
    let mut offs = Vec::new();
    let mut pos = 0;
    while pos < last {
        offs.push(pos);
        pos += stride;
    }
    offs.push(last);
    offs
}

/// Cover a `width`×`height` extent with overlapping windows.
pub fn split(
    width: usize,
    height: usize,
    window_px: usize,
    overlap_px: usize,
) -> Result<Vec<WindowSpec>> {
    if window_px == 0 {
        return Err(Error::domain("window size must be positive"));
    }
    if overlap_px >= window_px {
        return Err(Error::domain(format!(
            "overlap {overlap_px} px must be smaller than the window {window_px} px"
        )));
    }
    if overlap_px * 2 >= window_px {
        return Err(Error::domain(format!(
            "overlap {overlap_px} px must be under half the window {window_px} px"
        )));
    }
    let w = window_px.min(width);
    let h = window_px.min(height);
    let mut out = Vec::new();
    for &row_off in &axis_offsets(height, h, overlap_px.min(h.saturating_sub(1))) {
        for &col_off in &axis_offsets(width, w, overlap_px.min(w.saturating_sub(1))) {
            out.push(WindowSpec {
                col_off,
                row_off,
                width: w,
                height: h,
                overlap: overlap_px,
            });
        }
    }
    Ok(out)
}

/// Georeferencing of one window cut from a full-extent grid.
pub fn window_transform(full: &GeoTransform, spec: &WindowSpec) -> Result<GeoTransform> {
    GeoTransform::new(
        full.origin_x + spec.col_off as f64 * full.pixel_size,
        full.origin_y - spec.row_off as f64 * full.pixel_size,
        full.pixel_size,
        spec.width,
        spec.height,
    )
}

/// Crop a window out of a full-extent raster.
pub fn crop(mask: &RasterMask, spec: &WindowSpec) -> Result<RasterMask> {
    if spec.col_off + spec.width > mask.width() || spec.row_off + spec.height > mask.height() {
        return Err(Error::domain("window extends beyond the raster"));
    }
    let t = window_transform(&mask.transform, spec)?;
    let mut out = RasterMask::zeros(mask.bands(), t)?;
    for b in 0..mask.bands() {
        for r in 0..spec.height {
            for c in 0..spec.width {
                out.set(b, c, r, mask.get(b, spec.col_off + c, spec.row_off + r));
            }
        }
    }
    Ok(out)
}

/// Per-pixel, per-band arithmetic mean of same-shaped prediction masks.
pub fn merge_fold_predictions(masks: &[RasterMask]) -> Result<RasterMask> {
    let first = masks
        .first()
        .ok_or_else(|| Error::domain("fold merge needs at least one mask"))?;
    for m in &masks[1..] {
        if !m.same_shape(first) || m.transform != first.transform {
            return Err(Error::domain("fold masks must share shape and transform"));
        }
    }
    let mut out = RasterMask::zeros(first.bands(), first.transform.clone())?;
    let k = masks.len() as f64;
    for (i, v) in out.samples_mut().iter_mut().enumerate() {
        // f64 accumulation: k equal contributions divide back exactly.
        let sum: f64 = masks.iter().map(|m| m.samples()[i] as f64).sum();
        *v = (sum / k) as f32;
    }
    Ok(out)
}

/// Coverage summary of a stitched mosaic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageReport {
    pub total_px: usize,
    pub covered_px: usize,
    pub max_count: u32,
}

/// Streaming accumulator for overlapping window predictions: per-pixel
/// sum and coverage count, normalized on finish. Sums are kept in f64 so
/// that `k` equal contributions divide back to the exact input value.
pub struct Stitcher {
    transform: GeoTransform,
    bands: usize,
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl Stitcher {
    pub fn new(bands: usize, transform: GeoTransform) -> Result<Self> {
        if bands == 0 {
            return Err(Error::domain("stitcher needs at least one band"));
        }
        let n = transform.width * transform.height;
        Ok(Stitcher {
            transform,
            bands,
            sums: vec![0.0; bands * n],
            counts: vec![0; n],
        })
    }

    pub fn add(&mut self, spec: &WindowSpec, mask: &RasterMask) -> Result<()> {
        if mask.bands() != self.bands {
            return Err(Error::domain("window band count mismatch"));
        }
        if mask.width() != spec.width || mask.height() != spec.height {
            return Err(Error::domain("window mask does not match its spec"));
        }
        let (fw, fh) = (self.transform.width, self.transform.height);
        if spec.col_off + spec.width > fw || spec.row_off + spec.height > fh {
            return Err(Error::domain("window extends beyond the stitch extent"));
        }
        let n = fw * fh;
        for b in 0..self.bands {
            for r in 0..spec.height {
                let fr = spec.row_off + r;
                for c in 0..spec.width {
                    let fc = spec.col_off + c;
                    self.sums[b * n + fr * fw + fc] += mask.get(b, c, r) as f64;
                }
            }
        }
        for r in 0..spec.height {
            let fr = spec.row_off + r;
            for c in 0..spec.width {
                self.counts[fr * fw + (spec.col_off + c)] += 1;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(RasterMask, CoverageReport)> {
        let n = self.transform.width * self.transform.height;
        let mut out = RasterMask::zeros(self.bands, self.transform)?;
        let data = out.samples_mut();
        for b in 0..self.bands {
            for i in 0..n {
                let cnt = self.counts[i];
                data[b * n + i] = if cnt > 0 {
                    (self.sums[b * n + i] / cnt as f64) as f32
                } else {
                    0.0
                };
            }
        }
        let covered = self.counts.iter().filter(|&&c| c > 0).count();
        let max = self.counts.iter().copied().max().unwrap_or(0);
        Ok((
            out,
            CoverageReport {
                total_px: n,
                covered_px: covered,
                max_count: max,
            },
        ))
    }
}

/// Stitch a set of window predictions into a full mask.
pub fn stitch(
    windows: &[(WindowSpec, RasterMask)],
    bands: usize,
    transform: GeoTransform,
) -> Result<(RasterMask, CoverageReport)> {
    let mut s = Stitcher::new(bands, transform)?;
    for (spec, mask) in windows {
        s.add(spec, mask)?;
    }
    s.finish()
}

/// Where window predictions come from.
#[derive(Debug, Clone)]
pub enum SegmentationSource {
    /// Deterministic synthetic segmenter: rasterize the given labels with
    /// optional noise; `folds` > 1 simulates cross-validation models with
    /// distinct noise streams, merged per window.
    Oracle {
        graph: RoadGraph,
        halfwidth_m: f64,
        noise: OracleNoise,
        folds: usize,
    },
    /// External backend: a directory of per-window mask files named
    /// `mask_r{row_off}_c{col_off}.<ext>` in the shared raster container.
    MaskDir { dir: PathBuf, ext: String },
}

impl SegmentationSource {
    fn predict(&self, spec: &WindowSpec, full: &GeoTransform) -> Result<RasterMask> {
        match self {
            SegmentationSource::Oracle {
                graph,
                halfwidth_m,
                noise,
                folds,
            } => {
                let t = window_transform(full, spec)?;
                let folds = (*folds).max(1);
                let mut preds = Vec::with_capacity(folds);
                for f in 0..folds {
                    let mut n = *noise;
                    // Distinct deterministic stream per window and fold.
                    n.seed = noise
                        .seed
                        .wrapping_add(f as u64)
                        .wrapping_add((spec.row_off as u64) << 20)
                        .wrapping_add((spec.col_off as u64) << 40);
                    preds.push(oracle_predict(graph, &t, *halfwidth_m, &n)?);
                }
                if preds.len() == 1 {
                    Ok(preds.pop().unwrap())
                } else {
                    merge_fold_predictions(&preds)
                }
            }
            SegmentationSource::MaskDir { dir, ext } => {
                let path = dir.join(format!("mask_r{}_c{}.{}", spec.row_off, spec.col_off, ext));
                let m = RasterMask::load(&path)?;
                if m.width() != spec.width || m.height() != spec.height {
                    return Err(Error::domain(format!(
                        "{}: size {}x{} does not match window {}x{}",
                        path.display(),
                        m.width(),
                        m.height(),
                        spec.width,
                        spec.height
                    )));
                }
                Ok(m)
            }
        }
    }

    fn bands(&self, spec: &WindowSpec, full: &GeoTransform) -> Result<usize> {
        match self {
            SegmentationSource::Oracle { .. } => Ok(crate::speed::N_CHANNELS + 1),
            SegmentationSource::MaskDir { dir, ext } => {
                let path = dir.join(format!("mask_r{}_c{}.{}", spec.row_off, spec.col_off, ext));
                let _ = full;
                Ok(RasterMask::load(&path)?.bands())
            }
        }
    }
}

/// Full large-image run: split → predict per window (with fold merging) →
/// stitch → refine → skeletonize → trace → clean → (optional) speed
/// inference. Stage failures carry the stage name.
pub fn run_city_scale(
    source: &SegmentationSource,
    transform: &GeoTransform,
    tiler: &TilerConfig,
    refine: &RefineConfig,
    clean: &CleanConfig,
    infer: Option<&InferConfig>,
) -> Result<RoadGraph> {
    run_city_scale_full(source, transform, tiler, refine, clean, infer, false).map(|r| r.graph)
}

/// Output of [`run_city_scale_full`].
pub struct CityScaleRun {
    pub graph: RoadGraph,
    /// The stitched prediction mask, when requested.
    pub mask: Option<RasterMask>,
    pub coverage: CoverageReport,
}

/// As [`run_city_scale`], optionally keeping the stitched mask for
/// artifact emission.
pub fn run_city_scale_full(
    source: &SegmentationSource,
    transform: &GeoTransform,
    tiler: &TilerConfig,
    refine: &RefineConfig,
    clean: &CleanConfig,
    infer: Option<&InferConfig>,
    keep_mask: bool,
) -> Result<CityScaleRun> {
    let windows = split(
        transform.width,
        transform.height,
        tiler.window_px,
        tiler.overlap_px,
    )
    .map_err(|e| e.in_stage("split"))?;

    let bands = source
        .bands(&windows[0], transform)
        .map_err(|e| e.in_stage("predict"))?;
    let mut stitcher =
        Stitcher::new(bands, transform.clone()).map_err(|e| e.in_stage("stitch"))?;
    for spec in &windows {
        let pred = source
            .predict(spec, transform)
            .map_err(|e| e.in_stage("predict"))?;
        stitcher.add(spec, &pred).map_err(|e| e.in_stage("stitch"))?;
    }
    let (mask, coverage) = stitcher.finish().map_err(|e| e.in_stage("stitch"))?;

    let binary = refine_pipeline(&mask, refine).map_err(|e| e.in_stage("refine"))?;
    let skel = skeletonize(&binary);
    let graph = skeleton_to_graph(&skel).map_err(|e| e.in_stage("skeleton"))?;
    let graph = clean_pipeline(&graph, clean);
    let graph = match infer {
        Some(cfg) => infer_speeds(&graph, &mask, cfg).map_err(|e| e.in_stage("infer-speeds"))?,
        None => graph,
    };
    Ok(CityScaleRun {
        graph,
        mask: keep_mask.then_some(mask),
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(w: usize, h: usize) -> GeoTransform {
        GeoTransform::new(0.0, h as f64, 1.0, w, h).unwrap()
    }

    #[test]
    fn split_examples() {
        let one = split(100, 100, 100, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].width, one[0].height), (100, 100));

        let four = split(3000, 3000, 2000, 500).unwrap();
        assert_eq!(four.len(), 4);
        let offs: Vec<(usize, usize)> = four.iter().map(|w| (w.row_off, w.col_off)).collect();
        assert_eq!(offs, vec![(0, 0), (0, 1000), (1000, 0), (1000, 1000)]);

        let clamped = split(1999, 1999, 2000, 500).unwrap();
        assert_eq!(clamped.len(), 1);
        assert_eq!((clamped[0].width, clamped[0].height), (1999, 1999));

        assert!(split(100, 100, 50, 50).is_err());
        assert!(split(100, 100, 50, 25).is_err());
    }

    #[test]
    fn split_covers_every_pixel() {
        for (w, h, win, ov) in [(3000, 3000, 2000, 500), (2500, 1700, 900, 200)] {
            let windows = split(w, h, win, ov).unwrap();
            let mut covered = vec![0u32; w * h];
            for s in &windows {
                for r in s.row_off..s.row_off + s.height {
                    for c in s.col_off..s.col_off + s.width {
                        covered[r * w + c] += 1;
                    }
                }
            }
            assert!(covered.iter().all(|&c| c > 0));
        }
    }

    #[test]
    fn fold_merge_means() {
        let mut a = RasterMask::zeros(1, t(4, 4)).unwrap();
        let mut b = RasterMask::zeros(1, t(4, 4)).unwrap();
        for v in a.samples_mut() {
            *v = 0.2;
        }
        for v in b.samples_mut() {
            *v = 0.6;
        }
        let m = merge_fold_predictions(&[a.clone()]).unwrap();
        assert_eq!(m, a);
        let m = merge_fold_predictions(&[a, b]).unwrap();
        assert!(m.samples().iter().all(|&v| (v - 0.4).abs() < 1e-7));
        assert!(merge_fold_predictions(&[]).is_err());
    }

    #[test]
    fn fold_merge_reduces_noise_variance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut folds = Vec::new();
        for _ in 0..4 {
            let mut m = RasterMask::zeros(1, t(32, 32)).unwrap();
            for v in m.samples_mut() {
                *v = 0.5 + rng.gen_range(-0.2..0.2);
            }
            folds.push(m);
        }
        let var = |m: &RasterMask| {
            let mean: f32 = m.samples().iter().sum::<f32>() / m.samples().len() as f32;
            m.samples().iter().map(|v| (v - mean).powi(2)).sum::<f32>() / m.samples().len() as f32
        };
        let merged = merge_fold_predictions(&folds).unwrap();
        for f in &folds {
            assert!(var(&merged) < var(f));
        }
    }

    #[test]
    fn stitch_split_is_pixel_exact() {
        use rand::{Rng, SeedableRng};
        let full_t = t(130, 90);
        let mut full = RasterMask::zeros(3, full_t.clone()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for v in full.samples_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        let windows = split(130, 90, 50, 10).unwrap();
        let tiles: Vec<(WindowSpec, RasterMask)> = windows
            .iter()
            .map(|s| (*s, crop(&full, s).unwrap()))
            .collect();
        let (stitched, cov) = stitch(&tiles, 3, full_t).unwrap();
        assert_eq!(stitched.samples(), full.samples());
        assert_eq!(cov.covered_px, cov.total_px);
        assert!(cov.max_count > 1);
    }

    #[test]
    fn half_overlap_means_in_overlap_region() {
        let full_t = t(15, 10);
        let mut a = RasterMask::zeros(1, t(10, 10)).unwrap();
        let mut b = RasterMask::zeros(1, t(10, 10)).unwrap();
        for v in a.samples_mut() {
            *v = 0.2;
        }
        for v in b.samples_mut() {
            *v = 0.6;
        }
        let sa = WindowSpec {
            col_off: 0,
            row_off: 0,
            width: 10,
            height: 10,
            overlap: 5,
        };
        let sb = WindowSpec {
            col_off: 5,
            row_off: 0,
            width: 10,
            height: 10,
            overlap: 5,
        };
        let (m, _) = stitch(&[(sa, a), (sb, b)], 1, full_t).unwrap();
        assert!((m.get(0, 2, 5) - 0.2).abs() < 1e-7);
        assert!((m.get(0, 7, 5) - 0.4).abs() < 1e-7);
        assert!((m.get(0, 12, 5) - 0.6).abs() < 1e-7);
    }

    #[test]
    fn out_of_extent_window_is_error() {
        let mut s = Stitcher::new(1, t(10, 10)).unwrap();
        let m = RasterMask::zeros(1, t(8, 8)).unwrap();
        let spec = WindowSpec {
            col_off: 5,
            row_off: 0,
            width: 8,
            height: 8,
            overlap: 0,
        };
        assert!(s.add(&spec, &m).is_err());
    }

    #[test]
    fn empty_scene_yields_empty_graph() {
        let full = GeoTransform::new(0.0, 120.0, 0.5, 240, 240).unwrap();
        let source = SegmentationSource::Oracle {
            graph: RoadGraph::builder().build(),
            halfwidth_m: 2.0,
            noise: OracleNoise::default(),
            folds: 1,
        };
        let g = run_city_scale(
            &source,
            &full,
            &TilerConfig {
                window_px: 150,
                overlap_px: 30,
            },
            &RefineConfig::default(),
            &CleanConfig::city(),
            None,
        )
        .unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn oracle_round_trip_small_scene() {
        // A plus-shaped network on a 150 m chip.
        let mut b = RoadGraph::builder();
        b.polyline(vec![[10.0, 75.0], [140.0, 75.0]], Some(30.0), None)
            .unwrap();
        b.polyline(vec![[75.0, 10.0], [75.0, 140.0]], Some(30.0), None)
            .unwrap();
        let truth = b.build();
        let full = GeoTransform::new(0.0, 150.0, 0.5, 300, 300).unwrap();
        let source = SegmentationSource::Oracle {
            graph: truth.clone(),
            halfwidth_m: 2.0,
            noise: OracleNoise::default(),
            folds: 1,
        };
        let g = run_city_scale(
            &source,
            &full,
            &TilerConfig {
                window_px: 200,
                overlap_px: 50,
            },
            &RefineConfig::default(),
            &CleanConfig::chip(),
            Some(&InferConfig::default()),
        )
        .unwrap();
        assert!(!g.is_empty());
        let got = g.total_length_m();
        let want = truth.total_length_m();
        assert!(
            (got - want).abs() / want < 0.1,
            "length {got} vs truth {want}"
        );
        assert!(g.edges().iter().all(|e| e.speed_mph == Some(25.0)));
        g.validate().unwrap();
    }

    #[test]
    fn mask_dir_backend_contract() {
        let dir = tempfile::tempdir().unwrap();
        let full = t(60, 40);
        let windows = split(60, 40, 40, 10).unwrap();
        let mut src_mask = RasterMask::zeros(1, full.clone()).unwrap();
        for v in src_mask.samples_mut() {
            *v = 0.5;
        }
        for s in &windows {
            let m = crop(&src_mask, s).unwrap();
            m.save(&dir.path().join(format!("mask_r{}_c{}.msk", s.row_off, s.col_off)))
                .unwrap();
        }
        let source = SegmentationSource::MaskDir {
            dir: dir.path().to_path_buf(),
            ext: "msk".into(),
        };
        for s in &windows {
            let m = source.predict(s, &full).unwrap();
            assert!(m.samples().iter().all(|&v| v == 0.5));
        }
        // Missing file surfaces as an error.
        let bad = WindowSpec {
            col_off: 7,
            row_off: 7,
            width: 40,
            height: 40,
            overlap: 10,
        };
        assert!(source.predict(&bad, &full).is_err());
    }
}
