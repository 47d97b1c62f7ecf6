//! Reference implementations of the combined segmentation losses:
//! `alpha * focal + (1 - alpha) * dice` for multi-class masks and
//! `alpha * cross-entropy + (1 - alpha) * dice` for continuous masks.
//!
//! These are pure scoring functions used to sanity-check masks; no training
//! happens here.

use crate::error::{Error, Result};
use crate::raster::RasterMask;

/// Additive smoothing in the Dice denominator.
pub const DICE_EPS: f64 = 1e-6;
/// Default mixing weight between the pixel loss and the Dice term.
pub const DEFAULT_ALPHA: f64 = 0.75;
/// Default focal exponent.
pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;

const CLIP: f64 = 1e-7;

fn check_shapes(pred: &RasterMask, truth: &RasterMask) -> Result<()> {
    if !pred.same_shape(truth) {
        return Err(Error::domain(format!(
            "shape mismatch: pred {}x{}x{} vs truth {}x{}x{}",
            pred.bands(),
            pred.height(),
            pred.width(),
            truth.bands(),
            truth.height(),
            truth.width()
        )));
    }
    Ok(())
}

/// 1 - mean per-band Dice coefficient.
fn dice_term(pred: &RasterMask, truth: &RasterMask) -> f64 {
    let mut mean = 0.0;
    for b in 0..pred.bands() {
        let (p, t) = (pred.band(b), truth.band(b));
        let mut inter = 0.0f64;
        let mut psum = 0.0f64;
        let mut tsum = 0.0f64;
        for i in 0..p.len() {
            inter += p[i] as f64 * t[i] as f64;
            psum += p[i] as f64;
            tsum += t[i] as f64;
        }
        mean += (2.0 * inter + DICE_EPS) / (psum + tsum + DICE_EPS);
    }
    1.0 - mean / pred.bands() as f64
}

/// Mean focal loss over all pixels and bands.
fn focal_term(pred: &RasterMask, truth: &RasterMask, gamma: f64) -> f64 {
    let (p, t) = (pred.samples(), truth.samples());
    let mut sum = 0.0f64;
    for i in 0..p.len() {
        let pi = (p[i] as f64).clamp(CLIP, 1.0 - CLIP);
        let ti = t[i] as f64;
        sum -= ti * (1.0 - pi).powf(gamma) * pi.ln()
            + (1.0 - ti) * pi.powf(gamma) * (1.0 - pi).ln();
    }
    sum / p.len() as f64
}

/// Mean binary cross entropy over all pixels and bands.
fn bce_term(pred: &RasterMask, truth: &RasterMask) -> f64 {
    let (p, t) = (pred.samples(), truth.samples());
    let mut sum = 0.0f64;
    for i in 0..p.len() {
        let pi = (p[i] as f64).clamp(CLIP, 1.0 - CLIP);
        let ti = t[i] as f64;
        sum -= ti * pi.ln() + (1.0 - ti) * (1.0 - pi).ln();
    }
    sum / p.len() as f64
}

/// Combined focal + Dice loss for multi-class masks.
pub fn combined_loss_multiclass(
    pred: &RasterMask,
    truth: &RasterMask,
    alpha: f64,
    focal_gamma: f64,
) -> Result<f64> {
    check_shapes(pred, truth)?;
    Ok(alpha * focal_term(pred, truth, focal_gamma) + (1.0 - alpha) * dice_term(pred, truth))
}

/// Combined cross-entropy + Dice loss for continuous masks.
pub fn combined_loss_continuous(pred: &RasterMask, truth: &RasterMask, alpha: f64) -> Result<f64> {
    check_shapes(pred, truth)?;
    Ok(alpha * bce_term(pred, truth) + (1.0 - alpha) * dice_term(pred, truth))
}
