//! Zero-shot evaluation: affine alignment of predictions to ground truth,
//! AbsRel, delta-1, and boundary F1.

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Floor applied to aligned depth so ratio metrics stay defined.
pub const ALIGNED_DEPTH_FLOOR: f64 = 1e-3;

pub const EDGE_THRESHOLDS: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];
pub const EDGE_MATCH_RADIUS: usize = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub n_samples: usize,
    /// Percent.
    pub abs_rel: f64,
    /// Percent.
    pub delta1: f64,
    /// Fraction in [0, 1].
    pub edge_f1: f64,
    pub config_hash: String,
    pub alignment_mode: String,
    /// Sample indices excluded for degenerate alignment, with the reason.
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Closed-form least squares of `s * pred + t ~ gt` over valid pixels.
/// Returns `(s, t, aligned)` with `aligned` clamped to a small positive floor.
pub fn affine_align(
    pred: &Array2<f32>,
    gt: &Array2<f32>,
    mask: &Array2<bool>,
) -> Result<(f64, f64, Array2<f32>)> {
    if pred.shape() != gt.shape() || pred.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "pred {:?}, gt {:?}, mask {:?}",
            pred.shape(),
            gt.shape(),
            mask.shape()
        )));
    }
    let mut n = 0.0f64;
    let mut sp = 0.0f64;
    let mut sg = 0.0f64;
    let mut spp = 0.0f64;
    let mut spg = 0.0f64;
    for ((&p, &g), &m) in pred.iter().zip(gt.iter()).zip(mask.iter()) {
        if m {
            let (p, g) = (p as f64, g as f64);
            n += 1.0;
            sp += p;
            sg += g;
            spp += p * p;
            spg += p * g;
        }
    }
    if n < 2.0 {
        return Err(Error::DegenerateAlignment(format!(
            "need at least 2 valid pixels, have {n}"
        )));
    }
    let det = n * spp - sp * sp;
    // Variance of pred over valid pixels, scaled by n^2.
    let scale = (n * spp).abs().max(sp * sp).max(f64::MIN_POSITIVE);
    if det.abs() <= 1e-12 * scale {
        return Err(Error::DegenerateAlignment(
            "prediction has (near-)zero variance over valid pixels".into(),
        ));
    }
    let s = (n * spg - sp * sg) / det;
    let t = (sg - s * sp) / n;
    let aligned = pred.mapv(|p| ((s * p as f64 + t).max(ALIGNED_DEPTH_FLOOR)) as f32);
    Ok((s, t, aligned))
}

/// Mean over valid pixels of `|gt - aligned| / gt`, in percent.
pub fn abs_rel(aligned: &Array2<f32>, gt: &Array2<f32>, mask: &Array2<bool>) -> Result<f64> {
    let mut acc = 0.0f64;
    let mut n = 0usize;
    for ((&a, &g), &m) in aligned.iter().zip(gt.iter()).zip(mask.iter()) {
        if m {
            let g = g as f64;
            if !(g > 0.0) {
                return Err(Error::Domain(format!("valid gt pixel {g} <= 0")));
            }
            acc += (g - a as f64).abs() / g;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask("abs_rel over empty mask".into()));
    }
    Ok(acc / n as f64 * 100.0)
}

/// Percent of valid pixels with `max(pred/gt, gt/pred) < 1.25` (strict).
/// Nonpositive aligned pixels count as failures.
pub fn delta1(aligned: &Array2<f32>, gt: &Array2<f32>, mask: &Array2<bool>) -> Result<f64> {
    let mut hits = 0usize;
    let mut n = 0usize;
    for ((&a, &g), &m) in aligned.iter().zip(gt.iter()).zip(mask.iter()) {
        if m {
            let (a, g) = (a as f64, g as f64);
            if !(g > 0.0) {
                return Err(Error::Domain(format!("valid gt pixel {g} <= 0")));
            }
            n += 1;
            if a > 0.0 {
                let ratio = (a / g).max(g / a);
                if ratio < 1.25 {
                    hits += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask("delta1 over empty mask".into()));
    }
    Ok(hits as f64 / n as f64 * 100.0)
}

/// Min-max normalized inverse depth, as used by the edge extraction.
fn normalized_inverse(depth: &Array2<f32>) -> Array2<f64> {
    let inv = depth.mapv(|d| 1.0 / (d as f64).max(1e-6));
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for &v in inv.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo < 1e-12 {
        return inv.mapv(|_| 0.0);
    }
    inv.mapv(|v| (v - lo) / (hi - lo))
}

/// Forward-difference gradient magnitude (zero on the trailing edges).
fn gradient_magnitude(x: &Array2<f64>) -> Array2<f64> {
    let (h, w) = x.dim();
    let mut g = Array2::<f64>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let gx = if j + 1 < w { x[[i, j + 1]] - x[[i, j]] } else { 0.0 };
            let gy = if i + 1 < h { x[[i + 1, j]] - x[[i, j]] } else { 0.0 };
            g[[i, j]] = (gx * gx + gy * gy).sqrt();
        }
    }
    g
}

/// Dilates a boolean mask by the Chebyshev radius `r`.
fn dilate(mask: &Array2<bool>, r: usize) -> Array2<bool> {
    let (h, w) = mask.dim();
    let mut out = Array2::from_elem((h, w), false);
    for i in 0..h {
        for j in 0..w {
            if mask[[i, j]] {
                let i0 = i.saturating_sub(r);
                let j0 = j.saturating_sub(r);
                for ii in i0..=(i + r).min(h - 1) {
                    for jj in j0..=(j + r).min(w - 1) {
                        out[[ii, jj]] = true;
                    }
                }
            }
        }
    }
    out
}

/// Boundary F1 averaged over the fixed threshold sweep. Precision is the
/// fraction of predicted edge pixels within `EDGE_MATCH_RADIUS` of a ground
/// truth edge pixel; recall is symmetric. Two empty edge sets agree vacuously
/// (F1 = 1); exactly one empty set scores 0 at that threshold.
pub fn edge_f1(pred_depth: &Array2<f32>, gt_depth: &Array2<f32>) -> Result<f64> {
    if pred_depth.shape() != gt_depth.shape() {
        return Err(Error::Shape(format!(
            "pred {:?} vs gt {:?}",
            pred_depth.shape(),
            gt_depth.shape()
        )));
    }
    if pred_depth.iter().any(|v| !v.is_finite()) || gt_depth.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite input to edge_f1".into()));
    }
    let gp = gradient_magnitude(&normalized_inverse(pred_depth));
    let gg = gradient_magnitude(&normalized_inverse(gt_depth));
    let mut total = 0.0;
    for &tau in EDGE_THRESHOLDS.iter() {
        let ep = gp.mapv(|v| v > tau);
        let eg = gg.mapv(|v| v > tau);
        let np = ep.iter().filter(|&&b| b).count();
        let ng = eg.iter().filter(|&&b| b).count();
        let f1 = if np == 0 && ng == 0 {
            1.0
        } else if np == 0 || ng == 0 {
            0.0
        } else {
            let eg_d = dilate(&eg, EDGE_MATCH_RADIUS);
            let ep_d = dilate(&ep, EDGE_MATCH_RADIUS);
            let matched_p = ep
                .iter()
                .zip(eg_d.iter())
                .filter(|(&p, &gd)| p && gd)
                .count();
            let matched_g = eg
                .iter()
                .zip(ep_d.iter())
                .filter(|(&g, &pd)| g && pd)
                .count();
            let precision = matched_p as f64 / np as f64;
            let recall = matched_g as f64 / ng as f64;
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        };
        total += f1;
    }
    Ok(total / EDGE_THRESHOLDS.len() as f64)
}
