//! Training objectives: latent MSE, masked pixel MSE, multi-directional
//! gradient stacks, and the weighted gradient Huber loss.
//!
//! The Huber variant follows its printed form exactly: linear (`delta * |x|`)
//! for `|x| <= delta`, quadratic plus offset (`x^2/2 + delta^2/2`) otherwise.
//! Both branches evaluate to `delta^2` at the knee, so the loss is continuous.
//! A classical Huber is available behind [`HuberKind::Classical`] for
//! comparison runs.

use crate::error::{Error, Result};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

/// Fixed direction order: horizontal, vertical, diagonal, anti-diagonal.
pub const GRADIENT_DIRECTIONS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HuberKind {
    /// Linear inside the knee, quadratic outside (as printed).
    PaperVariant,
    /// Quadratic inside the knee, linear outside.
    Classical,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossConfig {
    pub delta: f64,
    pub lambda_fa: f64,
    pub lambda_h: f64,
    pub huber_kind: HuberKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            delta: 0.1,
            lambda_fa: 1.0,
            lambda_h: 0.001,
            huber_kind: HuberKind::PaperVariant,
        }
    }
}

/// Mean squared difference over all latent elements.
pub fn latent_loss(z_gt: &Array3<f64>, z_pred: &Array3<f64>) -> Result<f64> {
    if z_gt.dim() != z_pred.dim() {
        return Err(Error::Shape(format!(
            "latent shapes {:?} vs {:?}",
            z_gt.dim(),
            z_pred.dim()
        )));
    }
    let n = z_gt.len() as f64;
    Ok(z_gt
        .iter()
        .zip(z_pred.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// d latent_loss / d z_pred.
pub fn latent_loss_backward(z_gt: &Array3<f64>, z_pred: &Array3<f64>) -> Array3<f64> {
    let n = z_gt.len() as f64;
    let mut g = z_pred - z_gt;
    g *= 2.0 / n;
    g
}

/// Mean squared difference over valid pixels only.
pub fn pixel_loss(gt: &Array2<f64>, pred: &Array2<f64>, mask: &Array2<bool>) -> Result<f64> {
    if gt.dim() != pred.dim() || gt.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "pixel loss shapes gt {:?}, pred {:?}, mask {:?}",
            gt.dim(),
            pred.dim(),
            mask.shape()
        )));
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for ((&g, &p), &m) in gt.iter().zip(pred.iter()).zip(mask.iter()) {
        if m {
            acc += (g - p) * (g - p);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask("pixel loss over empty mask".into()));
    }
    Ok(acc / n as f64)
}

/// d pixel_loss / d pred; zero on invalid pixels.
pub fn pixel_loss_backward(
    gt: &Array2<f64>,
    pred: &Array2<f64>,
    mask: &Array2<bool>,
) -> Array2<f64> {
    let n = mask.iter().filter(|&&m| m).count().max(1) as f64;
    let mut g = Array2::<f64>::zeros(gt.raw_dim());
    for ((gv, (&gt_v, &p)), &m) in g
        .iter_mut()
        .zip(gt.iter().zip(pred.iter()))
        .zip(mask.iter())
    {
        if m {
            *gv = 2.0 * (p - gt_v) / n;
        }
    }
    g
}

/// H x W x 4 directional differences plus per-entry validity.
#[derive(Debug, Clone)]
pub struct GradientStack {
    pub data: Array3<f64>,
    pub valid: Array3<bool>,
}

/// `G[i, j, k] = map[i + di_k, j + dj_k] - map[i, j]`; entries whose
/// neighbor is out of bounds or whose pixels are invalid are zeroed and
/// marked invalid.
pub fn directional_gradients(map: &Array2<f64>, mask: &Array2<bool>) -> GradientStack {
    let (h, w) = map.dim();
    let mut data = Array3::<f64>::zeros((h, w, 4));
    let mut valid = Array3::from_elem((h, w, 4), false);
    for (k, &(di, dj)) in GRADIENT_DIRECTIONS.iter().enumerate() {
        for i in 0..h {
            let ii = i as isize + di;
            if ii < 0 || ii >= h as isize {
                continue;
            }
            for j in 0..w {
                let jj = j as isize + dj;
                if jj < 0 || jj >= w as isize {
                    continue;
                }
                if mask[[i, j]] && mask[[ii as usize, jj as usize]] {
                    data[[i, j, k]] = map[[ii as usize, jj as usize]] - map[[i, j]];
                    valid[[i, j, k]] = true;
                }
            }
        }
    }
    GradientStack { data, valid }
}

fn huber_value(x: f64, delta: f64, kind: HuberKind) -> f64 {
    let ax = x.abs();
    match kind {
        HuberKind::PaperVariant => {
            if ax <= delta {
                delta * ax
            } else {
                0.5 * x * x + 0.5 * delta * delta
            }
        }
        HuberKind::Classical => {
            if ax <= delta {
                0.5 * x * x
            } else {
                delta * ax - 0.5 * delta * delta
            }
        }
    }
}

fn huber_derivative(x: f64, delta: f64, kind: HuberKind) -> f64 {
    let ax = x.abs();
    match kind {
        HuberKind::PaperVariant => {
            if ax <= delta {
                delta * x.signum()
            } else {
                x
            }
        }
        HuberKind::Classical => {
            if ax <= delta {
                x
            } else {
                delta * x.signum()
            }
        }
    }
}

/// Elementwise Huber penalty on `x = G_gt - G_pred`, averaged over entries
/// valid in both stacks.
pub fn gradient_huber_loss(
    g_gt: &GradientStack,
    g_pred: &GradientStack,
    delta: f64,
    kind: HuberKind,
) -> Result<f64> {
    Ok(gradient_huber_loss_with_grad(g_gt, g_pred, delta, kind)?.0)
}

/// Returns the loss and its gradient with respect to `g_pred.data`.
pub fn gradient_huber_loss_with_grad(
    g_gt: &GradientStack,
    g_pred: &GradientStack,
    delta: f64,
    kind: HuberKind,
) -> Result<(f64, Array3<f64>)> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("huber delta must be > 0, got {delta}")));
    }
    if g_gt.data.dim() != g_pred.data.dim() {
        return Err(Error::Shape(format!(
            "gradient stacks {:?} vs {:?}",
            g_gt.data.dim(),
            g_pred.data.dim()
        )));
    }
    let mut n = 0usize;
    for (&a, &b) in g_gt.valid.iter().zip(g_pred.valid.iter()) {
        if a && b {
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask("gradient huber over empty validity".into()));
    }
    let mut acc = 0.0;
    let mut grad = Array3::<f64>::zeros(g_pred.data.raw_dim());
    for (((&gv, &pv), (&vg, &vp)), go) in g_gt
        .data
        .iter()
        .zip(g_pred.data.iter())
        .zip(g_gt.valid.iter().zip(g_pred.valid.iter()))
        .zip(grad.iter_mut())
    {
        if vg && vp {
            let x = gv - pv;
            acc += huber_value(x, delta, kind);
            // d/d pred = -d/dx
            *go = -huber_derivative(x, delta, kind) / n as f64;
        }
    }
    Ok((acc / n as f64, grad))
}

/// Adjoint of [`directional_gradients`]: scatters a stack gradient back onto
/// the map the predicted stack was computed from.
pub fn scatter_stack_gradient(g_stack: &Array3<f64>, valid: &Array3<bool>) -> Array2<f64> {
    let (h, w, _) = g_stack.dim();
    let mut g_map = Array2::<f64>::zeros((h, w));
    for (k, &(di, dj)) in GRADIENT_DIRECTIONS.iter().enumerate() {
        for i in 0..h {
            for j in 0..w {
                if valid[[i, j, k]] {
                    let g = g_stack[[i, j, k]];
                    let (ii, jj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                    g_map[[ii, jj]] += g;
                    g_map[[i, j]] -= g;
                }
            }
        }
    }
    g_map
}
