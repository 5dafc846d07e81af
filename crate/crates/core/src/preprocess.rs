//! Depth-to-target conversion, percentile normalization to [-1, 1], and the
//! exact inverses.
//!
//! Prediction targets are depth, disparity (1/D), or square-root disparity
//! (1/sqrt(D)). Normalization is per sample: the `p_lo` percentile of valid
//! values maps to -1, the `p_hi` percentile to +1, and results are clamped to
//! [-1, 1] to fit the codec input range. `NormParams` records the affine map
//! so the chain inverts exactly on unclamped pixels.

use crate::error::{Error, Result};
use crate::raster::Sample;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetMode {
    Depth,
    Disparity,
    SqrtDisparity,
}

impl TargetMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetMode::Depth => "depth",
            TargetMode::Disparity => "disparity",
            TargetMode::SqrtDisparity => "sqrt_disparity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(TargetMode::Depth),
            "disparity" => Ok(TargetMode::Disparity),
            "sqrt_disparity" => Ok(TargetMode::SqrtDisparity),
            other => Err(Error::Config(format!("unknown target mode `{other}`"))),
        }
    }
}

/// Per-sample normalization state; `lo` maps to -1, `hi` to +1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub lo: f64,
    pub hi: f64,
    pub p_lo: f64,
    pub p_hi: f64,
}

impl NormParams {
    /// Serializes as the `norm.txt` sidecar (`lo=`, `hi=`, `p_lo=`, `p_hi=`,
    /// `mode=` lines).
    pub fn write_sidecar(&self, path: &Path, mode: TargetMode) -> Result<()> {
        let text = format!(
            "lo={}\nhi={}\np_lo={}\np_hi={}\nmode={}\n",
            self.lo,
            self.hi,
            self.p_lo,
            self.p_hi,
            mode.as_str()
        );
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_sidecar(path: &Path) -> Result<(NormParams, TargetMode)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lo = None;
        let mut hi = None;
        let mut p_lo = None;
        let mut p_hi = None;
        let mut mode = None;
        for line in text.lines() {
            let line = line.trim();
            if let Some((k, v)) = line.split_once('=') {
                match k {
                    "lo" => lo = v.parse::<f64>().ok(),
                    "hi" => hi = v.parse::<f64>().ok(),
                    "p_lo" => p_lo = v.parse::<f64>().ok(),
                    "p_hi" => p_hi = v.parse::<f64>().ok(),
                    "mode" => mode = TargetMode::parse(v).ok(),
                    _ => {}
                }
            }
        }
        match (lo, hi, p_lo, p_hi, mode) {
            (Some(lo), Some(hi), Some(p_lo), Some(p_hi), Some(mode)) => {
                Ok((NormParams { lo, hi, p_lo, p_hi }, mode))
            }
            _ => Err(Error::parse(path, "incomplete norm sidecar")),
        }
    }
}

/// Converts metric depth to the prediction target. Invalid pixels pass
/// through untouched.
pub fn depth_to_target(
    depth: &Array2<f32>,
    mask: &Array2<bool>,
    mode: TargetMode,
) -> Result<Array2<f32>> {
    if depth.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "depth {:?} vs mask {:?}",
            depth.shape(),
            mask.shape()
        )));
    }
    let mut out = depth.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        if mask[[i, j]] {
            let d = *v as f64;
            if !(d > 0.0) {
                return Err(Error::Domain(format!(
                    "valid pixel ({i},{j}) has depth {d} <= 0"
                )));
            }
            *v = match mode {
                TargetMode::Depth => d,
                TargetMode::Disparity => 1.0 / d,
                TargetMode::SqrtDisparity => 1.0 / d.sqrt(),
            } as f32;
        }
    }
    Ok(out)
}

/// Inverse of [`depth_to_target`]. Pixels with `t <= 0` in the inverse modes
/// are flagged invalid in the returned mask rather than erroring per pixel.
pub fn target_to_depth(target: &Array2<f32>, mode: TargetMode) -> (Array2<f32>, Array2<bool>) {
    let mut valid = Array2::from_elem(target.raw_dim(), true);
    let mut out = target.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        let t = *v as f64;
        match mode {
            TargetMode::Depth => {}
            TargetMode::Disparity | TargetMode::SqrtDisparity => {
                if !(t > 0.0) {
                    valid[[i, j]] = false;
                    *v = 0.0;
                    continue;
                }
                *v = match mode {
                    TargetMode::Disparity => 1.0 / t,
                    TargetMode::SqrtDisparity => 1.0 / (t * t),
                    TargetMode::Depth => unreachable!(),
                } as f32;
            }
        }
    }
    (out, valid)
}

/// Linear-interpolation percentile of an ascending slice, q in [0, 100].
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        return sorted[lo];
    }
    sorted[lo] * (1.0 - frac) + sorted[hi.min(n - 1)] * frac
}

/// Maps the `p_lo` percentile of valid values to -1 and `p_hi` to +1, clamping
/// the result to [-1, 1]. The affine map is applied to every pixel; the mask
/// keeps deciding which pixels downstream losses and metrics may use.
pub fn normalize_percentile(
    target: &Array2<f32>,
    mask: &Array2<bool>,
    p_lo: f64,
    p_hi: f64,
) -> Result<(Array2<f32>, NormParams)> {
    if target.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "target {:?} vs mask {:?}",
            target.shape(),
            mask.shape()
        )));
    }
    if !(0.0 <= p_lo && p_lo < p_hi && p_hi <= 100.0) {
        return Err(Error::Config(format!(
            "bad percentile pair ({p_lo}, {p_hi})"
        )));
    }
    let mut valid: Vec<f64> = target
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v as f64)
        .collect();
    if valid.len() < 2 {
        return Err(Error::DegenerateRange(format!(
            "need at least 2 valid pixels, have {}",
            valid.len()
        )));
    }
    valid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = percentile_sorted(&valid, p_lo);
    let hi = percentile_sorted(&valid, p_hi);
    let floor = 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0);
    if !(hi - lo > floor) {
        return Err(Error::DegenerateRange(format!(
            "percentile range collapsed: lo={lo}, hi={hi}"
        )));
    }
    let params = NormParams { lo, hi, p_lo, p_hi };
    let normalized = target.mapv(|v| {
        let n = 2.0 * (v as f64 - lo) / (hi - lo) - 1.0;
        n.clamp(-1.0, 1.0) as f32
    });
    Ok((normalized, params))
}

/// Exact affine inverse of [`normalize_percentile`] for unclamped values.
pub fn denormalize(normalized: &Array2<f32>, params: &NormParams) -> Array2<f32> {
    normalized.mapv(|n| {
        ((n as f64 + 1.0) / 2.0 * (params.hi - params.lo) + params.lo) as f32
    })
}

/// Normalized histogram (mass sums to 1) of per-sample-normalized target
/// values over valid pixels, pooled across the dataset. Bins cover [-1, 1].
pub fn target_histogram(samples: &[Sample], mode: TargetMode, bins: usize) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Config("empty dataset for histogram".into()));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0u64; bins];
    let mut total = 0u64;
    for s in samples {
        let target = depth_to_target(&s.depth.0, &s.mask.0, mode)?;
        let (norm, _) = normalize_percentile(&target, &s.mask.0, 2.0, 98.0)?;
        for (&v, &m) in norm.iter().zip(s.mask.0.iter()) {
            if m {
                let u = ((v as f64 + 1.0) / 2.0 * bins as f64).floor() as i64;
                let b = u.clamp(0, bins as i64 - 1) as usize;
                counts[b] += 1;
                total += 1;
            }
        }
    }
    Ok(counts
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect())
}

/// Shannon entropy of a histogram, in nats.
pub fn histogram_entropy(hist: &[f64]) -> f64 {
    hist.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::generate_scene;
    use crate::raster::DomainTag;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn all_true(h: usize, w: usize) -> Array2<bool> {
        Array2::from_elem((h, w), true)
    }

    #[test]
    fn target_conversions_match_hand_values() {
        let d = arr2(&[[4.0f32]]);
        let m = all_true(1, 1);
        assert_eq!(
            depth_to_target(&d, &m, TargetMode::SqrtDisparity).unwrap()[[0, 0]],
            0.5
        );
        assert_eq!(
            depth_to_target(&d, &m, TargetMode::Disparity).unwrap()[[0, 0]],
            0.25
        );
        assert_eq!(depth_to_target(&d, &m, TargetMode::Depth).unwrap(), d);

        let (back, valid) = target_to_depth(&arr2(&[[0.5f32]]), TargetMode::SqrtDisparity);
        assert_eq!(back[[0, 0]], 4.0);
        assert!(valid[[0, 0]]);
        let (back, _) = target_to_depth(&arr2(&[[0.25f32]]), TargetMode::Disparity);
        assert_eq!(back[[0, 0]], 4.0);
    }

    #[test]
    fn nonpositive_valid_depth_is_domain_error() {
        let d = arr2(&[[1.0f32, 0.0]]);
        let m = all_true(1, 2);
        assert!(matches!(
            depth_to_target(&d, &m, TargetMode::Disparity),
            Err(Error::Domain(_))
        ));
        // Masked-out zero passes through.
        let m2 = arr2(&[[true, false]]);
        let t = depth_to_target(&d, &m2, TargetMode::Disparity).unwrap();
        assert_eq!(t[[0, 1]], 0.0);
    }

    #[test]
    fn nonpositive_target_flagged_invalid_on_inversion() {
        let t = arr2(&[[0.5f32, -0.1]]);
        let (_, valid) = target_to_depth(&t, TargetMode::SqrtDisparity);
        assert!(valid[[0, 0]]);
        assert!(!valid[[0, 1]]);
    }

    #[test]
    fn percentile_normalization_endpoints_and_midpoint() {
        // linspace(0, 100, 101): percentile(2) = 2, percentile(98) = 98.
        let vals: Vec<f32> = (0..=100).map(|v| v as f32).collect();
        let t = Array2::from_shape_vec((1, 101), vals).unwrap();
        let m = all_true(1, 101);
        let (n, p) = normalize_percentile(&t, &m, 2.0, 98.0).unwrap();
        assert_abs_diff_eq!(p.lo, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.hi, 98.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n[[0, 2]] as f64, -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(n[[0, 98]] as f64, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(n[[0, 50]] as f64, 0.0, epsilon = 1e-6);
        // Clamped tails.
        assert_eq!(n[[0, 0]], -1.0);
        assert_eq!(n[[0, 100]], 1.0);
    }

    #[test]
    fn constant_raster_is_degenerate() {
        let t = Array2::from_elem((4, 4), 3.0f32);
        let m = all_true(4, 4);
        assert!(matches!(
            normalize_percentile(&t, &m, 2.0, 98.0),
            Err(Error::DegenerateRange(_))
        ));
    }

    #[test]
    fn denormalize_inverts_unclamped_values() {
        let vals: Vec<f32> = (0..=100).map(|v| v as f32).collect();
        let t = Array2::from_shape_vec((1, 101), vals).unwrap();
        let m = all_true(1, 101);
        let (n, p) = normalize_percentile(&t, &m, 2.0, 98.0).unwrap();
        let back = denormalize(&n, &p);
        for j in 2..=98 {
            assert_abs_diff_eq!(back[[0, j]], t[[0, j]], epsilon = 1e-4);
        }
        // normalized -1 recovers lo exactly.
        let neg1 = denormalize(&arr2(&[[-1.0f32]]), &p);
        assert_abs_diff_eq!(neg1[[0, 0]] as f64, p.lo, epsilon = 1e-6);
    }

    #[test]
    fn full_chain_round_trip_within_1e5_relative() {
        let s = generate_scene(31, DomainTag::IndoorLike, (32, 32)).unwrap();
        for mode in [
            TargetMode::Depth,
            TargetMode::Disparity,
            TargetMode::SqrtDisparity,
        ] {
            let t = depth_to_target(&s.depth.0, &s.mask.0, mode).unwrap();
            let (n, p) = normalize_percentile(&t, &s.mask.0, 2.0, 98.0).unwrap();
            let dn = denormalize(&n, &p);
            let (back, _) = target_to_depth(&dn, mode);
            for ((i, j), &m) in s.mask.0.indexed_iter() {
                if !m {
                    continue;
                }
                let tv = t[[i, j]] as f64;
                // Skip pixels clamped by normalization; they are documented
                // as unrecoverable.
                if tv < p.lo || tv > p.hi {
                    continue;
                }
                let orig = s.depth.0[[i, j]] as f64;
                let rec = back[[i, j]] as f64;
                let rel = (orig - rec).abs() / orig;
                assert!(rel < 1e-5, "mode {mode:?} pixel ({i},{j}): rel {rel}");
            }
        }
    }

    #[test]
    fn monotonicity_of_depth_to_target() {
        let d = arr2(&[[1.0f32, 2.0, 4.0, 8.0]]);
        let m = all_true(1, 4);
        for (mode, increasing) in [
            (TargetMode::Depth, true),
            (TargetMode::Disparity, false),
            (TargetMode::SqrtDisparity, false),
        ] {
            let t = depth_to_target(&d, &m, mode).unwrap();
            for j in 0..3 {
                if increasing {
                    assert!(t[[0, j]] < t[[0, j + 1]]);
                } else {
                    assert!(t[[0, j]] > t[[0, j + 1]]);
                }
            }
        }
    }

    #[test]
    fn histogram_mass_and_entropy_direction() {
        let outdoor: Vec<_> = (0..6)
            .map(|s| generate_scene(s, DomainTag::OutdoorLike, (32, 32)).unwrap())
            .collect();
        let h_depth = target_histogram(&outdoor, TargetMode::Depth, 50).unwrap();
        let h_sqrt = target_histogram(&outdoor, TargetMode::SqrtDisparity, 50).unwrap();
        assert_abs_diff_eq!(h_depth.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h_sqrt.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        let e_depth = histogram_entropy(&h_depth);
        let e_sqrt = histogram_entropy(&h_sqrt);
        assert!(
            e_sqrt > e_depth,
            "sqrt-disparity entropy {e_sqrt} should exceed depth entropy {e_depth}"
        );
    }

    #[test]
    fn norm_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("norm.txt");
        let p = NormParams {
            lo: 0.125,
            hi: 1.75,
            p_lo: 2.0,
            p_hi: 98.0,
        };
        p.write_sidecar(&path, TargetMode::SqrtDisparity).unwrap();
        let (q, mode) = NormParams::read_sidecar(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(mode, TargetMode::SqrtDisparity);
    }
}
