//! Central-finite-difference verification of analytic parameter gradients.

use super::param::{GradSet, ParamSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub passed: usize,
    pub worst_rel: f64,
    /// (param name, flat index, analytic, numeric) for failures.
    pub failures: Vec<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            return 1.0;
        }
        self.passed as f64 / self.checked as f64
    }
}

/// Samples `n_samples` scalar parameters uniformly across `ps` and compares
/// `analytic` against central differences of `loss_fn` with step `h`.
/// A coordinate passes when `|a - n| <= rel_tol * max(|a|, |n|) + abs_tol`.
pub fn check_parameter_gradients<F>(
    ps: &mut ParamSet,
    analytic: &GradSet,
    mut loss_fn: F,
    n_samples: usize,
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = ps.values().iter().map(|v| v.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut report = GradCheckReport {
        checked: 0,
        passed: 0,
        worst_rel: 0.0,
        failures: Vec::new(),
    };
    for _ in 0..n_samples {
        let mut flat = rng.gen_range(0..total);
        let mut pi = 0;
        while flat >= sizes[pi] {
            flat -= sizes[pi];
            pi += 1;
        }
        let orig = ps.values()[pi].as_slice().unwrap()[flat];
        ps.values_mut()[pi].as_slice_mut().unwrap()[flat] = orig + h;
        let lp = loss_fn(ps);
        ps.values_mut()[pi].as_slice_mut().unwrap()[flat] = orig - h;
        let lm = loss_fn(ps);
        ps.values_mut()[pi].as_slice_mut().unwrap()[flat] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        let a = analytic.grads[pi].as_slice().unwrap()[flat];
        let err = (a - numeric).abs();
        let scale = a.abs().max(numeric.abs());
        let rel = if scale > 0.0 { err / scale } else { 0.0 };
        report.checked += 1;
        if err <= rel_tol * scale + abs_tol {
            report.passed += 1;
        } else {
            report
                .failures
                .push((ps.names()[pi].clone(), flat, a, numeric));
        }
        report.worst_rel = report.worst_rel.max(rel);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    #[test]
    fn detects_correct_and_wrong_gradients() {
        let mut ps = ParamSet::new();
        let r = ps.add("q.w", ArrayD::from_elem(vec![3], 1.5));
        // loss = sum(x^2), grad = 2x
        let mut gs = ps.zero_grads();
        for (g, x) in gs.get_mut(r).iter_mut().zip(ps.get(r).iter()) {
            *g = 2.0 * x;
        }
        let loss = |ps: &ParamSet| ps.values()[0].iter().map(|x| x * x).sum::<f64>();
        let rep = check_parameter_gradients(&mut ps, &gs, loss, 30, 1e-5, 1e-6, 1e-10, 1);
        assert_eq!(rep.passed, rep.checked);

        // Corrupt one gradient entry.
        gs.grads[0][[1]] += 0.5;
        let rep = check_parameter_gradients(&mut ps, &gs, loss, 30, 1e-5, 1e-6, 1e-10, 1);
        assert!(rep.passed < rep.checked);
    }
}
