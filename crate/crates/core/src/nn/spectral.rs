//! 2-D FFT primitives for the frequency pass, with exact adjoints.
//!
//! Convention: the forward transform is the unnormalized DFT (so Parseval
//! reads `||FFT(x)||^2 = h*w*||x||^2`); the inverse applies the `1/(h*w)`
//! factor. Complex spectra are carried as stacked real tensors: channels
//! `[0, C)` hold real parts and `[C, 2C)` imaginary parts.

use ndarray::Array3;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        cell.borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// In-place unnormalized 2-D (i)DFT over a row-major (h, w) complex buffer.
fn fft2_inplace(buf: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let row_plan = plan(w, inverse);
    for row in buf.chunks_exact_mut(w) {
        row_plan.process(row);
    }
    let col_plan = plan(h, inverse);
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for j in 0..w {
        for i in 0..h {
            col[i] = buf[i * w + j];
        }
        col_plan.process(&mut col);
        for i in 0..h {
            buf[i * w + j] = col[i];
        }
    }
}

/// Per-channel forward 2-D FFT of a real (C, h, w) tensor; returns the
/// (2C, h, w) stacked real/imaginary spectrum.
pub fn fft2_stack(x: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    let mut out = Array3::<f64>::zeros((2 * c, h, w));
    let mut buf = vec![Complex::new(0.0, 0.0); h * w];
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                buf[i * w + j] = Complex::new(x[[ci, i, j]], 0.0);
            }
        }
        fft2_inplace(&mut buf, h, w, false);
        for i in 0..h {
            for j in 0..w {
                out[[ci, i, j]] = buf[i * w + j].re;
                out[[ci + c, i, j]] = buf[i * w + j].im;
            }
        }
    }
    out
}

/// Adjoint (= backward pass) of [`fft2_stack`]: maps a (2C, h, w) spectrum
/// gradient to the (C, h, w) input gradient.
pub fn fft2_stack_adjoint(g: &Array3<f64>) -> Array3<f64> {
    let (c2, h, w) = g.dim();
    let c = c2 / 2;
    let mut out = Array3::<f64>::zeros((c, h, w));
    let mut buf = vec![Complex::new(0.0, 0.0); h * w];
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                buf[i * w + j] = Complex::new(g[[ci, i, j]], g[[ci + c, i, j]]);
            }
        }
        // Adjoint of the unnormalized DFT is the unnormalized inverse DFT.
        fft2_inplace(&mut buf, h, w, true);
        for i in 0..h {
            for j in 0..w {
                out[[ci, i, j]] = buf[i * w + j].re;
            }
        }
    }
    out
}

/// Normalized inverse per-channel 2-D FFT of a stacked (2C, h, w) spectrum;
/// returns the real part as (C, h, w).
pub fn ifft2_real(z: &Array3<f64>) -> Array3<f64> {
    let (c2, h, w) = z.dim();
    let c = c2 / 2;
    let n = (h * w) as f64;
    let mut out = Array3::<f64>::zeros((c, h, w));
    let mut buf = vec![Complex::new(0.0, 0.0); h * w];
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                buf[i * w + j] = Complex::new(z[[ci, i, j]], z[[ci + c, i, j]]);
            }
        }
        fft2_inplace(&mut buf, h, w, true);
        for i in 0..h {
            for j in 0..w {
                out[[ci, i, j]] = buf[i * w + j].re / n;
            }
        }
    }
    out
}

/// Adjoint of [`ifft2_real`]: maps a (C, h, w) output gradient to the
/// (2C, h, w) spectrum gradient.
pub fn ifft2_real_adjoint(gy: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = gy.dim();
    let n = (h * w) as f64;
    let mut out = Array3::<f64>::zeros((2 * c, h, w));
    let mut buf = vec![Complex::new(0.0, 0.0); h * w];
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                buf[i * w + j] = Complex::new(gy[[ci, i, j]], 0.0);
            }
        }
        fft2_inplace(&mut buf, h, w, false);
        for i in 0..h {
            for j in 0..w {
                out[[ci, i, j]] = buf[i * w + j].re / n;
                out[[ci + c, i, j]] = buf[i * w + j].im / n;
            }
        }
    }
    out
}

/// Brute-force O(n^4) reference DFT of one (h, w) channel, for oracles.
pub fn dft2_naive(x: &ndarray::Array2<f64>) -> ndarray::Array2<Complex<f64>> {
    let (h, w) = x.dim();
    let mut out = ndarray::Array2::from_elem((h, w), Complex::new(0.0, 0.0));
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex::new(0.0, 0.0);
            for i in 0..h {
                for j in 0..w {
                    let ang = -std::f64::consts::TAU
                        * (u as f64 * i as f64 / h as f64 + v as f64 * j as f64 / w as f64);
                    acc += Complex::new(ang.cos(), ang.sin()) * x[[i, j]];
                }
            }
            out[[u, v]] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init::randn;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand3(c: usize, h: usize, w: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array3::zeros((c, h, w));
        for v in x.iter_mut() {
            *v = randn(&mut rng);
        }
        x
    }

    #[test]
    fn round_trip_is_identity() {
        let x = rand3(3, 4, 4, 1);
        let back = ifft2_real(&fft2_stack(&x));
        let max = x
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max < 1e-12, "round trip error {max}");
    }

    #[test]
    fn matches_naive_dft_on_4x4() {
        let x = rand3(1, 4, 4, 2);
        let fast = fft2_stack(&x);
        let slow = dft2_naive(&x.index_axis(ndarray::Axis(0), 0).to_owned());
        for i in 0..4 {
            for j in 0..4 {
                assert!((fast[[0, i, j]] - slow[[i, j]].re).abs() < 1e-6);
                assert!((fast[[1, i, j]] - slow[[i, j]].im).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn conjugate_symmetry_for_real_input() {
        let x = rand3(1, 4, 4, 3);
        let f = fft2_stack(&x);
        let (h, w) = (4usize, 4usize);
        for i in 0..h {
            for j in 0..w {
                let im = (h - i) % h;
                let jm = (w - j) % w;
                assert!((f[[0, i, j]] - f[[0, im, jm]]).abs() < 1e-9);
                assert!((f[[1, i, j]] + f[[1, im, jm]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn parseval_under_unnormalized_convention() {
        let x = rand3(2, 4, 6, 4);
        let f = fft2_stack(&x);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ef: f64 = f.iter().map(|v| v * v).sum();
        let n = 24.0;
        let rel = (ef - n * ex).abs() / (n * ex);
        assert!(rel < 1e-12, "parseval rel err {rel}");
    }

    #[test]
    fn adjoints_satisfy_inner_product_identity() {
        // <F x, y> == <x, F^T y>
        let x = rand3(2, 4, 4, 5);
        let y = rand3(4, 4, 4, 6);
        let fx = fft2_stack(&x);
        let fty = fft2_stack_adjoint(&y);
        let lhs: f64 = fx.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(fty.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "fft adjoint: {lhs} vs {rhs}");

        let z = rand3(4, 4, 4, 7);
        let u = rand3(2, 4, 4, 8);
        let iz = ifft2_real(&z);
        let itu = ifft2_real_adjoint(&u);
        let lhs: f64 = iz.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = z.iter().zip(itu.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "ifft adjoint: {lhs} vs {rhs}");
    }

    #[test]
    fn circular_shift_commutes_with_round_trip() {
        let x = rand3(1, 8, 8, 9);
        let shift = |m: &Array3<f64>, a: usize, b: usize| -> Array3<f64> {
            let (c, h, w) = m.dim();
            let mut out = Array3::zeros((c, h, w));
            for ci in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        out[[ci, (i + a) % h, (j + b) % w]] = m[[ci, i, j]];
                    }
                }
            }
            out
        };
        let rt = |m: &Array3<f64>| ifft2_real(&fft2_stack(m));
        let a = rt(&shift(&x, 3, 5));
        let b = shift(&rt(&x), 3, 5);
        let max = a
            .iter()
            .zip(b.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        assert!(max < 1e-5, "shift commutation error {max}");
    }

    #[test]
    fn naive_dft_of_impulse_is_flat() {
        let mut x = Array2::zeros((4, 4));
        x[[0, 0]] = 1.0;
        let f = dft2_naive(&x);
        for v in f.iter() {
            assert!((v.re - 1.0).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }
}
