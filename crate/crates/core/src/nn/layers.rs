//! Network layers with explicit forward/backward passes.
//!
//! Forward passes take `&self` plus the owning [`ParamSet`] and return the
//! output together with a context struct holding whatever the backward pass
//! needs. Parameters are shared read-only across worker threads; per-sample
//! contexts stay thread-local. Backward passes accumulate parameter gradients
//! into an optional [`GradSet`] (pass `None` through frozen components) and
//! return the input gradient.

use super::init::he_normal;
use super::param::{GradSet, PRef, ParamSet};
use ndarray::{Array1, Array2, Array3, ArrayD, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvInit {
    HeNormal,
    Zero,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: PRef,
    pub b: PRef,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

pub struct ConvCtx {
    cols: Array2<f64>,
    in_dims: (usize, usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: ConvInit,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = c_in * k * k;
        let w_data = match init {
            ConvInit::HeNormal => he_normal(rng, fan_in, c_out * fan_in),
            ConvInit::Zero => vec![0.0; c_out * fan_in],
        };
        let w = ps.add(
            format!("{name}.w"),
            ArrayD::from_shape_vec(vec![c_out, fan_in], w_data).unwrap(),
        );
        let b = ps.add(format!("{name}.b"), ArrayD::zeros(vec![c_out]));
        Conv2d {
            w,
            b,
            c_in,
            c_out,
            k,
            stride,
            pad,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &Array3<f64>) -> Array2<f64> {
        let (c_in, h, w) = x.dim();
        let (oh, ow) = self.out_size(h, w);
        let k = self.k;
        let mut cols = Array2::<f64>::zeros((c_in * k * k, oh * ow));
        let xs = x.as_slice().expect("conv input must be contiguous");
        let cs = cols.as_slice_mut().unwrap();
        for c in 0..c_in {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let out_base = row * oh * ow;
                    for oi in 0..oh {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        let in_base = c * h * w + ii as usize * w;
                        let dst = out_base + oi * ow;
                        for oj in 0..ow {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            cs[dst + oj] = xs[in_base + jj as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, gcols: &Array2<f64>, dims: (usize, usize, usize)) -> Array3<f64> {
        let (c_in, h, w) = dims;
        let (oh, ow) = self.out_size(h, w);
        let k = self.k;
        let mut gx = Array3::<f64>::zeros((c_in, h, w));
        let gs = gcols.as_slice().unwrap();
        let xs = gx.as_slice_mut().unwrap();
        for c in 0..c_in {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let out_base = row * oh * ow;
                    for oi in 0..oh {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        let in_base = c * h * w + ii as usize * w;
                        let src = out_base + oi * ow;
                        for oj in 0..ow {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            xs[in_base + jj as usize] += gs[src + oj];
                        }
                    }
                }
            }
        }
        gx
    }

    pub fn forward(&self, ps: &ParamSet, x: &Array3<f64>) -> (Array3<f64>, ConvCtx) {
        let in_dims = x.dim();
        let (oh, ow) = self.out_size(in_dims.1, in_dims.2);
        let cols = self.im2col(x);
        let w2 = ps
            .get(self.w)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap();
        let bias = ps
            .get(self.b)
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap();
        let mut y2 = w2.dot(&cols);
        for (mut row, &bv) in y2.rows_mut().into_iter().zip(bias.iter()) {
            row += bv;
        }
        let y = y2.into_shape_with_order((self.c_out, oh, ow)).unwrap();
        (y, ConvCtx { cols, in_dims })
    }

    pub fn backward(
        &self,
        ps: &ParamSet,
        ctx: &ConvCtx,
        gy: &Array3<f64>,
        gs: Option<&mut GradSet>,
    ) -> Array3<f64> {
        let (c_out, oh, ow) = gy.dim();
        let gy2 = gy
            .view()
            .into_shape_with_order((c_out, oh * ow))
            .unwrap();
        if let Some(gs) = gs {
            let gw = gy2.dot(&ctx.cols.t());
            *gs.get_mut(self.w) += &gw.into_dyn();
            let gb = gy2.sum_axis(ndarray::Axis(1));
            *gs.get_mut(self.b) += &gb.into_dyn();
        }
        let w2 = ps
            .get(self.w)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap();
        let gcols = w2.t().dot(&gy2);
        self.col2im(&gcols, ctx.in_dims)
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: PRef,
    pub beta: PRef,
    pub groups: usize,
    pub c: usize,
    pub eps: f64,
}

pub struct GroupNormCtx {
    xhat: Array3<f64>,
    inv_std: Vec<f64>,
}

impl GroupNorm {
    pub fn new(ps: &mut ParamSet, name: &str, c: usize, groups: usize) -> Self {
        assert!(c % groups == 0, "channels {c} not divisible by groups {groups}");
        let gamma = ps.add(format!("{name}.gamma"), ArrayD::from_elem(vec![c], 1.0));
        let beta = ps.add(format!("{name}.beta"), ArrayD::zeros(vec![c]));
        GroupNorm {
            gamma,
            beta,
            groups,
            c,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Array3<f64>) -> (Array3<f64>, GroupNormCtx) {
        let (c, h, w) = x.dim();
        let per = c / self.groups;
        let m = (per * h * w) as f64;
        let mut xhat = Array3::<f64>::zeros((c, h, w));
        let mut inv_std = Vec::with_capacity(self.groups);
        let gamma = ps.get(self.gamma);
        let beta = ps.get(self.beta);
        for g in 0..self.groups {
            let cs = g * per..(g + 1) * per;
            let slice = x.slice(ndarray::s![cs.clone(), .., ..]);
            let mean = slice.sum() / m;
            let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std.push(istd);
            for ci in cs {
                for i in 0..h {
                    for j in 0..w {
                        xhat[[ci, i, j]] = (x[[ci, i, j]] - mean) * istd;
                    }
                }
            }
        }
        let mut y = xhat.clone();
        for ci in 0..c {
            let (gm, bt) = (gamma[[ci]], beta[[ci]]);
            y.slice_mut(ndarray::s![ci, .., ..])
                .mapv_inplace(|v| v * gm + bt);
        }
        (y, GroupNormCtx { xhat, inv_std })
    }

    pub fn backward(
        &self,
        ps: &ParamSet,
        ctx: &GroupNormCtx,
        gy: &Array3<f64>,
        gs: Option<&mut GradSet>,
    ) -> Array3<f64> {
        let (c, h, w) = gy.dim();
        let per = c / self.groups;
        let m = (per * h * w) as f64;
        let gamma = ps.get(self.gamma);

        if let Some(gs) = gs {
            let ggamma = gs.get_mut(self.gamma);
            for ci in 0..c {
                let mut acc = 0.0;
                for i in 0..h {
                    for j in 0..w {
                        acc += gy[[ci, i, j]] * ctx.xhat[[ci, i, j]];
                    }
                }
                ggamma[[ci]] += acc;
            }
            let gbeta = gs.get_mut(self.beta);
            for ci in 0..c {
                gbeta[[ci]] += gy.slice(ndarray::s![ci, .., ..]).sum();
            }
        }

        let mut gx = Array3::<f64>::zeros((c, h, w));
        for g in 0..self.groups {
            let cs = g * per..(g + 1) * per;
            let istd = ctx.inv_std[g];
            let mut sum_gxhat = 0.0;
            let mut sum_gxhat_xhat = 0.0;
            for ci in cs.clone() {
                let gm = gamma[[ci]];
                for i in 0..h {
                    for j in 0..w {
                        let gxh = gy[[ci, i, j]] * gm;
                        sum_gxhat += gxh;
                        sum_gxhat_xhat += gxh * ctx.xhat[[ci, i, j]];
                    }
                }
            }
            let mean_gxhat = sum_gxhat / m;
            let mean_gxhat_xhat = sum_gxhat_xhat / m;
            for ci in cs {
                let gm = gamma[[ci]];
                for i in 0..h {
                    for j in 0..w {
                        let gxh = gy[[ci, i, j]] * gm;
                        gx[[ci, i, j]] =
                            istd * (gxh - mean_gxhat - ctx.xhat[[ci, i, j]] * mean_gxhat_xhat);
                    }
                }
            }
        }
        gx
    }
}

/// Per-token affine map for (N, In) token matrices.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: PRef,
    pub b: PRef,
    pub d_in: usize,
    pub d_out: usize,
}

pub struct LinearCtx {
    x: Array2<f64>,
}

impl Linear {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w_data = he_normal(rng, d_in, d_out * d_in);
        let w = ps.add(
            format!("{name}.w"),
            ArrayD::from_shape_vec(vec![d_out, d_in], w_data).unwrap(),
        );
        let b = ps.add(format!("{name}.b"), ArrayD::zeros(vec![d_out]));
        Linear { w, b, d_in, d_out }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Array2<f64>) -> (Array2<f64>, LinearCtx) {
        let w = ps
            .get(self.w)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap();
        let b = ps
            .get(self.b)
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap();
        let mut y = x.dot(&w.t());
        for mut row in y.rows_mut() {
            row += &b;
        }
        (y, LinearCtx { x: x.clone() })
    }

    pub fn backward(
        &self,
        ps: &ParamSet,
        ctx: &LinearCtx,
        gy: &Array2<f64>,
        gs: Option<&mut GradSet>,
    ) -> Array2<f64> {
        if let Some(gs) = gs {
            let gw = gy.t().dot(&ctx.x);
            *gs.get_mut(self.w) += &gw.into_dyn();
            let gb = gy.sum_axis(ndarray::Axis(0));
            *gs.get_mut(self.b) += &gb.into_dyn();
        }
        let w = ps
            .get(self.w)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap();
        gy.dot(&w)
    }
}

/// Same as [`Linear`] but for a single vector.
pub fn linear_vec_forward(
    lin: &Linear,
    ps: &ParamSet,
    x: &Array1<f64>,
) -> (Array1<f64>, LinearCtx) {
    let x2 = x.view().insert_axis(ndarray::Axis(0)).to_owned();
    let (y2, ctx) = lin.forward(ps, &x2);
    (y2.index_axis(ndarray::Axis(0), 0).to_owned(), ctx)
}

pub fn linear_vec_backward(
    lin: &Linear,
    ps: &ParamSet,
    ctx: &LinearCtx,
    gy: &Array1<f64>,
    gs: Option<&mut GradSet>,
) -> Array1<f64> {
    let gy2 = gy.view().insert_axis(ndarray::Axis(0)).to_owned();
    let gx2 = lin.backward(ps, ctx, &gy2, gs);
    gx2.index_axis(ndarray::Axis(0), 0).to_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Identity,
    Silu,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Silu => "silu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "silu" => Some(Activation::Silu),
            _ => None,
        }
    }

    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Silu => x / (1.0 + (-x).exp()),
        }
    }

    pub fn derivative_scalar(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
        }
    }
}

pub fn silu3(x: &Array3<f64>) -> (Array3<f64>, Array3<f64>) {
    let y = x.mapv(|v| Activation::Silu.apply_scalar(v));
    (y, x.clone())
}

pub fn silu3_backward(saved_x: &Array3<f64>, gy: &Array3<f64>) -> Array3<f64> {
    let mut gx = saved_x.mapv(|v| Activation::Silu.derivative_scalar(v));
    gx *= gy;
    gx
}

/// 2x nearest-neighbor upsampling.
pub fn upsample2x(x: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    let mut y = Array3::<f64>::zeros((c, 2 * h, 2 * w));
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                let v = x[[ci, i, j]];
                y[[ci, 2 * i, 2 * j]] = v;
                y[[ci, 2 * i, 2 * j + 1]] = v;
                y[[ci, 2 * i + 1, 2 * j]] = v;
                y[[ci, 2 * i + 1, 2 * j + 1]] = v;
            }
        }
    }
    y
}

pub fn upsample2x_backward(gy: &Array3<f64>) -> Array3<f64> {
    let (c, h2, w2) = gy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gx = Array3::<f64>::zeros((c, h, w));
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                gx[[ci, i, j]] = gy[[ci, 2 * i, 2 * j]]
                    + gy[[ci, 2 * i, 2 * j + 1]]
                    + gy[[ci, 2 * i + 1, 2 * j]]
                    + gy[[ci, 2 * i + 1, 2 * j + 1]];
            }
        }
    }
    gx
}

/// Bilinear resampling weights for one output coordinate (half-pixel centers,
/// clamped to the border). Returns (i0, i1, fraction toward i1).
fn bilinear_axis(t: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    if src == dst {
        return (t, t, 0.0);
    }
    let pos = (t as f64 + 0.5) * src as f64 / dst as f64 - 0.5;
    let pos = pos.clamp(0.0, (src - 1) as f64);
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, pos - i0 as f64)
}

/// Bilinear resize of (C, h, w) to (C, th, tw). Identity when sizes match.
pub fn bilinear_resize(x: &Array3<f64>, th: usize, tw: usize) -> Array3<f64> {
    let (c, h, w) = x.dim();
    let mut y = Array3::<f64>::zeros((c, th, tw));
    for ti in 0..th {
        let (i0, i1, fi) = bilinear_axis(ti, h, th);
        for tj in 0..tw {
            let (j0, j1, fj) = bilinear_axis(tj, w, tw);
            for ci in 0..c {
                let v00 = x[[ci, i0, j0]];
                let v01 = x[[ci, i0, j1]];
                let v10 = x[[ci, i1, j0]];
                let v11 = x[[ci, i1, j1]];
                y[[ci, ti, tj]] = v00 * (1.0 - fi) * (1.0 - fj)
                    + v01 * (1.0 - fi) * fj
                    + v10 * fi * (1.0 - fj)
                    + v11 * fi * fj;
            }
        }
    }
    y
}

/// Adjoint of [`bilinear_resize`]: scatters output gradients back to (C, h, w).
pub fn bilinear_resize_backward(gy: &Array3<f64>, h: usize, w: usize) -> Array3<f64> {
    let (c, th, tw) = gy.dim();
    let mut gx = Array3::<f64>::zeros((c, h, w));
    for ti in 0..th {
        let (i0, i1, fi) = bilinear_axis(ti, h, th);
        for tj in 0..tw {
            let (j0, j1, fj) = bilinear_axis(tj, w, tw);
            for ci in 0..c {
                let g = gy[[ci, ti, tj]];
                gx[[ci, i0, j0]] += g * (1.0 - fi) * (1.0 - fj);
                gx[[ci, i0, j1]] += g * (1.0 - fi) * fj;
                gx[[ci, i1, j0]] += g * fi * (1.0 - fj);
                gx[[ci, i1, j1]] += g * fi * fj;
            }
        }
    }
    gx
}

/// Channel concatenation of two (C_a, h, w) and (C_b, h, w) maps.
pub fn concat_channels(a: &Array3<f64>, b: &Array3<f64>) -> Array3<f64> {
    let (ca, h, w) = a.dim();
    let (cb, hb, wb) = b.dim();
    assert_eq!((h, w), (hb, wb), "concat spatial dims differ");
    let mut y = Array3::<f64>::zeros((ca + cb, h, w));
    y.slice_mut(ndarray::s![..ca, .., ..]).assign(a);
    y.slice_mut(ndarray::s![ca.., .., ..]).assign(b);
    y
}

pub fn split_channels(g: &Array3<f64>, ca: usize) -> (Array3<f64>, Array3<f64>) {
    (
        g.slice(ndarray::s![..ca, .., ..]).to_owned(),
        g.slice(ndarray::s![ca.., .., ..]).to_owned(),
    )
}
