//! Discrete mollifier stencils and grid convolution.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::geometry::{Field, Grid};
use crate::{Error, Result};

/// Stencils with more points than this are applied by FFT in [`mollify`].
const FFT_THRESHOLD: usize = 1500;

/// Radial profile of the mollifier, as a function of `|x| / radius` on `[0, 1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mollifier {
    /// `(1 - t^2)^3`.
    #[default]
    Polynomial,
    /// `exp(-1 / (1 - t^2))`.
    SmoothExp,
}

impl Mollifier {
    pub fn profile(self, t: f64) -> f64 {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t * t;
        match self {
            Mollifier::Polynomial => s * s * s,
            Mollifier::SmoothExp => (-1.0 / s).exp(),
        }
    }
}

/// Nonnegative, point-symmetric node weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub offsets: Vec<(i32, i32)>,
    pub weights: Vec<f64>,
    /// Largest `|offset|` component.
    pub reach: usize,
}

impl Stencil {
    pub fn identity() -> Stencil {
        Stencil { offsets: vec![(0, 0)], weights: vec![1.0], reach: 0 }
    }

    /// Discretizes the mollifier of support radius `radius` on a grid of spacing `h`.
    ///
    /// The kernel is sampled on a lattice of spacing `h / k` fine enough to
    /// resolve the support; off-node samples are spread to the surrounding
    /// nodes with bilinear weights. Radius zero gives the identity.
    pub fn new(h: f64, radius: f64, kind: Mollifier) -> Stencil {
        if !(radius > 0.0) {
            return Stencil::identity();
        }
        let k = ((4.0 * h / radius).ceil() as i64).max(1);
        let hq = h / k as f64;
        let n = (radius / hq).floor() as i64;
        let reach = ((n + k - 1) / k + 1) as usize;
        let side = 2 * reach + 1;
        let mut acc = vec![0.0; side * side];
        let r = reach as i64;
        for a in -n..=n {
            for b in -n..=n {
                let t = ((a * a + b * b) as f64).sqrt() * hq / radius;
                let w = kind.profile(t);
                if w <= 0.0 {
                    continue;
                }
                let (ia, fa) = (a.div_euclid(k), a.rem_euclid(k) as f64 / k as f64);
                let (ib, fb) = (b.div_euclid(k), b.rem_euclid(k) as f64 / k as f64);
                for (di, wx) in [(0, 1.0 - fa), (1, fa)] {
                    for (dj, wy) in [(0, 1.0 - fb), (1, fb)] {
                        if wx * wy > 0.0 {
                            acc[((ib + dj + r) as usize) * side + (ia + di + r) as usize] += w * wx * wy;
                        }
                    }
                }
            }
        }
        let total: f64 = acc.iter().sum();
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let mut used = 0;
        for j in 0..side {
            for i in 0..side {
                let w = acc[j * side + i];
                if w > 0.0 {
                    let o = (i as i32 - reach as i32, j as i32 - reach as i32);
                    used = used.max(o.0.unsigned_abs() as usize).max(o.1.unsigned_abs() as usize);
                    offsets.push(o);
                    weights.push(w / total);
                }
            }
        }
        Stencil { offsets, weights, reach: used }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weighted sum of component `c` around node `(i, j)`, clamping indices to the grid.
    #[inline]
    pub fn apply_at(&self, field: &Field, i: usize, j: usize, c: usize) -> f64 {
        let g = field.grid();
        let (w, h) = g.dims();
        let m = field.components();
        let vals = field.values();
        let mut s = 0.0;
        for (o, wt) in self.offsets.iter().zip(&self.weights) {
            let ii = (i as i64 + o.0 as i64).clamp(0, w as i64 - 1) as usize;
            let jj = (j as i64 + o.1 as i64).clamp(0, h as i64 - 1) as usize;
            s += wt * vals[g.index(ii, jj) * m + c];
        }
        s
    }

    /// All components at node `(i, j)` written into `out`.
    #[inline]
    pub fn apply_node(&self, field: &Field, i: usize, j: usize, out: &mut [f64]) {
        let g = field.grid();
        let (w, h) = g.dims();
        let m = field.components();
        let vals = field.values();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (o, wt) in self.offsets.iter().zip(&self.weights) {
            let ii = (i as i64 + o.0 as i64).clamp(0, w as i64 - 1) as usize;
            let jj = (j as i64 + o.1 as i64).clamp(0, h as i64 - 1) as usize;
            let base = g.index(ii, jj) * m;
            for (c, out_c) in out.iter_mut().enumerate() {
                *out_c += wt * vals[base + c];
            }
        }
    }
}

/// Direct convolution of every node with the stencil (clamped at the box edges).
pub fn apply_stencil(field: &Field, stencil: &Stencil) -> Field {
    let g = field.grid().clone();
    let m = field.components();
    let mut out = vec![0.0; field.values().len()];
    out.par_chunks_mut(m).enumerate().for_each(|(k, o)| {
        let (i, j) = g.ij(k);
        stencil.apply_node(field, i, j, o);
    });
    Field::from_values(g, m, out).expect("same layout")
}

/// Mollifies a field at scale `eps`, which must resolve the kernel (`eps >= 2h`).
pub fn mollify(field: &Field, eps: f64, kind: Mollifier) -> Result<Field> {
    let h = field.grid().h();
    if !(eps >= 2.0 * h * (1.0 - 1e-12)) {
        return Err(Error::invalid(format!(
            "mollification radius {eps} is below 2h = {}; refine the grid",
            2.0 * h
        )));
    }
    field.check_finite()?;
    let st = Stencil::new(h, eps, kind);
    if st.len() <= FFT_THRESHOLD {
        Ok(apply_stencil(field, &st))
    } else {
        Ok(fft_convolve(field, &st))
    }
}

fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

struct Fft2 {
    nx: usize,
    ny: usize,
    fx: Arc<dyn rustfft::Fft<f64>>,
    fy: Arc<dyn rustfft::Fft<f64>>,
    ix: Arc<dyn rustfft::Fft<f64>>,
    iy: Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2 {
    fn new(nx: usize, ny: usize) -> Fft2 {
        let mut p = FftPlanner::new();
        Fft2 {
            nx,
            ny,
            fx: p.plan_fft_forward(nx),
            fy: p.plan_fft_forward(ny),
            ix: p.plan_fft_inverse(nx),
            iy: p.plan_fft_inverse(ny),
        }
    }

    fn run(&self, data: &mut [Complex<f64>], forward: bool) {
        let (rows, cols) = if forward { (&self.fx, &self.fy) } else { (&self.ix, &self.iy) };
        data.par_chunks_mut(self.nx).for_each(|row| rows.process(row));
        let mut t = transpose(data, self.nx, self.ny);
        t.par_chunks_mut(self.ny).for_each(|col| cols.process(col));
        data.copy_from_slice(&transpose(&t, self.ny, self.nx));
    }
}

fn transpose(data: &[Complex<f64>], nx: usize, ny: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); nx * ny];
    out.par_chunks_mut(ny).enumerate().for_each(|(i, col)| {
        for (j, v) in col.iter_mut().enumerate() {
            *v = data[j * nx + i];
        }
    });
    out
}

/// Stencil convolution by FFT on a clamp-padded copy of each component.
pub(crate) fn fft_convolve(field: &Field, st: &Stencil) -> Field {
    let g: Arc<Grid> = field.grid().clone();
    let (w, h) = g.dims();
    let m = field.components();
    let r = st.reach;
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let (nx, ny) = (smooth_size(pw + 2 * r), smooth_size(ph + 2 * r));
    let plan = Fft2::new(nx, ny);
    let mut ker = vec![Complex::new(0.0, 0.0); nx * ny];
    for (o, wt) in st.offsets.iter().zip(&st.weights) {
        // out[x] = sum_o w_o P[x + o]: convolution with the reflected stencil.
        let kx = (-o.0).rem_euclid(nx as i32) as usize;
        let ky = (-o.1).rem_euclid(ny as i32) as usize;
        ker[ky * nx + kx] += Complex::new(*wt, 0.0);
    }
    plan.run(&mut ker, true);
    let scale = 1.0 / (nx * ny) as f64;
    let mut out = vec![0.0; field.values().len()];
    for c in 0..m {
        let mut buf = vec![Complex::new(0.0, 0.0); nx * ny];
        buf.par_chunks_mut(nx).enumerate().take(ph).for_each(|(pj, row)| {
            let j = (pj as i64 - r as i64).clamp(0, h as i64 - 1) as usize;
            for (pi, v) in row.iter_mut().enumerate().take(pw) {
                let i = (pi as i64 - r as i64).clamp(0, w as i64 - 1) as usize;
                *v = Complex::new(field.values()[g.index(i, j) * m + c], 0.0);
            }
        });
        plan.run(&mut buf, true);
        buf.par_iter_mut().zip(ker.par_iter()).for_each(|(a, b)| *a *= b);
        plan.run(&mut buf, false);
        for j in 0..h {
            for i in 0..w {
                out[g.index(i, j) * m + c] = buf[(j + r) * nx + (i + r)].re * scale;
            }
        }
    }
    Field::from_values(g, m, out).expect("same layout")
}

/// Largest `F(x, (Dv * rho)(x)) - ((F o Dv) * rho)(x)` over nodes whose stencil
/// stays inside the closed domain. Jensen's inequality makes this nonpositive
/// for convex `F` up to rounding.
pub fn jensen_defect<F>(dv: &Field, radius: f64, kind: Mollifier, density: F) -> f64
where
    F: Fn([f64; 2], &[f64]) -> f64 + Sync,
{
    let g = dv.grid().clone();
    let st = Stencil::new(g.h(), radius, kind);
    let m = dv.components();
    let (w, h) = g.dims();
    let fvals: Vec<f64> = (0..g.n_nodes()).into_par_iter().map(|k| density(g.point(k), dv.node(k))).collect();
    let r = st.reach;
    (0..g.n_nodes())
        .into_par_iter()
        .filter_map(|k| {
            let (i, j) = g.ij(k);
            if i < r || j < r || i + r >= w || j + r >= h {
                return None;
            }
            if st
                .offsets
                .iter()
                .any(|o| !g.is_inside(g.index((i as i32 + o.0) as usize, (j as i32 + o.1) as usize)))
            {
                return None;
            }
            let mut z = vec![0.0; m];
            st.apply_node(dv, i, j, &mut z);
            let mut avg = 0.0;
            for (o, wt) in st.offsets.iter().zip(&st.weights) {
                avg += wt * fvals[g.index((i as i32 + o.0) as usize, (j as i32 + o.1) as usize)];
            }
            Some(density(g.point(k), &z) - avg)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};

    #[test]
    fn stencil_mass_symmetry_and_identity() {
        for (h, r) in [(0.01, 0.05), (0.01, 0.013), (0.01, 0.002), (0.01, 0.0003)] {
            for kind in [Mollifier::Polynomial, Mollifier::SmoothExp] {
                let st = Stencil::new(h, r, kind);
                let total: f64 = st.weights.iter().sum();
                assert!((total - 1.0).abs() < 1e-14);
                assert!(st.weights.iter().all(|w| *w > 0.0));
                for (o, w) in st.offsets.iter().zip(&st.weights) {
                    let k = st.offsets.iter().position(|p| *p == (-o.0, -o.1)).unwrap();
                    assert!((st.weights[k] - w).abs() < 1e-15);
                }
                let mx: f64 = st.offsets.iter().zip(&st.weights).map(|(o, w)| o.0 as f64 * w).sum();
                assert!(mx.abs() < 1e-15);
            }
        }
        assert_eq!(Stencil::new(0.1, 0.0, Mollifier::Polynomial), Stencil::identity());
    }

    #[test]
    fn under_resolved_eps_rejected() {
        let g = build_grid(&Domain::unit_square(), 0.01, 0.0).unwrap();
        let u = Field::from_fn(g, |x| x[0]);
        assert!(mollify(&u, 0.019, Mollifier::Polynomial).is_err());
        assert!(mollify(&u, 0.02, Mollifier::Polynomial).is_ok());
    }

    #[test]
    fn constant_and_linear_preserved() {
        let g = build_grid(&Domain::unit_square(), 1.0 / 128.0, 0.0).unwrap();
        let c = Field::from_fn(g.clone(), |_| 2.5);
        let lin = Field::from_fn(g.clone(), |x| 3.0 * x[0] - 2.0 * x[1] + 1.0);
        for eps in [0.03, 0.2] {
            let mc = mollify(&c, eps, Mollifier::Polynomial).unwrap();
            assert!(mc.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
            let ml = mollify(&lin, eps, Mollifier::Polynomial).unwrap();
            for k in 0..g.n_nodes() {
                let x = g.point(k);
                if x[0] > eps && x[0] < 1.0 - eps && x[1] > eps && x[1] < 1.0 - eps {
                    assert!((ml.values()[k] - lin.values()[k]).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn fft_matches_direct() {
        let g = build_grid(&Domain::unit_square(), 1.0 / 64.0, 0.1).unwrap();
        let u = Field::from_fn_vec(g, 2, |x, o| {
            o[0] = (5.0 * x[0]).sin() * x[1];
            o[1] = (x[0] - 0.3).abs();
        });
        let st = Stencil::new(1.0 / 64.0, 0.15, Mollifier::Polynomial);
        let a = apply_stencil(&u, &st);
        let b = fft_convolve(&u, &st);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn jensen_holds_for_convex_density() {
        let g = build_grid(&Domain::unit_square(), 1.0 / 64.0, 0.0).unwrap();
        let u = Field::from_fn(g, |x| (7.0 * x[0]).sin() + x[1] * x[1] * 3.0);
        let du = u.gradient();
        let d = jensen_defect(&du, 0.1, Mollifier::Polynomial, |_, z| (z[0] * z[0] + z[1] * z[1]).powf(1.5));
        assert!(d <= 1e-12);
    }
}
