//! Cutoff functions and the partition of unity subordinate to a covering.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::{Ball, Covering};
use crate::geometry::{Field, Grid, Point};
use crate::util::{smoothstep, smoothstep_deriv};
use crate::{Error, Result};

/// Number of candidate radii searched by [`adapted_shell_radius`].
pub const SHELL_CANDIDATES: usize = 32;

/// Transition profile of a cutoff between 1 and 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpProfile {
    /// Cubic smoothstep, C^1.
    #[default]
    Polynomial,
    /// `exp(-1/t)` based, C^inf.
    SmoothExp,
}

impl BumpProfile {
    /// Decreasing profile on `[0, 1]`: 1 at 0, 0 at 1.
    pub fn value(self, t: f64) -> f64 {
        match self {
            BumpProfile::Polynomial => 1.0 - smoothstep(t),
            BumpProfile::SmoothExp => {
                if t <= 0.0 {
                    1.0
                } else if t >= 1.0 {
                    0.0
                } else {
                    let a = (-1.0 / t).exp();
                    let b = (-1.0 / (1.0 - t)).exp();
                    b / (a + b)
                }
            }
        }
    }

    /// Derivative of [`BumpProfile::value`].
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            BumpProfile::Polynomial => -smoothstep_deriv(t),
            BumpProfile::SmoothExp => {
                if t <= 0.0 || t >= 1.0 {
                    0.0
                } else {
                    let a = (-1.0 / t).exp();
                    let b = (-1.0 / (1.0 - t)).exp();
                    let da = a / (t * t);
                    let db = -b / ((1.0 - t) * (1.0 - t));
                    (db * (a + b) - b * (da + db)) / ((a + b) * (a + b))
                }
            }
        }
    }
}

/// Rectangular window of grid nodes holding the values of a compactly
/// supported function; nodes outside the window are zero.
#[derive(Clone, Debug)]
pub struct Patch {
    pub i0: usize,
    pub j0: usize,
    pub w: usize,
    pub h: usize,
    pub values: Vec<f64>,
}

impl Patch {
    fn around(grid: &Grid, c: Point, radius: f64) -> Patch {
        let (nxn, nyn) = grid.dims();
        let o = grid.origin();
        let hh = grid.h();
        let lo = |x: f64, o: f64| (((x - o) / hh).floor() as i64 - 1).max(0) as usize;
        let hi = |x: f64, o: f64, n: usize| ((((x - o) / hh).ceil() as i64 + 1).max(0) as usize).min(n - 1);
        let i0 = lo(c[0] - radius, o[0]).min(nxn - 1);
        let j0 = lo(c[1] - radius, o[1]).min(nyn - 1);
        let i1 = hi(c[0] + radius, o[0], nxn).max(i0);
        let j1 = hi(c[1] + radius, o[1], nyn).max(j0);
        let (w, h) = (i1 - i0 + 1, j1 - j0 + 1);
        Patch { i0, j0, w, h, values: vec![0.0; w * h] }
    }

    /// Grid node of local index `k`.
    #[inline]
    pub fn node(&self, grid: &Grid, k: usize) -> usize {
        grid.index(self.i0 + k % self.w, self.j0 + k / self.w)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.i0 || j < self.j0 || i >= self.i0 + self.w || j >= self.j0 + self.h {
            0.0
        } else {
            self.values[(j - self.j0) * self.w + (i - self.i0)]
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Finite-difference gradient with the grid's convention, `(dx, dy)` interleaved.
    pub fn gradient(&self, grid: &Grid) -> Vec<f64> {
        let (nxn, nyn) = grid.dims();
        let hh = grid.h();
        let mut out = vec![0.0; 2 * self.values.len()];
        for k in 0..self.values.len() {
            let (i, j) = (self.i0 + k % self.w, self.j0 + k / self.w);
            let (il, ir, sx) = fd_stencil(i, nxn, hh);
            let (jl, jr, sy) = fd_stencil(j, nyn, hh);
            out[2 * k] = (self.get(ir, j) - self.get(il, j)) / sx;
            out[2 * k + 1] = (self.get(i, jr) - self.get(i, jl)) / sy;
        }
        out
    }

    /// Writes the patch into a full scalar field.
    pub fn to_field(&self, grid: Arc<Grid>) -> Field {
        let mut f = Field::zeros(grid.clone(), 1);
        let vals = f.values_mut();
        for (k, v) in self.values.iter().enumerate() {
            vals[self.node(&grid, k)] = *v;
        }
        f
    }
}

#[inline]
pub(crate) fn fd_stencil(i: usize, n: usize, h: f64) -> (usize, usize, f64) {
    if i == 0 {
        (0, 1, h)
    } else if i + 1 == n {
        (i - 1, i, h)
    } else {
        (i - 1, i + 1, 2.0 * h)
    }
}

/// A cutoff `phi` with `phi = 1` on the ball and support in `(1 + delta/2)` times it.
#[derive(Clone, Debug)]
pub struct Bump {
    pub ball: Ball,
    /// Radii where the transition starts and ends.
    pub band: (f64, f64),
    pub profile: BumpProfile,
    pub patch: Patch,
}

impl Bump {
    /// Analytic value at a point.
    pub fn eval(&self, x: Point) -> f64 {
        let (a, b) = self.band;
        self.profile.value((self.ball.dist_to(x) - a) / (b - a))
    }

    /// Analytic gradient norm bound `max |profile'| / (b - a)`.
    pub fn analytic_deriv_bound(&self) -> f64 {
        let (a, b) = self.band;
        let m = (0..=1000)
            .map(|k| self.profile.derivative(k as f64 / 1000.0).abs())
            .fold(0.0, f64::max);
        m / (b - a)
    }
}

/// Samples the cutoff of `ball` on the nodes of `grid`. With `shell`, the
/// transition is concentrated around that radius.
pub fn bump(grid: &Grid, ball: Ball, delta: f64, profile: BumpProfile, shell: Option<f64>) -> Result<Bump> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    let outer = (1.0 + delta / 2.0) * ball.r;
    let band = match shell {
        None => (ball.r, outer),
        Some(s) => {
            if !(s > ball.r && s < outer) {
                return Err(Error::invalid(format!(
                    "shell radius {s} outside the admissible annulus ({}, {outer})",
                    ball.r
                )));
            }
            let w = outer - s;
            ((s - w / 2.0).max(ball.r), s + w / 2.0)
        }
    };
    let mut patch = Patch::around(grid, ball.center(), outer);
    let (a, b) = band;
    for k in 0..patch.values.len() {
        let x = grid.point(patch.node(grid, k));
        patch.values[k] = profile.value((ball.dist_to(x) - a) / (b - a));
    }
    Ok(Bump { ball, band, profile, patch })
}

/// Cutoffs for every ball of a covering with the default band.
pub fn default_bumps(grid: &Grid, covering: &Covering, profile: BumpProfile) -> Result<Vec<Bump>> {
    covering
        .balls()
        .par_iter()
        .map(|b| bump(grid, *b, covering.delta(), profile, None))
        .collect()
}

/// The weights `psi_i = phi_i / max(1, sum phi)` and the complement
/// `psi_0 = 1 - sum psi_i`, which vanishes on the covered region.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    grid: Arc<Grid>,
    pub balls: Vec<Ball>,
    pub psi: Vec<Patch>,
    /// Gradients of `psi_i`, interleaved `(dx, dy)` per patch node.
    pub dpsi: Vec<Vec<f64>>,
    pub psi0: Field,
    /// Gradient of `psi0`, equal to `-sum D psi_i`.
    pub dpsi0: Field,
    /// `max_i r_i ||D psi_i||_inf`.
    pub deriv_bound_c: f64,
    /// Smallest `C` with `||D psi_i|| <= C sum_j ||D phi_j||` over neighbors `j` of `i` (and `i`).
    pub chain_constant: f64,
    /// `min_i min_{B_i} psi_i`.
    pub min_psi_on_ball: f64,
    pub multiplicity: usize,
}

/// Normalizes cutoffs into a partition of unity.
pub fn build_partition(grid: Arc<Grid>, covering: &Covering, bumps: &[Bump]) -> Result<PartitionOfUnity> {
    if bumps.len() != covering.len() {
        return Err(Error::invalid(format!(
            "{} cutoffs for a covering of {} balls",
            bumps.len(),
            covering.len()
        )));
    }
    for (b, ball) in bumps.iter().zip(covering.balls()) {
        if b.ball != *ball {
            return Err(Error::invalid("cutoff ball does not match the covering"));
        }
    }
    let n = grid.n_nodes();
    let mut sum = vec![0.0; n];
    for b in bumps {
        for (k, v) in b.patch.values.iter().enumerate() {
            sum[b.patch.node(&grid, k)] += v;
        }
    }
    for (k, s) in sum.iter().enumerate() {
        let x = grid.point(k);
        if *s < 1.0 - 1e-12 && covering.covers(x) {
            return Err(Error::invalid(format!(
                "sum of cutoffs is {s} < 1 at covered node {k} ({}, {})",
                x[0], x[1]
            )));
        }
    }
    let psi: Vec<Patch> = bumps
        .par_iter()
        .map(|b| {
            let mut p = b.patch.clone();
            for (k, v) in p.values.iter_mut().enumerate() {
                *v /= sum[b.patch.node(&grid, k)].max(1.0);
            }
            p
        })
        .collect();
    let dpsi: Vec<Vec<f64>> = psi.par_iter().map(|p| p.gradient(&grid)).collect();
    let mut psi0 = Field::from_values(grid.clone(), 1, vec![1.0; n])?;
    let mut dpsi0 = Field::zeros(grid.clone(), 2);
    {
        let v0 = psi0.values_mut();
        for p in &psi {
            for (k, v) in p.values.iter().enumerate() {
                v0[p.node(&grid, k)] -= v;
            }
        }
        let d0 = dpsi0.values_mut();
        for (p, d) in psi.iter().zip(&dpsi) {
            for k in 0..p.values.len() {
                let node = p.node(&grid, k);
                d0[2 * node] -= d[2 * k];
                d0[2 * node + 1] -= d[2 * k + 1];
            }
        }
    }
    let grad_sup = |d: &[f64]| d.chunks(2).fold(0.0, |m: f64, g| m.max(g[0].hypot(g[1])));
    let dpsi_sup: Vec<f64> = dpsi.iter().map(|d| grad_sup(d)).collect();
    let dphi_sup: Vec<f64> = bumps.iter().map(|b| grad_sup(&b.patch.gradient(&grid))).collect();
    let deriv_bound_c = covering
        .balls()
        .iter()
        .zip(&dpsi_sup)
        .map(|(b, s)| b.r * s)
        .fold(0.0, f64::max);
    let chain_constant = (0..bumps.len())
        .map(|i| {
            let denom: f64 = dphi_sup[i] + covering.neighbor_index()[i].iter().map(|&j| dphi_sup[j]).sum::<f64>();
            if denom > 0.0 {
                dpsi_sup[i] / denom
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let min_psi_on_ball = psi
        .iter()
        .zip(covering.balls())
        .map(|(p, b)| {
            (0..p.values.len())
                .filter(|&k| b.dist_to(grid.point(p.node(&grid, k))) <= b.r)
                .map(|k| p.values[k])
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(PartitionOfUnity {
        grid,
        balls: covering.balls().to_vec(),
        psi,
        dpsi,
        psi0,
        dpsi0,
        deriv_bound_c,
        chain_constant,
        min_psi_on_ball,
        multiplicity: covering.multiplicity(),
    })
}

impl PartitionOfUnity {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `sum_i psi_i` as a full field.
    pub fn sum_field(&self) -> Field {
        let mut f = Field::zeros(self.grid.clone(), 1);
        let v = f.values_mut();
        for p in &self.psi {
            for (k, x) in p.values.iter().enumerate() {
                v[p.node(&self.grid, k)] += x;
            }
        }
        f
    }

    /// Largest `|sum_i psi_i - 1|` over nodes covered by some ball.
    pub fn sum_defect_on_covered(&self, covering: &Covering) -> f64 {
        let s = self.sum_field();
        (0..self.grid.n_nodes())
            .filter(|&k| covering.covers(self.grid.point(k)))
            .map(|k| (s.values()[k] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Outcome of the shell search.
#[derive(Clone, Debug, Serialize)]
pub struct ShellChoice {
    pub radius: f64,
    pub shell_integral: f64,
    pub candidate_mean: f64,
    /// `(delta r / 2)^{-1}` times the annulus integral of `|w|`.
    pub averaging_bound: f64,
    /// Right side of the capacity estimate `(s - r)^{-t1 - 1/d} (int (shell)^d dr)^{1/d}`.
    pub capacity_bound: f64,
}

/// Picks the radius in `(r, (1 + delta/2) r)` whose circle carries the least
/// weight, among [`SHELL_CANDIDATES`] uniformly spaced candidates.
pub fn adapted_shell_radius(
    ball: Ball,
    weight: &Field,
    delta: f64,
    t1: f64,
    t2: f64,
    delta_exp: f64,
) -> Result<ShellChoice> {
    if !(t1 > t2 && t2 >= 1.0) {
        return Err(Error::invalid(format!("need t1 > t2 >= 1, got t1 = {t1}, t2 = {t2}")));
    }
    if !(delta_exp > 0.0 && delta_exp < 1.0) {
        return Err(Error::invalid(format!("exponent must lie in (0, 1), got {delta_exp}")));
    }
    if weight.components() != 1 {
        return Err(Error::invalid("shell weight must be scalar"));
    }
    let grid = weight.grid();
    let outer = (1.0 + delta / 2.0) * ball.r;
    let patch = Patch::around(grid, ball.center(), outer);
    for k in 0..patch.len() {
        let node = patch.node(grid, k);
        let w = weight.values()[node];
        if ball.dist_to(grid.point(node)) <= outer + grid.h() && (w.is_nan() || w < 0.0) {
            return Err(Error::invalid(format!("shell weight is negative or NaN at node {node}")));
        }
    }
    let shell = |r: f64| {
        let m = ((2.0 * PI * r / (0.5 * grid.h())).ceil() as usize).max(64);
        let ds = 2.0 * PI * r / m as f64;
        (0..m)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / m as f64;
                weight.sample([ball.cx + r * t.cos(), ball.cy + r * t.sin()], 0).abs()
            })
            .sum::<f64>()
            * ds
    };
    let width = outer - ball.r;
    let radii: Vec<f64> = (0..SHELL_CANDIDATES)
        .map(|k| ball.r + (k as f64 + 1.0) / (SHELL_CANDIDATES as f64 + 1.0) * width)
        .collect();
    let vals: Vec<f64> = radii.iter().map(|r| shell(*r)).collect();
    let mut best = 0;
    for k in 1..vals.len() {
        if vals[k] < vals[best] {
            best = k;
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    // Candidates are midpoints of a uniform partition of the annulus radii.
    let annulus = mean * width;
    let powered = vals.iter().map(|v| v.powf(delta_exp)).sum::<f64>() * width / vals.len() as f64;
    Ok(ShellChoice {
        radius: radii[best],
        shell_integral: vals[best],
        candidate_mean: mean,
        averaging_bound: annulus / width,
        capacity_bound: width.powf(-t1 - 1.0 / delta_exp) * powered.powf(1.0 / delta_exp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{build_wb_covering, DEFAULT_LAMBDA};
    use crate::geometry::{build_grid, Domain};

    fn grid(h: f64) -> Arc<Grid> {
        build_grid(&Domain::unit_square(), h, 0.0).unwrap()
    }

    #[test]
    fn profiles_are_monotone_cutoffs() {
        for p in [BumpProfile::Polynomial, BumpProfile::SmoothExp] {
            assert_eq!(p.value(0.0), 1.0);
            assert_eq!(p.value(1.0), 0.0);
            let mut last = 1.0;
            for k in 0..=100 {
                let v = p.value(k as f64 / 100.0);
                assert!(v <= last && (0.0..=1.0).contains(&v));
                last = v;
            }
            let t = 0.37;
            let fd = (p.value(t + 1e-6) - p.value(t - 1e-6)) / 2e-6;
            assert!((fd - p.derivative(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn bump_values_and_derivative_bound() {
        let g = grid(1.0 / 2048.0);
        let ball = Ball { cx: 0.5, cy: 0.5, r: 0.2 };
        let b = bump(&g, ball, 0.25, BumpProfile::Polynomial, None).unwrap();
        assert_eq!(b.eval([0.5, 0.5]), 1.0);
        assert_eq!(b.eval([0.5 + 1.25 * 0.2, 0.5]), 0.0);
        let dmax = b.patch.gradient(&g).chunks(2).fold(0.0, |m: f64, d| m.max(d[0].hypot(d[1])));
        assert!(dmax <= 320.0);
        // Fine-grid maximum approaches the analytic slope of the profile.
        assert!((dmax - b.analytic_deriv_bound()).abs() / b.analytic_deriv_bound() < 0.01);
        assert!(b.patch.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn shell_must_lie_in_annulus() {
        let g = grid(0.01);
        let ball = Ball { cx: 0.5, cy: 0.5, r: 0.2 };
        assert!(bump(&g, ball, 0.25, BumpProfile::Polynomial, Some(0.2)).is_err());
        assert!(bump(&g, ball, 0.25, BumpProfile::Polynomial, Some(0.225)).is_err());
        let b = bump(&g, ball, 0.25, BumpProfile::Polynomial, Some(0.215)).unwrap();
        assert!((b.band.0 - 0.21).abs() < 1e-12 && (b.band.1 - 0.22).abs() < 1e-12);
    }

    #[test]
    fn single_ball_partition_is_its_bump() {
        let g = grid(0.01);
        let cov = Covering::from_balls(vec![Ball { cx: 0.5, cy: 0.5, r: 0.2 }], 0.25, 0.1);
        let bumps = default_bumps(&g, &cov, BumpProfile::Polynomial).unwrap();
        let pou = build_partition(g.clone(), &cov, &bumps).unwrap();
        assert_eq!(pou.psi[0].values, bumps[0].patch.values);
        assert_eq!(pou.min_psi_on_ball, 1.0);
    }

    #[test]
    fn two_identical_balls_split_evenly() {
        let g = grid(0.01);
        let b = Ball { cx: 0.5, cy: 0.5, r: 0.2 };
        let cov = Covering::from_balls(vec![b, b], 0.25, 0.1);
        let bumps = default_bumps(&g, &cov, BumpProfile::Polynomial).unwrap();
        let pou = build_partition(g.clone(), &cov, &bumps).unwrap();
        for (k, v) in pou.psi[0].values.iter().enumerate() {
            if b.dist_to(g.point(pou.psi[0].node(&g, k))) <= b.r {
                assert_eq!(*v, 0.5);
                assert_eq!(pou.psi[1].values[k], 0.5);
            }
        }
    }

    #[test]
    fn covering_partition_properties() {
        let d = Domain::unit_square();
        let g = build_grid(&d, 1.0 / 400.0, 0.0).unwrap();
        let cov = build_wb_covering(&d, 0.05, DEFAULT_LAMBDA).unwrap();
        let bumps = default_bumps(&g, &cov, BumpProfile::Polynomial).unwrap();
        let pou = build_partition(g.clone(), &cov, &bumps).unwrap();
        assert!(pou.sum_defect_on_covered(&cov) <= 1e-12);
        assert!(pou.min_psi_on_ball >= 1.0 / cov.multiplicity() as f64);
        assert!(pou.deriv_bound_c.is_finite() && pou.deriv_bound_c > 0.0);
        assert!(pou.chain_constant <= 1.0 + 1e-9);
        let total = pou.sum_field().add(&pou.psi0).unwrap();
        assert!(total.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn missing_cutoff_mass_rejected() {
        let g = grid(0.01);
        let ball = Ball { cx: 0.5, cy: 0.5, r: 0.2 };
        let cov = Covering::from_balls(vec![ball], 0.25, 0.1);
        let mut bumps = default_bumps(&g, &cov, BumpProfile::Polynomial).unwrap();
        let centre = bumps[0].patch.values.len() / 2;
        bumps[0].patch.values[centre] = 0.5;
        assert!(build_partition(g, &cov, &bumps).is_err());
    }

    #[test]
    fn shell_radius_constant_weight() {
        let g = grid(1.0 / 512.0);
        let ball = Ball { cx: 0.5, cy: 0.5, r: 0.2 };
        let w = Field::from_fn(g, |_| 1.0);
        let c = adapted_shell_radius(ball, &w, 0.25, 3.0, 2.0, 0.5).unwrap();
        assert!((c.radius - (0.2 + 0.025 / 33.0)).abs() < 1e-15);
        assert!((c.shell_integral - 2.0 * PI * c.radius).abs() < 1e-9);
        assert!(c.shell_integral <= c.candidate_mean);
    }

    #[test]
    fn shell_radius_linear_weight_and_avoidance() {
        let g = grid(1.0 / 1024.0);
        let ball = Ball { cx: 0.5, cy: 0.5, r: 0.2 };
        let w = Field::from_fn(g.clone(), |x| ball.dist_to(x));
        let c = adapted_shell_radius(ball, &w, 0.25, 3.0, 2.0, 0.5).unwrap();
        let r0 = 0.2 + 0.025 / 33.0;
        assert_eq!(c.radius, r0);
        assert!((c.shell_integral - 2.0 * PI * r0 * r0).abs() / c.shell_integral < 1e-4);

        let target = 0.2 + 0.025 / 33.0;
        let spike = Field::from_fn(g, |x| (-((ball.dist_to(x) - target) / 2e-4).powi(2)).exp() * 100.0);
        let c = adapted_shell_radius(ball, &spike, 0.25, 3.0, 2.0, 0.5).unwrap();
        assert!(c.radius > target + 1e-6);
    }

    #[test]
    fn shell_radius_rejects_bad_input() {
        let g = grid(0.01);
        let ball = Ball { cx: 0.5, cy: 0.5, r: 0.2 };
        let neg = Field::from_fn(g.clone(), |_| -1.0);
        assert!(adapted_shell_radius(ball, &neg, 0.25, 3.0, 2.0, 0.5).is_err());
        let nan = Field::from_fn(g.clone(), |_| f64::NAN);
        assert!(adapted_shell_radius(ball, &nan, 0.25, 3.0, 2.0, 0.5).is_err());
        let one = Field::from_fn(g, |_| 1.0);
        assert!(adapted_shell_radius(ball, &one, 0.25, 2.0, 2.0, 0.5).is_err());
        assert!(adapted_shell_radius(ball, &one, 0.25, 3.0, 0.5, 0.5).is_err());
    }
}
