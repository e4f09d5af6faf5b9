//! Conforming bilinear minimization of the quadrature energy.
//!
//! The discrete energy integrates `F(x, Dv)` over every active cell with the
//! 2x2 Gauss rule, where `v` is the bilinear interpolant of the nodal values.
//! Nodes with `d <= 0` are held at `g`; the remaining nodes are free.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Field, Grid};
use crate::integrands::{hypothesis_audit, Integrand, SamplePlan};
use crate::util::pairwise_sum;
use crate::{Error, Result};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Barzilai-Borwein step seeding, backtracked to an Armijo decrease.
    #[default]
    Bb,
    /// Previous accepted step doubled, backtracked to an Armijo decrease.
    Backtracking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub max_iters: usize,
    pub step: StepRule,
    /// Target for the largest discrete divergence `|div_h d_z F(x, Dv)|` over free nodes.
    pub tol_grad: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { max_iters: 20_000, step: StepRule::Bb, tol_grad: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeReport {
    pub field: Field,
    /// Energy after each accepted step, starting with the initial guess.
    /// Non-increasing up to `64 eps |E|` rounding.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    /// Largest discrete divergence over free nodes.
    pub residual: f64,
    /// `int d_z F(x, Dv) . (Dv - Dg)`, nonpositive at a minimizer up to the residual.
    pub el_sign: f64,
    pub converged: bool,
    pub line_search_failed: bool,
}

impl MinimizeReport {
    pub fn energy(&self) -> f64 {
        *self.energy_trace.last().expect("trace starts with the initial energy")
    }
}

const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Gradient of the bilinear interpolant at local coordinates `(s, t)` of a
/// cell, for each component; corners run counterclockwise from the lower left.
#[inline]
fn cell_gradient(v: &[f64], m: usize, corners: [usize; 4], s: f64, t: f64, h: f64, out: &mut [f64]) {
    for c in 0..m {
        let [a, b, d, cc] = corners.map(|n| v[n * m + c]);
        out[2 * c] = ((1.0 - t) * (b - a) + t * (d - cc)) / h;
        out[2 * c + 1] = ((1.0 - s) * (cc - a) + s * (d - b)) / h;
    }
}

/// Derivatives of `(d_x, d_y)` at `(s, t)` with respect to the four corner values.
#[inline]
fn corner_weights(s: f64, t: f64, h: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - t) / h, -(1.0 - s) / h],
        [(1.0 - t) / h, -s / h],
        [t / h, s / h],
        [-t / h, (1.0 - s) / h],
    ]
}

/// Gauss-rule energy of the bilinear interpolant of `v`.
pub fn discrete_energy(f: &Integrand, v: &Field) -> f64 {
    energy_of(f, v.grid(), v.components(), v.values())
}

fn energy_of(f: &Integrand, grid: &Grid, m: usize, v: &[f64]) -> f64 {
    let h = grid.h();
    grid.integrate_cells(|x, corners| {
        let mut z = vec![0.0; 2 * m];
        let mut acc = 0.0;
        for s in GAUSS {
            for t in GAUSS {
                cell_gradient(v, m, corners, s, t, h, &mut z);
                let xg = [x[0] + (s - 0.5) * h, x[1] + (t - 0.5) * h];
                acc += f.density(xg, &z);
            }
        }
        0.25 * acc
    })
}

/// `int d_z F(x, Dv) . Dw` over active cells, with the Gauss rule.
fn pairing(f: &Integrand, grid: &Grid, m: usize, v: &[f64], w: &[f64]) -> f64 {
    let h = grid.h();
    grid.integrate_cells(|x, corners| {
        let mut z = vec![0.0; 2 * m];
        let mut dz = vec![0.0; 2 * m];
        let mut zw = vec![0.0; 2 * m];
        let mut acc = 0.0;
        for s in GAUSS {
            for t in GAUSS {
                cell_gradient(v, m, corners, s, t, h, &mut z);
                cell_gradient(w, m, corners, s, t, h, &mut zw);
                let xg = [x[0] + (s - 0.5) * h, x[1] + (t - 0.5) * h];
                f.d_density(xg, &z, &mut dz);
                acc += dz.iter().zip(&zw).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        0.25 * acc
    })
}

/// Derivative of the discrete energy with respect to every nodal value;
/// zero on fixed nodes.
fn energy_gradient(f: &Integrand, grid: &Grid, m: usize, v: &[f64], free: &[bool]) -> Vec<f64> {
    let h = grid.h();
    let (nx, ny) = grid.cells();
    let w = 0.25 * h * h;
    let mut out = vec![0.0; v.len()];
    out.par_chunks_mut(m).enumerate().for_each(|(node, o)| {
        if !free[node] {
            return;
        }
        let (i, j) = grid.ij(node);
        let mut z = vec![0.0; 2 * m];
        let mut dz = vec![0.0; 2 * m];
        // The node is corner `k` of the cell with lower-left (i - di, j - dj).
        for (k, (di, dj)) in [(0, 0), (1, 0), (1, 1), (0, 1)].into_iter().enumerate() {
            if i < di || j < dj || i - di >= nx || j - dj >= ny {
                continue;
            }
            let (ci, cj) = (i - di, j - dj);
            if !grid.cell_active(ci, cj) {
                continue;
            }
            let corners = grid.cell_nodes(ci, cj);
            let x = grid.cell_center(ci, cj);
            for s in GAUSS {
                for t in GAUSS {
                    cell_gradient(v, m, corners, s, t, h, &mut z);
                    let xg = [x[0] + (s - 0.5) * h, x[1] + (t - 0.5) * h];
                    f.d_density(xg, &z, &mut dz);
                    let cw = corner_weights(s, t, h)[k];
                    for c in 0..m {
                        o[c] += w * (dz[2 * c] * cw[0] + dz[2 * c + 1] * cw[1]);
                    }
                }
            }
        }
    });
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&prods)
}

/// Minimizes the discrete energy over bilinear fields equal to `g` on the
/// boundary and outside the domain, by steepest descent with an Armijo line
/// search. `init` defaults to `g`.
pub fn minimize(f: &Integrand, g: &Field, init: Option<&Field>, solver: &SolverParams) -> Result<MinimizeReport> {
    g.check_finite()?;
    if !(solver.tol_grad > 0.0) {
        return Err(Error::invalid("tol_grad must be positive"));
    }
    let plan = SamplePlan { n_points: 4, n_pairs: 512, n_scales: 1, seed: 0, m: g.components(), ..SamplePlan::default() };
    let audit = hypothesis_audit(f, &plan)?;
    if !audit.passed("convexity_midpoint") {
        return Err(Error::invalid("integrand failed the sampled convexity audit"));
    }
    let grid: Arc<Grid> = g.grid().clone();
    let m = g.components();
    let h = grid.h();
    let free: Vec<bool> = (0..grid.n_nodes()).map(|k| grid.signed_distance(k) > 0.0).collect();
    let mut v: Vec<f64> = g.values().to_vec();
    if let Some(init) = init {
        init.check_compatible(g)?;
        init.check_finite()?;
        for (k, fr) in free.iter().enumerate() {
            if *fr {
                v[k * m..(k + 1) * m].copy_from_slice(init.node(k));
            }
        }
    }
    let residual_of = |grad: &[f64]| grad.iter().fold(0.0f64, |a, b| a.max(b.abs())) / (h * h);

    let mut e = energy_of(f, &grid, m, &v);
    let mut grad = energy_gradient(f, &grid, m, &v, &free);
    let mut residual = residual_of(&grad);
    let mut trace = vec![e];
    let mut step = h * h;
    let mut converged = residual <= solver.tol_grad;
    let mut failed = false;
    let mut iters = 0;
    while !converged && iters < solver.max_iters {
        let g2 = dot(&grad, &grad);
        let mut alpha = step;
        let mut accepted = None;
        // Below this predicted decrease the energy cannot resolve the step, and
        // a step is accepted when the slope along the ray is still nonpositive.
        let resolution = 64.0 * f64::EPSILON * e.abs();
        for _ in 0..MAX_BACKTRACK {
            let trial: Vec<f64> = v.iter().zip(&grad).map(|(a, b)| a - alpha * b).collect();
            let et = energy_of(f, &grid, m, &trial);
            if et.is_finite() && et <= e - ARMIJO * alpha * g2 {
                accepted = Some((trial, et, None));
                break;
            }
            if et.is_finite() && ARMIJO * alpha * g2 < resolution && et <= e + resolution {
                let gt = energy_gradient(f, &grid, m, &trial, &free);
                if dot(&gt, &grad) >= 0.0 {
                    accepted = Some((trial, et, Some(gt)));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, et, gt)) = accepted else {
            failed = true;
            break;
        };
        let new_grad = gt.unwrap_or_else(|| energy_gradient(f, &grid, m, &trial, &free));
        step = match solver.step {
            StepRule::Bb => {
                let sk: Vec<f64> = trial.iter().zip(&v).map(|(a, b)| a - b).collect();
                let yk: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&sk, &yk);
                let bb = dot(&sk, &sk) / sy;
                if sy > 0.0 && bb.is_finite() {
                    bb
                } else {
                    2.0 * alpha
                }
            }
            StepRule::Backtracking => 2.0 * alpha,
        };
        v = trial;
        e = et;
        grad = new_grad;
        residual = residual_of(&grad);
        trace.push(e);
        iters += 1;
        converged = residual <= solver.tol_grad;
    }
    let diff: Vec<f64> = v.iter().zip(g.values()).map(|(a, b)| a - b).collect();
    let el_sign = pairing(f, &grid, m, &v, &diff);
    Ok(MinimizeReport {
        field: Field::from_values(grid, m, v)?,
        energy_trace: trace,
        iterations: iters,
        residual,
        el_sign,
        converged,
        line_search_failed: failed,
    })
}
