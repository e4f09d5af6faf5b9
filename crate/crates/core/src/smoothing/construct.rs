//! The boundary-adapted smoothing `u_eps = sum_i (v * rho_i) psi_i + psi_0 v`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{Mollifier, Stencil};
use crate::cover::Covering;
use crate::geometry::Field;
use crate::partition::PartitionOfUnity;
use crate::{Error, Result};

const BALL_CHUNK: usize = 64;

/// Parameters of the two-parameter mollification with radii `c0 r_i^n_exp eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub eps: f64,
    pub c0: f64,
    #[serde(rename = "N")]
    pub n_exp: f64,
    #[serde(default)]
    pub mollifier: Mollifier,
    /// Width of the inner strip where the source is replaced by `g`.
    #[serde(default)]
    pub strip: f64,
    /// Reject when more than 20% of the balls have radii below `2h`.
    #[serde(default)]
    pub strict: bool,
}

impl SmoothingParams {
    /// `c0 = delta / 4`, no inner strip.
    pub fn new(eps: f64, delta: f64, n_exp: f64) -> SmoothingParams {
        SmoothingParams { eps, c0: delta / 4.0, n_exp, mollifier: Mollifier::Polynomial, strip: 0.0, strict: false }
    }

    #[inline]
    pub fn radius(&self, r: f64) -> f64 {
        self.c0 * r.powf(self.n_exp) * self.eps
    }

    pub fn validate(&self, covering: &Covering) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::invalid(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.n_exp >= 1.0) || !(self.c0 > 0.0) {
            return Err(Error::invalid("need N >= 1 and C0 > 0"));
        }
        if !(self.strip >= 0.0) {
            return Err(Error::invalid("strip width must be nonnegative"));
        }
        let d = covering.delta();
        for (i, b) in covering.balls().iter().enumerate() {
            if (1.0 + d / 2.0) * b.r + self.radius(b.r) > (1.0 + d) * b.r * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "ball {i}: (1+delta/2) r + C0 r^N eps exceeds (1+delta) r"
                )));
            }
        }
        Ok(())
    }
}

/// Output of [`boundary_adapted_smooth`].
#[derive(Clone, Debug)]
pub struct SmoothedResult {
    pub u_eps: Field,
    pub a1: Field,
    pub a2: Field,
    /// `C0 r_i^N eps` per ball.
    pub per_ball_radii: Vec<f64>,
    pub v_source: Field,
    /// Balls whose radius is below `2h`; their stencils are sub-grid.
    pub under_resolved: usize,
}

impl SmoothedResult {
    /// `|| D u_eps - A1 - A2 ||_{L^1}` with the finite-difference gradient.
    pub fn split_residual_l1(&self) -> f64 {
        let du = self.u_eps.gradient();
        let r = du.sub(&self.a1).and_then(|x| x.sub(&self.a2)).expect("same layout");
        r.lp_norm(1.0)
    }

    /// Largest `|u_eps - g|` over nodes on or outside the boundary next to an inside node.
    pub fn boundary_defect(&self, g: &Field) -> f64 {
        let grid = self.u_eps.grid();
        let m = self.u_eps.components();
        grid.boundary_adjacent_mask()
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(k, _)| {
                (0..m).map(|c| (self.u_eps.get(k, c) - g.get(k, c)).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// `g` on the boundary, outside the domain and on the inner strip `d < width`; `u` elsewhere.
pub fn blend_source(u: &Field, g: &Field, width: f64) -> Result<Field> {
    u.check_compatible(g)?;
    if !(width >= 0.0) {
        return Err(Error::invalid(format!("strip width must be nonnegative, got {width}")));
    }
    let grid = u.grid().clone();
    let m = u.components();
    let mut out = u.clone();
    out.values_mut().par_chunks_mut(m).enumerate().for_each(|(k, o)| {
        let d = grid.signed_distance(k);
        if d <= 0.0 || d < width {
            o.copy_from_slice(g.node(k));
        }
    });
    Ok(out)
}

/// Nodes of one ball's patch with its contributions to `u_eps`, `A1` and `A2`.
type BallContribution = (Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Builds `u_eps` together with the split `D u_eps = A1 + A2`:
///
/// * `A1 = psi_0 Dv + sum_i (Dv * rho_i) psi_i`
/// * `A2 = sum_i (v * rho_i - v) D psi_i`
///
/// where `v` is [`blend_source`] of `u` and `g` and `rho_i` has radius `C0 r_i^N eps`.
pub fn boundary_adapted_smooth(
    u: &Field,
    g: &Field,
    covering: &Covering,
    pou: &PartitionOfUnity,
    params: &SmoothingParams,
) -> Result<SmoothedResult> {
    u.check_compatible(g)?;
    u.check_finite()?;
    g.check_finite()?;
    if pou.balls.as_slice() != covering.balls() {
        return Err(Error::invalid("partition of unity was built for a different covering"));
    }
    let grid = u.grid().clone();
    let pg = pou.grid();
    if pg.dims() != grid.dims() || pg.h() != grid.h() || pg.origin() != grid.origin() {
        return Err(Error::invalid("partition of unity lives on a different grid"));
    }
    params.validate(covering)?;
    let h = grid.h();
    let radii: Vec<f64> = covering.balls().iter().map(|b| params.radius(b.r)).collect();
    let under = radii.iter().filter(|r| **r < 2.0 * h).count();
    if params.strict && under * 5 > radii.len() {
        return Err(Error::invalid(format!(
            "{under} of {} mollification radii are below 2h; use a finer grid",
            radii.len()
        )));
    }

    let m = u.components();
    let v = blend_source(u, g, params.strip)?;
    let dv = v.gradient();
    let psi0 = pou.psi0.values();
    let mut ue: Vec<f64> = v.values().iter().enumerate().map(|(k, x)| psi0[k / m] * x).collect();
    let mut a1: Vec<f64> = dv.values().iter().enumerate().map(|(k, x)| psi0[k / (2 * m)] * x).collect();
    let mut a2 = vec![0.0; a1.len()];

    let idx: Vec<usize> = (0..covering.len()).collect();
    for chunk in idx.chunks(BALL_CHUNK) {
        let parts: Vec<BallContribution> = chunk
            .par_iter()
            .map(|&b| {
                let st = Stencil::new(h, radii[b], params.mollifier);
                let patch = &pou.psi[b];
                let dpsi = &pou.dpsi[b];
                let n = patch.len();
                let mut nodes = Vec::with_capacity(n);
                let mut pu = vec![0.0; n * m];
                let mut pa1 = vec![0.0; n * 2 * m];
                let mut pa2 = vec![0.0; n * 2 * m];
                let mut w = vec![0.0; m];
                let mut kd = vec![0.0; 2 * m];
                for k in 0..n {
                    let node = patch.node(&grid, k);
                    nodes.push(node);
                    let psi = patch.values[k];
                    let (gx, gy) = (dpsi[2 * k], dpsi[2 * k + 1]);
                    if psi == 0.0 && gx == 0.0 && gy == 0.0 {
                        continue;
                    }
                    let (i, j) = grid.ij(node);
                    st.apply_node(&v, i, j, &mut w);
                    st.apply_node(&dv, i, j, &mut kd);
                    for c in 0..m {
                        pu[k * m + c] = psi * w[c];
                        let diff = w[c] - v.get(node, c);
                        pa2[k * 2 * m + 2 * c] = diff * gx;
                        pa2[k * 2 * m + 2 * c + 1] = diff * gy;
                    }
                    for c in 0..2 * m {
                        pa1[k * 2 * m + c] = psi * kd[c];
                    }
                }
                (nodes, pu, pa1, pa2)
            })
            .collect();
        for (nodes, pu, pa1, pa2) in parts {
            for (k, node) in nodes.iter().enumerate() {
                for c in 0..m {
                    ue[node * m + c] += pu[k * m + c];
                }
                for c in 0..2 * m {
                    a1[node * 2 * m + c] += pa1[k * 2 * m + c];
                    a2[node * 2 * m + c] += pa2[k * 2 * m + c];
                }
            }
        }
    }
    Ok(SmoothedResult {
        u_eps: Field::from_values(grid.clone(), m, ue)?,
        a1: Field::from_values(grid.clone(), 2 * m, a1)?,
        a2: Field::from_values(grid, 2 * m, a2)?,
        per_ball_radii: radii,
        v_source: v,
        under_resolved: under,
    })
}
