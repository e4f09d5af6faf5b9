//! Lavrentiev gap probe: singular competitor energy against discrete minima
//! on refined meshes.

use serde::Serialize;

use super::config::ExperimentConfig;
use super::minimize::minimize;
use crate::geometry::build_grid;
use crate::integrands::{classify_case, TheoremCase};
use crate::{Error, Result};

pub const GAP_DISCLAIMER: &str = "Discrete minima over conforming bilinear fields only bound the infimum over \
W^{1,q} competitors from above on each mesh; a verdict is numerical evidence, not a proof of the presence or \
absence of a Lavrentiev gap.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GapFlag {
    GapSuspected,
    NoGapConsistent,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshResult {
    pub h: f64,
    /// Discrete minimum over bilinear fields with the competitor's boundary values.
    pub min_energy: f64,
    /// Midpoint-rule energy of the competitor with its analytic gradient.
    pub singular_energy: f64,
    pub residual: f64,
    pub converged: bool,
    pub line_search_failed: bool,
    pub el_sign: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    /// Extrapolated `F(u*)`.
    pub singular_energy: f64,
    /// `(h, min)` per mesh, coarsest first.
    pub smooth_min_per_mesh: Vec<(f64, f64)>,
    pub meshes: Vec<MeshResult>,
    /// Finest discrete minimum minus `F(u*)`.
    pub gap_estimate: f64,
    pub margin: f64,
    pub classifier_verdict: TheoremCase,
    pub flag: GapFlag,
    pub disclaimer: String,
}

impl GapReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Aitken extrapolation of the last three values when they converge
/// geometrically, the last value otherwise.
fn extrapolate(v: &[f64]) -> f64 {
    let n = v.len();
    let last = v[n - 1];
    if n < 3 {
        return last;
    }
    let (d1, d2) = (v[n - 2] - v[n - 3], v[n - 1] - v[n - 2]);
    if d1 * d2 > 0.0 && d2.abs() < d1.abs() {
        last - d2 * d2 / (d2 - d1)
    } else {
        last
    }
}

/// Minimizes on meshes `h, h/2, h/4, ...` with the competitor's boundary
/// values and compares against the competitor's energy.
///
/// The flag is `gap_suspected` when both finest minima exceed
/// `F(u*) (1 + margin)`, `no_gap_consistent` when neither does, and
/// `inconclusive` otherwise or when an unconverged solve stays above the
/// threshold.
pub fn gap_probe(config: &ExperimentConfig) -> Result<GapReport> {
    let domain = config.domain()?;
    let f = config.integrand()?;
    let competitor = config
        .competitor
        .as_ref()
        .or(config.u.as_ref())
        .ok_or_else(|| Error::invalid("gap probe needs a competitor"))?;
    competitor.validate()?;
    if competitor.grad([0.0, 0.0], 1.0).is_none() {
        return Err(Error::invalid("gap competitor must be analytic"));
    }
    let boundary = config.g.as_ref().unwrap_or(competitor);
    let gp = &config.gap;
    if gp.meshes < 2 || !(gp.margin > 0.0) || !(config.h > 0.0) {
        return Err(Error::invalid("gap probe needs h > 0, at least two meshes and a positive margin"));
    }
    let flags = config.case_flags(&f);
    let verdict = classify_case(f.p, f.q, 2, 1, f.alpha, flags)?;
    let hs: Vec<f64> = (0..gp.meshes).map(|k| config.h / 2f64.powi(k as i32)).collect();
    let h_ref = hs[hs.len() - 1];

    let mut meshes = Vec::with_capacity(hs.len());
    for &h in &hs {
        let grid = build_grid(&domain, h, 0.0)?;
        let g = boundary.field(&grid, h_ref, &domain, &config.base_dir)?;
        let singular = grid.integrate_cells(|x, _| {
            let d = competitor.grad(x, h_ref).expect("analytic competitor");
            f.density(x, &d)
        });
        if !singular.is_finite() {
            return Err(Error::invalid("competitor energy is not finite on the quadrature grid"));
        }
        let r = minimize(&f, &g, None, &config.solver)?;
        meshes.push(MeshResult {
            h,
            min_energy: r.energy(),
            singular_energy: singular,
            residual: r.residual,
            converged: r.converged,
            line_search_failed: r.line_search_failed,
            el_sign: r.el_sign,
            iterations: r.iterations,
        });
    }
    let per_mesh: Vec<f64> = meshes.iter().map(|m| m.singular_energy).collect();
    let singular_energy = extrapolate(&per_mesh);
    let threshold = singular_energy * (1.0 + gp.margin);
    let finest = &meshes[meshes.len() - 2..];
    let above: Vec<bool> = finest.iter().map(|m| m.min_energy > threshold).collect();
    let unreliable = finest.iter().any(|m| m.min_energy > threshold && !m.converged);
    let flag = if unreliable {
        GapFlag::Inconclusive
    } else if above.iter().all(|a| *a) {
        GapFlag::GapSuspected
    } else if above.iter().all(|a| !*a) {
        GapFlag::NoGapConsistent
    } else {
        GapFlag::Inconclusive
    };
    Ok(GapReport {
        singular_energy,
        smooth_min_per_mesh: meshes.iter().map(|m| (m.h, m.min_energy)).collect(),
        gap_estimate: meshes[meshes.len() - 1].min_energy - singular_energy,
        margin: gp.margin,
        classifier_verdict: verdict,
        flag,
        disclaimer: GAP_DISCLAIMER.to_string(),
        meshes,
    })
}
