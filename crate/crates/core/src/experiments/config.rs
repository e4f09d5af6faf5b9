//! Experiment configuration files and analytic field descriptors.

use std::f64::consts::E;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::minimize::SolverParams;
use crate::cover::DEFAULT_LAMBDA;
use crate::geometry::{Domain, Field, Grid, Point};
use crate::integrands::{ACoeff, CaseFlags, Growth, Integrand, IntegrandKind};
use crate::{Error, Result};

fn half() -> [f64; 2] {
    [0.5, 0.5]
}

fn one() -> f64 {
    1.0
}

/// A scalar function given analytically or by a field file.
///
/// Singular descriptors place their center at `center + offset * h_ref`,
/// where `h_ref` is the finest grid spacing of the experiment, so the
/// singular point never falls on a node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldSpec {
    /// `c[0] + c[1] x + c[2] y`
    Affine { c: [f64; 3] },
    /// `scale x y`
    Product {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `amplitude sin(kx x) sin(ky y)`
    Sine { kx: f64, ky: f64, amplitude: f64 },
    /// `amplitude (1 - |x - c|^2 / radius^2)^3` inside the disk, zero outside.
    Bump { center: Point, radius: f64, amplitude: f64 },
    /// `amplitude |x - c|^beta`, replaced by the matching C^1 quadratic for
    /// `|x - c| < core`.
    RadialPower {
        center: Point,
        beta: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        core: f64,
        #[serde(default = "half")]
        offset: [f64; 2],
    },
    /// `amplitude ln(ln(e / |x - c|))`, unbounded at `c` but in `W^{1,2}`.
    LogLog {
        center: Point,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "half")]
        offset: [f64; 2],
    },
    /// `slope |x - c|`
    Cone {
        center: Point,
        #[serde(default = "one")]
        slope: f64,
        #[serde(default = "half")]
        offset: [f64; 2],
    },
    /// A field in the binary field format.
    File { path: PathBuf },
}

impl FieldSpec {
    fn center(&self, h_ref: f64) -> Point {
        match *self {
            FieldSpec::RadialPower { center, offset, .. }
            | FieldSpec::LogLog { center, offset, .. }
            | FieldSpec::Cone { center, offset, .. } => [center[0] + offset[0] * h_ref, center[1] + offset[1] * h_ref],
            FieldSpec::Bump { center, .. } => center,
            _ => [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            FieldSpec::Bump { radius, .. } => radius > 0.0,
            FieldSpec::RadialPower { beta, core, .. } => beta > 0.0 && core >= 0.0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid field descriptor {self:?}")))
        }
    }

    /// Value at `x`; `None` for file fields.
    pub fn eval(&self, x: Point, h_ref: f64) -> Option<f64> {
        let c = self.center(h_ref);
        let r = (x[0] - c[0]).hypot(x[1] - c[1]);
        Some(match *self {
            FieldSpec::Affine { c } => c[0] + c[1] * x[0] + c[2] * x[1],
            FieldSpec::Product { scale } => scale * x[0] * x[1],
            FieldSpec::Sine { kx, ky, amplitude } => amplitude * (kx * x[0]).sin() * (ky * x[1]).sin(),
            FieldSpec::Bump { radius, amplitude, .. } => {
                let s = 1.0 - (r / radius).powi(2);
                if s > 0.0 {
                    amplitude * s * s * s
                } else {
                    0.0
                }
            }
            FieldSpec::RadialPower { beta, amplitude, core, .. } => {
                if r < core {
                    let b = 0.5 * beta * core.powf(beta - 2.0);
                    amplitude * (core.powf(beta) - b * core * core + b * r * r)
                } else {
                    amplitude * r.powf(beta)
                }
            }
            FieldSpec::LogLog { amplitude, .. } => amplitude * (E / r).ln().ln(),
            FieldSpec::Cone { slope, .. } => slope * r,
            FieldSpec::File { .. } => return None,
        })
    }

    /// Analytic gradient at `x`; `None` for file fields.
    pub fn grad(&self, x: Point, h_ref: f64) -> Option<[f64; 2]> {
        let c = self.center(h_ref);
        let d = [x[0] - c[0], x[1] - c[1]];
        let r = d[0].hypot(d[1]);
        let radial = |s: f64| if r > 0.0 { [s * d[0] / r, s * d[1] / r] } else { [0.0, 0.0] };
        Some(match *self {
            FieldSpec::Affine { c } => [c[1], c[2]],
            FieldSpec::Product { scale } => [scale * x[1], scale * x[0]],
            FieldSpec::Sine { kx, ky, amplitude } => [
                amplitude * kx * (kx * x[0]).cos() * (ky * x[1]).sin(),
                amplitude * ky * (kx * x[0]).sin() * (ky * x[1]).cos(),
            ],
            FieldSpec::Bump { radius, amplitude, .. } => {
                let s = 1.0 - (r / radius).powi(2);
                if s > 0.0 {
                    let k = -6.0 * amplitude * s * s / (radius * radius);
                    [k * d[0], k * d[1]]
                } else {
                    [0.0, 0.0]
                }
            }
            FieldSpec::RadialPower { beta, amplitude, core, .. } => {
                if r < core {
                    let b = 0.5 * beta * core.powf(beta - 2.0);
                    [2.0 * amplitude * b * d[0], 2.0 * amplitude * b * d[1]]
                } else {
                    radial(amplitude * beta * r.powf(beta - 1.0))
                }
            }
            FieldSpec::LogLog { amplitude, .. } => radial(-amplitude / (r * (E / r).ln())),
            FieldSpec::Cone { slope, .. } => radial(slope),
            FieldSpec::File { .. } => return None,
        })
    }

    /// Samples the descriptor on `grid`. File fields are loaded relative to
    /// `base` and must share the grid layout.
    pub fn field(&self, grid: &Arc<Grid>, h_ref: f64, domain: &Domain, base: &Path) -> Result<Field> {
        self.validate()?;
        if let FieldSpec::File { path } = self {
            let f = Field::load(base.join(path), Some(domain))?;
            let fg = f.grid();
            if fg.dims() != grid.dims() || fg.h() != grid.h() || fg.origin() != grid.origin() {
                return Err(Error::invalid(format!("field file {} does not match the experiment grid", path.display())));
            }
            return Ok(Field::from_values(grid.clone(), f.components(), f.into_values())?.extend_from_boundary(domain));
        }
        Ok(Field::from_fn(grid.clone(), |x| self.eval(x, h_ref).expect("analytic descriptor")))
    }
}

/// A JSON object given inline or as a path to a file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source {
    Path(PathBuf),
    Inline(serde_json::Value),
}

impl Source {
    fn text(&self, base: &Path) -> Result<String> {
        match self {
            Source::Path(p) => Ok(std::fs::read_to_string(base.join(p))?),
            Source::Inline(v) => Ok(v.to_string()),
        }
    }
}

/// Settings of [`super::gap_probe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapParams {
    /// Number of meshes `h, h/2, h/4, ...`.
    pub meshes: usize,
    /// Relative margin above the singular energy that signals a gap.
    pub margin: f64,
}

impl Default for GapParams {
    fn default() -> Self {
        GapParams { meshes: 3, margin: 0.1 }
    }
}

/// A grid of exponents for [`super::sweep`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub p_values: Vec<f64>,
    #[serde(default = "default_q_step")]
    pub q_step: f64,
    #[serde(default = "default_q_span")]
    pub q_span: f64,
    pub n_values: Vec<usize>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one_usize")]
    pub m: usize,
    #[serde(default)]
    pub flags: CaseFlags,
    /// Values of the minimizer flag to sweep over.
    #[serde(default = "both")]
    pub minimizer: Vec<bool>,
}

fn default_q_step() -> f64 {
    0.1
}

fn default_q_span() -> f64 {
    3.0
}

fn one_usize() -> usize {
    1
}

fn both() -> Vec<bool> {
    vec![false, true]
}

/// Input of the convergence, gap and sweep experiments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub domain: Option<Source>,
    #[serde(default)]
    pub integrand: Option<Source>,
    /// Boundary data.
    #[serde(default)]
    pub g: Option<FieldSpec>,
    /// Test function.
    #[serde(default)]
    pub u: Option<FieldSpec>,
    #[serde(default)]
    pub eps_schedule: Vec<f64>,
    #[serde(default)]
    pub h: f64,
    #[serde(default)]
    pub r_min: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Exponent of the smoothing radius; the classifier's choice by default.
    #[serde(default, rename = "N")]
    pub n_exp: Option<f64>,
    #[serde(default)]
    pub flags: Option<CaseFlags>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub seed: u64,
    /// Singular competitor of the gap probe.
    #[serde(default)]
    pub competitor: Option<FieldSpec>,
    #[serde(default)]
    pub gap: GapParams,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<ExperimentConfig> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads a config; relative paths inside resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let mut c = ExperimentConfig::from_json_str(&std::fs::read_to_string(path)?)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(DEFAULT_LAMBDA)
    }

    pub fn domain(&self) -> Result<Domain> {
        let src = self.domain.as_ref().ok_or_else(|| Error::invalid("config has no domain"))?;
        Domain::from_json_str(&src.text(&self.base_dir)?)
    }

    pub fn integrand(&self) -> Result<Integrand> {
        let src = self.integrand.as_ref().ok_or_else(|| Error::invalid("config has no integrand"))?;
        Integrand::from_json_str(&src.text(&self.base_dir)?)
    }

    pub fn g_spec(&self) -> Result<&FieldSpec> {
        self.g.as_ref().ok_or_else(|| Error::invalid("config has no boundary data g"))
    }

    pub fn u_spec(&self) -> Result<&FieldSpec> {
        self.u.as_ref().ok_or_else(|| Error::invalid("config has no test function u"))
    }

    /// Checks the grid spacing, covering radius and eps schedule.
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::invalid(format!("grid spacing must be positive, got {}", self.h)));
        }
        if !(self.r_min >= 4.0 * self.h * (1.0 - 1e-12)) {
            return Err(Error::invalid(format!("r_min = {} is below 4h = {}", self.r_min, 4.0 * self.h)));
        }
        if self.eps_schedule.is_empty() {
            return Err(Error::invalid("eps schedule is empty"));
        }
        if self.eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::invalid("eps schedule must be strictly decreasing"));
        }
        if let Some(e) = self.eps_schedule.iter().find(|e| !(**e >= 2.0 * self.h && **e < 1.0)) {
            return Err(Error::invalid(format!("eps = {e} must lie in [2h, 1)")));
        }
        Ok(())
    }

    /// Classifier flags: the configured ones, or those implied by the integrand.
    pub fn case_flags(&self, f: &Integrand) -> CaseFlags {
        self.flags.unwrap_or_else(|| flags_for(f))
    }
}

/// Flags implied by the structure of an integrand. Every catalog density with
/// a nonnegative coefficient has a minimizing point (the minimizer of `a` on
/// the ball) and is doubling.
pub fn flags_for(f: &Integrand) -> CaseFlags {
    let a_ok = !matches!(f.a, ACoeff::Oscillation { .. });
    CaseFlags {
        autonomous: !f.depends_on_x(),
        growth: Growth::Natural,
        bounded_u: false,
        doubling: f.kind != IntegrandKind::CustomTabulated,
        holder_x: true,
        x_condition: a_ok,
        is_minimizer: false,
    }
}
