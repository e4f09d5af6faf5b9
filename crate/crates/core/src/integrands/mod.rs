//! Energy densities `F(x, z)`, quadrature energies, hypothesis audits and the
//! exponent-range classifier.
//!
//! Gradients are flattened `n x m` matrices in the layout of
//! [`Field::gradient`]: `[d_x u_0, d_y u_0, d_x u_1, d_y u_1, ...]`. Norms of
//! `z` are Frobenius norms.

mod audit;
mod classify;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{polygon, Field, Point};
use crate::{Error, Result};

pub use audit::{hypothesis_audit, HypothesisEntry, HypothesisReport, SamplePlan, AUDIT_SLACK};
pub use classify::{classify_case, CaseFlags, Conclusion, Growth, TheoremCase, Thresholds};

/// Below this norm a degenerate gradient is treated as zero.
const ZERO_GUARD: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrandKind {
    /// `(mu^2 + |z|^2)^(p/2)`
    Power,
    /// `|z|^p + a(x) |z|^q`
    DoublePhase,
    /// `(mu^2 + |z|^2)^(p/2) + (mu^2 + |z|^2)^(q/2)`
    PqBlend,
    /// Radial profile `f(|z|)` interpolated linearly from a table.
    CustomTabulated,
}

/// Coefficient `a(x)` of the double-phase integrand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum ACoeff {
    Constant { value: f64 },
    /// `scale * max(x_1 - x0, 0)^alpha`
    X1Power {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        x0: f64,
    },
    /// `scale * dist(x, [a, b])^alpha`
    DistancePower {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
        segment: [Point; 2],
    },
    /// `amplitude * sin(frequency * x_1)`, sign-changing.
    Oscillation { amplitude: f64, frequency: f64 },
}

fn one() -> f64 {
    1.0
}

impl ACoeff {
    pub fn eval(&self, x: Point) -> f64 {
        match *self {
            ACoeff::Constant { value } => value,
            ACoeff::X1Power { alpha, scale, x0 } => scale * (x[0] - x0).max(0.0).powf(alpha),
            ACoeff::DistancePower { alpha, scale, segment } => {
                scale * polygon::segment_distance(x, segment[0], segment[1]).powf(alpha)
            }
            ACoeff::Oscillation { amplitude, frequency } => amplitude * (frequency * x[0]).sin(),
        }
    }

    /// Declared Hölder seminorm of exponent `alpha` (valid on sets of
    /// diameter at most one for the oscillation).
    pub fn holder_seminorm(&self, alpha: f64) -> f64 {
        match *self {
            ACoeff::Constant { .. } => 0.0,
            ACoeff::X1Power { alpha: b, scale, .. } | ACoeff::DistancePower { alpha: b, scale, .. } => {
                if b >= alpha {
                    scale.abs()
                } else {
                    f64::INFINITY
                }
            }
            ACoeff::Oscillation { amplitude, frequency } => amplitude.abs() * frequency.abs().powf(alpha).max(1.0),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ACoeff::Constant { .. })
    }
}

impl Default for ACoeff {
    fn default() -> Self {
        ACoeff::Constant { value: 0.0 }
    }
}

/// An energy density with its declared structural constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integrand {
    pub kind: IntegrandKind,
    pub p: f64,
    pub q: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub a: ACoeff,
    #[serde(default = "default_s0")]
    pub s0: f64,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default)]
    pub autonomous: bool,
    /// `(|z|, f)` pairs for [`IntegrandKind::CustomTabulated`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<[f64; 2]>,
}

fn default_s0() -> f64 {
    2.0
}

fn default_eps0() -> f64 {
    0.1
}

impl Integrand {
    /// `(mu^2 + |z|^2)^(p/2)`.
    pub fn power(p: f64, mu: f64) -> Integrand {
        Integrand {
            kind: IntegrandKind::Power,
            p,
            q: p,
            alpha: 1.0,
            nu: power_nu(p),
            mu,
            lambda: 2f64.powf(p / 2.0).max(p * (p - 1.0).max(1.0)),
            a: ACoeff::default(),
            s0: default_s0(),
            eps0: default_eps0(),
            autonomous: true,
            table: Vec::new(),
        }
    }

    /// `|z|^p + a(x) |z|^q`.
    pub fn double_phase(p: f64, q: f64, alpha: f64, a: ACoeff) -> Integrand {
        let amax = match a {
            ACoeff::Constant { value } => value.abs(),
            ACoeff::X1Power { scale, .. } | ACoeff::DistancePower { scale, .. } => scale.abs(),
            ACoeff::Oscillation { amplitude, .. } => amplitude.abs(),
        };
        let autonomous = a.is_constant();
        let lambda = (2f64.powf(q / 2.0) * (1.0 + amax) * q * q).max(a.holder_seminorm(alpha).min(1e6));
        Integrand {
            kind: IntegrandKind::DoublePhase,
            p,
            q,
            alpha,
            nu: power_nu(p),
            mu: 0.0,
            lambda,
            a,
            s0: default_s0(),
            eps0: default_eps0(),
            autonomous,
            table: Vec::new(),
        }
    }

    /// `(mu^2 + |z|^2)^(p/2) + (mu^2 + |z|^2)^(q/2)`.
    pub fn pq_blend(p: f64, q: f64, mu: f64) -> Integrand {
        Integrand {
            kind: IntegrandKind::PqBlend,
            p,
            q,
            alpha: 1.0,
            nu: power_nu(p),
            mu,
            lambda: 2.0 * 2f64.powf(q / 2.0) * q * q,
            a: ACoeff::default(),
            s0: default_s0(),
            eps0: default_eps0(),
            autonomous: true,
            table: Vec::new(),
        }
    }

    /// Radial profile given by `(|z|, f)` samples with increasing `|z|`.
    pub fn tabulated(p: f64, q: f64, nu: f64, lambda: f64, table: Vec<[f64; 2]>) -> Result<Integrand> {
        let f = Integrand {
            kind: IntegrandKind::CustomTabulated,
            p,
            q,
            alpha: 1.0,
            nu,
            mu: 0.0,
            lambda,
            a: ACoeff::default(),
            s0: default_s0(),
            eps0: default_eps0(),
            autonomous: true,
            table,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.p > 1.0 && self.q >= self.p && self.q.is_finite()) {
            return bad(format!("exponents must satisfy 1 < p <= q, got p = {}, q = {}", self.p, self.q));
        }
        if !(self.nu > 0.0 && self.lambda >= self.nu) {
            return bad(format!("need nu > 0 and Lambda >= nu, got {} and {}", self.nu, self.lambda));
        }
        if !(self.mu >= 0.0 && self.mu <= 1.0) {
            return bad(format!("mu must lie in [0, 1], got {}", self.mu));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.s0 > 1.0 && self.eps0 > 0.0) {
            return bad("need s0 > 1 and eps0 > 0".into());
        }
        let x_dependent = self.kind == IntegrandKind::DoublePhase && !self.a.is_constant();
        if self.autonomous && x_dependent {
            return bad("integrand declared autonomous but a(x) is not constant".into());
        }
        if self.kind == IntegrandKind::DoublePhase && !self.a.holder_seminorm(self.alpha).is_finite() {
            return bad("a(x) has no finite Hölder seminorm of exponent alpha".into());
        }
        if self.kind == IntegrandKind::CustomTabulated {
            if self.table.len() < 2 {
                return bad("tabulated integrand needs at least two samples".into());
            }
            if self.table[0][0] != 0.0 || self.table.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return bad("table abscissae must start at 0 and increase".into());
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Integrand> {
        let f: Integrand = serde_json::from_str(s)?;
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Integrand> {
        Integrand::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("integrand serializes")
    }

    /// Whether `F` depends on `x`.
    pub fn depends_on_x(&self) -> bool {
        self.kind == IntegrandKind::DoublePhase && !self.a.is_constant()
    }

    /// `F(x, z)`.
    pub fn density(&self, x: Point, z: &[f64]) -> f64 {
        let t2 = norm2(z);
        match self.kind {
            IntegrandKind::Power => (self.mu * self.mu + t2).powf(0.5 * self.p),
            IntegrandKind::DoublePhase => {
                let t = t2.sqrt();
                t.powf(self.p) + self.a.eval(x) * t.powf(self.q)
            }
            IntegrandKind::PqBlend => {
                let b = self.mu * self.mu + t2;
                b.powf(0.5 * self.p) + b.powf(0.5 * self.q)
            }
            IntegrandKind::CustomTabulated => self.profile(t2.sqrt()),
        }
    }

    /// `d_z F(x, z)`, written into `out`.
    pub fn d_density(&self, x: Point, z: &[f64], out: &mut [f64]) {
        let t2 = norm2(z);
        let radial = match self.kind {
            IntegrandKind::Power => {
                let b = self.mu * self.mu + t2;
                self.p * pow_guard(b, 0.5 * self.p - 1.0)
            }
            IntegrandKind::DoublePhase => {
                self.p * pow_guard(t2, 0.5 * self.p - 1.0) + self.a.eval(x) * self.q * pow_guard(t2, 0.5 * self.q - 1.0)
            }
            IntegrandKind::PqBlend => {
                let b = self.mu * self.mu + t2;
                self.p * pow_guard(b, 0.5 * self.p - 1.0) + self.q * pow_guard(b, 0.5 * self.q - 1.0)
            }
            IntegrandKind::CustomTabulated => {
                for (k, o) in out.iter_mut().enumerate() {
                    let step = 1e-6 * (1.0 + t2.sqrt());
                    let mut zp = z.to_vec();
                    let mut zm = z.to_vec();
                    zp[k] += step;
                    zm[k] -= step;
                    *o = (self.density(x, &zp) - self.density(x, &zm)) / (2.0 * step);
                }
                return;
            }
        };
        for (o, v) in out.iter_mut().zip(z) {
            *o = radial * v;
        }
    }

    fn profile(&self, t: f64) -> f64 {
        let tab = &self.table;
        let k = tab.partition_point(|r| r[0] <= t).clamp(1, tab.len() - 1);
        let (a, b) = (tab[k - 1], tab[k]);
        a[1] + (b[1] - a[1]) * (t - a[0]) / (b[0] - a[0])
    }
}

/// Lower ellipticity constant of `|z|^p`: `min(1, p - 1)` scaled by `2^(1 - p/2)`
/// for `p < 2`, and `2^(2 - p)` for `p >= 2`.
fn power_nu(p: f64) -> f64 {
    if p >= 2.0 {
        2f64.powf(2.0 - p)
    } else {
        (p - 1.0) * 2f64.powf(1.0 - 0.5 * p) * 0.5
    }
}

/// `b^e` with the continuous extension at `b = 0`: zero for `e > 0`, zero
/// under the guard for `e < 0`.
fn pow_guard(b: f64, e: f64) -> f64 {
    if b < ZERO_GUARD * ZERO_GUARD {
        if e == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        b.powf(e)
    }
}

#[inline]
pub(crate) fn norm2(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum()
}

/// Midpoint-rule energy `int F(x, Du)` over the active cells, with `Du`
/// averaged over the cell corners.
pub fn energy(f: &Integrand, du: &Field) -> Result<f64> {
    energy_where(f, du, |_| true)
}

/// [`energy`] restricted to cells whose center passes `keep`.
pub fn energy_where<K>(f: &Integrand, du: &Field, keep: K) -> Result<f64>
where
    K: Fn(Point) -> bool + Sync,
{
    let grid = du.grid();
    if let Some(node) = (0..grid.n_nodes()).find(|k| grid.is_inside(*k) && du.node(*k).iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite { node });
    }
    Ok(du.integrate_where(|x, z| f.density(x, z), keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dp() -> Integrand {
        Integrand::double_phase(2.0, 3.0, 0.5, ACoeff::X1Power { alpha: 0.5, scale: 1.0, x0: 0.0 })
    }

    #[test]
    fn density_examples() {
        assert_eq!(Integrand::power(2.0, 0.0).density([0.0, 0.0], &[3.0, 0.0]), 9.0);
        assert_relative_eq!(dp().density([0.25, 0.7], &[0.0, 2.0]), 8.0, epsilon = 1e-14);
        assert_eq!(Integrand::pq_blend(2.0, 3.0, 1.0).density([0.0, 0.0], &[0.0, 0.0]), 2.0);
    }

    #[test]
    fn derivative_examples() {
        let mut out = [0.0; 2];
        Integrand::power(2.0, 0.0).d_density([0.0, 0.0], &[1.5, -2.0], &mut out);
        assert_eq!(out, [3.0, -4.0]);
        let f = Integrand::double_phase(2.0, 3.0, 1.0, ACoeff::Constant { value: 1.0 });
        f.d_density([0.0, 0.0], &[0.6, 0.8], &mut out);
        assert_relative_eq!(out[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(out[1], 4.0, epsilon = 1e-14);
        Integrand::power(1.5, 0.0).d_density([0.0, 0.0], &[0.0, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn tabulated_matches_power() {
        let table: Vec<[f64; 2]> = (0..=4000).map(|k| [k as f64 * 0.001, (k as f64 * 0.001).powi(2)]).collect();
        let f = Integrand::tabulated(2.0, 2.0, 0.5, 2.0, table).unwrap();
        assert_relative_eq!(f.density([0.0, 0.0], &[1.0, 1.0]), 2.0, epsilon = 1e-6);
        let mut out = [0.0; 2];
        f.d_density([0.0, 0.0], &[1.0, 1.0], &mut out);
        assert_relative_eq!(out[0], 2.0, epsilon = 1e-3);
    }

    #[test]
    fn energy_examples() {
        let grid = build_grid(&Domain::unit_square(), 1.0 / 64.0, 0.0).unwrap();
        let f = Integrand::power(2.0, 0.0);
        let u = Field::from_fn(grid.clone(), |x| x[0]);
        assert_relative_eq!(energy(&f, &u.gradient()).unwrap(), 1.0, epsilon = 1e-12);
        let u = Field::from_fn(grid.clone(), |x| x[0] * x[0]);
        let e = energy(&f, &u.gradient()).unwrap();
        assert!((e - 4.0 / 3.0).abs() < 2.0 / 64.0, "{e}");
        let mut du = u.gradient();
        du.values_mut()[2 * grid.index(10, 10)] = f64::NAN;
        assert!(matches!(energy(&f, &du), Err(Error::NonFinite { node }) if node == grid.index(10, 10)));
    }

    #[test]
    fn energy_is_additive() {
        let grid = build_grid(&Domain::l_shape(), 1.0 / 32.0, 0.0).unwrap();
        let f = dp();
        let du = Field::from_fn(grid, |x| (3.0 * x[0]).sin() + x[1] * x[1]).gradient();
        let all = energy(&f, &du).unwrap();
        let left = energy_where(&f, &du, |x| x[0] < 0.7).unwrap();
        let right = energy_where(&f, &du, |x| x[0] >= 0.7).unwrap();
        assert_relative_eq!(all, left + right, max_relative = 1e-14);
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let f = dp();
        let back = Integrand::from_json_str(&f.to_json()).unwrap();
        assert_eq!(back, f);
        let s = r#"{"kind":"double_phase","p":2,"q":3,"Lambda":50,"a":{"type":"x1_power","params":{"alpha":1}},"autonomous":true}"#;
        assert!(Integrand::from_json_str(s).is_err());
        let s = r#"{"kind":"power","p":3,"q":2,"Lambda":5}"#;
        assert!(Integrand::from_json_str(s).is_err());
    }

    fn zvec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, 2)
    }

    fn catalog() -> Vec<Integrand> {
        vec![
            Integrand::power(2.0, 0.0),
            Integrand::power(3.5, 0.5),
            Integrand::power(1.5, 0.0),
            dp(),
            Integrand::pq_blend(2.0, 2.4, 1.0),
            Integrand::pq_blend(1.5, 3.5, 0.0),
        ]
    }

    proptest! {
        #[test]
        fn midpoint_convexity(z in zvec(), w in zvec(), x in 0.0f64..1.0) {
            for f in catalog() {
                let mid = [(z[0] + w[0]) / 2.0, (z[1] + w[1]) / 2.0];
                let lhs = f.density([x, 0.5], &mid);
                let rhs = 0.5 * (f.density([x, 0.5], &z) + f.density([x, 0.5], &w));
                prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn derivative_matches_differences(z in prop::collection::vec(-30.0f64..30.0, 2), x in 0.05f64..1.0) {
            prop_assume!(norm2(&z) > 1e-4);
            for f in catalog() {
                let mut an = [0.0; 2];
                f.d_density([x, 0.3], &z, &mut an);
                let scale = an[0].abs().max(an[1].abs()).max(1.0);
                for k in 0..2 {
                    let step = 1e-6 * (1.0 + norm2(&z).sqrt());
                    let (mut zp, mut zm) = (z.clone(), z.clone());
                    zp[k] += step;
                    zm[k] -= step;
                    let fd = (f.density([x, 0.3], &zp) - f.density([x, 0.3], &zm)) / (2.0 * step);
                    prop_assert!((fd - an[k]).abs() <= 1e-5 * scale, "{:?} {} {}", f.kind, fd, an[k]);
                }
            }
        }

        #[test]
        fn radial_monotonicity(z in zvec()) {
            prop_assume!(norm2(&z) > 0.0);
            for f in catalog().into_iter().filter(|f| f.mu == 0.0) {
                let mut d = [0.0; 2];
                f.d_density([0.5, 0.5], &z, &mut d);
                prop_assert!(d[0] * z[0] + d[1] * z[1] >= 0.0);
            }
        }

        #[test]
        fn pq_blend_growth_sandwich(z in zvec()) {
            let f = Integrand::pq_blend(2.0, 2.4, 0.5);
            let t2 = norm2(&z);
            let v = f.density([0.0, 0.0], &z);
            prop_assert!(f.nu * t2 - 1.0 <= v);
            prop_assert!(v <= f.lambda * (1.0 + t2).powf(f.q / 2.0));
        }
    }
}
