//! Which cases of the no-gap theorem apply to a given exponent range and
//! structure.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rounding guard for the strict threshold comparisons.
const GUARD: f64 = 1e-9;

/// Growth condition satisfied by `F`. The levels are nested: controlled
/// duality implies controlled implies natural.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    #[default]
    Natural,
    Controlled,
    ControlledDuality,
}

/// Structural flags of the classifier. Autonomous integrands satisfy the
/// Hölder and minimizing-point conditions automatically.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseFlags {
    pub autonomous: bool,
    pub growth: Growth,
    pub bounded_u: bool,
    pub doubling: bool,
    pub holder_x: bool,
    pub x_condition: bool,
    pub is_minimizer: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    RelaxationEquality,
    MinEquality,
    None,
}

/// The exponent thresholds of the eight cases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    /// `(n + alpha) p / n`
    pub nonautonomous: f64,
    /// `p + 1`
    pub p_plus_1: f64,
    /// `n p / (n - 1)`
    pub np_over_n_minus_1: f64,
    /// `p + max(1, p / n)`
    pub p_plus_max_1: f64,
    /// `p + 2`
    pub p_plus_2: f64,
    /// `p (1 + 2 / (n - 1))`
    pub p_controlled: f64,
    /// `n p / (n - p)`, infinite for `p >= n`
    pub sobolev: f64,
    /// `p + max(2, 2p / n)`
    pub p_plus_max_2: f64,
}

impl Thresholds {
    pub fn new(p: f64, n: usize, alpha: f64) -> Thresholds {
        let nf = n as f64;
        Thresholds {
            nonautonomous: (nf + alpha) * p / nf,
            p_plus_1: p + 1.0,
            np_over_n_minus_1: nf * p / (nf - 1.0),
            p_plus_max_1: (p + 1.0).max((nf + 1.0) * p / nf),
            p_plus_2: p + 2.0,
            p_controlled: p * (1.0 + 2.0 / (nf - 1.0)),
            sobolev: if p >= nf { f64::INFINITY } else { nf * p / (nf - p) },
            p_plus_max_2: (p + 2.0).max((nf + 2.0) * p / nf),
        }
    }

    /// Column names of [`Thresholds::values`], in order.
    pub const NAMES: [&'static str; 8] = [
        "thr_nonautonomous",
        "thr_p_plus_1",
        "thr_np_over_n_minus_1",
        "thr_p_plus_max_1_p_over_n",
        "thr_p_plus_2",
        "thr_p_times_1_plus_2_over_n_minus_1",
        "thr_np_over_n_minus_p",
        "thr_p_plus_max_2_2p_over_n",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.nonautonomous,
            self.p_plus_1,
            self.np_over_n_minus_1,
            self.p_plus_max_1,
            self.p_plus_2,
            self.p_controlled,
            self.sobolev,
            self.p_plus_max_2,
        ]
    }
}

/// Classifier verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremCase {
    pub applicable_cases: Vec<u8>,
    pub conclusion: Conclusion,
    /// `(name, value)` of every constraint on `N` imposed by an applicable case.
    pub active_constraints: Vec<(String, f64)>,
    #[serde(rename = "required_N")]
    pub required_n: u32,
    pub thresholds: Thresholds,
}

impl TheoremCase {
    /// Applicable cases joined by `;`.
    pub fn cases_label(&self) -> String {
        self.applicable_cases.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
    }
}

fn below(q: f64, thr: f64) -> bool {
    thr == f64::INFINITY || q < thr - GUARD * thr.abs().max(1.0)
}

/// Smallest integer `N` with `N >= x`.
fn ceil_guarded(x: f64) -> u32 {
    (x - GUARD * x.abs().max(1.0)).ceil().max(1.0) as u32
}

/// Smallest integer `N` with `N > x`.
fn above_guarded(x: f64) -> u32 {
    ((x + GUARD * x.abs().max(1.0)).floor() + 1.0).max(1.0) as u32
}

/// Evaluates the hypothesis list of each case literally and picks the
/// smallest exponent `N` of the smoothing radius compatible with every
/// applicable case. The scalar cases require `m = 1`.
pub fn classify_case(p: f64, q: f64, n: usize, m: usize, alpha: f64, flags: CaseFlags) -> Result<TheoremCase> {
    if !(p > 1.0 && q >= p && q.is_finite()) {
        return Err(Error::invalid(format!("need 1 < p <= q, got p = {p}, q = {q}")));
    }
    if n < 2 || m < 1 {
        return Err(Error::invalid(format!("need n >= 2 and m >= 1, got n = {n}, m = {m}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let t = Thresholds::new(p, n, alpha);
    let nf = n as f64;
    let auto = flags.autonomous;
    let natural = flags.growth >= Growth::Natural;
    let controlled = flags.growth >= Growth::Controlled;
    let duality = flags.growth >= Growth::ControlledDuality;
    let scalar = m == 1;
    let p_ge_2 = p >= 2.0 - GUARD;
    let p_gt_2 = p > 2.0 + GUARD;
    let min = flags.is_minimizer;

    let holds = [
        below(q, t.nonautonomous) && natural && (auto || (flags.holder_x && flags.x_condition)),
        below(q, t.p_plus_1.min(t.np_over_n_minus_1)) && auto && natural,
        below(q, t.p_plus_max_1) && flags.bounded_u && auto && natural,
        below(q, t.p_plus_max_1) && scalar && auto && natural,
        min && p_ge_2 && below(q, t.p_plus_2.min(t.p_controlled)) && auto && controlled && flags.doubling,
        min && p_ge_2 && below(q, t.sobolev) && auto && duality,
        min && p_gt_2 && below(q, t.p_plus_max_2) && flags.bounded_u && auto && controlled,
        min && p_ge_2 && below(q, t.p_plus_max_2) && scalar && auto && controlled && flags.doubling,
    ];
    let applicable_cases: Vec<u8> = (1..=8u8).filter(|c| holds[*c as usize - 1]).collect();
    let conclusion = if applicable_cases.iter().any(|c| *c <= 4) {
        Conclusion::RelaxationEquality
    } else if !applicable_cases.is_empty() {
        Conclusion::MinEquality
    } else {
        Conclusion::None
    };

    let mut active_constraints = Vec::new();
    let mut required = 1u32;
    if holds[0] {
        let kappa = 1.0 - nf * (1.0 / p - 1.0 / q);
        let cross = nf + 1.0 - nf * q / p;
        active_constraints.push(("A2_decay".to_string(), 1.0 / kappa));
        active_constraints.push(("cross_term".to_string(), 2.0 / cross));
        required = required.max(ceil_guarded(1.0 / kappa)).max(ceil_guarded(2.0 / cross));
    }
    if holds[1] {
        let theta = 1.0 + (nf - 1.0) * (p - q) / p;
        let x = (p + 1.0) / ((p + 1.0 - q) * theta);
        active_constraints.push(("shell_interpolation".to_string(), x));
        required = required.max(above_guarded(x));
    }
    Ok(TheoremCase { applicable_cases, conclusion, active_constraints, required_n: required, thresholds: t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nonauto() -> CaseFlags {
        CaseFlags { holder_x: true, x_condition: true, ..CaseFlags::default() }
    }

    fn everything(is_minimizer: bool) -> CaseFlags {
        CaseFlags {
            autonomous: true,
            growth: Growth::ControlledDuality,
            bounded_u: true,
            doubling: true,
            holder_x: true,
            x_condition: true,
            is_minimizer,
        }
    }

    #[test]
    fn nonautonomous_case() {
        let c = classify_case(2.0, 2.4, 2, 1, 1.0, nonauto()).unwrap();
        assert_eq!(c.applicable_cases, vec![1]);
        assert_eq!(c.conclusion, Conclusion::RelaxationEquality);
        assert_eq!(c.thresholds.nonautonomous, 3.0);
        // 1/(1 - 2(1/2 - 1/2.4)) = 1.2 and 2/(3 - 2.4) = 3.33
        assert_eq!(c.required_n, 4);
    }

    #[test]
    fn equal_exponents_autonomous() {
        let flags = CaseFlags { autonomous: true, ..CaseFlags::default() };
        for p in [1.5, 2.0, 3.0, 7.0] {
            let c = classify_case(p, p, 3, 2, 1.0, flags).unwrap();
            assert!(c.applicable_cases.contains(&2), "{p}");
        }
    }

    #[test]
    fn empty_case_set() {
        let flags = CaseFlags { autonomous: true, bounded_u: true, ..CaseFlags::default() };
        let c = classify_case(2.0, 4.0, 3, 1, 1.0, flags).unwrap();
        assert!(c.applicable_cases.is_empty());
        assert_eq!(c.conclusion, Conclusion::None);
        assert_eq!(c.required_n, 1);
    }

    #[test]
    fn sweep_rows() {
        let c = classify_case(2.0, 2.0, 2, 1, 1.0, everything(false)).unwrap();
        assert_eq!(c.applicable_cases, vec![1, 2, 3, 4]);
        let c = classify_case(2.0, 2.0, 2, 1, 1.0, everything(true)).unwrap();
        assert_eq!(c.applicable_cases, vec![1, 2, 3, 4, 5, 6, 8]);
        let c = classify_case(2.0, 5.0, 2, 1, 1.0, everything(true)).unwrap();
        assert_eq!(c.applicable_cases, vec![6]);
        assert_eq!(c.conclusion, Conclusion::MinEquality);
        assert!(c.thresholds.sobolev.is_infinite());
        let t = Thresholds::new(3.0, 3, 1.0);
        assert_eq!((t.nonautonomous, t.np_over_n_minus_1, t.p_plus_1), (4.0, 4.5, 4.0));
        let c = classify_case(3.0, 4.0, 3, 1, 1.0, everything(false)).unwrap();
        assert!(!c.applicable_cases.contains(&2) && !c.applicable_cases.contains(&1));
    }

    #[test]
    fn boundary_values_are_excluded() {
        let c = classify_case(2.0, 3.0, 2, 1, 1.0, nonauto()).unwrap();
        assert!(c.applicable_cases.is_empty());
        let c = classify_case(2.0, 3.0 - 1e-12, 2, 1, 1.0, nonauto()).unwrap();
        assert!(c.applicable_cases.is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(classify_case(1.0, 2.0, 2, 1, 1.0, nonauto()).is_err());
        assert!(classify_case(2.0, 1.5, 2, 1, 1.0, nonauto()).is_err());
        assert!(classify_case(2.0, 2.5, 1, 1, 1.0, nonauto()).is_err());
    }

    proptest! {
        #[test]
        fn enlarging_q_never_adds_cases(p in 1.05f64..5.0, dq in 0.0f64..3.0, extra in 0.0f64..2.0,
                                        n in 2usize..5, m in 1usize..3, bits in 0u8..128, g in 0u8..3) {
            let flags = CaseFlags {
                autonomous: bits & 1 != 0,
                bounded_u: bits & 2 != 0,
                doubling: bits & 4 != 0,
                holder_x: bits & 8 != 0,
                x_condition: bits & 16 != 0,
                is_minimizer: bits & 32 != 0,
                growth: [Growth::Natural, Growth::Controlled, Growth::ControlledDuality][g as usize],
            };
            let a = classify_case(p, p + dq, n, m, 0.7, flags).unwrap();
            let b = classify_case(p, p + dq + extra, n, m, 0.7, flags).unwrap();
            prop_assert!(b.applicable_cases.iter().all(|c| a.applicable_cases.contains(c)));
        }
    }
}
