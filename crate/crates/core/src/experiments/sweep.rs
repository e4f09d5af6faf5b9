//! Classifier sweeps over `(p, q, n)` grids.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::config::SweepSpec;
use crate::integrands::{classify_case, CaseFlags, TheoremCase, Thresholds};
use crate::util::fmt17;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub q: f64,
    pub n: usize,
    pub alpha: f64,
    pub m: usize,
    pub is_minimizer: bool,
    pub verdict: TheoremCase,
}

/// `q` values `p, p + step, ...` up to `p + span`, snapped to multiples of `step`.
fn q_values(p: f64, step: f64, span: f64) -> Vec<f64> {
    let denom = (1.0 / step).round();
    let base = (p * denom).round();
    let k_max = (span / step + 1e-9).floor() as i64;
    (0..=k_max).map(|k| (base + k as f64) / denom).collect()
}

/// Rows are ordered by `n`, then the minimizer flag, then `p`, then `q`.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if !(spec.q_step > 0.0) || !(spec.q_span >= 0.0) || spec.q_span > 3.0 + 1e-12 {
        return Err(Error::invalid("sweep needs q_step > 0 and 0 <= q_span <= 3"));
    }
    if spec.p_values.iter().any(|p| !(*p > 1.0)) || spec.n_values.is_empty() || spec.minimizer.is_empty() {
        return Err(Error::invalid("sweep needs p > 1 and non-empty n and minimizer lists"));
    }
    let mut jobs = Vec::new();
    for &n in &spec.n_values {
        for &is_minimizer in &spec.minimizer {
            for &p in &spec.p_values {
                for q in q_values(p, spec.q_step, spec.q_span) {
                    jobs.push((p, q, n, is_minimizer));
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(p, q, n, is_minimizer)| {
            let flags = CaseFlags { is_minimizer, ..spec.flags };
            Ok(SweepRow {
                p,
                q,
                n,
                alpha: spec.alpha,
                m: spec.m,
                is_minimizer,
                verdict: classify_case(p, q, n, spec.m, spec.alpha, flags)?,
            })
        })
        .collect()
}

pub fn sweep_header() -> String {
    let mut cols = vec!["p", "q", "n", "alpha", "m", "is_minimizer", "cases", "conclusion"];
    cols.extend(Thresholds::NAMES);
    cols.push("required_N");
    cols.join(",")
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = sweep_header();
    s.push('\n');
    for r in rows {
        let conclusion = serde_json::to_value(r.verdict.conclusion).expect("enum serializes");
        let thr: Vec<String> = r.verdict.thresholds.values().iter().map(|v| fmt17(*v)).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt17(r.p),
            fmt17(r.q),
            r.n,
            fmt17(r.alpha),
            r.m,
            r.is_minimizer,
            r.verdict.cases_label(),
            conclusion.as_str().unwrap_or_default(),
            thr.join(","),
            r.verdict.required_n
        );
    }
    s
}
