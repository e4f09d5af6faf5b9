//! Convergence rates of plain mollification.

use serde::Serialize;

use super::kernel::{mollify, Mollifier};
use crate::geometry::Field;
use crate::util::loglog_slope;
use crate::{Error, Result};

/// Allowed shortfall of a fitted slope below its prediction.
pub const SLOPE_SLACK: f64 = 0.15;

#[derive(Clone, Debug, Serialize)]
pub struct RateItem {
    pub item: usize,
    pub description: String,
    pub values: Vec<f64>,
    pub slope: Option<f64>,
    pub predicted: f64,
    /// Slope more than [`SLOPE_SLACK`] below the prediction.
    pub flagged: bool,
    /// All values vanish to rounding; no slope is fitted.
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub eps: Vec<f64>,
    pub p: f64,
    pub q: f64,
    pub items: Vec<RateItem>,
}

impl RateReport {
    pub fn item(&self, k: usize) -> &RateItem {
        &self.items[k - 1]
    }

    pub fn any_flagged(&self) -> bool {
        self.items.iter().any(|i| i.flagged)
    }
}

/// Measures the six mollification estimates on the part of the domain at
/// distance at least `max(eps) + h` from the edge of the grid box:
///
/// 1. `||u_eps||_p / ||u||_p` (bounded)
/// 2. `||u_eps||_inf / ||u||_inf` (bounded)
/// 3. `||u_eps||_inf` (slope at least `-n/p`)
/// 4. `||u_eps - u||_p` (slope 1)
/// 5. `||u_eps - u||_q` (slope `1 + n(1/q - 1/p)`)
/// 6. `||u_eps - u||_q` (slope `p/q`)
pub fn rate_table(u: &Field, p: f64, q: f64, eps_list: &[f64], kind: Mollifier) -> Result<RateReport> {
    if eps_list.len() < 3 {
        return Err(Error::invalid("rate table needs at least three eps values"));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("eps values must be strictly decreasing"));
    }
    if !(p > 1.0 && q >= p) {
        return Err(Error::invalid(format!("need 1 < p <= q, got p = {p}, q = {q}")));
    }
    let grid = u.grid();
    let h = grid.h();
    let n = 2.0;
    let b = grid.bbox();
    let pad = eps_list[0] + h;
    let inner = move |x: [f64; 2]| {
        x[0] >= b[0] + pad && x[0] <= b[2] - pad && x[1] >= b[1] + pad && x[1] <= b[3] - pad
    };
    let u_p = u.lp_norm_where(p, inner);
    let u_inf = u.lp_norm_where(f64::INFINITY, |_| true);
    let mut vals = vec![Vec::new(); 6];
    for &eps in eps_list {
        let ue = mollify(u, eps, kind)?;
        let diff = ue.sub(u)?;
        vals[0].push(ratio(ue.lp_norm_where(p, inner), u.lp_norm(p)));
        vals[1].push(ratio(ue.lp_norm_where(f64::INFINITY, inner), u_inf));
        vals[2].push(ue.lp_norm_where(f64::INFINITY, inner));
        vals[3].push(diff.lp_norm_where(p, inner));
        let dq = diff.lp_norm_where(q, inner);
        vals[4].push(dq);
        vals[5].push(dq);
    }
    let desc = [
        "||u_eps||_p / ||u||_p",
        "||u_eps||_inf / ||u||_inf",
        "||u_eps||_inf",
        "||u_eps - u||_p",
        "||u_eps - u||_q",
        "||u_eps - u||_q",
    ];
    let predicted = [0.0, 0.0, -n / p, 1.0, 1.0 + n * (1.0 / q - 1.0 / p), p / q];
    let scale = u_p.max(u_inf).max(1.0);
    let items = (0..6)
        .map(|k| {
            let exact = vals[k].iter().all(|v| v.abs() <= 1e-12 * scale);
            let slope = if exact { None } else { loglog_slope(eps_list, &vals[k]) };
            let flagged = match slope {
                Some(s) => s < predicted[k] - SLOPE_SLACK,
                None => false,
            };
            RateItem {
                item: k + 1,
                description: desc[k].to_string(),
                values: vals[k].clone(),
                slope,
                predicted: predicted[k],
                flagged,
                exact,
            }
        })
        .collect();
    Ok(RateReport { eps: eps_list.to_vec(), p, q, items })
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}
