//! Sampled checks of the structural hypotheses on an integrand.
//!
//! Every constant is a worst case over seeded random draws, so a pass is a
//! probabilistic certificate and never a proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{norm2, Integrand, IntegrandKind};
use crate::geometry::Point;
use crate::{Error, Result};

/// Relative slack allowed against declared constants.
pub const AUDIT_SLACK: f64 = 0.05;

const CHUNK: usize = 256;
const X_CANDIDATES: usize = 24;

/// Sample counts, seed and sampling ranges for [`hypothesis_audit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Points `x` (and test balls for the minimizing-point condition).
    pub n_points: usize,
    /// Gradient pairs `(z, w)` per batch.
    pub n_pairs: usize,
    /// Scale factors `s` per pair for the doubling ratio.
    pub n_scales: usize,
    pub seed: u64,
    /// `[xmin, ymin, xmax, ymax]` of the sampled points.
    pub region: [f64; 4],
    /// Gradients have norms log-uniform in `[1e-3, z_max]`.
    pub z_max: f64,
    /// Number of components of `u`.
    pub m: usize,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan { n_points: 64, n_pairs: 4096, n_scales: 4, seed: 0, region: [0.0, 0.0, 1.0, 1.0], z_max: 100.0, m: 1 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisEntry {
    pub name: String,
    pub measured_constant: f64,
    pub declared: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub plan: SamplePlan,
    pub entries: Vec<HypothesisEntry>,
}

impl HypothesisReport {
    pub fn entry(&self, name: &str) -> Option<&HypothesisEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn passed(&self, name: &str) -> bool {
        self.entry(name).is_some_and(|e| e.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Copy, Debug)]
struct Extremes {
    h1: f64,
    h2: f64,
    h3: f64,
    h4: f64,
    h5: f64,
    doubling: f64,
    diff: f64,
    convexity: f64,
    a_min: f64,
}

impl Extremes {
    fn new() -> Self {
        Extremes {
            h1: f64::INFINITY,
            h2: 0.0,
            h3: 0.0,
            h4: 0.0,
            h5: 0.0,
            doubling: 0.0,
            diff: 0.0,
            convexity: f64::NEG_INFINITY,
            a_min: f64::INFINITY,
        }
    }

    fn merge(self, o: Extremes) -> Extremes {
        Extremes {
            h1: self.h1.min(o.h1),
            h2: self.h2.max(o.h2),
            h3: self.h3.max(o.h3),
            h4: self.h4.max(o.h4),
            h5: self.h5.max(o.h5),
            doubling: self.doubling.max(o.doubling),
            diff: self.diff.max(o.diff),
            convexity: self.convexity.max(o.convexity),
            a_min: self.a_min.min(o.a_min),
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn point(rng: &mut ChaCha8Rng, region: [f64; 4]) -> Point {
    [rng.gen_range(region[0]..=region[2]), rng.gen_range(region[1]..=region[3])]
}

fn gradient(rng: &mut ChaCha8Rng, dim: usize, z_max: f64) -> Vec<f64> {
    let lo = 1e-3f64.ln();
    let r = (lo + rng.gen::<f64>() * (z_max.ln() - lo)).exp();
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm2(&v).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|c| c * r / n).collect();
        }
    }
}

/// Measures the constants of (H1)-(H5), doubling, the minimizing-point
/// condition, the difference bound and midpoint convexity on seeded samples.
///
/// Batches of draws use independent ChaCha streams of one seed, so results do
/// not depend on the thread count.
pub fn hypothesis_audit(f: &Integrand, plan: &SamplePlan) -> Result<HypothesisReport> {
    if plan.n_points == 0 || plan.n_pairs == 0 || plan.n_scales == 0 || plan.m == 0 {
        return Err(Error::invalid("sample plan has an empty sample count"));
    }
    let r = plan.region;
    if !(r[2] >= r[0] && r[3] >= r[1] && plan.z_max > 1e-3) {
        return Err(Error::invalid("sample plan has an empty region or z range"));
    }
    f.validate()?;
    let dim = 2 * plan.m;
    let (p, q, mu) = (f.p, f.q, f.mu);
    let n_chunks = plan.n_pairs.div_ceil(CHUNK);
    let ext = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(plan.seed, c as u64);
            let mut e = Extremes::new();
            let mut dz = vec![0.0; dim];
            let mut dw = vec![0.0; dim];
            let count = CHUNK.min(plan.n_pairs - c * CHUNK);
            for k in 0..count {
                let x = point(&mut rng, r);
                let y = point(&mut rng, r);
                let z = gradient(&mut rng, dim, plan.z_max);
                let w = if k % 2 == 0 {
                    gradient(&mut rng, dim, plan.z_max)
                } else {
                    let step = norm2(&z).sqrt() * 10f64.powf(-2.0 * rng.gen::<f64>());
                    let d = gradient(&mut rng, dim, 1.0);
                    let dn = norm2(&d).sqrt();
                    z.iter().zip(&d).map(|(a, b)| a + step * b / dn).collect()
                };
                let (z2, w2) = (norm2(&z), norm2(&w));
                let fz = f.density(x, &z);
                let fw = f.density(x, &w);
                f.d_density(x, &z, &mut dz);
                f.d_density(x, &w, &mut dw);
                let diff2: f64 = z.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
                if diff2 > 0.0 {
                    let lin: f64 = dw.iter().zip(z.iter().zip(&w)).map(|(g, (a, b))| g * (a - b)).sum();
                    let quot = (fz - fw - lin) / diff2;
                    e.h1 = e.h1.min(quot / (mu * mu + z2 + w2).powf(0.5 * (p - 2.0)));
                    e.h3 = e.h3.max(quot / (1.0 + z2 + w2).powf(0.5 * (q - 2.0)));
                    let dual = (1.0 + norm2(&dz) + norm2(&dw)).powf((q - 2.0) / (2.0 * (q - 1.0)));
                    e.h4 = e.h4.max(quot / dual);
                    let d = diff2.sqrt() * (1.0 + z2.sqrt() + w2.sqrt()).powf(q - 1.0);
                    e.diff = e.diff.max((fz - fw).abs() / d);
                }
                e.h2 = e.h2.max(fz.abs() / (1.0 + z2).powf(0.5 * q));
                let dxy = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                if dxy > 0.0 {
                    let fy = f.density(y, &z);
                    e.h5 = e.h5.max((fz - fy).abs() / (dxy.powf(f.alpha) * (1.0 + z2).powf(0.5 * q)));
                }
                for _ in 0..plan.n_scales {
                    let s = rng.gen_range(1.0..f.s0);
                    let sz: Vec<f64> = z.iter().map(|v| s * v).collect();
                    e.doubling = e.doubling.max(f.density(x, &sz) / (1.0 + fz));
                }
                let mid: Vec<f64> = z.iter().zip(&w).map(|(a, b)| 0.5 * (a + b)).collect();
                let gap = f.density(x, &mid) - 0.5 * (fz + fw);
                e.convexity = e.convexity.max(gap / (1.0 + fz.abs() + fw.abs()));
                if f.kind == IntegrandKind::DoublePhase {
                    e.a_min = e.a_min.min(f.a.eval(x));
                }
            }
            e
        })
        .reduce(Extremes::new, Extremes::merge);
    let x_violation = x_condition(f, plan);

    let slack_hi = 1.0 + AUDIT_SLACK;
    let mut entries = vec![
        entry("H1_ellipticity", ext.h1, f.nu, ext.h1 >= f.nu * (1.0 - AUDIT_SLACK)),
        entry("H2_natural", ext.h2, f.lambda, ext.h2 <= f.lambda * slack_hi),
        entry("H3_controlled", ext.h3, f.lambda, ext.h3 <= f.lambda * slack_hi),
        entry("H4_controlled_duality", ext.h4, f.lambda, ext.h4 <= f.lambda * slack_hi),
        entry("H5_holder_x", ext.h5, f.lambda, ext.h5 <= f.lambda * slack_hi),
        entry("doubling", ext.doubling, f.s0.powf(q), ext.doubling <= f.s0.powf(q) * slack_hi),
        entry("x_condition", x_violation, 0.0, x_violation <= 1e-12),
        entry("diff_bound", ext.diff, 2f64.powf(q + 1.0) * f.lambda, ext.diff <= 2f64.powf(q + 1.0) * f.lambda * slack_hi),
        entry("convexity_midpoint", ext.convexity, 0.0, ext.convexity <= 1e-12),
    ];
    if f.kind == IntegrandKind::DoublePhase {
        entries.push(entry("a_nonnegative", ext.a_min, 0.0, ext.a_min >= 0.0));
    }
    Ok(HypothesisReport { plan: plan.clone(), entries })
}

fn entry(name: &str, measured: f64, declared: f64, pass: bool) -> HypothesisEntry {
    HypothesisEntry { name: name.to_string(), measured_constant: measured, declared, pass: pass && measured.is_finite() }
}

/// Largest relative excess `(F(y_hat, z) - F(y, z)) / (1 + F(y, z))` over test
/// balls, where `y_hat` is the sampled candidate minimizing the summed energy
/// over the test gradients.
fn x_condition(f: &Integrand, plan: &SamplePlan) -> f64 {
    let r = plan.region;
    let dim = 2 * plan.m;
    (0..plan.n_points)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(plan.seed ^ 0x9e37_79b9_7f4a_7c15, b as u64);
            let x = point(&mut rng, r);
            let eps = f.eps0 * rng.gen_range(0.05..1.0);
            let mut ys = vec![x];
            while ys.len() < X_CANDIDATES {
                let y = [x[0] + rng.gen_range(-eps..eps), x[1] + rng.gen_range(-eps..eps)];
                let inside = y[0] >= r[0] && y[0] <= r[2] && y[1] >= r[1] && y[1] <= r[3];
                if inside && (y[0] - x[0]).hypot(y[1] - x[1]) <= eps {
                    ys.push(y);
                }
            }
            let zs: Vec<Vec<f64>> = (0..8).map(|_| gradient(&mut rng, dim, plan.z_max)).collect();
            let total = |y: Point| zs.iter().map(|z| f.density(y, z)).sum::<f64>();
            let y_hat = ys.iter().copied().min_by(|a, b| total(*a).total_cmp(&total(*b))).expect("candidates");
            let mut worst: f64 = 0.0;
            for y in &ys {
                for z in &zs {
                    let fy = f.density(*y, z);
                    worst = worst.max((f.density(y_hat, z) - fy) / (1.0 + fy));
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}
