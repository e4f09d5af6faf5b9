//! Whitney-Besicovitch ball coverings.
//!
//! Balls come from a dyadic Whitney-type decomposition of the bounding square;
//! the constants `(delta, M, eps_ov)` are then certified exactly from the ball
//! list rather than carried through the construction.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{build_grid, Domain, Point};
use crate::{Error, Result};

/// Default ratio between ball radius and distance of its center to the boundary.
pub const DEFAULT_LAMBDA: f64 = 0.25;
/// Points at distance at least `STRIP_FACTOR * r_min` from the boundary are covered.
pub const STRIP_FACTOR: f64 = 8.0;
const MAX_DELTA: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Ball {
    pub fn center(&self) -> Point {
        [self.cx, self.cy]
    }

    #[inline]
    pub fn dist_to(&self, x: Point) -> f64 {
        (x[0] - self.cx).hypot(x[1] - self.cy)
    }

    #[inline]
    fn center_dist(&self, other: &Ball) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

/// Area of the intersection of two disks.
pub fn lens_area(r1: f64, r2: f64, d: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    let (small, large) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    if d <= large - small {
        return PI * small * small;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k.max(0.0).sqrt()
}

/// Bucket index over ball dilations for point and pair queries.
#[derive(Clone, Debug)]
struct BucketIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl BucketIndex {
    fn new(balls: &[Ball], factor: f64) -> Self {
        let rmax = balls.iter().map(|b| b.r).fold(0.0, f64::max);
        let cell = (2.0 * factor * rmax).max(1e-12);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (k, b) in balls.iter().enumerate() {
            let rr = factor * b.r;
            let (i0, j0) = Self::key(cell, [b.cx - rr, b.cy - rr]);
            let (i1, j1) = Self::key(cell, [b.cx + rr, b.cy + rr]);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets.entry((i, j)).or_default().push(k);
                }
            }
        }
        BucketIndex { cell, buckets }
    }

    fn key(cell: f64, x: Point) -> (i64, i64) {
        ((x[0] / cell).floor() as i64, (x[1] / cell).floor() as i64)
    }

    fn at(&self, x: Point) -> &[usize] {
        self.buckets.get(&Self::key(self.cell, x)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Indices whose indexed dilation may meet the box around `x` of half-width `rad`.
    fn near(&self, x: Point, rad: f64) -> Vec<usize> {
        let (i0, j0) = Self::key(self.cell, [x[0] - rad, x[1] - rad]);
        let (i1, j1) = Self::key(self.cell, [x[0] + rad, x[1] + rad]);
        let mut out = Vec::new();
        for i in i0..=i1 {
            for j in j0..=j1 {
                if let Some(v) = self.buckets.get(&(i, j)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// A finite ball covering with its certified constants.
#[derive(Clone, Debug)]
pub struct Covering {
    balls: Vec<Ball>,
    delta: f64,
    multiplicity: usize,
    eps_ov: f64,
    r_min: f64,
    neighbor_index: Vec<Vec<usize>>,
    index: BucketIndex,
}

#[derive(Serialize, Deserialize)]
struct CoveringFile {
    delta: f64,
    #[serde(rename = "M")]
    multiplicity: usize,
    eps_ov: f64,
    r_min: f64,
    balls: Vec<Ball>,
}

/// Measured covering properties on a probe grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveringAudit {
    /// Fraction of probe nodes at distance at least `8 r_min` from the boundary not covered by any ball.
    pub coverage_defect: f64,
    pub max_multiplicity: usize,
    pub min_overlap_ratio: f64,
    pub c_boundary: f64,
    pub radius_ratio_bound: f64,
    pub coverage_pass: bool,
    pub multiplicity_pass: bool,
    pub overlap_pass: bool,
    pub comparability_pass: bool,
    pub neighbor_radii_pass: bool,
}

impl CoveringAudit {
    pub fn passed(&self) -> bool {
        self.coverage_pass
            && self.multiplicity_pass
            && self.overlap_pass
            && self.comparability_pass
            && self.neighbor_radii_pass
    }
}

/// Builds a covering by balls of radius `lambda * d(center)`, dropping balls below `r_min`.
pub fn build_wb_covering(domain: &Domain, r_min: f64, lambda: f64) -> Result<Covering> {
    if !(r_min > 0.0 && r_min <= 1.0) {
        return Err(Error::invalid(format!("r_min must lie in (0, 1], got {r_min}")));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    let delta = MAX_DELTA.min(1.0 / lambda - 1.0);
    if (1.0 + delta) * lambda >= 1.0 {
        return Err(Error::invalid(format!(
            "lambda = {lambda} leaves no room for a dilation: (1+delta)*lambda >= 1"
        )));
    }
    if domain.area() <= 0.0 {
        return Err(Error::invalid("degenerate domain"));
    }
    let b = domain.bbox();
    let side = (b[2] - b[0]).max(b[3] - b[1]);
    let mut balls = Vec::new();
    let mut stack = vec![([b[0] + side / 2.0, b[1] + side / 2.0], side)];
    while let Some((c, s)) = stack.pop() {
        let half_diag = s * std::f64::consts::FRAC_1_SQRT_2;
        let d = domain.signed_distance(c);
        if d <= -half_diag || lambda * (d + half_diag) < r_min {
            continue;
        }
        let r = (lambda * d).min(1.0);
        if d > 0.0 && r >= half_diag {
            if r >= r_min {
                balls.push(Ball { cx: c[0], cy: c[1], r });
            }
            continue;
        }
        let q = s / 4.0;
        for (dx, dy) in [(-q, -q), (q, -q), (-q, q), (q, q)] {
            stack.push(([c[0] + dx, c[1] + dy], s / 2.0));
        }
    }
    Ok(Covering::from_balls(balls, delta, r_min))
}

impl Covering {
    /// Certifies `M` and `eps_ov` for an explicit ball list.
    pub fn from_balls(mut balls: Vec<Ball>, delta: f64, r_min: f64) -> Covering {
        balls.sort_by(|a, b| {
            b.r.total_cmp(&a.r).then(a.cx.total_cmp(&b.cx)).then(a.cy.total_cmp(&b.cy))
        });
        let index = BucketIndex::new(&balls, 1.0 + delta);
        let mut cov = Covering {
            balls,
            delta,
            multiplicity: 0,
            eps_ov: 1.0,
            r_min,
            neighbor_index: Vec::new(),
            index,
        };
        cov.neighbor_index = (0..cov.balls.len()).map(|i| cov.neighbors_unchecked(i, 1.0 + delta / 2.0)).collect();
        cov.multiplicity = cov.exact_multiplicity();
        cov.eps_ov = cov.exact_min_overlap();
        cov
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    pub fn eps_ov(&self) -> f64 {
        self.eps_ov
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn max_radius(&self) -> f64 {
        self.balls.iter().map(|b| b.r).fold(0.0, f64::max)
    }

    /// Neighbors under the `(1 + delta/2)` dilation.
    pub fn neighbor_index(&self) -> &[Vec<usize>] {
        &self.neighbor_index
    }

    /// Indices `j != i` with `factor B_i` and `factor B_j` intersecting.
    pub fn neighbors(&self, i: usize, factor: f64) -> Result<Vec<usize>> {
        if i >= self.balls.len() {
            return Err(Error::invalid(format!("ball index {i} out of range ({} balls)", self.balls.len())));
        }
        let allowed = [1.0, 1.0 + self.delta / 2.0, 1.0 + self.delta];
        if !allowed.iter().any(|a| (a - factor).abs() <= 1e-12) {
            return Err(Error::invalid(format!("factor must be one of {allowed:?}, got {factor}")));
        }
        Ok(self.neighbors_unchecked(i, factor))
    }

    fn neighbors_unchecked(&self, i: usize, factor: f64) -> Vec<usize> {
        let bi = self.balls[i];
        let reach = factor * (bi.r + self.max_radius());
        self.index
            .near(bi.center(), reach)
            .into_iter()
            .filter(|&j| j != i && bi.center_dist(&self.balls[j]) < factor * (bi.r + self.balls[j].r))
            .collect()
    }

    /// Balls whose `(1 + delta)` dilation contains `x` (closed).
    pub fn dilated_containing(&self, x: Point) -> impl Iterator<Item = usize> + '_ {
        let f = 1.0 + self.delta;
        self.index.at(x).iter().copied().filter(move |&k| self.balls[k].dist_to(x) <= f * self.balls[k].r)
    }

    /// Whether `x` lies in some open ball `B_i`.
    pub fn covers(&self, x: Point) -> bool {
        self.index.at(x).iter().any(|&k| self.balls[k].dist_to(x) < self.balls[k].r)
    }

    /// Maximum depth of the closed dilated disks, attained at a center or at
    /// an intersection point of two dilated circles.
    fn exact_multiplicity(&self) -> usize {
        let f = 1.0 + self.delta;
        let depth = |x: Point| {
            self.index
                .at(x)
                .iter()
                .filter(|&&k| self.balls[k].dist_to(x) <= f * self.balls[k].r * (1.0 + 1e-12))
                .count()
        };
        (0..self.balls.len())
            .into_par_iter()
            .map(|i| {
                let bi = self.balls[i];
                let mut best = depth(bi.center());
                for j in self.neighbors_unchecked(i, f) {
                    if j < i {
                        continue;
                    }
                    let bj = self.balls[j];
                    for x in circle_intersections(bi.center(), f * bi.r, bj.center(), f * bj.r) {
                        best = best.max(depth(x));
                    }
                }
                best
            })
            .max()
            .unwrap_or(0)
    }

    fn exact_min_overlap(&self) -> f64 {
        (0..self.balls.len())
            .into_par_iter()
            .map(|i| {
                let bi = self.balls[i];
                self.neighbors_unchecked(i, 1.0)
                    .into_iter()
                    .map(|j| {
                        let bj = self.balls[j];
                        lens_area(bi.r, bj.r, bi.center_dist(&bj)) / (PI * bi.r.max(bj.r).powi(2))
                    })
                    .fold(1.0, f64::min)
            })
            .reduce(|| 1.0, f64::min)
    }

    pub fn to_json(&self) -> String {
        let f = CoveringFile {
            delta: self.delta,
            multiplicity: self.multiplicity,
            eps_ov: self.eps_ov,
            r_min: self.r_min,
            balls: self.balls.clone(),
        };
        serde_json::to_string_pretty(&f).expect("covering serializes")
    }

    /// Loads a covering; the stored constants are re-certified from the balls.
    pub fn from_json_str(s: &str) -> Result<Covering> {
        let f: CoveringFile = serde_json::from_str(s)?;
        if f.balls.iter().any(|b| !(b.r > 0.0) || !b.cx.is_finite() || !b.cy.is_finite()) {
            return Err(Error::invalid("covering contains a ball with non-positive radius or non-finite center"));
        }
        if !(f.delta > 0.0) {
            return Err(Error::invalid("covering delta must be positive"));
        }
        Ok(Covering::from_balls(f.balls, f.delta, f.r_min))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Covering> {
        Covering::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

fn circle_intersections(c1: Point, r1: f64, c2: Point, r2: f64) -> Vec<Point> {
    let dx = c2[0] - c1[0];
    let dy = c2[1] - c1[1];
    let d = dx.hypot(dy);
    if d == 0.0 || d > r1 + r2 || d < (r1 - r2).abs() {
        return Vec::new();
    }
    let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h = (r1 * r1 - a * a).max(0.0).sqrt();
    let (ux, uy) = (dx / d, dy / d);
    let m = [c1[0] + a * ux, c1[1] + a * uy];
    vec![[m[0] - h * uy, m[1] + h * ux], [m[0] + h * uy, m[1] - h * ux]]
}

/// Measures the covering properties on a probe grid of spacing `probe_h`.
pub fn audit_covering(covering: &Covering, domain: &Domain, probe_h: f64) -> Result<CoveringAudit> {
    if !(probe_h > 0.0 && probe_h <= covering.r_min / 4.0) {
        return Err(Error::invalid(format!(
            "probe spacing {probe_h} must be positive and at most r_min/4 = {}",
            covering.r_min / 4.0
        )));
    }
    let grid = build_grid(domain, probe_h, 0.0)?;
    let core = STRIP_FACTOR * covering.r_min;
    let (core_nodes, uncovered, max_mult) = (0..grid.n_nodes())
        .into_par_iter()
        .map(|k| {
            let x = grid.point(k);
            let d = grid.signed_distance(k);
            let in_core = d >= core;
            let unc = in_core && !covering.covers(x);
            (in_core as usize, unc as usize, covering.dilated_containing(x).count())
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2.max(b.2)));
    let coverage_defect = if core_nodes == 0 { 0.0 } else { uncovered as f64 / core_nodes as f64 };

    let mut c_boundary: f64 = 0.0;
    let mut contained = true;
    for b in covering.balls() {
        let d = domain.signed_distance(b.center());
        let gap = d - b.r;
        if d < (1.0 + covering.delta) * b.r {
            contained = false;
        }
        let c = if gap > 0.0 { (2.0 * b.r / gap).max(gap / (2.0 * b.r)) } else { f64::INFINITY };
        c_boundary = c_boundary.max(c);
    }

    let mut ratio: f64 = 1.0;
    let mut symmetric = true;
    for (i, nb) in covering.neighbor_index().iter().enumerate() {
        for &j in nb {
            ratio = ratio.max(covering.balls[i].r / covering.balls[j].r);
            if !covering.neighbor_index()[j].contains(&i) {
                symmetric = false;
            }
        }
    }

    let min_overlap_ratio = covering.exact_min_overlap();
    Ok(CoveringAudit {
        coverage_defect,
        max_multiplicity: max_mult,
        min_overlap_ratio,
        c_boundary,
        radius_ratio_bound: ratio,
        coverage_pass: coverage_defect < 1e-3,
        multiplicity_pass: max_mult <= covering.multiplicity,
        overlap_pass: min_overlap_ratio >= covering.eps_ov * (1.0 - 1e-12) && min_overlap_ratio > 0.0,
        comparability_pass: contained && c_boundary.is_finite(),
        neighbor_radii_pass: symmetric && ratio.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lens_area_limits() {
        assert_eq!(lens_area(1.0, 1.0, 2.0), 0.0);
        assert!((lens_area(1.0, 2.0, 0.5) - PI).abs() < 1e-15);
        assert!((lens_area(1.0, 1.0, 0.0) - PI).abs() < 1e-15);
        // Two unit disks at distance 1: 2pi/3 - sqrt(3)/2.
        let exact = 2.0 * PI / 3.0 - 3f64.sqrt() / 2.0;
        assert!((lens_area(1.0, 1.0, 1.0) - exact).abs() < 1e-14);
    }

    #[test]
    fn lens_area_matches_sampling() {
        let (r1, r2, d) = (0.7, 0.4, 0.8);
        let n = 2000;
        let h = 2.0 * 0.7 / n as f64;
        let mut count = 0usize;
        for i in 0..n {
            for j in 0..n {
                let x = -0.7 + (i as f64 + 0.5) * h;
                let y = -0.7 + (j as f64 + 0.5) * h;
                if x * x + y * y < r1 * r1 && (x - d).powi(2) + y * y < r2 * r2 {
                    count += 1;
                }
            }
        }
        let sampled = count as f64 * h * h;
        assert!((lens_area(r1, r2, d) - sampled).abs() < 1e-3);
    }

    #[test]
    fn large_lambda_rejected() {
        assert!(build_wb_covering(&Domain::unit_square(), 0.1, 0.8).is_err());
        assert!(build_wb_covering(&Domain::unit_square(), 0.1, 0.9).is_err());
        assert!(build_wb_covering(&Domain::unit_square(), 0.0, 0.25).is_err());
    }

    #[test]
    fn unit_square_covering_certifies() {
        let d = Domain::unit_square();
        let cov = build_wb_covering(&d, 0.2 * 0.125, DEFAULT_LAMBDA).unwrap();
        assert_eq!(cov.delta(), 0.25);
        for b in cov.balls() {
            assert!((b.r - 0.25 * d.signed_distance(b.center())).abs() < 1e-15);
            assert!(b.r >= cov.r_min() && b.r <= 1.0);
        }
        let audit = audit_covering(&cov, &d, cov.r_min() / 4.0).unwrap();
        assert!(audit.passed(), "{audit:?}");
    }

    #[test]
    fn coarse_r_min_square() {
        let d = Domain::unit_square();
        // The whole square lies within 8 r_min of the boundary, so coverage is vacuous.
        for r_min in [0.1, 0.2] {
            let cov = build_wb_covering(&d, r_min, DEFAULT_LAMBDA).unwrap();
            let audit = audit_covering(&cov, &d, r_min / 5.0).unwrap();
            assert!(audit.coverage_defect < 1e-3);
            assert!(audit.passed());
        }
        // Radii never exceed 0.125 here, so r_min = 0.2 leaves no ball.
        assert!(build_wb_covering(&d, 0.2, DEFAULT_LAMBDA).unwrap().is_empty());
    }

    #[test]
    fn ordering_is_radius_descending() {
        let cov = build_wb_covering(&Domain::l_shape(), 0.05, DEFAULT_LAMBDA).unwrap();
        for w in cov.balls().windows(2) {
            assert!(w[0].r > w[1].r || (w[0].r == w[1].r && (w[0].cx, w[0].cy) <= (w[1].cx, w[1].cy)));
        }
    }

    #[test]
    fn duplicated_ball() {
        let b = Ball { cx: 0.5, cy: 0.5, r: 0.3 };
        let d = Domain::unit_square();
        let one = Covering::from_balls(vec![b], 0.25, 0.1);
        let two = Covering::from_balls(vec![b, b], 0.25, 0.1);
        assert_eq!(one.multiplicity(), 1);
        assert_eq!(two.multiplicity(), 2);
        let a1 = audit_covering(&one, &d, 0.01).unwrap();
        let a2 = audit_covering(&two, &d, 0.01).unwrap();
        assert_eq!(a2.min_overlap_ratio, 1.0);
        assert_eq!(a2.max_multiplicity, a1.max_multiplicity + 1);
        assert_eq!(two.neighbors(0, 1.0).unwrap(), vec![1]);
    }

    #[test]
    fn single_ball_in_disk() {
        let disk = Domain::regular_polygon([0.0, 0.0], 1.0, 64).unwrap();
        let cov = Covering::from_balls(vec![Ball { cx: 0.0, cy: 0.0, r: 0.5 }], 0.25, 0.01);
        assert_eq!(cov.multiplicity(), 1);
        let audit = audit_covering(&cov, &disk, 0.0025).unwrap();
        assert_eq!(audit.max_multiplicity, 1);
        // The core region is {d >= 0.08}, roughly the disk of radius 0.92; the
        // ball covers radius 0.5 of it.
        let expected = 1.0 - 0.25 / (0.92f64 * 0.92);
        assert!((audit.coverage_defect - expected).abs() < 0.02, "{}", audit.coverage_defect);
        assert!(!audit.coverage_pass);
    }

    #[test]
    fn neighbors_symmetric_and_checked() {
        let cov = build_wb_covering(&Domain::l_shape(), 0.05, DEFAULT_LAMBDA).unwrap();
        let f = 1.0 + cov.delta();
        for i in 0..cov.len() {
            for j in cov.neighbors(i, f).unwrap() {
                assert!(cov.neighbors(j, f).unwrap().contains(&i));
            }
        }
        assert!(cov.neighbors(cov.len(), 1.0).is_err());
        assert!(cov.neighbors(0, 1.5).is_err());
        let far = Covering::from_balls(
            vec![Ball { cx: 0.0, cy: 0.0, r: 0.1 }, Ball { cx: 5.0, cy: 0.0, r: 0.1 }],
            0.25,
            0.05,
        );
        assert!(far.neighbors(0, 1.25).unwrap().is_empty());
    }

    #[test]
    fn json_round_trip() {
        let cov = build_wb_covering(&Domain::unit_square(), 0.05, DEFAULT_LAMBDA).unwrap();
        let back = Covering::from_json_str(&cov.to_json()).unwrap();
        assert_eq!(back.balls(), cov.balls());
        assert_eq!(back.multiplicity(), cov.multiplicity());
        assert_eq!(back.eps_ov(), cov.eps_ov());
    }

    #[test]
    fn multiplicity_brute_force() {
        let cov = build_wb_covering(&Domain::l_shape(), 0.05, DEFAULT_LAMBDA).unwrap();
        let f = 1.0 + cov.delta();
        let n = 600;
        let mut best = 0;
        for i in 0..=n {
            for j in 0..=n {
                let x = [2.0 * i as f64 / n as f64, 2.0 * j as f64 / n as f64];
                let c = cov.balls().iter().filter(|b| b.dist_to(x) <= f * b.r).count();
                best = best.max(c);
            }
        }
        assert!(best <= cov.multiplicity());
        assert!(cov.multiplicity() <= best + 1);
    }
}
