//! Star-shaped rescaling of `u - g` toward the star centers.

use rayon::prelude::*;
use serde::Serialize;

use super::kernel::{mollify, Mollifier};
use crate::geometry::{polygon, Domain, Field};
use crate::util::smoothstep;
use crate::{Error, Result};

/// Output of [`star_scale`].
#[derive(Clone, Debug)]
pub struct StarScaled {
    pub field: Field,
    pub s: f64,
    pub t: f64,
    /// Width of the layer along the boundary where the result equals `g`.
    pub boundary_layer: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StarReport {
    pub s: f64,
    pub t: f64,
    pub boundary_layer: f64,
}

impl StarScaled {
    pub fn report(&self) -> StarReport {
        StarReport { s: self.s, t: self.t, boundary_layer: self.boundary_layer }
    }
}

/// Default blend `t(s) = 1 - (s - 1)`, clipped to `[0.5, 1)`.
pub fn default_blend(s: f64) -> f64 {
    (2.0 - s).clamp(0.5, 1.0 - 1e-12)
}

/// Glues `u_i = g + (t / s) (u - g)(c_i + s (x - c_i))` over the pieces of the
/// domain's star decomposition.
///
/// `u - g` is taken as zero outside the domain, so each `u_i` equals `g` on a
/// layer along the boundary. The pieces are blended by weights that are one
/// on their own piece and fade out over a few grid cells, less near the
/// boundary. With `eps`, `u - g` is mollified at that scale first.
pub fn star_scale(
    u: &Field,
    g: &Field,
    domain: &Domain,
    s: f64,
    t: Option<f64>,
    eps: Option<f64>,
) -> Result<StarScaled> {
    u.check_compatible(g)?;
    if domain.star_pieces().is_empty() {
        return Err(Error::invalid("star rescaling needs a star decomposition of the domain"));
    }
    let checks = domain.validate_star_decomposition()?;
    if !(s > 1.0 && s - 1.0 <= 0.2) {
        return Err(Error::invalid(format!("scale must satisfy 1 < s <= 1.2, got {s}")));
    }
    let t = t.unwrap_or_else(|| default_blend(s));
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::invalid(format!("blend t must lie in (0, 1), got {t}")));
    }
    let grid = u.grid().clone();
    let m = u.components();
    let min_margin = checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let mut w = u.sub(g)?;
    w.values_mut().par_chunks_mut(m).enumerate().for_each(|(k, o)| {
        if grid.signed_distance(k) <= 0.0 {
            o.iter_mut().for_each(|v| *v = 0.0);
        }
    });
    let mut layer = (1.0 - 1.0 / s) * min_margin;
    if let Some(e) = eps {
        if checks.iter().any(|c| e > c.margin * s) {
            return Err(Error::invalid(format!("eps = {e} exceeds a piece margin times s")));
        }
        w = mollify(&w, e, Mollifier::Polynomial)?;
        layer -= e;
    }
    let fade = 4.0 * grid.h();
    let pieces = domain.star_pieces();
    let mut out = g.clone();
    out.values_mut().par_chunks_mut(m).enumerate().for_each(|(k, o)| {
        let d = grid.signed_distance(k);
        if d <= 0.0 {
            return;
        }
        let x = grid.point(k);
        let width = fade.min(d);
        let weights: Vec<f64> = pieces
            .iter()
            .map(|p| {
                let di = polygon::loop_signed_distance(x, &p.vertices);
                if di >= 0.0 {
                    1.0
                } else {
                    smoothstep(1.0 + di / width)
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return;
        }
        for (p, wi) in pieces.iter().zip(&weights) {
            if *wi == 0.0 {
                continue;
            }
            let c = p.center;
            let y = [c[0] + s * (x[0] - c[0]), c[1] + s * (x[1] - c[1])];
            for (comp, v) in o.iter_mut().enumerate() {
                *v += wi / total * t / s * w.sample(y, comp);
            }
        }
    });
    Ok(StarScaled { field: out, s, t, boundary_layer: layer.max(0.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, StarPiece};
    use crate::util::loglog_slope;
    use std::f64::consts::PI;

    fn square() -> Domain {
        let d = Domain::unit_square();
        let piece = StarPiece { vertices: d.outer().to_vec(), center: [0.5, 0.5] };
        d.with_star_decomposition(vec![piece]).unwrap()
    }

    #[test]
    fn fixed_point_and_boundary_values() {
        let d = square();
        let grid = build_grid(&d, 1.0 / 64.0, 0.0).unwrap();
        let g = Field::from_fn(grid.clone(), |x| x[0] + x[1]);
        let r = star_scale(&g, &g, &d, 1.1, None, None).unwrap();
        assert_eq!(r.field.values(), g.values());

        let zero = Field::zeros(grid.clone(), 1);
        let u = Field::from_fn(grid.clone(), |x| (PI * x[0]).sin() * (PI * x[1]).sin());
        let r = star_scale(&u, &zero, &d, 1.1, None, None).unwrap();
        for (k, b) in grid.boundary_adjacent_mask().iter().enumerate() {
            if *b {
                assert_eq!(r.field.values()[k], 0.0);
            }
        }
        assert!(r.boundary_layer > 0.04);
    }

    #[test]
    fn converges_linearly_in_scale() {
        let d = square();
        let grid = build_grid(&d, 1.0 / 256.0, 0.0).unwrap();
        let g = Field::from_fn(grid.clone(), |x| 0.5 * x[0]);
        let u = Field::from_fn(grid.clone(), |x| {
            0.5 * x[0] + ((PI * x[0]).sin() * (PI * x[1]).sin()).powi(2)
        });
        let ss = [1.08, 1.04, 1.02];
        let errs: Vec<f64> = ss
            .iter()
            .map(|s| star_scale(&u, &g, &d, *s, None, None).unwrap().field.sub(&u).unwrap().w1p_norm(2.0))
            .collect();
        let slope = loglog_slope(&ss.map(|s| s - 1.0), &errs).unwrap();
        assert!(slope >= 0.8, "{slope} {errs:?}");
        assert!(errs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejections() {
        let plain = Domain::unit_square();
        let grid = build_grid(&plain, 0.1, 0.0).unwrap();
        let u = Field::zeros(grid, 1);
        assert!(star_scale(&u, &u, &plain, 1.1, None, None).is_err());
        let d = square();
        assert!(star_scale(&u, &u, &d, 1.3, None, None).is_err());
        assert!(star_scale(&u, &u, &d, 1.0, None, None).is_err());
        assert!(star_scale(&u, &u, &d, 1.1, Some(1.0), None).is_err());
    }

    #[test]
    fn blend_schedule() {
        assert!((default_blend(1.1) - 0.9).abs() < 1e-15);
        assert_eq!(default_blend(1.6), 0.5);
        assert!(default_blend(1.0) < 1.0);
    }
}
