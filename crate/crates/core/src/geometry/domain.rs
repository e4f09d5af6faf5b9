//! Polygonal Lipschitz domains.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::polygon::{self, Point};
use crate::{Error, Result};

/// One piece of a star-shaped decomposition: a loop and the point it is
/// star-shaped with respect to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarPiece {
    #[serde(rename = "loop")]
    pub vertices: Vec<Point>,
    pub center: Point,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DomainFile {
    vertices: Vec<Point>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    holes: Vec<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    star_decomposition: Vec<StarPiece>,
}

/// A polygon with optional polygonal holes. The outer loop is stored
/// counterclockwise and holes clockwise.
#[derive(Clone, Debug)]
pub struct Domain {
    outer: Vec<Point>,
    holes: Vec<Vec<Point>>,
    stars: Vec<StarPiece>,
    area: f64,
}

/// Outcome of a ray-casting star-shapedness check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarCheck {
    pub star_shaped: bool,
    /// Direction angle (radians) and boundary transitions of the first failing ray.
    pub worst_ray: Option<(f64, usize)>,
    /// Distance from the center to the loop.
    pub margin: f64,
}

impl Domain {
    pub fn new(outer: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let mut outer = outer;
        polygon::check_simple(&outer).map_err(|reason| Error::InvalidPolygon { loop_index: 0, reason })?;
        if polygon::signed_area(&outer) < 0.0 {
            outer.reverse();
        }
        let mut area = polygon::signed_area(&outer);
        let mut fixed_holes = Vec::with_capacity(holes.len());
        for (k, mut hole) in holes.into_iter().enumerate() {
            let idx = k + 1;
            polygon::check_simple(&hole).map_err(|reason| Error::InvalidPolygon { loop_index: idx, reason })?;
            for v in &hole {
                if polygon::loop_signed_distance(*v, &outer) <= 0.0 {
                    return Err(Error::InvalidPolygon {
                        loop_index: idx,
                        reason: "hole is not strictly inside the outer loop".into(),
                    });
                }
            }
            for (a, b) in polygon::edges(&hole) {
                for (c, d) in polygon::edges(&outer) {
                    if polygon::segments_intersect(a, b, c, d) {
                        return Err(Error::InvalidPolygon { loop_index: idx, reason: "hole touches the outer loop".into() });
                    }
                }
            }
            for (j, other) in fixed_holes.iter().enumerate() {
                let other: &Vec<Point> = other;
                let touches = polygon::edges(&hole)
                    .any(|(a, b)| polygon::edges(other).any(|(c, d)| polygon::segments_intersect(a, b, c, d)));
                if touches || polygon::point_in_loop(hole[0], other) || polygon::point_in_loop(other[0], &hole) {
                    return Err(Error::InvalidPolygon {
                        loop_index: idx,
                        reason: format!("hole overlaps hole {}", j + 1),
                    });
                }
            }
            if polygon::signed_area(&hole) > 0.0 {
                hole.reverse();
            }
            area += polygon::signed_area(&hole);
            fixed_holes.push(hole);
        }
        Ok(Domain { outer, holes: fixed_holes, stars: Vec::new(), area })
    }

    /// Attaches a star-shaped decomposition after validating it.
    pub fn with_star_decomposition(mut self, pieces: Vec<StarPiece>) -> Result<Self> {
        self.stars = pieces;
        self.validate_star_decomposition()?;
        Ok(self)
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Domain::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]], Vec::new())
    }

    pub fn unit_square() -> Self {
        Domain::rectangle(0.0, 0.0, 1.0, 1.0).expect("unit square is valid")
    }

    /// The L-shape `{(0,0),(2,0),(2,1),(1,1),(1,2),(0,2)}`.
    pub fn l_shape() -> Self {
        Domain::new(
            vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]],
            Vec::new(),
        )
        .expect("L-shape is valid")
    }

    /// Regular `n`-gon inscribed in the circle of given center and radius.
    pub fn regular_polygon(center: Point, radius: f64, n: usize) -> Result<Self> {
        let verts = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        Domain::new(verts, Vec::new())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: DomainFile = serde_json::from_str(s)?;
        let d = Domain::new(file.vertices, file.holes)?;
        if file.star_decomposition.is_empty() {
            Ok(d)
        } else {
            d.with_star_decomposition(file.star_decomposition)
        }
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        Self::from_json_str(&v.to_string())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let f = DomainFile {
            vertices: self.outer.clone(),
            holes: self.holes.clone(),
            star_decomposition: self.stars.clone(),
        };
        serde_json::to_string_pretty(&f).expect("domain serializes")
    }

    pub fn outer(&self) -> &[Point] {
        &self.outer
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn star_pieces(&self) -> &[StarPiece] {
        &self.stars
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// `(xmin, ymin, xmax, ymax)` of the outer loop.
    pub fn bbox(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for v in &self.outer {
            b[0] = b[0].min(v[0]);
            b[1] = b[1].min(v[1]);
            b[2] = b[2].max(v[0]);
            b[3] = b[3].max(v[1]);
        }
        b
    }

    pub fn diameter(&self) -> f64 {
        let b = self.bbox();
        (b[2] - b[0]).hypot(b[3] - b[1])
    }

    fn loops(&self) -> impl Iterator<Item = &Vec<Point>> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    /// Unsigned distance to the boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.loops().map(|l| polygon::loop_distance(p, l)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: Point) -> bool {
        polygon::point_in_loop(p, &self.outer) && !self.holes.iter().any(|h| polygon::point_in_loop(p, h))
    }

    /// Exact distance to the boundary, positive strictly inside and negative outside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        let d = self.boundary_distance(p);
        if d > 0.0 && self.contains(p) {
            d
        } else {
            -d
        }
    }

    /// Nearest point of the boundary.
    pub fn closest_boundary_point(&self, p: Point) -> Point {
        let mut best = p;
        let mut best_d = f64::INFINITY;
        for l in self.loops() {
            for (a, b) in polygon::edges(l) {
                let c = polygon::closest_on_segment(p, a, b);
                let d = polygon::dist(p, c);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
        }
        best
    }

    /// Validates the attached star decomposition: each piece is simple, strongly
    /// star-shaped about its center, contained in the domain, and the pieces
    /// tile the domain.
    pub fn validate_star_decomposition(&self) -> Result<Vec<StarCheck>> {
        if self.stars.is_empty() {
            return Err(Error::invalid("domain has no star decomposition"));
        }
        let mut checks = Vec::new();
        let mut total = 0.0;
        for (k, piece) in self.stars.iter().enumerate() {
            let check = validate_star_shaped(&piece.vertices, piece.center, 256)?;
            if !check.star_shaped {
                return Err(Error::invalid(format!(
                    "star piece {k} is not star-shaped about its center (ray {:?})",
                    check.worst_ray
                )));
            }
            let tol = 1e-9 * self.diameter();
            for (a, b) in polygon::edges(&piece.vertices) {
                let mid = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
                if self.signed_distance(a) < -tol || self.signed_distance(mid) < -tol {
                    return Err(Error::invalid(format!("star piece {k} leaves the domain")));
                }
            }
            total += polygon::signed_area(&piece.vertices).abs();
            checks.push(check);
        }
        for i in 0..self.stars.len() {
            for j in i + 1..self.stars.len() {
                let (a, b) = (&self.stars[i].vertices, &self.stars[j].vertices);
                let crossing = polygon::edges(a)
                    .any(|(p, q)| polygon::edges(b).any(|(r, s)| polygon::segments_cross_properly(p, q, r, s)));
                let nested = a.iter().any(|v| polygon::loop_signed_distance(*v, b) > 1e-12)
                    || b.iter().any(|v| polygon::loop_signed_distance(*v, a) > 1e-12)
                    || polygon::loop_signed_distance(self.stars[i].center, b) > 0.0
                    || polygon::loop_signed_distance(self.stars[j].center, a) > 0.0;
                if crossing || nested {
                    return Err(Error::invalid(format!("star pieces {i} and {j} overlap")));
                }
            }
        }
        if (total - self.area).abs() > 1e-9 * self.area {
            return Err(Error::invalid(format!(
                "star pieces cover area {total}, domain area is {}",
                self.area
            )));
        }
        Ok(checks)
    }
}

/// Ray-casting test of strong star-shapedness of a loop about `center`.
///
/// Each of `n_rays` equally spaced rays is followed through all its boundary
/// intersections; the loop passes when every ray leaves the interior exactly
/// once and never grazes or runs along an edge.
pub fn validate_star_shaped(vertices: &[Point], center: Point, n_rays: usize) -> Result<StarCheck> {
    if n_rays < 64 {
        return Err(Error::invalid(format!("n_rays must be at least 64, got {n_rays}")));
    }
    polygon::check_simple(vertices).map_err(|reason| Error::InvalidPolygon { loop_index: 0, reason })?;
    let margin = polygon::loop_signed_distance(center, vertices);
    if margin <= 0.0 {
        return Err(Error::invalid("star center is not strictly inside the loop"));
    }
    let scale = vertices.iter().map(|v| polygon::dist(*v, center)).fold(0.0, f64::max);
    let tol = 1e-10 * scale;
    for k in 0..n_rays {
        let theta = 2.0 * PI * k as f64 / n_rays as f64;
        let dir = [theta.cos(), theta.sin()];
        let mut ts: Vec<f64> = Vec::new();
        for (a, b) in polygon::edges(vertices) {
            let e = polygon::sub(b, a);
            let denom = polygon::cross(dir, e);
            let ac = polygon::sub(a, center);
            if denom.abs() < 1e-300 {
                // Parallel; collinear overlap shows up as a boundary midpoint below.
                if polygon::cross(ac, dir).abs() <= tol {
                    ts.push(polygon::dot(ac, dir));
                    ts.push(polygon::dot(polygon::sub(b, center), dir));
                }
                continue;
            }
            let t = polygon::cross(ac, e) / denom;
            let s = polygon::cross(ac, dir) / denom;
            if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
                ts.push(t);
            }
        }
        ts.retain(|t| *t > 0.0);
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup_by(|a, b| (*a - *b).abs() <= tol);
        let mut transitions = 0usize;
        let mut inside = true;
        let mut grazing = false;
        for (idx, t) in ts.iter().enumerate() {
            let next = ts.get(idx + 1).copied().unwrap_or(t + scale);
            let mid = 0.5 * (t + next);
            let p = [center[0] + mid * dir[0], center[1] + mid * dir[1]];
            let sd = polygon::loop_signed_distance(p, vertices);
            if sd.abs() <= tol {
                grazing = true;
                break;
            }
            let now_inside = sd > 0.0;
            if now_inside != inside {
                transitions += 1;
                inside = now_inside;
            }
        }
        if grazing || transitions != 1 {
            return Ok(StarCheck { star_shaped: false, worst_ray: Some((theta, transitions)), margin });
        }
    }
    Ok(StarCheck { star_shaped: true, worst_ray: None, margin })
}
