//! Planar polygon primitives.

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Closest point to `p` on segment `[a, b]`.
pub fn closest_on_segment(p: Point, a: Point, b: Point) -> Point {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return a;
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    [a[0] + t * ab[0], a[1] + t * ab[1]]
}

pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = dot(ab, ab);
    let t = dot(ap, ab);
    if len2 == 0.0 || t <= 0.0 {
        dist(p, a)
    } else if t >= len2 {
        dist(p, b)
    } else {
        // Perpendicular distance; exact for axis-aligned edges.
        cross(ab, ap).abs() / len2.sqrt()
    }
}

/// Iterates the closed edges `(v[k], v[k+1 mod n])` of a loop.
pub fn edges(vertices: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    let n = vertices.len();
    (0..n).map(move |k| (vertices[k], vertices[(k + 1) % n]))
}

/// Shoelace area, positive for counterclockwise loops.
pub fn signed_area(vertices: &[Point]) -> f64 {
    edges(vertices).map(|(a, b)| cross(a, b)).sum::<f64>() * 0.5
}

/// Even-odd crossing test. Points on the boundary give an unspecified answer;
/// callers resolve that case through the distance.
pub fn point_in_loop(p: Point, vertices: &[Point]) -> bool {
    let mut inside = false;
    for (a, b) in edges(vertices) {
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn loop_distance(p: Point, vertices: &[Point]) -> f64 {
    edges(vertices)
        .map(|(a, b)| segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

/// Signed distance to a single closed loop, positive strictly inside.
pub fn loop_signed_distance(p: Point, vertices: &[Point]) -> f64 {
    let d = loop_distance(p, vertices);
    if d > 0.0 && point_in_loop(p, vertices) {
        d
    } else {
        -d
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(sub(b, a), sub(c, a))
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(c, a, b))
        || (o2 == 0.0 && on_segment(d, a, b))
        || (o3 == 0.0 && on_segment(a, c, d))
        || (o4 == 0.0 && on_segment(b, c, d))
}

/// Proper crossing: the open segments cross at a single interior point.
pub fn segments_cross_properly(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Checks that a loop is a simple polygon; returns a reason on failure.
pub fn check_simple(vertices: &[Point]) -> Result<(), String> {
    let n = vertices.len();
    if n < 3 {
        return Err(format!("needs at least 3 vertices, got {n}"));
    }
    if vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err("non-finite vertex".into());
    }
    for k in 0..n {
        if vertices[k] == vertices[(k + 1) % n] {
            return Err(format!("zero-length edge at vertex {k}"));
        }
    }
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        for j in i + 1..n {
            let (c, d) = (vertices[j], vertices[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Adjacent edges share one vertex; reject folding back onto each other.
                let shared = if j == i + 1 { b } else { a };
                let other_i = if j == i + 1 { a } else { b };
                let other_j = if j == i + 1 { d } else { c };
                let u = sub(other_i, shared);
                let w = sub(other_j, shared);
                if cross(u, w) == 0.0 && dot(u, w) > 0.0 {
                    return Err(format!("edges {i} and {j} overlap"));
                }
            } else if segments_intersect(a, b, c, d) {
                return Err(format!("edges {i} and {j} intersect"));
            }
        }
    }
    if signed_area(vertices) == 0.0 {
        return Err("zero area".into());
    }
    Ok(())
}
