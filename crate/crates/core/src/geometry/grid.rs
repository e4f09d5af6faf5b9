//! Uniform node grids over an inflated bounding box and fields sampled on them.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::domain::Domain;
use super::polygon::Point;
use crate::util::pairwise_sum;
use crate::{Error, Result};

/// Default upper bound on the number of grid nodes (about 128 MiB per scalar field).
pub const DEFAULT_NODE_CAP: usize = 1 << 24;

const FIELD_MAGIC: &[u8; 4] = b"PQF1";
const FIELD_VERSION: u32 = 1;

/// Uniform grid with `nx x ny` cells of side `h` and the signed distance of
/// every node to the domain boundary.
#[derive(Clone, Debug)]
pub struct Grid {
    origin: Point,
    h: f64,
    nx: usize,
    ny: usize,
    sd: Vec<f64>,
}

/// Builds the grid covering the domain's bounding box inflated by `margin`.
pub fn build_grid(domain: &Domain, h: f64, margin: f64) -> Result<Arc<Grid>> {
    build_grid_with_cap(domain, h, margin, DEFAULT_NODE_CAP)
}

pub fn build_grid_with_cap(domain: &Domain, h: f64, margin: f64, cap: usize) -> Result<Arc<Grid>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("grid spacing must be positive, got {h}")));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::invalid(format!("grid margin must be nonnegative, got {margin}")));
    }
    let b = domain.bbox();
    let origin = [b[0] - margin, b[1] - margin];
    let cells = |len: f64| -> f64 {
        let r = len / h;
        if (r - r.round()).abs() <= 1e-9 * r.max(1.0) {
            r.round()
        } else {
            r.ceil()
        }
    };
    let nx = cells(b[2] - b[0] + 2.0 * margin);
    let ny = cells(b[3] - b[1] + 2.0 * margin);
    let nodes = (nx + 1.0) * (ny + 1.0);
    if !(nodes <= cap as f64) {
        let n = if nodes.is_finite() { nodes as usize } else { usize::MAX };
        return Err(Error::GridTooLarge { nodes: n, bytes: n.saturating_mul(8), cap });
    }
    Ok(Arc::new(Grid::from_parts(domain, origin, h, nx as usize, ny as usize)))
}

impl Grid {
    /// Grid with explicit origin and cell counts.
    pub fn from_parts(domain: &Domain, origin: Point, h: f64, nx: usize, ny: usize) -> Grid {
        let w = nx + 1;
        let mut sd = vec![0.0; w * (ny + 1)];
        sd.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                *v = domain.signed_distance([origin[0] + i as f64 * h, origin[1] + j as f64 * h]);
            }
        });
        Grid { origin, h, nx, ny, sd }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    /// Cell counts `(nx, ny)`.
    pub fn cells(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Node counts per direction.
    pub fn dims(&self) -> (usize, usize) {
        (self.nx + 1, self.ny + 1)
    }

    pub fn n_nodes(&self) -> usize {
        self.sd.len()
    }

    /// `[xmin, ymin, xmax, ymax]`.
    pub fn bbox(&self) -> [f64; 4] {
        [
            self.origin[0],
            self.origin[1],
            self.origin[0] + self.nx as f64 * self.h,
            self.origin[1] + self.ny as f64 * self.h,
        ]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn ij(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    #[inline]
    pub fn point(&self, node: usize) -> Point {
        let (i, j) = self.ij(node);
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    #[inline]
    pub fn signed_distance(&self, node: usize) -> f64 {
        self.sd[node]
    }

    pub fn signed_distances(&self) -> &[f64] {
        &self.sd
    }

    /// Node lies in the closed domain.
    #[inline]
    pub fn is_inside(&self, node: usize) -> bool {
        self.sd[node] >= 0.0
    }

    pub fn inside_mask(&self) -> Vec<bool> {
        self.sd.iter().map(|d| *d >= 0.0).collect()
    }

    pub fn inside_count(&self) -> usize {
        self.sd.iter().filter(|d| **d >= 0.0).count()
    }

    pub fn strictly_inside_count(&self) -> usize {
        self.sd.iter().filter(|d| **d > 0.0).count()
    }

    /// Nodes on or outside the boundary with a 4-neighbour strictly inside.
    pub fn boundary_adjacent_mask(&self) -> Vec<bool> {
        (0..self.n_nodes())
            .map(|k| self.sd[k] <= 0.0 && self.neighbors4(k).any(|n| self.sd[n] > 0.0))
            .collect()
    }

    pub fn neighbors4(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.ij(node);
        let (nx, ny) = (self.nx, self.ny);
        [
            (i > 0).then(|| self.index(i - 1, j)),
            (i < nx).then(|| self.index(i + 1, j)),
            (j > 0).then(|| self.index(i, j - 1)),
            (j < ny).then(|| self.index(i, j + 1)),
        ]
        .into_iter()
        .flatten()
    }

    /// Corner nodes of cell `(ci, cj)` in counterclockwise order from the lower left.
    #[inline]
    pub fn cell_nodes(&self, ci: usize, cj: usize) -> [usize; 4] {
        let a = self.index(ci, cj);
        let w = self.nx + 1;
        [a, a + 1, a + 1 + w, a + w]
    }

    #[inline]
    pub fn cell_center(&self, ci: usize, cj: usize) -> Point {
        [
            self.origin[0] + (ci as f64 + 0.5) * self.h,
            self.origin[1] + (cj as f64 + 0.5) * self.h,
        ]
    }

    /// A cell is active when all four corners are in the closed domain.
    #[inline]
    pub fn cell_active(&self, ci: usize, cj: usize) -> bool {
        self.cell_nodes(ci, cj).iter().all(|n| self.sd[*n] >= 0.0)
    }

    /// Sum over active cells of `h^2 f(center, corners)`, pairwise per row and across rows.
    pub fn integrate_cells<F>(&self, f: F) -> f64
    where
        F: Fn(Point, [usize; 4]) -> f64 + Sync,
    {
        let h2 = self.h * self.h;
        let rows: Vec<f64> = (0..self.ny)
            .into_par_iter()
            .map(|cj| {
                let vals: Vec<f64> = (0..self.nx)
                    .filter(|ci| self.cell_active(*ci, cj))
                    .map(|ci| f(self.cell_center(ci, cj), self.cell_nodes(ci, cj)))
                    .collect();
                pairwise_sum(&vals)
            })
            .collect();
        h2 * pairwise_sum(&rows)
    }

    /// Measure of the union of active cells.
    pub fn active_area(&self) -> f64 {
        self.integrate_cells(|_, _| 1.0)
    }

    fn same_layout(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.h == other.h && self.origin == other.origin
    }
}

/// Inside nodes whose distance to the boundary is below `width`.
pub fn boundary_strip_mask(grid: &Grid, width: f64) -> Result<Vec<bool>> {
    if !(width > 0.0) {
        return Err(Error::invalid(format!("strip width must be positive, got {width}")));
    }
    Ok(grid.sd.iter().map(|d| *d >= 0.0 && *d < width).collect())
}

/// Vector-valued nodal function on a grid. Component `c` of node `k` is
/// `values[k * m + c]`. Gradient fields of an `m`-component field carry
/// `2m` components ordered `(d_x u_c, d_y u_c)`.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    m: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Arc<Grid>, m: usize) -> Field {
        let n = grid.n_nodes() * m;
        Field { grid, m, values: vec![0.0; n] }
    }

    pub fn from_values(grid: Arc<Grid>, m: usize, values: Vec<f64>) -> Result<Field> {
        if m == 0 || values.len() != grid.n_nodes() * m {
            return Err(Error::invalid(format!(
                "field needs {} values for {m} components, got {}",
                grid.n_nodes() * m,
                values.len()
            )));
        }
        Ok(Field { grid, m, values })
    }

    /// Scalar field sampled from `f` at every node.
    pub fn from_fn<F>(grid: Arc<Grid>, f: F) -> Field
    where
        F: Fn(Point) -> f64 + Sync,
    {
        let values = (0..grid.n_nodes()).into_par_iter().map(|k| f(grid.point(k))).collect();
        Field { grid, m: 1, values }
    }

    /// `m`-component field sampled from `f`, which writes into the output slice.
    pub fn from_fn_vec<F>(grid: Arc<Grid>, m: usize, f: F) -> Field
    where
        F: Fn(Point, &mut [f64]) + Sync,
    {
        let mut values = vec![0.0; grid.n_nodes() * m];
        values.par_chunks_mut(m).enumerate().for_each(|(k, out)| f(grid.point(k), out));
        Field { grid, m, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, node: usize, c: usize) -> f64 {
        self.values[node * self.m + c]
    }

    #[inline]
    pub fn node(&self, node: usize) -> &[f64] {
        &self.values[node * self.m..(node + 1) * self.m]
    }

    /// Rejects fields with a NaN or infinite value, naming the first bad node.
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite { node: k / self.m }),
            None => Ok(()),
        }
    }

    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.m != other.m || !(Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_layout(&other.grid)) {
            return Err(Error::invalid("fields live on different grids or have different component counts"));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Field {
        Field { grid: self.grid.clone(), m: self.m, values: self.values.par_iter().map(|v| f(*v)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Field> {
        self.check_compatible(other)?;
        let values = self.values.par_iter().zip(other.values.par_iter()).map(|(a, b)| f(*a, *b)).collect();
        Ok(Field { grid: self.grid.clone(), m: self.m, values })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    /// Single component as a scalar field.
    pub fn component(&self, c: usize) -> Field {
        let values = self.values.iter().skip(c).step_by(self.m).copied().collect();
        Field { grid: self.grid.clone(), m: 1, values }
    }

    /// Euclidean norm of the nodal vector.
    #[inline]
    pub fn magnitude(&self, node: usize) -> f64 {
        self.node(node).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Finite-difference gradient: centered inside the box, one-sided on its edges.
    pub fn gradient(&self) -> Field {
        let g = &self.grid;
        let (w, hgt) = g.dims();
        let m = self.m;
        let h = g.h;
        let mut out = vec![0.0; g.n_nodes() * 2 * m];
        out.par_chunks_mut(2 * m).enumerate().for_each(|(k, o)| {
            let (i, j) = g.ij(k);
            let (il, ir, sx) = if i == 0 {
                (i, i + 1, h)
            } else if i + 1 == w {
                (i - 1, i, h)
            } else {
                (i - 1, i + 1, 2.0 * h)
            };
            let (jl, jr, sy) = if j == 0 {
                (j, j + 1, h)
            } else if j + 1 == hgt {
                (j - 1, j, h)
            } else {
                (j - 1, j + 1, 2.0 * h)
            };
            let (xl, xr) = (g.index(il, j), g.index(ir, j));
            let (yl, yr) = (g.index(i, jl), g.index(i, jr));
            for c in 0..m {
                o[2 * c] = (self.values[xr * m + c] - self.values[xl * m + c]) / sx;
                o[2 * c + 1] = (self.values[yr * m + c] - self.values[yl * m + c]) / sy;
            }
        });
        Field { grid: self.grid.clone(), m: 2 * m, values: out }
    }

    /// Average of the corner values of a cell, written into `out`.
    #[inline]
    pub fn cell_average(&self, corners: [usize; 4], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = 0.25 * corners.iter().map(|n| self.values[n * self.m + c]).sum::<f64>();
        }
    }

    /// `h^2` times the sum over active cells of `f(center, corner average)`.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(Point, &[f64]) -> f64 + Sync,
    {
        self.integrate_where(f, |_| true)
    }

    /// As [`Field::integrate`], restricted to cells whose center passes `keep`.
    pub fn integrate_where<F, K>(&self, f: F, keep: K) -> f64
    where
        F: Fn(Point, &[f64]) -> f64 + Sync,
        K: Fn(Point) -> bool + Sync,
    {
        let m = self.m;
        self.grid.integrate_cells(|x, corners| {
            if !keep(x) {
                return 0.0;
            }
            let mut buf = [0.0f64; 8];
            if m <= 8 {
                self.cell_average(corners, &mut buf[..m]);
                f(x, &buf[..m])
            } else {
                let mut v = vec![0.0; m];
                self.cell_average(corners, &mut v);
                f(x, &v)
            }
        })
    }

    /// L^p norm (Euclidean pointwise norm) over active cells; `p = inf` gives
    /// the maximum over inside nodes.
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.lp_norm_where(p, |_| true)
    }

    pub fn lp_norm_where<K>(&self, p: f64, keep: K) -> f64
    where
        K: Fn(Point) -> bool + Sync,
    {
        if p.is_infinite() {
            return (0..self.grid.n_nodes())
                .filter(|k| self.grid.is_inside(*k) && keep(self.grid.point(*k)))
                .map(|k| self.magnitude(k))
                .fold(0.0, f64::max);
        }
        let s = self.integrate_where(|_, v| v.iter().map(|a| a * a).sum::<f64>().powf(0.5 * p), keep);
        s.powf(1.0 / p)
    }

    /// `(||u||_p^p + ||Du||_p^p)^{1/p}` with the finite-difference gradient.
    pub fn w1p_norm(&self, p: f64) -> f64 {
        self.w1p_norm_where(p, |_| true)
    }

    pub fn w1p_norm_where<K>(&self, p: f64, keep: K) -> f64
    where
        K: Fn(Point) -> bool + Sync + Copy,
    {
        let a = self.lp_norm_where(p, keep).powf(p);
        let b = self.gradient().lp_norm_where(p, keep).powf(p);
        (a + b).powf(1.0 / p)
    }

    /// Bilinear interpolation of component `c` at `x`, clamped to the box.
    pub fn sample(&self, x: Point, c: usize) -> f64 {
        let g = &self.grid;
        let fx = ((x[0] - g.origin[0]) / g.h).clamp(0.0, g.nx as f64);
        let fy = ((x[1] - g.origin[1]) / g.h).clamp(0.0, g.ny as f64);
        let i = (fx.floor() as usize).min(g.nx.saturating_sub(1));
        let j = (fy.floor() as usize).min(g.ny.saturating_sub(1));
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let [a, b, cc, d] = g.cell_nodes(i, j);
        let v = |n: usize| self.values[n * self.m + c];
        (1.0 - ty) * ((1.0 - tx) * v(a) + tx * v(b)) + ty * ((1.0 - tx) * v(d) + tx * v(cc))
    }

    /// Replaces the values at outside nodes by the value at the nearest
    /// boundary point, interpolated from the field.
    pub fn extend_from_boundary(&self, domain: &Domain) -> Field {
        let mut out = self.clone();
        let m = self.m;
        out.values.par_chunks_mut(m).enumerate().for_each(|(k, o)| {
            if self.grid.sd[k] < 0.0 {
                let b = domain.closest_boundary_point(self.grid.point(k));
                for (c, v) in o.iter_mut().enumerate() {
                    *v = self.sample(b, c);
                }
            }
        });
        out
    }

    /// Writes the field in the little-endian `PQF1` binary format.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let g = &self.grid;
        w.write_all(FIELD_MAGIC)?;
        for v in [FIELD_VERSION, self.m as u32, g.nx as u32, g.ny as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [g.h, g.origin[0], g.origin[1]] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    /// Reads a `PQF1` field. The grid's inside mask comes from `domain`, or
    /// from the field's own bounding box when no domain is given.
    pub fn read_from(mut r: impl Read, domain: Option<&Domain>) -> Result<Field> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(Error::invalid("not a PQF1 field file"));
        }
        let mut u32s = [0u32; 4];
        for v in u32s.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        let [version, m, nx, ny] = u32s;
        if version != FIELD_VERSION {
            return Err(Error::invalid(format!("unsupported field version {version}")));
        }
        let mut f64s = [0f64; 3];
        for v in f64s.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let [h, ox, oy] = f64s;
        if !(h > 0.0) || m == 0 {
            return Err(Error::invalid("corrupt field header"));
        }
        let (m, nx, ny) = (m as usize, nx as usize, ny as usize);
        let count = (nx + 1) * (ny + 1) * m;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 8 {
            return Err(Error::invalid(format!("field payload has {} bytes, expected {}", bytes.len(), count * 8)));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let grid = match domain {
            Some(d) => Grid::from_parts(d, [ox, oy], h, nx, ny),
            None => {
                let d = Domain::rectangle(ox, oy, ox + nx as f64 * h, oy + ny as f64 * h)?;
                Grid::from_parts(&d, [ox, oy], h, nx, ny)
            }
        };
        Field::from_values(Arc::new(grid), m, values)
    }

    pub fn load(path: impl AsRef<Path>, domain: Option<&Domain>) -> Result<Field> {
        let f = std::fs::File::open(path)?;
        Field::read_from(std::io::BufReader::new(f), domain)
    }
}
