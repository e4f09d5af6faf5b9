//! Radial truncation of `u - g`.

use rayon::prelude::*;

use crate::geometry::Field;
use crate::{Error, Result};

/// `T_k u = g + (u - g) min(1, k / |u - g|)`, with `|.|` the Euclidean norm
/// over components.
pub fn truncate(u: &Field, g: &Field, k: f64) -> Result<Field> {
    if !(k > 0.0) {
        return Err(Error::invalid(format!("truncation level must be positive, got {k}")));
    }
    u.check_compatible(g)?;
    let m = u.components();
    let mut out = u.clone();
    out.values_mut()
        .par_chunks_mut(m)
        .zip(g.values().par_chunks(m))
        .for_each(|(o, gv)| {
            let norm = o.iter().zip(gv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if norm > k {
                let s = k / norm;
                for (a, b) in o.iter_mut().zip(gv) {
                    *a = b + (*a - b) * s;
                }
            }
        });
    Ok(out)
}
