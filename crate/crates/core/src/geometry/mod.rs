//! Polygonal domains, Cartesian grids and grid fields.

mod domain;
mod grid;
pub mod polygon;

pub use domain::{validate_star_shaped, Domain, StarCheck, StarPiece};
pub use grid::{boundary_strip_mask, build_grid, build_grid_with_cap, Field, Grid, DEFAULT_NODE_CAP};
pub use polygon::Point;
