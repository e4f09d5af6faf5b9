//! Mollification, boundary-adapted smoothing, truncation and star rescaling.

mod construct;
mod kernel;
mod rates;
mod star;
mod truncate;

pub use construct::{blend_source, boundary_adapted_smooth, SmoothedResult, SmoothingParams};
pub use kernel::{apply_stencil, jensen_defect, mollify, Mollifier, Stencil};
pub use rates::{rate_table, RateItem, RateReport, SLOPE_SLACK};
pub use star::{default_blend, star_scale, StarReport, StarScaled};
pub use truncate::truncate;
