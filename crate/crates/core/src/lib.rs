//! Two-region reduced-form integrated assessment model with engineered and nature-based carbon
//! removal, solved period by period for the carbon price that meets a linear net-zero cap.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod climate;
pub mod config;
pub mod energy;
pub mod error;
pub mod land;
pub mod report;
pub mod solver;
pub mod techno;

pub use error::{Error, Result};
