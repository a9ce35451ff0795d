//! Outer bounds, identified sets and confidence intervals for average effects
//! in fixed-effects binary-choice panel models.

pub mod bounds;
pub mod error;
pub mod estimation;
pub mod idset;
pub mod inference;
pub mod lp;
pub mod models;
pub mod sims;
pub mod special;

pub use error::{Error, Result};
