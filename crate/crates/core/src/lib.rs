//! Selective-inference toolkit comparing two ways of splitting sample
//! information before variable selection: hold-out data splitting and
//! additive Gaussian randomisation of the response.
//!
//! The crate is organised around the selection/inference pipeline:
//!
//! - [`linmodel`] — dense linear-model numerics: least squares, projection
//!   parameters and contrasts, variance estimation, Gaussian design sampling.
//! - [`split`] — splitting strategies (simple, DUPLEX, coin-flip, stratified)
//!   and the additive `(U, V)` randomisation of the response.
//! - [`select`] — variable selectors run on the selection portion: a
//!   coordinate-descent lasso with cross-validation, the fixed-X knockoff
//!   filter, and stability selection.
//! - [`infer`] — post-selection confidence intervals: face-value, hold-out,
//!   and randomised, for full-model coefficients and projection parameters.
//! - [`fisher`] — Fisher-information accounting for splits and the design
//!   criteria used to compare them.

pub mod error;
pub mod fisher;
pub mod infer;
pub mod linmodel;
pub mod select;
pub mod split;

pub use error::{Error, Result};
