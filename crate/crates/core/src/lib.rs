//! Safety filter for multicopters built from control barrier functions.
//!
//! The vehicle state is augmented with the total thrust so the translational
//! dynamics become strict-feedback; velocity and position limits are then
//! enforced by safe backstepping, angular rate by a first-order barrier, and
//! thrust direction by a second-order cascade. Each condition is affine in the
//! input `ν_a = (Ṫ, M)`, so the filter is a small quadratic program solved
//! exactly by active-set enumeration.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod barriers;
pub mod config;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod nominal;
pub mod output;
pub mod qp_filter;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
