//! Cut-set and stability constrained optimal power flow.
//!
//! The pipeline screens a wildfire contingency for saturated cut-sets and
//! transient instability, learns a linear predictor for the stability
//! correction, and computes a minimum-cost preventive redispatch.

pub mod grid;
pub mod sensitivity;
pub mod constraint;
pub mod cutset;
pub mod dynamics;
pub mod tscp;
pub mod cscopf;
pub mod fixtures;
