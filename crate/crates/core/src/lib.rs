//! Weighted-Lasso estimation of the conditional intensity in the Aalen
//! multiplicative intensity model.
//!
//! The candidate intensities are `λ_{β,γ}(t, Z) = exp(Σ_k γ_k θ_k(t) + Σ_j β_j f_j(Z))`
//! built from two dictionaries; the estimator minimizes the total empirical
//! log-likelihood plus a data-driven weighted ℓ1 penalty.

pub mod error;
pub mod experiments;
pub mod gram_re;
pub mod likelihood;
pub mod model;
pub mod solver;
pub mod weights;

pub use error::{Error, Result};
