//! Simulation, estimation, and causal-effect computation for transmissible
//! infection outcomes in closed clusters.
//!
//! The crate is organized around a pairwise Cox-type transmission hazard
//! model: every susceptible individual is exposed to an external force of
//! infection and to per-source transmission hazards from already-infected
//! cluster members, scaled log-linearly by treatments and covariates.
//!
//! Modules:
//! - [`hazard`]: baseline hazard families, model coefficients, and exact
//!   piecewise evaluation / integration / inversion of individual hazards.
//! - [`cohort`]: infection histories, observed cluster data, and the
//!   treatment-allocation / covariate designs.
//! - [`sim`]: exact event-driven simulation of cluster epidemics, including
//!   the "focal individual cannot transmit" counterfactual generator.
//! - [`likelihood`]: full-likelihood evaluation and maximum-likelihood
//!   estimation of the hazard coefficients.
//! - [`estimands`]: exposure-controlled and exposure-marginalized contagion,
//!   susceptibility, and infectiousness effects, plus hazard-ratio estimands.
//! - [`comparators`]: classical attack-risk contrasts (direct and indirect
//!   effects) and GEE-adjusted observational versions.
//! - [`oracle`]: an exact discrete-time enumeration oracle that independently
//!   verifies the identification formulas on tiny clusters.
//! - [`study`]: scenario descriptions and the simulate/fit/estimate pipeline
//!   used by the experiment runner.

pub mod cohort;
pub mod comparators;
pub mod error;
pub mod estimands;
pub mod gee;
pub mod hazard;
pub mod likelihood;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod study;

pub use error::{Error, Result};
pub use hazard::{BaselineHazard, ModelParams};
