//! Metropolis-Hastings and Monte-Carlo-within-Metropolis (MCwM) samplers
//! together with explicit bounds on the distance between the n-step laws
//! of an ideal Markov chain and a perturbation of it.
//!
//! * [`markov_core`]: exact finite-chain algebra (n-step laws, TV and
//!   V-norms, ergodicity coefficient, drift checks, restriction).
//! * [`perturbation_bounds`]: bound evaluators and finite-chain certificates.
//! * [`finite_validation`]: randomised exact-oracle checks of those bounds.
//! * [`samplers`]: MH, MCwM, restricted MCwM and latent-variable MCwM steps.
//! * [`models`]: the log-normal and normal-normal test models.
//! * [`diagnostics`]: kernel density estimates and grid distances.
//! * [`experiments`]: drivers for the model runs and Monte Carlo checks.

pub mod diagnostics;
pub mod experiments;
pub mod finite_validation;
pub mod markov_core;
pub mod models;
pub mod perturbation_bounds;
pub mod samplers;
