//! Core library of a sampling laboratory for the unadjusted Langevin
//! algorithm (ULA) on log-concave targets, built around one question: how
//! does the stationary discretization bias spread over coordinates?
//!
//! The library provides
//!
//! * [`graph`]: interaction graphs of sparse potentials, iterated
//!   neighborhoods `N_k(i)`, and sparsity profiles `s_k`;
//! * [`potentials`]: target potentials (Gaussian, product, lattice
//!   perturbations of a Gaussian free field, rotated mixtures) with exact
//!   convexity constants and sparse Hessians;
//! * [`samplers`]: ULA chains, synchronous couplings against exact or
//!   fine-step references, a MALA reference sampler, and exact samplers for
//!   a Gaussian target and its ULA-stationary law;
//! * [`metrics`]: empirical Wasserstein machinery — exact 1D W2, lower and
//!   upper brackets for the max-norm Wasserstein distance, K-marginal
//!   bounds, observable biases with batch-means errors;
//! * [`theory_bounds`]: evaluators for the explicit sparsity-aware bias
//!   bounds and numerical verification of the propagator norm claims;
//! * [`asymptotics`]: first-order (in the step size) bias slopes from the
//!   two integral formulas, finite-step-size extrapolation, and the sqrt(K)
//!   marginal-scaling check.
//!
//! Everything is deterministic given a seed: chains draw from per-chain
//! ChaCha streams, and no result depends on thread scheduling.

pub mod asymptotics;
pub mod graph;
pub mod metrics;
pub mod potentials;
pub mod samplers;
pub mod stats;
pub mod theory_bounds;
