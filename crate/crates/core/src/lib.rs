//! Operational entanglement certification for small bipartite systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`hilbert`]: dense complex linear algebra, density operators, conditional
//!   covariances and partial transposes.
//! * [`states`]: product states, convex sums of product states, the singlet
//!   and Werner family, and the negativity separability check.
//! * [`inequalities`]: CHSH evaluation and grid maximization, plus the
//!   total-spin-squared covariance example.
//! * [`classical_models`]: the two-dice ensemble with exact rational moments
//!   and finite local hidden-variable models.
//! * [`protocol_sim`]: block-sampling protocols over a signal/device model
//!   and the naive significance test they break.
//! * [`stat_tests`]: homogeneity and independence diagnostics.
//!
//! All random sampling goes through [`rng::StreamRng`], a counter-addressed
//! generator, so results do not depend on how work is split across threads.

pub mod classical_models;
pub mod hilbert;
pub mod inequalities;
pub mod protocol_sim;
pub mod rng;
pub mod stat_tests;
pub mod states;
