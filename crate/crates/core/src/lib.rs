//! Hermite-regularized tempered generalized functions.
//!
//! Tempered distributions are represented by their Hermite coefficient
//! sequences `T(h_β)`, truncated to a box `{0..N}^d`. The family of box
//! partial sums `T_β = Σ_{γ≤β} T(h_γ) h_γ` is the regularizing
//! representative, so algebra operations, translations and association
//! checks all act on one coefficient tensor per element.
//!
//! On top of this the crate simulates continuous semimartingales and checks
//! the Itô formula for translated generalized functions path by path, and
//! solves the heat equation `u_t = ½Δu` with distributional initial data both
//! by Monte Carlo expectation over Brownian translations and by a
//! deterministic heat-kernel convolution.

pub mod cli;
pub mod coeffs;
pub mod error;
pub mod genfunc;
pub mod heat;
pub mod hermite;
pub mod numeric;
pub mod stochastic;

pub use coeffs::{CoeffTensor, GrowthProfile};
pub use error::{Error, Result};
pub use genfunc::{AssociationReport, DistributionSpec, GenFuncRep, TestFunction, TimeClass};
pub use hermite::{BasisSpec, MultiIndex, QuadRule};
