//! Monte Carlo laboratory for persistence probabilities of fractional
//! Brownian motion indexed by `d`-dimensional time.
//!
//! The field `w_H(t)`, `t ∈ R^d`, is sampled exactly on finite point sets by
//! dense Cholesky factorization of its covariance. On top of that the crate
//! provides:
//!
//! * [`geometry`]: convex domains tangent to `{t⁽¹⁾ = 0}` at the origin and
//!   their lattice points,
//! * [`covmodel`]: variogram-defined covariance models and Gram matrices,
//! * [`sampler`]: reproducible, worker-count independent field sampling,
//! * [`curve`]: the shell-ordered enumeration of `Z^d` used by the record
//!   functional,
//! * [`records`]: the record functional `F_n = Σ (ξ_i − M_{i−1})₊`,
//! * [`persistence`]: persistence probabilities, expected maxima and
//!   power-law exponent fits,
//! * [`verify`]: empirical checks of the interpolation lemmas and of the
//!   lower-bound chain.

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covmodel;
pub mod curve;
pub mod error;
pub mod export;
pub mod geometry;
pub mod persistence;
pub mod records;
pub mod sampler;
pub mod stats;
pub mod verify;

pub use covmodel::{CovarianceModel, GramMatrix};
pub use curve::{EnumerationCurve, Face, Zone};
pub use error::{Error, Result};
pub use geometry::{Domain, DomainKind, LatticePoint, Point};
pub use persistence::{ExponentFit, McOptions, Mesh, PersistenceEstimate};
pub use sampler::{FieldSampler, SampleBatch};
