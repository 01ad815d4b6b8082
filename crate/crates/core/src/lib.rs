//! Affordance heatmap toolkit.
//!
//! Everything operates on small 2-D scalar grids ([`field::ScalarField`]):
//!
//! * [`field`] – grid types, normalization, Sobel gradients, exact Euclidean
//!   distance transform, connected components and the `AFG1` text format.
//! * [`softmask`] – annotation/mask intersection and sigmoid soft masks built
//!   from a signed distance field.
//! * [`scbr`] – dual-stream BCE, symmetric KL consistency and a Sobel boundary
//!   gradient penalty with analytic gradients and dynamic weighting.
//! * [`icrf`] – second-order flow matching: interpolants, a per-pixel MLP
//!   acceleration field, its trainer and the double-integration sampler.
//! * [`tacot`] – four-layer gated decision tree that turns oracle answers into
//!   ordered sub-action plans.
//! * [`metrics`] – KLD, SIM and NSS.
//! * [`harness`] – seeded synthetic data and reproducible experiment runs.

pub mod error;
pub mod field;
pub mod harness;
pub mod icrf;
pub mod metrics;
pub mod scbr;
pub mod softmask;
pub mod tacot;

pub use error::{Error, Result};
pub use field::{BinaryMask, GradientPair, LabelField, ScalarField};
