//! Synthetic cerebral 3D OCTA volume generation from vessel graphs.
//!
//! The pipeline turns a vessel graph (nodes + radius-carrying edges,
//! micrometers) into paired training data: a binary label volume obtained
//! by capsule rasterization, and a synthetic OCTA intensity volume obtained
//! by simulating the dominant acquisition artifacts — projection tails
//! below vessels, angle-dependent signal loss in microvessels, and local
//! granular noise. Evaluation utilities (Dice, clDice with 3D thinning,
//! region-restricted scoring) and classical annotation-free baselines
//! (Otsu, multiscale Frangi vesselness) round out the toolkit.
//!
//! Modules follow the data flow:
//!
//! * [`graph`] — vessel graph parsing, validation, geometry queries
//! * [`sampler`] — grid-aligned patch extraction with exclusion criteria
//! * [`voxel`] — capsule rasterization, metadata grids, elastic deformation
//! * [`sim`] — the artifact simulator
//! * [`metrics`] — Dice / clDice / skeletonization / region evaluation
//! * [`baselines`] — Otsu and Frangi
//! * [`volume`] — raw+JSON volume files and PNG slice rendering
//! * [`pipeline`] — one-config end-to-end run with a hashed manifest
//!
//! Everything stochastic draws from counter-based streams keyed by
//! (seed, purpose, element), so outputs are byte-identical across thread
//! counts.

pub mod baselines;
pub mod error;
pub mod filter;
pub mod geom;
pub mod graph;
pub mod grid;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod sim;
pub mod volume;
pub mod voxel;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
