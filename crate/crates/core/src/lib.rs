//! Rare-event probability estimation by importance sampling, with the biasing
//! distribution computed by one of three cross-entropy (CE) engines:
//!
//! - the standard adaptive CE method ([`engines::run_standard_ce`]),
//! - the pre-conditioned multi-fidelity CE method ([`engines::run_preconditioned_ce`]),
//! - the surrogate-selecting CE method driven by certified error bounds
//!   ([`engines::run_multifidelity_ce`]).
//!
//! Score models are exposed through the [`hierarchy::ScoreHierarchy`] contract.
//! Two hierarchies ship with the crate: a linear-Gaussian oracle with an exact
//! tail probability ([`models::analytic`]) and a reduced-basis hierarchy for a
//! steady advection-diffusion-reaction problem ([`models::pde`]).

pub mod batch;
pub mod engines;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod families;
pub mod hierarchy;
pub mod models;
pub mod quantile;
pub mod rng;

pub use batch::{ParameterPoint, SampleBatch};
pub use error::{MfceError, Result};
pub use hierarchy::{LevelEval, ScoreHierarchy};
pub use rng::{derive_substream, RandomStream};
