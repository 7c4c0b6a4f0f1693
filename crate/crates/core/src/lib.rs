//! Deterministic diffusion sampling over analytic Gaussian-mixture score models.
//!
//! The crate provides the DDIM denoise/invert pair, the split-term operators used by
//! guided path sampling, classifier-free extrapolation and manifold-constrained
//! interpolation, and per-step error diagnostics for zigzag refinement loops.

pub mod diagnostics;
pub mod error;
pub mod guidance;
pub mod lambda_schedule;
pub mod sampler;
pub mod schedule;
pub mod scoremodel;
pub mod vector;

pub use diagnostics::{divergence_stats, DiagnosticsRecord, DivergenceStats};
pub use error::{Error, Result};
pub use guidance::GuidanceSpec;
pub use lambda_schedule::{ScheduleKind, ScheduleSpec};
pub use sampler::{Method, SamplerConfig, Trajectory};
pub use schedule::NoiseSchedule;
pub use scoremodel::{Component, Condition, MixtureModel};
