//! Simulation and analysis of robot co-manipulated vertebra drilling.
//!
//! The crate covers the whole pipeline:
//!
//! - [`frames`]: rigid transforms and the robot/platform/camera/vertebra chain.
//! - [`streams`]: pose and wrench streams, CSV bundles, temporal alignment.
//! - [`metrics`]: per-sample position and orientation error against a plan.
//! - [`simproto`]: deterministic simulator of the drilling protocol.
//! - [`stats`]: boxplot and radar summaries over a population of drillings.
//! - [`config`]: the JSON configuration that drives all of the above.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod frames;
pub mod io;
pub mod labels;
pub mod metrics;
pub mod simproto;
pub mod stats;
pub mod streams;

pub use frames::{FrameId, RigidTransform, RotationMatrix, UnitQuaternion};
pub use labels::{Side, Vertebra};
