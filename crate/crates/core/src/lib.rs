//! Data-driven stabilization of discrete-time single-input LTI systems
//! under logarithmically quantized state feedback.
//!
//! The pipeline: collect open-loop trajectory data with a quadratic
//! noise bound, form the consistency set of state matrices, synthesize
//! a feedback gain together with the coarsest quantization density that
//! stabilizes every member of the set, and independently verify the
//! result with H-infinity oracles and sampled membership checks.

pub mod adversarial;
pub mod certificates;
pub mod data;
pub mod error;
pub mod experiments;
pub mod io;
pub mod lti;
pub mod sdp;

pub use error::{Error, Result};
