//! Contrastive goal-conditioned reinforcement learning with deep residual
//! actor and critic networks, analytic goal-reaching environments, and an
//! experiment harness for depth/width/batch scaling studies.

pub mod arch;
pub mod crl;
pub mod envs;
pub mod experiments;
mod error;
pub mod nn;
pub mod replay;
pub mod trainer;
pub mod viz;
mod scalar;
pub mod table;

pub use arch::{build_network, param_count, BuiltNetwork, NetworkSpec};
pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};
