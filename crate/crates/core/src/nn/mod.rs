//! Dense-network numerical core: arrays, named parameters, layer kernels,
//! the reverse-mode tape and the Adam optimizer.

mod adam;
mod array;
pub mod ops;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use array::RealArray;
pub use ops::{dense, layer_norm, residual_block, swish, BlockParams, UnitParams, BLOCK_UNITS, LN_EPS};
pub use params::{clip_grad_norm, ParamEntry, ParameterStore};
pub use tape::{GradMode, Layer, Network};
