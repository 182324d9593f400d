//! Post-hoc analysis: critic energy grids, embedding PCA, residual-branch
//! norms, rollout traces and SVG plots of CSV outputs.

mod pca;
mod qgrid;
mod resnorm;
mod svg;
mod trace;

pub use pca::{jacobi_eigen, pca_project, PcaResult, SymmetricEigen, JACOBI_TOL};
pub use qgrid::{export_q_grid, grid_points, q_grid_table, QCell};
pub use resnorm::{residual_norm_profile, residual_norm_table, ResidualNorms};
pub use svg::{emit_plot, AxesSpec, PlotKind};
pub use trace::{embedding_pca, pca_table, trace_table};
