//! Spectral and control-theoretic analysis of the Grushin operator
//! `d_t - d_x^2 - |x|^{2 gamma} d_y^2` on `(-1,1) x (0,1)`.

pub mod error;
pub mod evolution;
pub mod bounds;
pub mod carleman;
pub mod cli;
pub mod control;
pub mod grid;
pub mod observability;
pub mod spectral;
pub mod tridiag;

pub use error::{GrushinError, Result};
pub use grid::{make_grid, Grid1D, ProblemConfig, TimeGrid};
pub use spectral::{assemble_mode_operator, first_k_eigenpairs, ground_eigenpair, EigenPair, ModeOperator};
