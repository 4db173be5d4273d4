//! Dense linear algebra, spectra, observability and fixed-step integration.

mod eigen;
mod matrix;
mod observability;
mod ode;

pub use eigen::{eigenvalues, max_real_eig, Eigenvalue, MAX_QR_SWEEPS};
pub use matrix::Matrix;
pub use observability::{
    matrix_rank, observability_matrix, observability_rank, observability_rank_with_tol,
    DEFAULT_RANK_TOL,
};
pub use ode::{integrate, rk4_step, OdeFunction, Rk4};
