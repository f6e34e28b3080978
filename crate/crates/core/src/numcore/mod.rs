//! Dense complex linear algebra, adaptive Runge-Kutta integration and
//! adaptive quadrature used by every other module.

mod cheb;
mod linalg;
mod matrix;
mod quad;
mod rk;

pub use cheb::{
    cheb_coefficients, cheb_derivative, cheb_eval, cheb_tail, lobatto_nodes, MatrixInterpolant,
};
pub use linalg::{
    det, eigenvalues, expm, inverse, lu_logdet, principal_angle, solve, thin_qr, LogDet, Lu,
    SINGULAR_PIVOT_RATIO,
};
pub use matrix::{matmul_into, CMatrix};
pub use quad::{quad, quad_pieces, quad_with, QuadOptions, QuadResult};
pub use rk::{rk_integrate, Dopri5, RkOptions, RkSolution, RkStats, STEP_UNDERFLOW_RATIO};

pub use num_complex::Complex64;
