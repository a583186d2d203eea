//! Shared numerical kernels: grids, quadrature, real and complex root
//! finding, dense eigenvalue computation.

mod complex_roots;
mod eigen;
mod grid;
mod quadrature;
mod roots;

pub use complex_roots::{refine_complex_root, winding_count, DEFAULT_BOUNDARY_SAMPLES, MAX_BOUNDARY_SAMPLES};
pub use eigen::{
    dense_eigen, exceeds_spectral_abscissa, inverse_iteration, is_metzler, metzler_spectral_abscissa,
    DenseEigen,
};
pub use grid::{Rectangle, SizeGrid};
pub use quadrature::{cumulative_integral, exp_weighted_cumulative, exp_weighted_cumulative_complex, integrate};
pub use roots::{bracketed_root, scan_points, scan_sign_changes};
