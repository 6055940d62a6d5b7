//! Directions on the unit sphere, the real symmetric spherical
//! harmonic basis, icosahedral tessellations, and gradient-subset
//! selection.

mod direction;
mod legendre;
mod sh;
mod subset;
mod tessellation;

pub use direction::{Direction, DirectionSet};
pub use legendre::{assoc_legendre, legendre};
pub use sh::{
    basis_matrix, basis_row, eval_sh, eval_sh_single, fit_sh, index_of, lm_of, n_coeffs, sh_value,
    ShCoeffs,
};
pub use subset::{select_optimal_directions, select_optimal_indices};
pub use tessellation::{fibonacci_sphere, make_hemisphere, make_tessellation, SphereTessellation};
