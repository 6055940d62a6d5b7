//! Constrained spherical deconvolution: analytic response functions,
//! the convex fitting problem, and the gold-standard split-half
//! construction.

mod fit;
mod qp;
mod response;
mod split;

pub use fit::{csd_fit, CsdFit, CsdProblem, CsdVolume, DEFAULT_MAX_ITER};
pub use qp::{solve_qp, QpSolution};
pub use response::{response_from_tensor, subject_response, ResponseFunction, SHELL_TOL};
pub use split::{gold_standard_split, restrict_channels, split_indices, SplitIndices};
