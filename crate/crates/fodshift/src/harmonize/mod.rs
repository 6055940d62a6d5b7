//! Method-of-Moments harmonization: spherical mean/variance maps,
//! cross-subject medians, Gaussian smoothing, and the per-voxel
//! affine signal mapping.

mod mapping;
mod moments;
mod smooth;

pub use mapping::{
    apply_mapping, apply_to_subject, b0_mean_volume, derive_mapping, six_direction_indices,
    six_direction_volume, MomMapping, ALPHA_MAX, ALPHA_MIN, DEFAULT_EPS, MOM_SHELL_B,
};
pub use moments::{median_moment_images, spherical_moments, MomentMaps};
pub use smooth::gaussian_smooth;

use crate::error::{Error, Result};
use crate::phantom::Subject;

/// Width (in voxels) of the Gaussian applied to reference moment maps.
pub const REFERENCE_SMOOTH_SIGMA: f64 = 1.0;

/// Smoothed median moment maps over a set of same-protocol subjects;
/// this is the reference each site contributes to mapping derivation.
pub fn reference_maps(subjects: &[Subject]) -> Result<MomentMaps> {
    if subjects.is_empty() {
        return Err(Error::invalid("reference maps need at least one subject"));
    }
    let mut per_subject = Vec::with_capacity(subjects.len());
    for s in subjects {
        let six = six_direction_indices(s)?;
        per_subject.push(spherical_moments(&six_direction_volume(s, &six)?)?);
    }
    let median = median_moment_images(&per_subject)?;
    Ok(MomentMaps {
        mean: gaussian_smooth(&median.mean, REFERENCE_SMOOTH_SIGMA)?,
        var: gaussian_smooth(&median.var, REFERENCE_SMOOTH_SIGMA)?,
    })
}
