//! Per-voxel spherical moments of the six-direction DWI signal and
//! their voxelwise median across subjects.

use crate::error::{Error, Result};
use crate::volume::{ScalarVolume, Volume};

/// Per-voxel spherical mean and variance (signal units, units²).
#[derive(Debug, Clone)]
pub struct MomentMaps {
    pub mean: ScalarVolume,
    pub var: ScalarVolume,
}

impl MomentMaps {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.mean.dims()
    }
}

/// Arithmetic mean and population variance (divide by 6) of the six
/// values in each voxel.
pub fn spherical_moments(dwi_six: &Volume<f64>) -> Result<MomentMaps> {
    if dwi_six.n_channels() != 6 {
        return Err(Error::invalid(format!(
            "spherical moments are defined on the six selected directions, got {} channels",
            dwi_six.n_channels()
        )));
    }
    let dims = dwi_six.dims();
    let vs = dwi_six.voxel_size_mm();
    let mut mean = ScalarVolume::filled(dims, 1, vs, 0.0);
    let mut var = ScalarVolume::filled(dims, 1, vs, 0.0);
    for v in 0..dwi_six.n_voxels() {
        let s = dwi_six.voxel(v);
        let m = s.iter().sum::<f64>() / 6.0;
        let p = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 6.0;
        mean.voxel_mut(v)[0] = m;
        var.voxel_mut(v)[0] = p;
    }
    Ok(MomentMaps { mean, var })
}

/// Voxel-wise median across subjects, each moment independently. Even
/// counts take the midpoint of the two central values.
pub fn median_moment_images(subjects: &[MomentMaps]) -> Result<MomentMaps> {
    let first = subjects
        .first()
        .ok_or_else(|| Error::invalid("median of zero subjects"))?;
    let dims = first.dims();
    if subjects.iter().any(|s| s.dims() != dims) {
        return Err(Error::invalid("moment maps have mismatched dims"));
    }
    let vs = first.mean.voxel_size_mm();
    let mut mean = ScalarVolume::filled(dims, 1, vs, 0.0);
    let mut var = ScalarVolume::filled(dims, 1, vs, 0.0);
    let mut scratch = Vec::with_capacity(subjects.len());
    for v in 0..first.mean.n_voxels() {
        for (out, pick) in [
            (&mut mean, 0usize),
            (&mut var, 1usize),
        ] {
            scratch.clear();
            for s in subjects {
                let map = if pick == 0 { &s.mean } else { &s.var };
                scratch.push(map.voxel(v)[0]);
            }
            scratch.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = scratch.len();
            out.voxel_mut(v)[0] = if n % 2 == 1 {
                scratch[n / 2]
            } else {
                0.5 * (scratch[n / 2 - 1] + scratch[n / 2])
            };
        }
    }
    Ok(MomentMaps { mean, var })
}
