//! Separable 3D Gaussian smoothing with border renormalization, so
//! constant maps pass through unchanged at any σ.

use crate::error::{Error, Result};
use crate::volume::ScalarVolume;

/// Kernel truncated at ⌈3σ⌉ taps per side and renormalized to sum 1.
/// σ = 0 is the identity.
pub fn gaussian_smooth(map: &ScalarVolume, sigma_vox: f64) -> Result<ScalarVolume> {
    if map.n_channels() != 1 {
        return Err(Error::invalid("gaussian_smooth expects a scalar map"));
    }
    if !(sigma_vox >= 0.0) {
        return Err(Error::invalid(format!("negative sigma {sigma_vox}")));
    }
    if sigma_vox == 0.0 {
        return Ok(map.clone());
    }
    let radius = (3.0 * sigma_vox).ceil() as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for k in -radius..=radius {
        kernel.push((-(k as f64).powi(2) / (2.0 * sigma_vox * sigma_vox)).exp());
    }
    let total: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= total;
    }

    let (nx, ny, nz) = map.dims();
    let sizes = [nx, ny, nz];
    let mut data = map.clone();
    for axis in 0..3 {
        let mut next = data.clone();
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let coords = [x as i64, y as i64, z as i64];
                    let mut acc = 0.0;
                    let mut wsum = 0.0;
                    for (ki, k) in (-radius..=radius).enumerate() {
                        let mut c = coords;
                        c[axis] += k;
                        if c[axis] < 0 || c[axis] >= sizes[axis] as i64 {
                            continue;
                        }
                        let w = kernel[ki];
                        acc += w * data.at(c[0] as usize, c[1] as usize, c[2] as usize)[0];
                        wsum += w;
                    }
                    next.at_mut(x, y, z)[0] = acc / wsum;
                }
            }
        }
        data = next;
    }
    Ok(data)
}
