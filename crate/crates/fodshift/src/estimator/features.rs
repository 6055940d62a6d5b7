//! Per-voxel input features for the regressor.
//!
//! Each voxel contributes the order-2 SH fit of its b0-normalized
//! signal on six optimal gradient directions (6 coefficients), and the
//! feature vector concatenates those blocks over the 3x3x3
//! neighborhood, zero-padded at the volume border. Neighbor blocks are
//! ordered by offset with dz slowest and dx fastest, so the center
//! voxel occupies block 13.

use nalgebra::DVector;
use ndarray::{Array2, ArrayView1};

use crate::geometry::{basis_matrix, n_coeffs, DirectionSet};
use crate::harmonize::six_direction_indices;
use crate::phantom::Subject;
use crate::{parallel, Error, Result, Volume};

/// SH order for the per-voxel signal fit.
pub const FEATURE_LMAX: usize = 2;

/// Feature vector length: 27 neighbors times 6 SH coefficients.
pub const N_FEATURES: usize = 27 * 6;

/// The six optimal directions of the subject's b=1000 shell, the same
/// subset the harmonization stage uses.
pub fn six_directions(subject: &Subject) -> Result<DirectionSet> {
    let idx = six_direction_indices(subject)?;
    subject.dirs.subset(&idx)
}

fn match_channels(subject: &Subject, six: &DirectionSet) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(six.len());
    for i in 0..six.len() {
        let d = six.direction(i);
        let b = six.b_value(i);
        let hit = (0..subject.dirs.len()).find(|&k| {
            (subject.dirs.b_value(k) - b).abs() <= crate::csd::SHELL_TOL
                && subject.dirs.direction(k).axis_angle_to(&d) < 1e-9
        });
        match hit {
            Some(k) => out.push(k),
            None => {
                return Err(Error::invalid(format!(
                    "direction {i} of the feature subset is not in the subject protocol"
                )))
            }
        }
    }
    Ok(out)
}

/// Order-2 SH coefficients of the b0-normalized signal, per voxel.
///
/// Six directions determine the six coefficients exactly, so this is a
/// single precomputed 6x6 solve per voxel. Voxels without positive b0
/// signal get all-zero coefficients.
pub fn sh_feature_volume(subject: &Subject, six: &DirectionSet) -> Result<Volume<f64>> {
    let nc = n_coeffs(FEATURE_LMAX);
    if six.len() != nc {
        return Err(Error::invalid(format!(
            "feature subset has {} directions, need {nc}",
            six.len()
        )));
    }
    let channels = match_channels(subject, six)?;
    let b0 = subject.dirs.b0_indices();
    if b0.is_empty() {
        return Err(Error::invalid("subject protocol has no b=0 measurement"));
    }
    let basis = basis_matrix(six.directions(), FEATURE_LMAX)?;
    let inv = basis.lu().try_inverse().ok_or_else(|| {
        Error::IllConditioned("six-direction order-2 basis is singular".into())
    })?;

    let dims = subject.dims();
    let rows: Vec<Vec<f64>> = parallel::map_indexed(subject.dwi.n_voxels(), |v| {
        let meas = subject.dwi.voxel(v);
        let s0 = b0.iter().map(|&i| meas[i]).sum::<f64>() / b0.len() as f64;
        if s0 <= 0.0 {
            return vec![0.0; nc];
        }
        let s = DVector::from_iterator(nc, channels.iter().map(|&i| meas[i] / s0));
        (&inv * s).iter().copied().collect()
    });
    let mut out = Volume::filled(dims, nc, subject.dwi.voxel_size_mm(), 0.0);
    for (v, row) in rows.iter().enumerate() {
        out.voxel_mut(v).copy_from_slice(row);
    }
    Ok(out)
}

/// Full 162-value feature volume: neighborhood-concatenated SH blocks.
pub fn featurize(subject: &Subject, six: &DirectionSet) -> Result<Volume<f64>> {
    let sh = sh_feature_volume(subject, six)?;
    let nc = sh.n_channels();
    let (nx, ny, nz) = sh.dims();
    let mut out = Volume::filled(sh.dims(), 27 * nc, sh.voxel_size_mm(), 0.0);
    for v in 0..sh.n_voxels() {
        let (x, y, z) = sh.coords(v);
        let fv = out.voxel_mut(v);
        let mut block = 0;
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (qx, qy, qz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    let inside = qx >= 0
                        && qy >= 0
                        && qz >= 0
                        && (qx as usize) < nx
                        && (qy as usize) < ny
                        && (qz as usize) < nz;
                    if inside {
                        let nb = sh.at(qx as usize, qy as usize, qz as usize);
                        fv[block * nc..(block + 1) * nc].copy_from_slice(nb);
                    }
                    block += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Feature and target columns (one sample per column) for the WM
/// voxels of one subject.
pub fn wm_columns(subject: &Subject, six: &DirectionSet) -> Result<(Array2<f64>, Array2<f64>)> {
    let feats = featurize(subject, six)?;
    let d_in = feats.n_channels();
    let d_out = subject.gt_fod.n_channels();
    let wm: Vec<usize> = (0..feats.n_voxels())
        .filter(|&v| subject.wm_mask.voxel(v)[0])
        .collect();
    let mut x = Array2::zeros((d_in, wm.len()));
    let mut y = Array2::zeros((d_out, wm.len()));
    for (c, &v) in wm.iter().enumerate() {
        x.column_mut(c).assign(&ArrayView1::from(feats.voxel(v)));
        y.column_mut(c).assign(&ArrayView1::from(subject.gt_fod.voxel(v)));
    }
    Ok((x, y))
}
