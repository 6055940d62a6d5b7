//! Per-voxel affine harmonization α·S + β matching target moments to
//! a source reference, plus the subject-level plumbing that selects
//! the six b≈1000 directions and works in b0-normalized signal space.

use crate::error::{Error, Result};
use crate::geometry::select_optimal_indices;
use crate::harmonize::moments::MomentMaps;
use crate::phantom::Subject;
use crate::volume::{ScalarVolume, Volume};

pub const ALPHA_MIN: f64 = 0.1;
pub const ALPHA_MAX: f64 = 10.0;
/// Default variance guard for derive_mapping.
pub const DEFAULT_EPS: f64 = 1e-6;
/// Shell used for moment computation on every site.
pub const MOM_SHELL_B: f64 = 1000.0;

/// Voxel maps of the affine parameters; α dimensionless, β in signal
/// units.
#[derive(Debug, Clone)]
pub struct MomMapping {
    pub alpha: ScalarVolume,
    pub beta: ScalarVolume,
}

/// α = √(var_src/(var_tgt+eps)) clamped to [0.1, 10];
/// β = mean_src − α·mean_tgt. Inputs should already be smoothed
/// median maps.
pub fn derive_mapping(
    target_ref: &MomentMaps,
    source_ref: &MomentMaps,
    eps: f64,
) -> Result<MomMapping> {
    if target_ref.dims() != source_ref.dims() {
        return Err(Error::invalid("reference moment maps have mismatched dims"));
    }
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("negative eps {eps}")));
    }
    let dims = target_ref.dims();
    let vs = target_ref.mean.voxel_size_mm();
    let mut alpha = ScalarVolume::filled(dims, 1, vs, 0.0);
    let mut beta = ScalarVolume::filled(dims, 1, vs, 0.0);
    for v in 0..alpha.n_voxels() {
        let vt = target_ref.var.voxel(v)[0];
        let vsrc = source_ref.var.voxel(v)[0];
        let a = (vsrc / (vt + eps)).sqrt().clamp(ALPHA_MIN, ALPHA_MAX);
        alpha.voxel_mut(v)[0] = a;
        beta.voxel_mut(v)[0] = source_ref.mean.voxel(v)[0] - a * target_ref.mean.voxel(v)[0];
    }
    Ok(MomMapping { alpha, beta })
}

/// out = α·S + β on all six components, floored at 0.
pub fn apply_mapping(dwi_six: &Volume<f64>, mapping: &MomMapping) -> Result<Volume<f64>> {
    if dwi_six.n_channels() != 6 {
        return Err(Error::invalid("apply_mapping expects six channels"));
    }
    if dwi_six.dims() != mapping.alpha.dims() {
        return Err(Error::invalid("mapping dims do not match volume"));
    }
    let mut out = dwi_six.clone();
    for v in 0..out.n_voxels() {
        let a = mapping.alpha.voxel(v)[0];
        let b = mapping.beta.voxel(v)[0];
        for s in out.voxel_mut(v) {
            *s = (a * *s + b).max(0.0);
        }
    }
    Ok(out)
}

/// Measurement indices of the six optimal directions within the
/// subject's b≈1000 shell, in protocol order.
pub fn six_direction_indices(subject: &Subject) -> Result<Vec<usize>> {
    let shell = subject
        .dirs
        .shell_indices(MOM_SHELL_B, crate::csd::SHELL_TOL);
    if shell.len() < 6 {
        return Err(Error::invalid(format!(
            "b≈{MOM_SHELL_B} shell has only {} directions",
            shell.len()
        )));
    }
    let candidates = subject.dirs.subset(&shell)?;
    let picked = select_optimal_indices(&candidates, 6)?;
    Ok(picked.into_iter().map(|i| shell[i]).collect())
}

/// Per-voxel b0 mean of a subject's raw DWI.
pub fn b0_mean_volume(subject: &Subject) -> Result<ScalarVolume> {
    let b0_idx = subject.dirs.b0_indices();
    if b0_idx.is_empty() {
        return Err(Error::invalid("subject has no b=0 measurements"));
    }
    let dims = subject.dwi.dims();
    let mut out = ScalarVolume::filled(dims, 1, subject.dwi.voxel_size_mm(), 0.0);
    for v in 0..subject.dwi.n_voxels() {
        let s = subject.dwi.voxel(v);
        out.voxel_mut(v)[0] = b0_idx.iter().map(|&i| s[i]).sum::<f64>() / b0_idx.len() as f64;
    }
    Ok(out)
}

/// The subject's six selected measurements, b0-normalized, as a
/// 6-channel volume. Voxels with no b0 signal come back zero.
pub fn six_direction_volume(subject: &Subject, six: &[usize]) -> Result<Volume<f64>> {
    if six.len() != 6 {
        return Err(Error::invalid("expected exactly six measurement indices"));
    }
    let b0 = b0_mean_volume(subject)?;
    let dims = subject.dwi.dims();
    let mut out = Volume::filled(dims, 6, subject.dwi.voxel_size_mm(), 0.0);
    for v in 0..out.n_voxels() {
        let denom = b0.voxel(v)[0];
        if !(denom > 0.0) {
            continue;
        }
        let s = subject.dwi.voxel(v);
        for (k, &i) in six.iter().enumerate() {
            out.voxel_mut(v)[k] = s[i] / denom;
        }
    }
    Ok(out)
}

/// Subject copy whose six selected channels carry the harmonized
/// signal, rescaled back to raw units by the voxel's b0 mean.
pub fn apply_to_subject(
    subject: &Subject,
    six: &[usize],
    mapping: &MomMapping,
) -> Result<Subject> {
    let normalized = six_direction_volume(subject, six)?;
    let mapped = apply_mapping(&normalized, mapping)?;
    let b0 = b0_mean_volume(subject)?;
    let mut out = subject.clone();
    for v in 0..out.dwi.n_voxels() {
        let denom = b0.voxel(v)[0];
        if !(denom > 0.0) {
            continue;
        }
        for (k, &i) in six.iter().enumerate() {
            out.dwi.voxel_mut(v)[i] = mapped.voxel(v)[k] * denom;
        }
    }
    Ok(out)
}
