//! Log-linear diffusion tensor fit, FA/MD, and site WM-mask presets.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::geometry::DirectionSet;
use crate::phantom::Subject;
use crate::{parallel, Error, MaskVolume, Result};

/// FA and MD from a log-linear least-squares tensor fit.
///
/// Solves for ln(S0) and the six tensor components in one system;
/// eigenvalues are clamped at zero before the scalar maps so noisy
/// voxels cannot produce negative diffusivities.
pub fn tensor_fit(signal: &[f64], dirs: &DirectionSet) -> Result<(f64, f64)> {
    if signal.len() != dirs.len() {
        return Err(Error::invalid("signal/direction length mismatch"));
    }
    if signal.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("nonpositive signal in tensor fit"));
    }
    let n_weighted = dirs.len() - dirs.b0_indices().len();
    if n_weighted < 6 || dirs.b0_indices().is_empty() {
        return Err(Error::invalid(
            "tensor fit needs at least six weighted directions and a b=0",
        ));
    }

    let n = dirs.len();
    let mut a = DMatrix::zeros(n, 7);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let g = dirs.direction(i).as_array();
        let b = dirs.b_value(i);
        a[(i, 0)] = 1.0;
        a[(i, 1)] = -b * g[0] * g[0];
        a[(i, 2)] = -b * g[1] * g[1];
        a[(i, 3)] = -b * g[2] * g[2];
        a[(i, 4)] = -2.0 * b * g[0] * g[1];
        a[(i, 5)] = -2.0 * b * g[0] * g[2];
        a[(i, 6)] = -2.0 * b * g[1] * g[2];
        y[i] = signal[i].ln();
    }
    let svd = a.svd(true, true);
    let x = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::IllConditioned(format!("tensor design: {e}")))?;

    let d = Matrix3::new(x[1], x[4], x[5], x[4], x[2], x[6], x[5], x[6], x[3]);
    let eig = d.symmetric_eigen();
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    Ok(fa_md_from_eigenvalues(&lambda))
}

fn fa_md_from_eigenvalues(lambda: &[f64]) -> (f64, f64) {
    let md = lambda.iter().sum::<f64>() / 3.0;
    let num: f64 = lambda.iter().map(|&l| (l - md) * (l - md)).sum();
    let den: f64 = lambda.iter().map(|&l| l * l).sum();
    let fa = if den > 0.0 {
        (1.5 * num / den).sqrt()
    } else {
        0.0
    };
    (fa, md)
}

/// Site-specific WM-masking rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SitePreset {
    DhcpLike,
    BcpLike,
}

impl SitePreset {
    pub fn for_label(label: &str) -> Result<SitePreset> {
        match label {
            l if l.contains("dhcp") => Ok(SitePreset::DhcpLike),
            l if l.contains("bcp") => Ok(SitePreset::BcpLike),
            other => Err(Error::invalid(format!("unknown site label {other}"))),
        }
    }

    fn admits(&self, fa: f64, md: f64) -> bool {
        match self {
            SitePreset::DhcpLike => fa > 0.3,
            SitePreset::BcpLike => fa > 0.4 || (fa > 0.15 && md > 0.0011),
        }
    }
}

/// FA and MD maps for a subject; voxels where the fit is impossible
/// (nonpositive signal) get FA = MD = 0.
pub fn fa_md_maps(subject: &Subject) -> (crate::ScalarVolume, crate::ScalarVolume) {
    let pairs: Vec<(f64, f64)> = parallel::map_indexed(subject.dwi.n_voxels(), |v| {
        tensor_fit(subject.dwi.voxel(v), &subject.dirs).unwrap_or((0.0, 0.0))
    });
    let dims = subject.dims();
    let vs = subject.dwi.voxel_size_mm();
    let mut fa = crate::ScalarVolume::filled(dims, 1, vs, 0.0);
    let mut md = crate::ScalarVolume::filled(dims, 1, vs, 0.0);
    for (v, (f, m)) in pairs.iter().enumerate() {
        fa.voxel_mut(v)[0] = *f;
        md.voxel_mut(v)[0] = *m;
    }
    (fa, md)
}

/// Evaluation WM mask: the site's FA/MD rule, OR-ed with the known
/// fiber-region layout so partial-volume voxels at region borders are
/// kept.
pub fn wm_mask(subject: &Subject, preset: SitePreset) -> MaskVolume {
    let (fa, md) = fa_md_maps(subject);
    let mut mask = MaskVolume::filled(subject.dims(), 1, subject.dwi.voxel_size_mm(), false);
    for v in 0..mask.n_voxels() {
        let admitted = preset.admits(fa.voxel(v)[0], md.voxel(v)[0]);
        mask.voxel_mut(v)[0] = admitted || subject.wm_mask.voxel(v)[0];
    }
    mask
}

/// Mean FA over the subject's own WM mask.
pub fn mean_wm_fa(subject: &Subject) -> Result<f64> {
    let (fa, _) = fa_md_maps(subject);
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in 0..fa.n_voxels() {
        if subject.wm_mask.voxel(v)[0] {
            sum += fa.voxel(v)[0];
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("subject has no WM voxels"));
    }
    Ok(sum / n as f64)
}
