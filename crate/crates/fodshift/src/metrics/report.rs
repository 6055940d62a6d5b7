//! Agreement rate, angular error, AFD, and the tabular report.

use super::peaks::{extract_peaks, match_peaks, PeakSet};
use crate::geometry::{n_coeffs, ShCoeffs, SphereTessellation};
use crate::{parallel, Error, MaskVolume, Result, Volume};

/// Total FOD integral.
pub fn afd(fod: &ShCoeffs) -> f64 {
    2.0 * std::f64::consts::PI.sqrt() * fod.coeffs()[0]
}

/// Per-voxel peak sets of an FOD volume; voxels outside the mask get
/// empty sets.
pub fn extract_volume_peaks(
    vol: &Volume<f64>,
    lmax: usize,
    mask: &MaskVolume,
    tess: &SphereTessellation,
    abs_threshold: f64,
) -> Result<Vec<PeakSet>> {
    if vol.n_channels() != n_coeffs(lmax) {
        return Err(Error::invalid("channel count does not match lmax"));
    }
    if mask.dims() != vol.dims() {
        return Err(Error::invalid("mask dimensions do not match the volume"));
    }
    Ok(parallel::map_indexed(vol.n_voxels(), |v| {
        if !mask.voxel(v)[0] {
            return PeakSet::default();
        }
        let fod = ShCoeffs::new(lmax, vol.voxel(v).to_vec()).expect("channel count checked");
        extract_peaks(&fod, tess, abs_threshold, 3)
    }))
}

/// Percentage of mask voxels with GT peak count `k` whose predicted
/// count is also `k`. None when the class is empty.
pub fn agreement_rate(
    pred: &[PeakSet],
    gt: &[PeakSet],
    mask: &MaskVolume,
    k: usize,
) -> Option<f64> {
    let mut total = 0usize;
    let mut agree = 0usize;
    for v in 0..mask.n_voxels() {
        if !mask.voxel(v)[0] || gt[v].len() != k {
            continue;
        }
        total += 1;
        if pred[v].len() == k {
            agree += 1;
        }
    }
    (total > 0).then(|| 100.0 * agree as f64 / total as f64)
}

/// Mean matched-pair angle over GT class-k voxels: pairs are averaged
/// within each voxel first, then voxels are averaged with equal
/// weight. Voxels with no matched pairs drop out.
pub fn angular_error(pred: &[PeakSet], gt: &[PeakSet], mask: &MaskVolume, k: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in 0..mask.n_voxels() {
        if !mask.voxel(v)[0] || gt[v].len() != k {
            continue;
        }
        let pairs = match_peaks(&pred[v], &gt[v]);
        if pairs.is_empty() {
            continue;
        }
        sum += pairs.iter().map(|(_, _, a)| a).sum::<f64>() / pairs.len() as f64;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Mean absolute AFD difference over the mask.
pub fn afd_error(pred_vol: &Volume<f64>, gt_vol: &Volume<f64>, mask: &MaskVolume) -> Result<f64> {
    if pred_vol.dims() != gt_vol.dims() || pred_vol.dims() != mask.dims() {
        return Err(Error::invalid("volume dimensions differ"));
    }
    let scale = 2.0 * std::f64::consts::PI.sqrt();
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in 0..mask.n_voxels() {
        if !mask.voxel(v)[0] {
            continue;
        }
        sum += scale * (pred_vol.voxel(v)[0] - gt_vol.voxel(v)[0]).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("empty mask"));
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub ar: Option<f64>,
    pub ae: Option<f64>,
    pub n_voxels: usize,
}

/// One evaluated method on one test set, Table-style.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub site: String,
    pub experiment: String,
    pub method: String,
    pub n_target_subjects: Option<usize>,
    pub classes: Vec<ClassMetrics>,
    pub dafd: f64,
}

/// AR/AE for classes 1..=3 plus the mask-wide AFD error, from
/// already-extracted peak sets.
pub fn compute_report(
    pred_vol: &Volume<f64>,
    gt_vol: &Volume<f64>,
    pred_peaks: &[PeakSet],
    gt_peaks: &[PeakSet],
    mask: &MaskVolume,
    site: &str,
    experiment: &str,
    method: &str,
    n_target_subjects: Option<usize>,
) -> Result<MetricsReport> {
    let mut classes = Vec::new();
    for k in 1..=3 {
        let n_voxels = (0..mask.n_voxels())
            .filter(|&v| mask.voxel(v)[0] && gt_peaks[v].len() == k)
            .count();
        classes.push(ClassMetrics {
            class: k,
            ar: agreement_rate(pred_peaks, gt_peaks, mask, k),
            ae: angular_error(pred_peaks, gt_peaks, mask, k),
            n_voxels,
        });
    }
    Ok(MetricsReport {
        site: site.into(),
        experiment: experiment.into(),
        method: method.into(),
        n_target_subjects,
        classes,
        dafd: afd_error(pred_vol, gt_vol, mask)?,
    })
}

fn fmt2(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "-".into(),
    }
}

pub const CSV_HEADER: &str =
    "site,experiment,method,n_target_subjects,class,ar,ae,dafd,n_voxels";

impl MetricsReport {
    /// One CSV row per fiber class, matching [`CSV_HEADER`].
    pub fn csv_rows(&self) -> Vec<String> {
        let nts = self
            .n_target_subjects
            .map(|n| n.to_string())
            .unwrap_or_default();
        self.classes
            .iter()
            .map(|c| {
                format!(
                    "{},{},{},{},{},{},{},{:.4},{}",
                    self.site,
                    self.experiment,
                    self.method,
                    nts,
                    c.class,
                    fmt2(c.ar),
                    fmt2(c.ae),
                    self.dafd,
                    c.n_voxels
                )
            })
            .collect()
    }
}

/// Markdown table over several reports: one row per method, AR/AE per
/// class and the AFD error, two decimals throughout.
pub fn markdown_table(reports: &[MetricsReport]) -> String {
    let mut out = String::from(
        "| method | n | AR 1F | AR 2F | AR 3F | AE 1F | AE 2F | AE 3F | dAFD |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for r in reports {
        let nts = r
            .n_target_subjects
            .map(|n| n.to_string())
            .unwrap_or_else(|| "-".into());
        let cell = |k: usize, ae: bool| {
            r.classes
                .iter()
                .find(|c| c.class == k)
                .map(|c| fmt2(if ae { c.ae } else { c.ar }))
                .unwrap_or_else(|| "-".into())
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {:.2} |\n",
            r.method,
            nts,
            cell(1, false),
            cell(2, false),
            cell(3, false),
            cell(1, true),
            cell(2, true),
            cell(3, true),
            r.dafd
        ));
    }
    out
}
