//! Gold-standard split-half: partition every shell into two
//! interleaved halves with balanced angular coverage, then run the
//! constrained deconvolution on each half independently.

use crate::csd::fit::{CsdProblem, CsdVolume};
use crate::csd::response::subject_response;
use crate::error::{Error, Result};
use crate::geometry::{make_hemisphere, n_coeffs, DirectionSet};
use crate::phantom::Subject;

/// Disjoint per-shell halves of a direction set, as measurement
/// indices into the original ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub half_a: Vec<usize>,
    pub half_b: Vec<usize>,
}

/// Order one shell's directions by greedy farthest-axis selection
/// (electrostatic-style spread), then hand them out alternately. The
/// two halves then interleave across the sphere instead of clumping.
fn split_shell(dirs: &DirectionSet, shell: &[usize], first_to_a: bool) -> (Vec<usize>, Vec<usize>) {
    let mut remaining: Vec<usize> = shell.to_vec();
    let mut ordered = Vec::with_capacity(shell.len());
    if !remaining.is_empty() {
        ordered.push(remaining.remove(0));
    }
    while !remaining.is_empty() {
        let mut best = 0;
        let mut best_gap = -1.0;
        for (k, &cand) in remaining.iter().enumerate() {
            let gap = ordered
                .iter()
                .map(|&o| dirs.direction(cand).axis_angle_to(&dirs.direction(o)))
                .fold(f64::INFINITY, f64::min);
            if gap > best_gap {
                best_gap = gap;
                best = k;
            }
        }
        ordered.push(remaining.remove(best));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (k, idx) in ordered.into_iter().enumerate() {
        if (k % 2 == 0) == first_to_a {
            a.push(idx);
        } else {
            b.push(idx);
        }
    }
    (a, b)
}

/// Partition all shells (b = 0 included). The seed's low bit picks
/// which half receives the first direction of each shell, so the two
/// roles swap under reseeding but the construction stays
/// deterministic.
pub fn split_indices(dirs: &DirectionSet, seed: u64) -> Result<SplitIndices> {
    let first_to_a = seed & 1 == 0;
    let mut half_a = Vec::new();
    let mut half_b = Vec::new();

    let b0 = dirs.b0_indices();
    for (k, idx) in b0.iter().enumerate() {
        if (k % 2 == 0) == first_to_a {
            half_a.push(*idx);
        } else {
            half_b.push(*idx);
        }
    }
    for b in dirs.shells() {
        let shell = dirs.shell_indices(b, 50.0);
        if shell.len() < 2 {
            return Err(Error::invalid(format!(
                "shell b = {b} has {} directions, cannot split",
                shell.len()
            )));
        }
        let (a, bb) = split_shell(dirs, &shell, first_to_a);
        half_a.extend(a);
        half_b.extend(bb);
    }
    half_a.sort_unstable();
    half_b.sort_unstable();
    Ok(SplitIndices { half_a, half_b })
}

/// Gold-standard FOD pair from two mutually exclusive halves of the
/// full protocol, fitted at the subject's GT order over its WM mask.
pub fn gold_standard_split(subject: &Subject, seed: u64) -> Result<(CsdVolume, CsdVolume)> {
    let lmax = subject.gt_lmax;
    let split = split_indices(&subject.dirs, seed)?;
    let weighted = |idx: &[usize]| {
        idx.iter()
            .filter(|&&i| subject.dirs.b_value(i) > 1e-6)
            .count()
    };
    for (name, half) in [("A", &split.half_a), ("B", &split.half_b)] {
        if weighted(half) < n_coeffs(lmax) + 1 {
            return Err(Error::invalid(format!(
                "half {name} has {} weighted measurements, need at least {}",
                weighted(half),
                n_coeffs(lmax) + 1
            )));
        }
    }
    let response = subject_response(subject, lmax)?;
    let tess = make_hemisphere(2)?;
    let mut out = Vec::with_capacity(2);
    for half in [&split.half_a, &split.half_b] {
        let dirs = subject.dirs.subset(half)?;
        let problem = CsdProblem::new(&dirs, &response, lmax, &tess)?;
        let sub = restrict_channels(&subject.dwi, half);
        out.push(problem.fit_volume(&sub, Some(&subject.wm_mask))?);
    }
    let b = out.pop().expect("two fits");
    let a = out.pop().expect("two fits");
    Ok((a, b))
}

/// Copy a channel subset out of a volume, preserving voxel order.
pub fn restrict_channels(
    dwi: &crate::volume::Volume<f64>,
    indices: &[usize],
) -> crate::volume::Volume<f64> {
    let mut out = crate::volume::Volume::filled(
        dwi.dims(),
        indices.len(),
        dwi.voxel_size_mm(),
        0.0,
    );
    for v in 0..dwi.n_voxels() {
        let src = dwi.voxel(v);
        let dst = out.voxel_mut(v);
        for (k, &i) in indices.iter().enumerate() {
            dst[k] = src[i];
        }
    }
    out
}
