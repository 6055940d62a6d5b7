//! Real symmetric (even-order) spherical harmonic basis.
//!
//! Convention: for even l and m = −l..l,
//! `Y_{l,m} = √2·N_l^|m|·P_l^|m|(cos θ)·sin(|m|φ)` for m < 0,
//! `N_l^0·P_l(cos θ)` for m = 0, and
//! `√2·N_l^m·P_l^m(cos θ)·cos(mφ)` for m > 0, with
//! `N_l^m = √((2l+1)/(4π)·(l−m)!/(l+m)!)` and Condon–Shortley phase
//! carried by [`assoc_legendre`]. Coefficient j for (l,m) sits at
//! `l(l+1)/2 + m`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::direction::Direction;
use super::legendre::assoc_legendre;
use crate::error::{Error, Result};

/// Number of even-l basis functions up to `lmax`.
pub fn n_coeffs(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 2) / 2
}

/// Flat index of (l, m), l even, |m| ≤ l.
pub fn index_of(l: usize, m: i64) -> usize {
    debug_assert!(l % 2 == 0 && m.unsigned_abs() as usize <= l);
    (l * (l + 1) / 2).wrapping_add_signed(m as isize)
}

/// Inverse of [`index_of`].
pub fn lm_of(index: usize) -> (usize, i64) {
    let mut l = 0usize;
    while l * (l + 1) / 2 + l < index {
        l += 2;
    }
    (l, index as i64 - (l * (l + 1) / 2) as i64)
}

fn normalization(l: usize, m: usize) -> f64 {
    // (l-m)!/(l+m)! as a running product: 1/∏_{k=l-m+1..l+m} k
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * ratio).sqrt()
}

/// Basis function (l, m) at one direction.
pub fn sh_value(l: usize, m: i64, dir: &Direction) -> f64 {
    let (ct, phi) = dir.angles();
    let ma = m.unsigned_abs() as usize;
    let nlm = normalization(l, ma);
    let plm = assoc_legendre(l, ma, ct);
    match m.cmp(&0) {
        std::cmp::Ordering::Less => std::f64::consts::SQRT_2 * nlm * plm * (ma as f64 * phi).sin(),
        std::cmp::Ordering::Equal => nlm * plm,
        std::cmp::Ordering::Greater => {
            std::f64::consts::SQRT_2 * nlm * plm * (ma as f64 * phi).cos()
        }
    }
}

/// One row of the design matrix: all basis functions at `dir`.
pub fn basis_row(lmax: usize, dir: &Direction) -> Vec<f64> {
    let mut row = Vec::with_capacity(n_coeffs(lmax));
    for l in (0..=lmax).step_by(2) {
        for m in -(l as i64)..=(l as i64) {
            row.push(sh_value(l, m, dir));
        }
    }
    row
}

/// Design matrix, n_dirs × n_coeffs.
pub fn basis_matrix(dirs: &[Direction], lmax: usize) -> Result<DMatrix<f64>> {
    if lmax % 2 != 0 {
        return Err(Error::invalid(format!("lmax must be even, got {lmax}")));
    }
    if dirs.is_empty() {
        return Err(Error::invalid("need at least one direction"));
    }
    let nc = n_coeffs(lmax);
    let mut b = DMatrix::zeros(dirs.len(), nc);
    for (i, d) in dirs.iter().enumerate() {
        for (j, v) in basis_row(lmax, d).into_iter().enumerate() {
            b[(i, j)] = v;
        }
    }
    Ok(b)
}

/// Even-order SH coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShCoeffs {
    lmax: usize,
    coeffs: Vec<f64>,
}

impl ShCoeffs {
    pub fn new(lmax: usize, coeffs: Vec<f64>) -> Result<Self> {
        if lmax % 2 != 0 {
            return Err(Error::invalid(format!("lmax must be even, got {lmax}")));
        }
        if coeffs.len() != n_coeffs(lmax) {
            return Err(Error::invalid(format!(
                "lmax {} needs {} coefficients, got {}",
                lmax,
                n_coeffs(lmax),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite SH coefficient"));
        }
        Ok(Self { lmax, coeffs })
    }

    pub fn zeros(lmax: usize) -> Self {
        Self {
            lmax,
            coeffs: vec![0.0; n_coeffs(lmax)],
        }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn get(&self, l: usize, m: i64) -> f64 {
        self.coeffs[index_of(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i64, v: f64) {
        self.coeffs[index_of(l, m)] = v;
    }

    /// ∫ f dΩ = √(4π)·c_00.
    pub fn integral(&self) -> f64 {
        2.0 * std::f64::consts::PI.sqrt() * self.coeffs[0]
    }

    /// Truncate or zero-pad to another even order.
    pub fn resized(&self, lmax: usize) -> Self {
        let mut out = Self::zeros(lmax);
        let n = out.coeffs.len().min(self.coeffs.len());
        out.coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        out
    }
}

/// Least-squares SH fit, optionally Tikhonov-damped: minimizes
/// ‖B·c − signal‖² + reg²·‖c‖².
pub fn fit_sh(signal: &[f64], dirs: &[Direction], lmax: usize, reg: f64) -> Result<ShCoeffs> {
    if signal.len() != dirs.len() {
        return Err(Error::invalid(format!(
            "{} samples but {} directions",
            signal.len(),
            dirs.len()
        )));
    }
    let b = basis_matrix(dirs, lmax)?;
    let svd = b.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&sv| sv >= 1e-10 * smax)
        .count();
    if reg == 0.0 && rank < n_coeffs(lmax) {
        return Err(Error::IllConditioned(format!(
            "SH design matrix has rank {rank} < {} for lmax {lmax} with {} directions",
            n_coeffs(lmax),
            dirs.len()
        )));
    }
    let u = svd.u.as_ref().expect("svd computed with u");
    let vt = svd.v_t.as_ref().expect("svd computed with v_t");
    let s = DVector::from_row_slice(signal);
    let uts = u.transpose() * s;
    let mut filtered = DVector::zeros(svd.singular_values.len());
    for i in 0..svd.singular_values.len() {
        let sv = svd.singular_values[i];
        filtered[i] = sv * uts[i] / (sv * sv + reg * reg);
    }
    let c = vt.transpose() * filtered;
    ShCoeffs::new(lmax, c.as_slice().to_vec())
}

/// Evaluate coefficients at many directions.
pub fn eval_sh(coeffs: &ShCoeffs, dirs: &[Direction]) -> Vec<f64> {
    dirs.iter().map(|d| eval_sh_single(coeffs, d)).collect()
}

/// Evaluate coefficients at one direction.
pub fn eval_sh_single(coeffs: &ShCoeffs, dir: &Direction) -> f64 {
    basis_row(coeffs.lmax(), dir)
        .iter()
        .zip(coeffs.coeffs())
        .map(|(b, c)| b * c)
        .sum()
}
