//! Analytic single-fiber response functions via Gauss–Legendre
//! projection of the axially symmetric kernel onto the m = 0
//! harmonics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::legendre;
use crate::phantom::Subject;

/// Shells closer than this (s/mm²) are treated as the same shell.
pub const SHELL_TOL: f64 = 50.0;
const GL_POINTS: usize = 64;

/// Per-shell rotational harmonic coefficients of the WM kernel plus
/// the isotropic compartment attenuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFunction {
    pub shells: Vec<f64>,
    /// wm[s][k] = r_l for l = 2k on shell s.
    pub wm: Vec<Vec<f64>>,
    pub iso: Vec<f64>,
    pub lmax: usize,
}

impl ResponseFunction {
    pub fn validate(&self) -> Result<()> {
        if self.shells.len() != self.wm.len() || self.shells.len() != self.iso.len() {
            return Err(Error::invalid("response shell bookkeeping mismatch"));
        }
        for (s, rl) in self.wm.iter().enumerate() {
            if rl.len() != self.lmax / 2 + 1 {
                return Err(Error::invalid("response order mismatch"));
            }
            if !(rl[0] > 0.0) || rl.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "invalid r_0 on shell {} (b = {})",
                    s, self.shells[s]
                )));
            }
        }
        Ok(())
    }

    pub fn shell_index(&self, b: f64) -> Option<usize> {
        self.shells.iter().position(|&s| (s - b).abs() <= SHELL_TOL)
    }

    /// r_l on a shell by index; l must be even and ≤ lmax.
    pub fn rl(&self, shell: usize, l: usize) -> f64 {
        self.wm[shell][l / 2]
    }

    /// Effective response for fitting in the apodized FOD basis. With
    /// the window w_l = exp(−a·l(l+1)) applied to an FOD h = W·f, the
    /// signal obeys s = conv(r/w)(h), so dividing each r_l by w_l
    /// makes the fitted coefficients land directly in the windowed
    /// space the ground-truth FODs use. A pure delta is heavily
    /// clipped by hard non-negativity at band limit 8 (its integral
    /// inflates by ~3.5%); its windowed image is nearly feasible, so
    /// the bias disappears.
    pub fn apodized_basis(&self, apodization: f64) -> ResponseFunction {
        let mut out = self.clone();
        for rl in &mut out.wm {
            for (k, r) in rl.iter_mut().enumerate() {
                let l = (2 * k) as f64;
                *r /= (-apodization * l * (l + 1.0)).exp();
            }
        }
        out
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on
/// P_n.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let p = legendre(n, x);
            let pm1 = legendre(n - 1, x);
            let dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let p1 = legendre(n - 1, x);
        let dp = n as f64 * (x * legendre(n, x) - p1) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Project exp(−b·(λ⊥ + (λ∥−λ⊥)·t²)) onto Y_l0 per shell:
/// r_l = 2π·N_l·∫ E(t)·P_l(t) dt with N_l = √((2l+1)/4π).
pub fn response_from_tensor(
    lambda_parallel: f64,
    lambda_perp: f64,
    iso_diffusivity: f64,
    shells: &[f64],
    lmax: usize,
) -> Result<ResponseFunction> {
    if lmax % 2 != 0 {
        return Err(Error::invalid("response lmax must be even"));
    }
    if !(lambda_perp > 0.0 && lambda_parallel >= lambda_perp) {
        return Err(Error::invalid("invalid response tensor eigenvalues"));
    }
    let (nodes, weights) = gauss_legendre(GL_POINTS);
    let mut wm = Vec::with_capacity(shells.len());
    let mut iso = Vec::with_capacity(shells.len());
    for &b in shells {
        let mut rl = Vec::with_capacity(lmax / 2 + 1);
        for l in (0..=lmax).step_by(2) {
            let nl = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI)).sqrt();
            let mut integral = 0.0;
            for (&t, &w) in nodes.iter().zip(&weights) {
                let e = (-b * (lambda_perp + (lambda_parallel - lambda_perp) * t * t)).exp();
                integral += w * e * legendre(l, t);
            }
            rl.push(2.0 * std::f64::consts::PI * nl * integral);
        }
        wm.push(rl);
        iso.push((-b * iso_diffusivity).exp());
    }
    let rf = ResponseFunction {
        shells: shells.to_vec(),
        wm,
        iso,
        lmax,
    };
    rf.validate()?;
    Ok(rf)
}

/// Response matched to a subject's generative kernel: eigenvalues
/// from the first WM voxel, shells from its gradient table (b = 0
/// first when present). Returned in the apodized basis so fits are
/// directly comparable with the subject's ground-truth FODs.
pub fn subject_response(subject: &Subject, lmax: usize) -> Result<ResponseFunction> {
    let fiber = subject
        .grid
        .iter()
        .find_map(|v| v.fibers.first())
        .ok_or_else(|| Error::invalid("subject has no WM voxels to derive a response from"))?;
    let mut shells = Vec::new();
    if !subject.dirs.b0_indices().is_empty() {
        shells.push(0.0);
    }
    shells.extend(subject.dirs.shells());
    Ok(response_from_tensor(
        fiber.lambda_parallel,
        fiber.lambda_perp,
        crate::phantom::ISO_DIFFUSIVITY,
        &shells,
        lmax,
    )?
    .apodized_basis(crate::phantom::APODIZATION))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadrature_integrates_high_order_polynomials_exactly() {
        let (nodes, weights) = gauss_legendre(64);
        for k in [0usize, 2, 8, 20] {
            let got: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| w * x.powi(k as i32))
                .sum();
            let want = 2.0 / (k as f64 + 1.0);
            assert_relative_eq!(got, want, epsilon = 1e-13);
        }
        let odd: f64 = nodes.iter().zip(&weights).map(|(&x, &w)| w * x.powi(7)).sum();
        assert!(odd.abs() < 1e-14);
    }

    #[test]
    fn isotropic_kernel_has_no_anisotropic_terms() {
        let r = response_from_tensor(1.0e-3, 1.0e-3, 3.0e-3, &[0.0, 1000.0, 2600.0], 8).unwrap();
        for s in 0..r.shells.len() {
            for l in (2..=8).step_by(2) {
                assert!(r.rl(s, l).abs() < 1e-12, "b={} l={l}", r.shells[s]);
            }
            assert!(r.rl(s, 0) > 0.0);
        }
    }

    #[test]
    fn b0_shell_is_the_constant_projection() {
        let r = response_from_tensor(1.7e-3, 0.2e-3, 3.0e-3, &[0.0], 8).unwrap();
        assert_relative_eq!(r.rl(0, 0), 2.0 * std::f64::consts::PI.sqrt(), epsilon = 1e-12);
        for l in (2..=8).step_by(2) {
            assert!(r.rl(0, l).abs() < 1e-13);
        }
        assert_relative_eq!(r.iso[0], 1.0);
    }

    #[test]
    fn wm_kernel_r2_is_negative_and_bounded() {
        let r = response_from_tensor(1.7e-3, 0.2e-3, 3.0e-3, &[1000.0], 8).unwrap();
        let ratio = r.rl(0, 2) / r.rl(0, 0);
        assert!(r.rl(0, 2) < 0.0);
        assert!(ratio.abs() > 0.0 && ratio.abs() < 1.0, "ratio {ratio}");
    }
}
