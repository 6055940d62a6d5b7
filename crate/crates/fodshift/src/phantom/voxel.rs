use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Direction, DirectionSet};

/// One coherent fiber population with an axially symmetric tensor
/// D = λ⊥·I + (λ∥ − λ⊥)·uuᵀ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberCompartment {
    pub direction: Direction,
    pub volume_fraction: f64,
    pub lambda_parallel: f64,
    pub lambda_perp: f64,
}

impl FiberCompartment {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_perp > 0.0 && self.lambda_parallel >= self.lambda_perp) {
            return Err(Error::invalid(format!(
                "need lambda_parallel >= lambda_perp > 0, got ({}, {})",
                self.lambda_parallel, self.lambda_perp
            )));
        }
        if !(0.0..=1.0).contains(&self.volume_fraction) {
            return Err(Error::invalid("fiber volume fraction outside [0, 1]"));
        }
        Ok(())
    }

    /// gᵀ·D·g for this compartment's tensor.
    pub fn quadratic_form(&self, g: &Direction) -> f64 {
        let c = g.dot(&self.direction);
        self.lambda_perp + (self.lambda_parallel - self.lambda_perp) * c * c
    }
}

/// Generative model of one voxel: up to three fiber compartments plus
/// an isotropic compartment, fractions summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelModel {
    pub fibers: Vec<FiberCompartment>,
    pub iso_fraction: f64,
    pub iso_diffusivity: f64,
    pub s0: f64,
}

impl VoxelModel {
    pub fn validate(&self) -> Result<()> {
        if self.fibers.len() > 3 {
            return Err(Error::invalid(format!(
                "at most 3 fiber compartments, got {}",
                self.fibers.len()
            )));
        }
        for f in &self.fibers {
            f.validate()?;
        }
        let total: f64 = self.iso_fraction + self.fibers.iter().map(|f| f.volume_fraction).sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "compartment fractions sum to {total}, expected 1"
            )));
        }
        if !(self.iso_diffusivity > 0.0) {
            return Err(Error::invalid("isotropic diffusivity must be > 0"));
        }
        if !(self.s0 > 0.0) {
            return Err(Error::invalid("s0 must be > 0"));
        }
        Ok(())
    }

    pub fn isotropic(s0: f64, iso_diffusivity: f64) -> Self {
        Self {
            fibers: Vec::new(),
            iso_fraction: 1.0,
            iso_diffusivity,
            s0,
        }
    }

    pub fn n_fibers(&self) -> usize {
        self.fibers.len()
    }

    pub fn is_wm(&self) -> bool {
        !self.fibers.is_empty()
    }
}

/// Noise-free multi-tensor forward model:
/// S(g, b) = s0·[f_iso·e^(−b·d_iso) + Σ_i f_i·e^(−b·gᵀD_ig)].
pub fn simulate_signal(voxel: &VoxelModel, dirs: &DirectionSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(dirs.len());
    for i in 0..dirs.len() {
        let b = dirs.b_value(i);
        let g = dirs.direction(i);
        let mut s = voxel.iso_fraction * (-b * voxel.iso_diffusivity).exp();
        for f in &voxel.fibers {
            s += f.volume_fraction * (-b * f.quadratic_form(&g)).exp();
        }
        out.push(voxel.s0 * s);
    }
    out
}

/// FA of an axially symmetric tensor with eigenvalues (λ∥, λ⊥, λ⊥).
pub fn fa_of_tensor(lambda_parallel: f64, lambda_perp: f64) -> f64 {
    let d = lambda_parallel - lambda_perp;
    let denom = (lambda_parallel * lambda_parallel + 2.0 * lambda_perp * lambda_perp).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        d / denom
    }
}

/// Invert (FA, MD) to (λ∥, λ⊥): with δ = fa/√(3 − 2·fa²),
/// λ∥ = md·(1 + 2δ) and λ⊥ = md·(1 − δ).
pub fn solve_lambdas(fa_target: f64, md_target: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&fa_target) {
        return Err(Error::invalid(format!(
            "fa target must lie in [0, 1), got {fa_target}"
        )));
    }
    if !(md_target > 0.0) {
        return Err(Error::invalid(format!(
            "md target must be > 0, got {md_target}"
        )));
    }
    let delta = fa_target / (3.0 - 2.0 * fa_target * fa_target).sqrt();
    Ok((md_target * (1.0 + 2.0 * delta), md_target * (1.0 - delta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn z_fiber(lpar: f64, lperp: f64) -> VoxelModel {
        VoxelModel {
            fibers: vec![FiberCompartment {
                direction: Direction::new(0.0, 0.0, 1.0).unwrap(),
                volume_fraction: 1.0,
                lambda_parallel: lpar,
                lambda_perp: lperp,
            }],
            iso_fraction: 0.0,
            iso_diffusivity: 3.0e-3,
            s0: 100.0,
        }
    }

    #[test]
    fn b0_returns_s0_exactly() {
        let v = z_fiber(1.7e-3, 0.2e-3);
        let dirs = DirectionSet::single_shell(
            vec![Direction::normalized(1.0, 2.0, -1.0).unwrap()],
            0.0,
        )
        .unwrap();
        assert_eq!(simulate_signal(&v, &dirs), vec![100.0]);
    }

    #[test]
    fn pure_isotropic_is_direction_independent() {
        let v = VoxelModel::isotropic(50.0, 1.0e-3);
        let dirs = DirectionSet::single_shell(crate::geometry::fibonacci_sphere(10), 1000.0).unwrap();
        for s in simulate_signal(&v, &dirs) {
            assert_relative_eq!(s, 50.0 * (-1.0f64).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn axial_signal_decays_by_lambda_parallel() {
        let v = z_fiber(1.7e-3, 0.2e-3);
        let dirs =
            DirectionSet::single_shell(vec![Direction::new(0.0, 0.0, 1.0).unwrap()], 1000.0)
                .unwrap();
        assert_relative_eq!(
            simulate_signal(&v, &dirs)[0],
            100.0 * (-1.7f64).exp(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn fa_closed_forms() {
        assert_eq!(fa_of_tensor(1.0e-3, 1.0e-3), 0.0);
        assert_relative_eq!(fa_of_tensor(1.7e-3, 0.2e-3), 0.8704, epsilon = 1e-4);
    }

    #[test]
    fn lambda_solver_round_trips() {
        let (lp, lt) = solve_lambdas(0.0, 0.7e-3).unwrap();
        assert_relative_eq!(lp, 0.7e-3, epsilon = 1e-15);
        assert_relative_eq!(lt, 0.7e-3, epsilon = 1e-15);
        for fa in [0.1, 0.3, 0.5, 0.8704, 0.95] {
            let (lp, lt) = solve_lambdas(fa, 1.1e-3).unwrap();
            assert_relative_eq!(fa_of_tensor(lp, lt), fa, epsilon = 1e-9);
            assert_relative_eq!((lp + 2.0 * lt) / 3.0, 1.1e-3, epsilon = 1e-15);
        }
        assert!(solve_lambdas(1.0, 1.0e-3).is_err());
        assert!(solve_lambdas(0.5, 0.0).is_err());
    }

    #[test]
    fn fraction_bookkeeping_is_enforced() {
        let mut v = z_fiber(1.7e-3, 0.2e-3);
        v.iso_fraction = 0.1;
        assert!(v.validate().is_err());
        v.fibers[0].volume_fraction = 0.9;
        v.validate().unwrap();
    }
}
