//! Two-compartment constrained spherical deconvolution. The design
//! stacks the per-shell WM convolution (diag r_l·√(4π/(2l+1)) in SH
//! space) next to an isotropic attenuation column; the fit is a
//! strictly convex QP with amplitude non-negativity enforced on a
//! tessellation.

use nalgebra::{DMatrix, DVector};

use crate::csd::qp::solve_qp;
use crate::csd::response::ResponseFunction;
use crate::error::{Error, Result};
use crate::geometry::{basis_matrix, lm_of, n_coeffs, DirectionSet, ShCoeffs, SphereTessellation};
use crate::parallel;
use crate::volume::{MaskVolume, ScalarVolume, Volume};

pub const DEFAULT_MAX_ITER: usize = 1200;
const KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct CsdFit {
    pub fod: ShCoeffs,
    pub iso_fraction: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// FOD coefficient volume plus the isotropic fraction image.
#[derive(Debug, Clone)]
pub struct CsdVolume {
    pub fods: Volume<f64>,
    pub iso: ScalarVolume,
    pub lmax: usize,
}

/// Precomputed design, Gram and constraint matrices for one gradient
/// scheme. Build once, fit many voxels.
pub struct CsdProblem {
    design: DMatrix<f64>,
    gram: DMatrix<f64>,
    constraints: DMatrix<f64>,
    zeros: DVector<f64>,
    b0_idx: Vec<usize>,
    n_meas: usize,
    nc: usize,
    lmax: usize,
    pub max_iter: usize,
}

impl CsdProblem {
    pub fn new(
        dirs: &DirectionSet,
        response: &ResponseFunction,
        lmax: usize,
        tess: &SphereTessellation,
    ) -> Result<Self> {
        response.validate()?;
        if lmax > response.lmax {
            return Err(Error::invalid(format!(
                "fit lmax {lmax} exceeds response lmax {}",
                response.lmax
            )));
        }
        let nc = n_coeffs(lmax);
        let n_meas = dirs.len();
        if n_meas < nc + 1 {
            return Err(Error::invalid(format!(
                "{n_meas} measurements cannot determine {} unknowns",
                nc + 1
            )));
        }
        let mut design = DMatrix::zeros(n_meas, nc + 1);
        for i in 0..n_meas {
            let b = dirs.b_value(i);
            let shell = response.shell_index(b).ok_or_else(|| {
                Error::invalid(format!("no response shell for b = {b}"))
            })?;
            let g = dirs.direction(i);
            let row = crate::geometry::basis_row(lmax, &g);
            for (j, y) in row.iter().enumerate() {
                let (l, _) = lm_of(j);
                let conv = (4.0 * std::f64::consts::PI / (2 * l + 1) as f64).sqrt();
                design[(i, j)] = response.rl(shell, l) * conv * y;
            }
            design[(i, nc)] = response.iso[shell];
        }
        let gram = design.transpose() * &design;

        // Amplitude ≥ 0 on the tessellation plus iso ≥ 0. Even-order
        // bases are antipodally symmetric, so a hemisphere suffices.
        let amp = basis_matrix(tess.points(), lmax)?;
        let mut constraints = DMatrix::zeros(tess.len() + 1, nc + 1);
        constraints.view_mut((0, 0), (tess.len(), nc)).copy_from(&amp);
        constraints[(tess.len(), nc)] = 1.0;
        let zeros = DVector::zeros(tess.len() + 1);

        Ok(Self {
            design,
            gram,
            constraints,
            zeros,
            b0_idx: dirs.b0_indices(),
            n_meas,
            nc,
            lmax,
            max_iter: DEFAULT_MAX_ITER,
        })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn n_measurements(&self) -> usize {
        self.n_meas
    }

    /// Least squares in the signal domain under the non-negativity
    /// constraints. Output scales linearly with the input; the signal
    /// is not b0-normalized here (see fit_volume for that).
    pub fn fit(&self, signal: &[f64]) -> Result<CsdFit> {
        if signal.len() != self.n_meas {
            return Err(Error::invalid(format!(
                "signal length {} does not match {} measurements",
                signal.len(),
                self.n_meas
            )));
        }
        if signal.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("signal contains non-finite values"));
        }
        // Prescale by a power of two near ‖s‖∞ so the solve runs at
        // O(1) magnitudes and homogeneity in the input scale is exact
        // for power-of-two factors.
        let s_inf = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if s_inf > 0.0 {
            (2.0f64).powi(s_inf.log2().round() as i32)
        } else {
            1.0
        };
        let s = DVector::from_iterator(self.n_meas, signal.iter().map(|&v| v / scale));
        let q = -(self.design.transpose() * s);
        // Strictly interior start (small flat FOD plus a little iso):
        // the origin is a fully degenerate vertex with every
        // constraint tight, which costs the solver dozens of
        // zero-length pivots to escape.
        let mut x0 = DVector::zeros(self.nc + 1);
        x0[0] = 0.1;
        x0[self.nc] = 0.1;
        let sol = solve_qp(
            &self.gram,
            &q,
            &self.constraints,
            &self.zeros,
            x0,
            self.max_iter,
        )?;
        if sol.kkt_residual >= KKT_TOL {
            return Err(Error::NumericalFailure {
                what: "constrained FOD fit".into(),
                residual: sol.kkt_residual,
            });
        }
        let mut fod = ShCoeffs::zeros(self.lmax);
        for (j, c) in fod.coeffs_mut().iter_mut().enumerate() {
            *c = sol.x[j] * scale;
        }
        Ok(CsdFit {
            fod,
            iso_fraction: sol.x[self.nc] * scale,
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
        })
    }

    /// Per-voxel fit over a volume, b0-normalized so coefficients are
    /// in volume-fraction units. Voxels outside the mask (or with no
    /// b0 signal) come back zero. Pure per voxel; runs voxels in
    /// parallel with order-independent results.
    pub fn fit_volume(
        &self,
        dwi: &Volume<f64>,
        mask: Option<&MaskVolume>,
    ) -> Result<CsdVolume> {
        if dwi.n_channels() != self.n_meas {
            return Err(Error::invalid(format!(
                "volume has {} channels, problem expects {}",
                dwi.n_channels(),
                self.n_meas
            )));
        }
        if let Some(m) = mask {
            if m.dims() != dwi.dims() {
                return Err(Error::invalid("mask dims do not match volume"));
            }
        }
        if self.b0_idx.is_empty() {
            return Err(Error::invalid("cannot b0-normalize: no b=0 measurements"));
        }
        let nv = dwi.n_voxels();
        let fits: Vec<Result<Option<(Vec<f64>, f64)>>> = parallel::map_indexed(nv, |v| {
            if let Some(m) = mask {
                if !m.voxel(v)[0] {
                    return Ok(None);
                }
            }
            let signal = dwi.voxel(v);
            let b0: f64 =
                self.b0_idx.iter().map(|&i| signal[i]).sum::<f64>() / self.b0_idx.len() as f64;
            if !(b0 > 0.0) {
                return Ok(None);
            }
            let normalized: Vec<f64> = signal.iter().map(|&s| s / b0).collect();
            let fit = self.fit(&normalized)?;
            Ok(Some((fit.fod.coeffs().to_vec(), fit.iso_fraction)))
        });

        let (dx, dy, dz) = dwi.dims();
        let mut fods = Volume::filled((dx, dy, dz), self.nc, dwi.voxel_size_mm(), 0.0);
        let mut iso = ScalarVolume::filled((dx, dy, dz), 1, dwi.voxel_size_mm(), 0.0);
        for (v, fit) in fits.into_iter().enumerate() {
            if let Some((coeffs, f_iso)) = fit? {
                fods.voxel_mut(v).copy_from_slice(&coeffs);
                iso.voxel_mut(v)[0] = f_iso;
            }
        }
        Ok(CsdVolume {
            fods,
            iso,
            lmax: self.lmax,
        })
    }
}

/// One-shot convenience wrapper around CsdProblem for a single voxel.
pub fn csd_fit(
    signal: &[f64],
    dirs: &DirectionSet,
    response: &ResponseFunction,
    lmax: usize,
    tess: &SphereTessellation,
) -> Result<(ShCoeffs, f64)> {
    let problem = CsdProblem::new(dirs, response, lmax, tess)?;
    let fit = problem.fit(signal)?;
    Ok((fit.fod, fit.iso_fraction))
}
