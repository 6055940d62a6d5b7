//! Cohort generation: aged subjects on a fixed fiber-region layout.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::prelude::*;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gt::gt_fod;
use super::noise::add_rician_noise;
use super::protocol::Protocol;
use super::voxel::{simulate_signal, solve_lambdas, FiberCompartment, VoxelModel};
use crate::error::{Error, Result};
use crate::geometry::{Direction, DirectionSet, ShCoeffs};
use crate::volume::{MaskVolume, Volume};
use crate::{parallel, seed};

/// SH order of stored ground-truth FODs.
pub const GT_LMAX: usize = 8;
/// Mean diffusivity assigned to all fiber compartments (mm²/s).
pub const MD_FIBER: f64 = 1.1e-3;
/// Diffusivity of the free-water compartment (mm²/s).
pub const ISO_DIFFUSIVITY: f64 = 3.0e-3;
/// Per-subject FA scatter around the age curve.
pub const FA_JITTER: f64 = 0.02;

/// FA(t) = a + b·arctan(c·(t − t0)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeFaModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub t0: f64,
}

impl AgeFaModel {
    pub fn eval(&self, t: f64) -> f64 {
        self.a + self.b * (self.c * (t - self.t0)).atan()
    }

    pub fn slope_at(&self, t: f64) -> f64 {
        let u = self.c * (t - self.t0);
        self.b * self.c / (1.0 + u * u)
    }

    /// Monotone increasing and FA within (0, 1) across `[lo, hi]`.
    pub fn validate_over(&self, lo: f64, hi: f64) -> Result<()> {
        if !(self.b * self.c > 0.0) {
            return Err(Error::invalid("age-FA curve must be increasing (b·c > 0)"));
        }
        for t in [lo, hi] {
            let fa = self.eval(t);
            if !(0.0 < fa && fa < 1.0) {
                return Err(Error::invalid(format!(
                    "age-FA curve leaves (0,1): FA({t}) = {fa}"
                )));
            }
        }
        Ok(())
    }
}

/// Region kinds laid out in fixed x-slabs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    OneFiber,
    TwoFiber60,
    TwoFiber90,
    ThreeFiber,
    Isotropic,
}

impl Region {
    pub fn n_fibers(self) -> usize {
        match self {
            Region::OneFiber => 1,
            Region::TwoFiber60 | Region::TwoFiber90 => 2,
            Region::ThreeFiber => 3,
            Region::Isotropic => 0,
        }
    }
}

/// Slab boundaries along x at fractions 1/6, 1/4, 1/3, 5/12 of nx,
/// nudged so every region keeps at least one slab on small grids.
pub fn region_of(x: usize, nx: usize) -> Region {
    let mut b = [
        (nx as f64 / 6.0).round() as usize,
        (nx as f64 / 4.0).round() as usize,
        (nx as f64 / 3.0).round() as usize,
        (nx as f64 * 5.0 / 12.0).round() as usize,
    ];
    for i in 1..4 {
        b[i] = b[i].max(b[i - 1] + 1);
    }
    match x {
        _ if x < b[0] => Region::OneFiber,
        _ if x < b[1] => Region::TwoFiber60,
        _ if x < b[2] => Region::TwoFiber90,
        _ if x < b[3] => Region::ThreeFiber,
        _ => Region::Isotropic,
    }
}

/// One synthetic subject: generative voxel models plus the derived
/// noisy DWI, ground-truth FODs, and WM mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub age: f64,
    pub site_label: String,
    pub dirs: DirectionSet,
    pub grid: Vec<VoxelModel>,
    pub dwi: Volume<f64>,
    pub gt_fod: Volume<f64>,
    pub wm_mask: MaskVolume,
    pub gt_lmax: usize,
}

impl Subject {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dwi.dims()
    }

    pub fn n_fibers(&self, v: usize) -> usize {
        self.grid[v].n_fibers()
    }

    pub fn gt_coeffs(&self, v: usize) -> ShCoeffs {
        ShCoeffs::new(self.gt_lmax, self.gt_fod.voxel(v).to_vec()).expect("stored coeffs valid")
    }
}

fn uniform_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let q = Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q)
}

fn rotated_dir(rot: &UnitQuaternion<f64>, v: Vector3<f64>) -> Direction {
    let r = rot * v;
    Direction::normalized(r.x, r.y, r.z).expect("rotation preserves norm")
}

/// Canonical fiber directions of a region before per-voxel rotation.
fn canonical_fibers(region: Region) -> Vec<(Vector3<f64>, f64)> {
    let half60 = 30.0f64.to_radians();
    let half90 = 45.0f64.to_radians();
    match region {
        Region::OneFiber => vec![(Vector3::z(), 1.0)],
        Region::TwoFiber60 => vec![
            (Vector3::new(half60.sin(), 0.0, half60.cos()), 0.5),
            (Vector3::new(-half60.sin(), 0.0, half60.cos()), 0.5),
        ],
        Region::TwoFiber90 => vec![
            (Vector3::new(half90.sin(), 0.0, half90.cos()), 0.5),
            (Vector3::new(-half90.sin(), 0.0, half90.cos()), 0.5),
        ],
        Region::ThreeFiber => vec![
            (Vector3::x(), 1.0 / 3.0),
            (Vector3::y(), 1.0 / 3.0),
            (Vector3::z(), 1.0 / 3.0),
        ],
        Region::Isotropic => Vec::new(),
    }
}

fn build_subject(
    protocol: &Protocol,
    dirs: &DirectionSet,
    age_range: (f64, f64),
    age_fa: &AgeFaModel,
    grid_dims: (usize, usize, usize),
    cohort_seed: u64,
    index: usize,
) -> Subject {
    let mut rng = seed::rng(cohort_seed, "subject", index as u64);
    let (nx, ny, nz) = grid_dims;
    let s0 = protocol.s0();

    let age = if age_range.1 > age_range.0 {
        rng.random_range(age_range.0..age_range.1)
    } else {
        age_range.0
    };
    let fa_noise: f64 = rng.sample::<f64, _>(StandardNormal) * FA_JITTER;
    let fa = (age_fa.eval(age) + fa_noise).clamp(0.05, 0.95);
    let (lpar, lperp) = solve_lambdas(fa, MD_FIBER).expect("clamped FA is feasible");

    let n_vox = nx * ny * nz;
    let mut grid = Vec::with_capacity(n_vox);
    for v in 0..n_vox {
        let x = v % nx;
        let region = region_of(x, nx);
        let fibers: Vec<FiberCompartment> = if region == Region::Isotropic {
            Vec::new()
        } else {
            let rot = uniform_rotation(&mut rng);
            canonical_fibers(region)
                .into_iter()
                .map(|(u, f)| FiberCompartment {
                    direction: rotated_dir(&rot, u),
                    volume_fraction: f,
                    lambda_parallel: lpar,
                    lambda_perp: lperp,
                })
                .collect()
        };
        let iso_fraction = if fibers.is_empty() { 1.0 } else { 0.0 };
        grid.push(VoxelModel {
            fibers,
            iso_fraction,
            iso_diffusivity: ISO_DIFFUSIVITY,
            s0,
        });
    }

    let mut clean = Vec::with_capacity(n_vox * dirs.len());
    for voxel in &grid {
        clean.extend(simulate_signal(voxel, dirs));
    }
    let noisy = add_rician_noise(
        &clean,
        s0,
        protocol.snr,
        seed::derive(cohort_seed, "noise", index as u64),
    )
    .expect("validated snr");
    let dwi = Volume::from_vec(grid_dims, dirs.len(), protocol.voxel_size_mm, noisy)
        .expect("dims consistent");

    let nc = crate::geometry::n_coeffs(GT_LMAX);
    let mut fod_data = vec![0.0; n_vox * nc];
    let mut mask_data = vec![false; n_vox];
    for (v, voxel) in grid.iter().enumerate() {
        if voxel.is_wm() {
            mask_data[v] = true;
            let c = gt_fod(voxel, GT_LMAX);
            fod_data[v * nc..(v + 1) * nc].copy_from_slice(c.coeffs());
        }
    }
    let gt_fod_vol = Volume::from_vec(grid_dims, nc, protocol.voxel_size_mm, fod_data).unwrap();
    let wm_mask = MaskVolume::from_vec(grid_dims, 1, protocol.voxel_size_mm, mask_data).unwrap();

    Subject {
        id: format!(
            "{}-{:08x}-{:02}",
            protocol.site_label,
            cohort_seed & 0xffff_ffff,
            index
        ),
        age,
        site_label: protocol.site_label.clone(),
        dirs: dirs.clone(),
        grid,
        dwi,
        gt_fod: gt_fod_vol,
        wm_mask,
        gt_lmax: GT_LMAX,
    }
}

/// Generate `n_subjects` independent subjects. Each subject derives
/// its RNG from (seed, index), so the result does not depend on
/// generation order or thread count.
pub fn build_cohort(
    protocol: &Protocol,
    n_subjects: usize,
    age_range: (f64, f64),
    age_fa: &AgeFaModel,
    grid_dims: (usize, usize, usize),
    rng_seed: u64,
) -> Result<Vec<Subject>> {
    protocol.validate()?;
    if n_subjects == 0 {
        return Err(Error::invalid("cohort needs at least one subject"));
    }
    if age_range.0 > age_range.1 {
        return Err(Error::invalid(format!(
            "age range lo {} > hi {}",
            age_range.0, age_range.1
        )));
    }
    age_fa.validate_over(age_range.0, age_range.1)?;
    let (nx, ny, nz) = grid_dims;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::invalid("grid dims must be positive"));
    }
    let dirs = protocol.directions();
    Ok(parallel::map_indexed(n_subjects, |i| {
        build_subject(protocol, &dirs, age_range, age_fa, grid_dims, rng_seed, i)
    }))
}

/// A site preset bundles the protocol with its age model and the two
/// study age windows, plus the conversion to weeks for cross-site
/// slope comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortPreset {
    pub protocol: Protocol,
    pub age_fa: AgeFaModel,
    pub young: (f64, f64),
    pub old: (f64, f64),
    pub weeks_per_age_unit: f64,
}

/// Neonatal site: ages in weeks, FA rising steeply through the
/// acquisition window.
pub fn dhcp_preset() -> CohortPreset {
    CohortPreset {
        protocol: Protocol::dhcp_like(),
        age_fa: AgeFaModel {
            a: 0.22,
            b: 0.12,
            c: 0.15,
            t0: 38.0,
        },
        young: (26.7, 35.0),
        old: (40.0, 44.4),
        weeks_per_age_unit: 1.0,
    }
}

/// Toddler site: ages in months, FA already on the arctan plateau.
pub fn bcp_preset() -> CohortPreset {
    CohortPreset {
        protocol: Protocol::bcp_like(),
        age_fa: AgeFaModel {
            a: 0.40,
            b: 0.08,
            c: 0.35,
            t0: -4.0,
        },
        young: (0.5, 11.0),
        old: (20.0, 36.0),
        weeks_per_age_unit: 4.345,
    }
}

pub fn preset_by_name(name: &str) -> Result<CohortPreset> {
    match name {
        "dhcp" => Ok(dhcp_preset()),
        "bcp" => Ok(bcp_preset()),
        other => Err(Error::invalid(format!(
            "unknown site preset '{other}' (expected 'dhcp' or 'bcp')"
        ))),
    }
}
