//! Synthetic multi-site, multi-age cohorts: protocols, voxel-level
//! forward simulation, Rician noise, analytic ground-truth FODs.

mod cohort;
mod gt;
mod noise;
mod protocol;
mod voxel;

pub use cohort::{
    bcp_preset, build_cohort, dhcp_preset, preset_by_name, region_of, AgeFaModel, CohortPreset,
    Region, Subject, FA_JITTER, GT_LMAX, ISO_DIFFUSIVITY, MD_FIBER,
};
pub use gt::{gt_fod, APODIZATION};
pub use noise::add_rician_noise;
pub use protocol::{Protocol, Shell, S0_BASE};
pub use voxel::{fa_of_tensor, simulate_signal, solve_lambdas, FiberCompartment, VoxelModel};
