use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fibonacci_sphere, Direction, DirectionSet};

/// Baseline b0 signal amplitude in arbitrary units; sites scale it
/// via [`Protocol::s0_scale`].
pub const S0_BASE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub b: f64,
    pub n_dirs: usize,
}

/// Acquisition protocol of one site: shell scheme, noise level, and
/// scanner gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub site_label: String,
    pub shells: Vec<Shell>,
    pub snr: f64,
    pub voxel_size_mm: f64,
    /// Site-specific multiplier on the b0 amplitude (scanner gain).
    pub s0_scale: f64,
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr > 0.0) {
            return Err(Error::invalid(format!("snr must be > 0, got {}", self.snr)));
        }
        if !(self.voxel_size_mm > 0.0) {
            return Err(Error::invalid("voxel size must be > 0"));
        }
        if !(self.s0_scale > 0.0) {
            return Err(Error::invalid("s0 scale must be > 0"));
        }
        if !self.shells.iter().any(|s| s.b > 0.0 && s.n_dirs >= 6) {
            return Err(Error::invalid(
                "protocol needs at least one b > 0 shell with 6 or more directions",
            ));
        }
        Ok(())
    }

    pub fn s0(&self) -> f64 {
        S0_BASE * self.s0_scale
    }

    pub fn n_volumes(&self) -> usize {
        self.shells.iter().map(|s| s.n_dirs).sum()
    }

    /// Full gradient scheme, shells concatenated in listed order.
    /// Each shell uses a golden-spiral point set, rotated per shell so
    /// shells do not share directions; b=0 entries all point along z.
    pub fn directions(&self) -> DirectionSet {
        let mut dirs = Vec::with_capacity(self.n_volumes());
        let mut bs = Vec::with_capacity(self.n_volumes());
        for (k, shell) in self.shells.iter().enumerate() {
            if shell.b <= 0.0 {
                for _ in 0..shell.n_dirs {
                    dirs.push(Direction::new(0.0, 0.0, 1.0).unwrap());
                    bs.push(0.0);
                }
            } else {
                for d in fibonacci_sphere(shell.n_dirs) {
                    dirs.push(rotate_for_shell(&d, k));
                    bs.push(shell.b);
                }
            }
        }
        DirectionSet::new(dirs, bs).expect("protocol validated nonempty")
    }

    /// Neonatal-style protocol: four shells including b0, 300 volumes.
    pub fn dhcp_like() -> Self {
        Self {
            site_label: "dhcp".into(),
            shells: vec![
                Shell { b: 0.0, n_dirs: 20 },
                Shell { b: 400.0, n_dirs: 64 },
                Shell { b: 1000.0, n_dirs: 88 },
                Shell { b: 2600.0, n_dirs: 128 },
            ],
            snr: 30.0,
            voxel_size_mm: 1.5,
            s0_scale: 1.0,
        }
    }

    /// Toddler-style protocol: six nonzero shells (141 weighted
    /// volumes) plus a b0 block, 151 volumes total; hotter scanner
    /// gain and lower SNR than [`Protocol::dhcp_like`].
    pub fn bcp_like() -> Self {
        Self {
            site_label: "bcp".into(),
            shells: vec![
                Shell { b: 0.0, n_dirs: 10 },
                Shell { b: 500.0, n_dirs: 9 },
                Shell { b: 1000.0, n_dirs: 12 },
                Shell { b: 1500.0, n_dirs: 17 },
                Shell { b: 2000.0, n_dirs: 24 },
                Shell { b: 2500.0, n_dirs: 34 },
                Shell { b: 3000.0, n_dirs: 45 },
            ],
            snr: 20.0,
            voxel_size_mm: 1.5,
            s0_scale: 1.3,
        }
    }
}

/// Deterministic per-shell rotation (z-spin plus x-tilt) so distinct
/// shells sample distinct directions.
fn rotate_for_shell(d: &Direction, shell_index: usize) -> Direction {
    let a = 2.399_963_229_728_653 * shell_index as f64; // golden angle
    let t = 0.4 * shell_index as f64;
    let (ca, sa) = (a.cos(), a.sin());
    let (ct, st) = (t.cos(), t.sin());
    // R_z(a)
    let (x1, y1, z1) = (ca * d.x - sa * d.y, sa * d.x + ca * d.y, d.z);
    // R_x(t)
    let (x2, y2, z2) = (x1, ct * y1 - st * z1, st * y1 + ct * z1);
    Direction::normalized(x2, y2, z2).unwrap()
}
