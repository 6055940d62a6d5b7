//! Dense voxel grids with per-voxel channel vectors.
//!
//! A [`Volume`] stores `nc` values per voxel on an `nx × ny × nz`
//! grid. Channels of one voxel are contiguous, x varies fastest
//! across voxels. DWI series, SH coefficient maps, scalar maps
//! (`nc == 1`) and masks all use this one container.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    nx: usize,
    ny: usize,
    nz: usize,
    nc: usize,
    voxel_size_mm: f64,
    data: Vec<T>,
}

/// Single-channel f64 grid.
pub type ScalarVolume = Volume<f64>;
/// Single-channel boolean grid.
pub type MaskVolume = Volume<bool>;

impl<T: Clone> Volume<T> {
    pub fn filled(dims: (usize, usize, usize), nc: usize, voxel_size_mm: f64, value: T) -> Self {
        let (nx, ny, nz) = dims;
        Self {
            nx,
            ny,
            nz,
            nc,
            voxel_size_mm,
            data: vec![value; nx * ny * nz * nc],
        }
    }

    pub fn from_vec(
        dims: (usize, usize, usize),
        nc: usize,
        voxel_size_mm: f64,
        data: Vec<T>,
    ) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if data.len() != nx * ny * nz * nc {
            return Err(Error::invalid(format!(
                "volume payload has {} values, dims {}x{}x{}x{} need {}",
                data.len(),
                nx,
                ny,
                nz,
                nc,
                nx * ny * nz * nc
            )));
        }
        Ok(Self {
            nx,
            ny,
            nz,
            nc,
            voxel_size_mm,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn n_channels(&self) -> usize {
        self.nc
    }

    pub fn n_voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn voxel_size_mm(&self) -> f64 {
        self.voxel_size_mm
    }

    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        (z * self.ny + y) * self.nx + x
    }

    /// Inverse of [`linear`](Self::linear).
    pub fn coords(&self, v: usize) -> (usize, usize, usize) {
        let x = v % self.nx;
        let y = (v / self.nx) % self.ny;
        let z = v / (self.nx * self.ny);
        (x, y, z)
    }

    pub fn voxel(&self, v: usize) -> &[T] {
        &self.data[v * self.nc..(v + 1) * self.nc]
    }

    pub fn voxel_mut(&mut self, v: usize) -> &mut [T] {
        &mut self.data[v * self.nc..(v + 1) * self.nc]
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> &[T] {
        self.voxel(self.linear(x, y, z))
    }

    pub fn at_mut(&mut self, x: usize, y: usize, z: usize) -> &mut [T] {
        let v = self.linear(x, y, z);
        self.voxel_mut(v)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn voxels(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.nc)
    }

    /// Build a volume by evaluating `f` per voxel; channel count is
    /// taken from the first voxel and enforced on the rest.
    pub fn map_voxels<F>(dims: (usize, usize, usize), voxel_size_mm: f64, f: F) -> Self
    where
        T: Send,
        F: Fn(usize) -> Vec<T> + Sync + Send,
    {
        let (nx, ny, nz) = dims;
        let per_voxel = crate::parallel::map_indexed(nx * ny * nz, f);
        let nc = per_voxel.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nx * ny * nz * nc);
        for v in per_voxel {
            assert_eq!(v.len(), nc, "ragged per-voxel output");
            data.extend(v);
        }
        Self {
            nx,
            ny,
            nz,
            nc,
            voxel_size_mm,
            data,
        }
    }
}

impl Volume<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }
}
