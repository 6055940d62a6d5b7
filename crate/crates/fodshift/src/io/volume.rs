//! Raw binary volume format.
//!
//! Little-endian throughout: 4-byte magic "FODS", u32 version, four
//! u32 dims (nx, ny, nz, nc), one dtype byte, f64 voxel size, then the
//! payload in voxel-major channel-minor order, exactly as
//! [`crate::Volume`] stores it.

use std::path::Path;

use super::json::atomic_write;
use crate::{Error, MaskVolume, Result, Volume};

pub const VOLUME_MAGIC: &[u8; 4] = b"FODS";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F64: u8 = 1;
pub const DTYPE_BOOL: u8 = 3;

const HEADER_LEN: usize = 4 + 4 + 16 + 1 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    pub dims: (usize, usize, usize),
    pub n_channels: usize,
    pub dtype: u8,
    pub voxel_size_mm: f64,
}

impl VolumeHeader {
    fn n_values(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2 * self.n_channels
    }

    fn value_size(&self) -> usize {
        match self.dtype {
            DTYPE_F64 => 8,
            DTYPE_BOOL => 1,
            _ => 0,
        }
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(VOLUME_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for d in [self.dims.0, self.dims.1, self.dims.2, self.n_channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(self.dtype);
        out.extend_from_slice(&self.voxel_size_mm.to_le_bytes());
    }
}

fn parse_error(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        location: location.into(),
        message: message.into(),
    }
}

fn decode_header(path: &Path, bytes: &[u8]) -> Result<VolumeHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(parse_error(
            path,
            format!("offset {}", bytes.len()),
            "file shorter than the fixed header",
        ));
    }
    if &bytes[0..4] != VOLUME_MAGIC {
        return Err(parse_error(path, "offset 0", "bad magic, expected FODS"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(parse_error(
            path,
            "offset 4",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let header = VolumeHeader {
        dims: (dim(0), dim(1), dim(2)),
        n_channels: dim(3),
        dtype: bytes[24],
        voxel_size_mm: f64::from_le_bytes(bytes[25..33].try_into().unwrap()),
    };
    if header.dims.0 == 0 || header.dims.1 == 0 || header.dims.2 == 0 || header.n_channels == 0 {
        return Err(parse_error(path, "offset 8", "zero dimension"));
    }
    if header.value_size() == 0 {
        return Err(parse_error(
            path,
            "offset 24",
            format!("unknown dtype code {}", header.dtype),
        ));
    }
    let want = HEADER_LEN + header.n_values() * header.value_size();
    if bytes.len() != want {
        return Err(parse_error(
            path,
            "payload",
            format!("expected {want} bytes total, found {}", bytes.len()),
        ));
    }
    Ok(header)
}

pub fn write_volume(path: &Path, vol: &Volume<f64>) -> Result<()> {
    let header = VolumeHeader {
        dims: vol.dims(),
        n_channels: vol.n_channels(),
        dtype: DTYPE_F64,
        voxel_size_mm: vol.voxel_size_mm(),
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + vol.data().len() * 8);
    header.encode(&mut bytes);
    for v in vol.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

pub fn read_volume(path: &Path) -> Result<Volume<f64>> {
    let bytes = std::fs::read(path)?;
    let header = decode_header(path, &bytes)?;
    if header.dtype != DTYPE_F64 {
        return Err(parse_error(path, "offset 24", "expected an f64 volume"));
    }
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume::from_vec(header.dims, header.n_channels, header.voxel_size_mm, data)
}

pub fn write_mask(path: &Path, mask: &MaskVolume) -> Result<()> {
    let header = VolumeHeader {
        dims: mask.dims(),
        n_channels: mask.n_channels(),
        dtype: DTYPE_BOOL,
        voxel_size_mm: mask.voxel_size_mm(),
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + mask.data().len());
    header.encode(&mut bytes);
    bytes.extend(mask.data().iter().map(|&b| b as u8));
    atomic_write(path, &bytes)
}

pub fn read_mask(path: &Path) -> Result<MaskVolume> {
    let bytes = std::fs::read(path)?;
    let header = decode_header(path, &bytes)?;
    if header.dtype != DTYPE_BOOL {
        return Err(parse_error(path, "offset 24", "expected a boolean mask"));
    }
    let mut data = Vec::with_capacity(header.n_values());
    for (i, &b) in bytes[HEADER_LEN..].iter().enumerate() {
        match b {
            0 => data.push(false),
            1 => data.push(true),
            other => {
                return Err(parse_error(
                    path,
                    format!("offset {}", HEADER_LEN + i),
                    format!("mask byte must be 0 or 1, found {other}"),
                ))
            }
        }
    }
    Volume::from_vec(header.dims, header.n_channels, header.voxel_size_mm, data)
}
