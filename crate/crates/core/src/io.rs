//! On-disk formats: raw float volumes, raw sinograms/counts and 8-bit PNG
//! slice dumps.
//!
//! Raw volume layout: 16-byte header of four little-endian `u32`
//! (`VOLUME_MAGIC`, nz, nx, ny) followed by `nz * nx * ny` little-endian
//! `f32` in z-major, then x, then y order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::measurement::CountData;
use crate::projector::Projection;
use crate::volume::{Dims, Volume};

/// "EVOL" read as a little-endian u32.
pub const VOLUME_MAGIC: u32 = u32::from_le_bytes(*b"EVOL");
/// "ESIN": header is magic, n_angles, nz, nc; then n_angles `f64` angles,
/// then `f32` values ordered angle, slice, channel.
pub const SINOGRAM_MAGIC: u32 = u32::from_le_bytes(*b"ESIN");
/// "ECNT": header is magic, n_views, nz, nc; then per view an `f64` angle
/// and an `f64` blank-scan intensity, then `u32` counts ordered view,
/// slice, channel.
pub const COUNTS_MAGIC: u32 = u32::from_le_bytes(*b"ECNT");

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn u32_of(n: usize, path: &Path) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format {
        path: path.to_path_buf(),
        message: format!("dimension {n} does not fit in u32"),
    })
}

pub fn write_volume_raw(path: &Path, volume: &Volume) -> Result<()> {
    let d = volume.dims();
    let mut buf = Vec::with_capacity(16 + 4 * d.len());
    for v in [VOLUME_MAGIC, u32_of(d.nz, path)?, u32_of(d.nx, path)?, u32_of(d.ny, path)?] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &v in volume.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut w = create(path)?;
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_volume_raw(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 16 {
        return Err(bad("truncated header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != VOLUME_MAGIC {
        return Err(bad("not a raw volume (bad magic)".into()));
    }
    let dims = Dims::new(word(1) as usize, word(2) as usize, word(3) as usize);
    let expected = 16 + 4 * dims.len();
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes for {}x{}x{}, found {}",
            dims.nz,
            dims.nx,
            dims.ny,
            bytes.len()
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Volume::from_vec(dims, data)
}

pub fn write_sinogram_raw(path: &Path, projections: &[Projection]) -> Result<()> {
    let (nz, nc) = projections
        .first()
        .map(|p| (p.nz(), p.nc()))
        .unwrap_or((0, 0));
    if projections.iter().any(|p| p.nz() != nz || p.nc() != nc) {
        return Err(Error::Geometry("sinogram views differ in shape".into()));
    }
    let mut w = create(path)?;
    let mut buf = Vec::new();
    for v in [SINOGRAM_MAGIC, u32_of(projections.len(), path)?, u32_of(nz, path)?, u32_of(nc, path)?] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for p in projections {
        buf.extend_from_slice(&p.angle().to_le_bytes());
    }
    for p in projections {
        for &v in p.values() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_counts_raw(path: &Path, views: &[CountData]) -> Result<()> {
    let (nz, nc) = views.first().map(|c| (c.nz(), c.nc())).unwrap_or((0, 0));
    if views.iter().any(|c| c.nz() != nz || c.nc() != nc) {
        return Err(Error::Geometry("count views differ in shape".into()));
    }
    let mut w = create(path)?;
    let mut buf = Vec::new();
    for v in [COUNTS_MAGIC, u32_of(views.len(), path)?, u32_of(nz, path)?, u32_of(nc, path)?] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for c in views {
        buf.extend_from_slice(&c.angle().to_le_bytes());
        buf.extend_from_slice(&c.blank_intensity().to_le_bytes());
    }
    for c in views {
        for &v in c.counts() {
            buf.extend_from_slice(&(v.min(u32::MAX as u64) as u32).to_le_bytes());
        }
    }
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Min-max range used to map a volume to 8-bit grey levels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GrayNormalization {
    pub min: f64,
    pub max: f64,
}

impl GrayNormalization {
    pub fn of(volume: &Volume) -> Self {
        let (min, max) = volume.min_max();
        if min.is_finite() {
            Self { min, max }
        } else {
            Self { min: 0.0, max: 0.0 }
        }
    }

    pub fn to_u8(&self, v: f64) -> u8 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0;
        }
        (((v - self.min) / span).clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

/// Renders one slice with x running down the rows and y across columns.
pub fn slice_image(volume: &Volume, z: usize, norm: GrayNormalization) -> GrayImage {
    let d = volume.dims();
    GrayImage::from_fn(d.ny as u32, d.nx as u32, |col, row| {
        Luma([norm.to_u8(volume.get(z, row as usize, col as usize))])
    })
}

/// Writes `<dir>/<stem>_zNNN.png` for every slice, normalised over the whole
/// volume. Returns the written paths and the normalisation used.
pub fn write_slice_pngs(
    dir: &Path,
    stem: &str,
    volume: &Volume,
) -> Result<(Vec<PathBuf>, GrayNormalization)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let norm = GrayNormalization::of(volume);
    let mut paths = Vec::with_capacity(volume.dims().nz);
    for z in 0..volume.dims().nz {
        let path = dir.join(format!("{stem}_z{z:03}.png"));
        slice_image(volume, z, norm).save(&path)?;
        paths.push(path);
    }
    Ok((paths, norm))
}
