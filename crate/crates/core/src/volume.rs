use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid extent of a volume: `nz` axial slices of `nx` by `ny` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nz: usize,
    pub nx: usize,
    pub ny: usize,
}

impl Dims {
    pub fn new(nz: usize, nx: usize, ny: usize) -> Self {
        Self { nz, nx, ny }
    }

    pub fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn len(&self) -> usize {
        self.nz * self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Attenuation image stored z-major, then x, then y.
///
/// Pixel `(x, y)` of slice `z` lives at `(z * nx + x) * ny + y`. Pixel
/// centres sit at integer coordinates. Phantoms and non-negative
/// reconstructions hold values `>= 0`; adjoint images may be signed.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::Geometry(format!(
                "{} values for a {}x{}x{} volume",
                data.len(),
                dims.nz,
                dims.nx,
                dims.ny
            )));
        }
        Ok(Self { dims, data })
    }

    /// Builds a volume by evaluating `f(z, x, y)` at every voxel.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for x in 0..dims.nx {
                for y in 0..dims.ny {
                    data.push(f(z, x, y));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, z: usize, x: usize, y: usize) -> usize {
        (z * self.dims.nx + x) * self.dims.ny + y
    }

    #[inline]
    pub fn get(&self, z: usize, x: usize, y: usize) -> f64 {
        self.data[self.index(z, x, y)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, x: usize, y: usize, value: f64) {
        let i = self.index(z, x, y);
        self.data[i] = value;
    }

    pub fn slice(&self, z: usize) -> &[f64] {
        let n = self.dims.slice_len();
        &self.data[z * n..(z + 1) * n]
    }

    pub fn slice_mut(&mut self, z: usize) -> &mut [f64] {
        let n = self.dims.slice_len();
        &mut self.data[z * n..(z + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Volume) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Extracts a single slice as a one-slice volume.
    pub fn single_slice(&self, z: usize) -> Volume {
        Volume {
            dims: Dims::new(1, self.dims.nx, self.dims.ny),
            data: self.slice(z).to_vec(),
        }
    }
}
