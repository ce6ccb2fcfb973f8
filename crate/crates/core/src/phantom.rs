//! Binary geometric phantoms.
//!
//! A voxel is set when its centre lies inside any primitive; overlapping
//! primitives simply OR together, so the volume only ever holds `0` and the
//! attenuation scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::volume::{Dims, Volume};

/// Attenuation applied to occupied voxels unless a spec says otherwise.
pub const DEFAULT_ATTENUATION: f64 = 0.01;

/// Position in voxel coordinates, ordered `[z, x, y]`.
pub type Point3 = [f64; 3];

/// A solid primitive. Rotations are counter-clockwise in the x-y plane, in
/// degrees, about the primitive's own centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        center: Point3,
        radius: f64,
    },
    /// Box with half-extents `[hz, hx, hy]` before rotation.
    Box {
        center: Point3,
        half_size: Point3,
        #[serde(default)]
        rotation_deg: f64,
    },
    /// Equilateral triangle of circumradius `radius` extruded along z.
    Prism {
        center: Point3,
        radius: f64,
        half_height: f64,
        #[serde(default)]
        rotation_deg: f64,
    },
    /// Cylinder with its axis along z.
    Cylinder {
        center: Point3,
        radius: f64,
        half_height: f64,
    },
}

impl Shape {
    fn center(&self) -> Point3 {
        match *self {
            Shape::Sphere { center, .. }
            | Shape::Box { center, .. }
            | Shape::Prism { center, .. }
            | Shape::Cylinder { center, .. } => center,
        }
    }

    /// Axis-aligned half extents `[z, x, y]` of the rotated primitive.
    fn half_extent(&self) -> Point3 {
        match *self {
            Shape::Sphere { radius, .. } => [radius; 3],
            Shape::Box {
                half_size: [hz, hx, hy],
                rotation_deg,
                ..
            } => {
                let (s, c) = rotation_deg.to_radians().sin_cos();
                [hz, hx * c.abs() + hy * s.abs(), hx * s.abs() + hy * c.abs()]
            }
            Shape::Prism {
                radius,
                half_height,
                ..
            } => {
                let mut ex = [half_height, 0.0, 0.0];
                for (vx, vy) in self.prism_vertices() {
                    ex[1] = f64::max(ex[1], vx.abs());
                    ex[2] = f64::max(ex[2], vy.abs());
                }
                debug_assert!(ex[1] <= radius + 1e-9);
                ex
            }
            Shape::Cylinder {
                radius,
                half_height,
                ..
            } => [half_height, radius, radius],
        }
    }

    fn size_ok(&self) -> bool {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Shape::Sphere { radius, .. } => positive(radius),
            Shape::Box { half_size, .. } => half_size.iter().all(|&h| positive(h)),
            Shape::Prism {
                radius,
                half_height,
                ..
            }
            | Shape::Cylinder {
                radius,
                half_height,
                ..
            } => positive(radius) && positive(half_height),
        }
    }

    /// Triangle vertices relative to the centre, after rotation.
    fn prism_vertices(&self) -> [(f64, f64); 3] {
        let Shape::Prism {
            radius,
            rotation_deg,
            ..
        } = *self
        else {
            return [(0.0, 0.0); 3];
        };
        let mut v = [(0.0, 0.0); 3];
        for (k, slot) in v.iter_mut().enumerate() {
            let a = (rotation_deg + 90.0 + 120.0 * k as f64).to_radians();
            *slot = (radius * a.cos(), radius * a.sin());
        }
        v
    }

    /// Whether the point `[z, x, y]` is inside the primitive.
    pub fn contains(&self, p: Point3) -> bool {
        let c = self.center();
        let (dz, dx, dy) = (p[0] - c[0], p[1] - c[1], p[2] - c[2]);
        match *self {
            Shape::Sphere { radius, .. } => dz * dz + dx * dx + dy * dy <= radius * radius,
            Shape::Box {
                half_size: [hz, hx, hy],
                rotation_deg,
                ..
            } => {
                let (s, co) = rotation_deg.to_radians().sin_cos();
                // rotate the offset back into the box frame
                let lx = co * dx + s * dy;
                let ly = -s * dx + co * dy;
                dz.abs() <= hz && lx.abs() <= hx && ly.abs() <= hy
            }
            Shape::Prism { half_height, .. } => {
                if dz.abs() > half_height {
                    return false;
                }
                let v = self.prism_vertices();
                // counter-clockwise vertices: inside iff left of every edge
                (0..3).all(|k| {
                    let (ax, ay) = v[k];
                    let (bx, by) = v[(k + 1) % 3];
                    (bx - ax) * (dy - ay) - (by - ay) * (dx - ax) >= 0.0
                })
            }
            Shape::Cylinder {
                radius,
                half_height,
                ..
            } => dz.abs() <= half_height && dx * dx + dy * dy <= radius * radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: Dims,
    #[serde(default)]
    pub shapes: Vec<Shape>,
    #[serde(default = "default_attenuation")]
    pub attenuation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_attenuation() -> f64 {
    DEFAULT_ATTENUATION
}

/// Named phantom layouts with prominent straight edges, scaled to any grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Rotated boxes and a triangular prism.
    Blocks,
    /// A box, a prism, a cylinder and a sphere.
    Mixed,
    /// One axis-aligned rectangle through every slice.
    Rectangle,
}

impl PhantomSpec {
    pub fn new(dims: Dims, shapes: Vec<Shape>) -> Self {
        Self {
            dims,
            shapes,
            attenuation: DEFAULT_ATTENUATION,
            seed: 0,
        }
    }

    pub fn preset(preset: Preset, dims: Dims) -> Self {
        let (nz, nx, ny) = (dims.nz as f64, dims.nx as f64, dims.ny as f64);
        let n = nx.min(ny);
        let zc = (nz - 1.0) / 2.0;
        let hz = nz / 2.0 - 0.01;
        let at = |fx: f64, fy: f64| [zc, fx * (nx - 1.0), fy * (ny - 1.0)];
        let shapes = match preset {
            Preset::Blocks => vec![
                Shape::Box {
                    center: at(0.36, 0.40),
                    half_size: [hz, 0.20 * n, 0.09 * n],
                    rotation_deg: 20.0,
                },
                Shape::Box {
                    center: at(0.66, 0.68),
                    half_size: [hz, 0.13 * n, 0.07 * n],
                    rotation_deg: -35.0,
                },
                Shape::Prism {
                    center: at(0.70, 0.30),
                    radius: 0.14 * n,
                    half_height: hz,
                    rotation_deg: 10.0,
                },
            ],
            Preset::Mixed => vec![
                Shape::Box {
                    center: at(0.35, 0.35),
                    half_size: [hz, 0.16 * n, 0.10 * n],
                    rotation_deg: 10.0,
                },
                Shape::Prism {
                    center: at(0.68, 0.62),
                    radius: 0.16 * n,
                    half_height: hz,
                    rotation_deg: -25.0,
                },
                Shape::Cylinder {
                    center: at(0.30, 0.72),
                    radius: 0.09 * n,
                    half_height: hz,
                },
                Shape::Sphere {
                    center: at(0.72, 0.26),
                    radius: (0.09 * n).min(nz / 2.0 - 0.01).max(0.5),
                },
            ],
            Preset::Rectangle => vec![Shape::Box {
                center: at(0.5, 0.5),
                half_size: [hz, 0.27 * n, 0.17 * n],
                rotation_deg: 0.0,
            }],
        };
        Self::new(dims, shapes)
    }

    /// Draws `count` boxes and prisms at random placements that fit the grid.
    pub fn random(dims: Dims, count: usize, attenuation: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.nx.min(dims.ny) as f64;
        let zc = (dims.nz as f64 - 1.0) / 2.0;
        let hz = dims.nz as f64 / 2.0 - 0.01;
        let mut shapes = Vec::with_capacity(count);
        while shapes.len() < count {
            let rotation_deg = rng.random_range(0.0..180.0);
            let center = [
                zc,
                rng.random_range(0.2..0.8) * (dims.nx as f64 - 1.0),
                rng.random_range(0.2..0.8) * (dims.ny as f64 - 1.0),
            ];
            let shape = if rng.random_bool(0.5) {
                Shape::Box {
                    center,
                    half_size: [hz, rng.random_range(0.06..0.2) * n, rng.random_range(0.03..0.12) * n],
                    rotation_deg,
                }
            } else {
                Shape::Prism {
                    center,
                    radius: rng.random_range(0.06..0.18) * n,
                    half_height: hz,
                    rotation_deg,
                }
            };
            if shape_in_bounds(&shape, dims) {
                shapes.push(shape);
            }
        }
        Self {
            dims,
            shapes,
            attenuation,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.nz == 0 || d.nx == 0 || d.ny == 0 {
            return Err(Error::InvalidSpec(format!(
                "grid dims must be positive, got {}x{}x{}",
                d.nz, d.nx, d.ny
            )));
        }
        if !(self.attenuation.is_finite() && self.attenuation > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "attenuation scale must be > 0, got {}",
                self.attenuation
            )));
        }
        for (i, shape) in self.shapes.iter().enumerate() {
            if !shape.size_ok() {
                return Err(Error::InvalidSpec(format!(
                    "shape #{i} ({shape:?}) has a non-positive size"
                )));
            }
            if !shape_in_bounds(shape, d) {
                return Err(Error::InvalidSpec(format!(
                    "shape #{i} ({shape:?}) extends outside the {}x{}x{} grid",
                    d.nz, d.nx, d.ny
                )));
            }
        }
        Ok(())
    }
}

/// The grid spans `[-0.5, n - 0.5]` along each axis.
fn shape_in_bounds(shape: &Shape, d: Dims) -> bool {
    const SLACK: f64 = 1e-9;
    let c = shape.center();
    let e = shape.half_extent();
    [d.nz, d.nx, d.ny]
        .iter()
        .zip(c.iter().zip(e.iter()))
        .all(|(&n, (&c, &e))| c - e >= -0.5 - SLACK && c + e <= n as f64 - 0.5 + SLACK)
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Volume> {
    spec.validate()?;
    let d = spec.dims;
    let mut volume = Volume::zeros(d);
    par::for_each_chunk_mut(volume.data_mut(), d.slice_len(), |z, slice| {
        for x in 0..d.nx {
            for y in 0..d.ny {
                let p = [z as f64, x as f64, y as f64];
                if spec.shapes.iter().any(|s| s.contains(p)) {
                    slice[x * d.ny + y] = spec.attenuation;
                }
            }
        }
    });
    Ok(volume)
}
