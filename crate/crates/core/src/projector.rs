//! Slice-wise parallel-beam projector.
//!
//! Angle convention: at `theta = 0` rays travel along the image y-axis and
//! the detector coordinate is x. Increasing `theta` turns the ray direction
//! counter-clockwise, so rays at `theta` run along `(-sin θ, cos θ)` and the
//! detector axis is `(cos θ, sin θ)`.
//!
//! Each unit pixel projects onto the detector as a trapezoid (the
//! convolution of two boxes of widths `|cos θ|` and `|sin θ|`) with unit
//! area; a channel records the mean of that footprint over its width. The
//! back projector applies the very same weights transposed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::volume::{Dims, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionGeometry {
    /// Detector channel count.
    pub channels: usize,
    /// Channel width in voxel lengths.
    #[serde(default = "one")]
    pub pitch: f64,
    /// Rotation centre `(x, y)` in pixel coordinates; image centre if unset.
    #[serde(default)]
    pub center: Option<(f64, f64)>,
}

fn one() -> f64 {
    1.0
}

impl ProjectionGeometry {
    /// Detector wide enough for the slice diagonal plus two spare channels.
    pub fn for_dims(dims: Dims) -> Self {
        let diag = ((dims.nx * dims.nx + dims.ny * dims.ny) as f64).sqrt();
        Self {
            channels: diag.ceil() as usize + 2,
            pitch: 1.0,
            center: None,
        }
    }

    pub fn rotation_center(&self, dims: Dims) -> (f64, f64) {
        self.center
            .unwrap_or(((dims.nx as f64 - 1.0) / 2.0, (dims.ny as f64 - 1.0) / 2.0))
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        if self.channels == 0 || !(self.pitch.is_finite() && self.pitch > 0.0) {
            return Err(Error::Geometry(format!(
                "detector needs channels > 0 and pitch > 0, got {} and {}",
                self.channels, self.pitch
            )));
        }
        if dims.is_empty() {
            return Err(Error::Geometry(format!(
                "empty volume {}x{}x{}",
                dims.nz, dims.nx, dims.ny
            )));
        }
        Ok(())
    }
}

pub fn check_angle(angle: f64) -> Result<()> {
    if angle.is_finite() && (0.0..180.0).contains(&angle) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("angle {angle} outside [0, 180)")))
    }
}

/// One view: `nz` rows of `nc` line integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    angle: f64,
    nz: usize,
    nc: usize,
    values: Vec<f64>,
}

impl Projection {
    pub fn new(angle: f64, nz: usize, nc: usize, values: Vec<f64>) -> Result<Self> {
        check_angle(angle)?;
        if values.len() != nz * nc {
            return Err(Error::Geometry(format!(
                "{} values for a {nz}x{nc} projection",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("projection values must be finite".into()));
        }
        Ok(Self {
            angle,
            nz,
            nc,
            values,
        })
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }
    pub fn nz(&self) -> usize {
        self.nz
    }
    pub fn nc(&self) -> usize {
        self.nc
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn row(&self, z: usize) -> &[f64] {
        &self.values[z * self.nc..(z + 1) * self.nc]
    }
}

/// Pixel-to-channel weights of one slice at one angle.
///
/// For pixel `p` the weights of channels `first[p] .. first[p] + stride`
/// are `weights[p * stride ..][..stride]`; channels off the detector carry
/// zero weight.
#[derive(Debug, Clone)]
pub struct AngleKernel {
    angle: f64,
    stride: usize,
    first: Vec<i64>,
    weights: Vec<f64>,
}

impl AngleKernel {
    pub fn new(angle: f64, geom: &ProjectionGeometry, nx: usize, ny: usize) -> Self {
        let dims = Dims::new(1, nx, ny);
        let (cx, cy) = geom.rotation_center(dims);
        let (sin, cos) = angle.to_radians().sin_cos();
        let (a, b) = (cos.abs(), sin.abs());
        let half = (a + b) / 2.0;
        let pitch = geom.pitch;
        let nc = geom.channels as i64;
        let origin = geom.channels as f64 / 2.0;
        let stride = ((a + b) / pitch).ceil() as usize + 1;
        let cdf = Footprint::new(a, b);

        let mut first = Vec::with_capacity(nx * ny);
        let mut weights = vec![0.0; nx * ny * stride];
        for x in 0..nx {
            for y in 0..ny {
                let p = x * ny + y;
                let t = (x as f64 - cx) * cos + (y as f64 - cy) * sin;
                let j0 = ((t - half) / pitch + origin).floor() as i64;
                first.push(j0);
                let w = &mut weights[p * stride..(p + 1) * stride];
                for (k, slot) in w.iter_mut().enumerate() {
                    let j = j0 + k as i64;
                    if j < 0 || j >= nc {
                        continue;
                    }
                    let lo = (j as f64 - origin) * pitch - t;
                    let hi = lo + pitch;
                    *slot = (cdf.at(hi) - cdf.at(lo)).max(0.0) / pitch;
                }
            }
        }
        Self {
            angle,
            stride,
            first,
            weights,
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// `row += A_theta * slice`
    pub fn forward_slice(&self, slice: &[f64], row: &mut [f64]) {
        let nc = row.len() as i64;
        for (p, &v) in slice.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let j0 = self.first[p];
            let w = &self.weights[p * self.stride..(p + 1) * self.stride];
            for (k, &wk) in w.iter().enumerate() {
                let j = j0 + k as i64;
                if j >= 0 && j < nc {
                    row[j as usize] += wk * v;
                }
            }
        }
    }

    /// `slice += A_theta^T * row`
    pub fn back_slice(&self, row: &[f64], slice: &mut [f64]) {
        let nc = row.len() as i64;
        for (p, out) in slice.iter_mut().enumerate() {
            let j0 = self.first[p];
            let w = &self.weights[p * self.stride..(p + 1) * self.stride];
            let mut acc = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                let j = j0 + k as i64;
                if j >= 0 && j < nc {
                    acc += wk * row[j as usize];
                }
            }
            *out += acc;
        }
    }
}

/// CDF of a unit-area trapezoid: the sum of two centred uniform variables
/// of widths `a` and `b`.
struct Footprint {
    a: f64,
    b: f64,
}

impl Footprint {
    const DEGENERATE: f64 = 1e-6;

    fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    fn at(&self, u: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        if a.min(b) < Self::DEGENERATE {
            let w = a.max(b);
            return ((u + w / 2.0) / w).clamp(0.0, 1.0);
        }
        let ramp = |v: f64| if v > 0.0 { v * v / 2.0 } else { 0.0 };
        let s = (a + b) / 2.0;
        let e = (a - b) / 2.0;
        ((ramp(u + s) - ramp(u + e) - ramp(u - e) + ramp(u - s)) / (a * b)).clamp(0.0, 1.0)
    }
}

/// Linear operator over a fixed angle list, kernels computed once.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    dims: Dims,
    geom: ProjectionGeometry,
    kernels: Vec<AngleKernel>,
}

impl SystemOperator {
    pub fn new(dims: Dims, geom: ProjectionGeometry, angles: &[f64]) -> Result<Self> {
        geom.validate(dims)?;
        for &a in angles {
            check_angle(a)?;
        }
        let kernels = par::map_range(angles.len(), |i| {
            AngleKernel::new(angles[i], &geom, dims.nx, dims.ny)
        });
        Ok(Self {
            dims,
            geom,
            kernels,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn geometry(&self) -> &ProjectionGeometry {
        &self.geom
    }
    pub fn n_views(&self) -> usize {
        self.kernels.len()
    }
    pub fn kernels(&self) -> &[AngleKernel] {
        &self.kernels
    }

    /// Length of the stacked data vector, ordered view, slice, channel.
    pub fn data_len(&self) -> usize {
        self.kernels.len() * self.dims.nz * self.geom.channels
    }

    /// Stacked forward projection of a flat volume buffer.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (nz, nc, n) = (self.dims.nz, self.geom.channels, self.dims.slice_len());
        let mut out = vec![0.0; self.data_len()];
        // one chunk per (view, slice) row
        par::for_each_chunk_mut(&mut out, nc, |r, row| {
            let (v, z) = (r / nz, r % nz);
            self.kernels[v].forward_slice(&x[z * n..(z + 1) * n], row);
        });
        out
    }

    /// Adjoint of [`forward`](Self::forward).
    pub fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let (nz, nc, n) = (self.dims.nz, self.geom.channels, self.dims.slice_len());
        let mut out = vec![0.0; self.dims.len()];
        par::for_each_chunk_mut(&mut out, n, |z, slice| {
            for (v, k) in self.kernels.iter().enumerate() {
                let r = v * nz + z;
                k.back_slice(&y[r * nc..(r + 1) * nc], slice);
            }
        });
        out
    }
}

pub fn forward_project(
    volume: &Volume,
    angle: f64,
    geom: &ProjectionGeometry,
) -> Result<Projection> {
    let op = SystemOperator::new(volume.dims(), *geom, &[angle])?;
    let values = op.forward(volume.data());
    Projection::new(angle, volume.dims().nz, geom.channels, values)
}

pub fn back_project(projection: &Projection, geom: &ProjectionGeometry, dims: Dims) -> Result<Volume> {
    if projection.nz() != dims.nz || projection.nc() != geom.channels {
        return Err(Error::Geometry(format!(
            "projection is {}x{}, expected {}x{}",
            projection.nz(),
            projection.nc(),
            dims.nz,
            geom.channels
        )));
    }
    let op = SystemOperator::new(dims, *geom, &[projection.angle()])?;
    Volume::from_vec(dims, op.adjoint(projection.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_volume_projects_to_zero() {
        let d = Dims::new(2, 16, 20);
        let g = ProjectionGeometry::for_dims(d);
        let p = forward_project(&Volume::zeros(d), 33.0, &g).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
        assert_eq!(p.nc(), g.channels);
    }

    #[test]
    fn auto_detector_covers_diagonal() {
        let g = ProjectionGeometry::for_dims(Dims::new(1, 150, 150));
        assert_eq!(g.channels, 215);
        assert!(g.channels as f64 >= 150.0 * 2f64.sqrt());
    }

    #[test]
    fn disk_center_channel_matches_chord() {
        let (n, r, a) = (81usize, 30.3, 0.01);
        let d = Dims::new(1, n, n);
        let c = (n as f64 - 1.0) / 2.0;
        let disk = Volume::from_fn(d, |_, x, y| {
            if (x as f64 - c).hypot(y as f64 - c) <= r {
                a
            } else {
                0.0
            }
        });
        let g = ProjectionGeometry::for_dims(d);
        let mid = (g.channels - 1) / 2;
        // channel `mid` is centred at t = 0 for odd counts, at -0.5 for even
        let t_mid = (mid as f64 + 0.5 - g.channels as f64 / 2.0) * g.pitch;
        let chord = 2.0 * (r * r - t_mid * t_mid).sqrt() * a;
        for angle in [0.0, 17.0, 45.0, 90.0, 123.4, 179.0] {
            let p = forward_project(&disk, angle, &g).unwrap();
            let got = p.row(0)[mid];
            assert!((got - chord).abs() / chord < 0.02, "angle {angle}: {got} vs {chord}");
        }
    }

    #[test]
    fn unit_voxel_mass_is_preserved() {
        let d = Dims::new(1, 31, 31);
        let mut v = Volume::zeros(d);
        v.set(0, 12, 19, 1.0);
        let g = ProjectionGeometry::for_dims(d);
        for k in 0..180 {
            let p = forward_project(&v, k as f64, &g).unwrap();
            let sum: f64 = p.values().iter().sum();
            assert!((sum - 1.0).abs() < 1e-3, "angle {k}: {sum}");
        }
    }

    #[test]
    fn back_projection_of_zero_is_zero() {
        let d = Dims::new(2, 9, 9);
        let g = ProjectionGeometry::for_dims(d);
        let p = Projection::new(40.0, 2, g.channels, vec![0.0; 2 * g.channels]).unwrap();
        let v = back_project(&p, &g, d).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn one_hot_channel_at_zero_degrees_is_a_y_strip() {
        let d = Dims::new(1, 24, 17);
        let g = ProjectionGeometry::for_dims(d);
        let mut values = vec![0.0; g.channels];
        values[g.channels / 2 + 3] = 1.0;
        let p = Projection::new(0.0, 1, g.channels, values).unwrap();
        let v = back_project(&p, &g, d).unwrap();
        let mut touched = 0;
        for x in 0..d.nx {
            let first = v.get(0, x, 0);
            for y in 0..d.ny {
                assert_eq!(v.get(0, x, y), first, "column x={x} not constant");
            }
            if first != 0.0 {
                touched += 1;
            }
        }
        assert!((1..=2).contains(&touched));
    }

    #[test]
    fn adjoint_dot_product_identity() {
        let d = Dims::new(2, 23, 31);
        let g = ProjectionGeometry::for_dims(d);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let angle = rng.random_range(0.0..180.0);
            let x = Volume::from_fn(d, |_, _, _| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = (0..2 * g.channels).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ax = forward_project(&x, angle, &g).unwrap();
            let lhs: f64 = ax.values().iter().zip(&y).map(|(a, b)| a * b).sum();
            let aty = back_project(&Projection::new(angle, 2, g.channels, y).unwrap(), &g, d).unwrap();
            let rhs = x.dot(&aty);
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()));
        }
    }

    #[test]
    fn rejects_bad_angles_and_shapes() {
        let d = Dims::new(1, 8, 8);
        let g = ProjectionGeometry::for_dims(d);
        assert!(forward_project(&Volume::zeros(d), 180.0, &g).is_err());
        assert!(forward_project(&Volume::zeros(d), -1.0, &g).is_err());
        let p = Projection::new(0.0, 1, g.channels + 1, vec![0.0; g.channels + 1]).unwrap();
        assert!(matches!(back_project(&p, &g, d), Err(Error::Geometry(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, proptest, ProptestConfig};

        fn rotate_quarter(v: &Volume) -> Volume {
            // (x, y) -> (c - (y - c), ...) : counter-clockwise by 90 degrees about the centre
            let d = v.dims();
            let n = d.nx;
            Volume::from_fn(d, |z, x, y| v.get(z, y, n - 1 - x))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn linear(seed in 0u64..10_000, angle in 0.0f64..180.0, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
                let d = Dims::new(1, 19, 14);
                let g = ProjectionGeometry::for_dims(d);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = Volume::from_fn(d, |_, _, _| rng.random_range(0.0..1.0));
                let z = Volume::from_fn(d, |_, _, _| rng.random_range(0.0..1.0));
                let mix = Volume::from_fn(d, |k, i, j| alpha * x.get(k, i, j) + beta * z.get(k, i, j));
                let px = forward_project(&x, angle, &g).unwrap();
                let pz = forward_project(&z, angle, &g).unwrap();
                let pm = forward_project(&mix, angle, &g).unwrap();
                for j in 0..g.channels {
                    let want = alpha * px.values()[j] + beta * pz.values()[j];
                    prop_assert!((pm.values()[j] - want).abs() < 1e-9);
                }
            }

            #[test]
            fn adjoint_every_angle(seed in 0u64..10_000, angle in 0.0f64..180.0) {
                let d = Dims::new(1, 16, 16);
                let g = ProjectionGeometry::for_dims(d);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = Volume::from_fn(d, |_, _, _| rng.random_range(-1.0..1.0));
                let y: Vec<f64> = (0..g.channels).map(|_| rng.random_range(-1.0..1.0)).collect();
                let lhs: f64 = forward_project(&x, angle, &g).unwrap().values().iter().zip(&y).map(|(a, b)| a * b).sum();
                let aty = back_project(&Projection::new(angle, 1, g.channels, y).unwrap(), &g, d).unwrap();
                let rhs = x.dot(&aty);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            }

            #[test]
            fn quarter_turn_shifts_angle(seed in 0u64..10_000, theta in 0u32..180) {
                let d = Dims::new(1, 21, 21);
                let g = ProjectionGeometry::for_dims(d);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = Volume::from_fn(d, |_, _, _| rng.random_range(0.0..1.0));
                let rotated = rotate_quarter(&x);
                let theta = theta as f64;
                let p_rot = forward_project(&rotated, theta, &g).unwrap();
                let (shifted, flipped) = if theta >= 90.0 { (theta - 90.0, false) } else { (theta + 90.0, true) };
                let p = forward_project(&x, shifted, &g).unwrap();
                let nc = g.channels;
                for j in 0..nc {
                    let other = if flipped { p.values()[nc - 1 - j] } else { p.values()[j] };
                    prop_assert!((p_rot.values()[j] - other).abs() < 1e-9, "theta {} channel {}", theta, j);
                }
            }
        }
    }
}
