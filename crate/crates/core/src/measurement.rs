//! Poisson transmission counts and their conversion to weighted attenuation
//! data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::par;
use crate::projector::{check_angle, Projection};

pub const DEFAULT_BLANK_INTENSITY: f64 = 10_000.0;
/// Counts below this floor are clamped before taking the log and get zero
/// weight.
pub const MIN_COUNT: f64 = 1.0;

/// Raw detector counts for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct CountData {
    angle: f64,
    nz: usize,
    nc: usize,
    counts: Vec<u64>,
    blank_intensity: f64,
}

impl CountData {
    pub fn new(angle: f64, nz: usize, nc: usize, counts: Vec<u64>, blank_intensity: f64) -> Result<Self> {
        check_angle(angle)?;
        check_blank(blank_intensity)?;
        if counts.len() != nz * nc {
            return Err(Error::Geometry(format!("{} counts for a {nz}x{nc} view", counts.len())));
        }
        Ok(Self {
            angle,
            nz,
            nc,
            counts,
            blank_intensity,
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
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
    pub fn blank_intensity(&self) -> f64 {
        self.blank_intensity
    }
}

/// Attenuation line integrals with per-channel statistical weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedProjection {
    pub angle: f64,
    pub nz: usize,
    pub nc: usize,
    pub attenuation: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedProjection {
    /// Noise-free data: exact line integrals weighted by their expected
    /// counts `I0 exp(-p)`.
    pub fn noiseless(projection: &Projection, blank_intensity: f64) -> Result<Self> {
        check_blank(blank_intensity)?;
        Ok(Self {
            angle: projection.angle(),
            nz: projection.nz(),
            nc: projection.nc(),
            attenuation: projection.values().to_vec(),
            weights: projection
                .values()
                .iter()
                .map(|p| blank_intensity * (-p).exp())
                .collect(),
        })
    }

    /// Same data with unit weights, i.e. plain least squares.
    pub fn unweighted(projection: &Projection) -> Self {
        Self {
            angle: projection.angle(),
            nz: projection.nz(),
            nc: projection.nc(),
            attenuation: projection.values().to_vec(),
            weights: vec![1.0; projection.values().len()],
        }
    }
}

fn check_blank(i0: f64) -> Result<()> {
    if i0.is_finite() && i0 > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("blank-scan intensity must be > 0, got {i0}")))
    }
}

/// splitmix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the noise substream for one (view angle, slice) pair. Keyed by
/// the angle itself so a view's noise does not depend on acquisition order.
pub fn substream_seed(seed: u64, angle: f64, slice: usize) -> u64 {
    let angle_key = (angle * 1e6).round() as i64 as u64;
    mix(mix(mix(seed) ^ angle_key) ^ slice as u64)
}

pub fn simulate_counts(projection: &Projection, blank_intensity: f64, seed: u64) -> Result<CountData> {
    check_blank(blank_intensity)?;
    if projection.values().iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidInput("line integrals must be >= 0 to simulate counts".into()));
    }
    let (nz, nc, angle) = (projection.nz(), projection.nc(), projection.angle());
    let rows = par::map_range(nz, |z| {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, angle, z));
        projection
            .row(z)
            .iter()
            .map(|&p| {
                let mean = blank_intensity * (-p).exp();
                if mean > 0.0 {
                    // Poisson::new only fails for non-positive or non-finite means
                    Poisson::new(mean).map(|d| d.sample(&mut rng) as u64).unwrap_or(0)
                } else {
                    0
                }
            })
            .collect::<Vec<_>>()
    });
    CountData::new(angle, nz, nc, rows.concat(), blank_intensity)
}

pub fn counts_to_attenuation(counts: &CountData) -> WeightedProjection {
    let i0 = counts.blank_intensity();
    let (attenuation, weights) = counts
        .counts()
        .iter()
        .map(|&c| {
            let c = c as f64;
            let clamped = c < MIN_COUNT;
            let p = -(c.max(MIN_COUNT) / i0).ln();
            (p, if clamped { 0.0 } else { c })
        })
        .unzip();
    WeightedProjection {
        angle: counts.angle(),
        nz: counts.nz(),
        nc: counts.nc(),
        attenuation,
        weights,
    }
}
