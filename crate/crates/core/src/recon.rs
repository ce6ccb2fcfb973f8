//! Weighted least-squares reconstruction with an edge-preserving Huber
//! prior over the in-slice 8-neighbourhood.
//!
//! Minimises `0.5 * sum w (p - A x)^2 + beta * R(x)` with
//! `R(x) = sum_pairs c_sr * huber_delta(x_s - x_r)`, where orthogonal
//! neighbours have `c = 1` and diagonal ones `c = 1/sqrt(2)`.
//!
//! The solver is diagonally preconditioned Polak-Ribiere conjugate gradient.
//! Each step length comes from a majorise-minimise search on the exact
//! quadratic data term plus the Huber half-quadratic surrogate, so the
//! objective never increases. Non-negativity projects the step onto the
//! orthant; if the projected point fails to decrease the objective the step
//! is shortened to the largest feasible one instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::WeightedProjection;
use crate::par;
use crate::projector::{ProjectionGeometry, SystemOperator};
use crate::volume::{Dims, Volume};

const DIAG: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Neighbour offsets `(dx, dy, weight)`; each unordered pair counted once.
const PAIRS: [(isize, isize, f64); 4] = [(0, 1, 1.0), (1, 0, 1.0), (1, 1, DIAG), (1, -1, DIAG)];
const LINE_SEARCH_STEPS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconParams {
    /// Prior strength.
    pub beta: f64,
    /// Huber threshold between quadratic and linear penalty.
    pub delta: f64,
    pub max_iterations: usize,
    /// Stop once `|x_new - x| / |x_new|` drops below this.
    pub tolerance: f64,
    pub nonnegative: bool,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self {
            beta: 0.0,
            delta: 0.1 * crate::phantom::DEFAULT_ATTENUATION,
            max_iterations: 200,
            tolerance: 1e-4,
            nonnegative: true,
        }
    }
}

impl ReconParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Parameter(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Parameter(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be positive".into()));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Parameter(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconReport {
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every iteration.
    pub objective: Vec<f64>,
}

#[inline]
fn huber(t: f64, delta: f64) -> f64 {
    let a = t.abs();
    if a <= delta {
        0.5 * t * t
    } else {
        delta * a - 0.5 * delta * delta
    }
}

#[inline]
fn huber_slope(t: f64, delta: f64) -> f64 {
    t.clamp(-delta, delta)
}

/// Half-quadratic curvature `psi(t) / t`, an upper bound on the Huber
/// second derivative.
#[inline]
fn huber_weight(t: f64, delta: f64) -> f64 {
    let a = t.abs();
    if a <= delta {
        1.0
    } else {
        delta / a
    }
}

/// Visits every neighbour pair of every slice: `f(s, r, c)` with flat
/// indices into the slice.
fn for_each_pair(nx: usize, ny: usize, mut f: impl FnMut(usize, usize, f64)) {
    for x in 0..nx {
        for y in 0..ny {
            let s = x * ny + y;
            for &(dx, dy, c) in &PAIRS {
                let (xr, yr) = (x as isize + dx, y as isize + dy);
                if xr < 0 || yr < 0 || xr >= nx as isize || yr >= ny as isize {
                    continue;
                }
                f(s, xr as usize * ny + yr as usize, c);
            }
        }
    }
}

/// Edge-preserving roughness `R(x)` summed over all slices.
pub fn prior_value(volume: &Volume, delta: f64) -> f64 {
    prior_value_flat(volume.data(), volume.dims(), delta)
}

fn prior_value_flat(x: &[f64], dims: Dims, delta: f64) -> f64 {
    let n = dims.slice_len();
    par::map_range(dims.nz, |z| {
        let s = &x[z * n..(z + 1) * n];
        let mut acc = 0.0;
        for_each_pair(dims.nx, dims.ny, |a, b, c| acc += c * huber(s[a] - s[b], delta));
        acc
    })
    .into_iter()
    .sum()
}

fn prior_gradient(x: &[f64], dims: Dims, delta: f64) -> Vec<f64> {
    let n = dims.slice_len();
    let mut g = vec![0.0; x.len()];
    par::for_each_chunk_mut(&mut g, n, |z, gs| {
        let s = &x[z * n..(z + 1) * n];
        for_each_pair(dims.nx, dims.ny, |a, b, c| {
            let v = c * huber_slope(s[a] - s[b], delta);
            gs[a] += v;
            gs[b] -= v;
        });
    });
    g
}

fn prior_curvature(x: &[f64], dims: Dims, delta: f64) -> Vec<f64> {
    let n = dims.slice_len();
    let mut h = vec![0.0; x.len()];
    par::for_each_chunk_mut(&mut h, n, |z, hs| {
        let s = &x[z * n..(z + 1) * n];
        for_each_pair(dims.nx, dims.ny, |a, b, c| {
            let v = 2.0 * c * huber_weight(s[a] - s[b], delta);
            hs[a] += v;
            hs[b] += v;
        });
    });
    h
}

/// Derivative and surrogate curvature of `R(x + alpha d)` in `alpha`.
fn prior_line_terms(x: &[f64], d: &[f64], alpha: f64, dims: Dims, delta: f64) -> (f64, f64) {
    let n = dims.slice_len();
    par::map_range(dims.nz, |z| {
        let xs = &x[z * n..(z + 1) * n];
        let ds = &d[z * n..(z + 1) * n];
        let (mut slope, mut curv) = (0.0, 0.0);
        for_each_pair(dims.nx, dims.ny, |a, b, c| {
            let dd = ds[a] - ds[b];
            if dd == 0.0 {
                return;
            }
            let t = xs[a] - xs[b] + alpha * dd;
            slope += c * huber_slope(t, delta) * dd;
            curv += c * huber_weight(t, delta) * dd * dd;
        });
        (slope, curv)
    })
    .into_iter()
    .fold((0.0, 0.0), |(s, c), (a, b)| (s + a, c + b))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Measurement data stacked into the operator's order.
struct Problem {
    op: SystemOperator,
    p: Vec<f64>,
    w: Vec<f64>,
}

impl Problem {
    fn new(data: &[WeightedProjection], geom: &ProjectionGeometry, dims: Dims) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidInput("reconstruction needs at least one projection".into()));
        }
        for (i, v) in data.iter().enumerate() {
            if v.nz != dims.nz || v.nc != geom.channels {
                return Err(Error::Geometry(format!(
                    "view #{i} is {}x{}, expected {}x{}",
                    v.nz, v.nc, dims.nz, geom.channels
                )));
            }
            if v.attenuation.len() != v.nz * v.nc || v.weights.len() != v.nz * v.nc {
                return Err(Error::Geometry(format!("view #{i} has inconsistent buffer lengths")));
            }
            if v.attenuation.iter().chain(&v.weights).any(|x| !x.is_finite())
                || v.weights.iter().any(|&w| w < 0.0)
            {
                return Err(Error::InvalidInput(format!(
                    "view #{i} has non-finite data or negative weights"
                )));
            }
        }
        let angles: Vec<f64> = data.iter().map(|v| v.angle).collect();
        let op = SystemOperator::new(dims, *geom, &angles)?;
        let p = data.iter().flat_map(|v| v.attenuation.iter().copied()).collect();
        let w = data.iter().flat_map(|v| v.weights.iter().copied()).collect();
        Ok(Self { op, p, w })
    }

    fn data_term(&self, ax: &[f64]) -> f64 {
        0.5 * ax
            .iter()
            .zip(&self.p)
            .zip(&self.w)
            .map(|((a, p), w)| w * (p - a) * (p - a))
            .sum::<f64>()
    }

    /// `A^T W (A x - p)`
    fn data_gradient(&self, ax: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = ax
            .iter()
            .zip(&self.p)
            .zip(&self.w)
            .map(|((a, p), w)| w * (a - p))
            .collect();
        self.op.adjoint(&r)
    }

    /// `A^T W A 1`, the separable-surrogate curvature of the data term.
    fn data_curvature(&self) -> Vec<f64> {
        let ones = vec![1.0; self.op.dims().len()];
        let a1 = self.op.forward(&ones);
        let wa1: Vec<f64> = a1.iter().zip(&self.w).map(|(a, w)| a * w).collect();
        self.op.adjoint(&wa1)
    }
}

/// Composite objective of `volume` against `data`.
pub fn objective(
    data: &[WeightedProjection],
    geom: &ProjectionGeometry,
    volume: &Volume,
    params: &ReconParams,
) -> Result<f64> {
    let problem = Problem::new(data, geom, volume.dims())?;
    let ax = problem.op.forward(volume.data());
    Ok(problem.data_term(&ax) + params.beta * prior_value(volume, params.delta))
}

/// Prior strength balancing the data and prior terms at a cheap initial
/// estimate: one back projection normalised by ray density.
/// `beta = scale * data_term(x0) / R(x0)`; zero when `R(x0)` vanishes.
pub fn auto_beta(
    data: &[WeightedProjection],
    geom: &ProjectionGeometry,
    dims: Dims,
    delta: f64,
    scale: f64,
) -> Result<f64> {
    let problem = Problem::new(data, geom, dims)?;
    let wp: Vec<f64> = problem.p.iter().zip(&problem.w).map(|(p, w)| p * w).collect();
    let bp = problem.op.adjoint(&wp);
    let density = problem.data_curvature();
    let x0: Vec<f64> = bp
        .iter()
        .zip(&density)
        .map(|(b, d)| if *d > 0.0 { (b / d).max(0.0) } else { 0.0 })
        .collect();
    let ax0 = problem.op.forward(&x0);
    let r = prior_value_flat(&x0, dims, delta);
    if r <= 0.0 {
        return Ok(0.0);
    }
    Ok(scale * problem.data_term(&ax0) / r)
}

pub fn reconstruct(
    data: &[WeightedProjection],
    geom: &ProjectionGeometry,
    dims: Dims,
    init: Option<&Volume>,
    params: &ReconParams,
) -> Result<Volume> {
    reconstruct_with_report(data, geom, dims, init, params).map(|(v, _)| v)
}

pub fn reconstruct_with_report(
    data: &[WeightedProjection],
    geom: &ProjectionGeometry,
    dims: Dims,
    init: Option<&Volume>,
    params: &ReconParams,
) -> Result<(Volume, ReconReport)> {
    params.validate()?;
    let problem = Problem::new(data, geom, dims)?;
    let mut x = match init {
        Some(v) if v.dims() != dims => {
            return Err(Error::Geometry(format!(
                "initial volume is {:?}, expected {:?}",
                v.dims(),
                dims
            )))
        }
        Some(v) => v.data().to_vec(),
        None => vec![0.0; dims.len()],
    };
    if params.nonnegative {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let (beta, delta) = (params.beta, params.delta);
    let eval = |x: &[f64], ax: &[f64]| {
        let prior = if beta > 0.0 { beta * prior_value_flat(x, dims, delta) } else { 0.0 };
        problem.data_term(ax) + prior
    };

    let data_curv = problem.data_curvature();
    let mut ax = problem.op.forward(&x);
    let mut phi = eval(&x, &ax);
    let mut report = ReconReport {
        iterations: 0,
        converged: false,
        objective: vec![phi],
    };

    let mut prev: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None; // (grad, precond grad, direction)
    for _ in 0..params.max_iterations {
        report.iterations += 1;
        let mut grad = problem.data_gradient(&ax);
        let mut precond = data_curv.clone();
        if beta > 0.0 {
            for (g, pg) in grad.iter_mut().zip(prior_gradient(&x, dims, delta)) {
                *g += beta * pg;
            }
            for (h, ph) in precond.iter_mut().zip(prior_curvature(&x, dims, delta)) {
                *h += beta * ph;
            }
        }
        let floor = precond.iter().cloned().fold(0.0, f64::max) * 1e-9 + f64::MIN_POSITIVE;
        // bound-constrained coordinates are frozen
        let active = |i: usize| !(params.nonnegative && x[i] <= 0.0 && grad[i] > 0.0);
        let z: Vec<f64> = (0..x.len())
            .map(|i| if active(i) { grad[i] / precond[i].max(floor) } else { 0.0 })
            .collect();

        let mut dir: Vec<f64> = z.iter().map(|v| -v).collect();
        if let Some((g_old, z_old, d_old)) = &prev {
            let denom = dot(z_old, g_old);
            if denom > 0.0 {
                let num: f64 = z.iter().zip(&grad).zip(g_old).map(|((z, g), go)| z * (g - go)).sum();
                let pr = (num / denom).max(0.0);
                for (i, d) in dir.iter_mut().enumerate() {
                    if active(i) {
                        *d += pr * d_old[i];
                    }
                }
            }
        }
        if params.nonnegative {
            for (i, d) in dir.iter_mut().enumerate() {
                if x[i] <= 0.0 && *d < 0.0 {
                    *d = 0.0;
                }
            }
        }
        let mut slope0 = dot(&dir, &grad);
        if slope0 >= 0.0 {
            dir = z.iter().map(|v| -v).collect();
            slope0 = dot(&dir, &grad);
        }
        if slope0 >= 0.0 || dir.iter().all(|&d| d == 0.0) {
            report.converged = true;
            break;
        }

        let ad = problem.op.forward(&dir);
        let quad: f64 = ad.iter().zip(&problem.w).map(|(a, w)| w * a * a).sum();
        // majorise-minimise over the step length
        let prior_slope0 = if beta > 0.0 {
            prior_line_terms(&x, &dir, 0.0, dims, delta).0
        } else {
            0.0
        };
        let mut alpha = 0.0;
        for _ in 0..LINE_SEARCH_STEPS {
            let (mut slope, mut curv) = (slope0 + alpha * quad, quad);
            if beta > 0.0 {
                let (ps, pc) = prior_line_terms(&x, &dir, alpha, dims, delta);
                slope += beta * (ps - prior_slope0);
                curv += beta * pc;
            }
            if curv <= 0.0 {
                break;
            }
            let next = alpha - slope / curv;
            if (next - alpha).abs() <= 1e-12 * alpha.abs() {
                alpha = next;
                break;
            }
            alpha = next;
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            report.converged = true;
            break;
        }

        let mut clipped = false;
        let mut x_new: Vec<f64> = x
            .iter()
            .zip(&dir)
            .map(|(xi, di)| {
                let v = xi + alpha * di;
                if params.nonnegative && v < 0.0 {
                    clipped = true;
                    0.0
                } else {
                    v
                }
            })
            .collect();
        let mut ax_new = if clipped {
            problem.op.forward(&x_new)
        } else {
            ax.iter().zip(&ad).map(|(a, d)| a + alpha * d).collect()
        };
        let mut phi_new = eval(&x_new, &ax_new);
        if clipped && phi_new > phi {
            let feasible = x
                .iter()
                .zip(&dir)
                .filter(|(_, d)| **d < 0.0)
                .map(|(xi, di)| -xi / di)
                .fold(alpha, f64::min);
            x_new = x.iter().zip(&dir).map(|(xi, di)| (xi + feasible * di).max(0.0)).collect();
            ax_new = ax.iter().zip(&ad).map(|(a, d)| a + feasible * d).collect();
            phi_new = eval(&x_new, &ax_new);
        }
        if phi_new > phi {
            // rounding only; keep the current iterate
            report.converged = true;
            break;
        }

        let step: f64 = x_new.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale = norm(&x_new).max(f64::MIN_POSITIVE);
        x = x_new;
        ax = ax_new;
        phi = phi_new;
        report.objective.push(phi);
        prev = if clipped { None } else { Some((grad, z, dir)) };
        if step / scale < params.tolerance {
            report.converged = true;
            break;
        }
    }
    Ok((Volume::from_vec(dims, x)?, report))
}
