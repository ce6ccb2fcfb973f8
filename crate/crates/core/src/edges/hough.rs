//! Progressive probabilistic Hough transform.
//!
//! Edge pixels are visited in a seeded random order. Each visit votes into
//! a (rho, theta) accumulator; once the pixel's best bin reaches the vote
//! threshold, the corresponding line is walked in both directions from the
//! pixel, bridging gaps of up to `max_gap` pixels. A pixel counts as on
//! the line when it is within one pixel across the walking direction. Every pixel on the walked
//! stretch leaves the pool, and if the stretch is long enough it becomes a
//! segment and its pixels withdraw their votes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{EdgeMap, LineSegment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughParams {
    pub vote_threshold: u32,
    /// Minimum Euclidean segment length in pixels.
    pub min_length: f64,
    /// Largest run of missing pixels bridged while walking a line.
    pub max_gap: u32,
    pub theta_resolution_deg: f64,
    pub rho_resolution: f64,
    pub seed: u64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            vote_threshold: 10,
            min_length: 10.0,
            max_gap: 3,
            theta_resolution_deg: 1.0,
            rho_resolution: 1.0,
            seed: 0,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.vote_threshold > 0
            && self.min_length > 0.0
            && self.theta_resolution_deg > 0.0
            && self.theta_resolution_deg <= 180.0
            && self.rho_resolution > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid Hough parameters {self:?}")))
        }
    }
}

struct Accumulator {
    n_theta: usize,
    n_rho: usize,
    rho_offset: f64,
    rho_res: f64,
    trig: Vec<(f64, f64)>,
    votes: Vec<i32>,
}

impl Accumulator {
    fn new(nx: usize, ny: usize, p: &HoughParams) -> Self {
        let n_theta = (180.0 / p.theta_resolution_deg).round().max(1.0) as usize;
        let max_rho = ((nx * nx + ny * ny) as f64).sqrt();
        let rho_offset = (max_rho / p.rho_resolution).ceil();
        let n_rho = 2 * rho_offset as usize + 1;
        let trig = (0..n_theta)
            .map(|k| {
                let t = (k as f64 * p.theta_resolution_deg).to_radians();
                (t.cos(), t.sin())
            })
            .collect();
        Self {
            n_theta,
            n_rho,
            rho_offset,
            rho_res: p.rho_resolution,
            trig,
            votes: vec![0; n_theta * n_rho],
        }
    }

    fn bin(&self, k: usize, x: usize, y: usize) -> usize {
        let (c, s) = self.trig[k];
        let r = ((x as f64 * c + y as f64 * s) / self.rho_res).round() + self.rho_offset;
        k * self.n_rho + r as usize
    }

    /// Adds the pixel's votes; returns the best bin's count and theta index.
    fn vote(&mut self, x: usize, y: usize) -> (i32, usize) {
        let mut best = (i32::MIN, 0);
        for k in 0..self.n_theta {
            let b = self.bin(k, x, y);
            self.votes[b] += 1;
            if self.votes[b] > best.0 {
                best = (self.votes[b], k);
            }
        }
        best
    }

    fn unvote(&mut self, x: usize, y: usize) {
        for k in 0..self.n_theta {
            let b = self.bin(k, x, y);
            self.votes[b] -= 1;
        }
    }
}

/// Pixel positions visited when walking from `start` with `step`.
struct Walk {
    fx: f64,
    fy: f64,
    dx: f64,
    dy: f64,
    nx: usize,
    ny: usize,
}

impl Iterator for Walk {
    type Item = (usize, usize);
    fn next(&mut self) -> Option<(usize, usize)> {
        self.fx += self.dx;
        self.fy += self.dy;
        let (x, y) = (self.fx.round(), self.fy.round());
        if x < 0.0 || y < 0.0 || x >= self.nx as f64 || y >= self.ny as f64 {
            None
        } else {
            Some((x as usize, y as usize))
        }
    }
}

pub fn ppht(edges: &EdgeMap, params: &HoughParams) -> Result<Vec<LineSegment>> {
    params.validate()?;
    let (nx, ny) = (edges.nx(), edges.ny());
    let mut points: Vec<(usize, usize)> = (0..nx)
        .flat_map(|x| (0..ny).map(move |y| (x, y)))
        .filter(|&(x, y)| edges.get(x, y))
        .collect();
    if points.is_empty() {
        return Ok(Vec::new());
    }
    points.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));

    let mut acc = Accumulator::new(nx, ny, params);
    let mut pool: Vec<bool> = edges.data().iter().map(|&v| v != 0).collect();
    let mut voted = vec![false; nx * ny];
    let mut segments = Vec::new();

    for &(x0, y0) in &points {
        if !pool[x0 * ny + y0] {
            continue;
        }
        let (count, k) = acc.vote(x0, y0);
        voted[x0 * ny + y0] = true;
        if count < params.vote_threshold as i32 {
            continue;
        }

        // line direction is perpendicular to the bin's normal
        let (c, s) = acc.trig[k];
        let (lx, ly) = (-s, c);
        let major = lx.abs().max(ly.abs());
        let (sx, sy) = (lx / major, ly / major);
        let walk = |sign: f64| Walk {
            fx: x0 as f64,
            fy: y0 as f64,
            dx: sign * sx,
            dy: sign * sy,
            nx,
            ny,
        };

        // pixels one step across the minor axis also count as on the line
        let side = if sx.abs() >= sy.abs() { (0isize, 1isize) } else { (1, 0) };
        let band = |x: usize, y: usize| {
            [(0isize, 0isize), side, (-side.0, -side.1)]
                .into_iter()
                .filter_map(move |(ox, oy)| {
                    let (u, v) = (x as isize + ox, y as isize + oy);
                    (u >= 0 && v >= 0 && u < nx as isize && v < ny as isize)
                        .then_some((u as usize, v as usize))
                })
        };

        let mut ends = [(x0, y0); 2];
        let mut reach = [0usize; 2];
        for ((end, steps), sign) in ends.iter_mut().zip(reach.iter_mut()).zip([1.0, -1.0]) {
            let mut gap = 0;
            for (n, (x, y)) in walk(sign).enumerate() {
                if let Some(hit) = band(x, y).find(|&(u, v)| pool[u * ny + v]) {
                    gap = 0;
                    *end = hit;
                    *steps = n + 1;
                } else {
                    gap += 1;
                    if gap > params.max_gap {
                        break;
                    }
                }
            }
        }
        let segment = LineSegment::new(
            [ends[1].0 as f64, ends[1].1 as f64],
            [ends[0].0 as f64, ends[0].1 as f64],
        );
        let good = segment.length() >= params.min_length;

        // retire the walked stretch, including the seed pixel
        let mut retire = |x: usize, y: usize| {
            let i = x * ny + y;
            if pool[i] {
                if good && voted[i] {
                    acc.unvote(x, y);
                    voted[i] = false;
                }
                pool[i] = false;
            }
        };
        for (u, v) in band(x0, y0) {
            retire(u, v);
        }
        for (steps, sign) in reach.iter().zip([1.0, -1.0]) {
            for (x, y) in walk(sign).take(*steps) {
                for (u, v) in band(x, y) {
                    retire(u, v);
                }
            }
        }
        if good {
            segments.push(segment);
        }
    }
    Ok(segments)
}
