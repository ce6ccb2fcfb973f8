//! Edge maps, Hough line segments and the edge-alignment score.
//!
//! Directions are compared in view-angle terms: a direction in the image
//! plane corresponds to the view angle whose rays run along it. With the
//! projector convention (rays along `(-sin θ, cos θ)`), a direction at
//! angle `phi` from the x-axis belongs to view `theta = phi - 90 (mod 180)`.
//! A segment is "aligned" with a view when the rays graze along it.

mod canny;
mod hough;

pub use canny::{canny, gradient_magnitude};
pub use hough::{ppht, HoughParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::projector::check_angle;
use crate::selection::angular_distance;
use crate::volume::Volume;

/// Angular slack on the cone boundary so pixels lying exactly on it are
/// counted the same way regardless of how the angle was computed.
pub const CONE_SLACK_DEG: f64 = 1e-9;

/// Folds an angle in degrees into `[0, 180)`.
pub fn fold_half_turn(angle: f64) -> f64 {
    let a = angle.rem_euclid(180.0);
    if a >= 180.0 {
        0.0
    } else {
        a
    }
}

/// View angle whose rays travel along image direction `(dx, dy)`.
pub fn view_angle_of_direction(dx: f64, dy: f64) -> f64 {
    fold_half_turn(dy.atan2(dx).to_degrees() - 90.0)
}

/// Unit ray direction `(dx, dy)` of a view angle.
pub fn ray_direction(theta: f64) -> (f64, f64) {
    let (s, c) = theta.to_radians().sin_cos();
    (-s, c)
}

/// Binary edge image, `1` marks an edge pixel. Indexed `[x][y]` like a
/// volume slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    nx: usize,
    ny: usize,
    data: Vec<u8>,
}

impl EdgeMap {
    pub fn empty(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            data: vec![0; nx * ny],
        }
    }

    pub fn from_vec(nx: usize, ny: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != nx * ny || data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidInput(format!(
                "edge map needs {} values in {{0, 1}}",
                nx * ny
            )));
        }
        Ok(Self { nx, ny, data })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[x * self.ny + y] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[x * self.ny + y] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(move |(i, _)| (i / self.ny, i % self.ny))
    }

    /// Number of pixels set in both maps.
    pub fn overlap(&self, other: &EdgeMap) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a != 0 && **b != 0)
            .count()
    }
}

/// Rasterises a straight line (DDA along the major axis), clipping to the map.
pub fn draw_line(map: &mut EdgeMap, from: [f64; 2], to: [f64; 2]) {
    let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
    let steps = dx.abs().max(dy.abs()).round().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let (x, y) = ((from[0] + t * dx).round(), (from[1] + t * dy).round());
        if x >= 0.0 && y >= 0.0 && (x as usize) < map.nx && (y as usize) < map.ny {
            map.set(x as usize, y as usize, true);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl LineSegment {
    pub fn new(start: [f64; 2], end: [f64; 2]) -> Self {
        Self { start, end }
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [
            (self.start[0] + self.end[0]) / 2.0,
            (self.start[1] + self.end[1]) / 2.0,
        ]
    }

    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }

    /// Image-plane orientation: `atan2(dy, dx)` folded into `[0, 180)`.
    pub fn orientation(&self) -> f64 {
        fold_half_turn(
            (self.end[1] - self.start[1])
                .atan2(self.end[0] - self.start[0])
                .to_degrees(),
        )
    }

    /// View angle whose rays run parallel to the segment.
    pub fn view_angle(&self) -> f64 {
        fold_half_turn(self.orientation() - 90.0)
    }
}

/// Which direction the alignment cone points along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeAxis {
    /// Cone axis follows the candidate view angle.
    #[default]
    Candidate,
    /// Cone axis fixed to the segment; a candidate scores the cone's
    /// overlap only when it lies within the opening of the segment's angle.
    Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    /// Half-opening in degrees, in `(0, 90)`.
    pub opening_deg: f64,
    #[serde(default)]
    pub axis: ConeAxis,
}

impl Default for ConeParams {
    fn default() -> Self {
        Self {
            opening_deg: 10.0,
            axis: ConeAxis::Candidate,
        }
    }
}

impl ConeParams {
    pub fn validate(&self) -> Result<()> {
        if self.opening_deg > 0.0 && self.opening_deg < 90.0 {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "cone opening must lie in (0, 90), got {}",
                self.opening_deg
            )))
        }
    }
}

/// Whether offset `(dx, dy)` from a cone vertex lies in the double-sided
/// cone around view angle `axis`. The vertex itself is inside.
#[inline]
pub fn in_cone(dx: f64, dy: f64, axis: f64, opening_deg: f64) -> bool {
    if dx == 0.0 && dy == 0.0 {
        return true;
    }
    angular_distance(view_angle_of_direction(dx, dy), axis) <= opening_deg + CONE_SLACK_DEG
}

/// Binary mask of the pixels in the alignment cone of `segment` for
/// candidate `theta`.
pub fn cone_mask(
    segment: &LineSegment,
    theta: f64,
    cone: &ConeParams,
    nx: usize,
    ny: usize,
) -> Result<EdgeMap> {
    check_angle(theta)?;
    cone.validate()?;
    let mut mask = EdgeMap::empty(nx, ny);
    let axis = match cone.axis {
        ConeAxis::Candidate => theta,
        ConeAxis::Segment => {
            if angular_distance(theta, segment.view_angle()) > cone.opening_deg + CONE_SLACK_DEG {
                return Ok(mask);
            }
            segment.view_angle()
        }
    };
    let [mx, my] = segment.midpoint();
    for x in 0..nx {
        for y in 0..ny {
            if in_cone(x as f64 - mx, y as f64 - my, axis, cone.opening_deg) {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

/// Unnormalised alignment counts: for every candidate, the number of edge
/// pixels inside each segment's cone, summed over segments.
pub fn alignment_counts(
    edges: &EdgeMap,
    segments: &[LineSegment],
    candidates: &[f64],
    cone: &ConeParams,
) -> Vec<u64> {
    let mut counts = vec![0u64; candidates.len()];
    let pixels: Vec<(f64, f64)> = edges.pixels().map(|(x, y)| (x as f64, y as f64)).collect();
    let eps = cone.opening_deg + CONE_SLACK_DEG;
    for seg in segments {
        let [mx, my] = seg.midpoint();
        match cone.axis {
            ConeAxis::Candidate => {
                for &(x, y) in &pixels {
                    let (dx, dy) = (x - mx, y - my);
                    if dx == 0.0 && dy == 0.0 {
                        counts.iter_mut().for_each(|c| *c += 1);
                        continue;
                    }
                    let psi = view_angle_of_direction(dx, dy);
                    for (c, &theta) in counts.iter_mut().zip(candidates) {
                        if angular_distance(psi, theta) <= eps {
                            *c += 1;
                        }
                    }
                }
            }
            ConeAxis::Segment => {
                let axis = seg.view_angle();
                let inside = pixels
                    .iter()
                    .filter(|&&(x, y)| in_cone(x - mx, y - my, axis, cone.opening_deg))
                    .count() as u64;
                for (c, &theta) in counts.iter_mut().zip(candidates) {
                    if angular_distance(theta, axis) <= eps {
                        *c += inside;
                    }
                }
            }
        }
    }
    counts
}

/// Knobs of the edge pipeline. Canny thresholds are relative: `high` is
/// `high_ratio` times the slice's peak smoothed gradient, `low` is
/// `low_ratio` times `high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    pub sigma: f64,
    pub high_ratio: f64,
    pub low_ratio: f64,
    pub hough: HoughParams,
    pub cone: ConeParams,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            high_ratio: 0.2,
            low_ratio: 0.5,
            hough: HoughParams::default(),
            cone: ConeParams::default(),
        }
    }
}

impl EdgeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0
            && self.high_ratio > 0.0
            && self.high_ratio <= 1.0
            && self.low_ratio > 0.0
            && self.low_ratio <= 1.0)
        {
            return Err(Error::Parameter(format!(
                "need sigma > 0 and threshold ratios in (0, 1], got {self:?}"
            )));
        }
        self.hough.validate()?;
        self.cone.validate()
    }
}

/// Edge map and Hough segments of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceFeatures {
    pub edges: EdgeMap,
    pub segments: Vec<LineSegment>,
}

/// Canny with relative thresholds followed by PPHT. A slice without any
/// gradient yields no edges.
pub fn slice_features(slice: &[f64], nx: usize, ny: usize, params: &EdgeParams) -> Result<SliceFeatures> {
    params.validate()?;
    let peak = gradient_magnitude(slice, nx, ny, params.sigma)?
        .into_iter()
        .fold(0.0, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Ok(SliceFeatures {
            edges: EdgeMap::empty(nx, ny),
            segments: Vec::new(),
        });
    }
    let high = params.high_ratio * peak;
    let edges = canny(slice, nx, ny, params.sigma, params.low_ratio * high, high)?;
    let segments = ppht(&edges, &params.hough)?;
    Ok(SliceFeatures { edges, segments })
}

pub fn volume_features(volume: &Volume, params: &EdgeParams) -> Result<Vec<SliceFeatures>> {
    let d = volume.dims();
    par::map_range(d.nz, |z| slice_features(volume.slice(z), d.nx, d.ny, params))
        .into_iter()
        .collect()
}

/// Edge-alignment score over a candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentTable {
    pub angles: Vec<f64>,
    /// Accumulated edge/cone overlaps before normalisation.
    pub raw: Vec<u64>,
    /// `raw / max(raw)`, or all zeros when nothing overlaps.
    pub values: Vec<f64>,
}

impl AlignmentTable {
    pub fn from_raw(angles: Vec<f64>, raw: Vec<u64>) -> Self {
        let peak = raw.iter().copied().max().unwrap_or(0);
        let values = raw
            .iter()
            .map(|&r| if peak == 0 { 0.0 } else { r as f64 / peak as f64 })
            .collect();
        Self { angles, raw, values }
    }

    /// Candidates attaining the maximum score.
    pub fn argmax(&self) -> Vec<f64> {
        let peak = self.raw.iter().copied().max().unwrap_or(0);
        self.angles
            .iter()
            .zip(&self.raw)
            .filter(|(_, &r)| r == peak)
            .map(|(&a, _)| a)
            .collect()
    }
}

pub(crate) fn check_candidates(candidates: &[f64]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("candidate angle list is empty".into()));
    }
    candidates.iter().try_for_each(|&a| check_angle(a))
}

/// Edge-alignment function: Canny and PPHT per slice, cone overlaps summed
/// over slices and segments, normalised to a maximum of one.
pub fn edge_alignment_table(
    volume: &Volume,
    candidates: &[f64],
    params: &EdgeParams,
) -> Result<AlignmentTable> {
    check_candidates(candidates)?;
    let features = volume_features(volume, params)?;
    Ok(alignment_from_features(&features, candidates, &params.cone))
}

pub fn alignment_from_features(
    features: &[SliceFeatures],
    candidates: &[f64],
    cone: &ConeParams,
) -> AlignmentTable {
    let per_slice = par::map_range(features.len(), |z| {
        alignment_counts(&features[z].edges, &features[z].segments, candidates, cone)
    });
    let mut raw = vec![0u64; candidates.len()];
    for counts in per_slice {
        raw.iter_mut().zip(counts).for_each(|(r, c)| *r += c);
    }
    AlignmentTable::from_raw(candidates.to_vec(), raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    #[test]
    fn direction_convention() {
        // rays at 0 degrees travel along +y
        assert_eq!(view_angle_of_direction(0.0, 1.0), 0.0);
        assert_eq!(view_angle_of_direction(0.0, -1.0), 0.0);
        assert!((view_angle_of_direction(1.0, 0.0) - 90.0).abs() < 1e-12);
        let (dx, dy) = ray_direction(30.0);
        assert!((view_angle_of_direction(dx, dy) - 30.0).abs() < 1e-9);
        let seg = LineSegment::new([0.0, 0.0], [10.0, 0.0]);
        assert_eq!(seg.orientation(), 0.0);
        assert_eq!(seg.view_angle(), 90.0);
    }

    #[test]
    fn wide_cone_covers_almost_everything() {
        let seg = LineSegment::new([20.0, 10.0], [20.0, 30.0]);
        let cone = ConeParams { opening_deg: 89.9, ..Default::default() };
        for theta in [0.0, 33.0, 90.0, 151.0] {
            let m = cone_mask(&seg, theta, &cone, 41, 41).unwrap();
            assert!(m.count() as f64 > 0.97 * (41 * 41) as f64, "{theta}: {}", m.count());
            assert!(m.count() < 41 * 41);
        }
    }

    #[test]
    fn aligned_cone_holds_endpoints() {
        let seg = LineSegment::new([5.0, 7.0], [30.0, 19.0]);
        let cone = ConeParams::default();
        let m = cone_mask(&seg, seg.view_angle(), &cone, 40, 40).unwrap();
        assert!(m.get(5, 7) && m.get(30, 19));
        let on_pixel = LineSegment::new([4.0, 6.0], [30.0, 20.0]);
        let m = cone_mask(&on_pixel, on_pixel.view_angle(), &cone, 40, 40).unwrap();
        assert!(m.get(17, 13), "vertex pixel");
    }

    #[test]
    fn perpendicular_cone_misses_endpoints() {
        let seg = LineSegment::new([4.0, 20.0], [36.0, 20.0]);
        let cone = ConeParams { opening_deg: 5.0, ..Default::default() };
        let theta = fold_half_turn(seg.view_angle() + 90.0);
        let m = cone_mask(&seg, theta, &cone, 41, 41).unwrap();
        assert!(!m.get(4, 20) && !m.get(36, 20));
        // brute-force membership: only pixels within 5 degrees of the x = 20 column
        for x in 0..41usize {
            for y in 0..41usize {
                let (dx, dy) = (x as f64 - 20.0, y as f64 - 20.0);
                let want = (dx == 0.0 && dy == 0.0) || dx.abs().atan2(dy.abs()).to_degrees() <= 5.0;
                assert_eq!(m.get(x, y), want, "({x},{y})");
            }
        }
    }

    #[test]
    fn segment_axis_mode_gates_on_candidate() {
        let seg = LineSegment::new([4.0, 20.0], [36.0, 20.0]);
        let cone = ConeParams { opening_deg: 10.0, axis: ConeAxis::Segment };
        assert!(cone_mask(&seg, 90.0, &cone, 41, 41).unwrap().count() > 0);
        assert!(cone_mask(&seg, 95.0, &cone, 41, 41).unwrap().count() > 0);
        assert_eq!(cone_mask(&seg, 60.0, &cone, 41, 41).unwrap().count(), 0);
    }

    #[test]
    fn bad_cone_or_angle_rejected() {
        let seg = LineSegment::new([0.0, 0.0], [1.0, 1.0]);
        assert!(cone_mask(&seg, 180.0, &ConeParams::default(), 4, 4).is_err());
        let cone = ConeParams { opening_deg: 90.0, ..Default::default() };
        assert!(cone_mask(&seg, 0.0, &cone, 4, 4).is_err());
    }

    #[test]
    fn empty_volume_scores_zero() {
        let v = Volume::zeros(Dims::new(2, 32, 32));
        let cands: Vec<f64> = (0..180).map(f64::from).collect();
        let t = edge_alignment_table(&v, &cands, &EdgeParams::default()).unwrap();
        assert!(t.values.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn empty_candidates_rejected() {
        let v = Volume::zeros(Dims::new(1, 8, 8));
        assert!(edge_alignment_table(&v, &[], &EdgeParams::default()).is_err());
        assert!(edge_alignment_table(&v, &[190.0], &EdgeParams::default()).is_err());
    }

    #[test]
    fn fold_and_draw() {
        assert_eq!(fold_half_turn(-30.0), 150.0);
        assert_eq!(fold_half_turn(180.0), 0.0);
        assert_eq!(fold_half_turn(-1e-18), 0.0);
        let mut m = EdgeMap::empty(10, 10);
        draw_line(&mut m, [0.0, 0.0], [9.0, 9.0]);
        assert_eq!(m.count(), 10);
        assert!(EdgeMap::from_vec(2, 2, vec![0, 1, 2, 0]).is_err());
    }
}
