use edgeview::edges::{
    alignment_counts, draw_line, edge_alignment_table, ray_direction, volume_features, ConeParams, EdgeMap,
    EdgeParams, LineSegment,
};
use edgeview::volume::{Dims, Volume};
use proptest::prelude::*;

/// Per-pixel evaluation of the cone masks with vector algebra: a pixel is
/// inside when the unsigned cosine between its offset from the vertex and the
/// axis direction reaches cos(opening).
fn brute_force_counts(edges: &EdgeMap, segments: &[LineSegment], candidates: &[f64], opening: f64) -> Vec<u64> {
    let cos_open = (opening + 1e-9).to_radians().cos();
    candidates
        .iter()
        .map(|&theta| {
            let (ux, uy) = ray_direction(theta);
            let mut total = 0u64;
            for seg in segments {
                let [mx, my] = seg.midpoint();
                for x in 0..edges.nx() {
                    for y in 0..edges.ny() {
                        let (dx, dy) = (x as f64 - mx, y as f64 - my);
                        let r = dx.hypot(dy);
                        let inside = r == 0.0 || (dx * ux + dy * uy).abs() >= r * cos_open;
                        if inside && edges.get(x, y) {
                            total += 1;
                        }
                    }
                }
            }
            total
        })
        .collect()
}

fn grid() -> Vec<f64> {
    (0..180).map(f64::from).collect()
}

/// Paints a bar of the given half-width centred on a segment.
fn paint_bar(v: &mut Volume, z: usize, from: [f64; 2], to: [f64; 2], half_width: f64) {
    let d = v.dims();
    let (ex, ey) = (to[0] - from[0], to[1] - from[1]);
    let len2 = ex * ex + ey * ey;
    for x in 0..d.nx {
        for y in 0..d.ny {
            let (px, py) = (x as f64 - from[0], y as f64 - from[1]);
            let t = ((px * ex + py * ey) / len2).clamp(0.0, 1.0);
            let (qx, qy) = (px - t * ex, py - t * ey);
            if qx.hypot(qy) <= half_width {
                v.set(z, x, y, 1.0);
            }
        }
    }
}

/// Bar through the centre whose long axis runs along the rays of `theta`.
fn bar_along_view(v: &mut Volume, z: usize, theta: f64, half_len: f64, half_width: f64) {
    let d = v.dims();
    let (cx, cy) = ((d.nx as f64 - 1.0) / 2.0, (d.ny as f64 - 1.0) / 2.0);
    let (ux, uy) = ray_direction(theta);
    paint_bar(
        v,
        z,
        [cx - half_len * ux, cy - half_len * uy],
        [cx + half_len * ux, cy + half_len * uy],
        half_width,
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn counts_match_per_pixel_masks(
        lines in prop::collection::vec((0.0f64..48.0, 0.0f64..48.0, 0.0f64..48.0, 0.0f64..48.0), 1..=5),
        noise in prop::collection::vec((0usize..48, 0usize..48), 0..40),
        opening in 1.0f64..30.0,
    ) {
        let mut edges = EdgeMap::empty(48, 48);
        let mut segments = Vec::new();
        for &(x0, y0, x1, y1) in &lines {
            draw_line(&mut edges, [x0.round(), y0.round()], [x1.round(), y1.round()]);
            segments.push(LineSegment::new([x0.round(), y0.round()], [x1.round(), y1.round()]));
        }
        for &(x, y) in &noise {
            edges.set(x, y, true);
        }
        let cone = ConeParams { opening_deg: opening, ..ConeParams::default() };
        let got = alignment_counts(&edges, &segments, &grid(), &cone);
        prop_assert_eq!(got, brute_force_counts(&edges, &segments, &grid(), opening));
    }
}

#[test]
fn full_pipeline_matches_per_pixel_masks() {
    let params = EdgeParams::default();
    let mut v = Volume::zeros(Dims::new(1, 64, 64));
    paint_bar(&mut v, 0, [10.0, 12.0], [50.0, 40.0], 2.0);
    paint_bar(&mut v, 0, [8.0, 55.0], [56.0, 52.0], 1.5);
    let table = edge_alignment_table(&v, &grid(), &params).unwrap();
    let f = &volume_features(&v, &params).unwrap()[0];
    assert!(!f.segments.is_empty());
    let raw = brute_force_counts(&f.edges, &f.segments, &grid(), params.cone.opening_deg);
    assert_eq!(table.raw, raw);
    let max = *raw.iter().max().unwrap() as f64;
    let expect: Vec<f64> = raw.iter().map(|&r| r as f64 / max).collect();
    assert_eq!(table.values, expect);
}

#[test]
fn long_line_at_45_degrees_peaks_at_45() {
    let mut v = Volume::zeros(Dims::new(3, 96, 96));
    for z in 0..3 {
        bar_along_view(&mut v, z, 45.0, 40.0, 1.5);
    }
    let t = edge_alignment_table(&v, &grid(), &EdgeParams::default()).unwrap();
    let best = t.argmax();
    assert!(best.iter().all(|&a| (a - 45.0).abs() <= 1.0), "{best:?}");
}

#[test]
fn slice_accumulators_add() {
    let mut v = Volume::zeros(Dims::new(2, 64, 64));
    bar_along_view(&mut v, 0, 30.0, 25.0, 2.0);
    bar_along_view(&mut v, 1, 110.0, 20.0, 3.0);
    paint_bar(&mut v, 1, [5.0, 5.0], [20.0, 50.0], 1.0);
    let params = EdgeParams::default();
    let both = edge_alignment_table(&v, &grid(), &params).unwrap();
    let a = edge_alignment_table(&v.single_slice(0), &grid(), &params).unwrap();
    let b = edge_alignment_table(&v.single_slice(1), &grid(), &params).unwrap();
    let sum: Vec<u64> = a.raw.iter().zip(&b.raw).map(|(x, y)| x + y).collect();
    assert_eq!(both.raw, sum);
}

#[test]
fn quarter_turn_shifts_argmax_by_ninety() {
    let params = EdgeParams::default();
    for theta in [20.0, 55.0, 100.0, 160.0] {
        let n = 96;
        let mut v = Volume::zeros(Dims::new(1, n, n));
        bar_along_view(&mut v, 0, theta, 35.0, 2.0);
        // (x, y) -> (y, n - 1 - x) turns directions by +90 degrees
        let rotated = Volume::from_fn(v.dims(), |z, x, y| v.get(z, n - 1 - y, x));
        let a = edge_alignment_table(&v, &grid(), &params).unwrap().argmax();
        let b = edge_alignment_table(&rotated, &grid(), &params).unwrap().argmax();
        let dist = |p: f64, q: f64| {
            let d = (p - q).rem_euclid(180.0);
            d.min(180.0 - d)
        };
        assert!(a.iter().all(|&p| dist(p, theta) <= 1.0), "{theta}: {a:?}");
        assert!(b.iter().all(|&q| dist(q, theta + 90.0) <= 1.0), "{theta}: {b:?}");
    }
}
