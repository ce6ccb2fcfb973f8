//! Browser bindings for three interactive operations on a single square
//! slice: edge alignment, angle spacing, and next-view selection.
//!
//! Slices are row-major `n * n` arrays indexed `x * n + y`, the same layout
//! the core library uses for one axial slice.

use edgeview::edges::{edge_alignment_table, slice_features, EdgeParams};
use edgeview::phantom::{generate_phantom, PhantomSpec, Preset};
use edgeview::selection::{angle_spacing_table, candidate_grid, score_candidates, AngleState};
use edgeview::volume::{Dims, Volume};
use wasm_bindgen::prelude::*;

fn slice_volume(slice: &[f64], n: usize) -> Result<Volume, String> {
    Volume::from_vec(Dims::new(1, n, n), slice.to_vec()).map_err(|e| e.to_string())
}

fn grid() -> Vec<f64> {
    candidate_grid(1.0).expect("1 degree divides the half turn")
}

/// One slice of a named phantom preset.
pub fn preset_slice(name: &str, n: usize) -> Result<Vec<f64>, String> {
    let preset = match name {
        "blocks" => Preset::Blocks,
        "mixed" => Preset::Mixed,
        "rectangle" => Preset::Rectangle,
        other => return Err(format!("unknown preset `{other}`")),
    };
    let v = generate_phantom(&PhantomSpec::preset(preset, Dims::new(1, n, n))).map_err(|e| e.to_string())?;
    Ok(v.into_vec())
}

/// Canny edge map (0/1) followed by the detected segments as flat
/// `[x0, y0, x1, y1, ...]`.
pub fn edges_and_segments(slice: &[f64], n: usize) -> Result<(Vec<u8>, Vec<f64>), String> {
    slice_volume(slice, n)?;
    let f = slice_features(slice, n, n, &EdgeParams::default()).map_err(|e| e.to_string())?;
    let segs = f
        .segments
        .iter()
        .flat_map(|s| [s.start[0], s.start[1], s.end[0], s.end[1]])
        .collect();
    Ok((f.edges.data().to_vec(), segs))
}

/// Edge-alignment value for every whole degree in `[0, 180)`.
pub fn alignment(slice: &[f64], n: usize) -> Result<Vec<f64>, String> {
    let v = slice_volume(slice, n)?;
    let t = edge_alignment_table(&v, &grid(), &EdgeParams::default()).map_err(|e| e.to_string())?;
    Ok(t.values)
}

/// Angle-spacing value for every whole degree; measured angles score 0.
pub fn spacing(selected: &[f64], alpha: f64) -> Result<Vec<f64>, String> {
    let t = angle_spacing_table(&grid(), selected, alpha).map_err(|e| e.to_string())?;
    Ok(t.values)
}

/// Best next angle for a slice given the measured set, plus the combined
/// score over the whole grid (unmeasured angles only; measured ones are 0).
pub fn next(slice: &[f64], n: usize, selected: &[f64], gamma: f64, alpha: f64) -> Result<(f64, Vec<f64>), String> {
    let v = slice_volume(slice, n)?;
    let state = AngleState::new(1.0, selected).map_err(|e| e.to_string())?;
    let remaining = state.remaining();
    if remaining.is_empty() {
        return Err("every grid angle is already measured".into());
    }
    let f = edge_alignment_table(&v, &remaining, &EdgeParams::default()).map_err(|e| e.to_string())?;
    let scores = score_candidates(&f, state.selected(), gamma, alpha).map_err(|e| e.to_string())?;
    let best = scores.best().ok_or("no candidate")?;
    let mut total = vec![0.0; 180];
    for (a, t) in scores.angles.iter().zip(&scores.total) {
        total[*a as usize] = *t;
    }
    Ok((best, total))
}

#[wasm_bindgen(js_name = presetSlice)]
pub fn preset_slice_js(name: &str, n: usize) -> Result<Vec<f64>, JsError> {
    preset_slice(name, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = edgeMap)]
pub fn edge_map_js(slice: &[f64], n: usize) -> Result<Vec<u8>, JsError> {
    edges_and_segments(slice, n).map(|(e, _)| e).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = segments)]
pub fn segments_js(slice: &[f64], n: usize) -> Result<Vec<f64>, JsError> {
    edges_and_segments(slice, n).map(|(_, s)| s).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = alignmentCurve)]
pub fn alignment_js(slice: &[f64], n: usize) -> Result<Vec<f64>, JsError> {
    alignment(slice, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = spacingCurve)]
pub fn spacing_js(selected: &[f64], alpha: f64) -> Result<Vec<f64>, JsError> {
    spacing(selected, alpha).map_err(|e| JsError::new(&e))
}

/// Returns the combined score curve with the chosen angle appended.
#[wasm_bindgen(js_name = nextAngle)]
pub fn next_js(slice: &[f64], n: usize, selected: &[f64], gamma: f64, alpha: f64) -> Result<Vec<f64>, JsError> {
    let (best, mut total) = next(slice, n, selected, gamma, alpha).map_err(|e| JsError::new(&e))?;
    total.push(best);
    Ok(total)
}
