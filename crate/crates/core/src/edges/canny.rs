use crate::error::{Error, Result};

use super::EdgeMap;

/// Separable Gaussian blur with replicated borders. Kernel radius is
/// `ceil(3 sigma)`.
fn gaussian_blur(img: &[f64], nx: usize, ny: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; img.len()];
    for x in 0..nx {
        for y in 0..ny {
            tmp[x * ny + y] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * img[x * ny + clamp(y as isize + k as isize - radius, ny)])
                .sum();
        }
    }
    let mut out = vec![0.0; img.len()];
    for x in 0..nx {
        for y in 0..ny {
            out[x * ny + y] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clamp(x as isize + k as isize - radius, nx) * ny + y])
                .sum();
        }
    }
    out
}

/// Sobel derivatives along x and y, replicated borders.
fn sobel(img: &[f64], nx: usize, ny: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: isize, y: isize| {
        img[x.clamp(0, nx as isize - 1) as usize * ny + y.clamp(0, ny as isize - 1) as usize]
    };
    let mut gx = vec![0.0; img.len()];
    let mut gy = vec![0.0; img.len()];
    for x in 0..nx as isize {
        for y in 0..ny as isize {
            let i = x as usize * ny + y as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

/// Smoothed Sobel gradient magnitude, also used to derive relative
/// thresholds.
pub fn gradient_magnitude(slice: &[f64], nx: usize, ny: usize, sigma: f64) -> Result<Vec<f64>> {
    check(slice, nx, ny, sigma)?;
    let blurred = gaussian_blur(slice, nx, ny, sigma);
    let (gx, gy) = sobel(&blurred, nx, ny);
    Ok(gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect())
}

fn check(slice: &[f64], nx: usize, ny: usize, sigma: f64) -> Result<()> {
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidInput(format!(
            "edge detection needs at least 3x3 pixels, got {nx}x{ny}"
        )));
    }
    if slice.len() != nx * ny {
        return Err(Error::Geometry(format!("{} pixels for a {nx}x{ny} slice", slice.len())));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(())
}

/// Canny edge detector: Gaussian smoothing, Sobel gradients, non-maximum
/// suppression along the quantised gradient direction and 8-connected
/// hysteresis between `low` and `high` (absolute gradient magnitudes).
///
/// The outermost pixel ring never holds an edge.
pub fn canny(slice: &[f64], nx: usize, ny: usize, sigma: f64, low: f64, high: f64) -> Result<EdgeMap> {
    check(slice, nx, ny, sigma)?;
    if !(low > 0.0 && high >= low && high.is_finite()) {
        return Err(Error::Parameter(format!(
            "thresholds must satisfy high >= low > 0, got low {low}, high {high}"
        )));
    }
    let blurred = gaussian_blur(slice, nx, ny, sigma);
    let (gx, gy) = sobel(&blurred, nx, ny);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let thin = non_maximum_suppression(&mag, &gx, &gy, nx, ny);
    Ok(hysteresis(&thin, nx, ny, low, high))
}

const TIE_TOLERANCE: f64 = 1e-9;

fn non_maximum_suppression(mag: &[f64], gx: &[f64], gy: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let mut out = vec![0.0; mag.len()];
    for x in 1..nx - 1 {
        for y in 1..ny - 1 {
            let i = x * ny + y;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            // neighbour offsets (dx, dy) along the gradient
            let (dx, dy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let ahead = mag[(x as isize + dx) as usize * ny + (y as isize + dy) as usize];
            let behind = mag[(x as isize - dx) as usize * ny + (y as isize - dy) as usize];
            // strict on one side so plateaus of width two keep a single
            // pixel; values within rounding of each other count as equal
            let tol = TIE_TOLERANCE * m;
            if m > behind + tol && m + tol >= ahead {
                out[i] = m;
            }
        }
    }
    out
}

fn hysteresis(thin: &[f64], nx: usize, ny: usize, low: f64, high: f64) -> EdgeMap {
    let mut edges = EdgeMap::empty(nx, ny);
    let mut stack = Vec::new();
    for start in 0..thin.len() {
        if thin[start] < high || edges.data[start] != 0 {
            continue;
        }
        edges.data[start] = 1;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i / ny) as isize, (i % ny) as isize);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let (u, v) = (x + dx, y + dy);
                    if u < 0 || v < 0 || u >= nx as isize || v >= ny as isize {
                        continue;
                    }
                    let j = u as usize * ny + v as usize;
                    if edges.data[j] == 0 && thin[j] >= low {
                        edges.data[j] = 1;
                        stack.push(j);
                    }
                }
            }
        }
    }
    edges
}
