//! Simple linear iterative clustering.
//!
//! Pixels are clustered in a joint (color, y, x) space. Gray images use the
//! intensity scaled by 100 as their single color coordinate so that the
//! compactness parameter has the same meaning as for CIELAB input.

use serde::{Deserialize, Serialize};

use super::{enforce_connectivity, SuperpixelBackend, SuperpixelMap};
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicConfig {
    /// Desired number of clusters.
    pub k_request: usize,
    /// Compactness `m`; larger values favour spatial proximity over color.
    pub compactness: f64,
    pub iterations: usize,
    /// Accepted for interface stability; SLIC itself is deterministic.
    pub seed: u64,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            k_request: 100,
            compactness: 10.0,
            iterations: 10,
            seed: 0,
        }
    }
}

impl SlicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_request == 0 {
            return Err(Error::Config("k_request must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.compactness > 0.0) {
            return Err(Error::Config("compactness must be positive".into()));
        }
        Ok(())
    }
}

/// A cluster center in (color, y, x) space.
#[derive(Debug, Clone, PartialEq)]
pub struct Center {
    pub color: Vec<f64>,
    pub y: f64,
    pub x: f64,
}

#[derive(Debug, Clone)]
pub struct Slic {
    cfg: SlicConfig,
}

impl Slic {
    pub fn new(cfg: SlicConfig) -> Self {
        Self { cfg }
    }
}

impl SuperpixelBackend for Slic {
    fn segment(&self, img: &Image) -> Result<SuperpixelMap> {
        let (labels, _) = slic_raw(img, &self.cfg)?;
        let raw = SuperpixelMap::from_labels(img.height, img.width, labels)?;
        Ok(enforce_connectivity(&raw))
    }
}

/// Color coordinates per pixel: `100·I` for gray input, CIELAB for RGB.
pub fn pixel_features(img: &Image) -> Vec<Vec<f64>> {
    match img.channels {
        1 => img.data.iter().map(|&v| vec![100.0 * v]).collect(),
        _ => img
            .data
            .chunks_exact(img.channels)
            .map(|p| srgb_to_lab(p[0], p[1], p[2]).to_vec())
            .collect(),
    }
}

/// Grid spacing `S0 = sqrt(N / k)`.
pub fn grid_step(height: usize, width: usize, k: usize) -> f64 {
    ((height * width) as f64 / k as f64).sqrt()
}

/// Seed centers on a regular `rows × cols` grid (`rows·cols ≤ k`) and move
/// each to the lowest-gradient pixel of its 3×3 neighbourhood.
pub fn initial_centers(img: &Image, cfg: &SlicConfig) -> Result<Vec<Center>> {
    cfg.validate()?;
    let (h, w) = (img.height, img.width);
    if h * w < cfg.k_request {
        return Err(Error::TooManyClusters {
            pixels: h * w,
            requested: cfg.k_request,
        });
    }
    let features = pixel_features(img);
    let (rows, cols) = grid_shape(h, w, cfg.k_request);
    let gradient = |y: usize, x: usize| -> f64 {
        let at = |yy: usize, xx: usize| &features[yy * w + xx];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let gx: f64 = at(y, xr).iter().zip(at(y, xl)).map(|(a, b)| (a - b).powi(2)).sum();
        let gy: f64 = at(yd, x).iter().zip(at(yu, x)).map(|(a, b)| (a - b).powi(2)).sum();
        gx + gy
    };

    let mut centers = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let cy = ((r as f64 + 0.5) * h as f64 / rows as f64) as usize;
        for c in 0..cols {
            let cx = ((c as f64 + 0.5) * w as f64 / cols as f64) as usize;
            let (mut by, mut bx, mut best) = (cy, cx, gradient(cy, cx));
            for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = gradient(y, x);
                    if g < best {
                        (by, bx, best) = (y, x, g);
                    }
                }
            }
            centers.push(Center {
                color: features[by * w + bx].clone(),
                y: by as f64,
                x: bx as f64,
            });
        }
    }
    Ok(centers)
}

/// Windowed k-means iterations without connectivity repair.
///
/// Returns the center index per pixel and the final centers.
pub fn slic_raw(img: &Image, cfg: &SlicConfig) -> Result<(Vec<usize>, Vec<Center>)> {
    let mut centers = initial_centers(img, cfg)?;
    let (h, w) = (img.height, img.width);
    let features = pixel_features(img);
    let step = grid_step(h, w, cfg.k_request);
    let spatial_weight = (cfg.compactness / step).powi(2);
    let distance = |center: &Center, y: usize, x: usize| -> f64 {
        let dc: f64 = center
            .color
            .iter()
            .zip(&features[y * w + x])
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let ds = (center.y - y as f64).powi(2) + (center.x - x as f64).powi(2);
        dc + ds * spatial_weight
    };

    let mut labels = vec![usize::MAX; h * w];
    let mut best = vec![f64::INFINITY; h * w];
    for _ in 0..cfg.iterations {
        best.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, center) in centers.iter().enumerate() {
            let y0 = (center.y - step).ceil().max(0.0) as usize;
            let y1 = ((center.y + step).floor() as usize).min(h - 1);
            let x0 = (center.x - step).ceil().max(0.0) as usize;
            let x1 = ((center.x + step).floor() as usize).min(w - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let d = distance(center, y, x);
                    if d < best[y * w + x] {
                        best[y * w + x] = d;
                        labels[y * w + x] = k;
                    }
                }
            }
        }
        update_centers(&mut centers, &labels, &features, w);
    }

    // pixels outside every search window fall back to the nearest center
    for y in 0..h {
        for x in 0..w {
            if labels[y * w + x] == usize::MAX {
                labels[y * w + x] = centers
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (k, distance(c, y, x)))
                    .fold((0, f64::INFINITY), |acc, (k, d)| if d < acc.1 { (k, d) } else { acc })
                    .0;
            }
        }
    }
    Ok((labels, centers))
}

fn update_centers(centers: &mut [Center], labels: &[usize], features: &[Vec<f64>], w: usize) {
    let dims = centers.first().map_or(0, |c| c.color.len());
    let mut sums = vec![vec![0.0; dims + 2]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (i, &l) in labels.iter().enumerate() {
        if l == usize::MAX {
            continue;
        }
        let s = &mut sums[l];
        for (acc, v) in s.iter_mut().zip(&features[i]) {
            *acc += v;
        }
        s[dims] += (i / w) as f64;
        s[dims + 1] += (i % w) as f64;
        counts[l] += 1;
    }
    for ((center, sum), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
        if n == 0 {
            continue;
        }
        let n = n as f64;
        center.color = sum[..dims].iter().map(|v| v / n).collect();
        center.y = sum[dims] / n;
        center.x = sum[dims + 1] / n;
    }
}

/// Grid with `rows·cols ≤ k` that balances closeness to `k` against square
/// cells.
fn grid_shape(h: usize, w: usize, k: usize) -> (usize, usize) {
    let mut best = (1, 1);
    let mut best_cost = f64::INFINITY;
    for rows in 1..=k.min(h) {
        let cols = (k / rows).min(w);
        if cols == 0 {
            break;
        }
        let shortfall = (k - rows * cols) as f64 / k as f64;
        let aspect = ((h as f64 / rows as f64) / (w as f64 / cols as f64)).ln().abs();
        let cost = shortfall + aspect;
        if cost < best_cost - 1e-12 {
            best = (rows, cols);
            best_cost = cost;
        }
    }
    best
}

fn srgb_to_lab(r: f64, g: f64, b: f64) -> [f64; 3] {
    let lin = |c: f64| {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    };
    let (r, g, b) = (lin(r), lin(g), lin(b));
    // D65 reference white
    let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}
