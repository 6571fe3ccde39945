//! The two augmentation groups: intensity-only transforms that keep the
//! pixel grid aligned with the source, and those followed by an affine warp.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonspatialParams {
    pub brightness_delta: f64,
    pub contrast_factor: f64,
    pub blur_sigma: f64,
}

impl NonspatialParams {
    pub const IDENTITY: Self = Self {
        brightness_delta: 0.0,
        contrast_factor: 1.0,
        blur_sigma: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialParams {
    /// Translation as a fraction of (height, width).
    pub translate_frac: (f64, f64),
    /// Counter-clockwise as displayed (y axis pointing down).
    pub rotate_deg: f64,
    pub scale: f64,
}

impl SpatialParams {
    pub const IDENTITY: Self = Self {
        translate_frac: (0.0, 0.0),
        rotate_deg: 0.0,
        scale: 1.0,
    };
}

/// Sampling ranges; all draws are uniform and symmetric about the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentRanges {
    pub brightness: f64,
    pub contrast: f64,
    pub blur_sigma_max: f64,
    pub translate: f64,
    pub rotate_deg: f64,
    pub scale: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            brightness: 0.2,
            contrast: 0.2,
            blur_sigma_max: 1.5,
            translate: 0.1,
            rotate_deg: 15.0,
            scale: 0.1,
        }
    }
}

impl AugmentRanges {
    pub fn sample_nonspatial(&self, rng: &mut impl Rng) -> NonspatialParams {
        NonspatialParams {
            brightness_delta: symmetric(rng, self.brightness),
            contrast_factor: 1.0 + symmetric(rng, self.contrast),
            blur_sigma: if self.blur_sigma_max > 0.0 {
                rng.random_range(0.0..=self.blur_sigma_max)
            } else {
                0.0
            },
        }
    }

    pub fn sample_spatial(&self, rng: &mut impl Rng) -> SpatialParams {
        SpatialParams {
            translate_frac: (symmetric(rng, self.translate), symmetric(rng, self.translate)),
            rotate_deg: symmetric(rng, self.rotate_deg),
            scale: 1.0 + symmetric(rng, self.scale),
        }
    }
}

fn symmetric(rng: &mut impl Rng, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.random_range(-half_width..=half_width)
    } else {
        0.0
    }
}

/// Contrast about 0.5, brightness shift, clamp to `[0, 1]`, then a
/// separable Gaussian blur (radius `ceil(3σ)`, edges replicated).
pub fn augment_nonspatial(img: &Image, p: &NonspatialParams) -> Image {
    let mut out = img.clone();
    if p.contrast_factor != 1.0 || p.brightness_delta != 0.0 {
        out.data.iter_mut().for_each(|v| {
            *v = (p.contrast_factor * (*v - 0.5) + 0.5 + p.brightness_delta).clamp(0.0, 1.0)
        });
    }
    if p.blur_sigma > 0.0 {
        out = gaussian_blur(&out, p.blur_sigma);
    }
    out
}

/// Normalized 1-D Gaussian taps of radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (h, w, c) = (img.height, img.width, img.channels);
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                tmp[(y * w + x) * c + ch] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * img.at(y, clampi(x as isize + k as isize - radius, w), ch))
                    .sum();
            }
        }
    }
    let mut out = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out[(y * w + x) * c + ch] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| wt * tmp[(clampi(y as isize + k as isize - radius, h) * w + x) * c + ch])
                    .sum();
            }
        }
    }
    Image {
        data: out,
        ..img.clone()
    }
}

/// Rotate about the image center, scale, translate; bilinear sampling with
/// zeros outside the source.
pub fn augment_spatial(img: &Image, p: &SpatialParams) -> Image {
    let (h, w, c) = (img.height, img.width, img.channels);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (ty, tx) = (p.translate_frac.0 * h as f64, p.translate_frac.1 * w as f64);
    let (sin, cos) = p.rotate_deg.to_radians().sin_cos();
    let mut data = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            // inverse map: undo translation, rotation, then scale
            let (dy, dx) = (y as f64 - cy - ty, x as f64 - cx - tx);
            let sx = (cos * dx - sin * dy) / p.scale + cx;
            let sy = (sin * dx + cos * dy) / p.scale + cy;
            for ch in 0..c {
                data[(y * w + x) * c + ch] = bilinear(img, sy, sx, ch);
            }
        }
    }
    Image {
        data,
        ..img.clone()
    }
}

fn bilinear(img: &Image, y: f64, x: f64, ch: usize) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (y0, x0) = (y0 as isize, x0 as isize);
    let at = |yy: isize, xx: isize| {
        if yy < 0 || xx < 0 || yy >= img.height as isize || xx >= img.width as isize {
            0.0
        } else {
            img.at(yy as usize, xx as usize, ch)
        }
    };
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
        + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1))
}

/// Spatial-invariance group: two intensity-only views on the source grid.
pub fn fixed_pair(img: &Image, ranges: &AugmentRanges, rng: &mut impl Rng) -> (Image, Image) {
    let a = augment_nonspatial(img, &ranges.sample_nonspatial(rng));
    let b = augment_nonspatial(img, &ranges.sample_nonspatial(rng));
    (a, b)
}

/// Spatial-variance group: intensity transforms followed by a warp.
pub fn variable_pair(img: &Image, ranges: &AugmentRanges, rng: &mut impl Rng) -> (Image, Image) {
    let mut view = || {
        let p = ranges.sample_nonspatial(rng);
        let s = ranges.sample_spatial(rng);
        augment_spatial(&augment_nonspatial(img, &p), &s)
    };
    let a = view();
    let b = view();
    (a, b)
}
