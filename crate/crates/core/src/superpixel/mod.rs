//! Superpixel maps: SLIC segmentation, connectivity repair, majority-vote
//! downsampling to a feature grid, per-cluster masks and a colorized view.

mod connectivity;
mod slic;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{Image, ImageU8};
use crate::tensor::Tensor;

pub use connectivity::enforce_connectivity;
pub use slic::{grid_step, initial_centers, pixel_features, slic_raw, Center, Slic, SlicConfig};

/// Per-pixel cluster labels drawn from the contiguous range `0..num_clusters`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMap {
    height: usize,
    width: usize,
    labels: Vec<usize>,
    num_clusters: usize,
}

impl SuperpixelMap {
    /// Build a map from arbitrary labels, compacting them to `0..K'` while
    /// preserving their relative order.
    pub fn from_labels(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                actual: labels.len(),
            });
        }
        let present: BTreeSet<usize> = labels.iter().copied().collect();
        let num_clusters = present.len();
        let labels = if present.iter().copied().eq(0..num_clusters) {
            labels
        } else {
            let lookup: std::collections::BTreeMap<usize, usize> =
                present.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
            labels.iter().map(|l| lookup[l]).collect()
        };
        Ok(Self {
            height,
            width,
            labels,
            num_clusters,
        })
    }

    /// Read labels stored as real numbers (the NPY label-map encoding).
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [h, w] = t.shape() else {
            return Err(Error::Shape(format!(
                "label map must be 2-D, got {:?}",
                t.shape()
            )));
        };
        let labels = t
            .data()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                    Ok(v as usize)
                } else {
                    Err(Error::Format(format!("label {v} is not a non-negative integer")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_labels(*h, *w, labels)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.height, self.width],
            self.labels.iter().map(|&l| l as f64).collect(),
        )
        .expect("label count matches shape")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x]
    }

    /// Pairs of distinct labels that share a 4-neighbour edge.
    pub fn adjacent_labels(&self) -> BTreeSet<(usize, usize)> {
        let mut pairs = BTreeSet::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let a = self.at(y, x);
                let mut link = |b: usize| {
                    if a != b {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                };
                if x + 1 < self.width {
                    link(self.at(y, x + 1));
                }
                if y + 1 < self.height {
                    link(self.at(y + 1, x));
                }
            }
        }
        pairs
    }
}

/// A superpixel algorithm. SLIC is the only backend shipped.
pub trait SuperpixelBackend {
    fn segment(&self, img: &Image) -> Result<SuperpixelMap>;
}

/// SLIC followed by connectivity enforcement.
pub fn slic_segment(img: &Image, cfg: &SlicConfig) -> Result<SuperpixelMap> {
    Slic::new(cfg.clone()).segment(img)
}

/// Majority-vote reduction of `map` onto a `target_h × target_w` grid.
///
/// Output cell `(r, c)` covers source rows `[r·H/th, (r+1)·H/th)` and
/// columns `[c·W/tw, (c+1)·W/tw)`. Ties go to the smallest label.
pub fn downsample_map(
    map: &SuperpixelMap,
    target_h: usize,
    target_w: usize,
) -> Result<SuperpixelMap> {
    let (h, w) = (map.height, map.width);
    if target_h == 0 || target_w == 0 || target_h > h || target_w > w {
        return Err(Error::BadTarget {
            src_h: h,
            src_w: w,
            dst_h: target_h,
            dst_w: target_w,
        });
    }
    let mut counts = vec![0usize; map.num_clusters];
    let mut out = Vec::with_capacity(target_h * target_w);
    for r in 0..target_h {
        let (y0, y1) = (r * h / target_h, (r + 1) * h / target_h);
        for c in 0..target_w {
            let (x0, x1) = (c * w / target_w, (c + 1) * w / target_w);
            let mut touched = Vec::new();
            for y in y0..y1 {
                for x in x0..x1 {
                    let l = map.at(y, x);
                    if counts[l] == 0 {
                        touched.push(l);
                    }
                    counts[l] += 1;
                }
            }
            let best = touched
                .iter()
                .copied()
                .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
                .expect("every block has at least one source pixel");
            out.push(best);
            touched.iter().for_each(|&l| counts[l] = 0);
        }
    }
    SuperpixelMap::from_labels(target_h, target_w, out)
}

/// Binary indicator mask (`h × w`, values 0/1) for every cluster.
pub fn cluster_masks(map: &SuperpixelMap) -> Vec<Tensor> {
    let mut masks = vec![Tensor::zeros(vec![map.height, map.width]); map.num_clusters];
    for (i, &l) in map.labels.iter().enumerate() {
        masks[l].data_mut()[i] = 1.0;
    }
    masks
}

const PALETTE_SIZE: usize = 24;

/// Deterministic label-to-color rendering.
///
/// Labels are colored greedily in index order from a seeded palette,
/// skipping colors already taken by adjacent labels; label `l` starts its
/// search at palette slot `l mod P`.
pub fn colorize_map(map: &SuperpixelMap, seed: u64) -> ImageU8 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut palette: Vec<[u8; 3]> = Vec::with_capacity(PALETTE_SIZE);
    while palette.len() < PALETTE_SIZE {
        let color = [
            rng.random_range(32..=255u8),
            rng.random_range(32..=255u8),
            rng.random_range(32..=255u8),
        ];
        if !palette.contains(&color) {
            palette.push(color);
        }
    }
    palette.shuffle(&mut rng);

    let mut neighbours = vec![Vec::new(); map.num_clusters];
    for (a, b) in map.adjacent_labels() {
        neighbours[a].push(b);
        neighbours[b].push(a);
    }
    let mut assigned: Vec<Option<usize>> = vec![None; map.num_clusters];
    for l in 0..map.num_clusters {
        let taken: Vec<usize> = neighbours[l].iter().filter_map(|&n| assigned[n]).collect();
        let slot = (0..PALETTE_SIZE)
            .map(|k| (l + k) % PALETTE_SIZE)
            .find(|s| !taken.contains(s))
            .unwrap_or(l % PALETTE_SIZE);
        assigned[l] = Some(slot);
    }
    let pixels = map
        .labels
        .iter()
        .flat_map(|&l| palette[assigned[l].unwrap()])
        .collect();
    ImageU8::new(map.height, map.width, 3, pixels).expect("sized from map")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, labels: &[usize]) -> SuperpixelMap {
        SuperpixelMap::from_labels(h, w, labels.to_vec()).unwrap()
    }

    #[test]
    fn labels_are_compacted_in_order() {
        let m = map(1, 4, &[7, 3, 7, 9]);
        assert_eq!(m.labels(), &[1, 0, 1, 2]);
        assert_eq!(m.num_clusters(), 3);
    }

    #[test]
    fn downsample_identity() {
        let m = map(2, 3, &[0, 1, 1, 2, 2, 0]);
        assert_eq!(downsample_map(&m, 2, 3).unwrap(), m);
    }

    #[test]
    fn downsample_uniform() {
        let m = map(4, 4, &[0; 16]);
        let d = downsample_map(&m, 2, 2).unwrap();
        assert_eq!(d.labels(), &[0, 0, 0, 0]);
    }

    #[test]
    fn downsample_majority() {
        // each 2x2 block holds three 0s and one 1
        #[rustfmt::skip]
        let m = map(4, 4, &[
            0, 0, 0, 1,
            1, 0, 0, 0,
            0, 0, 0, 0,
            0, 1, 1, 0,
        ]);
        let d = downsample_map(&m, 2, 2).unwrap();
        assert_eq!(d.labels(), &[0, 0, 0, 0]);
        assert_eq!(d.num_clusters(), 1);
    }

    #[test]
    fn downsample_tie_takes_smallest_label() {
        let m = map(2, 2, &[3, 3, 1, 1]);
        let d = downsample_map(&m, 1, 1).unwrap();
        // 1 was compacted to 0, 3 to 1; the tie goes to the smaller label
        assert_eq!(d.labels(), &[0]);
    }

    #[test]
    fn downsample_rejects_upsampling() {
        let m = map(2, 2, &[0; 4]);
        assert!(matches!(
            downsample_map(&m, 3, 2),
            Err(Error::BadTarget { .. })
        ));
    }

    #[test]
    fn masks_of_checkerboard() {
        let m = map(2, 2, &[0, 1, 1, 0]);
        let masks = cluster_masks(&m);
        assert_eq!(masks.len(), 2);
        assert_eq!(masks[0].data(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(masks[1].data(), &[0.0, 1.0, 1.0, 0.0]);
        let single = cluster_masks(&map(2, 2, &[0; 4]));
        assert_eq!(single.len(), 1);
        assert!(single[0].data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn colorize_properties() {
        let one = colorize_map(&map(2, 2, &[0; 4]), 1);
        assert!(one.pixels().chunks(3).all(|p| p == &one.pixels()[..3]));

        let two = map(1, 2, &[0, 1]);
        let img = colorize_map(&two, 5);
        assert_ne!(img.pixels()[..3], img.pixels()[3..]);
        assert_eq!(img, colorize_map(&two, 5));
        // two labels that do not touch still get different colors
        let apart = map(1, 3, &[0, 0, 1]);
        let img = colorize_map(&apart, 9);
        assert_ne!(img.pixels()[..3], img.pixels()[6..]);
    }

    #[test]
    fn tensor_round_trip() {
        let m = map(2, 3, &[0, 1, 2, 2, 1, 0]);
        assert_eq!(SuperpixelMap::from_tensor(&m.to_tensor()).unwrap(), m);
        let bad = Tensor::new(vec![1, 2], vec![0.5, 1.0]).unwrap();
        assert!(SuperpixelMap::from_tensor(&bad).is_err());
    }
}
