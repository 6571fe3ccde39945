//! Inter-image global contrastive pairs.
//!
//! Each sample's channel-averaged feature map is replaced by per-superpixel
//! averages, samples are linked to their most similar batch mate, and the
//! connected components of that graph become the weak label that decides
//! which instance projections are positives.

use crate::error::{Error, Result};
use crate::loss::{supervised_infonce, InfoNce};
use crate::positive::{lift_two_views, PositiveSet};
use crate::superpixel::SuperpixelMap;
use crate::tensor::{cosine_similarity, Tensor};
use crate::union_find::DisjointSet;

/// Mean over the channel axis of a `B × C × h × w` tensor.
pub fn channel_mean(y: &Tensor) -> Result<Tensor> {
    let [b, c, h, w] = *y.shape() else {
        return Err(Error::Shape(format!("expected B×C×h×w, got {:?}", y.shape())));
    };
    if c == 0 {
        return Err(Error::Shape("channel axis is empty".into()));
    }
    let plane = h * w;
    let mut out = vec![0.0; b * plane];
    for s in 0..b {
        let dst = &mut out[s * plane..(s + 1) * plane];
        for ch in 0..c {
            let src = &y.data()[(s * c + ch) * plane..(s * c + ch + 1) * plane];
            dst.iter_mut().zip(src).for_each(|(d, v)| *d += v);
        }
        dst.iter_mut().for_each(|d| *d /= c as f64);
    }
    Tensor::new(vec![b, h, w], out)
}

/// Averaged-superpixel feature `P` (`B × h × w`) and the per-cluster scalars
/// it was painted from.
#[derive(Debug, Clone)]
pub struct AspFeature {
    pub p: Tensor,
    pub cluster_values: Vec<Vec<f64>>,
}

/// Paint every cluster region with `Σ_{x,y} Y_m·M_c` divided by `h·w`, or
/// by the cluster area when `region_normalize` is set.
pub fn asp_feature(
    ym: &Tensor,
    maps: &[SuperpixelMap],
    region_normalize: bool,
) -> Result<AspFeature> {
    let [b, h, w] = *ym.shape() else {
        return Err(Error::Shape(format!("expected B×h×w, got {:?}", ym.shape())));
    };
    if maps.len() != b {
        return Err(Error::LengthMismatch {
            expected: b,
            actual: maps.len(),
        });
    }
    let plane = h * w;
    let mut p = vec![0.0; b * plane];
    let mut cluster_values = Vec::with_capacity(b);
    for (s, map) in maps.iter().enumerate() {
        if (map.height(), map.width()) != (h, w) {
            return Err(Error::Shape(format!(
                "map {s} is {}x{}, feature map is {h}x{w}",
                map.height(),
                map.width()
            )));
        }
        let values = &ym.data()[s * plane..(s + 1) * plane];
        let mut sums = vec![0.0; map.num_clusters()];
        let mut areas = vec![0usize; map.num_clusters()];
        for (&l, &v) in map.labels().iter().zip(values) {
            sums[l] += v;
            areas[l] += 1;
        }
        let per_cluster: Vec<f64> = sums
            .iter()
            .zip(&areas)
            .map(|(&sum, &area)| {
                if region_normalize {
                    sum / area as f64
                } else {
                    sum / plane as f64
                }
            })
            .collect();
        for (dst, &l) in p[s * plane..(s + 1) * plane].iter_mut().zip(map.labels()) {
            *dst = per_cluster[l];
        }
        cluster_values.push(per_cluster);
    }
    Ok(AspFeature {
        p: Tensor::new(vec![b, h, w], p)?,
        cluster_values,
    })
}

/// Pairwise cosine similarities; the diagonal holds `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    b: usize,
    values: Vec<f64>,
}

impl AffinityMatrix {
    pub fn b(&self) -> usize {
        self.b
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.b + j]
    }

    /// Build from a `B × B` matrix, ignoring whatever sits on the diagonal.
    pub fn from_values(b: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != b * b {
            return Err(Error::LengthMismatch {
                expected: b * b,
                actual: values.len(),
            });
        }
        (0..b).for_each(|i| values[i * b + i] = f64::NEG_INFINITY);
        Ok(Self { b, values })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.b, self.b], self.values.clone()).expect("square")
    }
}

/// Cosine affinity between the flattened per-sample rows of `features`
/// (first axis is the batch).
pub fn affinity_matrix(features: &Tensor) -> Result<AffinityMatrix> {
    let b = features.shape().first().copied().unwrap_or(0);
    if b < 2 {
        return Err(Error::Shape(format!("affinity needs at least two samples, got {b}")));
    }
    let d = features.len() / b;
    let row = |i: usize| &features.data()[i * d..(i + 1) * d];
    let mut values = vec![f64::NEG_INFINITY; b * b];
    for i in 0..b {
        for j in i + 1..b {
            let s = cosine_similarity(row(i), row(j))?;
            values[i * b + j] = s;
            values[j * b + i] = s;
        }
    }
    Ok(AffinityMatrix { b, values })
}

/// Symmetric binary `B × B` relation stored densely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    b: usize,
    bits: Vec<bool>,
}

impl BinaryMatrix {
    pub fn zeros(b: usize) -> Self {
        Self {
            b,
            bits: vec![false; b * b],
        }
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.b + j]
    }

    pub fn set_pair(&mut self, i: usize, j: usize, value: bool) {
        self.bits[i * self.b + j] = value;
        self.bits[j * self.b + i] = value;
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.b).flat_map(move |i| (i + 1..self.b).filter(move |&j| self.get(i, j)).map(move |j| (i, j)))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.b).all(|i| (0..self.b).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn zero_diagonal(&self) -> bool {
        (0..self.b).all(|i| !self.get(i, i))
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.b, self.b],
            self.bits.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        )
        .expect("square")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [b, b2] = *t.shape() else {
            return Err(Error::Shape(format!("expected a square matrix, got {:?}", t.shape())));
        };
        if b != b2 {
            return Err(Error::Shape(format!("expected a square matrix, got {b}x{b2}")));
        }
        let bits = t
            .data()
            .iter()
            .map(|&v| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                other => Err(Error::Format(format!("entry {other} is not binary"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { b, bits })
    }
}

/// Top-1 nearest-neighbour graph.
pub type Adjacency = BinaryMatrix;

/// Reachability closure of the top-1 graph, without the diagonal.
pub type WeakLabel = BinaryMatrix;

/// Index of the most similar other sample; ties go to the smallest index.
pub fn nearest(c: &AffinityMatrix, i: usize) -> usize {
    let mut best = usize::MAX;
    let mut best_value = f64::NEG_INFINITY;
    for k in (0..c.b()).filter(|&k| k != i) {
        if best == usize::MAX || c.get(i, k) > best_value {
            best = k;
            best_value = c.get(i, k);
        }
    }
    best
}

/// `A(i, j) = 1` when `j` is `i`'s nearest neighbour or vice versa.
pub fn top1_adjacency(c: &AffinityMatrix) -> Result<Adjacency> {
    if c.b() < 2 {
        return Err(Error::Shape("adjacency needs at least two samples".into()));
    }
    let mut a = BinaryMatrix::zeros(c.b());
    for i in 0..c.b() {
        a.set_pair(i, nearest(c, i), true);
    }
    Ok(a)
}

/// Connected components of `a` via union-find; samples in one component are
/// weakly labelled as the same class.
pub fn connected_components_weak_label(a: &Adjacency) -> WeakLabel {
    let b = a.b();
    let mut sets = DisjointSet::new(b);
    for (i, j) in a.edges() {
        sets.union(i, j);
    }
    let roots: Vec<usize> = (0..b).map(|i| sets.find(i)).collect();
    let mut w = BinaryMatrix::zeros(b);
    for i in 0..b {
        for j in i + 1..b {
            if roots[i] == roots[j] {
                w.set_pair(i, j, true);
            }
        }
    }
    w
}

/// Components of a weak label as sorted member lists, ordered by their
/// smallest member.
pub fn weak_label_components(w: &WeakLabel) -> Vec<Vec<usize>> {
    let mut seen = vec![false; w.b()];
    let mut out = Vec::new();
    for i in 0..w.b() {
        if seen[i] {
            continue;
        }
        let members: Vec<usize> = (0..w.b()).filter(|&j| j == i || w.get(i, j)).collect();
        members.iter().for_each(|&j| seen[j] = true);
        out.push(members);
    }
    out
}

/// Lift the `B × B` weak label to `2B` anchors: the two views of a sample
/// are positives, as are any views of weakly-labelled samples.
pub fn extend_weak_label(w: &WeakLabel) -> PositiveSet {
    lift_two_views(w.b(), |i, j| w.get(i, j))
}

/// Instance-level loss over `2B × d` projections with the lifted weak label.
pub fn loss_inter(zi: &Tensor, omega_w: &PositiveSet, tau: f64) -> Result<InfoNce> {
    supervised_infonce(zi, omega_w, tau)
}

/// Every intermediate of the weak-label chain.
#[derive(Debug, Clone)]
pub struct WeakLabelChain {
    pub asp: AspFeature,
    pub affinity: AffinityMatrix,
    pub adjacency: Adjacency,
    pub weak: WeakLabel,
}

/// `Y → Y_m → P → C → A → W` for a batch of feature maps and matching
/// (already downsampled) superpixel maps.
pub fn weak_label_chain(
    y: &Tensor,
    maps: &[SuperpixelMap],
    region_normalize: bool,
) -> Result<WeakLabelChain> {
    let ym = channel_mean(y)?;
    let asp = asp_feature(&ym, maps, region_normalize)?;
    let affinity = affinity_matrix(&asp.p)?;
    let adjacency = top1_adjacency(&affinity)?;
    let weak = connected_components_weak_label(&adjacency);
    Ok(WeakLabelChain {
        asp,
        affinity,
        adjacency,
        weak,
    })
}
