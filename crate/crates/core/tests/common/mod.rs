//! Independent reference implementations shared by the integration tests.
//! Everything here is written for clarity over speed and shares no code
//! with the library beyond its data types.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use supercl::image::Image;
use supercl::superpixel::Center;
use supercl::SuperpixelMap;

/// Label map with labels drawn from `0..k`, renumbered densely.
pub fn random_map(rng: &mut impl Rng, h: usize, w: usize, k: usize) -> SuperpixelMap {
    let raw: Vec<usize> = (0..h * w).map(|_| rng.random_range(0..k)).collect();
    let mut seen: Vec<usize> = raw.clone();
    seen.sort_unstable();
    seen.dedup();
    let labels = raw.iter().map(|l| seen.binary_search(l).unwrap()).collect();
    SuperpixelMap::from_labels(h, w, labels).unwrap()
}

/// Every `j ≠ i` whose label matches; with `cross_only`, only across views.
pub fn brute_ilcp(labels1: &[usize], labels2: &[usize], cross_only: bool) -> Vec<BTreeSet<usize>> {
    let n = labels1.len();
    let label = |a: usize| if a < n { labels1[a] } else { labels2[a - n] };
    (0..2 * n)
        .map(|i| {
            (0..2 * n)
                .filter(|&j| j != i && label(i) == label(j))
                .filter(|&j| !cross_only || (i < n) != (j < n))
                .collect()
        })
        .collect()
}

/// Reachability closure of a symmetric adjacency matrix, diagonal cleared.
pub fn bfs_closure(adj: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let b = adj.len();
    let mut out = vec![vec![false; b]; b];
    for s in 0..b {
        let mut seen = vec![false; b];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..b {
                if adj[u][v] && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        for t in 0..b {
            out[s][t] = seen[t] && t != s;
        }
    }
    out
}

/// Direct summation of the supervised InfoNCE loss, no shifts or matrix
/// products.
pub fn naive_infonce(z: &[Vec<f64>], positives: &[Vec<usize>], tau: f64) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let n = z.len();
    let mut total = 0.0;
    let mut anchors = 0;
    for l in 0..n {
        if positives[l].is_empty() {
            continue;
        }
        let denom: f64 = (0..n).filter(|&k| k != l).map(|k| (cos(&z[l], &z[k]) / tau).exp()).sum();
        let mut term = 0.0;
        for &j in &positives[l] {
            term += ((cos(&z[l], &z[j]) / tau).exp() / denom).ln();
        }
        total += -term / positives[l].len() as f64;
        anchors += 1;
    }
    total / anchors as f64
}

/// Plain Lloyd iterations over every center for every pixel, starting
/// from `init`, in (100·intensity, y, x) space with SLIC's distance
/// weighting. Gray images only.
pub fn lloyd_oracle(img: &Image, init: &[Center], compactness: f64, step: f64, iterations: usize) -> Vec<usize> {
    let (h, w) = (img.height, img.width);
    let mut centers: Vec<(f64, f64, f64)> = init.iter().map(|c| (c.color[0], c.y, c.x)).collect();
    let weight = (compactness / step).powi(2);
    let mut labels = vec![0; h * w];
    for _ in 0..iterations {
        for y in 0..h {
            for x in 0..w {
                let l = 100.0 * img.data[y * w + x];
                let mut best = (0, f64::INFINITY);
                for (k, &(cl, cy, cx)) in centers.iter().enumerate() {
                    let d = (cl - l).powi(2) + weight * ((cy - y as f64).powi(2) + (cx - x as f64).powi(2));
                    if d < best.1 {
                        best = (k, d);
                    }
                }
                labels[y * w + x] = best.0;
            }
        }
        for (k, c) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..h * w).filter(|&p| labels[p] == k).collect();
            if members.is_empty() {
                continue;
            }
            let n = members.len() as f64;
            c.0 = members.iter().map(|&p| 100.0 * img.data[p]).sum::<f64>() / n;
            c.1 = members.iter().map(|&p| (p / w) as f64).sum::<f64>() / n;
            c.2 = members.iter().map(|&p| (p % w) as f64).sum::<f64>() / n;
        }
    }
    labels
}

/// Left half 0, right half 1.
pub fn two_tone(h: usize, w: usize) -> Image {
    let data = (0..h * w).map(|p| if p % w < w / 2 { 0.0 } else { 1.0 }).collect();
    Image::gray(h, w, data).unwrap()
}

/// Labels cover `0..K` and every label is one 4-connected region.
pub fn partition_and_connectivity(map: &SuperpixelMap) -> Result<(), String> {
    let (h, w, k) = (map.height(), map.width(), map.num_clusters());
    let labels = map.labels();
    let used: BTreeSet<usize> = labels.iter().copied().collect();
    if used != (0..k).collect() {
        return Err(format!("labels {used:?} do not cover 0..{k}"));
    }
    let mut seen = vec![false; h * w];
    let mut regions = 0;
    for start in 0..h * w {
        if seen[start] {
            continue;
        }
        regions += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            let (y, x) = (p / w, p % w);
            let mut near = Vec::new();
            if x > 0 {
                near.push(p - 1);
            }
            if x + 1 < w {
                near.push(p + 1);
            }
            if y > 0 {
                near.push(p - w);
            }
            if y + 1 < h {
                near.push(p + w);
            }
            for q in near {
                if !seen[q] && labels[q] == labels[p] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    if regions != k {
        return Err(format!("{k} labels but {regions} connected regions"));
    }
    Ok(())
}

/// Nearest other index by value, ties to the smallest index.
pub fn argmax_other(row: &[f64], i: usize) -> usize {
    let mut best = usize::MAX;
    for k in (0..row.len()).filter(|&k| k != i) {
        if best == usize::MAX || row[k] > row[best] {
            best = k;
        }
    }
    best
}
