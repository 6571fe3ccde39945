use std::collections::BTreeSet;

use super::SuperpixelMap;
use crate::union_find::DisjointSet;

/// Split every label into its 4-connected pieces and merge pieces smaller
/// than a quarter of the mean cluster area into their largest neighbour.
///
/// Output labels are numbered by first appearance in raster order.
pub fn enforce_connectivity(raw: &SuperpixelMap) -> SuperpixelMap {
    let (h, w) = (raw.height(), raw.width());
    let n = h * w;
    if n == 0 {
        return raw.clone();
    }
    let (component, count) = components(raw);
    let threshold = (n as f64 / raw.num_clusters() as f64) / 4.0;

    let mut neighbours = vec![BTreeSet::new(); count];
    let mut first_pixel = vec![usize::MAX; count];
    for y in 0..h {
        for x in 0..w {
            let a = component[y * w + x];
            first_pixel[a] = first_pixel[a].min(y * w + x);
            if x + 1 < w {
                let b = component[y * w + x + 1];
                if a != b {
                    neighbours[a].insert(b);
                    neighbours[b].insert(a);
                }
            }
            if y + 1 < h {
                let b = component[(y + 1) * w + x];
                if a != b {
                    neighbours[a].insert(b);
                    neighbours[b].insert(a);
                }
            }
        }
    }

    let mut sizes = vec![0usize; count];
    component.iter().for_each(|&c| sizes[c] += 1);
    let mut sets = DisjointSet::with_weights(sizes.clone());

    // smallest orphans first; ties by raster position
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by_key(|&c| (sizes[c], first_pixel[c]));
    for c in order {
        let root = sets.find(c);
        if root != c || (sets.set_size(root) as f64) >= threshold {
            continue;
        }
        let candidates: Vec<(usize, usize)> = neighbours[root]
            .iter()
            .map(|&b| {
                let r = sets.find(b);
                (r, sets.set_size(r))
            })
            .filter(|&(b, _)| b != root)
            .collect();
        let target = candidates
            .into_iter()
            .max_by(|&(a, sa), &(b, sb)| sa.cmp(&sb).then(first_pixel[b].cmp(&first_pixel[a])))
            .map(|(b, _)| b);
        let Some(target) = target else { continue };
        sets.union_into(target, root);
        let moved = std::mem::take(&mut neighbours[root]);
        for b in moved {
            let rb = sets.find(b);
            if rb != target {
                neighbours[target].insert(rb);
            }
        }
    }

    let mut relabel = vec![usize::MAX; count];
    let mut next = 0;
    let labels = component
        .iter()
        .map(|&c| {
            let r = sets.find(c);
            if relabel[r] == usize::MAX {
                relabel[r] = next;
                next += 1;
            }
            relabel[r]
        })
        .collect();
    SuperpixelMap::from_labels(h, w, labels).expect("same size as input")
}

/// 4-connected components of equal label, numbered in raster order.
fn components(map: &SuperpixelMap) -> (Vec<usize>, usize) {
    let (h, w) = (map.height(), map.width());
    let mut component = vec![usize::MAX; h * w];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if component[start] != usize::MAX {
            continue;
        }
        let label = map.labels()[start];
        component[start] = count;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (y, x) = (p / w, p % w);
            let mut visit = |q: usize| {
                if component[q] == usize::MAX && map.labels()[q] == label {
                    component[q] = count;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        count += 1;
    }
    (component, count)
}
