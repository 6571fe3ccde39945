//! Anchor → positives relation consumed by the supervised InfoNCE loss.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Symmetric, irreflexive positive relation over `n` anchors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveSet {
    positives: Vec<Vec<usize>>,
}

impl PositiveSet {
    /// Build from per-anchor lists. Lists are sorted and deduplicated; the
    /// relation must already be symmetric and irreflexive.
    pub fn new(mut positives: Vec<Vec<usize>>) -> Result<Self> {
        let n = positives.len();
        for list in &mut positives {
            list.sort_unstable();
            list.dedup();
        }
        for (a, list) in positives.iter().enumerate() {
            for &j in list {
                if j >= n {
                    return Err(Error::Shape(format!("positive index {j} outside 0..{n}")));
                }
                if j == a {
                    return Err(Error::Shape(format!("anchor {a} lists itself")));
                }
                if positives[j].binary_search(&a).is_err() {
                    return Err(Error::Shape(format!(
                        "relation is not symmetric: {a} -> {j} without {j} -> {a}"
                    )));
                }
            }
        }
        Ok(Self { positives })
    }

    /// Relation `{(a, b) : a != b, related(a, b)}`; `related` must be symmetric.
    pub fn from_predicate(n: usize, mut related: impl FnMut(usize, usize) -> bool) -> Self {
        let positives = (0..n)
            .map(|a| (0..n).filter(|&b| b != a && related(a, b)).collect())
            .collect();
        Self { positives }
    }

    pub fn n(&self) -> usize {
        self.positives.len()
    }

    pub fn positives(&self, anchor: usize) -> &[usize] {
        &self.positives[anchor]
    }

    pub fn contains(&self, anchor: usize, other: usize) -> bool {
        self.positives[anchor].binary_search(&other).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.positives.iter().enumerate().map(|(a, p)| (a, p.as_slice()))
    }

    pub fn is_symmetric(&self) -> bool {
        self.iter()
            .all(|(a, list)| list.iter().all(|&j| self.contains(j, a)))
    }

    pub fn is_irreflexive(&self) -> bool {
        self.iter().all(|(a, list)| !list.contains(&a))
    }

    /// One line per anchor: `anchor: p1 p2 ...`.
    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        for (a, list) in self.iter() {
            let _ = write!(out, "{a}:");
            for j in list {
                let _ = write!(out, " {j}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_adjacency_text(text: &str) -> Result<Self> {
        let mut positives = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("line {}: expected 'anchor: positives'", lineno + 1));
            let (anchor, rest) = line.split_once(':').ok_or_else(bad)?;
            let anchor: usize = anchor.trim().parse().map_err(|_| bad())?;
            if anchor != positives.len() {
                return Err(Error::Format(format!(
                    "line {}: anchors must be listed in order, expected {}",
                    lineno + 1,
                    positives.len()
                )));
            }
            let list = rest
                .split_whitespace()
                .map(|s| s.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            positives.push(list);
        }
        Self::new(positives).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Lift a relation over `b` base samples to the `2b` anchors of two views:
/// anchor `u` stands for sample `u mod b`, and two anchors are positive when
/// they are the two views of one sample or their samples are related.
pub fn lift_two_views(b: usize, mut related: impl FnMut(usize, usize) -> bool) -> PositiveSet {
    PositiveSet::from_predicate(2 * b, |u, v| {
        let (i, j) = (u % b, v % b);
        i == j || related(i, j)
    })
}
