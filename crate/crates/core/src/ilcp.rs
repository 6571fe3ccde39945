//! Intra-image local contrastive pairs: pixels of the two aligned views are
//! positives when they fall in the same superpixel.

use crate::error::{Error, Result};
use crate::loss::{supervised_infonce, InfoNce};
use crate::positive::PositiveSet;
use crate::tensor::Tensor;

pub const VALID_STRIDES: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

/// Which same-cluster pairs count as positives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Same-cluster pixels within a view and across views.
    #[default]
    Joint,
    /// Only pairs that straddle the two views.
    CrossView,
}

/// Row-major grid positions kept by a stride.
pub fn stride_positions(h: usize, w: usize, stride: usize) -> Result<Vec<usize>> {
    if !VALID_STRIDES.contains(&stride) || h % stride != 0 || w % stride != 0 {
        return Err(Error::BadStride { stride, h, w });
    }
    Ok((0..h / stride)
        .flat_map(|r| (0..w / stride).map(move |c| r * stride * w + c * stride))
        .collect())
}

/// Keep the label at every `(stride·r, stride·c)` position.
pub fn resample_pixels(labels: &[usize], h: usize, w: usize, stride: usize) -> Result<Vec<usize>> {
    if labels.len() != h * w {
        return Err(Error::LengthMismatch {
            expected: h * w,
            actual: labels.len(),
        });
    }
    Ok(stride_positions(h, w, stride)?
        .into_iter()
        .map(|p| labels[p])
        .collect())
}

/// Positive set over `2·n_pix` anchors (view 1 first, then view 2).
pub fn build_ilcp_positive_set(
    labels_view1: &[usize],
    labels_view2: &[usize],
    mode: PairMode,
) -> Result<PositiveSet> {
    let n = labels_view1.len();
    if labels_view2.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: labels_view2.len(),
        });
    }
    let label = |a: usize| {
        if a < n {
            labels_view1[a]
        } else {
            labels_view2[a - n]
        }
    };
    // bucket anchors by label so construction is linear in the output size
    let max_label = labels_view1.iter().chain(labels_view2).max().map_or(0, |m| m + 1);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); max_label];
    for a in 0..2 * n {
        buckets[label(a)].push(a);
    }
    let positives = (0..2 * n)
        .map(|a| {
            buckets[label(a)]
                .iter()
                .copied()
                .filter(|&b| b != a && (mode == PairMode::Joint || (a < n) != (b < n)))
                .collect()
        })
        .collect();
    PositiveSet::new(positives)
}

/// Stack two `n × C` views into the `2n × C` anchor matrix.
pub fn stack_views(view1: &Tensor, view2: &Tensor) -> Result<Tensor> {
    if view1.ndim() != 2 || view1.shape() != view2.shape() {
        return Err(Error::Shape(format!(
            "views must be matching 2-D matrices, got {:?} and {:?}",
            view1.shape(),
            view2.shape()
        )));
    }
    let mut data = view1.data().to_vec();
    data.extend_from_slice(view2.data());
    Tensor::new(vec![2 * view1.rows(), view1.cols()], data)
}

/// Intra-image loss over pixel projections.
pub fn loss_intra(z: &Tensor, omega: &PositiveSet, tau: f64) -> Result<InfoNce> {
    supervised_infonce(z, omega, tau)
}
