//! Supervised InfoNCE with an analytic gradient, the positional positive
//! set used by the instance loss, and the weighted three-term combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::positive::{lift_two_views, PositiveSet};
use crate::tensor::{norm, Tensor};

pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_PCL_THRESHOLD: f64 = 0.1;

/// Value and gradient of one supervised InfoNCE evaluation.
#[derive(Debug, Clone)]
pub struct InfoNce {
    pub loss: f64,
    /// Gradient with respect to the raw (unnormalized) rows.
    pub grad: Tensor,
    /// Anchors left out because they had no positives.
    pub skipped: usize,
}

/// Supervised InfoNCE over the rows of `z`.
///
/// For every anchor `l` with a non-empty positive set `P_l` the term is
/// `-(1/|P_l|) Σ_{j∈P_l} log(exp(s_lj/τ) / Σ_{k≠l} exp(s_lk/τ))` with `s`
/// the cosine similarity; the loss is the mean over those anchors.
pub fn supervised_infonce(z: &Tensor, omega: &PositiveSet, tau: f64) -> Result<InfoNce> {
    if z.ndim() != 2 {
        return Err(Error::Shape(format!("projections must be 2-D, got {:?}", z.shape())));
    }
    let (n, c) = (z.rows(), z.cols());
    if omega.n() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: omega.n(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }

    let mut norms = Vec::with_capacity(n);
    let mut unit = Vec::with_capacity(n * c);
    for i in 0..n {
        let row = z.row(i);
        let r = norm(row);
        if r == 0.0 {
            return Err(Error::ZeroVector);
        }
        norms.push(r);
        unit.extend(row.iter().map(|v| v / r));
    }

    let mut sim = vec![0.0; n * n];
    gemm(n, c, n, 1.0, &unit, false, &unit, true, 0.0, &mut sim);

    let valid = (0..n).filter(|&l| !omega.positives(l).is_empty()).count();
    if valid == 0 {
        return Err(Error::EmptyPositives);
    }
    let weight = 1.0 / valid as f64;

    // coefficient matrix dL/ds, row per anchor
    let mut coef = vec![0.0; n * n];
    let mut loss = 0.0;
    for l in 0..n {
        let pos = omega.positives(l);
        if pos.is_empty() {
            continue;
        }
        let logits = &sim[l * n..(l + 1) * n];
        let max = (0..n)
            .filter(|&k| k != l)
            .map(|k| logits[k] / tau)
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..n)
            .filter(|&k| k != l)
            .map(|k| (logits[k] / tau - max).exp())
            .sum();
        let lse = max + denom.ln();
        let mean_pos = pos.iter().map(|&j| logits[j] / tau).sum::<f64>() / pos.len() as f64;
        loss += weight * (lse - mean_pos);

        let row = &mut coef[l * n..(l + 1) * n];
        for k in (0..n).filter(|&k| k != l) {
            row[k] = weight * ((logits[k] / tau - lse).exp()) / tau;
        }
        let share = weight / (pos.len() as f64 * tau);
        for &j in pos {
            row[j] -= share;
        }
    }

    // s_lk = u_l·u_k, so dL/dU = (G + Gᵀ) U
    let mut grad_unit = vec![0.0; n * c];
    gemm(n, n, c, 1.0, &coef, false, &unit, false, 0.0, &mut grad_unit);
    gemm(n, n, c, 1.0, &coef, true, &unit, false, 1.0, &mut grad_unit);

    // project through the normalization Jacobian (I - u uᵀ) / |z|
    let mut grad = vec![0.0; n * c];
    for i in 0..n {
        let u = &unit[i * c..(i + 1) * c];
        let g = &grad_unit[i * c..(i + 1) * c];
        let radial: f64 = u.iter().zip(g).map(|(a, b)| a * b).sum();
        for ((out, gv), uv) in grad[i * c..(i + 1) * c].iter_mut().zip(g).zip(u) {
            *out = (gv - radial * uv) / norms[i];
        }
    }

    Ok(InfoNce {
        loss,
        grad: Tensor::new(vec![n, c], grad)?,
        skipped: n - valid,
    })
}

/// Normalized position in `[0, 1]` of a slice within its source volume.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SlicePosition(f64);

impl SlicePosition {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Config(format!("slice position {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Positional positives: samples whose slice positions differ by at most
/// `threshold` are related, lifted to both views.
pub fn positive_set_pcl(positions: &[SlicePosition], threshold: f64) -> Result<PositiveSet> {
    if !(threshold >= 0.0) {
        return Err(Error::Config(format!("threshold must be non-negative, got {threshold}")));
    }
    Ok(lift_two_views(positions.len(), |i, j| {
        (positions[i].0 - positions[j].0).abs() <= threshold
    }))
}

/// Term weights and temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 0.5,
            tau: DEFAULT_TAU,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if [self.lambda1, self.lambda2, self.lambda3].iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// One loss term: its value, the gradient tensors it addresses, and the
/// number of skipped anchors.
#[derive(Debug, Clone)]
pub struct Term {
    pub value: f64,
    pub grads: Vec<Tensor>,
    pub skipped: usize,
}

impl From<InfoNce> for Term {
    fn from(r: InfoNce) -> Self {
        Self {
            value: r.loss,
            grads: vec![r.grad],
            skipped: r.skipped,
        }
    }
}

impl Term {
    /// Average of independent per-sample evaluations; each gradient keeps
    /// its own tensor and is scaled by `1/B`.
    pub fn batch_mean(parts: Vec<InfoNce>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::EmptyPositives);
        }
        let scale = 1.0 / parts.len() as f64;
        let mut value = 0.0;
        let mut skipped = 0;
        let grads = parts
            .into_iter()
            .map(|mut p| {
                value += p.loss * scale;
                skipped += p.skipped;
                p.grad.scale(scale);
                p.grad
            })
            .collect();
        Ok(Self {
            value,
            grads,
            skipped,
        })
    }
}

/// Weighted combination of the instance, intra-image and inter-image terms.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub total: f64,
    pub ins: f64,
    pub intra: f64,
    pub inter: f64,
    /// Weights actually applied; a missing term has weight 0.
    pub weights: LossWeights,
    pub available: [bool; 3],
    pub skipped: [usize; 3],
    /// Gradient of the total with respect to each pixel projection matrix.
    pub grad_pixel: Vec<Tensor>,
    /// Gradient of the total with respect to the instance projections.
    pub grad_instance: Option<Tensor>,
}

pub fn total_loss(
    ins: Option<Term>,
    intra: Option<Term>,
    inter: Option<Term>,
    weights: LossWeights,
) -> Result<LossReport> {
    weights.validate()?;
    let available = [ins.is_some(), intra.is_some(), inter.is_some()];
    let applied = LossWeights {
        lambda1: if available[0] { weights.lambda1 } else { 0.0 },
        lambda2: if available[1] { weights.lambda2 } else { 0.0 },
        lambda3: if available[2] { weights.lambda3 } else { 0.0 },
        tau: weights.tau,
    };
    let value = |t: &Option<Term>| t.as_ref().map_or(0.0, |t| t.value);
    let skipped = |t: &Option<Term>| t.as_ref().map_or(0, |t| t.skipped);
    let (v_ins, v_intra, v_inter) = (value(&ins), value(&intra), value(&inter));
    let total = applied.lambda1 * v_ins + applied.lambda2 * v_intra + applied.lambda3 * v_inter;

    let scaled = |t: &Tensor, w: f64| {
        let mut g = t.clone();
        g.scale(w);
        g
    };
    let grad_pixel = intra
        .as_ref()
        .map(|t| t.grads.iter().map(|g| scaled(g, applied.lambda2)).collect())
        .unwrap_or_default();

    let mut grad_instance: Option<Tensor> = None;
    for (term, w) in [(&ins, applied.lambda1), (&inter, applied.lambda3)] {
        let Some(term) = term else { continue };
        let [g] = term.grads.as_slice() else {
            return Err(Error::Shape("instance terms carry exactly one gradient".into()));
        };
        match &mut grad_instance {
            Some(acc) => acc.add_scaled(g, w)?,
            None => grad_instance = Some(scaled(g, w)),
        }
    }

    Ok(LossReport {
        total,
        ins: v_ins,
        intra: v_intra,
        inter: v_inter,
        weights: applied,
        available,
        skipped: [skipped(&ins), skipped(&intra), skipped(&inter)],
        grad_pixel,
        grad_instance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermValues<T> {
    pub ins: T,
    pub intra: T,
    pub inter: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradNorms {
    pub pixel: f64,
    pub instance: f64,
}

/// Serializable view of a [`LossReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub total: f64,
    pub terms: TermValues<f64>,
    pub skipped: TermValues<usize>,
    pub grad_norms: GradNorms,
    pub weights: LossWeights,
    pub available: TermValues<bool>,
}

impl LossReport {
    pub fn summary(&self) -> LossSummary {
        let pixel = self
            .grad_pixel
            .iter()
            .fold(0.0, |acc, g| acc + g.l2_norm().powi(2))
            .sqrt();
        LossSummary {
            total: self.total,
            terms: TermValues {
                ins: self.ins,
                intra: self.intra,
                inter: self.inter,
            },
            skipped: TermValues {
                ins: self.skipped[0],
                intra: self.skipped[1],
                inter: self.skipped[2],
            },
            grad_norms: GradNorms {
                pixel,
                instance: self.grad_instance.as_ref().map_or(0.0, Tensor::l2_norm),
            },
            weights: self.weights,
            available: TermValues {
                ins: self.available[0],
                intra: self.available[1],
                inter: self.available[2],
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary is plain data")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Tensor {
        let c = rows[0].len();
        Tensor::new(vec![rows.len(), c], rows.concat()).unwrap()
    }

    #[test]
    fn two_identical_rows_give_zero() {
        let z = mat(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let omega = PositiveSet::new(vec![vec![1], vec![0]]).unwrap();
        let r = supervised_infonce(&z, &omega, 0.1).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.grad.max_abs() == 0.0);
    }

    #[test]
    fn axis_aligned_closed_form() {
        let z = mat(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let omega = PositiveSet::new(vec![vec![2], vec![3], vec![0], vec![1]]).unwrap();
        let r = supervised_infonce(&z, &omega, 0.1).unwrap();
        // -log(e^10 / (e^10 + 2)) = log(1 + 2e^-10), extended precision
        let expected = 9.079573746724445e-5;
        assert!((r.loss - expected).abs() < 1e-15, "{}", r.loss);
    }

    #[test]
    fn errors() {
        let z = mat(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let omega = PositiveSet::new(vec![vec![1], vec![0]]).unwrap();
        assert!(matches!(supervised_infonce(&z, &omega, 0.1), Err(Error::ZeroVector)));
        let z = mat(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let empty = PositiveSet::new(vec![vec![], vec![]]).unwrap();
        assert!(matches!(supervised_infonce(&z, &empty, 0.1), Err(Error::EmptyPositives)));
        assert!(matches!(supervised_infonce(&z, &omega, 0.0), Err(Error::Config(_))));
        let three = PositiveSet::new(vec![vec![], vec![], vec![]]).unwrap();
        assert!(matches!(
            supervised_infonce(&z, &three, 0.1),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn skipped_anchors_are_counted() {
        let z = mat(&[&[1.0, 0.0], &[0.6, 0.8], &[0.0, 1.0]]);
        let omega = PositiveSet::new(vec![vec![1], vec![0], vec![]]).unwrap();
        let r = supervised_infonce(&z, &omega, 0.5).unwrap();
        assert_eq!(r.skipped, 1);
        assert!(r.loss > 0.0);
    }

    #[test]
    fn pcl_examples() {
        let pos = |v: &[f64]| v.iter().map(|&p| SlicePosition::new(p).unwrap()).collect::<Vec<_>>();
        let set = positive_set_pcl(&pos(&[0.1, 0.5, 0.9]), 0.0).unwrap();
        assert_eq!(set.positives(0), &[3]);
        assert_eq!(set.positives(4), &[1]);
        let set = positive_set_pcl(&pos(&[0.0, 0.5, 1.0]), 1.0).unwrap();
        assert!(set.iter().all(|(_, p)| p.len() == 5));
        let set = positive_set_pcl(&pos(&[0.10, 0.12, 0.50]), 0.05).unwrap();
        assert_eq!(set.positives(0), &[1, 3, 4]);
        assert_eq!(set.positives(2), &[5]);
        assert!(SlicePosition::new(1.5).is_err());
    }

    fn term(value: f64, grad: Tensor) -> Term {
        Term {
            value,
            grads: vec![grad],
            skipped: 0,
        }
    }

    #[test]
    fn default_weights_sum() {
        let g = Tensor::filled(vec![2, 2], 1.0);
        let report = total_loss(
            Some(term(1.0, g.clone())),
            Some(term(1.0, g.clone())),
            Some(term(1.0, g.clone())),
            LossWeights::default(),
        )
        .unwrap();
        assert_eq!(report.total, 2.5);
        assert_eq!(report.grad_instance.unwrap().data(), &[1.5; 4]);
        assert_eq!(report.grad_pixel[0].data(), &[1.0; 4]);
    }

    #[test]
    fn zero_pixel_weight() {
        let g = Tensor::filled(vec![2, 2], 3.0);
        let w = LossWeights {
            lambda2: 0.0,
            lambda3: 0.0,
            ..LossWeights::default()
        };
        let report = total_loss(
            Some(term(0.7, g.clone())),
            Some(term(2.0, g.clone())),
            Some(term(5.0, g)),
            w,
        )
        .unwrap();
        assert_eq!(report.total, 0.7);
        assert_eq!(report.grad_pixel[0].max_abs(), 0.0);
    }

    #[test]
    fn missing_terms_are_zero_weighted() {
        let g = Tensor::filled(vec![2, 2], 1.0);
        let report = total_loss(None, None, Some(term(2.0, g)), LossWeights::default()).unwrap();
        assert_eq!(report.total, 1.0);
        let s = report.summary();
        assert_eq!(s.weights.lambda1, 0.0);
        assert!(!s.available.ins && s.available.inter);
        let back: LossSummary = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, s);
    }
}
