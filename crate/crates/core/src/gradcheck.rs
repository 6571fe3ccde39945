//! Central finite-difference checks of every analytic gradient.
//!
//! Errors are norm-wise: `max|analytic − numeric| / max(max|analytic|,
//! max|numeric|)` per instance, maximised over the suite. Network
//! coordinates whose perturbation flips a rectifier or a pooling argmax are
//! skipped and counted.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::data::synth_dataset;
use crate::error::Result;
use crate::ilcp::{build_ilcp_positive_set, PairMode};
use crate::image::Image;
use crate::igcp::{extend_weak_label, WeakLabel};
use crate::loss::{positive_set_pcl, supervised_infonce, LossWeights, SlicePosition};
use crate::nn::{
    encoder_backward, encoder_forward, projector_backward, projector_forward, zero_grads,
    EncoderConfig, EncoderParams,
};
use crate::positive::PositiveSet;
use crate::pretrain::{build_batch, evaluate, forward, gradients, pair_sets, PairOptions};
use crate::superpixel::{downsample_map, slic_segment, SlicConfig};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const PROJECTION_TOLERANCE: f64 = 1e-6;
pub const NETWORK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub instances: usize,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error < self.tolerance
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub suites: Vec<SuiteReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.suites.iter().map(|s| s.max_rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            writeln!(
                f,
                "{:<16} {:>4} instances {:>7} coords {:>5} skipped  max rel err {:.3e} (< {:.0e})  {}",
                s.name,
                s.instances,
                s.checked,
                s.skipped,
                s.max_rel_error,
                s.tolerance,
                if s.passed() { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Norm-wise relative error between two gradient vectors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn gaussian(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z
        })
        .collect();
    Tensor::new(shape, data).expect("sized from shape")
}

/// FD check of the contrastive loss on raw `n × d` projections.
fn check_projection(z: &Tensor, omega: &PositiveSet, tau: f64) -> Result<(f64, usize)> {
    let analytic = supervised_infonce(z, omega, tau)?.grad;
    let mut numeric = vec![0.0; z.len()];
    let mut probe = z.clone();
    for (i, slot) in numeric.iter_mut().enumerate() {
        let orig = z.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let plus = supervised_infonce(&probe, omega, tau)?.loss;
        probe.data_mut()[i] = orig - FD_STEP;
        let minus = supervised_infonce(&probe, omega, tau)?.loss;
        probe.data_mut()[i] = orig;
        *slot = (plus - minus) / (2.0 * FD_STEP);
    }
    Ok((relative_error(analytic.data(), &numeric), z.len()))
}

fn projection_suite(
    name: &str,
    instances: usize,
    rng: &mut ChaCha8Rng,
    mut make: impl FnMut(&mut ChaCha8Rng) -> (Tensor, PositiveSet),
) -> Result<SuiteReport> {
    let mut report = SuiteReport {
        name: name.into(),
        instances,
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        tolerance: PROJECTION_TOLERANCE,
    };
    for _ in 0..instances {
        let (z, omega) = make(rng);
        let (err, n) = check_projection(&z, &omega, 0.1)?;
        report.checked += n;
        report.max_rel_error = report.max_rel_error.max(err);
    }
    Ok(report)
}

/// Pixel-level term: `2n × C` projections, superpixel positives.
pub fn intra_suite(seed: u64, instances: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    projection_suite("intra", instances, &mut rng, |rng| {
        let n = rng.random_range(2..=32);
        let c = rng.random_range(2..=32);
        let k = rng.random_range(1..=4);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let omega = build_ilcp_positive_set(&labels, &labels, PairMode::Joint).expect("equal lengths");
        (gaussian(rng, vec![2 * n, c]), omega)
    })
}

/// Instance-level term with a random weak label.
pub fn inter_suite(seed: u64, instances: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    projection_suite("inter", instances, &mut rng, |rng| {
        let b = rng.random_range(2..=16);
        let d = rng.random_range(2..=32);
        let mut w = WeakLabel::zeros(b);
        for i in 0..b {
            for j in i + 1..b {
                if rng.random_bool(0.2) {
                    w.set_pair(i, j, true);
                }
            }
        }
        (gaussian(rng, vec![2 * b, d]), extend_weak_label(&w))
    })
}

/// Instance-level term with slice-position positives.
pub fn ins_suite(seed: u64, instances: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    projection_suite("ins", instances, &mut rng, |rng| {
        let b = rng.random_range(2..=16);
        let d = rng.random_range(2..=32);
        let positions: Vec<SlicePosition> = (0..b)
            .map(|_| SlicePosition::new(rng.random_range(0.0..1.0)).expect("in range"))
            .collect();
        let omega = positive_set_pcl(&positions, 0.1).expect("valid threshold");
        (gaussian(rng, vec![2 * b, d]), omega)
    })
}

/// Tiny network used by the parameter suites: two blocks, 4 feature
/// channels, a 6-wide projector. 347 parameters.
pub fn tiny_config() -> EncoderConfig {
    EncoderConfig {
        in_channels: 1,
        n_blocks: 2,
        base_channels: 2,
        proj_hidden: 6,
        proj_dim: 5,
    }
}

/// Perturb each coordinate of the selected parameter tensors and compare
/// the central difference of `objective` against `analytic`.
fn check_parameters(
    name: &str,
    params: &EncoderParams,
    tensors: std::ops::Range<usize>,
    analytic: &[Tensor],
    mut objective: impl FnMut(&EncoderParams) -> Result<(f64, Vec<u64>)>,
) -> Result<SuiteReport> {
    let (_, baseline) = objective(params)?;
    let mut probe = params.clone();
    let mut a = Vec::new();
    let mut n = Vec::new();
    let mut skipped = 0;
    for t in tensors {
        for i in 0..params.tensors()[t].len() {
            let orig = params.tensors()[t].data()[i];
            probe.tensors_mut()[t].data_mut()[i] = orig + FD_STEP;
            let (plus, pattern_plus) = objective(&probe)?;
            probe.tensors_mut()[t].data_mut()[i] = orig - FD_STEP;
            let (minus, pattern_minus) = objective(&probe)?;
            probe.tensors_mut()[t].data_mut()[i] = orig;
            if pattern_plus != baseline || pattern_minus != baseline {
                skipped += 1;
                continue;
            }
            a.push(analytic[t].data()[i]);
            n.push((plus - minus) / (2.0 * FD_STEP));
        }
    }
    Ok(SuiteReport {
        name: name.into(),
        instances: 1,
        checked: a.len(),
        skipped,
        max_rel_error: relative_error(&a, &n),
        tolerance: NETWORK_TOLERANCE,
    })
}

/// Encoder alone under a random linear read-out of the features, 8×8 input.
pub fn conv_block_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = EncoderParams::init(tiny_config(), seed)?;
    let x = gaussian(&mut rng, vec![2, 1, 8, 8]);
    let (features, cache) = encoder_forward(&params, &x)?;
    let readout = gaussian(&mut rng, features.shape().to_vec());
    let mut grads = zero_grads(&params);
    encoder_backward(&params, &cache, &readout, &mut grads)?;
    let n_enc = 4 * params.config().n_blocks;
    check_parameters("conv_block", &params, 0..n_enc, &grads, |p| {
        let (f, c) = encoder_forward(p, &x)?;
        Ok((crate::tensor::dot(f.data(), readout.data()), c.activation_pattern()))
    })
}

/// Projector alone on fixed random features.
pub fn projector_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = EncoderParams::init(tiny_config(), seed)?;
    let c = params.config().feature_channels();
    let features = gaussian(&mut rng, vec![3, c, 2, 2]);
    let (z, cache) = projector_forward(&params, &features)?;
    let readout = gaussian(&mut rng, z.shape().to_vec());
    let mut grads = zero_grads(&params);
    projector_backward(&params, &cache, &readout, &mut grads)?;
    let n_enc = 4 * params.config().n_blocks;
    let all = params.tensors().len();
    check_parameters("projector", &params, n_enc..all, &grads, |p| {
        let (z, c) = projector_forward(p, &features)?;
        Ok((crate::tensor::dot(z.data(), readout.data()), c.activation_pattern()))
    })
}

/// Full weighted objective of the training step with its positive sets
/// frozen at the unperturbed parameters.
pub fn end_to_end_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = EncoderParams::init(tiny_config(), seed)?;
    let corpus = synth_dataset(seed, 2, 2, 16, 16);
    let slic = SlicConfig {
        k_request: 4,
        seed,
        ..SlicConfig::default()
    };
    let originals: Vec<&Image> = corpus.images.iter().collect();
    let maps = originals
        .iter()
        .map(|img| downsample_map(&slic_segment(img, &slic)?, 4, 4))
        .collect::<Result<Vec<_>>>()?;
    let batch = build_batch(
        &originals,
        maps,
        corpus.positions.clone(),
        &Default::default(),
        true,
        &mut rng,
    )?;
    let opts = PairOptions {
        stride: 1,
        pair_mode: PairMode::Joint,
        region_normalize: false,
        asp_source: Default::default(),
        pcl_threshold: 0.1,
    };
    let weights = LossWeights::default();
    let fwd = forward(&params, &batch)?;
    let sets = pair_sets(&fwd, &batch, &opts)?;
    let report = evaluate(&fwd, &sets, &weights)?;
    let grads = gradients(&params, &fwd, &sets, &report)?;
    let all = params.tensors().len();
    check_parameters("end_to_end", &params, 0..all, &grads, |p| {
        let f = forward(p, &batch)?;
        Ok((evaluate(&f, &sets, &weights)?.total, f.activation_pattern()))
    })
}

/// Every suite, as run by the `gradcheck` subcommand.
pub fn run_all(seed: u64) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        suites: vec![
            intra_suite(seed, 100)?,
            inter_suite(seed.wrapping_add(1), 100)?,
            ins_suite(seed.wrapping_add(2), 100)?,
            conv_block_suite(seed)?,
            projector_suite(seed)?,
            end_to_end_suite(seed)?,
        ],
    })
}
