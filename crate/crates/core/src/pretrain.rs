//! End-to-end toy pre-training.
//!
//! Every step draws a batch, builds the two augmentation groups, runs the
//! encoder on both, derives the three positive sets (superpixel pairs on the
//! aligned views, the weak label from averaged-superpixel features, slice
//! positions), evaluates the weighted objective and takes an SGD step.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{fixed_pair, variable_pair, AugmentRanges};
use crate::data::{synth_dataset, Corpus};
use crate::error::{Error, Result};
use crate::igcp::{self, extend_weak_label, WeakLabelChain};
use crate::ilcp::{build_ilcp_positive_set, stride_positions, PairMode};
use crate::image::Image;
use crate::loss::{
    positive_set_pcl, supervised_infonce, total_loss, LossReport, LossWeights, SlicePosition,
    Term, DEFAULT_PCL_THRESHOLD,
};
use crate::nn::{
    calibrate_init, encoder_backward, encoder_forward, projector_backward, projector_forward, zero_grads,
    EncoderCache, EncoderConfig, EncoderParams, ParamGrads, ProjectorCache,
};
use crate::optim::sgd_cosine_step;
use crate::positive::PositiveSet;
use crate::superpixel::{downsample_map, slic_segment, SlicConfig, SuperpixelMap};
use crate::tensor::Tensor;

/// Which pixel-path feature map feeds the averaged-superpixel features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AspSource {
    #[default]
    FirstView,
    Average,
}

/// Size of the synthetic corpus used when no data directory is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_volumes: usize,
    pub slices_per_volume: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_volumes: 8,
            slices_per_volume: 8,
            height: 64,
            width: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch: usize,
    pub lr0: f64,
    pub weights: LossWeights,
    pub stride: usize,
    pub k_superpixels: usize,
    pub slic_compactness: f64,
    pub slic_iterations: usize,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub pcl_threshold: f64,
    pub pair_mode: PairMode,
    pub region_normalize: bool,
    pub asp_source: AspSource,
    pub augment: AugmentRanges,
    pub synth: SynthConfig,
    /// Re-centre the initial biases on a calibration batch drawn from the
    /// corpus before the first step.
    pub center_init: bool,
    /// Give every augmented view zero mean and unit variance before it
    /// enters the encoder.
    pub standardize_views: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            steps_per_epoch: 20,
            batch: 8,
            lr0: 0.2,
            weights: LossWeights::default(),
            stride: 1,
            k_superpixels: 100,
            slic_compactness: 10.0,
            slic_iterations: 10,
            seed: 0,
            encoder: EncoderConfig::default(),
            pcl_threshold: DEFAULT_PCL_THRESHOLD,
            pair_mode: PairMode::Joint,
            region_normalize: false,
            asp_source: AspSource::FirstView,
            augment: AugmentRanges::default(),
            synth: SynthConfig::default(),
            center_init: false,
            standardize_views: true,
        }
    }
}

impl TrainConfig {
    /// Reference sizes of the full-scale setup: batch 16, four blocks and 128
    /// output channels, with 512×512 inputs giving 32×32 feature maps.
    pub fn reference_scale() -> Self {
        Self {
            batch: 16,
            lr0: 0.1,
            k_superpixels: 100,
            encoder: EncoderConfig {
                n_blocks: 4,
                base_channels: 16,
                proj_hidden: 128,
                proj_dim: 128,
                ..EncoderConfig::default()
            },
            synth: SynthConfig {
                height: 512,
                width: 512,
                ..SynthConfig::default()
            },
            ..Self::default()
        }
    }

    /// The synthetic corpus described by `synth`, seeded with `seed`.
    pub fn synth_corpus(&self) -> Corpus {
        let s = &self.synth;
        synth_dataset(self.seed, s.n_volumes, s.slices_per_volume, s.height, s.width)
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn slic(&self) -> SlicConfig {
        SlicConfig {
            k_request: self.k_superpixels,
            compactness: self.slic_compactness,
            iterations: self.slic_iterations,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::Config("batch must hold at least two samples".into()));
        }
        if !(self.lr0 >= 0.0) {
            return Err(Error::Config("lr0 must be non-negative".into()));
        }
        if !(self.pcl_threshold >= 0.0) {
            return Err(Error::Config("pcl_threshold must be non-negative".into()));
        }
        self.weights.validate()?;
        self.encoder.validate()?;
        self.slic().validate()
    }
}

/// Images of one step, already augmented, plus their guidance.
pub struct Batch {
    /// `2B × 1 × H × W`: the first intensity-only view of every sample, then
    /// the second.
    pub pixel_views: Tensor,
    /// `2B × 1 × H × W`: the two warped views, same ordering.
    pub instance_views: Tensor,
    /// Superpixel maps of the originals, already on the feature grid.
    pub maps: Vec<SuperpixelMap>,
    pub positions: Vec<SlicePosition>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.maps.len()
    }
}

fn stack_images(images: &[&Image]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("cannot stack an empty batch".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if (img.height, img.width, img.channels) != (h, w, 1) {
            return Err(Error::Shape("batch images must be gray and equally sized".into()));
        }
        data.extend_from_slice(&img.data);
    }
    Tensor::new(vec![images.len(), 1, h, w], data)
}

/// Shift and scale every `H × W` plane of an `N × 1 × H × W` stack to zero
/// mean and unit variance. Constant planes are only centred.
pub fn standardize_planes(t: &mut Tensor) {
    let plane: usize = t.shape()[2..].iter().product();
    if plane == 0 {
        return;
    }
    for chunk in t.data_mut().chunks_mut(plane) {
        let mean = chunk.iter().sum::<f64>() / plane as f64;
        let var = chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / plane as f64;
        let scale = if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
        chunk.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    }
}

/// Augment `originals` into a [`Batch`], optionally standardizing every
/// view with [`standardize_planes`].
pub fn build_batch(
    originals: &[&Image],
    maps: Vec<SuperpixelMap>,
    positions: Vec<SlicePosition>,
    ranges: &AugmentRanges,
    standardize: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Batch> {
    let mut fixed = Vec::with_capacity(originals.len());
    let mut variable = Vec::with_capacity(originals.len());
    for img in originals {
        fixed.push(fixed_pair(img, ranges, rng));
        variable.push(variable_pair(img, ranges, rng));
    }
    let pixel: Vec<&Image> = fixed.iter().map(|p| &p.0).chain(fixed.iter().map(|p| &p.1)).collect();
    let inst: Vec<&Image> = variable.iter().map(|p| &p.0).chain(variable.iter().map(|p| &p.1)).collect();
    let mut pixel_views = stack_images(&pixel)?;
    let mut instance_views = stack_images(&inst)?;
    if standardize {
        standardize_planes(&mut pixel_views);
        standardize_planes(&mut instance_views);
    }
    Ok(Batch {
        pixel_views,
        instance_views,
        maps,
        positions,
    })
}

/// Encoder outputs for both groups and the instance projections.
pub struct ForwardPass {
    pub pixel_features: Tensor,
    pub pixel_cache: EncoderCache,
    pub instance_cache: EncoderCache,
    pub projections: Tensor,
    pub projector_cache: ProjectorCache,
}

impl ForwardPass {
    pub fn activation_pattern(&self) -> Vec<u64> {
        let mut p = self.pixel_cache.activation_pattern();
        p.extend(self.instance_cache.activation_pattern());
        p.extend(self.projector_cache.activation_pattern());
        p
    }
}

pub fn forward(params: &EncoderParams, batch: &Batch) -> Result<ForwardPass> {
    let (pixel_features, pixel_cache) = encoder_forward(params, &batch.pixel_views)?;
    let (instance_features, instance_cache) = encoder_forward(params, &batch.instance_views)?;
    let (projections, projector_cache) = projector_forward(params, &instance_features)?;
    Ok(ForwardPass {
        pixel_features,
        pixel_cache,
        instance_cache,
        projections,
        projector_cache,
    })
}

/// Positive sets for one step. They act as labels: no gradient flows
/// through their construction.
pub struct PairSets {
    /// Feature-grid positions kept by the stride.
    pub positions: Vec<usize>,
    pub ilcp: Vec<PositiveSet>,
    pub chain: WeakLabelChain,
    pub omega_w: PositiveSet,
    pub omega_pcl: PositiveSet,
}

pub struct PairOptions {
    pub stride: usize,
    pub pair_mode: PairMode,
    pub region_normalize: bool,
    pub asp_source: AspSource,
    pub pcl_threshold: f64,
}

impl From<&TrainConfig> for PairOptions {
    fn from(cfg: &TrainConfig) -> Self {
        Self {
            stride: cfg.stride,
            pair_mode: cfg.pair_mode,
            region_normalize: cfg.region_normalize,
            asp_source: cfg.asp_source,
            pcl_threshold: cfg.pcl_threshold,
        }
    }
}

pub fn pair_sets(fwd: &ForwardPass, batch: &Batch, opts: &PairOptions) -> Result<PairSets> {
    let b = batch.size();
    let [_, c, h, w] = *fwd.pixel_features.shape() else {
        unreachable!("encoder output is 4-D")
    };
    let positions = stride_positions(h, w, opts.stride)?;
    let mut ilcp = Vec::with_capacity(b);
    for map in &batch.maps {
        if (map.height(), map.width()) != (h, w) {
            return Err(Error::Shape(format!(
                "superpixel map is {}x{}, feature grid is {h}x{w}",
                map.height(),
                map.width()
            )));
        }
        let labels: Vec<usize> = positions.iter().map(|&p| map.labels()[p]).collect();
        ilcp.push(build_ilcp_positive_set(&labels, &labels, opts.pair_mode)?);
    }

    let plane = c * h * w;
    let data = fwd.pixel_features.data();
    let y: Vec<f64> = match opts.asp_source {
        AspSource::FirstView => data[..b * plane].to_vec(),
        AspSource::Average => data[..b * plane]
            .iter()
            .zip(&data[b * plane..2 * b * plane])
            .map(|(a, b)| 0.5 * (a + b))
            .collect(),
    };
    let y = Tensor::new(vec![b, c, h, w], y)?;
    let chain = igcp::weak_label_chain(&y, &batch.maps, opts.region_normalize)?;
    let omega_w = extend_weak_label(&chain.weak);
    let omega_pcl = positive_set_pcl(&batch.positions, opts.pcl_threshold)?;
    Ok(PairSets {
        positions,
        ilcp,
        chain,
        omega_w,
        omega_pcl,
    })
}

/// `2n × C` pixel projections of sample `s`: its first view's kept grid
/// positions, then the second view's.
pub fn pixel_projections(features: &Tensor, s: usize, batch: usize, positions: &[usize]) -> Tensor {
    let [_, c, h, w] = *features.shape() else {
        unreachable!("encoder output is 4-D")
    };
    let plane = h * w;
    let mut data = Vec::with_capacity(2 * positions.len() * c);
    for view in 0..2 {
        let base = (view * batch + s) * c * plane;
        for &p in positions {
            data.extend((0..c).map(|ch| features.data()[base + ch * plane + p]));
        }
    }
    Tensor::new(vec![2 * positions.len(), c], data).expect("sized")
}

/// Evaluate the weighted objective on a forward pass with fixed pair sets.
pub fn evaluate(fwd: &ForwardPass, sets: &PairSets, weights: &LossWeights) -> Result<LossReport> {
    let b = sets.ilcp.len();
    let tau = weights.tau;
    let intra = sets
        .ilcp
        .iter()
        .enumerate()
        .map(|(s, omega)| {
            let z = pixel_projections(&fwd.pixel_features, s, b, &sets.positions);
            supervised_infonce(&z, omega, tau)
        })
        .collect::<Result<Vec<_>>>()?;
    let ins = supervised_infonce(&fwd.projections, &sets.omega_pcl, tau)?;
    let inter = supervised_infonce(&fwd.projections, &sets.omega_w, tau)?;
    total_loss(
        Some(ins.into()),
        Some(Term::batch_mean(intra)?),
        Some(inter.into()),
        *weights,
    )
}

/// Parameter gradients of the reported total.
pub fn gradients(
    params: &EncoderParams,
    fwd: &ForwardPass,
    sets: &PairSets,
    report: &LossReport,
) -> Result<ParamGrads> {
    let mut grads = zero_grads(params);
    let [_, c, h, w] = *fwd.pixel_features.shape() else {
        unreachable!("encoder output is 4-D")
    };
    let b = sets.ilcp.len();
    let plane = h * w;
    let n = sets.positions.len();
    let mut grad_pixel = Tensor::zeros(fwd.pixel_features.shape().to_vec());
    for (s, g) in report.grad_pixel.iter().enumerate() {
        for row in 0..2 * n {
            let (view, p) = (row / n, sets.positions[row % n]);
            let base = (view * b + s) * c * plane;
            for (ch, v) in g.row(row).iter().enumerate() {
                grad_pixel.data_mut()[base + ch * plane + p] += v;
            }
        }
    }
    encoder_backward(params, &fwd.pixel_cache, &grad_pixel, &mut grads)?;
    if let Some(gz) = &report.grad_instance {
        let gf = projector_backward(params, &fwd.projector_cache, gz, &mut grads)?;
        encoder_backward(params, &fwd.instance_cache, &gf, &mut grads)?;
    }
    Ok(grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub ins: f64,
    pub intra: f64,
    pub inter: f64,
}

pub fn curve_to_csv(curve: &[StepRecord]) -> String {
    let mut out = String::from("step,lr,total,ins,intra,inter\n");
    for r in curve {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.lr, r.total, r.ins, r.intra, r.inter
        ));
    }
    out
}

/// Mean total loss over the 1-based inclusive step range.
pub fn mean_total(curve: &[StepRecord], first: usize, last: usize) -> f64 {
    let window: Vec<f64> = curve
        .iter()
        .filter(|r| (first..=last).contains(&r.step))
        .map(|r| r.total)
        .collect();
    window.iter().sum::<f64>() / window.len() as f64
}

pub struct PretrainOutcome {
    pub initial: EncoderParams,
    pub params: EncoderParams,
    pub curve: Vec<StepRecord>,
}

/// Up to `count` original images spread evenly over the corpus.
pub fn calibration_batch(corpus: &Corpus, count: usize, standardize: bool) -> Result<Tensor> {
    let count = count.min(corpus.len()).max(1);
    let picks: Vec<&Image> = (0..count)
        .map(|i| &corpus.images[i * corpus.len() / count])
        .collect();
    let mut t = stack_images(&picks)?;
    if standardize {
        standardize_planes(&mut t);
    }
    Ok(t)
}

pub fn pretrain_run(cfg: &TrainConfig, corpus: &Corpus) -> Result<PretrainOutcome> {
    pretrain_run_with(cfg, corpus, |_| {})
}

/// Train, reporting every finished step to `on_step`.
pub fn pretrain_run_with(
    cfg: &TrainConfig,
    corpus: &Corpus,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("corpus is empty".into()));
    }
    if corpus.len() < cfg.batch {
        return Err(Error::Config(format!(
            "corpus holds {} images, fewer than the batch of {}",
            corpus.len(),
            cfg.batch
        )));
    }
    let (height, width) = (corpus.images[0].height, corpus.images[0].width);
    let factor = cfg.encoder.downsampling();
    if height % factor != 0 || width % factor != 0 {
        return Err(Error::Shape(format!(
            "{height}x{width} images cannot pass {} pooling stages",
            cfg.encoder.n_blocks
        )));
    }
    let (fh, fw) = (height / factor, width / factor);
    stride_positions(fh, fw, cfg.stride)?;

    let mut initial = EncoderParams::init(cfg.encoder.clone(), cfg.seed)?;
    if cfg.center_init {
        calibrate_init(&mut initial, &calibration_batch(corpus, 2 * cfg.batch, cfg.standardize_views)?)?;
    }
    let mut params = initial.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let opts = PairOptions::from(cfg);
    let slic = cfg.slic();
    let mut maps: HashMap<usize, SuperpixelMap> = HashMap::new();
    let total = cfg.total_steps();
    let mut curve = Vec::with_capacity(total);

    for t in 0..total {
        let picks = sample(&mut rng, corpus.len(), cfg.batch).into_vec();
        let mut batch_maps = Vec::with_capacity(cfg.batch);
        for &i in &picks {
            if !maps.contains_key(&i) {
                // superpixels come from the untouched original
                let full = slic_segment(&corpus.images[i], &slic)?;
                maps.insert(i, downsample_map(&full, fh, fw)?);
            }
            batch_maps.push(maps[&i].clone());
        }
        let originals: Vec<&Image> = picks.iter().map(|&i| &corpus.images[i]).collect();
        let positions = picks.iter().map(|&i| corpus.positions[i]).collect();
        let batch = build_batch(&originals, batch_maps, positions, &cfg.augment, cfg.standardize_views, &mut rng)?;

        let fwd = forward(&params, &batch)?;
        let sets = pair_sets(&fwd, &batch, &opts)?;
        let report = evaluate(&fwd, &sets, &cfg.weights)?;
        let grads = gradients(&params, &fwd, &sets, &report)?;
        let lr = sgd_cosine_step(&mut params, &grads, t, total, cfg.lr0)?;

        let record = StepRecord {
            step: t + 1,
            lr,
            total: report.total,
            ins: report.ins,
            intra: report.intra,
            inter: report.inter,
        };
        on_step(&record);
        curve.push(record);
    }
    Ok(PretrainOutcome {
        initial,
        params,
        curve,
    })
}
