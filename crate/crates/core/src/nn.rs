//! Small convolutional encoder and instance projector with hand-written
//! reverse-mode gradients.
//!
//! Encoder: `n_blocks` × (conv3x3 → leaky ReLU → conv3x3 → leaky ReLU →
//! 2×2 max-pool), channel width doubling per block. Projector: global
//! average pool → linear → ReLU → linear.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.01;

pub const CONV_BIAS_INIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub n_blocks: usize,
    /// Width of the first block; block `b` has `base_channels · 2^b`.
    pub base_channels: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            n_blocks: 2,
            base_channels: 16,
            proj_hidden: 64,
            proj_dim: 64,
        }
    }
}

impl EncoderConfig {
    /// Channels of the encoder output.
    pub fn feature_channels(&self) -> usize {
        self.base_channels << self.n_blocks.saturating_sub(1)
    }

    /// Spatial reduction factor of the encoder.
    pub fn downsampling(&self) -> usize {
        1 << self.n_blocks
    }

    fn conv_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(2 * self.n_blocks);
        let mut cin = self.in_channels;
        for b in 0..self.n_blocks {
            let cout = self.base_channels << b;
            shapes.push((cin, cout));
            shapes.push((cout, cout));
            cin = cout;
        }
        shapes
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.n_blocks == 0
            || self.base_channels == 0
            || self.proj_hidden == 0
            || self.proj_dim == 0
        {
            return Err(Error::Config("network sizes must be positive".into()));
        }
        Ok(())
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Encoder and projector weights.
///
/// Tensors are kept in a fixed order: for every convolution its weight
/// (`out × in × 3 × 3`) and bias, then the two projector layers' weights
/// (`out × in`) and biases.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    cfg: EncoderConfig,
    tensors: Vec<Tensor>,
    version: u64,
}

impl PartialEq for EncoderParams {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.tensors == other.tensors
    }
}

impl EncoderParams {
    /// He-normal weights, zero biases.
    /// He-normal weights; convolution biases start at [`CONV_BIAS_INIT`] so
    /// an all-zero input region still yields non-zero features.
    pub fn init(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |shape: Vec<usize>, fan_in: usize| {
            let std = (2.0 / fan_in as f64).sqrt();
            let n = shape.iter().product();
            let data = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    std * z
                })
                .collect::<Vec<f64>>();
            Tensor::new(shape, data).expect("sized from shape")
        };
        let mut tensors = Vec::new();
        for (cin, cout) in cfg.conv_shapes() {
            tensors.push(normal(vec![cout, cin, 3, 3], cin * 9));
            tensors.push(Tensor::filled(vec![cout], CONV_BIAS_INIT));
        }
        let c = cfg.feature_channels();
        tensors.push(normal(vec![cfg.proj_hidden, c], c));
        tensors.push(Tensor::zeros(vec![cfg.proj_hidden]));
        tensors.push(normal(vec![cfg.proj_dim, cfg.proj_hidden], cfg.proj_hidden));
        tensors.push(Tensor::zeros(vec![cfg.proj_dim]));
        Ok(Self {
            cfg,
            tensors,
            version: fresh_version(),
        })
    }

    /// Same layout with every entry zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            cfg: self.cfg.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect(),
            version: fresh_version(),
        }
    }

    pub fn from_tensors(cfg: EncoderConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let template = Self::init(cfg.clone(), 0)?;
        if tensors.len() != template.tensors.len()
            || tensors.iter().zip(&template.tensors).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Shape("parameter tensors do not match the configuration".into()));
        }
        Ok(Self {
            cfg,
            tensors,
            version: fresh_version(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Mutable access; invalidates caches from earlier forward passes.
    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        self.version = fresh_version();
        &mut self.tensors
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.tensors.len());
        for b in 0..self.cfg.n_blocks {
            for c in 0..2 {
                names.push(format!("encoder.block{b}.conv{c}.weight"));
                names.push(format!("encoder.block{b}.conv{c}.bias"));
            }
        }
        for l in 0..2 {
            names.push(format!("projector.linear{l}.weight"));
            names.push(format!("projector.linear{l}.bias"));
        }
        names
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    fn conv(&self, layer: usize) -> (&Tensor, &Tensor) {
        (&self.tensors[2 * layer], &self.tensors[2 * layer + 1])
    }

    fn linear(&self, layer: usize) -> (&Tensor, &Tensor) {
        let base = 4 * self.cfg.n_blocks + 2 * layer;
        (&self.tensors[base], &self.tensors[base + 1])
    }
}

/// Data-dependent initialization on the calibration batch `x`, one layer at
/// a time from the input side: every convolution and the hidden projector
/// layer get per-channel zero-mean, unit-variance pre-activations.
pub fn calibrate_init(params: &mut EncoderParams, x: &Tensor) -> Result<()> {
    for layer in 0..2 * params.cfg.n_blocks {
        let (_, cache) = encoder_forward(params, x)?;
        let rec = &cache.convs[layer];
        let plane = rec.h * rec.w;
        let channel = |i: usize| (i / plane) % rec.cout;
        let stats = channel_stats(&rec.pre_activation, rec.cout, channel);
        rescale_layer(params, 2 * layer, &stats);
    }
    let (features, _) = encoder_forward(params, x)?;
    let (_, cache) = projector_forward(params, &features)?;
    let hidden = params.cfg.proj_hidden;
    let stats = channel_stats(&cache.hidden_pre, hidden, |i| i % hidden);
    rescale_layer(params, 4 * params.cfg.n_blocks, &stats);
    Ok(())
}

/// Per-channel mean and a single layer-wide standard deviation.
fn channel_stats(values: &[f64], channels: usize, channel: impl Fn(usize) -> usize) -> (Vec<f64>, f64) {
    let per = (values.len() / channels) as f64;
    let mut mean = vec![0.0; channels];
    for (i, v) in values.iter().enumerate() {
        mean[channel(i)] += v / per;
    }
    let var = values
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean[channel(i)]).powi(2))
        .sum::<f64>()
        / values.len() as f64;
    (mean, var.sqrt())
}

fn rescale_layer(params: &mut EncoderParams, weight: usize, (mean, std): &(Vec<f64>, f64)) {
    let scale = if *std > 0.0 { 1.0 / std } else { 1.0 };
    params.tensors_mut()[weight].scale(scale);
    let bias = params.tensors_mut()[weight + 1].data_mut();
    bias.iter_mut()
        .zip(mean)
        .for_each(|(b, m)| *b = (*b - m) * scale);
}

/// Parameter gradients, laid out like [`EncoderParams`].
pub type ParamGrads = Vec<Tensor>;

pub fn zero_grads(params: &EncoderParams) -> ParamGrads {
    params
        .tensors
        .iter()
        .map(|t| Tensor::zeros(t.shape().to_vec()))
        .collect()
}

struct ConvRecord {
    input: Vec<f64>,
    pre_activation: Vec<f64>,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
}

struct PoolRecord {
    argmax: Vec<u32>,
    c: usize,
    h: usize,
    w: usize,
}

/// Intermediates of [`encoder_forward`] needed by [`encoder_backward`].
pub struct EncoderCache {
    version: u64,
    batch: usize,
    convs: Vec<ConvRecord>,
    pools: Vec<PoolRecord>,
}

impl EncoderCache {
    /// Sign pattern of every activation and the winner of every pool
    /// window; equal patterns mean the network is locally linear between
    /// the two evaluations.
    pub fn activation_pattern(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for conv in &self.convs {
            pack_bits(conv.pre_activation.iter().map(|&v| v > 0.0), &mut out);
        }
        for pool in &self.pools {
            out.extend(pool.argmax.iter().map(|&a| u64::from(a)));
        }
        out
    }
}

fn pack_bits(bits: impl Iterator<Item = bool>, out: &mut Vec<u64>) {
    let mut word = 0u64;
    let mut n = 0;
    for b in bits {
        word |= u64::from(b) << n;
        n += 1;
        if n == 64 {
            out.push(word);
            word = 0;
            n = 0;
        }
    }
    if n > 0 {
        out.push(word);
    }
}

/// Encoder forward pass on an `N × C_in × H × W` batch; returns the
/// `N × C × H/2^n × W/2^n` feature map.
pub fn encoder_forward(params: &EncoderParams, x: &Tensor) -> Result<(Tensor, EncoderCache)> {
    let cfg = &params.cfg;
    let [n, cin, h, w] = *x.shape() else {
        return Err(Error::Shape(format!("expected N×C×H×W input, got {:?}", x.shape())));
    };
    let factor = cfg.downsampling();
    if cin != cfg.in_channels || h % factor != 0 || w % factor != 0 || h == 0 || w == 0 {
        return Err(Error::Shape(format!(
            "input {:?} incompatible with {} input channels and {} blocks",
            x.shape(),
            cfg.in_channels,
            cfg.n_blocks
        )));
    }

    let mut act = x.data().to_vec();
    let (mut c, mut hh, mut ww) = (cin, h, w);
    let mut convs = Vec::with_capacity(2 * cfg.n_blocks);
    let mut pools = Vec::with_capacity(cfg.n_blocks);
    let mut col = Vec::new();
    for (layer, (lin, lout)) in cfg.conv_shapes().into_iter().enumerate() {
        debug_assert_eq!(lin, c);
        let (weight, bias) = params.conv(layer);
        let plane = hh * ww;
        let mut pre = vec![0.0; n * lout * plane];
        col.resize(lin * 9 * plane, 0.0);
        for s in 0..n {
            im2col(&act[s * lin * plane..(s + 1) * lin * plane], lin, hh, ww, &mut col);
            let out = &mut pre[s * lout * plane..(s + 1) * lout * plane];
            for (o, row) in out.chunks_exact_mut(plane).enumerate() {
                row.iter_mut().for_each(|v| *v = bias.data()[o]);
            }
            gemm(lout, lin * 9, plane, 1.0, weight.data(), false, &col, false, 1.0, out);
        }
        let activated: Vec<f64> = pre
            .iter()
            .map(|&v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
            .collect();
        convs.push(ConvRecord {
            input: std::mem::replace(&mut act, activated),
            pre_activation: pre,
            cin: lin,
            cout: lout,
            h: hh,
            w: ww,
        });
        c = lout;
        if layer % 2 == 1 {
            let (pooled, argmax) = max_pool(&act, n * c, hh, ww);
            pools.push(PoolRecord { argmax, c, h: hh, w: ww });
            act = pooled;
            hh /= 2;
            ww /= 2;
        }
    }
    let features = Tensor::new(vec![n, c, hh, ww], act)?;
    Ok((
        features,
        EncoderCache {
            version: params.version,
            batch: n,
            convs,
            pools,
        },
    ))
}

/// Accumulate parameter gradients of the encoder into `grads` given the
/// gradient with respect to its output; returns the input gradient.
pub fn encoder_backward(
    params: &EncoderParams,
    cache: &EncoderCache,
    grad_features: &Tensor,
    grads: &mut ParamGrads,
) -> Result<Tensor> {
    if cache.version != params.version {
        return Err(Error::StaleCache);
    }
    let n = cache.batch;
    let mut grad = grad_features.data().to_vec();
    let mut col = Vec::new();
    let mut dcol = Vec::new();
    for layer in (0..cache.convs.len()).rev() {
        if layer % 2 == 1 {
            let pool = &cache.pools[layer / 2];
            grad = max_pool_backward(&grad, &pool.argmax, n * pool.c, pool.h, pool.w);
        }
        let rec = &cache.convs[layer];
        let plane = rec.h * rec.w;
        if grad.len() != n * rec.cout * plane {
            return Err(Error::Shape("feature gradient does not match the cache".into()));
        }
        for (g, &z) in grad.iter_mut().zip(&rec.pre_activation) {
            if z <= 0.0 {
                *g *= LEAKY_SLOPE;
            }
        }
        let (weight, _) = params.conv(layer);
        let k = rec.cin * 9;
        col.resize(k * plane, 0.0);
        dcol.resize(k * plane, 0.0);
        let mut grad_input = vec![0.0; n * rec.cin * plane];
        let (gw, rest) = grads[2 * layer..].split_at_mut(1);
        let (gw, gb) = (&mut gw[0], &mut rest[0]);
        for s in 0..n {
            let gout = &grad[s * rec.cout * plane..(s + 1) * rec.cout * plane];
            im2col(&rec.input[s * rec.cin * plane..(s + 1) * rec.cin * plane], rec.cin, rec.h, rec.w, &mut col);
            gemm(rec.cout, plane, k, 1.0, gout, false, &col, true, 1.0, gw.data_mut());
            for (o, row) in gout.chunks_exact(plane).enumerate() {
                gb.data_mut()[o] += row.iter().sum::<f64>();
            }
            if layer > 0 {
                gemm(k, rec.cout, plane, 1.0, weight.data(), true, gout, false, 0.0, &mut dcol);
                col2im(&dcol, rec.cin, rec.h, rec.w, &mut grad_input[s * rec.cin * plane..(s + 1) * rec.cin * plane]);
            }
        }
        grad = grad_input;
    }
    let input_shape = {
        let first = &cache.convs[0];
        vec![n, first.cin, first.h, first.w]
    };
    Tensor::new(input_shape, grad)
}

/// Intermediates of [`projector_forward`].
pub struct ProjectorCache {
    version: u64,
    feature_shape: Vec<usize>,
    pooled: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

impl ProjectorCache {
    pub fn activation_pattern(&self) -> Vec<u64> {
        let mut out = Vec::new();
        pack_bits(self.hidden_pre.iter().map(|&v| v > 0.0), &mut out);
        out
    }
}

/// Global average pool → linear → ReLU → linear; returns `N × proj_dim`.
pub fn projector_forward(params: &EncoderParams, features: &Tensor) -> Result<(Tensor, ProjectorCache)> {
    let cfg = &params.cfg;
    let [n, c, h, w] = *features.shape() else {
        return Err(Error::Shape(format!("expected N×C×h×w features, got {:?}", features.shape())));
    };
    if c != cfg.feature_channels() || h * w == 0 {
        return Err(Error::Shape(format!(
            "projector expects {} channels, got {c}",
            cfg.feature_channels()
        )));
    }
    let plane = h * w;
    let pooled: Vec<f64> = features
        .data()
        .chunks_exact(plane)
        .map(|p| p.iter().sum::<f64>() / plane as f64)
        .collect();
    let (w1, b1) = params.linear(0);
    let (w2, b2) = params.linear(1);
    let hid = cfg.proj_hidden;
    let mut hidden_pre: Vec<f64> = (0..n).flat_map(|_| b1.data().iter().copied()).collect();
    gemm(n, c, hid, 1.0, &pooled, false, w1.data(), true, 1.0, &mut hidden_pre);
    let hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
    let mut out: Vec<f64> = (0..n).flat_map(|_| b2.data().iter().copied()).collect();
    gemm(n, hid, cfg.proj_dim, 1.0, &hidden, false, w2.data(), true, 1.0, &mut out);
    Ok((
        Tensor::new(vec![n, cfg.proj_dim], out)?,
        ProjectorCache {
            version: params.version,
            feature_shape: features.shape().to_vec(),
            pooled,
            hidden_pre,
            hidden,
        },
    ))
}

/// Accumulate projector gradients; returns the gradient with respect to the
/// encoder features that were projected.
pub fn projector_backward(
    params: &EncoderParams,
    cache: &ProjectorCache,
    grad_z: &Tensor,
    grads: &mut ParamGrads,
) -> Result<Tensor> {
    if cache.version != params.version {
        return Err(Error::StaleCache);
    }
    let cfg = &params.cfg;
    let [n, c, h, w] = cache.feature_shape[..] else {
        unreachable!("cache shape is always 4-D")
    };
    if grad_z.shape() != [n, cfg.proj_dim] {
        return Err(Error::Shape(format!(
            "projection gradient {:?} does not match {n}x{}",
            grad_z.shape(),
            cfg.proj_dim
        )));
    }
    let hid = cfg.proj_hidden;
    let base = 4 * cfg.n_blocks;
    let (w1, _) = params.linear(0);
    let (w2, _) = params.linear(1);
    let gz = grad_z.data();

    gemm(cfg.proj_dim, n, hid, 1.0, gz, true, &cache.hidden, false, 1.0, grads[base + 2].data_mut());
    accumulate_rows(gz, cfg.proj_dim, grads[base + 3].data_mut());

    let mut g_hidden = vec![0.0; n * hid];
    gemm(n, cfg.proj_dim, hid, 1.0, gz, false, w2.data(), false, 0.0, &mut g_hidden);
    for (g, &pre) in g_hidden.iter_mut().zip(&cache.hidden_pre) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    gemm(hid, n, c, 1.0, &g_hidden, true, &cache.pooled, false, 1.0, grads[base].data_mut());
    accumulate_rows(&g_hidden, hid, grads[base + 1].data_mut());

    let mut g_pooled = vec![0.0; n * c];
    gemm(n, hid, c, 1.0, &g_hidden, false, w1.data(), false, 0.0, &mut g_pooled);
    let plane = h * w;
    let data = g_pooled
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g / plane as f64, plane))
        .collect();
    Tensor::new(cache.feature_shape.clone(), data)
}

/// Gradients of a scalar loss given its gradients with respect to the
/// encoder output and/or the projector output of the same forward pass.
pub fn backward(
    params: &EncoderParams,
    encoder_cache: &EncoderCache,
    projector_cache: Option<&ProjectorCache>,
    grad_features: Option<&Tensor>,
    grad_z: Option<&Tensor>,
) -> Result<ParamGrads> {
    let mut grads = zero_grads(params);
    let mut total: Option<Tensor> = grad_features.cloned();
    if let Some(gz) = grad_z {
        let cache = projector_cache
            .ok_or_else(|| Error::Shape("projection gradient without a projector cache".into()))?;
        let gf = projector_backward(params, cache, gz, &mut grads)?;
        match &mut total {
            Some(t) => t.add_scaled(&gf, 1.0)?,
            None => total = Some(gf),
        }
    }
    if let Some(gf) = total {
        encoder_backward(params, encoder_cache, &gf, &mut grads)?;
    }
    Ok(grads)
}

fn accumulate_rows(m: &[f64], cols: usize, out: &mut [f64]) {
    for row in m.chunks_exact(cols) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
}

fn im2col(input: &[f64], c: usize, h: usize, w: usize, col: &mut [f64]) {
    let plane = h * w;
    for ci in 0..c {
        let src = &input[ci * plane..(ci + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let dst = &mut col[((ci * 9) + ky * 3 + kx) * plane..][..plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let row = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        row.fill(0.0);
                        continue;
                    }
                    let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            row[0] = 0.0;
                            row[1..].copy_from_slice(&srow[..w - 1]);
                        }
                        1 => row.copy_from_slice(srow),
                        _ => {
                            row[..w - 1].copy_from_slice(&srow[1..]);
                            row[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], c: usize, h: usize, w: usize, out: &mut [f64]) {
    let plane = h * w;
    for ci in 0..c {
        let dst = &mut out[ci * plane..(ci + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let src = &col[((ci * 9) + ky * 3 + kx) * plane..][..plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let row = &src[y * w..(y + 1) * w];
                    let drow = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => drow[..w - 1].iter_mut().zip(&row[1..]).for_each(|(d, v)| *d += v),
                        1 => drow.iter_mut().zip(row).for_each(|(d, v)| *d += v),
                        _ => drow[1..].iter_mut().zip(&row[..w - 1]).for_each(|(d, v)| *d += v),
                    }
                }
            }
        }
    }
}

/// 2×2 stride-2 max pool over `planes` planes; the first maximum in scan
/// order wins.
fn max_pool(input: &[f64], planes: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut argmax = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let src = &input[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let mut best = 0u32;
                let mut value = src[2 * y * w + 2 * x];
                for (k, (dy, dx)) in [(0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let v = src[(2 * y + dy) * w + 2 * x + dx];
                    if v > value {
                        value = v;
                        best = k as u32 + 1;
                    }
                }
                out.push(value);
                argmax.push(best);
            }
        }
    }
    (out, argmax)
}

fn max_pool_backward(grad: &[f64], argmax: &[u32], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; planes * h * w];
    for p in 0..planes {
        for y in 0..oh {
            for x in 0..ow {
                let i = (p * oh + y) * ow + x;
                let (dy, dx) = [(0, 0), (0, 1), (1, 0), (1, 1)][argmax[i] as usize];
                out[p * h * w + (2 * y + dy) * w + 2 * x + dx] += grad[i];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            in_channels: 1,
            n_blocks: 1,
            base_channels: 2,
            proj_hidden: 3,
            proj_dim: 2,
        }
    }

    #[test]
    fn output_shape() {
        let cfg = EncoderConfig {
            base_channels: 16,
            ..EncoderConfig::default()
        };
        assert_eq!(cfg.feature_channels(), 32);
        let params = EncoderParams::init(cfg, 0).unwrap();
        let x = Tensor::filled(vec![2, 1, 64, 64], 0.5);
        let (f, _) = encoder_forward(&params, &x).unwrap();
        assert_eq!(f.shape(), &[2, 32, 16, 16]);
    }

    #[test]
    fn zero_weights_give_zero_features() {
        let mut params = EncoderParams::init(tiny(), 1).unwrap();
        params.tensors_mut().iter_mut().for_each(|t| t.scale(0.0));
        let x = Tensor::filled(vec![1, 1, 4, 4], 0.7);
        let (f, _) = encoder_forward(&params, &x).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let params = EncoderParams::init(EncoderConfig::default(), 0).unwrap();
        let x = Tensor::zeros(vec![1, 1, 6, 8]);
        assert!(matches!(encoder_forward(&params, &x), Err(Error::Shape(_))));
        let f = Tensor::zeros(vec![1, 5, 2, 2]);
        assert!(matches!(projector_forward(&params, &f), Err(Error::Shape(_))));
    }

    #[test]
    fn pooled_constant_features() {
        let params = EncoderParams::init(tiny(), 2).unwrap();
        let f = Tensor::filled(vec![1, 2, 3, 3], 0.25);
        let (_, cache) = projector_forward(&params, &f).unwrap();
        assert_eq!(cache.pooled, vec![0.25, 0.25]);
    }

    #[test]
    fn zero_last_layer_gives_zero_output() {
        let mut params = EncoderParams::init(tiny(), 3).unwrap();
        let n = params.tensors().len();
        params.tensors_mut()[n - 2].scale(0.0);
        let f = Tensor::filled(vec![2, 2, 2, 2], 1.0);
        let (z, _) = projector_forward(&params, &f).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn stale_cache_is_detected() {
        let mut params = EncoderParams::init(tiny(), 4).unwrap();
        let x = Tensor::filled(vec![1, 1, 4, 4], 0.3);
        let (f, cache) = encoder_forward(&params, &x).unwrap();
        params.tensors_mut()[0].scale(2.0);
        let err = backward(&params, &cache, None, Some(&f), None);
        assert!(matches!(err, Err(Error::StaleCache)));
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w) = (2, 3, 4);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..c * 9 * h * w).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut col = vec![0.0; c * 9 * h * w];
        im2col(&x, c, h, w, &mut col);
        let mut back = vec![0.0; c * h * w];
        col2im(&y, c, h, w, &mut back);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn max_pool_picks_first_max() {
        let input = [1.0, 3.0, 3.0, 2.0];
        let (out, arg) = max_pool(&input, 1, 2, 2);
        assert_eq!(out, vec![3.0]);
        assert_eq!(arg, vec![1]);
        let back = max_pool_backward(&[5.0], &arg, 1, 2, 2);
        assert_eq!(back, vec![0.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn names_match_tensors() {
        let params = EncoderParams::init(EncoderConfig::default(), 0).unwrap();
        assert_eq!(params.names().len(), params.tensors().len());
        assert_eq!(params.names()[0], "encoder.block0.conv0.weight");
    }
}
