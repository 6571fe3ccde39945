//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on a contract violation (bad flag values,
//! mismatched shapes, failed gradient check), 2 on unreadable or malformed
//! files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::save_run;
use crate::data::{load_corpus_dir, synth_dataset, write_corpus_dir};
use crate::error::{Error, Result};
use crate::gradcheck;
use crate::igcp::{extend_weak_label, weak_label_chain, weak_label_components, BinaryMatrix};
use crate::ilcp::{build_ilcp_positive_set, resample_pixels, PairMode};
use crate::image::{load_pgm, write_ppm};
use crate::loss::{
    positive_set_pcl, supervised_infonce, total_loss, LossWeights, SlicePosition, Term,
    DEFAULT_PCL_THRESHOLD,
};
use crate::npy::{self, Precision};
use crate::positive::PositiveSet;
use crate::pretrain::{pretrain_run_with, TrainConfig};
use crate::superpixel::{colorize_map, downsample_map, slic_segment, SlicConfig, SuperpixelMap};
use crate::tensor::Tensor;

#[derive(Debug, Parser)]
#[command(name = "supercl", version, about = "Superpixel-guided contrastive pairs, losses and toy pre-training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment a PGM image with SLIC; write the label map (NPY) and a colour view (PPM).
    Superpixel(SuperpixelArgs),
    /// Emit the pixel-level positive set of a label map as adjacency text.
    Ilcp(IlcpArgs),
    /// Run the averaged-superpixel → affinity → top-1 graph → weak label chain.
    Igcp(IgcpArgs),
    /// Evaluate the weighted contrastive objective on stored projections.
    Loss(LossArgs),
    /// Pre-train the toy encoder and write config, loss curve and checkpoint.
    Pretrain(PretrainArgs),
    /// Check every analytic gradient against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic slice corpus (PGM files plus positions.csv).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SuperpixelArgs {
    /// Input image, binary PGM (P5, maxval 255)
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Number of superpixels requested (reference default)
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Compactness weight m
    #[arg(long, default_value_t = 10.0)]
    pub m: f64,
    /// Assignment/update iterations
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Seed of the visualisation palette
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output label map, H×W float64 NPY
    #[arg(long)]
    pub out_labels: PathBuf,
    /// Output colour visualisation, PPM
    #[arg(long)]
    pub out_vis: PathBuf,
}

#[derive(Debug, Args)]
pub struct IlcpArgs {
    /// Label map, 2-D NPY of non-negative integers
    #[arg(long)]
    pub labels: PathBuf,
    /// Feature-map height the labels are downsampled to
    #[arg(long, default_value_t = 32)]
    pub feat_h: usize,
    /// Feature-map width the labels are downsampled to
    #[arg(long, default_value_t = 32)]
    pub feat_w: usize,
    /// Resampling stride, one of 1 2 4 8 16 32 64 (reference default 1)
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Pair both views freely (joint) or only across views (cross-view)
    #[arg(long, value_enum, default_value_t = CliPairMode::Joint)]
    pub mode: CliPairMode,
    /// Output adjacency list, one `anchor: positives…` line per anchor
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum CliPairMode {
    Joint,
    CrossView,
}

impl From<CliPairMode> for PairMode {
    fn from(m: CliPairMode) -> Self {
        match m {
            CliPairMode::Joint => PairMode::Joint,
            CliPairMode::CrossView => PairMode::CrossView,
        }
    }
}

#[derive(Debug, Args)]
pub struct IgcpArgs {
    /// Pixel-path feature maps, B×C×h×w NPY
    #[arg(long)]
    pub features: PathBuf,
    /// Superpixel maps, B×H×W NPY; downsampled to h×w when larger
    #[arg(long)]
    pub labels: PathBuf,
    /// Average each cluster over its own area instead of the whole map
    #[arg(long)]
    pub region_normalize: bool,
    /// Output affinity matrix, B×B NPY (diagonal −inf)
    #[arg(long)]
    pub out_affinity: PathBuf,
    /// Output top-1 adjacency, B×B NPY of 0/1
    #[arg(long)]
    pub out_adj: PathBuf,
    /// Output weak label, B×B NPY of 0/1
    #[arg(long)]
    pub out_weak: PathBuf,
    /// Weak-label components, one line of sorted member indices each; stdout when omitted
    #[arg(long)]
    pub out_components: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Pixel projections of one sample, 2n×C NPY; repeat once per sample
    #[arg(long)]
    pub pixel: Vec<PathBuf>,
    /// Pixel positive set of the matching --pixel, adjacency text; repeat in the same order
    #[arg(long)]
    pub intra_pairs: Vec<PathBuf>,
    /// Instance projections, 2B×d NPY
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Instance positive set for the instance term, adjacency text
    #[arg(long, conflicts_with = "positions")]
    pub ins_pairs: Option<PathBuf>,
    /// Slice positions in [0, 1], B-element NPY; builds the instance positive set
    #[arg(long)]
    pub positions: Option<PathBuf>,
    /// Position threshold used with --positions
    #[arg(long, default_value_t = DEFAULT_PCL_THRESHOLD)]
    pub pcl_threshold: f64,
    /// Positive set for the inter-image term, adjacency text
    #[arg(long, conflicts_with = "weak")]
    pub inter_pairs: Option<PathBuf>,
    /// B×B weak label NPY, lifted to both views for the inter-image term
    #[arg(long)]
    pub weak: Option<PathBuf>,
    /// Weights of the instance, intra-image and inter-image terms (reference default)
    #[arg(long, default_value = "1.0,1.0,0.5", value_parser = parse_weights)]
    pub weights: [f64; 3],
    /// Temperature (reference default)
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    /// Output JSON report; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_weights(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three comma-separated weights".to_string())
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Training configuration JSON; every field is optional
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus directory (PGM files plus positions.csv); synthetic corpus when omitted
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Output directory for config.json, loss_curve.csv and checkpoint/
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Print a progress line every this many steps (0 for silence)
    #[arg(long, default_value_t = 20)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub volumes: usize,
    #[arg(long, default_value_t = 8)]
    pub slices: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
}

/// Parse `args`, run the subcommand and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Superpixel(a) => cmd_superpixel(&a),
        Command::Ilcp(a) => cmd_ilcp(&a),
        Command::Igcp(a) => cmd_igcp(&a),
        Command::Loss(a) => cmd_loss(&a),
        Command::Pretrain(a) => cmd_pretrain(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_pairs(path: &Path) -> Result<PositiveSet> {
    PositiveSet::from_adjacency_text(&read_text(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn cmd_superpixel(a: &SuperpixelArgs) -> Result<()> {
    let img = load_pgm(&a.input)?.normalized();
    let cfg = SlicConfig {
        k_request: a.k,
        compactness: a.m,
        iterations: a.iters,
        seed: a.seed,
    };
    let map = slic_segment(&img, &cfg)?;
    npy::save(&a.out_labels, &map.to_tensor(), Precision::F8)?;
    write(&a.out_vis, write_ppm(&colorize_map(&map, a.seed)))?;
    eprintln!("{} superpixels", map.num_clusters());
    Ok(())
}

pub fn cmd_ilcp(a: &IlcpArgs) -> Result<()> {
    let map = SuperpixelMap::from_tensor(&npy::load(&a.labels)?)?;
    let small = downsample_map(&map, a.feat_h, a.feat_w)?;
    let labels = resample_pixels(small.labels(), a.feat_h, a.feat_w, a.stride)?;
    let omega = build_ilcp_positive_set(&labels, &labels, a.mode.into())?;
    write(&a.out, omega.to_adjacency_text())
}

/// Split a `B×H×W` tensor into per-sample label maps.
fn label_stack(t: &Tensor) -> Result<Vec<SuperpixelMap>> {
    let [b, h, w] = *t.shape() else {
        return Err(Error::Shape(format!("label maps must be B×H×W, got {:?}", t.shape())));
    };
    (0..b)
        .map(|i| {
            let slice = t.data()[i * h * w..(i + 1) * h * w].to_vec();
            SuperpixelMap::from_tensor(&Tensor::new(vec![h, w], slice)?)
        })
        .collect()
}

pub fn cmd_igcp(a: &IgcpArgs) -> Result<()> {
    let y = npy::load(&a.features)?;
    let [b, _, h, w] = *y.shape() else {
        return Err(Error::Shape(format!("features must be B×C×h×w, got {:?}", y.shape())));
    };
    let maps = label_stack(&npy::load(&a.labels)?)?;
    if maps.len() != b {
        return Err(Error::LengthMismatch {
            expected: b,
            actual: maps.len(),
        });
    }
    let maps = maps
        .iter()
        .map(|m| {
            if (m.height(), m.width()) == (h, w) {
                Ok(m.clone())
            } else {
                downsample_map(m, h, w)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let chain = weak_label_chain(&y, &maps, a.region_normalize)?;
    npy::save(&a.out_affinity, &chain.affinity.to_tensor(), Precision::F8)?;
    npy::save(&a.out_adj, &chain.adjacency.to_tensor(), Precision::F8)?;
    npy::save(&a.out_weak, &chain.weak.to_tensor(), Precision::F8)?;
    let listing: String = weak_label_components(&chain.weak)
        .iter()
        .map(|c| c.iter().map(usize::to_string).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    match &a.out_components {
        Some(path) => write(path, listing),
        None => {
            print!("{listing}");
            Ok(())
        }
    }
}

fn check_rows(z: &Tensor, omega: &PositiveSet) -> Result<()> {
    if z.shape().len() != 2 {
        return Err(Error::Shape(format!("projections must be 2-D, got {:?}", z.shape())));
    }
    if z.rows() != omega.n() {
        return Err(Error::LengthMismatch {
            expected: z.rows(),
            actual: omega.n(),
        });
    }
    Ok(())
}

pub fn cmd_loss(a: &LossArgs) -> Result<()> {
    let weights = LossWeights {
        lambda1: a.weights[0],
        lambda2: a.weights[1],
        lambda3: a.weights[2],
        tau: a.tau,
    };
    weights.validate()?;
    if a.pixel.len() != a.intra_pairs.len() {
        return Err(Error::Config(format!(
            "{} --pixel inputs but {} --intra-pairs files",
            a.pixel.len(),
            a.intra_pairs.len()
        )));
    }
    let intra = if a.pixel.is_empty() {
        None
    } else {
        let parts = a
            .pixel
            .iter()
            .zip(&a.intra_pairs)
            .map(|(zp, pairs)| {
                let z = npy::load(zp)?;
                let omega = read_pairs(pairs)?;
                check_rows(&z, &omega)?;
                supervised_infonce(&z, &omega, a.tau)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(Term::batch_mean(parts)?)
    };

    let zi = a.instance.as_deref().map(npy::load).transpose()?;
    let ins_set = match (&a.ins_pairs, &a.positions) {
        (Some(p), _) => Some(read_pairs(p)?),
        (None, Some(p)) => {
            let positions = npy::load(p)?
                .data()
                .iter()
                .map(|&v| SlicePosition::new(v))
                .collect::<Result<Vec<_>>>()?;
            Some(positive_set_pcl(&positions, a.pcl_threshold)?)
        }
        (None, None) => None,
    };
    let inter_set = match (&a.inter_pairs, &a.weak) {
        (Some(p), _) => Some(read_pairs(p)?),
        (None, Some(p)) => Some(extend_weak_label(&BinaryMatrix::from_tensor(&npy::load(p)?)?)),
        (None, None) => None,
    };
    let instance_term = |set: Option<PositiveSet>| -> Result<Option<Term>> {
        match (&zi, set) {
            (Some(z), Some(omega)) => {
                check_rows(z, &omega)?;
                Ok(Some(supervised_infonce(z, &omega, a.tau)?.into()))
            }
            _ => Ok(None),
        }
    };
    let ins = instance_term(ins_set)?;
    let inter = instance_term(inter_set)?;
    if ins.is_none() && intra.is_none() && inter.is_none() {
        return Err(Error::Config("no loss term has both projections and positives".into()));
    }
    let report = total_loss(ins, intra, inter, weights)?;
    let json = report.to_json();
    match &a.out {
        Some(path) => write(path, json + "\n"),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

pub fn cmd_pretrain(a: &PretrainArgs) -> Result<()> {
    let cfg: TrainConfig = match &a.config {
        Some(path) => serde_json::from_str(&read_text(path)?)?,
        None => TrainConfig::default(),
    };
    let corpus = match &a.data_dir {
        Some(dir) => load_corpus_dir(dir)?,
        None => cfg.synth_corpus(),
    };
    let every = a.log_every;
    let outcome = pretrain_run_with(&cfg, &corpus, |r| {
        if every > 0 && (r.step == 1 || r.step % every == 0) {
            eprintln!(
                "step {:>5}  lr {:.5}  total {:.4}  ins {:.4}  intra {:.4}  inter {:.4}",
                r.step, r.lr, r.total, r.ins, r.intra, r.inter
            );
        }
    })?;
    save_run(&a.out_dir, &cfg, &outcome)
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let report = gradcheck::run_all(a.seed)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "gradient check failed: max relative error {:.3e}",
            report.max_rel_error()
        )))
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let corpus = synth_dataset(a.seed, a.volumes, a.slices, a.height, a.width);
    write_corpus_dir(&corpus, &a.out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn weights_parse() {
        assert_eq!(parse_weights("1,2,0.5").unwrap(), [1.0, 2.0, 0.5]);
        assert!(parse_weights("1,2").is_err());
        assert!(parse_weights("a,b,c").is_err());
    }
}
