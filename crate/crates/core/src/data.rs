//! Synthetic stand-in for unlabeled scan volumes: smooth bright and dark
//! blob fields whose geometry drifts with slice depth.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{load_pgm, write_pgm, Image};
use crate::loss::SlicePosition;

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub images: Vec<Image>,
    pub positions: Vec<SlicePosition>,
    /// Source volume of every slice.
    pub volumes: Vec<usize>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

struct Blob {
    center: (f64, f64),
    velocity: (f64, f64),
    radius: f64,
    amplitude: f64,
    /// Depth at which the blob is strongest and the half-width of its
    /// presence along the volume axis.
    peak: f64,
    extent: f64,
}

impl Blob {
    fn sample(rng: &mut ChaCha8Rng, hf: f64, wf: f64, side: f64) -> Self {
        Blob {
            center: (rng.random_range(0.1..0.9) * hf, rng.random_range(0.1..0.9) * wf),
            velocity: (rng.random_range(-0.2..0.2) * hf, rng.random_range(-0.2..0.2) * wf),
            radius: rng.random_range(0.05..0.14) * side,
            amplitude: rng.random_range(0.2..0.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            peak: rng.random_range(-0.2..1.2),
            extent: rng.random_range(0.2..0.6),
        }
    }

    fn value(&self, y: f64, x: f64, t: f64) -> f64 {
        let cy = self.center.0 + self.velocity.0 * (t - 0.5);
        let cx = self.center.1 + self.velocity.1 * (t - 0.5);
        let d2 = (y - cy).powi(2) + (x - cx).powi(2);
        let presence = (-((t - self.peak) / self.extent).powi(2)).exp();
        self.amplitude * presence * (-d2 / (2.0 * self.radius * self.radius)).exp()
    }
}

/// `n_volumes` volumes of `slices_per_volume` slices each.
///
/// All volumes share one anatomy: a set of blobs that drift across the
/// slice axis and fade in and out at their own depths. Each volume jitters
/// that anatomy and adds a few blobs of its own, so slices at the same
/// relative depth look alike across volumes and neighbouring slices of one
/// volume look alike.
pub fn synth_dataset(
    seed: u64,
    n_volumes: usize,
    slices_per_volume: usize,
    height: usize,
    width: usize,
) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus {
        images: Vec::new(),
        positions: Vec::new(),
        volumes: Vec::new(),
    };
    let (hf, wf) = (height as f64, width as f64);
    let side = hf.min(wf);
    let anatomy: Vec<Blob> = (0..14).map(|_| Blob::sample(&mut rng, hf, wf, side)).collect();
    for v in 0..n_volumes {
        let background = rng.random_range(0.3..0.45);
        let tilt = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let mut blobs: Vec<Blob> = anatomy
            .iter()
            .map(|b| Blob {
                center: (
                    b.center.0 + rng.random_range(-0.04..0.04) * hf,
                    b.center.1 + rng.random_range(-0.04..0.04) * wf,
                ),
                radius: b.radius * rng.random_range(0.85..1.15),
                amplitude: b.amplitude * rng.random_range(0.8..1.2),
                peak: b.peak + rng.random_range(-0.05..0.05),
                ..*b
            })
            .collect();
        let own = rng.random_range(2..=4);
        blobs.extend((0..own).map(|_| {
            let mut b = Blob::sample(&mut rng, hf, wf, side);
            b.amplitude *= 0.5;
            b
        }));
        for s in 0..slices_per_volume {
            let t = if slices_per_volume > 1 {
                s as f64 / (slices_per_volume - 1) as f64
            } else {
                0.0
            };
            let mut data = Vec::with_capacity(height * width);
            for y in 0..height {
                for x in 0..width {
                    let (yf, xf) = (y as f64, x as f64);
                    let mut value = background + tilt.0 * (yf / hf) + tilt.1 * (xf / wf);
                    value += blobs.iter().map(|b| b.value(yf, xf, t)).sum::<f64>();
                    data.push(value.clamp(0.0, 1.0));
                }
            }
            corpus.images.push(Image::gray(height, width, data).expect("sized"));
            corpus.positions.push(SlicePosition::new(t).expect("t in [0, 1]"));
            corpus.volumes.push(v);
        }
    }
    corpus
}

pub const POSITIONS_FILE: &str = "positions.csv";

/// Write every slice as `vVVV_sSSS.pgm` plus a `positions.csv` index.
pub fn write_corpus_dir(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = String::from("file,volume,position\n");
    let mut slice = 0;
    for (i, img) in corpus.images.iter().enumerate() {
        if i > 0 && corpus.volumes[i] != corpus.volumes[i - 1] {
            slice = 0;
        }
        let name = format!("v{:03}_s{:03}.pgm", corpus.volumes[i], slice);
        let path = dir.join(&name);
        fs::write(&path, write_pgm(&img.to_u8())?).map_err(|e| Error::io(&path, e))?;
        index.push_str(&format!("{name},{},{}\n", corpus.volumes[i], corpus.positions[i].value()));
        slice += 1;
    }
    let path = dir.join(POSITIONS_FILE);
    fs::write(&path, index).map_err(|e| Error::io(path, e))
}

/// Read a directory written by [`write_corpus_dir`]: images listed in
/// `positions.csv` (`file,volume,position`), in file order.
pub fn load_corpus_dir(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let path = dir.join(POSITIONS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |line: usize, what: &str| Error::Format(format!("{}:{line}: {what}", path.display()));
    let mut corpus = Corpus {
        images: Vec::new(),
        positions: Vec::new(),
        volumes: Vec::new(),
    };
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [file, volume, position] = fields[..] else {
            return Err(bad(n + 1, "expected file,volume,position"));
        };
        let volume = volume.parse().map_err(|_| bad(n + 1, "bad volume index"))?;
        let position: f64 = position.parse().map_err(|_| bad(n + 1, "bad position"))?;
        let position = SlicePosition::new(position).map_err(|_| bad(n + 1, "position outside [0, 1]"))?;
        let img = load_pgm(dir.join(file))?.normalized();
        if let Some(first) = corpus.images.first() {
            if (first.height, first.width) != (img.height, img.width) {
                return Err(bad(n + 1, "image size differs from the first image"));
            }
        }
        corpus.images.push(img);
        corpus.volumes.push(volume);
        corpus.positions.push(position);
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_empty() {
        assert_eq!(synth_dataset(4, 2, 3, 8, 8), synth_dataset(4, 2, 3, 8, 8));
        assert_ne!(synth_dataset(4, 2, 3, 8, 8), synth_dataset(5, 2, 3, 8, 8));
        assert!(synth_dataset(1, 0, 5, 8, 8).is_empty());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = synth_dataset(2, 2, 3, 8, 8);
        write_corpus_dir(&corpus, dir.path()).unwrap();
        let back = load_corpus_dir(dir.path()).unwrap();
        assert_eq!(back.volumes, corpus.volumes);
        assert_eq!(back.positions, corpus.positions);
        for (a, b) in back.images.iter().zip(&corpus.images) {
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-12));
        }
        assert!(load_corpus_dir(dir.path().join("missing")).unwrap_err().is_io());
    }

    #[test]
    fn positions_span_the_volume() {
        let c = synth_dataset(0, 1, 5, 8, 8);
        let pos: Vec<f64> = c.positions.iter().map(|p| p.value()).collect();
        assert_eq!(pos, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(c.images.iter().all(|i| i.data.iter().all(|v| (0.0..=1.0).contains(v))));
    }
}
