//! Segment one synthetic slice with SLIC and write the label map and a
//! colour rendering next to each other.
//!
//! `cargo run --example superpixels -- [out_dir]`

use std::path::PathBuf;

use supercl::data::synth_dataset;
use supercl::image::write_ppm;
use supercl::npy::{self, Precision};
use supercl::superpixel::{colorize_map, downsample_map, slic_segment, SlicConfig};

fn main() -> supercl::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "superpixels_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| supercl::Error::Format(format!("{}: {e}", out.display())))?;

    let corpus = synth_dataset(0, 1, 4, 64, 64);
    let img = &corpus.images[1];
    let cfg = SlicConfig {
        k_request: 25,
        ..SlicConfig::default()
    };
    let map = slic_segment(img, &cfg)?;
    println!("requested {} clusters, got {}", cfg.k_request, map.num_clusters());

    let small = downsample_map(&map, 16, 16)?;
    println!("on the 16x16 feature grid: {} clusters survive", small.num_clusters());

    npy::save(out.join("labels.npy"), &map.to_tensor(), Precision::F8)?;
    let ppm = write_ppm(&colorize_map(&map, 0));
    std::fs::write(out.join("labels.ppm"), ppm).map_err(|e| supercl::Error::Format(e.to_string()))?;
    println!("wrote {}/labels.npy and labels.ppm", out.display());
    Ok(())
}
