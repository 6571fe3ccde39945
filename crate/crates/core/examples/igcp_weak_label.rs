//! The weak-label chain on a small batch: averaged-superpixel features,
//! cosine affinities, the top-1 graph and its components.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supercl::igcp::{weak_label_chain, weak_label_components};
use supercl::{SuperpixelMap, Tensor};

fn main() -> supercl::Result<()> {
    let (b, c, h, w) = (6, 4, 4, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // samples 0-2 and 3-5 share a base pattern plus noise
    let bases: Vec<Vec<f64>> = (0..2).map(|_| (0..c * h * w).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let data: Vec<f64> = (0..b)
        .flat_map(|i| bases[i / 3].iter().map(|v| v + 0.05 * rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
        .collect();
    let y = Tensor::new(vec![b, c, h, w], data)?;

    let quadrants: Vec<usize> = (0..h * w).map(|p| 2 * (p / w / 2) + (p % w) / 2).collect();
    let maps = vec![SuperpixelMap::from_labels(h, w, quadrants)?; b];

    let chain = weak_label_chain(&y, &maps, false)?;
    for i in 0..b {
        let row: Vec<String> = (0..b).map(|j| format!("{:>6.3}", chain.affinity.get(i, j))).collect();
        println!("{}", row.join(" "));
    }
    println!("components: {:?}", weak_label_components(&chain.weak));
    Ok(())
}
