//! Pixel-level positives from a superpixel map: both modes, and how the
//! stride shrinks the anchor set.

use supercl::ilcp::{build_ilcp_positive_set, resample_pixels, PairMode};
use supercl::SuperpixelMap;

fn main() -> supercl::Result<()> {
    #[rustfmt::skip]
    let map = SuperpixelMap::from_labels(4, 4, vec![
        0, 0, 1, 1,
        0, 0, 1, 1,
        2, 2, 2, 1,
        2, 2, 2, 1,
    ])?;

    for mode in [PairMode::Joint, PairMode::CrossView] {
        let omega = build_ilcp_positive_set(map.labels(), map.labels(), mode)?;
        println!("{mode:?}: {} anchors, anchor 0 -> {:?}", omega.n(), omega.positives(0));
    }

    let kept = resample_pixels(map.labels(), 4, 4, 2)?;
    let omega = build_ilcp_positive_set(&kept, &kept, PairMode::Joint)?;
    println!("stride 2 keeps labels {kept:?}");
    print!("{}", omega.to_adjacency_text());
    Ok(())
}
