mod common;

use supercl::image::Image;
use supercl::superpixel::{grid_step, initial_centers, slic_raw, slic_segment, SlicConfig};
use supercl::SuperpixelMap;

use common::*;

/// Deterministic texture: two crossed sinusoids plus a diagonal ramp.
fn texture(h: usize, w: usize) -> Image {
    let data = (0..h * w)
        .map(|p| {
            let (y, x) = ((p / w) as f64, (p % w) as f64);
            let v = 0.5 + 0.25 * (0.45 * x).sin() * (0.3 * y).cos() + 0.2 * ((x + y) / (h + w) as f64 - 0.5);
            v.clamp(0.0, 1.0)
        })
        .collect();
    Image::gray(h, w, data).unwrap()
}

/// Mean over clusters of perimeter² / area, counting image borders.
fn isoperimetric(map: &SuperpixelMap) -> f64 {
    let (h, w, k) = (map.height(), map.width(), map.num_clusters());
    let mut area = vec![0.0; k];
    let mut perimeter = vec![0.0; k];
    for y in 0..h {
        for x in 0..w {
            let l = map.at(y, x);
            area[l] += 1.0;
            let differs = |yy: isize, xx: isize| {
                yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize || map.at(yy as usize, xx as usize) != l
            };
            let (yi, xi) = (y as isize, x as isize);
            perimeter[l] += [(yi - 1, xi), (yi + 1, xi), (yi, xi - 1), (yi, xi + 1)]
                .iter()
                .filter(|&&(a, b)| differs(a, b))
                .count() as f64;
        }
    }
    (0..k).map(|c| perimeter[c] * perimeter[c] / area[c]).sum::<f64>() / k as f64
}

#[test]
fn two_tone_matches_lloyd_and_splits_on_the_boundary() {
    let img = two_tone(16, 16);
    let cfg = SlicConfig {
        k_request: 2,
        compactness: 1.0,
        ..SlicConfig::default()
    };
    let (raw, _) = slic_raw(&img, &cfg).unwrap();
    let init = initial_centers(&img, &cfg).unwrap();
    let oracle = lloyd_oracle(&img, &init, cfg.compactness, grid_step(16, 16, 2), cfg.iterations);
    assert_eq!(raw, oracle);
    let map = slic_segment(&img, &cfg).unwrap();
    assert_eq!(map.num_clusters(), 2);
    for y in 0..16 {
        for x in 0..16 {
            assert_eq!(map.at(y, x) == map.at(0, 0), x < 8, "({y}, {x})");
        }
    }
}

#[test]
fn higher_compactness_gives_rounder_clusters() {
    let img = texture(96, 96);
    let ratios: Vec<f64> = [1.0, 5.0, 10.0, 20.0, 40.0]
        .iter()
        .map(|&m| {
            let cfg = SlicConfig {
                k_request: 100,
                compactness: m,
                ..SlicConfig::default()
            };
            isoperimetric(&slic_segment(&img, &cfg).unwrap())
        })
        .collect();
    for pair in ratios.windows(2) {
        assert!(pair[1] <= pair[0] * 1.05, "{ratios:?}");
    }
    // recorded from the reference run of this fixture
    assert!((ratios[0] - 47.44413709004016).abs() < 1e-9, "{ratios:?}");
    assert!((ratios[4] - 18.85730303484425).abs() < 1e-9, "{ratios:?}");
}

#[test]
fn same_input_same_labels() {
    let img = texture(32, 32);
    let cfg = SlicConfig {
        k_request: 9,
        ..SlicConfig::default()
    };
    assert_eq!(slic_segment(&img, &cfg).unwrap(), slic_segment(&img, &cfg).unwrap());
}
