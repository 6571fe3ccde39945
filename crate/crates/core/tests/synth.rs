use supercl::data::synth_dataset;

fn mad(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[test]
fn adjacent_slices_are_closer_than_distant_ones() {
    let slices = 8;
    let corpus = synth_dataset(11, 20, slices, 32, 32);
    let (mut near, mut far) = (0.0, 0.0);
    for v in 0..20 {
        let img = |s: usize| &corpus.images[v * slices + s].data;
        near += (0..slices - 1).map(|s| mad(img(s), img(s + 1))).sum::<f64>() / (slices - 1) as f64;
        far += mad(img(0), img(slices - 1));
    }
    assert!(near < far, "adjacent {near:.4} vs distant {far:.4}");
    assert!(corpus.volumes.iter().enumerate().all(|(i, &v)| v == i / slices));
}
