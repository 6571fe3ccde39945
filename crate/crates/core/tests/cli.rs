use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use supercl::npy::{self, Precision};
use supercl::Tensor;

fn supercl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_supercl")).args(args).output().unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn synth_slice(dir: &Path) -> String {
    let out = supercl(&["synth", "--out-dir", &path(dir, "corpus"), "--volumes", "1", "--slices", "2", "--height", "32", "--width", "32"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path(dir, "corpus/v000_s000.pgm")
}

#[test]
fn superpixel_is_deterministic_and_defaults_to_100() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let img = synth_slice(d);
    for run in ["a", "b"] {
        let out = supercl(&["superpixel", "--in", &img, "--out-labels", &path(d, &format!("{run}.npy")), "--out-vis", &path(d, &format!("{run}.ppm"))]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(d.join("a.npy")).unwrap(), fs::read(d.join("b.npy")).unwrap());
    assert_eq!(fs::read(d.join("a.ppm")).unwrap(), fs::read(d.join("b.ppm")).unwrap());
    let help = String::from_utf8(supercl(&["superpixel", "--help"]).stdout).unwrap();
    assert!(help.contains("[default: 100]"), "{help}");
}

#[test]
fn missing_input_exits_2_naming_the_path() {
    let out = supercl(&["superpixel", "--in", "/no/such/file.pgm", "--out-labels", "x.npy", "--out-vis", "x.ppm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.pgm"));
}

#[test]
fn unknown_flag_exits_1() {
    assert_eq!(supercl(&["ilcp", "--bogus"]).status.code(), Some(1));
    assert_eq!(supercl(&[]).status.code(), Some(1));
}

#[test]
fn ilcp_stride_lines_and_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let labels = Tensor::new(vec![32, 32], (0..1024).map(|p| ((p / 32) / 8 * 4 + (p % 32) / 8) as f64).collect()).unwrap();
    npy::save(d.join("l.npy"), &labels, Precision::F8).unwrap();
    let out = supercl(&["ilcp", "--labels", &path(d, "l.npy"), "--out", &path(d, "p.txt")]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(d.join("p.txt")).unwrap().lines().count(), 2048);

    let out = supercl(&["ilcp", "--labels", &path(d, "l.npy"), "--stride", "64", "--out", &path(d, "q.txt")]);
    assert_eq!(out.status.code(), Some(1));

    npy::save(d.join("one.npy"), &Tensor::zeros(vec![4, 4]), Precision::F8).unwrap();
    let out = supercl(&["ilcp", "--labels", &path(d, "one.npy"), "--feat-h", "4", "--feat-w", "4", "--out", &path(d, "o.txt")]);
    assert!(out.status.success());
    for line in fs::read_to_string(d.join("o.txt")).unwrap().lines() {
        let (anchor, rest) = line.split_once(':').unwrap();
        let anchor: usize = anchor.parse().unwrap();
        let listed: Vec<usize> = rest.split_whitespace().map(|t| t.parse().unwrap()).collect();
        assert_eq!(listed, (0..32).filter(|&j| j != anchor).collect::<Vec<_>>());
    }
}

#[test]
fn igcp_pair_and_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let maps = Tensor::zeros(vec![2, 4, 4]);
    npy::save(d.join("m.npy"), &maps, Precision::F8).unwrap();
    let y = Tensor::new(vec![2, 1, 4, 4], (0..32).map(|i| 1.0 + i as f64).collect()).unwrap();
    npy::save(d.join("y.npy"), &y, Precision::F8).unwrap();
    let args = |tag: &str| {
        vec![
            "igcp".to_string(), "--features".into(), path(d, &format!("{tag}.npy")), "--labels".into(), path(d, "m.npy"),
            "--out-affinity".into(), path(d, "c.npy"), "--out-adj".into(), path(d, "a.npy"), "--out-weak".into(), path(d, "w.npy"),
            "--out-components".into(), path(d, "w.txt"),
        ]
    };
    let run = |tag: &str| {
        let a = args(tag);
        supercl(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    assert!(run("y").status.success());
    assert_eq!(npy::load(d.join("a.npy")).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);

    let same = Tensor::filled(vec![4, 2, 4, 4], 0.5);
    npy::save(d.join("s.npy"), &same, Precision::F8).unwrap();
    npy::save(d.join("m.npy"), &Tensor::zeros(vec![4, 4, 4]), Precision::F8).unwrap();
    assert!(run("s").status.success());
    let w = npy::load(d.join("w.npy")).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(w.data()[i * 4 + j], if i == j { 0.0 } else { 1.0 });
        }
    }
    assert_eq!(fs::read_to_string(d.join("w.txt")).unwrap(), "0 1 2 3\n");

    npy::save(d.join("m.npy"), &Tensor::zeros(vec![3, 4, 4]), Precision::F8).unwrap();
    assert_eq!(run("s").status.code(), Some(1));
}

#[test]
fn loss_report_fields() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    npy::save(d.join("zi.npy"), &Tensor::new(vec![2, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap(), Precision::F8).unwrap();
    fs::write(d.join("pairs.txt"), "0: 1\n1: 0\n").unwrap();
    let out = supercl(&["loss", "--instance", &path(d, "zi.npy"), "--inter-pairs", &path(d, "pairs.txt"), "--out", &path(d, "r.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(r["terms"]["inter"], 0.0);
    assert_eq!(r["available"]["ins"], false);
    assert_eq!(r["weights"]["lambda1"], 0.0);
    assert_eq!(r["weights"]["lambda3"], 0.5);
    assert_eq!(r["weights"]["tau"], 0.1);

    // all three terms with the default weights
    let zp = Tensor::new(vec![4, 2], vec![1.0, 0.2, 0.3, 1.0, 0.9, 0.1, 0.2, 1.1]).unwrap();
    npy::save(d.join("zp.npy"), &zp, Precision::F8).unwrap();
    fs::write(d.join("intra.txt"), "0: 2\n1: 3\n2: 0\n3: 1\n").unwrap();
    let zi = Tensor::new(vec![4, 3], vec![1.0, 0.1, 0.0, 0.0, 1.0, 0.3, 0.9, 0.2, 0.1, 0.1, 0.8, 0.2]).unwrap();
    npy::save(d.join("zi4.npy"), &zi, Precision::F8).unwrap();
    npy::save(d.join("pos.npy"), &Tensor::new(vec![2], vec![0.0, 0.5]).unwrap(), Precision::F8).unwrap();
    npy::save(d.join("weak.npy"), &Tensor::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap(), Precision::F8).unwrap();
    let out = supercl(&[
        "loss", "--pixel", &path(d, "zp.npy"), "--intra-pairs", &path(d, "intra.txt"), "--instance", &path(d, "zi4.npy"),
        "--positions", &path(d, "pos.npy"), "--weak", &path(d, "weak.npy"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let (w, t) = (&r["weights"], &r["terms"]);
    assert_eq!((w["lambda1"].as_f64(), w["lambda2"].as_f64(), w["lambda3"].as_f64()), (Some(1.0), Some(1.0), Some(0.5)));
    let recomputed = t["ins"].as_f64().unwrap() + t["intra"].as_f64().unwrap() + 0.5 * t["inter"].as_f64().unwrap();
    assert!((r["total"].as_f64().unwrap() - recomputed).abs() < 1e-12);

    fs::write(d.join("short.txt"), "0: 1\n1: 0\n").unwrap();
    let out = supercl(&["loss", "--pixel", &path(d, "zp.npy"), "--intra-pairs", &path(d, "short.txt")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pretrain_zero_steps_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{"epochs": 1, "steps_per_epoch": 2, "batch": 2, "k_superpixels": 4,
        "synth": {"n_volumes": 2, "slices_per_volume": 2, "height": 16, "width": 16}}"#;
    fs::write(d.join("cfg.json"), cfg).unwrap();
    for run in ["r1", "r2"] {
        let out = supercl(&["pretrain", "--config", &path(d, "cfg.json"), "--out-dir", &path(d, run), "--log-every", "0"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = fs::read_to_string(d.join("r1/loss_curve.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(d.join("r2/loss_curve.csv")).unwrap());
    assert_eq!(csv.lines().count(), 3);

    let zero = cfg.replace("\"epochs\": 1", "\"epochs\": 0");
    fs::write(d.join("zero.json"), zero).unwrap();
    let out = supercl(&["pretrain", "--config", &path(d, "zero.json"), "--out-dir", &path(d, "z"), "--log-every", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let saved = supercl::checkpoint::load_checkpoint(d.join("z/checkpoint")).unwrap();
    let parsed: supercl::pretrain::TrainConfig = serde_json::from_str(&fs::read_to_string(d.join("zero.json")).unwrap()).unwrap();
    let corpus = parsed.synth_corpus();
    let init = supercl::pretrain::pretrain_run(&parsed, &corpus).unwrap().initial;
    assert_eq!(saved.tensors(), init.tensors());

    fs::write(d.join("bad.json"), "{\"epochz\": 1}").unwrap();
    let out = supercl(&["pretrain", "--config", &path(d, "bad.json"), "--out-dir", &path(d, "b")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_directory_feeds_pretrain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_slice(d);
    let cfg = r#"{"epochs": 1, "steps_per_epoch": 1, "batch": 2, "k_superpixels": 4}"#;
    fs::write(d.join("cfg.json"), cfg).unwrap();
    let out = supercl(&["pretrain", "--config", &path(d, "cfg.json"), "--data-dir", &path(d, "corpus"), "--out-dir", &path(d, "run"), "--log-every", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn gradcheck_passes_on_default_seed() {
    let out = supercl(&["gradcheck"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
