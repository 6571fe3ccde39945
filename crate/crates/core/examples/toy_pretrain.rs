//! Pre-train the small encoder on the synthetic slice corpus and report how
//! far the objective fell.
//!
//! `cargo run --example toy_pretrain -- [config.json]`

use std::time::Instant;

use supercl::pretrain::{mean_total, pretrain_run_with, TrainConfig};

fn main() -> supercl::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| supercl::Error::Format(format!("{path}: {e}")))?;
            serde_json::from_str(&text)?
        }
        None => TrainConfig::default(),
    };
    let corpus = cfg.synth_corpus();
    let start = Instant::now();
    let out = pretrain_run_with(&cfg, &corpus, |r| {
        if r.step == 1 || r.step % 20 == 0 {
            println!(
                "step {:>4}  lr {:.4}  total {:.4}  ins {:.4}  intra {:.4}  inter {:.4}",
                r.step, r.lr, r.total, r.ins, r.intra, r.inter
            );
        }
    })?;
    let n = out.curve.len();
    if n >= 20 {
        let head = mean_total(&out.curve, 1, 10);
        let tail = mean_total(&out.curve, n - 9, n);
        println!("first-10 mean {head:.4}, last-10 mean {tail:.4}, drop {:.1}%", 100.0 * (1.0 - tail / head));
    }
    println!("{n} steps in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
