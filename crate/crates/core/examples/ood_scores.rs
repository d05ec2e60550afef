//! Verifier scores on forward, half-speed, random, corrupted and reversed
//! chunks from held-out demonstrations.
//!
//! cargo run --release --example ood_scores -- [model dir]

use tapsample::checkpoint::Checkpoint;
use tapsample::eval::{ood_eval, OOD_RANGE};
use tapsample::rollout::expert_trajectories;
use tapsample::sim::EpisodeConfig;
use tapsample::verifier::Verifier;

fn main() -> tapsample::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "target/tapsample-models".into());
    let Ok(c) = Checkpoint::load(format!("{dir}/verifier.ckpt")) else {
        eprintln!("no verifier.ckpt in {dir}; run `cargo run --release --example train_models` first");
        std::process::exit(1);
    };
    let verifier = Verifier::from_checkpoint(&c).expect("verifier checkpoint");
    let held = expert_trajectories(&EpisodeConfig::default(), 600, 1)?.split_off(500);
    let report = ood_eval(&verifier, &held, 0.02, 4)?;
    let bins = report.families[0].histogram.len();
    let width = (OOD_RANGE.1 - OOD_RANGE.0) / bins as f64;
    for f in &report.families {
        println!("{:<10} mean {:+.3}  filtered {:.2}", f.family.name(), f.mean, f.filtered);
        let peak = f.histogram.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        for (b, &n) in f.histogram.iter().enumerate() {
            if n > 0.0 {
                let lo = OOD_RANGE.0 + b as f64 * width;
                println!("  {lo:+.1} {}", "#".repeat((40.0 * n / peak).ceil() as usize));
            }
        }
    }
    println!("filter rate at threshold {}: {:.3}", report.threshold, report.filter_rate);
    Ok(())
}
