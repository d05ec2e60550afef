//! How close posterior-mixture samples and a fitted Gaussian come to the
//! base policy's own action distribution, by kernel MMD.
//!
//! cargo run --release --example mmd_fidelity -- [model dir]

use tapsample::checkpoint::Checkpoint;
use tapsample::eval::{mmd_protocol, MmdConfig};
use tapsample::sim::EpisodeConfig;
use tapsample::vae::ActionVae;

fn main() -> tapsample::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "target/tapsample-models".into());
    let Ok(c) = Checkpoint::load(format!("{dir}/vae.ckpt")) else {
        eprintln!("no vae.ckpt in {dir}; run `cargo run --release --example train_models` first");
        std::process::exit(1);
    };
    let vae = ActionVae::from_checkpoint(&c).expect("vae checkpoint");
    let report = mmd_protocol(&vae, &EpisodeConfig::default(), &MmdConfig { states: 40, ..MmdConfig::default() })?;
    println!("median MMD over {} states", report.rows.len());
    println!("gamma  gaussian  posterior");
    for (i, g) in report.gammas.iter().enumerate() {
        println!("{g:>5}  {:>8.4}  {:>9.4}", report.median_gaussian[i], report.median_posterior[i]);
    }
    Ok(())
}
