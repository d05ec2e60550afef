//! Wall-clock cost of policy sampling, posterior expansion and batched
//! verification at one decision.
//!
//! cargo run --release --example latency -- [model dir]

use tapsample::checkpoint::Checkpoint;
use tapsample::eval::latency_bench;
use tapsample::sim::EpisodeConfig;
use tapsample::vae::ActionVae;
use tapsample::verifier::Verifier;

fn main() -> tapsample::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "target/tapsample-models".into());
    let (Ok(v), Ok(q)) = (Checkpoint::load(format!("{dir}/vae.ckpt")), Checkpoint::load(format!("{dir}/verifier.ckpt")))
    else {
        eprintln!("no checkpoints in {dir}; run `cargo run --release --example train_models` first");
        std::process::exit(1);
    };
    let vae = ActionVae::from_checkpoint(&v).expect("vae checkpoint");
    let verifier = Verifier::from_checkpoint(&q).expect("verifier checkpoint");
    let r = latency_bench(&vae, &verifier, &EpisodeConfig::default(), 200, 1)?;
    let us = |s: f64| s * 1e6;
    println!("4 policy samples        {:>8.1} us", us(r.policy_4));
    println!("16 policy samples       {:>8.1} us", us(r.policy_16));
    println!("12 posterior samples    {:>8.1} us", us(r.posterior_12));
    println!("12 gaussian samples     {:>8.1} us", us(r.gaussian_12));
    println!("verify 1                {:>8.1} us", us(r.verify_1));
    println!("verify 16 batched       {:>8.1} us", us(r.verify_16_batched));
    println!("verify 16 one by one    {:>8.1} us", us(r.verify_16_sequential));
    Ok(())
}
