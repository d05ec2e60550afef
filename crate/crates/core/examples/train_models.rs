//! Trains the action VAE and the progress verifier on fresh demonstrations
//! and writes both checkpoints. The other model examples load them.
//!
//! cargo run --release --example train_models -- [dir] [--quick]

use std::time::Instant;

use tapsample::rollout::expert_trajectories;
use tapsample::sim::EpisodeConfig;
use tapsample::traj::{aligned_chunks, build_training_pairs};
use tapsample::vae::{train_vae, VaeTrainConfig};
use tapsample::verifier::{train_verifier, VerifierTrainConfig};

fn main() -> tapsample::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let quick = args.iter().any(|a| a == "--quick");
    let dir = args.iter().find(|a| !a.starts_with("--")).cloned().unwrap_or_else(|| "target/tapsample-models".into());
    std::fs::create_dir_all(&dir).map_err(|e| tapsample::Error::Io { path: dir.clone().into(), source: e })?;

    let cfg = EpisodeConfig::default();
    let mut data = expert_trajectories(&cfg, 600, 1)?;
    let held = data.split_off(500);
    let h = cfg.chunk_horizon;

    let mut vcfg = VaeTrainConfig::default();
    let mut qcfg = VerifierTrainConfig::default();
    if quick {
        vcfg.steps = 3000;
        qcfg.steps = 3000;
    }

    let t = Instant::now();
    let (vae, log) = train_vae(&aligned_chunks(&data, h), &aligned_chunks(&held, h), &vcfg)?;
    println!(
        "vae: {} steps in {:.0}s, held-out rms {:.4}",
        vcfg.steps,
        t.elapsed().as_secs_f64(),
        log.heldout_rms.unwrap_or(f64::NAN)
    );
    vae.to_checkpoint().save(format!("{dir}/vae.ckpt"))?;

    let t = Instant::now();
    let pairs = build_training_pairs(&data, h, 2, None)?;
    let held_pairs = build_training_pairs(&held, h, 3, None)?;
    let (verifier, log) = train_verifier(&pairs, &held_pairs, h, &qcfg)?;
    println!(
        "verifier: {} pairs, {} steps in {:.0}s, held-out mae {:.4}",
        pairs.len(),
        qcfg.steps,
        t.elapsed().as_secs_f64(),
        log.heldout_mae.unwrap_or(f64::NAN)
    );
    verifier.to_checkpoint().save(format!("{dir}/verifier.ckpt"))?;
    println!("checkpoints in {dir}");
    Ok(())
}
