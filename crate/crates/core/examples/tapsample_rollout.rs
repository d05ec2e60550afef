//! One traced episode with posterior-expanded, verifier-filtered candidates,
//! then the success rate against the base policy.
//!
//! cargo run --release --example tapsample_rollout -- [model dir]

use tapsample::checkpoint::Checkpoint;
use tapsample::eval::evaluate_policy;
use tapsample::rollout::{rollout_episode, Models, PolicySpec};
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
    let models = Models::new(&vae, &verifier);
    let cfg = EpisodeConfig::default();
    let spec: PolicySpec = "tapsample:4,12,0.02".parse()?;

    let ep = rollout_episode(&cfg, &spec, &models, 5, 0, |state, d| {
        println!(
            "substep {:>3} gripper ({:.2}, {:.2}) {} candidates, {} kept{}",
            d.substep,
            state.gripper[0],
            state.gripper[1],
            d.candidates,
            d.retained,
            if d.used_fallback { ", fallback" } else { "" }
        );
    })?;
    println!("{} episode: success {} after {} substeps\n", ep.task.name(), ep.success, ep.substeps_used);

    for spec in [PolicySpec::Base, spec] {
        let r = evaluate_policy(&cfg, &spec, &models, 200, 11)?;
        println!("{:<22} success {:.3}  mean substeps {:.1}", spec.to_string(), r.success_rate, r.mean_substeps_success);
    }
    Ok(())
}
