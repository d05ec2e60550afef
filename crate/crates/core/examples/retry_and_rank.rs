//! Upper bound from repeated attempts, and what the verifier's ranking alone
//! does to execution length.
//!
//! cargo run --release --example retry_and_rank -- [model dir]

use tapsample::checkpoint::Checkpoint;
use tapsample::eval::{evaluate_policy, rank_order_eval, retry_eval};
use tapsample::rollout::{Models, PolicySpec, RankMode};
use tapsample::sim::EpisodeConfig;
use tapsample::verifier::Verifier;

fn main() -> tapsample::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "target/tapsample-models".into());
    let Ok(c) = Checkpoint::load(format!("{dir}/verifier.ckpt")) else {
        eprintln!("no verifier.ckpt in {dir}; run `cargo run --release --example train_models` first");
        std::process::exit(1);
    };
    let verifier = Verifier::from_checkpoint(&c).expect("verifier checkpoint");
    let cfg = EpisodeConfig::default();

    let retry = retry_eval(&cfg, &PolicySpec::Base, &Models::default(), 3, 300, 11)?;
    for (i, p) in retry.pass_at.iter().enumerate() {
        println!("base pass@{} {p:.3}", i + 1);
    }

    let base = evaluate_policy(&cfg, &PolicySpec::Base, &Models::default(), 200, 13)?;
    println!("\nbase   success {:.3}  mean substeps {:.1}", base.success_rate, base.mean_substeps_all);
    for mode in [RankMode::Best, RankMode::Worst] {
        let r = rank_order_eval(&cfg, &verifier, 8, mode, 200, 13)?;
        println!("{:<6} success {:.3}  mean substeps {:.1}", format!("{mode:?}").to_lowercase(), r.success_rate, r.mean_substeps_all);
    }
    Ok(())
}
