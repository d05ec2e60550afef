//! Records expert demonstrations, writes them as a dataset file and shows the
//! progress labels a verifier is trained on.
//!
//! cargo run --release --example demonstrations -- [out.txt]

use tapsample::rollout::expert_trajectories;
use tapsample::sim::EpisodeConfig;
use tapsample::traj::{build_training_pairs, read_dataset, write_dataset, Task};

fn main() -> tapsample::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/demonstrations.txt".into());
    let cfg = EpisodeConfig::default();
    let data = expert_trajectories(&cfg, 200, 7)?;
    write_dataset(&out, &data)?;
    assert_eq!(read_dataset(&out, cfg.chunk_horizon)?, data);
    println!("wrote {} trajectories to {out}", data.len());

    for task in [Task::Reach, Task::PickPlace, Task::Knock] {
        let lens: Vec<usize> = data.iter().filter(|t| t.task == task).map(|t| t.len()).collect();
        let mean = lens.iter().sum::<usize>() as f64 / lens.len().max(1) as f64;
        println!("{:<10} {:>4} demos, mean length {mean:.1} substeps", task.name(), lens.len());
    }

    let pairs = build_training_pairs(&data[..1], cfg.chunk_horizon, 0, None)?;
    println!("progress samples from trajectory 0 ({} steps):", data[0].len());
    for s in &pairs {
        println!("  label {:+.3}", s.label);
    }
    Ok(())
}
