//! Threshold filtering and score-weighted averaging on hand-made candidates,
//! plus candidate expansion through a mixture of posteriors.

use tapsample::selector::{select_action, ScoredCandidates};
use tapsample::traj::{ActionChunk, SubstepAction};
use tapsample::vae::{mix_posterior, GaussianPosterior};

fn line(x: f64, y: f64) -> ActionChunk {
    ActionChunk::new((1..=4).map(|i| SubstepAction::new(x * i as f64 / 4.0, y, 0.0)).collect())
}

fn main() -> tapsample::Result<()> {
    let candidates = vec![line(0.2, 0.5), line(0.4, 0.5), line(0.8, 0.5), line(0.6, 0.1)];
    for (scores, threshold) in [
        (vec![0.30, 0.10, -0.20, 0.02], 0.02),
        (vec![-0.30, -0.10, -0.20, -0.05], 0.02),
        (vec![-0.30, -0.10, -0.20, -0.05], f64::NEG_INFINITY),
    ] {
        let (chosen, report) = select_action(&ScoredCandidates {
            candidates: candidates.clone(),
            scores: scores.clone(),
            threshold,
        })?;
        let last = chosen.substeps().last().unwrap();
        println!(
            "scores {scores:?} threshold {threshold}: retained {} fallback {} -> final target ({:.3}, {:.3})",
            report.retained_count, report.used_fallback, last.target_x, last.target_y
        );
    }

    let mix = mix_posterior(vec![
        GaussianPosterior { mean: vec![-1.0, 0.0], log_variance: vec![-2.0, -2.0] },
        GaussianPosterior { mean: vec![1.5, 0.5], log_variance: vec![-1.0, -3.0] },
    ])?;
    println!("mixture mean {:?} second moment {:?}", mix.mean(), mix.second_moment());
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
    for _ in 0..4 {
        println!("  latent {:?}", mix.sample(&mut rng));
    }
    Ok(())
}
