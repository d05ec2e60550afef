//! Experiment protocols: sampling fidelity by MMD, closed-loop policy
//! evaluation, execution length under score ranking, verifier scores on
//! out-of-distribution chunk families, retry upper bounds and latency.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rollout::{rollout_episode, Episode, Models, PolicySpec, RankMode};
use crate::seed::derive_seed;
use crate::sim::{base_policy_sample, expert_chunk, reset, step_chunk, EnvState, EpisodeConfig};
use crate::traj::{reverse_chunk, ActionChunk, SubstepAction, Task, Trajectory};
use crate::vae::{mix_posterior, ActionVae, GaussianPosterior};
use crate::verifier::{encode_state, Verifier};

pub const MMD_GAMMAS: [f64; 5] = [2.0, 4.0, 6.0, 8.0, 10.0];

/// Square root of the biased squared-MMD estimate with kernel
/// `exp(-gamma * |x - y|^2)`, clipped at zero.
pub fn mmd(x: &[Vec<f64>], y: &[Vec<f64>], gamma: f64) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Rejected("MMD needs two non-empty sample sets".into()));
    }
    let dim = x[0].len();
    if x.iter().chain(y).any(|v| v.len() != dim) {
        return Err(Error::Rejected("MMD samples differ in dimension".into()));
    }
    let mean_kernel = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let mut s = 0.0;
        for u in a {
            for v in b {
                let d2: f64 = u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum();
                s += (-gamma * d2).exp();
            }
        }
        s / (a.len() * b.len()) as f64
    };
    let sq = mean_kernel(x, x) + mean_kernel(y, y) - 2.0 * mean_kernel(x, y);
    Ok(sq.max(0.0).sqrt())
}

/// Per-dimension maximum-likelihood Gaussian over `samples`.
pub fn fit_diagonal_gaussian(samples: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..first.len())
        .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n)
        .collect();
    let var = (0..first.len())
        .map(|j| samples.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / n)
        .collect();
    Ok((mean, var))
}

fn sample_gaussian(mean: &[f64], var: &[f64], count: usize, rng: &mut impl Rng) -> Vec<ActionChunk> {
    (0..count)
        .map(|_| {
            let flat: Vec<f64> = mean
                .iter()
                .zip(var)
                .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            ActionChunk::from_flat(&flat).expect("finite sample")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmdConfig {
    pub states: usize,
    pub samples_per_state: usize,
    pub fit_samples: usize,
    pub gammas: Vec<f64>,
    pub seed: u64,
}

impl Default for MmdConfig {
    fn default() -> Self {
        MmdConfig {
            states: 100,
            samples_per_state: 256,
            fit_samples: 4,
            gammas: MMD_GAMMAS.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmdStateRow {
    pub state_seed: u64,
    /// One value per gamma.
    pub gaussian: Vec<f64>,
    pub posterior: Vec<f64>,
    pub reference_self: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmdReport {
    pub gammas: Vec<f64>,
    pub rows: Vec<MmdStateRow>,
    pub median_gaussian: Vec<f64>,
    pub median_posterior: Vec<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Evaluation state `i`: a fresh reset advanced by `i % 3` expert chunks,
/// stopping early at success.
pub fn evaluation_state(cfg: &EpisodeConfig, seed: u64, i: u64) -> EnvState {
    let mut state = reset(cfg, derive_seed(seed, i));
    for _ in 0..i % 3 {
        let (next, done) = step_chunk(&state, &expert_chunk(&state, cfg), cfg).expect("expert chunk has horizon H");
        if done {
            break;
        }
        state = next;
    }
    state
}

/// Compares Gaussian-fit sampling and mixture-posterior sampling against the
/// base policy's own samples. Both strategies see only the first
/// `fit_samples` of the reference draws.
pub fn mmd_protocol(vae: &ActionVae, cfg: &EpisodeConfig, mcfg: &MmdConfig) -> Result<MmdReport> {
    if mcfg.fit_samples == 0 || mcfg.samples_per_state < mcfg.fit_samples {
        return Err(Error::Rejected("need 1 <= fit samples <= samples per state".into()));
    }
    let state_seed = derive_seed(mcfg.seed, 0);
    let rows = (0..mcfg.states as u64)
        .into_par_iter()
        .map(|i| -> Result<MmdStateRow> {
            let state = evaluation_state(cfg, state_seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(mcfg.seed, 1), i));
            let reference: Vec<ActionChunk> =
                (0..mcfg.samples_per_state).map(|_| base_policy_sample(&state, cfg, &mut rng)).collect();
            let fit = &reference[..mcfg.fit_samples];
            let fit_flat: Vec<Vec<f64>> = fit.iter().map(ActionChunk::flatten).collect();
            let (mean, var) = fit_diagonal_gaussian(&fit_flat)?;
            let gaussian = sample_gaussian(&mean, &var, mcfg.samples_per_state, &mut rng);
            let mix = mix_posterior(fit.iter().map(|c| vae.encode(c)).collect::<Result<Vec<GaussianPosterior>>>()?)?;
            let posterior = vae.sample_candidates(&mix, mcfg.samples_per_state, &mut rng);

            let flat = |v: &[ActionChunk]| v.iter().map(ActionChunk::flatten).collect::<Vec<_>>();
            let (r, g, p) = (flat(&reference), flat(&gaussian), flat(&posterior));
            let mut row = MmdStateRow {
                state_seed: i,
                gaussian: vec![],
                posterior: vec![],
                reference_self: vec![],
            };
            for &gamma in &mcfg.gammas {
                row.gaussian.push(mmd(&g, &r, gamma)?);
                row.posterior.push(mmd(&p, &r, gamma)?);
                row.reference_self.push(mmd(&r, &r, gamma)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let column = |f: fn(&MmdStateRow) -> &Vec<f64>, j: usize| median(&rows.iter().map(|r| f(r)[j]).collect::<Vec<_>>());
    let median_gaussian = (0..mcfg.gammas.len()).map(|j| column(|r| &r.gaussian, j)).collect();
    let median_posterior = (0..mcfg.gammas.len()).map(|j| column(|r| &r.posterior, j)).collect();
    Ok(MmdReport {
        gammas: mcfg.gammas.clone(),
        rows,
        median_gaussian,
        median_posterior,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskBreakdown {
    pub episodes: usize,
    pub successes: usize,
    pub mean_substeps_success: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReport {
    pub spec: PolicySpec,
    pub episodes: Vec<Episode>,
    pub success_rate: f64,
    pub mean_substeps_success: f64,
    /// Failures count at the full horizon.
    pub mean_substeps_all: f64,
    pub per_task: [TaskBreakdown; 3],
    pub mean_retained: f64,
    pub fallback_rate: f64,
}

/// Seed of evaluation episode `e`.
pub fn episode_seed(seed: u64, e: u64) -> u64 {
    derive_seed(seed, e)
}

fn run_episodes(
    cfg: &EpisodeConfig,
    spec: &PolicySpec,
    models: &Models<'_>,
    episodes: usize,
    seed: u64,
    attempt: u64,
) -> Result<Vec<Episode>> {
    cfg.validate()?;
    spec.validate()?;
    models.check(spec)?;
    (0..episodes as u64)
        .into_par_iter()
        .map(|e| rollout_episode(cfg, spec, models, episode_seed(seed, e), attempt, |_, _| {}))
        .collect()
}

fn mean_or_nan(sum: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn summarize(spec: PolicySpec, episodes: Vec<Episode>) -> PolicyReport {
    let mut per_task = [TaskBreakdown {
        episodes: 0,
        successes: 0,
        mean_substeps_success: 0.0,
    }; 3];
    let mut sums = [0.0; 3];
    let (mut retained, mut fallbacks, mut decisions) = (0usize, 0usize, 0usize);
    for ep in &episodes {
        let t = &mut per_task[ep.task.code()];
        t.episodes += 1;
        if ep.success {
            t.successes += 1;
            sums[ep.task.code()] += ep.substeps_used as f64;
        }
        for d in &ep.decisions {
            retained += d.retained;
            fallbacks += usize::from(d.used_fallback);
            decisions += 1;
        }
    }
    for (t, s) in per_task.iter_mut().zip(sums) {
        t.mean_substeps_success = mean_or_nan(s, t.successes);
    }
    let successes: usize = per_task.iter().map(|t| t.successes).sum();
    PolicyReport {
        spec,
        success_rate: mean_or_nan(successes as f64, episodes.len()),
        mean_substeps_success: mean_or_nan(sums.iter().sum(), successes),
        mean_substeps_all: mean_or_nan(episodes.iter().map(|e| e.substeps_used as f64).sum(), episodes.len()),
        per_task,
        mean_retained: mean_or_nan(retained as f64, decisions),
        fallback_rate: mean_or_nan(fallbacks as f64, decisions),
        episodes,
    }
}

pub fn evaluate_policy(
    cfg: &EpisodeConfig,
    spec: &PolicySpec,
    models: &Models<'_>,
    episodes: usize,
    seed: u64,
) -> Result<PolicyReport> {
    Ok(summarize(*spec, run_episodes(cfg, spec, models, episodes, seed, 0)?))
}

/// Executes the best- or worst-scoring of `k` policy candidates at every decision.
pub fn rank_order_eval(
    cfg: &EpisodeConfig,
    verifier: &Verifier,
    k: usize,
    mode: RankMode,
    episodes: usize,
    seed: u64,
) -> Result<PolicyReport> {
    let models = Models {
        vae: None,
        verifier: Some(verifier),
    };
    evaluate_policy(cfg, &PolicySpec::Rank { mode, k }, &models, episodes, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryReport {
    /// `pass_at[n]` is the success rate with up to `n + 1` attempts.
    pub pass_at: Vec<f64>,
}

/// Up to `max_retries` full restarts per episode from the same initial state,
/// each with fresh policy randomness. Attempt 0 is exactly [`evaluate_policy`].
pub fn retry_eval(
    cfg: &EpisodeConfig,
    spec: &PolicySpec,
    models: &Models<'_>,
    max_retries: usize,
    episodes: usize,
    seed: u64,
) -> Result<RetryReport> {
    let mut solved = vec![false; episodes];
    let mut pass_at = Vec::with_capacity(max_retries + 1);
    for attempt in 0..=max_retries as u64 {
        let pending: Vec<u64> = (0..episodes as u64).filter(|&e| !solved[e as usize]).collect();
        let results = pending
            .par_iter()
            .map(|&e| rollout_episode(cfg, spec, models, episode_seed(seed, e), attempt, |_, _| {}).map(|ep| ep.success))
            .collect::<Result<Vec<bool>>>()?;
        for (&e, ok) in pending.iter().zip(results) {
            solved[e as usize] |= ok;
        }
        pass_at.push(mean_or_nan(solved.iter().filter(|&&s| s).count() as f64, episodes));
    }
    Ok(RetryReport { pass_at })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkFamily {
    Forward,
    Backward,
    HalfSpeed,
    Random,
    Corrupted,
}

impl ChunkFamily {
    pub const ALL: [ChunkFamily; 5] = [
        ChunkFamily::Forward,
        ChunkFamily::Backward,
        ChunkFamily::HalfSpeed,
        ChunkFamily::Random,
        ChunkFamily::Corrupted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChunkFamily::Forward => "forward",
            ChunkFamily::Backward => "backward",
            ChunkFamily::HalfSpeed => "half_speed",
            ChunkFamily::Random => "random",
            ChunkFamily::Corrupted => "corrupted",
        }
    }
}

/// The demonstrated path from step `i` covered at half the pace: substep `j`
/// targets the point halfway along the first `j` demonstrated substeps.
pub fn half_speed_chunk(traj: &Trajectory, i: usize, k: usize) -> Result<ActionChunk> {
    let fwd = traj.forward_chunk(i, k)?;
    let a = fwd.substeps();
    let start = traj.pose(i);
    let point = |m: usize| {
        if m == 0 {
            start
        } else {
            (a[m - 1].target_x, a[m - 1].target_y)
        }
    };
    Ok(ActionChunk::new(
        (1..=k)
            .map(|j| {
                let (lo, hi) = (point(j / 2), point(j.div_ceil(2)));
                let grip = a[j.div_ceil(2) - 1].grip;
                SubstepAction::new(0.5 * (lo.0 + hi.0), 0.5 * (lo.1 + hi.1), grip)
            })
            .collect(),
    ))
}

pub fn grip_inverted(chunk: &ActionChunk) -> ActionChunk {
    ActionChunk::new(
        chunk
            .substeps()
            .iter()
            .map(|s| SubstepAction::new(s.target_x, s.target_y, 1.0 - s.grip))
            .collect(),
    )
}

pub const OOD_BINS: usize = 20;
pub const OOD_RANGE: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyScores {
    pub family: ChunkFamily,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Percent of scores per bin over [`OOD_RANGE`]; out-of-range scores land in the edge bins.
    pub histogram: Vec<f64>,
    /// Fraction scoring at or below the threshold.
    pub filtered: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodHistogram {
    pub threshold: f64,
    pub families: Vec<FamilyScores>,
    /// Fraction of all non-forward chunks at or below the threshold.
    pub filter_rate: f64,
}

impl OodHistogram {
    pub fn family(&self, f: ChunkFamily) -> &FamilyScores {
        self.families.iter().find(|s| s.family == f).expect("every family is scored")
    }
}

pub fn bin_index(score: f64) -> usize {
    let (lo, hi) = OOD_RANGE;
    let b = ((score - lo) / (hi - lo) * OOD_BINS as f64).floor();
    b.clamp(0.0, (OOD_BINS - 1) as f64) as usize
}

/// Scores five chunk families at every trajectory step that has both a full
/// chunk ahead and `k` steps behind. Random chunks come from a different
/// trajectory chosen with `seed`.
pub fn ood_eval(verifier: &Verifier, dataset: &[Trajectory], threshold: f64, seed: u64) -> Result<OodHistogram> {
    if dataset.len() < 2 {
        return Err(Error::Rejected("OOD evaluation needs at least two trajectories".into()));
    }
    let k = verifier.horizon();
    let per_traj = dataset
        .par_iter()
        .enumerate()
        .map(|(ti, traj)| -> Result<[Vec<f64>; 5]> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, ti as u64));
            let mut out: [Vec<f64>; 5] = Default::default();
            if traj.len() < k + k {
                return Ok(out);
            }
            for i in k..=traj.len() - k {
                let state = &traj.steps[i].state;
                let forward = traj.forward_chunk(i, k)?;
                let other = loop {
                    let o = rng.random_range(0..dataset.len());
                    if o != ti && dataset[o].len() >= k {
                        break &dataset[o];
                    }
                };
                let j = rng.random_range(0..=other.len() - k);
                let chunks = [
                    forward.clone(),
                    reverse_chunk(traj, i, k)?,
                    half_speed_chunk(traj, i, k)?,
                    other.forward_chunk(j, k)?,
                    grip_inverted(&forward),
                ];
                let scores = verifier.score_batch(state, &chunks)?;
                for (o, s) in out.iter_mut().zip(scores) {
                    o.push(s);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut families = Vec::new();
    for (f_idx, family) in ChunkFamily::ALL.into_iter().enumerate() {
        let scores: Vec<f64> = per_traj.iter().flat_map(|t| t[f_idx].iter().copied()).collect();
        if scores.is_empty() {
            return Err(Error::Rejected("no trajectory is long enough for OOD evaluation".into()));
        }
        let mut histogram = vec![0.0; OOD_BINS];
        for &s in &scores {
            histogram[bin_index(s)] += 100.0 / scores.len() as f64;
        }
        let n = scores.len();
        families.push(FamilyScores {
            family,
            mean: scores.iter().sum::<f64>() / n as f64,
            filtered: scores.iter().filter(|&&s| s <= threshold).count() as f64 / n as f64,
            histogram,
            scores,
        });
    }
    let (bad, total) = families[1..].iter().fold((0usize, 0usize), |(b, t), f| {
        (b + f.scores.iter().filter(|&&s| s <= threshold).count(), t + f.scores.len())
    });
    Ok(OodHistogram {
        threshold,
        families,
        filter_rate: bad as f64 / total as f64,
    })
}

/// Fractions of forward chunks scoring above zero and of reversed chunks scoring below zero.
pub fn sign_accuracy(verifier: &Verifier, dataset: &[Trajectory]) -> Result<(f64, f64)> {
    let ood = ood_eval(verifier, dataset, 0.0, 0)?;
    let fwd = ood.family(ChunkFamily::Forward);
    let back = ood.family(ChunkFamily::Backward);
    let pos = fwd.scores.iter().filter(|&&s| s > 0.0).count() as f64 / fwd.scores.len() as f64;
    let neg = back.scores.iter().filter(|&&s| s < 0.0).count() as f64 / back.scores.len() as f64;
    Ok((pos, neg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub trials: usize,
    pub policy_4: f64,
    pub policy_16: f64,
    /// 12 extra candidates from the mixture posterior of 4 given policy samples.
    pub posterior_12: f64,
    pub gaussian_12: f64,
    pub verify_1: f64,
    pub verify_16_batched: f64,
    pub verify_16_sequential: f64,
}

/// Calls per timed trial; a trial reports the mean of its calls.
pub const LATENCY_REPS: usize = 10;

fn time_median(trials: usize, mut f: impl FnMut()) -> f64 {
    f();
    let mut times: Vec<f64> = (0..trials)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..LATENCY_REPS {
                f();
            }
            t.elapsed().as_secs_f64() / LATENCY_REPS as f64
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

/// Median wall-clock seconds of each candidate-generation and scoring path.
pub fn latency_bench(
    vae: &ActionVae,
    verifier: &Verifier,
    cfg: &EpisodeConfig,
    trials: usize,
    seed: u64,
) -> Result<LatencyReport> {
    let trials = trials.max(1);
    let state = evaluation_state(cfg, seed, 1);
    let enc = encode_state(&state);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let policy: Vec<ActionChunk> = (0..16).map(|_| base_policy_sample(&state, cfg, &mut rng)).collect();
    let four = &policy[..4];
    let mut sink = 0.0;

    let policy_4 = time_median(trials, || {
        for _ in 0..4 {
            sink += base_policy_sample(&state, cfg, &mut rng).substeps()[0].target_x;
        }
    });
    let policy_16 = time_median(trials, || {
        for _ in 0..16 {
            sink += base_policy_sample(&state, cfg, &mut rng).substeps()[0].target_x;
        }
    });
    let posterior_12 = time_median(trials, || {
        let mix = mix_posterior(four.iter().map(|c| vae.encode(c).unwrap()).collect()).unwrap();
        sink += vae.sample_candidates(&mix, 12, &mut rng)[0].substeps()[0].target_x;
    });
    let gaussian_12 = time_median(trials, || {
        let flat: Vec<Vec<f64>> = four.iter().map(ActionChunk::flatten).collect();
        let (m, v) = fit_diagonal_gaussian(&flat).unwrap();
        sink += sample_gaussian(&m, &v, 12, &mut rng)[0].substeps()[0].target_x;
    });
    let verify_1 = time_median(trials, || {
        sink += verifier.score_batch(&enc, &policy[..1]).unwrap()[0];
    });
    let verify_16_batched = time_median(trials, || {
        sink += verifier.score_batch(&enc, &policy).unwrap()[0];
    });
    let verify_16_sequential = time_median(trials, || {
        for c in &policy {
            sink += verifier.score(&enc, c).unwrap();
        }
    });
    std::hint::black_box(sink);
    Ok(LatencyReport {
        trials,
        policy_4,
        policy_16,
        posterior_12,
        gaussian_12,
        verify_1,
        verify_16_batched,
        verify_16_sequential,
    })
}

/// Line-oriented report. `CONFIG`, `METRIC` and `EPISODE` lines are the
/// machine-readable part and depend only on inputs and seed; `TIMING` lines
/// carry wall-clock values; `#` lines are human-readable tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn config(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("CONFIG {key} {value}"));
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.lines.push(format!("METRIC {name} {value}"));
    }

    pub fn timing(&mut self, name: &str, seconds: f64) {
        self.lines.push(format!("TIMING {name} {seconds}"));
    }

    pub fn comment(&mut self, text: &str) {
        for l in text.lines() {
            self.lines.push(format!("# {l}"));
        }
    }

    pub fn line(&mut self, raw: String) {
        self.lines.push(raw);
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    /// The `CONFIG`, `METRIC` and `EPISODE` lines.
    pub fn machine_readable(&self) -> Vec<&str> {
        self.lines.iter().map(String::as_str).filter(|l| is_machine_line(l)).collect()
    }

    pub fn metric_value(&self, name: &str) -> Option<f64> {
        metric_in(&self.render(), name)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn add_policy(&mut self, prefix: &str, r: &PolicyReport, with_episodes: bool) {
        self.metric(&format!("{prefix}success_rate"), r.success_rate);
        self.metric(&format!("{prefix}mean_substeps"), r.mean_substeps_success);
        self.metric(&format!("{prefix}mean_substeps_all"), r.mean_substeps_all);
        self.metric(&format!("{prefix}mean_retained"), r.mean_retained);
        self.metric(&format!("{prefix}fallback_rate"), r.fallback_rate);
        let mut table = format!("{:<10} {:>8} {:>9} {:>8} {:>9}\n", "task", "episodes", "successes", "rate", "substeps");
        for task in Task::ALL {
            let t = &r.per_task[task.code()];
            let rate = mean_or_nan(t.successes as f64, t.episodes);
            self.metric(&format!("{prefix}success_rate_{}", task.name()), rate);
            writeln!(
                table,
                "{:<10} {:>8} {:>9} {:>8.3} {:>9.1}",
                task.name(),
                t.episodes,
                t.successes,
                rate,
                t.mean_substeps_success
            )
            .unwrap();
        }
        self.comment(&format!("policy {}\n{table}", r.spec));
        if with_episodes {
            for ep in &r.episodes {
                self.line(ep.record_line());
            }
        }
    }

    pub fn add_mmd(&mut self, r: &MmdReport) {
        let mut table = format!("{:>6} {:>10} {:>10}\n", "gamma", "gaussian", "posterior");
        for (j, g) in r.gammas.iter().enumerate() {
            self.metric(&format!("mmd_gaussian_gamma{g}"), r.median_gaussian[j]);
            self.metric(&format!("mmd_posterior_gamma{g}"), r.median_posterior[j]);
            writeln!(table, "{g:>6} {:>10.4} {:>10.4}", r.median_gaussian[j], r.median_posterior[j]).unwrap();
        }
        self.metric("mmd_states", r.rows.len() as f64);
        self.comment(&format!("median MMD against policy samples over {} states\n{table}", r.rows.len()));
    }

    pub fn add_ood(&mut self, r: &OodHistogram) {
        let mut table = format!("{:<11} {:>6} {:>9} {:>9}\n", "family", "count", "mean", "filtered");
        for f in &r.families {
            let name = f.family.name();
            self.metric(&format!("ood_mean_{name}"), f.mean);
            self.metric(&format!("ood_filtered_{name}"), f.filtered);
            writeln!(table, "{name:<11} {:>6} {:>9.4} {:>9.3}", f.scores.len(), f.mean, f.filtered).unwrap();
        }
        self.metric("ood_filter_rate", r.filter_rate);
        let (lo, hi) = OOD_RANGE;
        let width = (hi - lo) / OOD_BINS as f64;
        let mut hist = String::from("bin_low  ");
        for f in &r.families {
            write!(hist, " {:>10}", f.family.name()).unwrap();
        }
        hist.push('\n');
        for b in 0..OOD_BINS {
            write!(hist, "{:>8.2} ", lo + b as f64 * width).unwrap();
            for f in &r.families {
                write!(hist, " {:>9.2}%", f.histogram[b]).unwrap();
            }
            hist.push('\n');
        }
        self.comment(&format!("verifier scores by chunk family, threshold {}\n{table}\n{hist}", r.threshold));
    }

    pub fn add_retry(&mut self, r: &RetryReport) {
        let mut table = String::from("attempts  pass\n");
        for (n, p) in r.pass_at.iter().enumerate() {
            self.metric(&format!("pass_at_{}", n + 1), *p);
            writeln!(table, "{:>8}  {p:.3}", n + 1).unwrap();
        }
        self.comment(&table);
    }

    pub fn add_latency(&mut self, r: &LatencyReport) {
        let rows = [
            ("policy_4", r.policy_4),
            ("policy_16", r.policy_16),
            ("posterior_12", r.posterior_12),
            ("gaussian_12", r.gaussian_12),
            ("verify_1", r.verify_1),
            ("verify_16_batched", r.verify_16_batched),
            ("verify_16_sequential", r.verify_16_sequential),
        ];
        let mut table = format!("median wall-clock over {} trials\n", r.trials);
        for (name, v) in rows {
            self.timing(name, v);
            writeln!(table, "{name:<22} {:>10.1} us", v * 1e6).unwrap();
        }
        self.comment(&table);
    }
}

/// The deterministic lines of a rendered report.
pub fn machine_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| is_machine_line(l)).collect()
}

fn is_machine_line(l: &str) -> bool {
    l.starts_with("CONFIG ") || l.starts_with("METRIC ") || l.starts_with("EPISODE ")
}

pub fn metric_in(text: &str, name: &str) -> Option<f64> {
    text.lines().find_map(|l| {
        let mut parts = l.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("METRIC"), Some(n), Some(v)) if n == name => v.parse().ok(),
            _ => None,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mmd_identities() {
        let x = vec![vec![0.1, 0.2], vec![0.5, -0.3], vec![1.0, 0.0]];
        let y = vec![vec![0.3, 0.3], vec![-0.2, 0.1]];
        assert_eq!(mmd(&x, &x, 2.0).unwrap(), 0.0);
        assert_eq!(mmd(&x, &y, 3.0).unwrap(), mmd(&y, &x, 3.0).unwrap());
        let m = mmd(&[vec![0.0]], &[vec![1.0]], 2.0).unwrap();
        assert!((m * m - (2.0 - 2.0 * (-2.0f64).exp())).abs() < 1e-12);
        assert!((m - 1.31504).abs() < 1e-5);
        assert!(mmd(&[], &y, 1.0).is_err());
    }

    #[test]
    fn mmd_grows_with_translation() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.05]).collect();
        let mut last = 0.0;
        for s in 1..30 {
            let y: Vec<Vec<f64>> = x.iter().map(|v| vec![v[0] + s as f64 * 0.05]).collect();
            let m = mmd(&x, &y, 4.0).unwrap();
            assert!(m > last);
            last = m;
        }
    }

    #[test]
    fn half_speed_covers_half_the_path() {
        let cfg = EpisodeConfig::default();
        let data = crate::rollout::expert_trajectories(&cfg, 5, 1).unwrap();
        let t = &data[0];
        let half = half_speed_chunk(t, 0, 8).unwrap();
        let full = t.forward_chunk(0, 8).unwrap();
        let last = half.substeps()[7];
        let mid = full.substeps()[3];
        assert!((last.target_x - mid.target_x).abs() < 1e-12);
        assert!((last.target_y - mid.target_y).abs() < 1e-12);
    }

    #[test]
    fn bins_partition_the_range() {
        assert_eq!(bin_index(-5.0), 0);
        assert_eq!(bin_index(-1.0), 0);
        assert_eq!(bin_index(0.0), OOD_BINS / 2);
        assert_eq!(bin_index(0.999), OOD_BINS - 1);
        assert_eq!(bin_index(7.0), OOD_BINS - 1);
    }

    #[test]
    fn expert_is_perfect_and_reports_repeat() {
        let cfg = EpisodeConfig::default();
        let a = evaluate_policy(&cfg, &PolicySpec::Expert, &Models::default(), 60, 5).unwrap();
        assert_eq!(a.success_rate, 1.0);
        let b = evaluate_policy(&cfg, &PolicySpec::Expert, &Models::default(), 60, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn retry_zero_matches_single_evaluation() {
        let cfg = EpisodeConfig::default();
        let single = evaluate_policy(&cfg, &PolicySpec::Base, &Models::default(), 80, 9).unwrap();
        let retry = retry_eval(&cfg, &PolicySpec::Base, &Models::default(), 3, 80, 9).unwrap();
        assert_eq!(retry.pass_at[0], single.success_rate);
        assert!(retry.pass_at.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn report_sections() {
        let mut r = Report::new();
        r.config("seed", 3);
        r.metric("x", 0.5);
        r.timing("t", 1e-3);
        r.comment("table\nrow");
        let text = r.render();
        assert_eq!(machine_lines(&text), vec!["CONFIG seed 3", "METRIC x 0.5"]);
        assert_eq!(r.metric_value("x"), Some(0.5));
        assert_eq!(r.metric_value("y"), None);
    }
}
