//! Command-line entry point. [`run`] parses argv and returns the exit code:
//! 0 on success, 1 on usage errors, 2 on runtime errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_policy, latency_bench, mmd_protocol, ood_eval, rank_order_eval, retry_eval, sign_accuracy, MmdConfig,
    Report, MMD_GAMMAS,
};
use crate::rollout::{expert_trajectories, Models, PolicySpec, RankMode};
use crate::selector::DEFAULT_THRESHOLD;
use crate::sim::EpisodeConfig;
use crate::traj::{aligned_chunks, build_training_pairs, read_dataset, write_dataset, Trajectory, DEFAULT_HORIZON};
use crate::vae::{reconstruction_rms, train_vae, ActionVae, VaeTrainConfig, DEFAULT_KL_WEIGHT, DEFAULT_LATENT_DIM};
use crate::verifier::{train_verifier, Verifier, VerifierTrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "tapsample",
    version,
    about = "Posterior action sampling and progress-verified selection on a 2-D tabletop testbed"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record noiseless expert demonstrations as a dataset file.
    GenData(GenDataArgs),
    /// Train the action VAE on decision-aligned expert chunks.
    TrainVae(TrainVaeArgs),
    /// Train the progress verifier on forward/reversed chunk pairs.
    TrainVerifier(TrainVerifierArgs),
    /// Closed-loop success rate and execution length of one policy.
    Eval(EvalArgs),
    /// MMD of Gaussian-fit and posterior sampling against policy samples.
    BenchMmd(BenchMmdArgs),
    /// Median wall-clock of candidate generation and verification.
    BenchLatency(BenchLatencyArgs),
    /// Verifier score distributions on five chunk families.
    EvalOod(EvalOodArgs),
    /// pass@k with up to k full attempts per episode.
    EvalRetry(EvalRetryArgs),
    /// Execution length when always executing the best- or worst-scoring candidate.
    EvalRank(EvalRankArgs),
    /// Sweep the candidate count or the latent dimension.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
struct SimArgs {
    /// Episode length in substeps (multiple of the chunk horizon).
    #[arg(long, default_value_t = EpisodeConfig::default().horizon)]
    horizon: usize,
    /// Substeps per action chunk (H).
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    chunk_horizon: usize,
    /// Base-policy Gaussian noise per coordinate.
    #[arg(long, default_value_t = EpisodeConfig::default().noise_std)]
    noise_std: f64,
    /// Probability that a base-policy sample follows the distractor plan.
    #[arg(long, default_value_t = EpisodeConfig::default().distractor_prob)]
    distractor_prob: f64,
}

impl SimArgs {
    fn config(&self) -> EpisodeConfig {
        EpisodeConfig {
            horizon: self.horizon,
            chunk_horizon: self.chunk_horizon,
            noise_std: self.noise_std,
            distractor_prob: self.distractor_prob,
            ..EpisodeConfig::default()
        }
    }

    fn record(&self, r: &mut Report) {
        let c = self.config();
        r.config("horizon", c.horizon);
        r.config("chunk_horizon", c.chunk_horizon);
        r.config("v_max", c.v_max);
        r.config("grasp_radius", c.grasp_radius);
        r.config("place_radius", c.place_radius);
        r.config("knock_radius", c.knock_radius);
        r.config("reach_radius", c.reach_radius);
        r.config("noise_std", c.noise_std);
        r.config("distractor_prob", c.distractor_prob);
    }
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// Base seed for all randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Expert,
    Base,
    Tapsample,
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankArg {
    Best,
    Worst,
}

impl From<RankArg> for RankMode {
    fn from(r: RankArg) -> Self {
        match r {
            RankArg::Best => RankMode::Best,
            RankArg::Worst => RankMode::Worst,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value_t = PolicyKind::Base)]
    policy: PolicyKind,
    /// VAE checkpoint (tapsample with posterior candidates).
    #[arg(long)]
    vae: Option<PathBuf>,
    /// Verifier checkpoint (tapsample, rank).
    #[arg(long)]
    verifier: Option<PathBuf>,
    /// Direct base-policy samples per decision (N).
    #[arg(long, default_value_t = 4)]
    num_policy_samples: usize,
    /// Candidates per decision: N plus posterior samples for tapsample, k for rank.
    #[arg(long, default_value_t = 16)]
    num_candidates: usize,
    /// Selector retention threshold; `-inf` keeps every candidate.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, allow_hyphen_values = true)]
    threshold: f64,
    #[arg(long, value_enum, default_value_t = RankArg::Best)]
    rank_mode: RankArg,
}

impl PolicyArgs {
    fn spec(&self) -> std::result::Result<PolicySpec, CliError> {
        self.spec_with_candidates(self.num_candidates)
    }

    fn spec_with_candidates(&self, candidates: usize) -> std::result::Result<PolicySpec, CliError> {
        let spec = match self.policy {
            PolicyKind::Expert => PolicySpec::Expert,
            PolicyKind::Base => PolicySpec::Base,
            PolicyKind::Tapsample => {
                if candidates < self.num_policy_samples {
                    return Err(CliError::Usage(format!(
                        "--num-candidates {candidates} is below --num-policy-samples {}",
                        self.num_policy_samples
                    )));
                }
                PolicySpec::TapSample {
                    policy_samples: self.num_policy_samples,
                    posterior_samples: candidates - self.num_policy_samples,
                    threshold: self.threshold,
                }
            }
            PolicyKind::Rank => PolicySpec::Rank {
                mode: self.rank_mode.into(),
                k: candidates,
            },
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }

    fn load_models(&self, spec: &PolicySpec, horizon: usize) -> Result<(Option<ActionVae>, Option<Verifier>)> {
        let vae = match (&self.vae, spec.needs_vae()) {
            (Some(p), true) => Some(load_vae(p, horizon)?),
            (None, true) => return Err(missing_flag(spec, "--vae")),
            _ => None,
        };
        let verifier = match (&self.verifier, spec.needs_verifier()) {
            (Some(p), true) => Some(load_verifier(p, horizon)?),
            (None, true) => return Err(missing_flag(spec, "--verifier")),
            _ => None,
        };
        Ok((vae, verifier))
    }

    fn record(&self, spec: &PolicySpec, r: &mut Report) {
        r.config("policy", spec);
        r.config("num_policy_samples", self.num_policy_samples);
        r.config("num_candidates", self.num_candidates);
        r.config("threshold", self.threshold);
        if let Some(p) = &self.vae {
            r.config("vae", p.display());
        }
        if let Some(p) = &self.verifier {
            r.config("verifier", p.display());
        }
    }
}

fn missing_flag(spec: &PolicySpec, flag: &str) -> Error {
    Error::Rejected(format!("policy `{}` needs a checkpoint via {flag}", spec.name()))
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Number of trajectories to record.
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct TrainVaeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    chunk_horizon: usize,
    #[arg(long, default_value_t = DEFAULT_LATENT_DIM)]
    latent_dim: usize,
    #[arg(long, default_value_t = DEFAULT_KL_WEIGHT)]
    kl_weight: f64,
    #[arg(long, default_value_t = VaeTrainConfig::default().steps)]
    steps: usize,
    #[arg(long, default_value_t = VaeTrainConfig::default().batch)]
    batch: usize,
    #[arg(long, default_value_t = VaeTrainConfig::default().lr)]
    lr: f64,
    /// Fraction of trajectories (from the end of the file) held out.
    #[arg(long, default_value_t = 0.1)]
    heldout_fraction: f64,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct TrainVerifierArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    chunk_horizon: usize,
    #[arg(long, default_value_t = VerifierTrainConfig::default().steps)]
    steps: usize,
    #[arg(long, default_value_t = VerifierTrainConfig::default().batch)]
    batch: usize,
    #[arg(long, default_value_t = VerifierTrainConfig::default().lr)]
    lr: f64,
    /// Maximum forward (and reversed) samples drawn per trajectory.
    #[arg(long)]
    pairs_per_trajectory: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    heldout_fraction: f64,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct BenchMmdArgs {
    #[arg(long)]
    vae: PathBuf,
    /// Number of evaluation states.
    #[arg(long, default_value_t = 100)]
    states: usize,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    /// Policy samples each strategy may use.
    #[arg(long, default_value_t = 4)]
    fit_samples: usize,
    #[arg(long, value_delimiter = ',', default_values_t = MMD_GAMMAS.to_vec())]
    gammas: Vec<f64>,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct BenchLatencyArgs {
    #[arg(long)]
    vae: PathBuf,
    #[arg(long)]
    verifier: PathBuf,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct EvalOodArgs {
    #[arg(long)]
    verifier: PathBuf,
    /// Held-out dataset to probe.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, allow_hyphen_values = true)]
    threshold: f64,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct EvalRetryArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 3)]
    max_retries: usize,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct EvalRankArgs {
    #[arg(long)]
    verifier: PathBuf,
    /// Policy candidates per decision.
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepOver {
    NumCandidates,
    LatentDim,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    over: SweepOver,
    /// Values to sweep; defaults to 4,8,16,32 candidates or latent sizes 2,4,6,12.
    #[arg(long, value_delimiter = ',')]
    values: Vec<usize>,
    /// Training data for latent-dim sweeps.
    #[arg(long)]
    data: Option<PathBuf>,
    /// VAE training steps per latent size.
    #[arg(long, default_value_t = VaeTrainConfig::default().steps)]
    steps: usize,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult = std::result::Result<Report, CliError>;

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let (result, report_path) = dispatch(cli);
    match result {
        Ok(report) => {
            print!("{}", report.render());
            if let Some(p) = report_path {
                if let Err(e) = report.write(&p) {
                    eprintln!("error: {e}");
                    return 2;
                }
            }
            0
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> (CliResult, Option<PathBuf>) {
    match cli.command {
        Command::GenData(a) => (gen_data(&a), a.run.report),
        Command::TrainVae(a) => (train_vae_cmd(&a), a.run.report),
        Command::TrainVerifier(a) => (train_verifier_cmd(&a), a.run.report),
        Command::Eval(a) => (eval_cmd(&a), a.run.report),
        Command::BenchMmd(a) => (bench_mmd(&a), a.run.report),
        Command::BenchLatency(a) => (bench_latency(&a), a.run.report),
        Command::EvalOod(a) => (eval_ood(&a), a.run.report),
        Command::EvalRetry(a) => (eval_retry(&a), a.run.report),
        Command::EvalRank(a) => (eval_rank(&a), a.run.report),
        Command::Sweep(a) => (sweep(&a), a.run.report),
    }
}

fn header(command: &str, seed: u64) -> Report {
    let mut r = Report::new();
    r.config("command", command);
    r.config("seed", seed);
    r
}

fn checked_config(sim: &SimArgs) -> std::result::Result<EpisodeConfig, CliError> {
    let cfg = sim.config();
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn load_vae(path: &Path, horizon: usize) -> Result<ActionVae> {
    let vae = ActionVae::from_checkpoint(&Checkpoint::load(path)?).map_err(|msg| Error::Checkpoint {
        path: path.into(),
        msg,
    })?;
    if vae.chunk_dim() != 3 * horizon {
        return Err(Error::Checkpoint {
            path: path.into(),
            msg: format!("VAE chunk width {} does not match chunk horizon {horizon}", vae.chunk_dim()),
        });
    }
    Ok(vae)
}

fn read_verifier(path: &Path) -> Result<Verifier> {
    Verifier::from_checkpoint(&Checkpoint::load(path)?).map_err(|msg| Error::Checkpoint {
        path: path.into(),
        msg,
    })
}

fn load_verifier(path: &Path, horizon: usize) -> Result<Verifier> {
    let v = read_verifier(path)?;
    if v.horizon() != horizon {
        return Err(Error::Checkpoint {
            path: path.into(),
            msg: format!("verifier horizon {} does not match chunk horizon {horizon}", v.horizon()),
        });
    }
    Ok(v)
}

/// Splits off the last `fraction` of trajectories (at least one when there are two or more).
fn split_heldout(mut data: Vec<Trajectory>, fraction: f64) -> std::result::Result<(Vec<Trajectory>, Vec<Trajectory>), CliError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(CliError::Usage(format!("--heldout-fraction {fraction} must lie in [0, 1)")));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let mut n = (data.len() as f64 * fraction).ceil() as usize;
    if fraction > 0.0 && data.len() >= 2 {
        n = n.max(1);
    }
    let n = n.min(data.len() - 1);
    let held = data.split_off(data.len() - n);
    Ok((data, held))
}

fn gen_data(a: &GenDataArgs) -> CliResult {
    let cfg = checked_config(&a.sim)?;
    let mut r = header("gen-data", a.run.seed);
    a.sim.record(&mut r);
    r.config("episodes", a.episodes);
    r.config("out", a.out.display());
    let data = expert_trajectories(&cfg, a.episodes, a.run.seed)?;
    write_dataset(&a.out, &data)?;
    let steps: usize = data.iter().map(Trajectory::len).sum();
    r.metric("trajectories", data.len() as f64);
    r.metric("steps", steps as f64);
    r.metric("mean_length", steps as f64 / data.len().max(1) as f64);
    Ok(r)
}

fn loss_table(losses: &[(usize, f64)]) -> String {
    let mut t = String::from("step      loss\n");
    for (s, l) in losses {
        writeln!(t, "{s:>6}  {l:.6}").unwrap();
    }
    t
}

fn train_vae_cmd(a: &TrainVaeArgs) -> CliResult {
    let data = read_dataset(&a.data, a.chunk_horizon)?;
    let (train, held) = split_heldout(data, a.heldout_fraction)?;
    let cfg = VaeTrainConfig {
        latent_dim: a.latent_dim,
        kl_weight: a.kl_weight,
        steps: a.steps,
        batch: a.batch,
        lr: a.lr,
        seed: a.run.seed,
        ..VaeTrainConfig::default()
    };
    let mut r = header("train-vae", a.run.seed);
    r.config("data", a.data.display());
    r.config("out", a.out.display());
    r.config("chunk_horizon", a.chunk_horizon);
    r.config("latent_dim", cfg.latent_dim);
    r.config("kl_weight", cfg.kl_weight);
    r.config("steps", cfg.steps);
    r.config("batch", cfg.batch);
    r.config("lr", cfg.lr);
    r.config("hidden", format!("{:?}", cfg.hidden));
    r.config("heldout_fraction", a.heldout_fraction);
    let chunks = aligned_chunks(&train, a.chunk_horizon);
    let held_chunks = aligned_chunks(&held, a.chunk_horizon);
    let (vae, log) = train_vae(&chunks, &held_chunks, &cfg)?;
    vae.to_checkpoint().save(&a.out)?;
    r.metric("train_chunks", chunks.len() as f64);
    r.metric("heldout_chunks", held_chunks.len() as f64);
    r.metric("train_rms", reconstruction_rms(&vae, &chunks));
    if let Some(rms) = log.heldout_rms {
        r.metric("heldout_rms", rms);
    }
    if let Some(&(_, l)) = log.losses.last() {
        r.metric("final_loss", l);
    }
    r.comment(&loss_table(&log.losses));
    Ok(r)
}

fn train_verifier_cmd(a: &TrainVerifierArgs) -> CliResult {
    let data = read_dataset(&a.data, a.chunk_horizon)?;
    let (train, held) = split_heldout(data, a.heldout_fraction)?;
    let cfg = VerifierTrainConfig {
        steps: a.steps,
        batch: a.batch,
        lr: a.lr,
        seed: a.run.seed,
        ..VerifierTrainConfig::default()
    };
    let mut r = header("train-verifier", a.run.seed);
    r.config("data", a.data.display());
    r.config("out", a.out.display());
    r.config("chunk_horizon", a.chunk_horizon);
    r.config("steps", cfg.steps);
    r.config("batch", cfg.batch);
    r.config("lr", cfg.lr);
    r.config("arch", format!("{:?}", cfg.arch));
    r.config("heldout_fraction", a.heldout_fraction);
    if let Some(cap) = a.pairs_per_trajectory {
        r.config("pairs_per_trajectory", cap);
    }
    let pairs = build_training_pairs(&train, a.chunk_horizon, a.run.seed, a.pairs_per_trajectory)?;
    let held_pairs = if held.is_empty() {
        vec![]
    } else {
        build_training_pairs(&held, a.chunk_horizon, a.run.seed ^ 1, None)?
    };
    let (verifier, log) = train_verifier(&pairs, &held_pairs, a.chunk_horizon, &cfg)?;
    verifier.to_checkpoint().save(&a.out)?;
    r.metric("train_pairs", pairs.len() as f64);
    r.metric("heldout_pairs", held_pairs.len() as f64);
    if let Some(mae) = log.heldout_mae {
        r.metric("heldout_mae", mae);
        let mean_label = held_pairs.iter().map(|s| s.label.abs()).sum::<f64>() / held_pairs.len() as f64;
        r.metric("heldout_mean_abs_label", mean_label);
    }
    if let Ok((pos, neg)) = sign_accuracy(&verifier, &held) {
        r.metric("heldout_forward_positive", pos);
        r.metric("heldout_reversed_negative", neg);
    }
    if let Some(&(_, l)) = log.losses.last() {
        r.metric("final_loss", l);
    }
    r.comment(&loss_table(&log.losses));
    Ok(r)
}

fn eval_cmd(a: &EvalArgs) -> CliResult {
    let cfg = checked_config(&a.sim)?;
    let spec = a.policy.spec()?;
    let (vae, verifier) = a.policy.load_models(&spec, cfg.chunk_horizon)?;
    let models = Models {
        vae: vae.as_ref(),
        verifier: verifier.as_ref(),
    };
    let mut r = header("eval", a.run.seed);
    a.sim.record(&mut r);
    a.policy.record(&spec, &mut r);
    r.config("episodes", a.episodes);
    let report = evaluate_policy(&cfg, &spec, &models, a.episodes, a.run.seed)?;
    r.add_policy("", &report, true);
    Ok(r)
}

fn bench_mmd(a: &BenchMmdArgs) -> CliResult {
    let cfg = checked_config(&a.sim)?;
    let vae = load_vae(&a.vae, cfg.chunk_horizon)?;
    let mut r = header("bench-mmd", a.run.seed);
    a.sim.record(&mut r);
    r.config("vae", a.vae.display());
    r.config("states", a.states);
    r.config("samples", a.samples);
    r.config("fit_samples", a.fit_samples);
    r.config("gammas", format!("{:?}", a.gammas));
    let report = mmd_protocol(
        &vae,
        &cfg,
        &MmdConfig {
            states: a.states,
            samples_per_state: a.samples,
            fit_samples: a.fit_samples,
            gammas: a.gammas.clone(),
            seed: a.run.seed,
        },
    )?;
    r.add_mmd(&report);
    Ok(r)
}

fn bench_latency(a: &BenchLatencyArgs) -> CliResult {
    let cfg = checked_config(&a.sim)?;
    let vae = load_vae(&a.vae, cfg.chunk_horizon)?;
    let verifier = load_verifier(&a.verifier, cfg.chunk_horizon)?;
    let mut r = header("bench-latency", a.run.seed);
    a.sim.record(&mut r);
    r.config("vae", a.vae.display());
    r.config("verifier", a.verifier.display());
    r.config("trials", a.trials);
    let report = latency_bench(&vae, &verifier, &cfg, a.trials, a.run.seed)?;
    r.add_latency(&report);
    Ok(r)
}

fn eval_ood(a: &EvalOodArgs) -> CliResult {
    let verifier = read_verifier(&a.verifier)?;
    let data = read_dataset(&a.data, verifier.horizon())?;
    let mut r = header("eval-ood", a.run.seed);
    r.config("verifier", a.verifier.display());
    r.config("data", a.data.display());
    r.config("threshold", a.threshold);
    let report = ood_eval(&verifier, &data, a.threshold, a.run.seed)?;
    r.add_ood(&report);
    let (pos, neg) = sign_accuracy(&verifier, &data)?;
    r.metric("forward_positive", pos);
    r.metric("reversed_negative", neg);
    Ok(r)
}

fn eval_retry(a: &EvalRetryArgs) -> CliResult {
    let cfg = checked_config(&a.sim)?;
    let spec = a.policy.spec()?;
    let (vae, verifier) = a.policy.load_models(&spec, cfg.chunk_horizon)?;
    let models = Models {
        vae: vae.as_ref(),
        verifier: verifier.as_ref(),
    };
    let mut r = header("eval-retry", a.run.seed);
    a.sim.record(&mut r);
    a.policy.record(&spec, &mut r);
    r.config("episodes", a.episodes);
    r.config("max_retries", a.max_retries);
    let report = retry_eval(&cfg, &spec, &models, a.max_retries, a.episodes, a.run.seed)?;
    r.add_retry(&report);
    Ok(r)
}

fn eval_rank(a: &EvalRankArgs) -> CliResult {
    let cfg = checked_config(&a.sim)?;
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let verifier = load_verifier(&a.verifier, cfg.chunk_horizon)?;
    let mut r = header("eval-rank", a.run.seed);
    a.sim.record(&mut r);
    r.config("verifier", a.verifier.display());
    r.config("k", a.k);
    r.config("episodes", a.episodes);
    let base = evaluate_policy(&cfg, &PolicySpec::Base, &Models::default(), a.episodes, a.run.seed)?;
    let best = rank_order_eval(&cfg, &verifier, a.k, RankMode::Best, a.episodes, a.run.seed)?;
    let worst = rank_order_eval(&cfg, &verifier, a.k, RankMode::Worst, a.episodes, a.run.seed)?;
    r.add_policy("base_", &base, false);
    r.add_policy("best_", &best, false);
    r.add_policy("worst_", &worst, false);
    r.metric("best_over_base_substeps", best.mean_substeps_all / base.mean_substeps_all);
    r.metric("worst_over_base_substeps", worst.mean_substeps_all / base.mean_substeps_all);
    Ok(r)
}

fn sweep(a: &SweepArgs) -> CliResult {
    let cfg = checked_config(&a.sim)?;
    let mut r = header("sweep", a.run.seed);
    a.sim.record(&mut r);
    match a.over {
        SweepOver::NumCandidates => {
            let values = if a.values.is_empty() { vec![4, 8, 16, 32] } else { a.values.clone() };
            r.config("over", "num-candidates");
            r.config("values", format!("{values:?}"));
            r.config("episodes", a.episodes);
            let specs = values
                .iter()
                .map(|&v| a.policy.spec_with_candidates(v))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let (vae, verifier) = a.policy.load_models(&specs[0], cfg.chunk_horizon)?;
            let vae = match (vae, &a.policy.vae) {
                (None, Some(p)) if specs.iter().any(PolicySpec::needs_vae) => Some(load_vae(p, cfg.chunk_horizon)?),
                (None, None) if specs.iter().any(PolicySpec::needs_vae) => return Err(missing_flag(&specs[0], "--vae").into()),
                (v, _) => v,
            };
            a.policy.record(&specs[0], &mut r);
            let models = Models {
                vae: vae.as_ref(),
                verifier: verifier.as_ref(),
            };
            let mut table = String::from("candidates  success  substeps\n");
            for (v, spec) in values.iter().zip(&specs) {
                let rep = evaluate_policy(&cfg, spec, &models, a.episodes, a.run.seed)?;
                r.metric(&format!("candidates{v}_success_rate"), rep.success_rate);
                r.metric(&format!("candidates{v}_mean_substeps"), rep.mean_substeps_success);
                writeln!(table, "{v:>10}  {:>7.3}  {:>8.1}", rep.success_rate, rep.mean_substeps_success).unwrap();
            }
            r.comment(&table);
        }
        SweepOver::LatentDim => {
            let values = if a.values.is_empty() { vec![2, 4, 6, 12] } else { a.values.clone() };
            let path = a
                .data
                .as_ref()
                .ok_or_else(|| CliError::Usage("latent-dim sweeps need --data".into()))?;
            r.config("over", "latent-dim");
            r.config("values", format!("{values:?}"));
            r.config("data", path.display());
            r.config("steps", a.steps);
            let data = read_dataset(path, cfg.chunk_horizon)?;
            let (train, held) = split_heldout(data, 0.1)?;
            let chunks = aligned_chunks(&train, cfg.chunk_horizon);
            let held_chunks = aligned_chunks(&held, cfg.chunk_horizon);
            let mut table = String::from("latent  heldout_rms  mmd_gamma2\n");
            for &d in &values {
                if d == 0 {
                    return Err(CliError::Usage("latent sizes must be positive".into()));
                }
                let tc = VaeTrainConfig {
                    latent_dim: d,
                    steps: a.steps,
                    seed: a.run.seed,
                    ..VaeTrainConfig::default()
                };
                let (vae, log) = train_vae(&chunks, &held_chunks, &tc)?;
                let rms = log.heldout_rms.unwrap_or(f64::NAN);
                let m = mmd_protocol(
                    &vae,
                    &cfg,
                    &MmdConfig {
                        gammas: vec![2.0],
                        seed: a.run.seed,
                        ..MmdConfig::default()
                    },
                )?;
                r.metric(&format!("latent{d}_heldout_rms"), rms);
                r.metric(&format!("latent{d}_mmd_gamma2"), m.median_posterior[0]);
                writeln!(table, "{d:>6}  {rms:>11.5}  {:>10.4}", m.median_posterior[0]).unwrap();
            }
            r.comment(&table);
        }
    }
    Ok(r)
}
