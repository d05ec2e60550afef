//! Closed-loop episodes: at every decision step obtain candidates according
//! to a [`PolicySpec`], pick one chunk, execute it, repeat until success or
//! the substep horizon.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::selector::{select_action, ScoredCandidates};
use crate::sim::{base_policy_sample, expert_chunk, reset, step_chunk, EnvState, EpisodeConfig};
use crate::traj::{assign_progress, ActionChunk, Task, Trajectory};
use crate::vae::{mix_posterior, ActionVae};
use crate::verifier::{encode_state, Verifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    Best,
    Worst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    /// The noiseless waypoint controller.
    Expert,
    /// One base-policy sample per decision.
    Base,
    /// `policy_samples` base samples, `posterior_samples` decoded from their
    /// mixed posterior, all scored, then thresholded and averaged.
    TapSample {
        policy_samples: usize,
        posterior_samples: usize,
        threshold: f64,
    },
    /// `k` base samples, execute the highest- or lowest-scoring one.
    Rank { mode: RankMode, k: usize },
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Expert => "expert",
            PolicySpec::Base => "base",
            PolicySpec::TapSample { .. } => "tapsample",
            PolicySpec::Rank { .. } => "rank",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicySpec::TapSample {
                policy_samples,
                threshold,
                ..
            } => {
                if policy_samples == 0 {
                    return Err(Error::Rejected("tapsample needs at least one policy sample".into()));
                }
                if threshold.is_nan() {
                    return Err(Error::Rejected("threshold is NaN".into()));
                }
            }
            PolicySpec::Rank { k: 0, .. } => {
                return Err(Error::Rejected("rank needs k >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn needs_vae(&self) -> bool {
        matches!(self, PolicySpec::TapSample { posterior_samples, .. } if *posterior_samples > 0)
    }

    pub fn needs_verifier(&self) -> bool {
        matches!(self, PolicySpec::TapSample { .. } | PolicySpec::Rank { .. })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Expert => write!(f, "expert"),
            PolicySpec::Base => write!(f, "base"),
            PolicySpec::TapSample {
                policy_samples,
                posterior_samples,
                threshold,
            } => write!(f, "tapsample:{policy_samples},{posterior_samples},{threshold}"),
            PolicySpec::Rank { mode, k } => {
                let m = match mode {
                    RankMode::Best => "best",
                    RankMode::Worst => "worst",
                };
                write!(f, "rank:{m},{k}")
            }
        }
    }
}

/// Parses `expert`, `base`, `tapsample:N,M,THETA` or `rank:best|worst,K`.
impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Rejected(format!("malformed policy spec `{s}`"));
        let (head, args) = s.split_once(':').unwrap_or((s, ""));
        let args: Vec<&str> = if args.is_empty() { vec![] } else { args.split(',').collect() };
        let spec = match (head, args.as_slice()) {
            ("expert", []) => PolicySpec::Expert,
            ("base", []) => PolicySpec::Base,
            ("tapsample", [n, m, t]) => PolicySpec::TapSample {
                policy_samples: n.parse().map_err(|_| bad())?,
                posterior_samples: m.parse().map_err(|_| bad())?,
                threshold: t.parse().map_err(|_| bad())?,
            },
            ("rank", [mode, k]) => PolicySpec::Rank {
                mode: match *mode {
                    "best" => RankMode::Best,
                    "worst" => RankMode::Worst,
                    _ => return Err(bad()),
                },
                k: k.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Models<'a> {
    pub vae: Option<&'a ActionVae>,
    pub verifier: Option<&'a Verifier>,
}

impl<'a> Models<'a> {
    pub fn new(vae: &'a ActionVae, verifier: &'a Verifier) -> Self {
        Models {
            vae: Some(vae),
            verifier: Some(verifier),
        }
    }

    pub fn check(&self, spec: &PolicySpec) -> Result<()> {
        if spec.needs_vae() && self.vae.is_none() {
            return Err(Error::MissingModel {
                policy: spec.name(),
                model: "VAE",
            });
        }
        if spec.needs_verifier() && self.verifier.is_none() {
            return Err(Error::MissingModel {
                policy: spec.name(),
                model: "verifier",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    /// Substep count when the decision was made.
    pub substep: usize,
    pub candidates: usize,
    pub retained: usize,
    pub used_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub seed: u64,
    pub task: Task,
    pub success: bool,
    pub substeps_used: usize,
    pub decisions: Vec<DecisionRecord>,
}

impl Episode {
    /// `EPISODE <seed> <task_code> <success:0|1> <substeps_used>`
    pub fn record_line(&self) -> String {
        format!(
            "EPISODE {} {} {} {}",
            self.seed,
            self.task.code(),
            u8::from(self.success),
            self.substeps_used
        )
    }
}

/// Policy randomness for one attempt at an episode. Attempt 0 is what a
/// single evaluation run uses.
pub fn policy_rng(episode_seed: u64, attempt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(episode_seed, attempt + 1))
}

/// Chooses the chunk to execute from `state`.
pub fn decide(
    state: &EnvState,
    cfg: &EpisodeConfig,
    spec: &PolicySpec,
    models: &Models<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<(ActionChunk, DecisionRecord)> {
    let mut record = DecisionRecord {
        substep: state.substep_count,
        candidates: 1,
        retained: 1,
        used_fallback: false,
    };
    let chunk = match *spec {
        PolicySpec::Expert => expert_chunk(state, cfg),
        PolicySpec::Base => base_policy_sample(state, cfg, rng),
        PolicySpec::TapSample {
            policy_samples,
            posterior_samples,
            threshold,
        } => {
            let verifier = models.verifier.ok_or(Error::MissingModel {
                policy: "tapsample",
                model: "verifier",
            })?;
            let mut pool: Vec<ActionChunk> = (0..policy_samples).map(|_| base_policy_sample(state, cfg, rng)).collect();
            if posterior_samples > 0 {
                let vae = models.vae.ok_or(Error::MissingModel {
                    policy: "tapsample",
                    model: "VAE",
                })?;
                let posteriors = pool.iter().map(|c| vae.encode(c)).collect::<Result<Vec<_>>>()?;
                let mix = mix_posterior(posteriors)?;
                pool.extend(vae.sample_candidates(&mix, posterior_samples, rng));
            }
            let scores = verifier.score_batch(&encode_state(state), &pool)?;
            record.candidates = pool.len();
            let (chunk, report) = select_action(&ScoredCandidates {
                candidates: pool,
                scores,
                threshold,
            })?;
            record.retained = report.retained_count;
            record.used_fallback = report.used_fallback;
            chunk
        }
        PolicySpec::Rank { mode, k } => {
            let verifier = models.verifier.ok_or(Error::MissingModel {
                policy: "rank",
                model: "verifier",
            })?;
            let mut pool: Vec<ActionChunk> = (0..k).map(|_| base_policy_sample(state, cfg, rng)).collect();
            let scores = verifier.score_batch(&encode_state(state), &pool)?;
            let mut pick = 0;
            for i in 1..k {
                let better = match mode {
                    RankMode::Best => scores[i] > scores[pick],
                    RankMode::Worst => scores[i] < scores[pick],
                };
                if better {
                    pick = i;
                }
            }
            record.candidates = k;
            pool.swap_remove(pick)
        }
    };
    Ok((chunk, record))
}

/// Runs one episode from the seeded reset; `hook` sees every decision.
pub fn rollout_episode(
    cfg: &EpisodeConfig,
    spec: &PolicySpec,
    models: &Models<'_>,
    episode_seed: u64,
    attempt: u64,
    mut hook: impl FnMut(&EnvState, &DecisionRecord),
) -> Result<Episode> {
    cfg.validate()?;
    spec.validate()?;
    models.check(spec)?;
    let mut state = reset(cfg, episode_seed);
    let mut rng = policy_rng(episode_seed, attempt);
    let mut decisions = Vec::new();
    let mut success = false;
    while state.substep_count < cfg.horizon {
        let (chunk, record) = decide(&state, cfg, spec, models, &mut rng)?;
        hook(&state, &record);
        decisions.push(record);
        let (next, ok) = step_chunk(&state, &chunk, cfg)?;
        state = next;
        if ok {
            success = true;
            break;
        }
    }
    Ok(Episode {
        seed: episode_seed,
        task: state.task,
        success,
        substeps_used: state.substep_count,
        decisions,
    })
}

/// Records noiseless expert demonstrations until `count` trajectories of at
/// least one chunk horizon exist. Episode `e` uses reset seed
/// `derive_seed(seed, e)` and becomes trajectory `e`; shorter episodes are skipped.
pub fn expert_trajectories(cfg: &EpisodeConfig, count: usize, seed: u64) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(count);
    let mut episode = 0u64;
    while out.len() < count {
        let mut state = reset(cfg, derive_seed(seed, episode));
        let mut raw = Vec::new();
        'episode: while state.substep_count < cfg.horizon {
            let chunk = expert_chunk(&state, cfg);
            for a in chunk.substeps() {
                raw.push((encode_state(&state), *a));
                if state.substep(a, cfg) {
                    break 'episode;
                }
            }
        }
        if raw.len() >= cfg.chunk_horizon && state.is_success(cfg) {
            out.push(assign_progress(episode, state.task, state.target_object, raw, cfg.chunk_horizon)?);
        }
        episode += 1;
    }
    Ok(out)
}
