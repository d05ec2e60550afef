//! Deterministic 2-D tabletop with a gripper, two objects and a container.
//!
//! Substep order: apply the grip command (closing next to a standing object
//! grasps it, opening drops a held object at the gripper), move toward the
//! absolute target with displacement clamped to `v_max`, knock down any
//! standing object the closed, empty gripper passed within `knock_radius`
//! of, then test success.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::traj::{ActionChunk, SubstepAction, Task, DEFAULT_HORIZON};

pub type Point = [f64; 2];

pub const DEFAULT_V_MAX: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub horizon: usize,
    pub chunk_horizon: usize,
    pub v_max: f64,
    pub grasp_radius: f64,
    pub place_radius: f64,
    pub knock_radius: f64,
    pub reach_radius: f64,
    pub noise_std: f64,
    pub distractor_prob: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            horizon: 120,
            chunk_horizon: DEFAULT_HORIZON,
            v_max: DEFAULT_V_MAX,
            grasp_radius: 0.03,
            place_radius: 0.04,
            knock_radius: 0.03,
            reach_radius: 0.03,
            noise_std: 0.05,
            distractor_prob: 0.4,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_horizon == 0 || !self.horizon.is_multiple_of(self.chunk_horizon) {
            return Err(Error::Rejected(format!(
                "horizon {} is not a multiple of chunk horizon {}",
                self.horizon, self.chunk_horizon
            )));
        }
        if !(0.0..=1.0).contains(&self.distractor_prob) || self.noise_std < 0.0 || !(self.v_max > 0.0) {
            return Err(Error::Rejected("invalid noise, distractor or speed setting".into()));
        }
        Ok(())
    }

    /// Degenerate base policy that reproduces the expert.
    pub fn noiseless(self) -> Self {
        EpisodeConfig {
            noise_std: 0.0,
            distractor_prob: 0.0,
            ..self
        }
    }
}

/// Minimum separation between gripper, objects and container at reset.
pub const MIN_SEPARATION: f64 = 0.15;
/// Reset positions are drawn from `[MARGIN, 1 - MARGIN]^2`.
pub const MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub gripper: Point,
    pub gripper_closed: bool,
    pub holding: Option<usize>,
    pub objects: [Point; 2],
    pub object_down: [bool; 2],
    pub container: Point,
    pub task: Task,
    pub target_object: usize,
    pub substep_count: usize,
}

pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_dist(a: Point, b: Point, p: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(a, p);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist([a[0] + t * ab[0], a[1] + t * ab[1]], p)
}

/// Point reached from `from` moving toward `to` by at most `v_max`.
pub fn advance(from: Point, to: Point, v_max: f64) -> Point {
    let d = [to[0] - from[0], to[1] - from[1]];
    let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let p = if n <= v_max {
        to
    } else {
        let s = v_max / n;
        [from[0] + d[0] * s, from[1] + d[1] * s]
    };
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
}

pub fn reset(cfg: &EpisodeConfig, seed: u64) -> EnvState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = loop {
        let pts: Vec<Point> = (0..4)
            .map(|_| {
                [
                    rng.random_range(MARGIN..1.0 - MARGIN),
                    rng.random_range(MARGIN..1.0 - MARGIN),
                ]
            })
            .collect();
        let separated = (0..4).all(|i| (i + 1..4).all(|j| dist(pts[i], pts[j]) >= MIN_SEPARATION));
        if separated {
            break pts;
        }
    };
    let task = Task::ALL[rng.random_range(0..3)];
    let target_object = rng.random_range(0..2);
    let _ = cfg;
    EnvState {
        gripper: pts[0],
        gripper_closed: false,
        holding: None,
        objects: [pts[1], pts[2]],
        object_down: [false, false],
        container: pts[3],
        task,
        target_object,
        substep_count: 0,
    }
}

impl EnvState {
    pub fn is_success(&self, cfg: &EpisodeConfig) -> bool {
        let target = self.objects[self.target_object];
        match self.task {
            Task::Reach => dist(self.gripper, target) <= cfg.reach_radius,
            Task::PickPlace => {
                self.holding != Some(self.target_object)
                    && dist(target, self.container) <= cfg.place_radius
            }
            Task::Knock => self.object_down[self.target_object],
        }
    }

    /// Executes one substep and reports success afterwards.
    pub fn substep(&mut self, action: &SubstepAction, cfg: &EpisodeConfig) -> bool {
        let close = action.closed();
        if close && !self.gripper_closed {
            let nearest = (0..2)
                .filter(|&o| !self.object_down[o] && dist(self.gripper, self.objects[o]) <= cfg.grasp_radius)
                .min_by(|&a, &b| {
                    dist(self.gripper, self.objects[a]).total_cmp(&dist(self.gripper, self.objects[b]))
                });
            self.holding = nearest;
        } else if !close && self.gripper_closed {
            if let Some(o) = self.holding.take() {
                self.objects[o] = self.gripper;
            }
        }
        self.gripper_closed = close;

        let from = self.gripper;
        self.gripper = advance(from, [action.target_x, action.target_y], cfg.v_max);
        if let Some(o) = self.holding {
            self.objects[o] = self.gripper;
        }
        if self.gripper_closed && self.holding.is_none() {
            for o in 0..2 {
                if !self.object_down[o] && segment_dist(from, self.gripper, self.objects[o]) <= cfg.knock_radius {
                    self.object_down[o] = true;
                }
            }
        }
        self.substep_count += 1;
        self.is_success(cfg)
    }
}

/// Runs the chunk substep by substep, stopping at the first success.
pub fn step_chunk(state: &EnvState, chunk: &ActionChunk, cfg: &EpisodeConfig) -> Result<(EnvState, bool)> {
    if chunk.horizon() != cfg.chunk_horizon {
        return Err(Error::InputDim {
            expected: cfg.chunk_horizon,
            got: chunk.horizon(),
        });
    }
    let mut next = state.clone();
    for a in chunk.substeps() {
        if next.substep(a, cfg) {
            return Ok((next, true));
        }
    }
    Ok((next, false))
}

/// Straight-line chunk toward `goal` at full speed, holding `grip`.
/// Fraction of the remaining distance the expert covers per substep, below the speed cap.
pub const APPROACH_GAIN: f64 = 0.4;

/// Saturated proportional approach: each target advances
/// `min(v_max, APPROACH_GAIN * remaining)` toward `goal`.
fn line_chunk(start: Point, goal: Point, grip: f64, cfg: &EpisodeConfig) -> ActionChunk {
    let mut pos = start;
    ActionChunk::new(
        (0..cfg.chunk_horizon)
            .map(|_| {
                let step = (APPROACH_GAIN * dist(pos, goal)).min(cfg.v_max);
                pos = advance(pos, goal, step);
                SubstepAction::new(pos[0], pos[1], grip)
            })
            .collect(),
    )
}

/// Waypoint controller that treats `object` as the one to act on.
///
/// One phase per chunk: approach with the gripper open, close and carry to
/// the container, then open in place. Knock closes the gripper and drives
/// through the object; Reach drives onto it open.
pub fn plan_for(state: &EnvState, object: usize, cfg: &EpisodeConfig) -> ActionChunk {
    let g = state.gripper;
    let grip_now = if state.gripper_closed { 1.0 } else { 0.0 };
    if state.is_success(cfg) {
        return line_chunk(g, g, grip_now, cfg);
    }
    let obj = state.objects[object];
    let (goal, grip) = match state.task {
        Task::Reach => (obj, 0.0),
        Task::Knock => (obj, 1.0),
        Task::PickPlace => match state.holding {
            Some(o) if o == object => {
                if dist(g, state.container) <= cfg.place_radius {
                    (g, 0.0)
                } else {
                    (state.container, 1.0)
                }
            }
            Some(_) => (g, 0.0),
            None => {
                let graspable = !state.gripper_closed
                    && !state.object_down[object]
                    && dist(g, obj) <= cfg.grasp_radius;
                if graspable {
                    (state.container, 1.0)
                } else {
                    (obj, 0.0)
                }
            }
        },
    };
    line_chunk(g, goal, grip, cfg)
}

pub fn expert_chunk(state: &EnvState, cfg: &EpisodeConfig) -> ActionChunk {
    plan_for(state, state.target_object, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    Expert,
    Distractor,
}

/// Stochastic stand-in for a generalist policy: the expert chunk, or with
/// probability `distractor_prob` the plan for the other object, plus
/// independent Gaussian noise on every coordinate.
pub fn base_policy_sample_with_mode(
    state: &EnvState,
    cfg: &EpisodeConfig,
    rng: &mut impl Rng,
) -> (ActionChunk, PolicyMode) {
    let distract = rng.random::<f64>() < cfg.distractor_prob;
    let (clean, mode) = if distract {
        (plan_for(state, 1 - state.target_object, cfg), PolicyMode::Distractor)
    } else {
        (expert_chunk(state, cfg), PolicyMode::Expert)
    };
    if cfg.noise_std == 0.0 {
        return (clean, mode);
    }
    let noise = Normal::new(0.0, cfg.noise_std).expect("finite noise std");
    let flat: Vec<f64> = clean.flatten().into_iter().map(|v| v + noise.sample(rng)).collect();
    (ActionChunk::from_flat(&flat).expect("finite chunk"), mode)
}

pub fn base_policy_sample(state: &EnvState, cfg: &EpisodeConfig, rng: &mut impl Rng) -> ActionChunk {
    base_policy_sample_with_mode(state, cfg, rng).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> EpisodeConfig {
        EpisodeConfig::default()
    }

    #[test]
    fn reset_is_deterministic() {
        assert_eq!(reset(&cfg(), 5), reset(&cfg(), 5));
        assert_ne!(reset(&cfg(), 5), reset(&cfg(), 6));
        assert_eq!(reset(&cfg(), 5).substep_count, 0);
    }

    #[test]
    fn resets_respect_separation() {
        for seed in 0..10_000 {
            let s = reset(&cfg(), seed);
            let pts = [s.gripper, s.objects[0], s.objects[1], s.container];
            for i in 0..4 {
                for j in i + 1..4 {
                    assert!(dist(pts[i], pts[j]) >= MIN_SEPARATION, "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn stationary_chunk_is_a_fixed_point() {
        let s = reset(&cfg(), 1);
        let chunk = line_chunk(s.gripper, s.gripper, 0.0, &cfg());
        let (next, success) = step_chunk(&s, &chunk, &cfg()).unwrap();
        assert!(!success);
        assert_eq!(next.substep_count, 8);
        assert_eq!(EnvState { substep_count: 0, ..next }, s);
    }

    #[test]
    fn displacement_is_clamped() {
        let mut s = reset(&cfg(), 1);
        s.gripper = [0.1, 0.1];
        s.substep(&SubstepAction::new(0.9, 0.1, 0.0), &cfg());
        assert!((s.gripper[0] - 0.18).abs() < 1e-12);
        assert_eq!(s.gripper[1], 0.1);
    }

    #[test]
    fn reach_success_boundary_sweep() {
        let c = cfg();
        let mut s = reset(&c, 2);
        s.task = Task::Reach;
        s.target_object = 0;
        s.objects[0] = [0.5, 0.5];
        for k in 0..=200 {
            let x = 0.4 + k as f64 * 0.001;
            s.gripper = [x, 0.5];
            let oracle = (x - 0.5).abs() <= 0.03;
            assert_eq!(s.is_success(&c), oracle, "x = {x}");
        }
    }

    #[test]
    fn wrong_chunk_length_rejected() {
        let s = reset(&cfg(), 1);
        let chunk = ActionChunk::new(vec![SubstepAction::new(0.5, 0.5, 0.0); 3]);
        assert!(step_chunk(&s, &chunk, &cfg()).is_err());
    }

    fn run_expert(seed: u64, c: &EpisodeConfig) -> (bool, usize) {
        let mut s = reset(c, seed);
        while s.substep_count < c.horizon {
            let (n, ok) = step_chunk(&s, &expert_chunk(&s, c), c).unwrap();
            s = n;
            if ok {
                return (true, s.substep_count);
            }
        }
        (false, s.substep_count)
    }

    #[test]
    fn expert_solves_every_episode() {
        let c = cfg();
        for seed in 0..500 {
            let (ok, used) = run_expert(seed, &c);
            assert!(ok, "seed {seed} used {used}");
        }
    }

    #[test]
    fn expert_holds_position_after_success() {
        let c = cfg();
        let mut s = reset(&c, 3);
        s.task = Task::Reach;
        s.gripper = s.objects[s.target_object];
        assert!(s.is_success(&c));
        let chunk = expert_chunk(&s, &c);
        assert!(chunk
            .substeps()
            .iter()
            .all(|a| a.target_x == s.gripper[0] && a.target_y == s.gripper[1]));
        assert_eq!(expert_chunk(&s, &c), chunk);
    }

    #[test]
    fn degenerate_base_policy_is_expert() {
        let c = cfg().noiseless();
        let s = reset(&c, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(base_policy_sample(&s, &c, &mut rng), expert_chunk(&s, &c));
    }

    #[test]
    fn grasp_carry_release() {
        let c = cfg();
        let mut s = reset(&c, 9);
        s.task = Task::PickPlace;
        s.gripper = s.objects[s.target_object];
        s.substep(&SubstepAction::new(s.gripper[0], s.gripper[1], 1.0), &c);
        assert_eq!(s.holding, Some(s.target_object));
        let to = s.container;
        for _ in 0..30 {
            s.substep(&SubstepAction::new(to[0], to[1], 1.0), &c);
        }
        assert_eq!(s.objects[s.target_object], s.gripper);
        assert!(!s.is_success(&c));
        assert!(s.substep(&SubstepAction::new(to[0], to[1], 0.0), &c));
    }

    #[test]
    fn closed_gripper_knocks_in_passing() {
        let c = cfg();
        let mut s = reset(&c, 9);
        s.task = Task::Knock;
        s.objects[s.target_object] = [0.5, 0.52];
        s.gripper = [0.46, 0.5];
        s.gripper_closed = true;
        assert!(s.substep(&SubstepAction::new(0.54, 0.5, 1.0), &c));
    }
}
