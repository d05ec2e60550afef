//! Task-progress verifier: predicts the progress change a candidate chunk
//! would cause from the current state and instruction.
//!
//! The state/instruction backbone runs once per decision step; only the
//! small head runs per candidate, on the shared feature vector.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::nn::{l1_subgradient, Activation, AdamConfig, AdamState, Mlp, MlpGrads};
use crate::seed::derive_seed;
use crate::sim::{advance, EnvState, DEFAULT_V_MAX};
use crate::traj::{ActionChunk, ProgressSample, Task};

pub const STATE_DIM: usize = 17;

/// Fixed 17-value state layout:
/// gripper x, y; closed; holding; object0 x, y; object1 x, y; object0 down;
/// object1 down; container x, y; task one-hot (3); target one-hot (2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEncoding([f64; STATE_DIM]);

impl StateEncoding {
    pub fn from_array(values: [f64; STATE_DIM]) -> Self {
        StateEncoding(values)
    }

    pub fn values(&self) -> &[f64; STATE_DIM] {
        &self.0
    }

    pub fn gripper(&self) -> (f64, f64) {
        (self.0[0], self.0[1])
    }

    pub fn gripper_closed(&self) -> f64 {
        self.0[2]
    }

    pub fn holding(&self) -> bool {
        self.0[3] > 0.5
    }

    pub fn task(&self) -> Option<Task> {
        (0..3).find(|&i| self.0[12 + i] > 0.5).and_then(Task::from_code)
    }

    pub fn target_object(&self) -> usize {
        if self.0[16] > 0.5 {
            1
        } else {
            0
        }
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn encode_state(state: &EnvState) -> StateEncoding {
    let mut v = [0.0; STATE_DIM];
    v[0] = state.gripper[0];
    v[1] = state.gripper[1];
    v[2] = flag(state.gripper_closed);
    v[3] = flag(state.holding.is_some());
    v[4] = state.objects[0][0];
    v[5] = state.objects[0][1];
    v[6] = state.objects[1][0];
    v[7] = state.objects[1][1];
    v[8] = flag(state.object_down[0]);
    v[9] = flag(state.object_down[1]);
    v[10] = state.container[0];
    v[11] = state.container[1];
    v[12 + state.task.code()] = 1.0;
    v[15 + state.target_object] = 1.0;
    StateEncoding(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierArch {
    pub backbone_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub head_hidden: usize,
    /// Per-substep displacement cap used to turn targets into the path a chunk produces.
    pub speed_limit: f64,
}

impl Default for VerifierArch {
    fn default() -> Self {
        VerifierArch {
            backbone_hidden: vec![256, 256],
            feature_dim: 32,
            head_hidden: 32,
            speed_limit: DEFAULT_V_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verifier {
    backbone: Mlp,
    head: Mlp,
    horizon: usize,
    speed_limit: f64,
}

/// Per-candidate head features: the speed-limited gripper path the chunk
/// would produce, relative to the current gripper position, and the raw
/// grip channel, substep-major.
fn chunk_features(state: &StateEncoding, chunk: &ActionChunk, speed_limit: f64, out: &mut Vec<f64>) {
    let (gx, gy) = state.gripper();
    let mut pos = [gx, gy];
    for s in chunk.substeps() {
        pos = advance(pos, [s.target_x, s.target_y], speed_limit);
        out.extend([pos[0] - gx, pos[1] - gy, s.grip]);
    }
}

impl Verifier {
    pub fn new(horizon: usize, arch: &VerifierArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![STATE_DIM];
        sizes.extend(&arch.backbone_hidden);
        sizes.push(arch.feature_dim);
        let backbone = Mlp::new(&sizes, Activation::Tanh, &mut rng);
        let head = Mlp::new(
            &[arch.feature_dim + 3 * horizon, arch.head_hidden, 1],
            Activation::Tanh,
            &mut rng,
        );
        Verifier {
            backbone,
            head,
            horizon,
            speed_limit: arch.speed_limit,
        }
    }

    pub fn from_parts(backbone: Mlp, head: Mlp, horizon: usize, speed_limit: f64) -> Result<Self> {
        if !(speed_limit > 0.0 && speed_limit.is_finite()) {
            return Err(Error::Rejected(format!("speed limit {speed_limit} is not positive")));
        }
        if backbone.input_dim() != STATE_DIM
            || head.input_dim() != backbone.output_dim() + 3 * horizon
            || head.output_dim() != 1
        {
            return Err(Error::Rejected("verifier backbone/head sizes do not fit".into()));
        }
        Ok(Verifier {
            backbone,
            head,
            horizon,
            speed_limit,
        })
    }

    pub fn backbone(&self) -> &Mlp {
        &self.backbone
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Mlp {
        &mut self.head
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn speed_limit(&self) -> f64 {
        self.speed_limit
    }

    pub fn features(&self, state: &StateEncoding) -> Vec<f64> {
        self.backbone.infer(state.values()).expect("state encoding has fixed width")
    }

    fn head_input(&self, features: &[f64], state: &StateEncoding, chunk: &ActionChunk) -> Result<Vec<f64>> {
        if chunk.horizon() != self.horizon {
            return Err(Error::InputDim {
                expected: 3 * self.horizon,
                got: 3 * chunk.horizon(),
            });
        }
        let mut input = Vec::with_capacity(self.head.input_dim());
        input.extend_from_slice(features);
        chunk_features(state, chunk, self.speed_limit, &mut input);
        Ok(input)
    }

    pub fn score_with_features(&self, features: &[f64], state: &StateEncoding, chunk: &ActionChunk) -> Result<f64> {
        let input = self.head_input(features, state, chunk)?;
        Ok(self.head.infer(&input)?[0])
    }

    pub fn score(&self, state: &StateEncoding, chunk: &ActionChunk) -> Result<f64> {
        self.score_with_features(&self.features(state), state, chunk)
    }

    /// Scores every candidate with one backbone evaluation.
    pub fn score_batch(&self, state: &StateEncoding, candidates: &[ActionChunk]) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(Error::Rejected("no candidates to score".into()));
        }
        let features = self.features(state);
        candidates
            .iter()
            .map(|c| self.score_with_features(&features, state, c))
            .collect()
    }

    /// Mean L1 loss over `batch` and its gradients for (backbone, head).
    pub fn l1_loss(&self, batch: &[&ProgressSample]) -> Result<(f64, MlpGrads, MlpGrads)> {
        let mut gb = MlpGrads::zeros_like(&self.backbone);
        let mut gh = MlpGrads::zeros_like(&self.head);
        let mut total = 0.0;
        let n = batch.len() as f64;
        for s in batch {
            let (features, btape) = self.backbone.forward(s.state.values())?;
            let input = self.head_input(&features, &s.state, &s.chunk)?;
            let (out, htape) = self.head.forward(&input)?;
            let r = out[0] - s.label;
            total += r.abs();
            let hb = self.head.backward(&htape, &[l1_subgradient(r) / n])?;
            gh.accumulate(&hb.grads);
            let fb = self
                .backbone
                .backward(&btape, &hb.input_grad[..features.len()])?;
            gb.accumulate(&fb.grads);
        }
        Ok((total / n, gb, gh))
    }

    pub fn mean_abs_error(&self, samples: &[ProgressSample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        samples
            .iter()
            .map(|s| (self.score(&s.state, &s.chunk).unwrap() - s.label).abs())
            .sum::<f64>()
            / samples.len() as f64
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.put_mlp("verifier.backbone.", &self.backbone);
        c.put_mlp("verifier.head.", &self.head);
        c.push(Tensor::scalar("verifier.horizon", self.horizon as f32));
        c.push(Tensor::scalar("verifier.speed_limit", self.speed_limit as f32));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> std::result::Result<Self, String> {
        let backbone = c.get_mlp("verifier.backbone.")?;
        let head = c.get_mlp("verifier.head.")?;
        let horizon = c
            .scalar("verifier.horizon")
            .ok_or("missing tensor verifier.horizon")? as usize;
        let speed_limit = c
            .scalar("verifier.speed_limit")
            .ok_or("missing tensor verifier.speed_limit")? as f64;
        Verifier::from_parts(backbone, head, horizon, speed_limit).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub arch: VerifierArch,
    pub log_every: usize,
}

impl Default for VerifierTrainConfig {
    fn default() -> Self {
        VerifierTrainConfig {
            steps: 12_000,
            batch: 64,
            lr: 1e-3,
            seed: 0,
            arch: VerifierArch::default(),
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// `(step, training-batch loss)` every `log_every` steps.
    pub losses: Vec<(usize, f64)>,
    pub heldout_mae: Option<f64>,
}

/// Minimizes mean `|V(s, l, a) - dp|` with Adam over shuffled minibatches.
/// The learning rate decays linearly to 10% over the run.
pub fn train_verifier(
    samples: &[ProgressSample],
    heldout: &[ProgressSample],
    horizon: usize,
    config: &VerifierTrainConfig,
) -> Result<(Verifier, TrainLog)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = Verifier::new(horizon, &config.arch, derive_seed(config.seed, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), &[&model.backbone, &model.head]);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();
    let mut log = TrainLog::default();
    let batch = config.batch.max(1).min(samples.len());
    for step in 0..config.steps {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let picked: Vec<&ProgressSample> = order[cursor..cursor + batch].iter().map(|&i| &samples[i]).collect();
        cursor += batch;
        let (loss, gb, gh) = model.l1_loss(&picked)?;
        if !loss.is_finite() {
            return Err(Error::LossDivergence { step, loss });
        }
        if config.log_every > 0 && step % config.log_every == 0 {
            log.losses.push((step, loss));
        }
        adam.config.learning_rate = config.lr * (1.0 - 0.9 * step as f64 / config.steps as f64);
        let Verifier { backbone, head, .. } = &mut model;
        adam.step(&mut [backbone, head], &[&gb, &gh])?;
    }
    if !heldout.is_empty() {
        log.heldout_mae = Some(model.mean_abs_error(heldout));
    }
    Ok((model, log))
}
