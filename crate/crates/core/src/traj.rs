//! Trajectories, progress labels and verifier training pairs.
//!
//! Steps are indexed from 0 internally; step `i` carries progress
//! `(i + 1) / t`. The dataset file numbers steps from 1, so its `STEP i`
//! line carries progress `i / t`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::verifier::{StateEncoding, STATE_DIM};

pub const DEFAULT_HORIZON: usize = 8;
pub const DATA_HEADER: &str = "TAPSAMPLE-DATA v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Reach,
    PickPlace,
    Knock,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Reach, Task::PickPlace, Task::Knock];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Task> {
        Task::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Reach => "reach",
            Task::PickPlace => "pick_place",
            Task::Knock => "knock",
        }
    }
}

/// One substep command: an absolute end-effector target plus the gripper channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstepAction {
    pub target_x: f64,
    pub target_y: f64,
    pub grip: f64,
}

impl SubstepAction {
    /// Clamps every component to `[0, 1]`.
    pub fn new(target_x: f64, target_y: f64, grip: f64) -> Self {
        debug_assert!(
            target_x.is_finite() && target_y.is_finite() && grip.is_finite(),
            "non-finite substep action"
        );
        SubstepAction {
            target_x: target_x.clamp(0.0, 1.0),
            target_y: target_y.clamp(0.0, 1.0),
            grip: grip.clamp(0.0, 1.0),
        }
    }

    pub fn closed(&self) -> bool {
        self.grip > 0.5
    }
}

/// A fixed-horizon sequence of substep commands.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    substeps: Vec<SubstepAction>,
}

impl ActionChunk {
    pub fn new(substeps: Vec<SubstepAction>) -> Self {
        ActionChunk { substeps }
    }

    /// Builds a chunk from the substep-major `(x, y, grip)` layout, clamping to `[0, 1]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if !flat.len().is_multiple_of(3) || flat.is_empty() {
            return Err(Error::Rejected(format!(
                "flattened chunk length {} is not a positive multiple of 3",
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Rejected("non-finite chunk component".into()));
        }
        Ok(ActionChunk {
            substeps: flat
                .chunks_exact(3)
                .map(|c| SubstepAction::new(c[0], c[1], c[2]))
                .collect(),
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.substeps
            .iter()
            .flat_map(|s| [s.target_x, s.target_y, s.grip])
            .collect()
    }

    pub fn horizon(&self) -> usize {
        self.substeps.len()
    }

    pub fn substeps(&self) -> &[SubstepAction] {
        &self.substeps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: StateEncoding,
    pub action: SubstepAction,
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub traj_id: u64,
    pub task: Task,
    pub target_object: usize,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Gripper pose recorded in the state of step `i`.
    pub fn pose(&self, i: usize) -> (f64, f64) {
        self.steps[i].state.gripper()
    }

    /// The demonstrated actions `a_i .. a_{i+k-1}`.
    pub fn forward_chunk(&self, i: usize, k: usize) -> Result<ActionChunk> {
        if i + k > self.len() {
            return Err(Error::Rejected(format!(
                "forward chunk [{i}, {}) runs past trajectory end {}",
                i + k,
                self.len()
            )));
        }
        Ok(ActionChunk::new(
            self.steps[i..i + k].iter().map(|s| s.action).collect(),
        ))
    }
}

/// Attaches linear progress `(i + 1) / t` to a raw demonstration.
pub fn assign_progress(
    traj_id: u64,
    task: Task,
    target_object: usize,
    raw: Vec<(StateEncoding, SubstepAction)>,
    horizon: usize,
) -> Result<Trajectory> {
    let t = raw.len();
    if t < horizon || t == 0 {
        return Err(Error::TrajectoryTooShort { len: t, horizon });
    }
    let steps = raw
        .into_iter()
        .enumerate()
        .map(|(i, (state, action))| Step {
            state,
            action,
            progress: (i + 1) as f64 / t as f64,
        })
        .collect();
    Ok(Trajectory {
        traj_id,
        task,
        target_object,
        steps,
    })
}

/// Time-reversed chunk from step `i`: substep `j` (1-based) targets the pose
/// recorded at step `i - j`, with that step's gripper state.
pub fn reverse_chunk(traj: &Trajectory, i: usize, k: usize) -> Result<ActionChunk> {
    if i < k || i >= traj.len() {
        return Err(Error::InsufficientHistory { index: i, k });
    }
    Ok(ActionChunk::new(
        (1..=k)
            .map(|j| {
                let state = &traj.steps[i - j].state;
                let (x, y) = state.gripper();
                SubstepAction::new(x, y, state.gripper_closed())
            })
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressSample {
    pub task: Task,
    pub target_object: usize,
    pub state: StateEncoding,
    pub chunk: ActionChunk,
    pub label: f64,
}

pub fn forward_sample(traj: &Trajectory, i: usize, k: usize) -> Result<ProgressSample> {
    let chunk = traj.forward_chunk(i, k)?;
    Ok(ProgressSample {
        task: traj.task,
        target_object: traj.target_object,
        state: traj.steps[i].state,
        chunk,
        label: k as f64 / traj.len() as f64,
    })
}

pub fn reversed_sample(traj: &Trajectory, i: usize, k: usize) -> Result<ProgressSample> {
    let chunk = reverse_chunk(traj, i, k)?;
    Ok(ProgressSample {
        task: traj.task,
        target_object: traj.target_object,
        state: traj.steps[i].state,
        chunk,
        label: -(k as f64) / traj.len() as f64,
    })
}

/// Balanced forward/reversed samples. Per trajectory, `n = min(#forward
/// indices, #reversed indices, cap)` indices of each kind are drawn without
/// replacement; indices lacking `k` earlier steps yield no reversed sample.
pub fn build_training_pairs(
    dataset: &[Trajectory],
    k: usize,
    seed: u64,
    cap_per_traj: Option<usize>,
) -> Result<Vec<ProgressSample>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = Vec::new();
    for traj in dataset {
        let t = traj.len();
        if t < k {
            return Err(Error::TrajectoryTooShort { len: t, horizon: k });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, traj.traj_id));
        let mut fwd: Vec<usize> = (0..=t - k).collect();
        let mut rev: Vec<usize> = (k..t).collect();
        fwd.shuffle(&mut rng);
        rev.shuffle(&mut rng);
        let n = fwd.len().min(rev.len()).min(cap_per_traj.unwrap_or(usize::MAX));
        for (&i, &r) in fwd[..n].iter().zip(&rev[..n]) {
            out.push(forward_sample(traj, i, k)?);
            out.push(reversed_sample(traj, r, k)?);
        }
    }
    Ok(out)
}

/// Decision-aligned expert chunks `a_{jH} .. a_{jH+H-1}` that fit inside a trajectory.
pub fn aligned_chunks(dataset: &[Trajectory], horizon: usize) -> Vec<ActionChunk> {
    dataset
        .iter()
        .flat_map(|traj| {
            (0..traj.len())
                .step_by(horizon)
                .filter(move |i| i + horizon <= traj.len())
                .map(move |i| traj.forward_chunk(i, horizon).unwrap())
        })
        .collect()
}

fn push_float(line: &mut String, v: f64) {
    // 17 significant digits round-trip every f64 exactly.
    write!(line, " {v:.16e}").unwrap();
}

pub fn format_dataset(dataset: &[Trajectory]) -> String {
    let mut out = String::from(DATA_HEADER);
    out.push('\n');
    for traj in dataset {
        writeln!(
            out,
            "TRAJ {} {} {} {}",
            traj.traj_id,
            traj.task.code(),
            traj.target_object,
            traj.len()
        )
        .unwrap();
        for (i, step) in traj.steps.iter().enumerate() {
            let mut line = format!("STEP {}", i + 1);
            for v in step.state.values() {
                push_float(&mut line, *v);
            }
            let a = step.action;
            for v in [a.target_x, a.target_y, a.grip] {
                push_float(&mut line, v);
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &[Trajectory]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_dataset(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>, horizon: usize) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path, horizon)
}

pub fn parse_dataset(text: &str, path: &Path, horizon: usize) -> Result<Vec<Trajectory>> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
    match lines.next() {
        Some((_, h)) if h == DATA_HEADER => {}
        Some((_, h)) if h.starts_with("TAPSAMPLE-DATA ") => {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: h.to_string(),
            })
        }
        Some((n, _)) => return Err(perr(n, "missing TAPSAMPLE-DATA header".into())),
        None => return Err(perr(1, "empty file".into())),
    }
    let mut dataset = Vec::new();
    while let Some((n, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "TRAJ" {
            return Err(perr(n, format!("expected `TRAJ <id> <task> <target> <t>`, got `{line}`")));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|_| perr(n, format!("bad integer `{s}`")));
        let traj_id = int(fields[1])?;
        let task = Task::from_code(int(fields[2])? as usize)
            .ok_or_else(|| perr(n, format!("unknown task code {}", fields[2])))?;
        let target = int(fields[3])? as usize;
        if target > 1 {
            return Err(perr(n, format!("target object {target} out of range")));
        }
        let t = int(fields[4])? as usize;
        let mut raw = Vec::with_capacity(t);
        for expected in 1..=t {
            let (sn, sline) = lines
                .next()
                .ok_or_else(|| perr(n, format!("truncated: trajectory {traj_id} declares {t} steps")))?;
            let f: Vec<&str> = sline.split_whitespace().collect();
            if f.len() != 2 + STATE_DIM + 3 || f[0] != "STEP" {
                return Err(perr(sn, format!("expected STEP line with {} floats", STATE_DIM + 3)));
            }
            if f[1].parse::<usize>().ok() != Some(expected) {
                return Err(perr(sn, format!("expected step index {expected}, got `{}`", f[1])));
            }
            let vals = f[2..]
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| perr(sn, format!("bad float `{s}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut state = [0.0; STATE_DIM];
            state.copy_from_slice(&vals[..STATE_DIM]);
            let a = &vals[STATE_DIM..];
            raw.push((
                StateEncoding::from_array(state),
                SubstepAction::new(a[0], a[1], a[2]),
            ));
        }
        dataset.push(
            assign_progress(traj_id, task, target, raw, horizon).map_err(|e| perr(n, e.to_string()))?,
        );
    }
    Ok(dataset)
}
