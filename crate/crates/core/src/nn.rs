//! Small dense feedforward networks with an exact backward pass.
//!
//! Every trainable model in the crate is a fixed composition of [`Mlp`]s.
//! Forward passes record a [`Tape`] of pre/post-activation values, and
//! [`Mlp::backward`] replays it to produce parameter gradients plus the
//! gradient with respect to the network input, so models can chain nets
//! (decoder into encoder, head into backbone) by hand.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn slope(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// One affine layer. `weights` is row-major with shape `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v))
            .collect()
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.inputs == other.inputs && self.outputs == other.outputs
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<Dense>,
}

/// Activation record of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `inputs[j]` is the vector fed into layer `j`.
    inputs: Vec<Vec<f64>>,
    /// `pre[j]` is layer `j`'s output before its activation.
    pre: Vec<Vec<f64>>,
    /// `post[j]` is layer `j`'s output after its activation.
    post: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradients laid out exactly like the parameters of the [`Mlp`] they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.values_mut().zip(b.values()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for x in layer.values_mut() {
                *x *= factor;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.values())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: MlpGrads,
    pub input_grad: Vec<f64>,
}

impl Mlp {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero-free biases drawn the same way.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        let mut net = Mlp::zeros(sizes, activation);
        for layer in &mut net.layers {
            let s = 1.0 / (layer.inputs as f64).sqrt();
            for v in layer.values_mut() {
                *v = rng.random_range(-s..=s);
            }
        }
        net
    }

    pub fn seeded(sizes: &[usize], activation: Activation, seed: u64) -> Self {
        Mlp::new(sizes, activation, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "an Mlp needs at least an input and an output size");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Mlp {
            sizes: sizes.to_vec(),
            activation,
            layers,
        }
    }

    /// Rebuilds a network from explicit layers, checking that consecutive shapes chain.
    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Rejected("network without layers".into()));
        }
        let mut sizes = vec![layers[0].inputs];
        for l in &layers {
            if l.inputs != *sizes.last().unwrap()
                || l.weights.len() != l.inputs * l.outputs
                || l.bias.len() != l.outputs
                || l.outputs == 0
            {
                return Err(Error::Rejected("layer shapes do not chain".into()));
            }
            sizes.push(l.outputs);
        }
        Ok(Mlp {
            sizes,
            activation,
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    pub fn param_mut(&mut self, index: usize) -> &mut f64 {
        self.layers
            .iter_mut()
            .flat_map(|l| l.values_mut())
            .nth(index)
            .expect("parameter index out of range")
    }

    fn layer_activation(&self, j: usize) -> Activation {
        if j + 1 == self.layers.len() {
            Activation::Identity
        } else {
            self.activation
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::InputDim {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.check_input(input)?;
        let n = self.layers.len();
        let mut tape = Tape {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
        };
        let mut x = input.to_vec();
        for (j, layer) in self.layers.iter().enumerate() {
            let pre = layer.affine(&x);
            let act = self.layer_activation(j);
            let post: Vec<f64> = pre.iter().map(|&v| act.apply(v)).collect();
            tape.inputs.push(std::mem::replace(&mut x, post.clone()));
            tape.pre.push(pre);
            tape.post.push(post);
        }
        Ok((x, tape))
    }

    /// Forward pass without recording a tape. Bit-identical to [`Mlp::forward`].
    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for (j, layer) in self.layers.iter().enumerate() {
            let act = self.layer_activation(j);
            x = layer.affine(&x).into_iter().map(|v| act.apply(v)).collect();
        }
        Ok(x)
    }

    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<Backprop> {
        let n = self.layers.len();
        if tape.pre.len() != n
            || tape
                .pre
                .iter()
                .zip(&tape.inputs)
                .zip(&self.layers)
                .any(|((p, i), l)| p.len() != l.outputs || i.len() != l.inputs)
        {
            return Err(Error::StaleTape);
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::InputDim {
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut upstream = output_grad.to_vec();
        for j in (0..n).rev() {
            let layer = &self.layers[j];
            let act = self.layer_activation(j);
            let delta: Vec<f64> = upstream
                .iter()
                .zip(&tape.pre[j])
                .zip(&tape.post[j])
                .map(|((g, &x), &y)| g * act.slope(x, y))
                .collect();
            let input = &tape.inputs[j];
            let g = &mut grads.layers[j];
            for (r, d) in delta.iter().enumerate() {
                g.bias[r] = *d;
                let row = &mut g.weights[r * layer.inputs..(r + 1) * layer.inputs];
                for (w, x) in row.iter_mut().zip(input) {
                    *w = d * x;
                }
            }
            let mut down = vec![0.0; layer.inputs];
            for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                for (acc, w) in down.iter_mut().zip(row) {
                    *acc += w * d;
                }
            }
            upstream = down;
        }
        Ok(Backprop {
            grads,
            input_grad: upstream,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Adam moments for a fixed list of networks, updated together.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<MlpGrads>,
    second_moment: Vec<MlpGrads>,
}

impl AdamState {
    pub fn new(config: AdamConfig, nets: &[&Mlp]) -> Self {
        AdamState {
            config,
            step_count: 0,
            first_moment: nets.iter().map(|n| MlpGrads::zeros_like(n)).collect(),
            second_moment: nets.iter().map(|n| MlpGrads::zeros_like(n)).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, nets: &mut [&mut Mlp], grads: &[&MlpGrads]) -> Result<()> {
        if nets.len() != self.first_moment.len() || grads.len() != nets.len() {
            return Err(Error::Rejected("Adam state tracks a different set of networks".into()));
        }
        for (i, (net, g)) in nets.iter().zip(grads).enumerate() {
            if net.layers.len() != g.layers.len()
                || net.layers.iter().zip(&g.layers).any(|(a, b)| !a.same_shape(b))
                || !net.layers.iter().zip(&self.first_moment[i].layers).all(|(a, b)| a.same_shape(b))
            {
                return Err(Error::Rejected(format!("gradient shape mismatch for net {i}")));
            }
            if let Some(layer) = g.layers.iter().position(|l| l.values().any(|v| !v.is_finite())) {
                return Err(Error::GradientDivergence { net: i, layer });
            }
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, net) in nets.iter_mut().enumerate() {
            let layers = net
                .layers
                .iter_mut()
                .zip(&grads[i].layers)
                .zip(self.first_moment[i].layers.iter_mut())
                .zip(self.second_moment[i].layers.iter_mut());
            for (((p, g), m), v) in layers {
                let it = p
                    .values_mut()
                    .zip(g.values())
                    .zip(m.values_mut())
                    .zip(v.values_mut());
                for (((p, &g), m), v) in it {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}

/// Scalar losses over a network output, with the gradient they induce on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Sum of outputs.
    Identity,
    Mse,
    L1,
}

impl Loss {
    pub fn eval(self, output: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
        let n = output.len() as f64;
        match self {
            Loss::Identity => (output.iter().sum(), vec![1.0; output.len()]),
            Loss::Mse => {
                let loss = output.iter().zip(target).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / n;
                let grad = output.iter().zip(target).map(|(o, t)| 2.0 * (o - t) / n).collect();
                (loss, grad)
            }
            Loss::L1 => {
                let loss = output.iter().zip(target).map(|(o, t)| (o - t).abs()).sum::<f64>() / n;
                let grad = output.iter().zip(target).map(|(o, t)| l1_subgradient(o - t) / n).collect();
                (loss, grad)
            }
        }
    }
}

/// Subgradient of `|r|`, taken as 0 at the kink.
pub fn l1_subgradient(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Relative error between an analytic and a numeric derivative.
///
/// The denominator is floored so that derivatives that are zero in exact
/// arithmetic compare on an absolute scale instead of blowing up.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / (analytic.abs() + numeric.abs()).max(REL_ERR_FLOOR)
}

pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Max relative error between `analytic` and central differences of `loss`
/// over every parameter of `params`, where `set` writes parameter `i`.
pub fn finite_difference_max_rel_err<P: Clone>(
    params: &P,
    count: usize,
    analytic: &[f64],
    h: f64,
    set: impl Fn(&mut P, usize, f64),
    get: impl Fn(&P, usize) -> f64,
    loss: impl Fn(&P) -> f64,
) -> f64 {
    assert_eq!(analytic.len(), count);
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for i in 0..count {
        let orig = get(&probe, i);
        set(&mut probe, i, orig + h);
        let plus = loss(&probe);
        set(&mut probe, i, orig - h);
        let minus = loss(&probe);
        set(&mut probe, i, orig);
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub trials: usize,
    pub max_rel_err: f64,
}

/// Draws `trials` seeded (net, input, target) triples with the given layer
/// sizes and compares analytic gradients of `loss` to central differences.
pub fn grad_check(
    sizes: &[usize],
    activation: Activation,
    loss: Loss,
    trials: usize,
    h: f64,
    seed: u64,
) -> GradCheckReport {
    assert!(trials >= 1, "grad_check needs at least one trial");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let net = Mlp::new(sizes, activation, &mut rng);
        let input: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target = l1_safe_target(&net, &input, &mut rng);
        worst = worst.max(check_net(&net, &input, &target, loss, h));
    }
    GradCheckReport {
        trials,
        max_rel_err: worst,
    }
}

/// Max relative gradient error for one fixed (net, input, target).
pub fn check_net(net: &Mlp, input: &[f64], target: &[f64], loss: Loss, h: f64) -> f64 {
    let (out, tape) = net.forward(input).expect("input matches net");
    let (_, out_grad) = loss.eval(&out, target);
    let analytic = net.backward(&tape, &out_grad).expect("fresh tape").grads.flat();
    finite_difference_max_rel_err(
        net,
        net.param_count(),
        &analytic,
        h,
        |n, i, v| *n.param_mut(i) = v,
        |n, i| n.flat_params()[i],
        |n| loss.eval(&n.infer(input).unwrap(), target).0,
    )
}

// Targets at least 0.25 away from the output so that no central difference
// straddles the L1 kink.
fn l1_safe_target(net: &Mlp, input: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let out = net.infer(input).unwrap();
    out.iter()
        .map(|o| {
            let offset = rng.random_range(0.25..1.0);
            if rng.random_bool(0.5) {
                o + offset
            } else {
                o - offset
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2], Activation::Tanh);
        let (out, _) = net.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = Dense::zeros(3, 3);
        for i in 0..3 {
            layer.weights[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_layers(vec![layer], Activation::Identity).unwrap();
        let x = [0.25, -1.5, 7.0];
        assert_eq!(net.infer(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn two_layer_tanh_matches_hand_evaluation() {
        let net = Mlp::seeded(&[2, 3, 1], Activation::Tanh, 42);
        let x = [0.5, -0.5];
        let l0 = &net.layers()[0];
        let l1 = &net.layers()[1];
        let mut hidden = [0.0; 3];
        for (r, h) in hidden.iter_mut().enumerate() {
            let z = l0.weights[r * 2] * x[0] + l0.weights[r * 2 + 1] * x[1] + l0.bias[r];
            *h = z.tanh();
        }
        let expected = l1.bias[0] + (0..3).map(|r| l1.weights[r] * hidden[r]).sum::<f64>();
        let got = net.infer(&x).unwrap()[0];
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn forward_and_infer_agree_bitwise() {
        let net = Mlp::seeded(&[4, 7, 7, 3], Activation::Relu, 3);
        let x = [0.1, 0.2, -0.3, 0.9];
        let (a, _) = net.forward(&x).unwrap();
        assert_eq!(a, net.infer(&x).unwrap());
        assert_eq!(a, net.forward(&x).unwrap().0);
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let net = Mlp::zeros(&[3, 2], Activation::Tanh);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::InputDim { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let a = Mlp::seeded(&[3, 4, 2], Activation::Tanh, 1);
        let b = Mlp::seeded(&[3, 5, 2], Activation::Tanh, 1);
        let (_, tape) = a.forward(&[0.0, 1.0, 2.0]).unwrap();
        assert!(matches!(b.backward(&tape, &[1.0, 1.0]), Err(Error::StaleTape)));
    }

    #[test]
    fn zero_output_grad_gives_zero_param_grads() {
        let net = Mlp::seeded(&[3, 4, 2], Activation::Tanh, 9);
        let (_, tape) = net.forward(&[0.3, 0.1, -0.2]).unwrap();
        let bp = net.backward(&tape, &[0.0, 0.0]).unwrap();
        assert_eq!(bp.grads.max_abs(), 0.0);
        assert!(bp.input_grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let net = Mlp::seeded(&[3, 2], Activation::Tanh, 5);
        let x = [0.5, -1.0, 2.0];
        let g = [0.3, -0.7];
        let (_, tape) = net.forward(&x).unwrap();
        let bp = net.backward(&tape, &g).unwrap();
        let layer = &bp.grads.layers[0];
        for r in 0..2 {
            assert_eq!(layer.bias[r], g[r]);
            for c in 0..3 {
                assert_eq!(layer.weights[r * 3 + c], g[r] * x[c]);
            }
        }
    }

    #[test]
    fn random_small_net_matches_finite_differences() {
        let report = grad_check(&[3, 4, 2], Activation::Tanh, Loss::Mse, 5, 1e-3, 77);
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn identity_loss_on_zero_net_is_exact() {
        let net = Mlp::zeros(&[3, 4, 2], Activation::Tanh);
        let err = check_net(&net, &[0.1, 0.2, 0.3], &[0.0, 0.0], Loss::Identity, 1e-3);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn relu_gradients_away_from_kinks() {
        let report = grad_check(&[3, 6, 2], Activation::Relu, Loss::L1, 10, 1e-6, 4);
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut layer = Dense::zeros(1, 1);
        layer.weights[0] = 1.0;
        let mut net = Mlp::from_layers(vec![layer], Activation::Identity).unwrap();
        let mut grads = MlpGrads::zeros_like(&net);
        grads.layers[0].weights[0] = 1.0;
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &[&net]);
        adam.step(&mut [&mut net], &[&grads]).unwrap();
        let w = net.layers()[0].weights[0];
        assert!((w - 0.9).abs() < 1e-6, "{w}");
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn adam_with_zero_grads_is_noop() {
        let mut net = Mlp::seeded(&[2, 3, 1], Activation::Tanh, 8);
        let before = net.clone();
        let grads = MlpGrads::zeros_like(&net);
        let mut adam = AdamState::new(AdamConfig::default(), &[&net]);
        for _ in 0..50 {
            adam.step(&mut [&mut net], &[&grads]).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(adam.step_count(), 50);
    }

    #[test]
    fn adam_is_deterministic() {
        let net = Mlp::seeded(&[2, 3, 1], Activation::Tanh, 8);
        let (_, tape) = net.forward(&[0.4, -0.1]).unwrap();
        let grads = net.backward(&tape, &[0.5]).unwrap().grads;
        let run = || {
            let mut n = net.clone();
            let mut adam = AdamState::new(AdamConfig::default(), &[&n]);
            adam.step(&mut [&mut n], &[&grads]).unwrap();
            adam.step(&mut [&mut n], &[&grads]).unwrap();
            n
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_the_layer() {
        let mut net = Mlp::seeded(&[2, 3, 1], Activation::Tanh, 8);
        let before = net.clone();
        let mut grads = MlpGrads::zeros_like(&net);
        grads.layers[1].bias[0] = f64::NAN;
        let mut adam = AdamState::new(AdamConfig::default(), &[&net]);
        let err = adam.step(&mut [&mut net], &[&grads]).unwrap_err();
        assert!(matches!(err, Error::GradientDivergence { net: 0, layer: 1 }));
        assert_eq!(net, before);
        assert_eq!(adam.step_count(), 0);
    }
}
