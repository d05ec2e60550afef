//! Action VAE: compresses flattened action chunks into a diagonal Gaussian
//! posterior over a small latent, and expands a handful of policy samples
//! into many candidates through the uniform mixture of their posteriors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::nn::{finite_difference_max_rel_err, Activation, AdamConfig, AdamState, GradCheckReport, Mlp, MlpGrads};
use crate::seed::derive_seed;
use crate::traj::ActionChunk;

pub const DEFAULT_LATENT_DIM: usize = 6;
pub const DEFAULT_KL_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl GaussianPosterior {
    pub fn standard(dim: usize) -> Self {
        GaussianPosterior {
            mean: vec![0.0; dim],
            log_variance: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_variance.iter().map(|lv| lv.exp()).collect()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_variance)
            .map(|(m, lv)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + (0.5 * lv).exp() * eps
            })
            .collect()
    }

    pub fn kl_to_prior(&self) -> f64 {
        kl_to_standard_normal(&self.mean, &self.log_variance)
    }
}

/// `KL(N(mu, diag(exp(log_var))) || N(0, I))` in closed form.
pub fn kl_to_standard_normal(mean: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mean
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Equal-weight mixture of diagonal Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePosterior {
    components: Vec<GaussianPosterior>,
}

pub fn mix_posterior(posteriors: Vec<GaussianPosterior>) -> Result<MixturePosterior> {
    let first = posteriors.first().ok_or(Error::EmptyMixture)?;
    let d = first.dim();
    if posteriors.iter().any(|p| p.dim() != d || p.log_variance.len() != d) {
        return Err(Error::Rejected("mixture components differ in dimension".into()));
    }
    Ok(MixturePosterior {
        components: posteriors,
    })
}

impl MixturePosterior {
    pub fn components(&self) -> &[GaussianPosterior] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.components.len() as f64;
        (0..self.dim())
            .map(|j| self.components.iter().map(|c| c.mean[j]).sum::<f64>() / n)
            .collect()
    }

    /// Per-dimension `E[z_j^2] = (1/N) sum_i (sigma_ij^2 + mu_ij^2)`.
    pub fn second_moment(&self) -> Vec<f64> {
        let n = self.components.len() as f64;
        (0..self.dim())
            .map(|j| {
                self.components
                    .iter()
                    .map(|c| c.log_variance[j].exp() + c.mean[j] * c.mean[j])
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    /// Picks a component uniformly (no draw when there is only one), then samples it.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let c = if self.components.len() == 1 {
            &self.components[0]
        } else {
            &self.components[rng.random_range(0..self.components.len())]
        };
        c.sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionVae {
    encoder: Mlp,
    decoder: Mlp,
    latent_dim: usize,
    kl_weight: f64,
}

/// Loss terms and gradients for one chunk.
#[derive(Debug, Clone)]
pub struct VaeLoss {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub encoder_grads: MlpGrads,
    pub decoder_grads: MlpGrads,
}

impl ActionVae {
    /// Encoder `3H -> hidden -> 2d` (mean then log-variance), decoder `d -> hidden -> 3H`.
    pub fn new(chunk_dim: usize, latent_dim: usize, kl_weight: f64, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc = vec![chunk_dim];
        enc.extend(hidden);
        enc.push(2 * latent_dim);
        let mut dec = vec![latent_dim];
        dec.extend(hidden.iter().rev());
        dec.push(chunk_dim);
        ActionVae {
            encoder: Mlp::new(&enc, Activation::Tanh, &mut rng),
            decoder: Mlp::new(&dec, Activation::Tanh, &mut rng),
            latent_dim,
            kl_weight,
        }
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp, kl_weight: f64) -> Result<Self> {
        let d = decoder.input_dim();
        if encoder.output_dim() != 2 * d || encoder.input_dim() != decoder.output_dim() {
            return Err(Error::Rejected("encoder/decoder sizes do not fit".into()));
        }
        Ok(ActionVae {
            encoder,
            decoder,
            latent_dim: d,
            kl_weight,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn chunk_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn kl_weight(&self) -> f64 {
        self.kl_weight
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut Mlp {
        &mut self.encoder
    }

    pub fn decoder_mut(&mut self) -> &mut Mlp {
        &mut self.decoder
    }

    pub fn encode_flat(&self, flat: &[f64]) -> Result<GaussianPosterior> {
        let out = self.encoder.infer(flat)?;
        let (mean, log_variance) = out.split_at(self.latent_dim);
        Ok(GaussianPosterior {
            mean: mean.to_vec(),
            log_variance: log_variance.to_vec(),
        })
    }

    pub fn encode(&self, chunk: &ActionChunk) -> Result<GaussianPosterior> {
        self.encode_flat(&chunk.flatten())
    }

    /// Unclamped decoder output, as used inside the loss.
    pub fn decode_raw(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.infer(z)
    }

    /// Decoded chunk, clamped to `[0, 1]` for execution.
    pub fn decode(&self, z: &[f64]) -> Result<ActionChunk> {
        ActionChunk::from_flat(&self.decode_raw(z)?)
    }

    pub fn reconstruct(&self, chunk: &ActionChunk) -> Result<ActionChunk> {
        self.decode(&self.encode(chunk)?.mean)
    }

    /// Per-coordinate MSE of `D(mu + sigma * noise)` plus `kl_weight * KL`,
    /// with reparameterized gradients for both networks.
    pub fn loss(&self, chunk: &[f64], noise: &[f64]) -> Result<VaeLoss> {
        let d = self.latent_dim;
        if noise.len() != d {
            return Err(Error::InputDim {
                expected: d,
                got: noise.len(),
            });
        }
        let (enc_out, enc_tape) = self.encoder.forward(chunk)?;
        let (mean, log_var) = enc_out.split_at(d);
        let std: Vec<f64> = log_var.iter().map(|lv| (0.5 * lv).exp()).collect();
        let z: Vec<f64> = (0..d).map(|j| mean[j] + std[j] * noise[j]).collect();
        let (recon, dec_tape) = self.decoder.forward(&z)?;
        let n = chunk.len() as f64;
        let reconstruction = recon.iter().zip(chunk).map(|(r, x)| (r - x).powi(2)).sum::<f64>() / n;
        let kl = kl_to_standard_normal(mean, log_var);
        let loss = reconstruction + self.kl_weight * kl;
        if !loss.is_finite() {
            return Err(Error::LossDivergence { step: 0, loss });
        }
        let out_grad: Vec<f64> = recon.iter().zip(chunk).map(|(r, x)| 2.0 * (r - x) / n).collect();
        let dec = self.decoder.backward(&dec_tape, &out_grad)?;
        let dz = &dec.input_grad;
        let mut enc_grad = vec![0.0; 2 * d];
        for j in 0..d {
            enc_grad[j] = dz[j] + self.kl_weight * mean[j];
            enc_grad[d + j] =
                dz[j] * noise[j] * 0.5 * std[j] + self.kl_weight * 0.5 * (log_var[j].exp() - 1.0);
        }
        let enc = self.encoder.backward(&enc_tape, &enc_grad)?;
        Ok(VaeLoss {
            loss,
            reconstruction,
            kl,
            encoder_grads: enc.grads,
            decoder_grads: dec.grads,
        })
    }

    /// Draws `m` latents from `mix` and decodes each.
    pub fn sample_candidates(&self, mix: &MixturePosterior, m: usize, rng: &mut impl Rng) -> Vec<ActionChunk> {
        (0..m)
            .map(|_| self.decode(&mix.sample(rng)).expect("mixture matches latent dim"))
            .collect()
    }

    pub fn sample_candidates_seeded(&self, mix: &MixturePosterior, m: usize, seed: u64) -> Vec<ActionChunk> {
        self.sample_candidates(mix, m, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.put_mlp("vae.encoder.", &self.encoder);
        c.put_mlp("vae.decoder.", &self.decoder);
        c.push(Tensor::scalar("vae.latent_dim", self.latent_dim as f32));
        c.push(Tensor::scalar("vae.kl_weight", self.kl_weight as f32));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> std::result::Result<Self, String> {
        let encoder = c.get_mlp("vae.encoder.")?;
        let decoder = c.get_mlp("vae.decoder.")?;
        let d = c.scalar("vae.latent_dim").ok_or("missing tensor vae.latent_dim")? as usize;
        let kl = c.scalar("vae.kl_weight").ok_or("missing tensor vae.kl_weight")? as f64;
        let vae = ActionVae::from_parts(encoder, decoder, kl).map_err(|e| e.to_string())?;
        if vae.latent_dim != d {
            return Err(format!("vae.latent_dim {d} disagrees with decoder input {}", vae.latent_dim));
        }
        Ok(vae)
    }
}

/// Root mean squared per-coordinate error of `decode(encode(a).mean)` against `a`.
pub fn reconstruction_rms(vae: &ActionVae, chunks: &[ActionChunk]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in chunks {
        let flat = c.flatten();
        let z = vae.encode_flat(&flat).unwrap().mean;
        let r = vae.decode_raw(&z).unwrap();
        sum += r.iter().zip(&flat).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += flat.len();
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeTrainConfig {
    pub latent_dim: usize,
    pub kl_weight: f64,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub log_every: usize,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            latent_dim: DEFAULT_LATENT_DIM,
            kl_weight: DEFAULT_KL_WEIGHT,
            steps: 20_000,
            batch: 64,
            lr: 1e-3,
            seed: 0,
            hidden: vec![64, 64],
            log_every: 500,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VaeTrainLog {
    /// `(step, batch loss)` every `log_every` steps.
    pub losses: Vec<(usize, f64)>,
    pub heldout_rms: Option<f64>,
}

/// Adam on the ELBO over shuffled minibatches, fresh reparameterization noise
/// per example. The learning rate decays linearly to 10% over the run.
pub fn train_vae(
    chunks: &[ActionChunk],
    heldout: &[ActionChunk],
    config: &VaeTrainConfig,
) -> Result<(ActionVae, VaeTrainLog)> {
    let first = chunks.first().ok_or(Error::EmptyDataset)?;
    let dim = 3 * first.horizon();
    let mut vae = ActionVae::new(
        dim,
        config.latent_dim,
        config.kl_weight,
        &config.hidden,
        derive_seed(config.seed, 0),
    );
    let flats: Vec<Vec<f64>> = chunks.iter().map(ActionChunk::flatten).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), &[&vae.encoder, &vae.decoder]);
    let mut order: Vec<usize> = (0..flats.len()).collect();
    let mut cursor = order.len();
    let batch = config.batch.max(1).min(flats.len());
    let mut log = VaeTrainLog::default();
    for step in 0..config.steps {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let mut ge = MlpGrads::zeros_like(&vae.encoder);
        let mut gd = MlpGrads::zeros_like(&vae.decoder);
        let mut total = 0.0;
        for &i in &order[cursor..cursor + batch] {
            let noise: Vec<f64> = (0..config.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
            let l = vae.loss(&flats[i], &noise).map_err(|e| match e {
                Error::LossDivergence { loss, .. } => Error::LossDivergence { step, loss },
                other => other,
            })?;
            total += l.loss;
            ge.accumulate(&l.encoder_grads);
            gd.accumulate(&l.decoder_grads);
        }
        cursor += batch;
        let scale = 1.0 / batch as f64;
        ge.scale(scale);
        gd.scale(scale);
        if config.log_every > 0 && step % config.log_every == 0 {
            log.losses.push((step, total * scale));
        }
        adam.config.learning_rate = config.lr * (1.0 - 0.9 * step as f64 / config.steps as f64);
        let ActionVae { encoder, decoder, .. } = &mut vae;
        adam.step(&mut [encoder, decoder], &[&ge, &gd])?;
    }
    if !heldout.is_empty() {
        log.heldout_rms = Some(reconstruction_rms(&vae, heldout));
    }
    Ok((vae, log))
}

/// Finite-difference check of the ELBO gradients on `trials` random small
/// VAEs, with the reparameterization noise frozen per trial.
pub fn vae_grad_check(trials: usize, h: f64, seed: u64) -> GradCheckReport {
    assert!(trials >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let vae = ActionVae::new(6, 2, rng.random_range(0.01..1.0), &[5], derive_seed(seed, t as u64));
        let x: Vec<f64> = (0..6).map(|_| rng.random()).collect();
        let noise: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
        let l = vae.loss(&x, &noise).unwrap();
        let mut analytic = l.encoder_grads.flat();
        analytic.extend(l.decoder_grads.flat());
        let ne = vae.encoder.param_count();
        let total = ne + vae.decoder.param_count();
        let err = finite_difference_max_rel_err(
            &vae,
            total,
            &analytic,
            h,
            |v, i, val| {
                if i < ne {
                    *v.encoder.param_mut(i) = val
                } else {
                    *v.decoder.param_mut(i - ne) = val
                }
            },
            |v, i| {
                if i < ne {
                    v.encoder.flat_params()[i]
                } else {
                    v.decoder.flat_params()[i - ne]
                }
            },
            |v| v.loss(&x, &noise).unwrap().loss,
        );
        worst = worst.max(err);
    }
    GradCheckReport {
        trials,
        max_rel_err: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_vae() -> ActionVae {
        let mut v = ActionVae::new(6, 2, 1e-3, &[4], 0);
        for net in [&mut v.encoder, &mut v.decoder] {
            for l in net.layers_mut() {
                l.weights.iter_mut().for_each(|w| *w = 0.0);
                l.bias.iter_mut().for_each(|b| *b = 0.0);
            }
        }
        v
    }

    #[test]
    fn zero_encoder_gives_standard_normal() {
        let v = zero_vae();
        let p = v.encode_flat(&[0.3; 6]).unwrap();
        assert_eq!(p, GaussianPosterior::standard(2));
        assert_eq!(p.variance(), vec![1.0, 1.0]);
    }

    #[test]
    fn zero_decoder_outputs_its_bias() {
        let mut v = zero_vae();
        let bias = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        v.decoder.layers_mut().last_mut().unwrap().bias = bias.clone();
        assert_eq!(v.decode_raw(&[3.0, -1.0]).unwrap(), bias);
        assert_eq!(v.decode(&[3.0, -1.0]).unwrap().flatten(), bias);
    }

    #[test]
    fn encode_decode_are_deterministic() {
        let v = ActionVae::new(6, 2, 1e-3, &[4], 7);
        let x = [0.1, 0.2, 0.0, 0.5, 0.5, 1.0];
        assert_eq!(v.encode_flat(&x).unwrap(), v.encode_flat(&x).unwrap());
        assert_eq!(v.decode_raw(&[0.3, 0.1]).unwrap(), v.decode_raw(&[0.3, 0.1]).unwrap());
    }

    #[test]
    fn kl_closed_form_values() {
        assert_eq!(kl_to_standard_normal(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(kl_to_standard_normal(&[1.0], &[0.0]), 0.5);
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(m in proptest::collection::vec(-5.0f64..5.0, 1..6), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lv: Vec<f64> = m.iter().map(|_| rng.random_range(-4.0..4.0)).collect();
            prop_assert!(kl_to_standard_normal(&m, &lv) >= 0.0);
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let r = vae_grad_check(5, 1e-3, 3);
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }

    #[test]
    fn loss_rejects_wrong_noise_length() {
        let v = ActionVae::new(6, 2, 1e-3, &[4], 7);
        assert!(v.loss(&[0.0; 6], &[0.0; 3]).is_err());
    }

    #[test]
    fn empty_mixture_rejected() {
        assert!(matches!(mix_posterior(vec![]), Err(Error::EmptyMixture)));
    }

    #[test]
    fn symmetric_mixture_has_zero_mean() {
        let a = GaussianPosterior {
            mean: vec![0.7, -2.0],
            log_variance: vec![0.1, 0.1],
        };
        let b = GaussianPosterior {
            mean: vec![-0.7, 2.0],
            log_variance: vec![0.1, 0.1],
        };
        assert_eq!(mix_posterior(vec![a, b]).unwrap().mean(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_component_mixture_draws_like_its_gaussian() {
        let g = GaussianPosterior {
            mean: vec![0.2, -0.4, 1.0],
            log_variance: vec![-1.0, 0.0, 0.5],
        };
        let mix = mix_posterior(vec![g.clone()]).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(12);
        let mut r2 = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            assert_eq!(mix.sample(&mut r1), g.sample(&mut r2));
        }
    }

    #[test]
    fn mixture_second_moment_monte_carlo() {
        let mix = mix_posterior(vec![
            GaussianPosterior {
                mean: vec![1.0, 0.0],
                log_variance: vec![-1.0, 0.3],
            },
            GaussianPosterior {
                mean: vec![-0.5, 0.8],
                log_variance: vec![0.2, -2.0],
            },
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut m2 = [0.0; 2];
        for _ in 0..n {
            let z = mix.sample(&mut rng);
            m2[0] += z[0] * z[0];
            m2[1] += z[1] * z[1];
        }
        let analytic = mix.second_moment();
        for j in 0..2 {
            assert!((m2[j] / n as f64 - analytic[j]).abs() < 0.02);
        }
    }

    #[test]
    fn candidate_sampling_shapes_and_seeds() {
        let v = ActionVae::new(24, 6, 1e-3, &[8], 1);
        let mix = mix_posterior(vec![GaussianPosterior::standard(6); 3]).unwrap();
        assert!(v.sample_candidates_seeded(&mix, 0, 1).is_empty());
        let a = v.sample_candidates_seeded(&mix, 12, 9);
        assert_eq!(a.len(), 12);
        assert!(a.iter().all(|c| c.flatten().len() == 24));
        assert_eq!(a, v.sample_candidates_seeded(&mix, 12, 9));
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let chunks = vec![ActionChunk::from_flat(&[0.5; 24]).unwrap(); 4];
        let cfg = VaeTrainConfig {
            steps: 0,
            seed: 3,
            ..Default::default()
        };
        let (v, _) = train_vae(&chunks, &[], &cfg).unwrap();
        assert_eq!(v, ActionVae::new(24, 6, 1e-3, &[64, 64], derive_seed(3, 0)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let v = ActionVae::new(24, 6, 1e-3, &[16], 2);
        let c = v.to_checkpoint();
        let back = ActionVae::from_checkpoint(&c).unwrap();
        assert_eq!(back.latent_dim(), 6);
        assert_eq!(back.kl_weight(), 1e-3f32 as f64);
        assert!(c.tensors().iter().all(|t| t.name.starts_with("vae.")));
    }
}
