//! Proximal policy optimization with a clipped surrogate and GAE.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nn::{clip_grad_norm, Adam, ForwardCache, Mlp};
use crate::env::{ActionSpec, AgentAction};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Transitions collected per update.
    pub n_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub n_epochs: usize,
    pub gamma: f64,
    pub clip_range: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden_sizes: Vec<usize>,
    /// Rewards are multiplied by this before advantage and value computation.
    pub reward_scale: f64,
    pub init_log_std: f64,
    pub normalize_advantage: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            n_steps: 190,
            batch_size: 19,
            learning_rate: 1e-4,
            n_epochs: 10,
            gamma: 0.99,
            clip_range: 0.2,
            gae_lambda: 0.95,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden_sizes: vec![64, 64],
            reward_scale: 1e-3,
            init_log_std: 0.0,
            normalize_advantage: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.n_steps == 0 || self.n_steps % self.batch_size != 0 {
            return Err(Error::config("ppo.n_steps must be a positive multiple of ppo.batch_size"));
        }
        if !(self.clip_range > 0.0) {
            return Err(Error::config("ppo.clip_range must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("ppo.gamma must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("ppo.gae_lambda must lie in [0, 1]"));
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) || !(self.reward_scale > 0.0) {
            return Err(Error::config("ppo learning rate, grad norm and reward scale must be positive"));
        }
        Ok(())
    }
}

/// Generalized advantage estimates and returns.
///
/// `dones[t]` marks that the episode ended after step `t`; `last_value` bootstraps
/// the step after the final one when it did not end an episode.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Shape(format!(
            "rewards {}, values {}, dones {} differ in length",
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * gae_lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// `min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_range: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_range, 1.0 + clip_range);
    (ratio * advantage).min(clipped * advantage)
}

/// `log(1 - tanh(u)^2)` without cancellation.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Output distribution of the actor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyHead {
    /// Diagonal Gaussian over pre-squash values `u`; the action is
    /// `low + (tanh(u) + 1) / 2 * (high - low)`.
    SquashedGaussian {
        low: Vec<f64>,
        high: Vec<f64>,
        log_std: Vec<f64>,
    },
    Categorical { n: usize },
}

/// Actor, critic and their optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoAgent {
    pub config: PpoConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    pub head: PolicyHead,
    opt_actor: Adam,
    opt_critic: Adam,
    opt_log_std: Adam,
}

/// A sampled action together with what the update needs to re-score it.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledAction {
    pub action: AgentAction,
    /// Pre-squash Gaussian sample, or the category index as a single value.
    pub raw: Vec<f64>,
    pub log_prob: f64,
}

/// One transition prepared for the update.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoSample {
    pub obs: Vec<f64>,
    pub raw: Vec<f64>,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Gradients of the minibatch loss.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoGrads {
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, spec: &ActionSpec, config: PpoConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (out, head) = match spec {
            ActionSpec::Continuous { low, high } => {
                if low.len() != high.len() || low.iter().zip(high).any(|(l, h)| !(h > l)) {
                    return Err(Error::config("continuous action bounds must satisfy low < high"));
                }
                (
                    low.len(),
                    PolicyHead::SquashedGaussian {
                        low: low.clone(),
                        high: high.clone(),
                        log_std: vec![config.init_log_std; low.len()],
                    },
                )
            }
            ActionSpec::Discrete { n } => (*n, PolicyHead::Categorical { n: *n }),
        };
        let mut sizes = vec![obs_dim];
        sizes.extend(&config.hidden_sizes);
        let actor = Mlp::new(&[sizes.clone(), vec![out]].concat(), 0.01, rng)?;
        let critic = Mlp::new(&[sizes, vec![1]].concat(), 1.0, rng)?;
        let n_std = match &head {
            PolicyHead::SquashedGaussian { log_std, .. } => log_std.len(),
            PolicyHead::Categorical { .. } => 0,
        };
        Ok(Self {
            opt_actor: Adam::new(actor.n_params(), config.learning_rate),
            opt_critic: Adam::new(critic.n_params(), config.learning_rate),
            opt_log_std: Adam::new(n_std, config.learning_rate),
            config,
            actor,
            critic,
            head,
        })
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.forward(obs)[0]
    }

    fn squash(low: &[f64], high: &[f64], u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(low.iter().zip(high))
            .map(|(u, (l, h))| (l + (u.tanh() + 1.0) * 0.5 * (h - l)).clamp(*l, *h))
            .collect()
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> SampledAction {
        let out = self.actor.forward(obs);
        match &self.head {
            PolicyHead::SquashedGaussian { low, high, log_std } => {
                let u: Vec<f64> = out
                    .iter()
                    .zip(log_std)
                    .map(|(m, ls)| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + ls.exp() * z
                    })
                    .collect();
                let log_prob = self.log_prob_from_output(&out, &u);
                SampledAction {
                    action: AgentAction::Continuous(Self::squash(low, high, &u)),
                    raw: u,
                    log_prob,
                }
            }
            PolicyHead::Categorical { .. } => {
                let p = Self::softmax(&out);
                let x: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = p.len() - 1;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi;
                    if x < acc {
                        k = i;
                        break;
                    }
                }
                SampledAction {
                    action: AgentAction::Discrete(k),
                    raw: vec![k as f64],
                    log_prob: p[k].ln(),
                }
            }
        }
    }

    /// Mode of the policy: squashed mean, or the most likely category.
    pub fn act_deterministic(&self, obs: &[f64]) -> AgentAction {
        let out = self.actor.forward(obs);
        match &self.head {
            PolicyHead::SquashedGaussian { low, high, .. } => AgentAction::Continuous(Self::squash(low, high, &out)),
            PolicyHead::Categorical { .. } => {
                let mut best = 0;
                for (i, v) in out.iter().enumerate() {
                    if *v > out[best] {
                        best = i;
                    }
                }
                AgentAction::Discrete(best)
            }
        }
    }

    /// Log-density of the squashed action, including the change-of-variables term.
    pub fn log_prob(&self, obs: &[f64], raw: &[f64]) -> f64 {
        let out = self.actor.forward(obs);
        self.log_prob_from_output(&out, raw)
    }

    fn log_prob_from_output(&self, out: &[f64], raw: &[f64]) -> f64 {
        match &self.head {
            PolicyHead::SquashedGaussian { low, high, log_std } => {
                let mut lp = 0.0;
                for k in 0..raw.len() {
                    let z = (raw[k] - out[k]) / log_std[k].exp();
                    lp += -0.5 * z * z - log_std[k] - 0.5 * LN_2PI;
                    lp -= (0.5 * (high[k] - low[k])).ln() + log_one_minus_tanh_sq(raw[k]);
                }
                lp
            }
            PolicyHead::Categorical { .. } => {
                let p = Self::softmax(out);
                p[raw[0] as usize].ln()
            }
        }
    }

    /// Minibatch loss `-surrogate + c_v * value_mse - c_e * entropy` and its gradients.
    /// Advantages are used as given.
    pub fn loss_and_grads(&self, batch: &[PpoSample]) -> (f64, PpoStats, PpoGrads) {
        let cfg = &self.config;
        let b = batch.len() as f64;
        let mut grads = PpoGrads {
            actor: vec![0.0; self.actor.n_params()],
            critic: vec![0.0; self.critic.n_params()],
            log_std: match &self.head {
                PolicyHead::SquashedGaussian { log_std, .. } => vec![0.0; log_std.len()],
                PolicyHead::Categorical { .. } => Vec::new(),
            },
        };
        let mut stats = PpoStats::default();
        let mut cache = ForwardCache::default();
        let mut vcache = ForwardCache::default();
        for s in batch {
            self.actor.forward_cached(&s.obs, &mut cache);
            let out = cache.output().to_vec();
            let new_lp = self.log_prob_from_output(&out, &s.raw);
            let log_ratio = new_lp - s.old_log_prob;
            let ratio = log_ratio.exp();
            let a = s.advantage;
            let surrogate = clipped_surrogate(ratio, a, cfg.clip_range);
            stats.policy_loss -= surrogate / b;
            stats.approx_kl += ((ratio - 1.0) - log_ratio) / b;
            if (ratio - 1.0).abs() > cfg.clip_range {
                stats.clip_fraction += 1.0 / b;
            }
            // d loss / d log pi
            let clipped = ratio.clamp(1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
            let g_lp = if ratio * a <= clipped * a { -ratio * a / b } else { 0.0 };

            let mut g_out = vec![0.0; out.len()];
            match &self.head {
                PolicyHead::SquashedGaussian { log_std, .. } => {
                    let mut entropy = 0.0;
                    for k in 0..out.len() {
                        let sd = log_std[k].exp();
                        let z = (s.raw[k] - out[k]) / sd;
                        g_out[k] = g_lp * z / sd;
                        grads.log_std[k] += g_lp * (z * z - 1.0) - cfg.entropy_coef / b;
                        entropy += log_std[k] + 0.5 + 0.5 * LN_2PI;
                    }
                    stats.entropy += entropy / b;
                }
                PolicyHead::Categorical { .. } => {
                    let p = Self::softmax(&out);
                    let logp: Vec<f64> = p.iter().map(|x| x.max(1e-300).ln()).collect();
                    let h: f64 = -p.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
                    let chosen = s.raw[0] as usize;
                    for k in 0..out.len() {
                        let ind = if k == chosen { 1.0 } else { 0.0 };
                        g_out[k] = g_lp * (ind - p[k]) + cfg.entropy_coef / b * p[k] * (logp[k] + h);
                    }
                    stats.entropy += h / b;
                }
            }
            self.actor.backward(&cache, &g_out, &mut grads.actor);

            self.critic.forward_cached(&s.obs, &mut vcache);
            let v = vcache.output()[0];
            let err = v - s.ret;
            stats.value_loss += err * err / b;
            self.critic.backward(&vcache, &[cfg.value_coef * 2.0 * err / b], &mut grads.critic);
        }
        let loss = stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
        (loss, stats, grads)
    }

    fn apply(&mut self, mut grads: PpoGrads) -> f64 {
        let norm = clip_grad_norm(
            &mut [&mut grads.actor, &mut grads.critic, &mut grads.log_std],
            self.config.max_grad_norm,
        );
        self.opt_actor.step(self.actor.params_mut(), &grads.actor);
        self.opt_critic.step(self.critic.params_mut(), &grads.critic);
        if let PolicyHead::SquashedGaussian { log_std, .. } = &mut self.head {
            self.opt_log_std.step(log_std, &grads.log_std);
        }
        norm
    }

    /// Runs `n_epochs` passes of shuffled minibatches over `samples`.
    pub fn update<R: Rng + ?Sized>(&mut self, samples: &[PpoSample], rng: &mut R) -> Result<PpoStats> {
        let bs = self.config.batch_size.min(samples.len()).max(1);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut total = PpoStats::default();
        let mut n_batches = 0.0;
        for _ in 0..self.config.n_epochs {
            order.shuffle(rng);
            for chunk in order.chunks(bs) {
                let mut batch: Vec<PpoSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
                if self.config.normalize_advantage && batch.len() > 1 {
                    let n = batch.len() as f64;
                    let mean = batch.iter().map(|s| s.advantage).sum::<f64>() / n;
                    let var = batch.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    let sd = var.sqrt() + 1e-8;
                    batch.iter_mut().for_each(|s| s.advantage = (s.advantage - mean) / sd);
                }
                let (loss, mut stats, grads) = self.loss_and_grads(&batch);
                if !loss.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite PPO loss (policy {}, value {}, entropy {})",
                        stats.policy_loss, stats.value_loss, stats.entropy
                    )));
                }
                stats.grad_norm = self.apply(grads);
                total.policy_loss += stats.policy_loss;
                total.value_loss += stats.value_loss;
                total.entropy += stats.entropy;
                total.approx_kl += stats.approx_kl;
                total.clip_fraction += stats.clip_fraction;
                total.grad_norm += stats.grad_norm;
                n_batches += 1.0;
            }
        }
        if n_batches > 0.0 {
            total.policy_loss /= n_batches;
            total.value_loss /= n_batches;
            total.entropy /= n_batches;
            total.approx_kl /= n_batches;
            total.clip_fraction /= n_batches;
            total.grad_norm /= n_batches;
        }
        Ok(total)
    }
}
