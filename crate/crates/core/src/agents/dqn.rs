//! Deep Q-learning with a target network and prioritized replay.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{clip_grad_norm, Adam, ForwardCache, Mlp};
use super::per::{Experience, PrioritizedBuffer};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub buffer_size: usize,
    pub batch_size: usize,
    /// Transitions stored before the first gradient step.
    pub learning_starts: usize,
    pub learning_rate: f64,
    /// Gradient steps between target-network updates.
    pub target_update_interval: u64,
    pub tau: f64,
    pub gamma: f64,
    pub per_alpha: f64,
    pub per_beta: f64,
    pub per_beta_increment: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of training episodes over which epsilon decays linearly.
    pub exploration_fraction: f64,
    pub max_grad_norm: f64,
    pub hidden_sizes: Vec<usize>,
    pub reward_scale: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            buffer_size: 1900,
            batch_size: 19,
            learning_starts: 57,
            learning_rate: 1e-4,
            target_update_interval: 95,
            tau: 1.0,
            gamma: 0.99,
            per_alpha: 0.6,
            per_beta: 0.4,
            per_beta_increment: 0.001,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            exploration_fraction: 0.5,
            max_grad_norm: 10.0,
            hidden_sizes: vec![64, 64],
            reward_scale: 1e-3,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_starts > self.buffer_size {
            return Err(Error::config("dqn.learning_starts must not exceed dqn.buffer_size"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("dqn.tau must lie in (0, 1]"));
        }
        if !(self.per_alpha >= 0.0) || !(self.per_beta >= 0.0) {
            return Err(Error::config("dqn PER exponents must be non-negative"));
        }
        if self.batch_size == 0 || self.buffer_size == 0 || self.target_update_interval == 0 {
            return Err(Error::config("dqn sizes and intervals must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.learning_rate > 0.0) || !(self.reward_scale > 0.0) {
            return Err(Error::config("dqn gamma, learning rate and reward scale out of range"));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over the first
    /// `exploration_fraction` of `total` episodes.
    pub fn epsilon(&self, episode: usize, total: usize) -> f64 {
        let horizon = self.exploration_fraction * total as f64;
        let frac = if horizon > 0.0 { (episode as f64 / horizon).min(1.0) } else { 1.0 };
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnAgent {
    pub config: DqnConfig,
    pub online: Mlp,
    pub target: Mlp,
    opt: Adam,
    grad_steps: u64,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, n_actions: usize, config: DqnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![obs_dim];
        sizes.extend(&config.hidden_sizes);
        sizes.push(n_actions);
        let online = Mlp::new(&sizes, 1.0, rng)?;
        Ok(Self {
            opt: Adam::new(online.n_params(), config.learning_rate),
            target: online.clone(),
            online,
            config,
            grad_steps: 0,
        })
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn q_values(&self, obs: &[f64]) -> Vec<f64> {
        self.online.forward(obs)
    }

    pub fn greedy(&self, obs: &[f64]) -> usize {
        let q = self.q_values(obs);
        let mut best = 0;
        for (i, v) in q.iter().enumerate() {
            if *v > q[best] {
                best = i;
            }
        }
        best
    }

    pub fn act_epsilon<R: Rng + ?Sized>(&self, obs: &[f64], epsilon: f64, rng: &mut R) -> usize {
        if rng.random::<f64>() < epsilon {
            rng.random_range(0..self.online.output_dim())
        } else {
            self.greedy(obs)
        }
    }

    pub fn new_buffer(&self) -> Result<PrioritizedBuffer> {
        PrioritizedBuffer::new(
            self.config.buffer_size,
            self.config.per_alpha,
            self.config.per_beta,
            self.config.per_beta_increment,
        )
    }

    /// Importance-weighted squared TD loss over a batch, its gradient, and the TD errors.
    pub fn loss_and_grad(&self, batch: &[&Experience], weights: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let b = batch.len() as f64;
        let mut grad = vec![0.0; self.online.n_params()];
        let mut td = Vec::with_capacity(batch.len());
        let mut loss = 0.0;
        let mut cache = ForwardCache::default();
        for (e, w) in batch.iter().zip(weights) {
            let next_max = if e.done {
                0.0
            } else {
                self.target.forward(&e.next_obs).into_iter().fold(f64::MIN, f64::max)
            };
            let y = e.reward + self.config.gamma * next_max;
            self.online.forward_cached(&e.obs, &mut cache);
            let q = cache.output()[e.action];
            let d = q - y;
            td.push(d);
            loss += w * d * d / b;
            let mut g_out = vec![0.0; self.online.output_dim()];
            g_out[e.action] = 2.0 * w * d / b;
            self.online.backward(&cache, &g_out, &mut grad);
        }
        (loss, grad, td)
    }

    /// One prioritized gradient step; refreshes priorities and the target network.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &mut PrioritizedBuffer, rng: &mut R) -> Result<Vec<f64>> {
        if buffer.len() < self.config.learning_starts.max(1) {
            return Err(Error::Protocol(format!(
                "replay holds {} transitions, {} required before learning",
                buffer.len(),
                self.config.learning_starts
            )));
        }
        let sample = buffer.sample(self.config.batch_size, rng)?;
        let batch: Vec<&Experience> = sample.indices.iter().map(|&i| buffer.get(i)).collect();
        let (loss, mut grad, td) = self.loss_and_grad(&batch, &sample.weights);
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite DQN loss after {} steps", self.grad_steps)));
        }
        clip_grad_norm(&mut [&mut grad], self.config.max_grad_norm);
        self.opt.step(self.online.params_mut(), &grad);
        buffer.update_priorities(&sample.indices, &td);
        self.grad_steps += 1;
        if self.grad_steps % self.config.target_update_interval == 0 {
            let tau = self.config.tau;
            for (t, o) in self.target.params_mut().iter_mut().zip(self.online.params()) {
                *t = if tau >= 1.0 { *o } else { tau * o + (1.0 - tau) * *t };
            }
        }
        Ok(td)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn filled(agent: &DqnAgent, n: usize) -> PrioritizedBuffer {
        let mut b = agent.new_buffer().unwrap();
        for i in 0..n {
            let x = i as f64 / n as f64;
            b.push(Experience {
                obs: vec![x, 1.0 - x],
                action: i % 3,
                reward: x,
                next_obs: vec![1.0 - x, x],
                done: i % 7 == 0,
            });
        }
        b
    }

    #[test]
    fn target_syncs_only_on_interval() {
        let cfg = DqnConfig {
            target_update_interval: 5,
            learning_starts: 10,
            hidden_sizes: vec![8],
            learning_rate: 1e-2,
            ..DqnConfig::default()
        };
        let mut rng = substream(1, Stream::Init);
        let mut agent = DqnAgent::new(2, 3, cfg, &mut rng).unwrap();
        let mut buf = filled(&agent, 40);
        for _ in 0..23 {
            agent.update(&mut buf, &mut rng).unwrap();
            let same = agent.online == agent.target;
            assert_eq!(same, agent.grad_steps() % 5 == 0, "step {}", agent.grad_steps());
        }
    }

    #[test]
    fn update_before_learning_starts_is_protocol_error() {
        let mut rng = substream(1, Stream::Init);
        let mut agent = DqnAgent::new(2, 3, DqnConfig::default(), &mut rng).unwrap();
        let mut buf = filled(&agent, 10);
        assert!(matches!(agent.update(&mut buf, &mut rng), Err(Error::Protocol(_))));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let cfg = DqnConfig {
            hidden_sizes: vec![5],
            ..DqnConfig::default()
        };
        let mut rng = substream(2, Stream::Init);
        let agent = DqnAgent::new(2, 3, cfg, &mut rng).unwrap();
        let buf = filled(&agent, 12);
        let batch: Vec<&Experience> = (0..12).map(|i| buf.get(i)).collect();
        let w: Vec<f64> = (0..12).map(|i| 0.5 + 0.04 * i as f64).collect();
        let (_, g, _) = agent.loss_and_grad(&batch, &w);
        let h = 1e-6;
        for i in 0..agent.online.n_params() {
            let mut p = agent.clone();
            p.online.params_mut()[i] += h;
            let mut m = agent.clone();
            m.online.params_mut()[i] -= h;
            let fd = (p.loss_and_grad(&batch, &w).0 - m.loss_and_grad(&batch, &w).0) / (2.0 * h);
            let d = (fd - g[i]).abs();
            assert!(d < 1e-8 || d / fd.abs().max(g[i].abs()) < 1e-4, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn epsilon_schedule() {
        let c = DqnConfig::default();
        assert_eq!(c.epsilon(0, 100), 1.0);
        assert!((c.epsilon(25, 100) - 0.525).abs() < 1e-12);
        assert!((c.epsilon(50, 100) - 0.05).abs() < 1e-12);
        assert!((c.epsilon(90, 100) - 0.05).abs() < 1e-12);
        let bad = DqnConfig {
            learning_starts: 5000,
            ..DqnConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
