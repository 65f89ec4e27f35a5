//! Training loops, learning curves and checkpoints.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dqn::{DqnAgent, DqnConfig};
use super::per::{Experience, PrioritizedBuffer};
use super::ppo::{compute_gae, PolicyHead, PpoAgent, PpoConfig, PpoSample};
use crate::env::{ActionSpec, AgentAction, Environment};
use crate::error::{Error, Result};
use crate::interventions::ActionSpaceKind;
use crate::rng::{derive_seed, substream, Stream};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Ppo,
    Dqn,
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppo" => Ok(AgentKind::Ppo),
            "dqn" => Ok(AgentKind::Dqn),
            other => Err(Error::config(format!("unknown agent '{other}', expected ppo or dqn"))),
        }
    }
}

/// A trained (or initialized) learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedAgent {
    Ppo(PpoAgent),
    Dqn(DqnAgent),
}

impl TrainedAgent {
    /// Deterministic action: the policy mode for PPO, the greedy action for DQN.
    pub fn act(&self, obs: &[f64]) -> AgentAction {
        match self {
            TrainedAgent::Ppo(a) => a.act_deterministic(obs),
            TrainedAgent::Dqn(a) => AgentAction::Discrete(a.greedy(obs)),
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            TrainedAgent::Ppo(_) => AgentKind::Ppo,
            TrainedAgent::Dqn(_) => AgentKind::Dqn,
        }
    }

    /// Action space the agent was built for.
    pub fn action_space_kind(&self) -> ActionSpaceKind {
        match self {
            TrainedAgent::Ppo(a) if matches!(a.head, PolicyHead::SquashedGaussian { .. }) => ActionSpaceKind::Continuous,
            _ => ActionSpaceKind::Discrete,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrainedAgent::Ppo(a) => a.actor.input_dim(),
            TrainedAgent::Dqn(a) => a.online.input_dim(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
}

pub fn write_curve_csv<W: Write>(writer: W, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything needed to resume training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub episodes_done: usize,
    pub updates: u64,
    pub curve: Vec<CurvePoint>,
    pub agent: TrainedAgent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<PrioritizedBuffer>,
    /// Free-form configuration echo.
    #[serde(default)]
    pub config: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut w, ckpt)?;
    w.flush().map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!(
            "{}: checkpoint version {} unsupported",
            path.display(),
            ckpt.version
        )));
    }
    Ok(ckpt)
}

/// Options shared by both learners.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub total_episodes: usize,
    pub seed: u64,
    /// Emit a checkpoint whenever this many more episodes have completed.
    pub checkpoint_every: Option<usize>,
    pub config_echo: serde_json::Value,
}

impl TrainOptions {
    pub fn new(total_episodes: usize, seed: u64) -> Self {
        Self {
            total_episodes,
            seed,
            checkpoint_every: None,
            config_echo: serde_json::Value::Null,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
}

impl TrainOutcome {
    pub fn agent(&self) -> &TrainedAgent {
        &self.checkpoint.agent
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.checkpoint.curve
    }
}

/// Seed of the environment reset for a training episode.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(seed, episode as u64)
}

fn stream_seed(seed: u64, tag: u64, index: u64) -> u64 {
    derive_seed(derive_seed(seed, tag), index)
}

const TAG_PPO_ROLLOUT: u64 = 0x5050_4f00;
const TAG_DQN_EPISODE: u64 = 0x4451_4e00;

/// Trains PPO or DQN on `env`, continuing from `resume` when given.
///
/// `on_checkpoint` receives periodic snapshots.
pub fn train<E: Environment>(
    env: &mut E,
    kind: AgentKind,
    ppo: &PpoConfig,
    dqn: &DqnConfig,
    opts: &TrainOptions,
    resume: Option<Checkpoint>,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    let spec = env.action_spec();
    if kind == AgentKind::Dqn && !matches!(spec, ActionSpec::Discrete { .. }) {
        return Err(Error::config("DQN requires a discrete action space"));
    }
    let ckpt = match resume {
        Some(c) => {
            if c.agent.kind() != kind {
                return Err(Error::config("checkpoint agent kind differs from the requested agent"));
            }
            if c.agent.input_dim() != env.observation_dim() {
                return Err(Error::Shape("checkpoint input size differs from the observation size".into()));
            }
            c
        }
        None => {
            let mut rng = substream(opts.seed, Stream::Init);
            let agent = match (kind, &spec) {
                (AgentKind::Ppo, _) => TrainedAgent::Ppo(PpoAgent::new(env.observation_dim(), &spec, ppo.clone(), &mut rng)?),
                (AgentKind::Dqn, ActionSpec::Discrete { n }) => {
                    TrainedAgent::Dqn(DqnAgent::new(env.observation_dim(), *n, dqn.clone(), &mut rng)?)
                }
                _ => unreachable!("checked above"),
            };
            Checkpoint {
                version: CHECKPOINT_VERSION,
                seed: opts.seed,
                episodes_done: 0,
                updates: 0,
                curve: Vec::new(),
                agent,
                replay: None,
                config: opts.config_echo.clone(),
            }
        }
    };
    match kind {
        AgentKind::Ppo => train_ppo(env, opts, ckpt, on_checkpoint),
        AgentKind::Dqn => train_dqn(env, opts, ckpt, on_checkpoint),
    }
}

fn due(every: Option<usize>, before: usize, after: usize) -> bool {
    every.is_some_and(|k| k > 0 && after / k > before / k)
}

fn train_ppo<E: Environment>(
    env: &mut E,
    opts: &TrainOptions,
    mut ckpt: Checkpoint,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    let TrainedAgent::Ppo(mut agent) = ckpt.agent.clone() else {
        unreachable!()
    };
    let cfg = agent.config.clone();
    let mut obs: Option<Vec<f64>> = None;
    let mut ep_return = 0.0;

    while ckpt.episodes_done < opts.total_episodes {
        let before = ckpt.episodes_done;
        let mut rng = substream(stream_seed(opts.seed, TAG_PPO_ROLLOUT, ckpt.updates), Stream::Policy);
        let mut observations = Vec::with_capacity(cfg.n_steps);
        let mut raws = Vec::with_capacity(cfg.n_steps);
        let mut log_probs = Vec::with_capacity(cfg.n_steps);
        let mut rewards = Vec::with_capacity(cfg.n_steps);
        let mut values = Vec::with_capacity(cfg.n_steps);
        let mut dones = Vec::with_capacity(cfg.n_steps);
        while observations.len() < cfg.n_steps && ckpt.episodes_done < opts.total_episodes {
            let o = match obs.take() {
                Some(o) => o,
                None => {
                    ep_return = 0.0;
                    env.reset(episode_seed(opts.seed, ckpt.episodes_done))?
                }
            };
            let s = agent.sample(&o, &mut rng);
            let t = env.step(&s.action)?;
            values.push(agent.value(&o));
            observations.push(o);
            raws.push(s.raw);
            log_probs.push(s.log_prob);
            rewards.push(t.reward * cfg.reward_scale);
            dones.push(t.done);
            ep_return += t.reward;
            if t.done {
                ckpt.curve.push(CurvePoint {
                    episode: ckpt.episodes_done,
                    ret: ep_return,
                });
                ckpt.episodes_done += 1;
            } else {
                obs = Some(t.observation);
            }
        }
        let last_value = obs.as_ref().map_or(0.0, |o| agent.value(o));
        let (adv, rets) = compute_gae(&rewards, &values, &dones, last_value, cfg.gamma, cfg.gae_lambda)?;
        let samples: Vec<PpoSample> = observations
            .into_iter()
            .zip(raws)
            .zip(log_probs)
            .zip(adv.into_iter().zip(rets))
            .map(|(((obs, raw), old_log_prob), (advantage, ret))| PpoSample {
                obs,
                raw,
                old_log_prob,
                advantage,
                ret,
            })
            .collect();
        let stats = agent.update(&samples, &mut rng)?;
        ckpt.updates += 1;
        log::debug!(
            "ppo update {}: episodes {}, policy {:.4}, value {:.4}, kl {:.5}",
            ckpt.updates,
            ckpt.episodes_done,
            stats.policy_loss,
            stats.value_loss,
            stats.approx_kl
        );
        if due(opts.checkpoint_every, before, ckpt.episodes_done) {
            ckpt.agent = TrainedAgent::Ppo(agent.clone());
            on_checkpoint(&ckpt)?;
        }
    }
    ckpt.agent = TrainedAgent::Ppo(agent);
    Ok(TrainOutcome { checkpoint: ckpt })
}

fn train_dqn<E: Environment>(
    env: &mut E,
    opts: &TrainOptions,
    mut ckpt: Checkpoint,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    let TrainedAgent::Dqn(mut agent) = ckpt.agent.clone() else {
        unreachable!()
    };
    let mut buffer = match ckpt.replay.take() {
        Some(b) => b,
        None => agent.new_buffer()?,
    };
    let scale = agent.config.reward_scale;
    while ckpt.episodes_done < opts.total_episodes {
        let ep = ckpt.episodes_done;
        let epsilon = agent.config.epsilon(ep, opts.total_episodes);
        let mut rng = substream(stream_seed(opts.seed, TAG_DQN_EPISODE, ep as u64), Stream::Policy);
        let mut obs = env.reset(episode_seed(opts.seed, ep))?;
        let mut ep_return = 0.0;
        loop {
            let a = agent.act_epsilon(&obs, epsilon, &mut rng);
            let t = env.step(&AgentAction::Discrete(a))?;
            ep_return += t.reward;
            buffer.push(Experience {
                obs: std::mem::take(&mut obs),
                action: a,
                reward: t.reward * scale,
                next_obs: t.observation.clone(),
                done: t.done,
            });
            if buffer.len() >= agent.config.learning_starts.max(1) {
                agent.update(&mut buffer, &mut rng)?;
                ckpt.updates += 1;
            }
            if t.done {
                break;
            }
            obs = t.observation;
        }
        ckpt.curve.push(CurvePoint { episode: ep, ret: ep_return });
        ckpt.episodes_done += 1;
        if due(opts.checkpoint_every, ep, ckpt.episodes_done) {
            ckpt.agent = TrainedAgent::Dqn(agent.clone());
            ckpt.replay = Some(buffer.clone());
            on_checkpoint(&ckpt)?;
            ckpt.replay = None;
        }
    }
    ckpt.agent = TrainedAgent::Dqn(agent);
    ckpt.replay = Some(buffer);
    Ok(TrainOutcome { checkpoint: ckpt })
}

/// Mean return of the first and last `k` curve points.
pub fn leading_trailing_means(curve: &[CurvePoint], k: usize) -> Option<(f64, f64)> {
    if curve.len() < k || k == 0 {
        return None;
    }
    let mean = |s: &[CurvePoint]| s.iter().map(|p| p.ret).sum::<f64>() / s.len() as f64;
    Some((mean(&curve[..k]), mean(&curve[curve.len() - k..])))
}
