//! Deterministic evaluation of learned and scheduled policies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::TrainedAgent;
use crate::abm::DailyCounts;
use crate::baselines::SchedulePolicy;
use crate::env::{encode_discrete, AgentAction, EpidemicEnv, StepResult};
use crate::error::Result;
use crate::interventions::Action;

/// Anything that can drive the epidemic environment for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalPolicy {
    Agent(TrainedAgent),
    Schedule(SchedulePolicy),
}

impl EvalPolicy {
    pub fn none() -> Self {
        EvalPolicy::Schedule(SchedulePolicy::null())
    }

    /// Advances the environment by one decision step.
    pub fn drive(&self, env: &mut EpidemicEnv, obs: &[f64]) -> Result<StepResult> {
        match self {
            EvalPolicy::Agent(agent) => {
                let action = match agent.act(obs) {
                    AgentAction::Discrete(k) => encode_discrete(k)?,
                    AgentAction::Continuous(v) => Action::from_slice(&v)?,
                };
                env.step(action)
            }
            EvalPolicy::Schedule(s) => env.step_schedule(|day| s.action_at(day)),
        }
    }
}

/// Outcome of one evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub total_return: f64,
    pub cumulative_infections: u64,
    pub deaths: u64,
    /// Mean daily economic loss as a fraction.
    pub mean_economic_loss: f64,
    /// Action applied on each simulated day.
    pub daily_actions: Vec<Action>,
    pub series: Vec<DailyCounts>,
    pub daily_losses: Vec<f64>,
}

/// Runs one episode per seed, in parallel, on clones of `env`.
pub fn evaluate(policy: &EvalPolicy, env: &EpidemicEnv, seeds: &[u64]) -> Result<Vec<EpisodeMetrics>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut env = env.clone();
            run_episode(policy, &mut env, seed)
        })
        .collect()
}

pub fn run_episode(policy: &EvalPolicy, env: &mut EpidemicEnv, seed: u64) -> Result<EpisodeMetrics> {
    let mut obs = env.reset(seed)?;
    let mut total_return = 0.0;
    let mut daily_actions = Vec::new();
    let mut daily_losses = Vec::new();
    loop {
        let r = policy.drive(env, &obs)?;
        total_return += r.reward;
        daily_actions.extend(&r.info.applied_actions);
        daily_losses.extend(r.info.daily_rewards.iter().map(|d| d.economic_loss));
        obs = r.observation;
        if r.done {
            break;
        }
    }
    let series = env.series().to_vec();
    let last = series.last().copied().unwrap_or_default();
    Ok(EpisodeMetrics {
        seed,
        total_return,
        cumulative_infections: last.cumulative_infections,
        deaths: last.dead,
        mean_economic_loss: daily_losses.iter().sum::<f64>() / daily_losses.len().max(1) as f64,
        daily_actions,
        series,
        daily_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abm::{run_simulation, SimSetup};
    use crate::env::EnvConfig;
    use crate::rewards::RewardWeights;

    fn env() -> EpidemicEnv {
        let mut setup = SimSetup::default();
        setup.population.pop_size = 400;
        EpidemicEnv::new(setup, EnvConfig::default(), RewardWeights::default()).unwrap()
    }

    #[test]
    fn null_policy_matches_plain_simulation() {
        let e = env();
        let m = evaluate(&EvalPolicy::none(), &e, &[4, 5]).unwrap();
        for r in &m {
            let plain = run_simulation(e.setup(), r.seed, 133, 1, |_, _| Ok(Action::NULL)).unwrap();
            assert_eq!(r.series, plain);
            assert!(r.mean_economic_loss >= 0.0);
        }
        assert_eq!(m, evaluate(&EvalPolicy::none(), &e, &[4, 5]).unwrap());
    }
}
