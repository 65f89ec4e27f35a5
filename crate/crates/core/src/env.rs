//! Reset/step environment over the simulator with weekly decisions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::abm::{DailyCounts, SimSetup, Simulation};
use crate::error::{Error, Result};
use crate::interventions::{Action, ActionSpaceKind, BETA_LEVELS, PROB_LEVELS, CONTINUOUS_HIGH, CONTINUOUS_LOW};
use crate::rewards::{action_penalty, daily_reward, DailyReward, RewardWeights};

/// Number of discrete actions.
pub const N_DISCRETE: usize = 64;

/// Quantity compared against the activation threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationMetric {
    CumulativeInfections,
    CumulativeDiagnoses,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub step_days: u32,
    pub episode_days: u32,
    /// Actions take effect once the activation metric reaches this many agents.
    pub activation_threshold: f64,
    pub activation_metric: ActivationMetric,
    pub action_space_kind: ActionSpaceKind,
    /// Divide observation components by the population size.
    pub observation_normalization: bool,
    /// Append cumulative diagnoses as the eighth observation component.
    pub include_diagnoses: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            step_days: 7,
            episode_days: 133,
            activation_threshold: 50.0,
            activation_metric: ActivationMetric::CumulativeInfections,
            action_space_kind: ActionSpaceKind::Continuous,
            observation_normalization: true,
            include_diagnoses: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_days == 0 {
            return Err(Error::config("env.step_days must be at least 1"));
        }
        if self.episode_days == 0 {
            return Err(Error::config("env.episode_days must be at least 1"));
        }
        if !(self.activation_threshold >= 0.0) {
            return Err(Error::config("env.activation_threshold must be non-negative"));
        }
        Ok(())
    }

    pub fn steps_per_episode(&self) -> u32 {
        self.episode_days.div_ceil(self.step_days)
    }

    pub fn observation_dim(&self) -> usize {
        if self.include_diagnoses {
            8
        } else {
            7
        }
    }
}

/// Maps an index in `0..64` to its action; index = i_beta * 16 + i_tp * 4 + i_ctp.
pub fn encode_discrete(index: usize) -> Result<Action> {
    if index >= N_DISCRETE {
        return Err(Error::ActionDomain(format!("discrete index {index} outside 0..64")));
    }
    Ok(Action::new(
        BETA_LEVELS[index / 16],
        PROB_LEVELS[(index / 4) % 4],
        PROB_LEVELS[index % 4],
    ))
}

pub fn decode_discrete(action: &Action) -> Result<usize> {
    use crate::interventions::level_index;
    match (
        level_index(&BETA_LEVELS, action.ch_beta),
        level_index(&PROB_LEVELS, action.ch_tp),
        level_index(&PROB_LEVELS, action.ch_ctp),
    ) {
        (Some(b), Some(t), Some(c)) => Ok(b * 16 + t * 4 + c),
        _ => Err(Error::ActionDomain(format!("{action:?} is not a discrete action"))),
    }
}

/// Observation vector: S, E, I, R, D, cumulative tests, cumulative quarantines
/// and (optionally) cumulative diagnoses.
pub fn observe(counts: &DailyCounts, config: &EnvConfig) -> Vec<f64> {
    let mut v = vec![
        counts.susceptible as f64,
        counts.exposed as f64,
        counts.infectious as f64,
        counts.recovered as f64,
        counts.dead as f64,
        counts.cumulative_tests as f64,
        counts.cumulative_quarantined as f64,
    ];
    if config.include_diagnoses {
        v.push(counts.cumulative_diagnoses as f64);
    }
    if config.observation_normalization {
        let p = counts.stock_total().max(1) as f64;
        v.iter_mut().for_each(|x| *x /= p);
    }
    v
}

/// Diagnostics of one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Index of the step within the episode, from 0.
    pub step: u32,
    pub raw_action: Action,
    /// Action applied on each simulated day of the step.
    pub applied_actions: Vec<Action>,
    pub counts: Vec<DailyCounts>,
    pub daily_rewards: Vec<DailyReward>,
    /// Action-change penalty, present for continuous learning steps.
    pub penalty: Option<f64>,
    pub activated: bool,
}

impl StepInfo {
    /// Action applied on the first day of the step.
    pub fn applied_action(&self) -> Action {
        self.applied_actions.first().copied().unwrap_or(Action::NULL)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One line of the JSONL trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRecord {
    pub observation: Vec<f64>,
    pub reward: f64,
    #[serde(flatten)]
    pub info: StepInfo,
}

pub fn write_trace_jsonl<W: Write>(mut writer: W, records: &[TraceRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Epidemic environment. Each step runs `step_days` simulated days.
#[derive(Clone, Debug)]
pub struct EpidemicEnv {
    setup: SimSetup,
    config: EnvConfig,
    weights: RewardWeights,
    sim: Option<Simulation>,
    series: Vec<DailyCounts>,
    last: DailyCounts,
    prev_applied: Action,
    activated: bool,
    steps: u32,
    record_trace: bool,
    trace: Vec<TraceRecord>,
}

impl EpidemicEnv {
    pub fn new(setup: SimSetup, config: EnvConfig, weights: RewardWeights) -> Result<Self> {
        setup.validate()?;
        config.validate()?;
        weights.validate()?;
        Ok(Self {
            setup,
            config,
            weights,
            sim: None,
            series: Vec::new(),
            last: DailyCounts::default(),
            prev_applied: Action::NULL,
            activated: false,
            steps: 0,
            record_trace: false,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn setup(&self) -> &SimSetup {
        &self.setup
    }

    pub fn weights(&self) -> &RewardWeights {
        &self.weights
    }

    /// Keep a [`TraceRecord`] per step until the next reset.
    pub fn set_record_trace(&mut self, on: bool) {
        self.record_trace = on;
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Daily counts of the current episode so far.
    pub fn series(&self) -> &[DailyCounts] {
        &self.series
    }

    pub fn is_activated(&self) -> bool {
        self.activated
    }

    pub fn is_done(&self) -> bool {
        self.sim.is_none() || self.day() >= self.config.episode_days
    }

    pub fn day(&self) -> u32 {
        self.sim.as_ref().map_or(0, Simulation::day)
    }

    /// Synthesizes and seeds a fresh population; returns the day-0 observation.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let sim = Simulation::new(&self.setup, seed)?;
        self.last = sim.snapshot();
        self.sim = Some(sim);
        self.series.clear();
        self.trace.clear();
        self.prev_applied = Action::NULL;
        self.activated = false;
        self.steps = 0;
        self.update_activation();
        Ok(observe(&self.last, &self.config))
    }

    fn update_activation(&mut self) {
        let metric = match self.config.activation_metric {
            ActivationMetric::CumulativeInfections => self.last.cumulative_infections,
            ActivationMetric::CumulativeDiagnoses => self.last.cumulative_diagnoses,
        };
        if metric as f64 >= self.config.activation_threshold {
            self.activated = true;
        }
    }

    /// Applies a learning action, which must lie in the configured action space.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        action.validate_in(self.config.action_space_kind)?;
        let penalise = self.config.action_space_kind == ActionSpaceKind::Continuous;
        self.step_inner(action, |_| action, false, penalise)
    }

    /// Applies the action of a day-indexed schedule, re-evaluated every day.
    ///
    /// Any action in the physical domain is accepted and no change penalty is charged.
    pub fn step_schedule<F: FnMut(u32) -> Action>(&mut self, schedule: F) -> Result<StepResult> {
        let day = self.day();
        let mut schedule = schedule;
        let raw = schedule(day);
        self.step_inner(raw, schedule, true, false)
    }

    fn step_inner<F: FnMut(u32) -> Action>(
        &mut self,
        raw: Action,
        mut action_for_day: F,
        gate_daily: bool,
        penalise: bool,
    ) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::Protocol(match self.sim {
                None => "step called before reset".into(),
                Some(_) => "step called after the episode finished".into(),
            }));
        }
        let end = (self.day() + self.config.step_days).min(self.config.episode_days);
        let mut applied_actions = Vec::new();
        let mut counts = Vec::new();
        let mut daily_rewards = Vec::new();
        let mut reward = 0.0;
        let mut first_applied = None;
        while self.day() < end {
            let day = self.day();
            let applied = if self.activated { action_for_day(day) } else { Action::NULL };
            applied.validate_physical()?;
            let sim = self.sim.as_mut().expect("checked above");
            let c = sim.step_day(&applied)?;
            let r = daily_reward(&c, &applied, &self.weights);
            reward += r.combined;
            first_applied.get_or_insert(applied);
            applied_actions.push(applied);
            counts.push(c);
            daily_rewards.push(r);
            self.series.push(c);
            self.last = c;
            if gate_daily {
                self.update_activation();
            }
        }
        self.update_activation();

        let applied = first_applied.unwrap_or(Action::NULL);
        let penalty = if penalise {
            let p = action_penalty(&applied, &self.prev_applied, ActionSpaceKind::Continuous)?;
            reward += self.weights.lambda3 * p;
            Some(p)
        } else {
            None
        };
        self.prev_applied = *applied_actions.last().unwrap_or(&applied);

        let info = StepInfo {
            step: self.steps,
            raw_action: raw,
            applied_actions,
            counts,
            daily_rewards,
            penalty,
            activated: self.activated,
        };
        self.steps += 1;
        let observation = observe(&self.last, &self.config);
        if self.record_trace {
            self.trace.push(TraceRecord {
                observation: observation.clone(),
                reward,
                info: info.clone(),
            });
        }
        Ok(StepResult {
            observation,
            reward,
            done: self.is_done(),
            info,
        })
    }
}

/// Action emitted by a learning agent.
#[derive(Clone, Debug, PartialEq)]
pub enum AgentAction {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Shape of an action space as seen by a learning agent.
#[derive(Clone, Debug, PartialEq)]
pub enum ActionSpec {
    Discrete { n: usize },
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpec {
    pub fn kind(&self) -> ActionSpaceKind {
        match self {
            ActionSpec::Discrete { .. } => ActionSpaceKind::Discrete,
            ActionSpec::Continuous { .. } => ActionSpaceKind::Continuous,
        }
    }
}

/// Observation, reward and termination after one agent action.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Minimal episodic contract used by the learning agents.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_spec(&self) -> ActionSpec;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &AgentAction) -> Result<Transition>;
}

impl Environment for EpidemicEnv {
    fn observation_dim(&self) -> usize {
        self.config.observation_dim()
    }

    fn action_spec(&self) -> ActionSpec {
        match self.config.action_space_kind {
            ActionSpaceKind::Discrete => ActionSpec::Discrete { n: N_DISCRETE },
            ActionSpaceKind::Continuous => ActionSpec::Continuous {
                low: CONTINUOUS_LOW.to_vec(),
                high: CONTINUOUS_HIGH.to_vec(),
            },
        }
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        EpidemicEnv::reset(self, seed)
    }

    fn step(&mut self, action: &AgentAction) -> Result<Transition> {
        let action = match (action, self.config.action_space_kind) {
            (AgentAction::Discrete(i), ActionSpaceKind::Discrete) => encode_discrete(*i)?,
            (AgentAction::Continuous(v), ActionSpaceKind::Continuous) => Action::from_slice(v)?,
            _ => {
                return Err(Error::ActionDomain(
                    "action kind does not match the environment's action space".into(),
                ))
            }
        };
        let r = EpidemicEnv::step(self, action)?;
        Ok(Transition {
            observation: r.observation,
            reward: r.reward,
            done: r.done,
        })
    }
}
