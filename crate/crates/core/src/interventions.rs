//! Runtime-mutable interventions: lockdown, testing, contact tracing and quarantine.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::abm::{Agent, EpiState};
use crate::error::{Error, Result};

/// Intervention triple applied for a day or a decision step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Multiplier on the baseline transmission probability (lower is stricter).
    pub ch_beta: f64,
    /// Daily test probability for symptomatic undiagnosed agents.
    pub ch_tp: f64,
    /// Probability each contact of a newly diagnosed agent is traced.
    pub ch_ctp: f64,
}

/// Which action encoding a learning agent uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpaceKind {
    Discrete,
    Continuous,
}

/// Discrete levels of `ch_beta`, ascending.
pub const BETA_LEVELS: [f64; 4] = [0.5, 0.625, 0.75, 0.875];
/// Discrete levels of `ch_tp` and `ch_ctp`, ascending.
pub const PROB_LEVELS: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

/// Continuous box: lower and upper bounds per component.
pub const CONTINUOUS_LOW: [f64; 3] = [0.5, 0.0, 0.0];
pub const CONTINUOUS_HIGH: [f64; 3] = [1.0, 1.0, 1.0];

impl Action {
    pub const NULL: Action = Action {
        ch_beta: 1.0,
        ch_tp: 0.0,
        ch_ctp: 0.0,
    };

    pub fn new(ch_beta: f64, ch_tp: f64, ch_ctp: f64) -> Self {
        Self {
            ch_beta,
            ch_tp,
            ch_ctp,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.ch_beta, self.ch_tp, self.ch_ctp]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v {
            [b, t, c] => Ok(Self::new(*b, *t, *c)),
            _ => Err(Error::ActionDomain(format!(
                "expected 3 action components, got {}",
                v.len()
            ))),
        }
    }

    pub fn is_null(&self) -> bool {
        *self == Action::NULL
    }

    /// Physical domain accepted by the simulator: every component in `[0, 1]`.
    pub fn validate_physical(&self) -> Result<()> {
        for (name, v) in [("ch_beta", self.ch_beta), ("ch_tp", self.ch_tp), ("ch_ctp", self.ch_ctp)] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::ActionDomain(format!("{name}={v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Domain of a learning agent's action space.
    pub fn validate_in(&self, kind: ActionSpaceKind) -> Result<()> {
        match kind {
            ActionSpaceKind::Continuous => {
                for (k, v) in self.to_array().into_iter().enumerate() {
                    if !(v.is_finite() && v >= CONTINUOUS_LOW[k] && v <= CONTINUOUS_HIGH[k]) {
                        return Err(Error::ActionDomain(format!(
                            "component {k} = {v} outside [{}, {}]",
                            CONTINUOUS_LOW[k], CONTINUOUS_HIGH[k]
                        )));
                    }
                }
                Ok(())
            }
            ActionSpaceKind::Discrete => level_index(&BETA_LEVELS, self.ch_beta)
                .and(level_index(&PROB_LEVELS, self.ch_tp))
                .and(level_index(&PROB_LEVELS, self.ch_ctp))
                .map(|_| ())
                .ok_or_else(|| {
                    Error::ActionDomain(format!("{self:?} is not one of the discrete levels"))
                }),
        }
    }
}

pub(crate) fn level_index(levels: &[f64; 4], v: f64) -> Option<usize> {
    levels.iter().position(|&l| (l - v).abs() < 1e-12)
}

/// Mechanics of testing, isolation, tracing and quarantine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionConfig {
    /// Days between a test and its result.
    pub test_delay: u32,
    /// Multiplier on `ch_tp` for agents without symptoms.
    pub asymptomatic_test_factor: f64,
    /// Transmission multiplier for diagnosed (isolating) agents.
    pub isolation_transmission_factor: f64,
    pub quarantine_duration: u32,
    pub quarantine_transmission_factor: f64,
    pub quarantine_susceptibility_factor: f64,
    /// Days between a diagnosis and the start of its contacts' quarantine.
    pub trace_delay: u32,
    /// Trace the previous day's community contacts as well as static layers.
    pub trace_community: bool,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        Self {
            test_delay: 1,
            asymptomatic_test_factor: 0.01,
            isolation_transmission_factor: 0.3,
            quarantine_duration: 14,
            quarantine_transmission_factor: 0.3,
            quarantine_susceptibility_factor: 0.3,
            trace_delay: 2,
            trace_community: true,
        }
    }
}

impl InterventionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("asymptomatic_test_factor", self.asymptomatic_test_factor),
            ("isolation_transmission_factor", self.isolation_transmission_factor),
            ("quarantine_transmission_factor", self.quarantine_transmission_factor),
            ("quarantine_susceptibility_factor", self.quarantine_susceptibility_factor),
        ] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::config(format!("interventions.{name}={v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Effective per-contact transmission probability under lockdown level `ch_beta`.
pub fn apply_lockdown(ch_beta: f64, beta_initial: f64) -> Result<f64> {
    if !(ch_beta.is_finite() && (0.0..=1.0).contains(&ch_beta)) {
        return Err(Error::ActionDomain(format!("ch_beta={ch_beta} outside [0, 1]")));
    }
    Ok(ch_beta * beta_initial)
}

/// Result of one day of testing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TestingOutcome {
    pub new_tests: u64,
    pub new_diagnoses: u64,
    /// Agents whose positive result returned today, ascending.
    pub diagnosed_today: Vec<u32>,
}

/// Administers today's tests, then returns the results that are due today.
///
/// Symptomatic undiagnosed agents are tested with probability `ch_tp`, every
/// other living undiagnosed agent with `ch_tp * asymptomatic_test_factor`.
/// Tests are exact: positive iff the agent is exposed or infectious when tested.
pub fn run_testing<R: Rng>(
    agents: &mut [Agent],
    day: u32,
    ch_tp: f64,
    cfg: &InterventionConfig,
    rng: &mut R,
) -> TestingOutcome {
    let mut out = TestingOutcome::default();
    if ch_tp > 0.0 {
        let p_asym = ch_tp * cfg.asymptomatic_test_factor;
        for a in agents.iter_mut() {
            if a.epi_state == EpiState::Dead || a.diagnosed || a.test_pending_until.is_some() {
                continue;
            }
            let p = if a.epi_state.is_symptomatic() { ch_tp } else { p_asym };
            if p > 0.0 && rng.random::<f64>() < p {
                out.new_tests += 1;
                a.last_tested_day = Some(day);
                a.test_pending_until = Some(day + cfg.test_delay);
                a.pending_result_positive = a.epi_state.is_infected();
            }
        }
    }
    for a in agents.iter_mut() {
        if a.test_pending_until == Some(day) {
            a.test_pending_until = None;
            if std::mem::take(&mut a.pending_result_positive) && a.epi_state != EpiState::Dead {
                a.diagnosed = true;
                out.new_diagnoses += 1;
                out.diagnosed_today.push(a.id);
            }
        }
    }
    out
}

/// A traced contact waiting for its quarantine to begin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PendingQuarantine {
    pub start_day: u32,
    pub agent: u32,
}

/// Identifies each contact of today's diagnoses with probability `ch_ctp` and
/// queues its quarantine to start after `trace_delay` days.
///
/// `contacts_of` fills the traceable contacts of an agent (duplicates allowed).
pub fn run_tracing<R: Rng, F: FnMut(usize, &mut Vec<u32>)>(
    agents: &[Agent],
    diagnosed_today: &[u32],
    day: u32,
    ch_ctp: f64,
    cfg: &InterventionConfig,
    rng: &mut R,
    mut contacts_of: F,
    pending: &mut Vec<PendingQuarantine>,
) {
    if ch_ctp <= 0.0 {
        return;
    }
    let mut buf = Vec::new();
    for &src in diagnosed_today {
        buf.clear();
        contacts_of(src as usize, &mut buf);
        buf.sort_unstable();
        buf.dedup();
        for &c in &buf {
            let contact = &agents[c as usize];
            if c == src || contact.epi_state == EpiState::Dead || contact.diagnosed {
                continue;
            }
            if ch_ctp >= 1.0 || rng.random::<f64>() < ch_ctp {
                pending.push(PendingQuarantine {
                    start_day: day + cfg.trace_delay,
                    agent: c,
                });
            }
        }
    }
}

/// Starts the quarantines due today. Returns the number of agents newly
/// entering quarantine; re-traced agents already in quarantine only have
/// their expiry extended.
pub fn activate_quarantines(
    agents: &mut [Agent],
    pending: &mut Vec<PendingQuarantine>,
    day: u32,
    cfg: &InterventionConfig,
) -> u64 {
    let mut started = 0;
    pending.retain(|q| {
        if q.start_day > day {
            return true;
        }
        let a = &mut agents[q.agent as usize];
        if a.epi_state != EpiState::Dead {
            let until = q.start_day + cfg.quarantine_duration;
            if a.is_quarantined(day) {
                a.quarantined_until = a.quarantined_until.map(|u| u.max(until));
            } else if until > day {
                a.quarantined_until = Some(until);
                started += 1;
            }
        }
        false
    });
    started
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn agents_in(state: EpiState, n: usize) -> Vec<Agent> {
        (0..n)
            .map(|i| {
                let mut a = Agent::new(i as u32, 40.0, 0);
                a.epi_state = state;
                a
            })
            .collect()
    }

    #[test]
    fn lockdown_scales_beta() {
        assert!((apply_lockdown(0.6, 0.005997).unwrap() - 0.6 * 0.005997).abs() < 1e-18);
        assert_eq!(apply_lockdown(1.0, 0.005997).unwrap(), 0.005997);
        assert!((apply_lockdown(0.5, 0.005997).unwrap() - 0.0029985).abs() < 1e-15);
        assert!(matches!(apply_lockdown(1.2, 0.005), Err(Error::ActionDomain(_))));
        assert!(apply_lockdown(f64::NAN, 0.005).is_err());
    }

    #[test]
    fn zero_test_probability_tests_nobody() {
        let mut agents = agents_in(EpiState::InfectiousMild, 50);
        let mut rng = substream(1, Stream::Testing);
        let out = run_testing(&mut agents, 3, 0.0, &InterventionConfig::default(), &mut rng);
        assert_eq!(out, TestingOutcome::default());
    }

    #[test]
    fn symptomatic_test_rate_is_binomial() {
        // 100 symptomatic agents, ch_tp = 0.75: tests ~ Binomial(100, 0.75).
        let cfg = InterventionConfig::default();
        let reps = 1000;
        let mut total = 0u64;
        for rep in 0..reps {
            let mut agents = agents_in(EpiState::InfectiousMild, 100);
            let mut rng = substream(rep, Stream::Testing);
            total += run_testing(&mut agents, 0, 0.75, &cfg, &mut rng).new_tests;
        }
        let mean = total as f64 / reps as f64;
        let sd_of_mean = (100.0 * 0.75 * 0.25 / reps as f64).sqrt();
        assert!((mean - 75.0).abs() < 3.0 * sd_of_mean, "mean {mean}");
    }

    #[test]
    fn results_return_after_delay() {
        let cfg = InterventionConfig::default();
        let mut agents = agents_in(EpiState::InfectiousMild, 3);
        agents[2].epi_state = EpiState::Recovered;
        let mut rng = substream(0, Stream::Testing);
        let first = run_testing(&mut agents, 5, 1.0, &cfg, &mut rng);
        assert_eq!(first.new_tests, 2 + agents[2].last_tested_day.map_or(0, |_| 1));
        assert_eq!(first.new_diagnoses, 0);
        let second = run_testing(&mut agents, 6, 0.0, &cfg, &mut rng);
        assert_eq!(second.diagnosed_today, vec![0, 1]);
        assert!(agents[0].diagnosed && agents[0].last_tested_day == Some(5));
        assert!(!agents[2].diagnosed);
    }

    #[test]
    fn tracing_full_probability_quarantines_household() {
        let cfg = InterventionConfig::default();
        let mut agents = agents_in(EpiState::Susceptible, 4);
        agents[0].diagnosed = true;
        let mut pending = Vec::new();
        let mut rng = substream(0, Stream::Tracing);
        run_tracing(&agents, &[0], 10, 1.0, &cfg, &mut rng, |_, out| out.extend([0, 1, 2, 3]), &mut pending);
        assert_eq!(pending.len(), 3);
        assert_eq!(activate_quarantines(&mut agents, &mut pending, 11, &cfg), 0);
        assert_eq!(activate_quarantines(&mut agents, &mut pending, 12, &cfg), 3);
        assert!(pending.is_empty());
        for a in &agents[1..] {
            assert_eq!(a.quarantined_until, Some(12 + 14));
        }
    }

    #[test]
    fn zero_trace_probability_queues_nothing() {
        let cfg = InterventionConfig::default();
        let agents = agents_in(EpiState::Susceptible, 4);
        let mut pending = Vec::new();
        let mut rng = substream(0, Stream::Tracing);
        run_tracing(&agents, &[0], 1, 0.0, &cfg, &mut rng, |_, out| out.extend([1, 2, 3]), &mut pending);
        assert!(pending.is_empty());
    }

    #[test]
    fn retrace_extends_without_double_count() {
        let cfg = InterventionConfig::default();
        let mut agents = agents_in(EpiState::Susceptible, 2);
        let mut pending = vec![PendingQuarantine { start_day: 3, agent: 1 }];
        assert_eq!(activate_quarantines(&mut agents, &mut pending, 3, &cfg), 1);
        pending.push(PendingQuarantine { start_day: 8, agent: 1 });
        assert_eq!(activate_quarantines(&mut agents, &mut pending, 8, &cfg), 0);
        assert_eq!(agents[1].quarantined_until, Some(22));
        // after expiry a new trace counts again
        pending.push(PendingQuarantine { start_day: 30, agent: 1 });
        assert_eq!(activate_quarantines(&mut agents, &mut pending, 30, &cfg), 1);
    }

    #[test]
    fn discrete_and_continuous_domains() {
        assert!(Action::new(0.5, 0.0, 0.75).validate_in(ActionSpaceKind::Discrete).is_ok());
        assert!(Action::new(0.6, 0.0, 0.75).validate_in(ActionSpaceKind::Discrete).is_err());
        assert!(Action::new(0.6, 0.3, 1.0).validate_in(ActionSpaceKind::Continuous).is_ok());
        assert!(Action::new(0.2, 0.0, 0.0).validate_in(ActionSpaceKind::Continuous).is_err());
        assert!(Action::new(0.2, 0.0, 0.0).validate_physical().is_ok());
        assert!(Action::new(0.2, 1.5, 0.0).validate_physical().is_err());
    }
}
