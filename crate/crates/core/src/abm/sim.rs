//! Day-by-day transmission, progression and intervention loop.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, EpiState};
use super::counts::DailyCounts;
use super::params::{DiseaseConfig, PopulationConfig};
use super::population::{sample_community, synthesize_population, Csr, Population};
use crate::error::{Error, Result};
use crate::interventions::{
    activate_quarantines, apply_lockdown, run_testing, run_tracing, Action, InterventionConfig,
    PendingQuarantine,
};
use crate::rng::{substream, Stream};

/// Everything a simulation instance needs besides its seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSetup {
    pub population: PopulationConfig,
    pub disease: DiseaseConfig,
    pub interventions: InterventionConfig,
}

impl SimSetup {
    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        self.disease.validate()?;
        self.interventions.validate()
    }
}

/// Moves `max(1, round(pop_infected / pop_scale))` distinct susceptible agents,
/// chosen uniformly, into Exposed on day 0. Returns their ids ascending.
pub fn seed_infections<R: Rng>(
    population: &mut Population,
    config: &PopulationConfig,
    disease: &DiseaseConfig,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let count = config.seeded_agents();
    if config.pop_infected <= 0.0 {
        log::warn!("pop_infected is 0; seeding one agent so the epidemic can start");
    }
    if count > population.len() {
        return Err(Error::config(format!(
            "cannot seed {count} infections in {} agents",
            population.len()
        )));
    }
    let mut chosen = rand::seq::index::sample(rng, population.len(), count).into_vec();
    chosen.sort_unstable();
    for &id in &chosen {
        enter_state(&mut population.agents[id], EpiState::Exposed, 0, disease, rng);
    }
    Ok(chosen.into_iter().map(|i| i as u32).collect())
}

/// Puts `agent` in `state` on `day` and draws its next transition.
fn enter_state<R: Rng>(agent: &mut Agent, state: EpiState, day: u32, disease: &DiseaseConfig, rng: &mut R) {
    agent.enter(state, day);
    let bernoulli = |rng: &mut R, p: f64| p > 0.0 && rng.random::<f64>() < p;
    match state {
        EpiState::Exposed => {
            let symptomatic = bernoulli(rng, disease.prob_symptomatic.lookup(agent.age));
            let next = if symptomatic {
                EpiState::InfectiousMild
            } else {
                EpiState::InfectiousAsymptomatic
            };
            agent.schedule(day + disease.latent_duration.sample(rng), next);
        }
        EpiState::InfectiousAsymptomatic => {
            agent.schedule(day + disease.infectious_duration.sample(rng), EpiState::Recovered);
        }
        EpiState::InfectiousMild => {
            if bernoulli(rng, disease.prob_severe_given_symptomatic.lookup(agent.age)) {
                agent.schedule(day + disease.severe_onset_delay.sample(rng), EpiState::InfectiousSevere);
            } else {
                agent.schedule(day + disease.infectious_duration.sample(rng), EpiState::Recovered);
            }
        }
        EpiState::InfectiousSevere => {
            let next = if bernoulli(rng, disease.prob_death_given_severe.lookup(agent.age)) {
                EpiState::Dead
            } else {
                EpiState::Recovered
            };
            agent.schedule(day + disease.severe_duration.sample(rng), next);
        }
        EpiState::Susceptible | EpiState::Recovered | EpiState::Dead => {}
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Totals {
    tests: u64,
    quarantined: u64,
    diagnoses: u64,
    infections: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Flows {
    new_infections: u64,
    new_severe: u64,
    new_deaths: u64,
    new_recovered: u64,
    new_tests: u64,
    new_quarantined: u64,
    new_diagnoses: u64,
}

/// One running simulation. Single-threaded; independent instances may run in
/// parallel since nothing is shared.
#[derive(Clone, Debug)]
pub struct Simulation {
    setup: SimSetup,
    population: Population,
    day: u32,
    community_today: Csr,
    community_prev: Csr,
    edge_buf: Vec<(u32, u32)>,
    sus_factor: Vec<f64>,
    contacts_rng: ChaCha8Rng,
    transmission_rng: ChaCha8Rng,
    progression_rng: ChaCha8Rng,
    testing_rng: ChaCha8Rng,
    tracing_rng: ChaCha8Rng,
    pending_quarantines: Vec<PendingQuarantine>,
    totals: Totals,
}

impl Simulation {
    /// Synthesizes and seeds a fresh population.
    pub fn new(setup: &SimSetup, seed: u64) -> Result<Self> {
        setup.validate()?;
        let mut population = synthesize_population(&setup.population, seed)?;
        let mut seeding_rng = substream(seed, Stream::Seeding);
        let seeded = seed_infections(&mut population, &setup.population, &setup.disease, &mut seeding_rng)?;
        let mut sim = Self::from_population(setup, population, seed)?;
        sim.totals.infections = seeded.len() as u64;
        Ok(sim)
    }

    /// Wraps an explicit population; infections already present count as seeded.
    pub fn from_population(setup: &SimSetup, population: Population, seed: u64) -> Result<Self> {
        setup.disease.validate()?;
        setup.interventions.validate()?;
        let n = population.len();
        let sus_factor = population
            .agents
            .iter()
            .map(|a| setup.population.sus_odds_ratios.lookup(a.age))
            .collect();
        let infections = population
            .agents
            .iter()
            .filter(|a| a.epi_state != EpiState::Susceptible)
            .count() as u64;
        Ok(Self {
            setup: setup.clone(),
            population,
            day: 0,
            community_today: Csr::empty(n),
            community_prev: Csr::empty(n),
            edge_buf: Vec::new(),
            sus_factor,
            contacts_rng: substream(seed, Stream::Contacts),
            transmission_rng: substream(seed, Stream::Transmission),
            progression_rng: substream(seed, Stream::Progression),
            testing_rng: substream(seed, Stream::Testing),
            tracing_rng: substream(seed, Stream::Tracing),
            pending_quarantines: Vec::new(),
            totals: Totals {
                infections,
                ..Totals::default()
            },
        })
    }

    /// Next day to be simulated.
    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn setup(&self) -> &SimSetup {
        &self.setup
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn agents(&self) -> &[Agent] {
        &self.population.agents
    }

    /// Stocks and cumulatives of the current state with zero flows.
    pub fn snapshot(&self) -> DailyCounts {
        self.tally(self.day, Flows::default())
    }

    /// Simulates one day under `action` and returns its counts.
    pub fn step_day(&mut self, action: &Action) -> Result<DailyCounts> {
        action.validate_physical()?;
        let day = self.day;
        let mut flows = Flows::default();

        std::mem::swap(&mut self.community_prev, &mut self.community_today);
        sample_community(
            self.population.len(),
            self.population.community_mean,
            &mut self.contacts_rng,
            &mut self.edge_buf,
            &mut self.community_today,
        );

        let beta = apply_lockdown(action.ch_beta, self.setup.population.beta_initial)?;
        flows.new_infections = self.transmit(day, beta);
        self.progress(day, &mut flows);

        let testing = run_testing(
            &mut self.population.agents,
            day,
            action.ch_tp,
            &self.setup.interventions,
            &mut self.testing_rng,
        );
        flows.new_tests = testing.new_tests;
        flows.new_diagnoses = testing.new_diagnoses;
        {
            let pop = &self.population;
            let prev = &self.community_prev;
            let trace_community = self.setup.interventions.trace_community;
            run_tracing(
                &pop.agents,
                &testing.diagnosed_today,
                day,
                action.ch_ctp,
                &self.setup.interventions,
                &mut self.tracing_rng,
                |i, out| {
                    out.extend_from_slice(pop.household_members(i));
                    out.extend_from_slice(pop.school.neighbors(i));
                    out.extend_from_slice(pop.work.neighbors(i));
                    if trace_community {
                        out.extend_from_slice(prev.neighbors(i));
                    }
                },
                &mut self.pending_quarantines,
            );
        }
        flows.new_quarantined = activate_quarantines(
            &mut self.population.agents,
            &mut self.pending_quarantines,
            day,
            &self.setup.interventions,
        );

        self.totals.infections += flows.new_infections;
        self.totals.tests += flows.new_tests;
        self.totals.diagnoses += flows.new_diagnoses;
        self.totals.quarantined += flows.new_quarantined;
        let counts = self.tally(day, flows);
        self.day += 1;
        Ok(counts)
    }

    /// Every infectious agent exposes each susceptible contact once per layer
    /// it shares with them; sources in ascending id, layers h, s, w, c.
    fn transmit(&mut self, day: u32, beta: f64) -> u64 {
        if beta <= 0.0 {
            return 0;
        }
        let Simulation {
            setup,
            population,
            community_today,
            sus_factor,
            transmission_rng,
            progression_rng,
            ..
        } = self;
        let Population {
            agents,
            households,
            school,
            work,
            ..
        } = population;
        let cfg = &setup.population;
        let iv = &setup.interventions;
        let weights = cfg.layer_weights.as_array();
        let mut newly = Vec::new();
        for src in 0..agents.len() {
            let a = &agents[src];
            if !a.epi_state.is_infectious() {
                continue;
            }
            let mut src_factor = 1.0;
            if a.epi_state == EpiState::InfectiousAsymptomatic {
                src_factor *= cfg.asymp_factor;
            }
            if a.diagnosed {
                src_factor *= iv.isolation_transmission_factor;
            }
            if a.is_quarantined(day) {
                src_factor *= iv.quarantine_transmission_factor;
            }
            let base = beta * src_factor;
            if base <= 0.0 {
                continue;
            }
            let layers: [&[u32]; 4] = [
                &households[a.household as usize],
                school.neighbors(src),
                work.neighbors(src),
                community_today.neighbors(src),
            ];
            for (layer, contacts) in layers.into_iter().enumerate() {
                let layer_base = base * weights[layer];
                if layer_base <= 0.0 {
                    continue;
                }
                for &t in contacts {
                    let t = t as usize;
                    let target = &mut agents[t];
                    if t == src || target.epi_state != EpiState::Susceptible {
                        continue;
                    }
                    let mut p = layer_base * sus_factor[t];
                    if target.is_quarantined(day) {
                        p *= iv.quarantine_susceptibility_factor;
                    }
                    let p = p.clamp(0.0, 1.0);
                    if p > 0.0 && transmission_rng.random::<f64>() < p {
                        // marked now so later sources skip this agent today
                        target.epi_state = EpiState::Exposed;
                        newly.push(t);
                    }
                }
            }
        }
        newly.sort_unstable();
        for &t in &newly {
            enter_state(&mut agents[t], EpiState::Exposed, day, &setup.disease, progression_rng);
        }
        newly.len() as u64
    }

    fn progress(&mut self, day: u32, flows: &mut Flows) {
        let disease = &self.setup.disease;
        for a in self.population.agents.iter_mut() {
            if a.scheduled_transition_day != Some(day) {
                continue;
            }
            let next = a.next_state.expect("scheduled transition has a target");
            match next {
                EpiState::InfectiousSevere => flows.new_severe += 1,
                EpiState::Dead => flows.new_deaths += 1,
                EpiState::Recovered => flows.new_recovered += 1,
                _ => {}
            }
            enter_state(a, next, day, disease, &mut self.progression_rng);
        }
    }

    fn tally(&self, day: u32, flows: Flows) -> DailyCounts {
        let mut c = DailyCounts {
            day,
            new_infections: flows.new_infections,
            new_severe: flows.new_severe,
            new_deaths: flows.new_deaths,
            new_recovered: flows.new_recovered,
            new_tests: flows.new_tests,
            new_quarantined: flows.new_quarantined,
            new_diagnoses: flows.new_diagnoses,
            cumulative_tests: self.totals.tests,
            cumulative_quarantined: self.totals.quarantined,
            cumulative_diagnoses: self.totals.diagnoses,
            cumulative_infections: self.totals.infections,
            ..DailyCounts::default()
        };
        for a in &self.population.agents {
            match a.epi_state {
                EpiState::Susceptible => c.susceptible += 1,
                EpiState::Exposed => c.exposed += 1,
                s if s.is_infectious() => c.infectious += 1,
                EpiState::Recovered => c.recovered += 1,
                _ => c.dead += 1,
            }
            if !a.epi_state.is_infected() && a.epi_state != EpiState::Dead && a.is_quarantined(day) {
                c.currently_quarantined += 1;
            }
        }
        c.currently_infected = c.exposed + c.infectious;
        c.cumulative_dead = c.dead;
        c
    }
}

/// Runs `n_days` days, asking `policy` for a new action every `decision_every`
/// days (day 0 included) and holding it in between.
///
/// The policy sees the day index and the counts produced so far.
pub fn run_simulation<P>(
    setup: &SimSetup,
    seed: u64,
    n_days: u32,
    decision_every: u32,
    mut policy: P,
) -> Result<Vec<DailyCounts>>
where
    P: FnMut(u32, &[DailyCounts]) -> Result<Action>,
{
    if decision_every == 0 {
        return Err(Error::config("decision interval must be at least one day"));
    }
    let mut sim = Simulation::new(setup, seed)?;
    let mut series = Vec::with_capacity(n_days as usize);
    let mut action = Action::NULL;
    for day in 0..n_days {
        if day % decision_every == 0 {
            action = policy(day, &series)?;
            action.validate_physical()?;
        }
        series.push(sim.step_day(&action)?);
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> SimSetup {
        let mut s = SimSetup::default();
        s.population.pop_size = n;
        s
    }

    fn pair(beta: f64) -> (SimSetup, Population) {
        let mut s = SimSetup::default();
        s.population.beta_initial = beta;
        s.population.asymp_factor = 1.0;
        let mut a = Agent::new(0, 30.0, 0);
        a.enter(EpiState::InfectiousMild, 0);
        a.schedule(50, EpiState::Recovered);
        let b = Agent::new(1, 30.0, 0);
        (s, Population::from_parts(vec![a, b], &[], &[], 0.0).unwrap())
    }

    #[test]
    fn certain_transmission_in_a_pair() {
        let (mut s, pop) = pair(0.5);
        s.population.beta_initial = 1.0;
        let mut sim = Simulation::from_population(&s, pop, 1).unwrap();
        let c = sim.step_day(&Action::NULL).unwrap();
        assert_eq!(c.new_infections, 1);
        assert_eq!(sim.agents()[1].epi_state, EpiState::Exposed);
    }

    #[test]
    fn zero_lockdown_multiplier_blocks_transmission() {
        let (mut s, pop) = pair(0.5);
        s.population.beta_initial = 1.0;
        let mut sim = Simulation::from_population(&s, pop, 1).unwrap();
        let c = sim.step_day(&Action::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(c.new_infections, 0);
    }

    #[test]
    fn all_recovered_is_absorbing() {
        let s = SimSetup::default();
        let agents = (0..5)
            .map(|i| {
                let mut a = Agent::new(i, 50.0, 0);
                a.enter(EpiState::Recovered, 0);
                a
            })
            .collect();
        let pop = Population::from_parts(agents, &[], &[], 3.0).unwrap();
        let mut sim = Simulation::from_population(&s, pop, 4).unwrap();
        let before = sim.snapshot();
        for _ in 0..10 {
            let c = sim.step_day(&Action::new(1.0, 0.5, 0.5)).unwrap();
            assert_eq!(c.new_infections + c.new_deaths + c.new_recovered + c.new_severe, 0);
            assert_eq!(c.recovered, before.recovered);
            assert_eq!(c.new_diagnoses, 0);
        }
    }

    #[test]
    fn conservation_and_monotone_cumulatives() {
        let mut s = setup(1500);
        s.population.pop_infected = 20.0 * s.population.total_pop / 1500.0;
        let series = run_simulation(&s, 3, 80, 7, |day, _| {
            Ok(if day >= 21 { Action::new(0.7, 0.6, 0.5) } else { Action::NULL })
        })
        .unwrap();
        assert_eq!(series.len(), 80);
        for w in series.windows(2) {
            assert!(w[1].cumulative_tests >= w[0].cumulative_tests);
            assert!(w[1].cumulative_quarantined >= w[0].cumulative_quarantined);
            assert!(w[1].cumulative_diagnoses >= w[0].cumulative_diagnoses);
            assert!(w[1].cumulative_dead >= w[0].cumulative_dead);
        }
        for c in &series {
            assert_eq!(c.stock_total(), 1500);
            assert!(c.currently_infected + c.currently_quarantined + c.cumulative_dead <= 1500);
        }
        let last = series.last().unwrap();
        assert_eq!(last.cumulative_tests, series.iter().map(|c| c.new_tests).sum::<u64>());
        assert_eq!(last.cumulative_quarantined, series.iter().map(|c| c.new_quarantined).sum::<u64>());
        assert!(last.cumulative_tests > 0 && last.cumulative_quarantined > 0);
    }

    #[test]
    fn decisions_consumed_every_step() {
        let s = setup(300);
        let mut calls = 0;
        run_simulation(&s, 1, 133, 7, |_, _| {
            calls += 1;
            Ok(Action::NULL)
        })
        .unwrap();
        assert_eq!(calls, 19);
    }

    #[test]
    fn out_of_range_policy_action_propagates() {
        let s = setup(100);
        let err = run_simulation(&s, 1, 10, 1, |_, _| Ok(Action::new(1.0, 2.0, 0.0))).unwrap_err();
        assert!(matches!(err, Error::ActionDomain(_)));
    }

    #[test]
    fn seeding_too_many_is_config_error() {
        let mut s = setup(100);
        s.population.pop_infected = 1000.0 * s.population.pop_scale();
        assert!(matches!(Simulation::new(&s, 0), Err(Error::Config(_))));
    }

    #[test]
    fn seeded_agents_are_distinct_and_exposed() {
        let mut s = setup(1000);
        s.population.pop_infected = 10.0 * s.population.total_pop / 1000.0;
        let sim = Simulation::new(&s, 12).unwrap();
        let exposed: Vec<_> = sim.agents().iter().filter(|a| a.epi_state == EpiState::Exposed).collect();
        assert_eq!(exposed.len(), 10);
        assert!(exposed.iter().all(|a| a.scheduled_transition_day.unwrap() > a.state_entry_day));
        assert_eq!(sim.snapshot().cumulative_infections, 10);
    }

    #[test]
    fn quarantined_agents_still_progress() {
        let s = SimSetup::default();
        let mut a = Agent::new(0, 30.0, 0);
        a.enter(EpiState::Exposed, 0);
        a.schedule(2, EpiState::InfectiousAsymptomatic);
        a.quarantined_until = Some(20);
        let pop = Population::from_parts(vec![a, Agent::new(1, 30.0, 1)], &[], &[], 0.0).unwrap();
        let mut sim = Simulation::from_population(&s, pop, 0).unwrap();
        for _ in 0..3 {
            sim.step_day(&Action::NULL).unwrap();
        }
        assert_eq!(sim.agents()[0].epi_state, EpiState::InfectiousAsymptomatic);
    }
}
