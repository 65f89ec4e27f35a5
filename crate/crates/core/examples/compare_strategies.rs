//! Side-by-side report of several strategies on paired seeds, including the
//! day R_t first falls below one.

use epirl::abm::SimSetup;
use epirl::agents::{evaluate, EvalPolicy};
use epirl::analysis::{compare_strategies, RtSettings};
use epirl::baselines::{seven_work_seven_lockdown, uk_approx_schedule, SchedulePolicy};
use epirl::env::{EnvConfig, EpidemicEnv};
use epirl::interventions::Action;
use epirl::rewards::RewardWeights;

fn main() -> epirl::Result<()> {
    let mut setup = SimSetup::default();
    setup.population.pop_size = 2000;
    setup.population.pop_infected = 169_650.0;
    let duration = setup.disease.mean_infectious_duration();
    let env = EpidemicEnv::new(setup, EnvConfig::default(), RewardWeights::default())?;
    let seeds: Vec<u64> = (1..=6).collect();

    let full_measures = SchedulePolicy::new(vec![(0, Action::new(0.5, 0.75, 0.75))])?;
    let policies = [
        ("none", EvalPolicy::none()),
        ("7w7l", EvalPolicy::Schedule(seven_work_seven_lockdown())),
        ("uk-approx", EvalPolicy::Schedule(uk_approx_schedule())),
        ("full-measures", EvalPolicy::Schedule(full_measures)),
    ];
    let mut strategies = Vec::new();
    for (name, policy) in policies {
        strategies.push((name.to_string(), evaluate(&policy, &env, &seeds)?));
    }
    let report = compare_strategies(&strategies, duration, &RtSettings::default())?;
    print!("{}", report.to_text());
    report.write_csv(std::io::stdout())?;
    Ok(())
}
