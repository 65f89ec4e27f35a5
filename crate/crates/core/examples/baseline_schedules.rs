//! Fixed schedules: no intervention, seven-work-seven-lockdown and the
//! approximate UK timeline, on the same seeds.

use epirl::abm::SimSetup;
use epirl::agents::{evaluate, EvalPolicy};
use epirl::baselines::{seven_work_seven_lockdown, uk_approx_schedule};
use epirl::env::{EnvConfig, EpidemicEnv};
use epirl::rewards::RewardWeights;

fn main() -> epirl::Result<()> {
    let mut setup = SimSetup::default();
    setup.population.pop_size = 2000;
    setup.population.pop_infected = 169_650.0;
    let env = EpidemicEnv::new(setup, EnvConfig::default(), RewardWeights::default())?;
    let seeds: Vec<u64> = (1..=5).collect();

    let policies = [
        ("none", EvalPolicy::none()),
        ("7w7l", EvalPolicy::Schedule(seven_work_seven_lockdown())),
        ("uk-approx", EvalPolicy::Schedule(uk_approx_schedule())),
    ];
    for (name, policy) in policies {
        let runs = evaluate(&policy, &env, &seeds)?;
        let n = runs.len() as f64;
        let infections = runs.iter().map(|m| m.cumulative_infections as f64).sum::<f64>() / n;
        let loss = runs.iter().map(|m| m.mean_economic_loss).sum::<f64>() / n;
        println!("{name:<10} infections {infections:>7.1}  economic loss {:>5.1}%", 100.0 * loss);
    }
    Ok(())
}
