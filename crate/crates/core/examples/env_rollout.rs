//! Driving the environment by hand: random continuous actions, one line per
//! weekly step.

use epirl::abm::SimSetup;
use epirl::env::{EnvConfig, EpidemicEnv};
use epirl::interventions::{Action, CONTINUOUS_HIGH, CONTINUOUS_LOW};
use epirl::rewards::RewardWeights;
use epirl::rng::{substream, Stream};
use rand::Rng;

fn main() -> epirl::Result<()> {
    let mut setup = SimSetup::default();
    setup.population.pop_size = 1000;
    setup.population.pop_infected = 339_300.0;
    let mut env = EpidemicEnv::new(setup, EnvConfig::default(), RewardWeights::default())?;
    let mut rng = substream(11, Stream::Policy);

    let mut obs = env.reset(11)?;
    println!("initial observation {obs:.3?}");
    let mut total = 0.0;
    loop {
        let a: Vec<f64> = (0..3).map(|i| rng.random_range(CONTINUOUS_LOW[i]..=CONTINUOUS_HIGH[i])).collect();
        let step = env.step(Action::from_slice(&a)?)?;
        total += step.reward;
        let applied = step.info.applied_action();
        println!(
            "step {:>2} active {:<5} applied ({:.2}, {:.2}, {:.2}) reward {:>8.1} infected {:>4}",
            step.info.step,
            step.info.activated,
            applied.ch_beta,
            applied.ch_tp,
            applied.ch_ctp,
            step.reward,
            step.info.counts.last().map_or(0, |c| c.currently_infected)
        );
        obs = step.observation;
        if step.done {
            break;
        }
    }
    println!("return {total:.1}, final observation {obs:.3?}");
    Ok(())
}
