//! The reward of one simulated day, term by term.

use epirl::abm::DailyCounts;
use epirl::interventions::{Action, ActionSpaceKind};
use epirl::rewards::{action_penalty, daily_reward, economic_reward, health_reward, RewardWeights};

fn main() -> epirl::Result<()> {
    let w = RewardWeights::default();
    let counts = DailyCounts {
        susceptible: 9_000,
        exposed: 200,
        infectious: 300,
        recovered: 480,
        dead: 20,
        new_infections: 60,
        new_severe: 4,
        new_deaths: 1,
        new_tests: 150,
        new_quarantined: 40,
        currently_infected: 500,
        currently_quarantined: 90,
        cumulative_dead: 20,
        ..DailyCounts::default()
    };
    let action = Action::new(0.7, 0.4, 0.3);

    println!("health reward      {:>10.2}", health_reward(&counts, &w));
    let e = economic_reward(&counts, &action, &w);
    println!("employed C_E       {:>10.1}", e.c_e);
    println!("testing cost C_T   {:>10.1}", e.c_t);
    println!("quarantine C_Q     {:>10.1}", e.c_q);
    println!("lockdown C_beta    {:>10.1}", e.c_beta);
    println!("economic reward    {:>10.2} (scaled {:.2})", e.r_e, e.r_e_scaled);
    let d = daily_reward(&counts, &action, &w);
    println!("economic loss      {:>9.2}%", 100.0 * d.economic_loss);
    println!("combined           {:>10.2}", d.combined);

    let previous = Action::new(1.0, 0.0, 0.0);
    let penalty = action_penalty(&action, &previous, ActionSpaceKind::Continuous)?;
    println!("penalty for jumping from {previous:?}: {penalty:.1}");
    Ok(())
}
