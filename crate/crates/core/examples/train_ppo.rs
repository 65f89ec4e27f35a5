//! Short PPO run on the continuous action space, then a deterministic
//! evaluation against seven-work-seven-lockdown.

use epirl::abm::SimSetup;
use epirl::agents::{
    evaluate, leading_trailing_means, train, AgentKind, DqnConfig, EvalPolicy, PpoConfig, TrainOptions,
};
use epirl::baselines::seven_work_seven_lockdown;
use epirl::env::{EnvConfig, EpidemicEnv};
use epirl::rewards::RewardWeights;

fn main() -> epirl::Result<()> {
    let episodes: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let mut setup = SimSetup::default();
    setup.population.pop_size = 2000;
    setup.population.pop_infected = 169_650.0;
    let mut env = EpidemicEnv::new(setup, EnvConfig::default(), RewardWeights::default())?;

    let opts = TrainOptions::new(episodes, 1);
    let out = train(&mut env, AgentKind::Ppo, &PpoConfig::default(), &DqnConfig::default(), &opts, None, &mut |_| Ok(()))?;
    for chunk in out.curve().chunks(10) {
        let mean = chunk.iter().map(|p| p.ret).sum::<f64>() / chunk.len() as f64;
        println!("episodes {:>3}..{:<3} mean return {mean:.1}", chunk[0].episode, chunk[chunk.len() - 1].episode);
    }
    if let Some((lead, trail)) = leading_trailing_means(out.curve(), 50.min(episodes / 2).max(1)) {
        println!("leading mean {lead:.1}, trailing mean {trail:.1}");
    }

    let seeds: Vec<u64> = (1000..1005).collect();
    for (name, policy) in [
        ("ppo", EvalPolicy::Agent(out.agent().clone())),
        ("7w7l", EvalPolicy::Schedule(seven_work_seven_lockdown())),
    ] {
        let runs = evaluate(&policy, &env, &seeds)?;
        let infections: Vec<u64> = runs.iter().map(|m| m.cumulative_infections).collect();
        let loss = runs.iter().map(|m| m.mean_economic_loss).sum::<f64>() / runs.len() as f64;
        println!("{name:<5} infections {infections:?} mean loss {:.1}%", 100.0 * loss);
    }
    Ok(())
}
