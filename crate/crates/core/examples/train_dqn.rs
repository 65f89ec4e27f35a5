//! DQN with prioritized replay on the 64-way discrete action space.

use epirl::abm::SimSetup;
use epirl::agents::{leading_trailing_means, train, AgentKind, DqnConfig, PpoConfig, TrainOptions};
use epirl::env::{decode_discrete, EnvConfig, EpidemicEnv};
use epirl::interventions::ActionSpaceKind;
use epirl::rewards::RewardWeights;

fn main() -> epirl::Result<()> {
    let episodes: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let mut setup = SimSetup::default();
    setup.population.pop_size = 2000;
    setup.population.pop_infected = 169_650.0;
    let cfg = EnvConfig {
        action_space_kind: ActionSpaceKind::Discrete,
        ..EnvConfig::default()
    };
    let mut env = EpidemicEnv::new(setup, cfg, RewardWeights::default())?;

    let opts = TrainOptions::new(episodes, 2);
    let out = train(&mut env, AgentKind::Dqn, &PpoConfig::default(), &DqnConfig::default(), &opts, None, &mut |_| Ok(()))?;
    for chunk in out.curve().chunks(10) {
        let mean = chunk.iter().map(|p| p.ret).sum::<f64>() / chunk.len() as f64;
        println!("episodes {:>3}..{:<3} mean return {mean:.1}", chunk[0].episode, chunk[chunk.len() - 1].episode);
    }
    if let Some((lead, trail)) = leading_trailing_means(out.curve(), 50.min(episodes / 2).max(1)) {
        println!("leading mean {lead:.1}, trailing mean {trail:.1}");
    }
    let obs = env.reset(5)?;
    if let epirl::env::AgentAction::Discrete(k) = out.agent().act(&obs) {
        let a = epirl::env::encode_discrete(k)?;
        assert_eq!(decode_discrete(&a)?, k);
        println!("greedy first action: index {k} = ({}, {}, {})", a.ch_beta, a.ch_tp, a.ch_ctp);
    }
    Ok(())
}
