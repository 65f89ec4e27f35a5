//! Layered configuration: defaults, a TOML overlay and dotted overrides.

use epirl::config::{parse_table, Config};

fn main() -> epirl::Result<()> {
    let overlay = parse_table(
        r#"
        [population]
        pop_size = 2000
        pop_infected = 169650

        [ppo]
        learning_rate = 3e-4
        "#,
    )?;
    let cfg = Config::resolve(&[overlay], &["env.action_space_kind=discrete".into(), "rewards.lambda1=2".into()])?;
    println!("pop_size {}", cfg.population.pop_size);
    println!("seeded agents {}", cfg.population.seeded_agents());
    println!("ppo learning rate {}", cfg.ppo.learning_rate);
    println!("action space {:?}", cfg.env.action_space_kind);
    println!("lambda1 {}", cfg.rewards.lambda1);

    match Config::resolve(&[], &["population.pop_sise=10".into()]) {
        Err(e) => println!("typo rejected: {e}"),
        Ok(_) => unreachable!("unknown keys are rejected"),
    }
    Ok(())
}
