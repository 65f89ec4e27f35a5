//! Uncontrolled epidemic: weekly compartment counts for one seed.

use epirl::abm::{run_simulation, SimSetup};
use epirl::interventions::Action;

fn main() -> epirl::Result<()> {
    let mut setup = SimSetup::default();
    setup.population.pop_size = 2000;
    setup.population.pop_infected = 169_650.0;
    let series = run_simulation(&setup, 7, 133, 1, |_, _| Ok(Action::NULL))?;

    println!("{:>4} {:>6} {:>6} {:>6} {:>6} {:>6}", "day", "S", "E", "I", "R", "D");
    for c in series.iter().step_by(7) {
        println!(
            "{:>4} {:>6} {:>6} {:>6} {:>6} {:>6}",
            c.day, c.susceptible, c.exposed, c.infectious, c.recovered, c.dead
        );
    }
    let last = series.last().expect("133 days");
    let scale = setup.population.pop_scale();
    println!(
        "cumulative infections {} agents, about {:.0} people at national scale",
        last.cumulative_infections,
        last.cumulative_infections as f64 * scale
    );
    Ok(())
}
