//! Ratio estimate of R_t on an uncontrolled and a locked-down epidemic.

use epirl::abm::{run_simulation, SimSetup};
use epirl::analysis::{estimate_rt, RtSettings};
use epirl::interventions::Action;

fn main() -> epirl::Result<()> {
    let mut setup = SimSetup::default();
    setup.population.pop_size = 2000;
    setup.population.pop_infected = 169_650.0;
    let duration = setup.disease.mean_infectious_duration();

    for (name, from_day, action) in [
        ("uncontrolled", u32::MAX, Action::NULL),
        ("lockdown from day 30", 30, Action::new(0.3, 0.5, 0.5)),
    ] {
        let series = run_simulation(&setup, 4, 133, 1, |day, _| {
            Ok(if day >= from_day { action } else { Action::NULL })
        })?;
        let rt = estimate_rt(&series, duration, 7)?;
        let weekly: Vec<String> = rt
            .points
            .iter()
            .filter(|p| p.day % 14 == 0)
            .map(|p| format!("d{}:{:.2}", p.day, p.rt))
            .collect();
        let crossing = RtSettings::default().crossing_day(&series, duration)?;
        println!("{name}: {}", weekly.join(" "));
        println!("  R_t below 1 from day {crossing:?}");
    }
    Ok(())
}
