//! Calibration self-check: generate observations from the simulator at a
//! known transmission rate and recover it by search.

use epirl::abm::SimSetup;
use epirl::baselines::uk_approx_schedule;
use epirl::calibration::{synthetic_observed, CalibrationSpec, Calibrator};

fn main() -> epirl::Result<()> {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let mut truth = SimSetup::default();
    truth.population.pop_size = 2000;
    truth.population.pop_infected = 169_650.0;
    truth.population.beta_initial = 0.006;
    let schedule = uk_approx_schedule();
    let spec = CalibrationSpec {
        trials,
        seed: 3,
        ..CalibrationSpec::default()
    };
    let observed = synthetic_observed(&truth, &schedule, spec.start_date, 121, &[101, 102, 103])?;
    let last = observed.points().last().expect("121 days");
    println!(
        "synthetic target through {}: {:.0} confirmed, {:.0} deaths",
        last.date, last.cum_confirmed, last.cum_deaths
    );

    let cal = Calibrator::new(truth, schedule, observed, spec)?;
    let out = cal.search()?;
    for t in out.trials.iter().filter(|t| t.best_so_far == t.loss) {
        println!(
            "trial {:>3} ({:?}) beta {:.5} pop_infected {:>8.0} loss {:.4}",
            t.index, t.phase, t.params.beta_initial, t.params.pop_infected, t.loss.unwrap_or(f64::NAN)
        );
    }
    println!("recovered beta_initial {:.5} (true 0.006)", out.best.beta_initial);
    Ok(())
}
