//! Fitting the initial infected count and transmission rate to observed
//! cumulative cases and deaths.

use std::io::{Read, Write};

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abm::{run_simulation, DailyCounts, SimSetup};
use crate::baselines::SchedulePolicy;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedPoint {
    pub date: NaiveDate,
    pub cum_confirmed: f64,
    pub cum_deaths: f64,
}

/// National cumulative confirmed cases and deaths by date.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    points: Vec<ObservedPoint>,
}

impl ObservedSeries {
    pub fn new(points: Vec<ObservedPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parse("observed series is empty".into()));
        }
        for p in &points {
            if !(p.cum_confirmed >= 0.0 && p.cum_deaths >= 0.0) || !p.cum_confirmed.is_finite() || !p.cum_deaths.is_finite() {
                return Err(Error::Parse(format!("{}: counts must be finite and non-negative", p.date)));
            }
        }
        for w in points.windows(2) {
            if w[1].date <= w[0].date {
                return Err(Error::Parse(format!("dates must increase strictly ({} then {})", w[0].date, w[1].date)));
            }
            if w[1].cum_confirmed < w[0].cum_confirmed || w[1].cum_deaths < w[0].cum_deaths {
                return Err(Error::Parse(format!("cumulative series decrease at {}", w[1].date)));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ObservedPoint] {
        &self.points
    }

    /// Reads CSV with header `date,cum_confirmed,cum_deaths` and ISO dates.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut points = Vec::new();
        for (i, row) in r.deserialize::<ObservedPoint>().enumerate() {
            points.push(row.map_err(|e| Error::Parse(format!("observed row {}: {e}", i + 1)))?);
        }
        Self::new(points)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A simulated run mapped to real-population scale, one value per day from `start`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledSeries {
    pub start: NaiveDate,
    pub confirmed: Vec<f64>,
    pub deaths: Vec<f64>,
}

impl ScaledSeries {
    /// Cumulative diagnoses and deaths multiplied by `pop_scale`.
    pub fn from_counts(series: &[DailyCounts], pop_scale: f64, start: NaiveDate) -> Self {
        Self {
            start,
            confirmed: series.iter().map(|c| c.cumulative_diagnoses as f64 * pop_scale).collect(),
            deaths: series.iter().map(|c| c.cumulative_dead as f64 * pop_scale).collect(),
        }
    }

    fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.start).num_days();
        (d >= 0 && (d as usize) < self.confirmed.len()).then_some(d as usize)
    }

    /// Elementwise mean of equally long runs.
    pub fn mean(runs: &[ScaledSeries]) -> Result<Self> {
        let first = runs.first().ok_or_else(|| Error::Shape("no runs to average".into()))?;
        if runs.iter().any(|r| r.start != first.start || r.confirmed.len() != first.confirmed.len()) {
            return Err(Error::Shape("runs differ in start or length".into()));
        }
        let n = runs.len() as f64;
        let avg = |f: fn(&ScaledSeries) -> &Vec<f64>| {
            (0..first.confirmed.len()).map(|i| runs.iter().map(|r| f(r)[i]).sum::<f64>() / n).collect()
        };
        Ok(Self {
            start: first.start,
            confirmed: avg(|r| &r.confirmed),
            deaths: avg(|r| &r.deaths),
        })
    }

    /// Observed points on the simulated dates.
    pub fn to_observed(&self) -> Result<ObservedSeries> {
        ObservedSeries::new(
            (0..self.confirmed.len())
                .map(|i| ObservedPoint {
                    date: self.start + chrono::Days::new(i as u64),
                    cum_confirmed: self.confirmed[i],
                    cum_deaths: self.deaths[i],
                })
                .collect(),
        )
    }
}

/// Relative weight of the case and death series in the loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub cases: f64,
    pub deaths: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { cases: 1.0, deaths: 1.0 }
    }
}

/// Weighted mean over the two series of the mean squared relative error
/// `((sim - obs) / max(obs, 1))^2` on the overlapping dates.
pub fn series_loss(sim: &ScaledSeries, observed: &ObservedSeries, w: &LossWeights) -> Result<f64> {
    if !(w.cases >= 0.0 && w.deaths >= 0.0 && w.cases + w.deaths > 0.0) {
        return Err(Error::config("calibration loss weights must be non-negative and not both zero"));
    }
    let mut cases = 0.0;
    let mut deaths = 0.0;
    let mut n = 0usize;
    for p in observed.points() {
        if let Some(i) = sim.index_of(p.date) {
            cases += ((sim.confirmed[i] - p.cum_confirmed) / p.cum_confirmed.max(1.0)).powi(2);
            deaths += ((sim.deaths[i] - p.cum_deaths) / p.cum_deaths.max(1.0)).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Alignment(format!(
            "observed dates {}..{} miss the simulated window starting {} ({} days)",
            observed.points[0].date,
            observed.points[observed.points.len() - 1].date,
            sim.start,
            sim.confirmed.len()
        )));
    }
    let n = n as f64;
    Ok((w.cases * cases / n + w.deaths * deaths / n) / (w.cases + w.deaths))
}

/// [`series_loss`] averaged over replications.
pub fn calibration_loss(replications: &[ScaledSeries], observed: &ObservedSeries, w: &LossWeights) -> Result<f64> {
    if replications.is_empty() {
        return Err(Error::Shape("calibration loss needs at least one replication".into()));
    }
    let mut total = 0.0;
    for r in replications {
        total += series_loss(r, observed, w)?;
    }
    Ok(total / replications.len() as f64)
}

/// The two calibrated parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub pop_infected: f64,
    pub beta_initial: f64,
}

/// Search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSpec {
    pub pop_infected_range: [f64; 2],
    pub beta_range: [f64; 2],
    pub trials: usize,
    pub replications: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Share of trials spent on space-filling sampling before local refinement.
    pub global_fraction: f64,
    /// Local perturbation sd as a fraction of each range's width.
    pub local_scale: f64,
    /// Calendar date of simulated day 0.
    pub start_date: NaiveDate,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            pop_infected_range: [33_930.0, 339_300.0],
            beta_range: [0.002, 0.012],
            trials: 100,
            replications: 3,
            seed: 0,
            weights: LossWeights::default(),
            global_fraction: 0.7,
            local_scale: 0.1,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 21).expect("valid date"),
        }
    }
}

impl CalibrationSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("pop_infected_range", self.pop_infected_range), ("beta_range", self.beta_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return Err(Error::config(format!("calibration.{name} must be a finite, non-empty, non-negative range")));
            }
        }
        if self.trials == 0 || self.replications == 0 {
            return Err(Error::config("calibration trials and replications must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.global_fraction) || !(self.local_scale > 0.0) {
            return Err(Error::config("calibration.global_fraction must lie in [0, 1] and local_scale be positive"));
        }
        Ok(())
    }

    fn global_trials(&self) -> usize {
        ((self.global_fraction * self.trials as f64).ceil() as usize).clamp(1, self.trials)
    }

    /// Seed of replication `r`, shared by all trials.
    pub fn replication_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, r as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Global,
    Local,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub phase: Phase,
    pub params: CalibrationParams,
    /// `None` when the trial failed.
    pub loss: Option<f64>,
    pub replication_losses: Vec<f64>,
    pub error: Option<String>,
    /// Best loss seen up to and including this trial.
    pub best_so_far: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: CalibrationParams,
    pub best_loss: f64,
    pub trials: Vec<Trial>,
}

impl SearchOutcome {
    pub fn write_trial_log<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "trial",
            "phase",
            "pop_infected",
            "beta_initial",
            "loss",
            "best_so_far",
            "replication_losses",
            "error",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in &self.trials {
            let reps: Vec<String> = t.replication_losses.iter().map(f64::to_string).collect();
            w.write_record([
                t.index.to_string(),
                format!("{:?}", t.phase).to_lowercase(),
                t.params.pop_infected.to_string(),
                t.params.beta_initial.to_string(),
                opt(t.loss),
                opt(t.best_so_far),
                reps.join(";"),
                t.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn lerp([lo, hi]: [f64; 2], u: f64) -> f64 {
    lo + u * (hi - lo)
}

/// Latin hypercube sample of `n` points in the unit square.
fn latin_hypercube<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let mut dims = [(0..n).collect::<Vec<_>>(), (0..n).collect::<Vec<_>>()];
    for d in &mut dims {
        for i in (1..n).rev() {
            d.swap(i, rng.random_range(0..=i));
        }
    }
    (0..n)
        .map(|i| {
            let u0 = (dims[0][i] as f64 + rng.random::<f64>()) / n as f64;
            let u1 = (dims[1][i] as f64 + rng.random::<f64>()) / n as f64;
            [u0, u1]
        })
        .collect()
}

fn evaluate_trial<F>(index: usize, phase: Phase, params: CalibrationParams, objective: &F) -> Trial
where
    F: Fn(&CalibrationParams) -> Result<Vec<f64>> + Sync,
{
    let outcome = objective(&params).and_then(|losses| {
        let mean = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        if losses.is_empty() || !mean.is_finite() {
            Err(Error::Search("objective returned no finite loss".into()))
        } else {
            Ok((mean, losses))
        }
    });
    match outcome {
        Ok((loss, replication_losses)) => Trial {
            index,
            phase,
            params,
            loss: Some(loss),
            replication_losses,
            error: None,
            best_so_far: None,
        },
        Err(e) => {
            log::warn!("calibration trial {index} failed: {e}");
            Trial {
                index,
                phase,
                params,
                loss: None,
                replication_losses: Vec::new(),
                error: Some(e.to_string()),
                best_so_far: None,
            }
        }
    }
}

fn finish(mut trials: Vec<Trial>) -> Result<SearchOutcome> {
    let mut best: Option<(f64, CalibrationParams)> = None;
    for t in &mut trials {
        if let Some(l) = t.loss {
            if best.is_none_or(|(b, _)| l < b) {
                best = Some((l, t.params));
            }
        }
        t.best_so_far = best.map(|b| b.0);
    }
    let (best_loss, best) = best.ok_or_else(|| Error::Search(format!("all {} trials failed", trials.len())))?;
    Ok(SearchOutcome { best, best_loss, trials })
}

/// Space-filling global phase followed by Gaussian refinement around the incumbent.
///
/// `objective` returns one loss per replication; a trial's loss is their mean.
/// Global trials run in parallel, local ones sequentially, and the log is
/// ordered by trial index, so the outcome depends only on `spec.seed`.
pub fn search_with<F>(spec: &CalibrationSpec, objective: F) -> Result<SearchOutcome>
where
    F: Fn(&CalibrationParams) -> Result<Vec<f64>> + Sync,
{
    spec.validate()?;
    let mut rng = substream(spec.seed, Stream::Search);
    let n_global = spec.global_trials();
    let points: Vec<CalibrationParams> = latin_hypercube(n_global, &mut rng)
        .into_iter()
        .map(|[u, v]| CalibrationParams {
            pop_infected: lerp(spec.pop_infected_range, u),
            beta_initial: lerp(spec.beta_range, v),
        })
        .collect();
    let mut trials: Vec<Trial> = points
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| evaluate_trial(i, Phase::Global, p, &objective))
        .collect();
    let mut incumbent = trials
        .iter()
        .filter_map(|t| t.loss.map(|l| (l, t.params)))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    for i in n_global..spec.trials {
        let perturb = |c: f64, range: [f64; 2], rng: &mut rand_chacha::ChaCha8Rng| {
            let z: f64 = StandardNormal.sample(rng);
            (c + z * spec.local_scale * (range[1] - range[0])).clamp(range[0], range[1])
        };
        let params = match incumbent {
            Some((_, c)) => CalibrationParams {
                pop_infected: perturb(c.pop_infected, spec.pop_infected_range, &mut rng),
                beta_initial: perturb(c.beta_initial, spec.beta_range, &mut rng),
            },
            None => CalibrationParams {
                pop_infected: lerp(spec.pop_infected_range, rng.random()),
                beta_initial: lerp(spec.beta_range, rng.random()),
            },
        };
        let t = evaluate_trial(i, Phase::Local, params, &objective);
        if let Some(l) = t.loss {
            if incumbent.is_none_or(|(b, _)| l < b) {
                incumbent = Some((l, t.params));
            }
        }
        trials.push(t);
    }
    finish(trials)
}

/// Uniform random search over the same ranges, for benchmarking [`search_with`].
pub fn random_search_with<F>(spec: &CalibrationSpec, objective: F) -> Result<SearchOutcome>
where
    F: Fn(&CalibrationParams) -> Result<Vec<f64>> + Sync,
{
    spec.validate()?;
    let mut rng = substream(derive_seed(spec.seed, u64::MAX), Stream::Search);
    let points: Vec<CalibrationParams> = (0..spec.trials)
        .map(|_| CalibrationParams {
            pop_infected: lerp(spec.pop_infected_range, rng.random()),
            beta_initial: lerp(spec.beta_range, rng.random()),
        })
        .collect();
    let trials = points
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| evaluate_trial(i, Phase::Random, p, &objective))
        .collect();
    finish(trials)
}

/// Simulator-backed calibration problem.
#[derive(Clone, Debug)]
pub struct Calibrator {
    pub setup: SimSetup,
    pub schedule: SchedulePolicy,
    pub observed: ObservedSeries,
    pub spec: CalibrationSpec,
}

impl Calibrator {
    pub fn new(setup: SimSetup, schedule: SchedulePolicy, observed: ObservedSeries, spec: CalibrationSpec) -> Result<Self> {
        setup.validate()?;
        spec.validate()?;
        let c = Self {
            setup,
            schedule,
            observed,
            spec,
        };
        if c.n_days() == 0 {
            return Err(Error::Alignment(format!(
                "observed data end before the simulation start {}",
                c.spec.start_date
            )));
        }
        Ok(c)
    }

    /// Days simulated: through the last observed date.
    pub fn n_days(&self) -> u32 {
        let last = self.observed.points().last().expect("non-empty").date;
        (last - self.spec.start_date).num_days().max(-1) as u32 + 1
    }

    pub fn setup_for(&self, params: &CalibrationParams) -> SimSetup {
        let mut s = self.setup.clone();
        s.population.pop_infected = params.pop_infected;
        s.population.beta_initial = params.beta_initial;
        s
    }

    /// One replication under the fixed schedule, scaled to the real population.
    pub fn simulate(&self, params: &CalibrationParams, replication: usize) -> Result<ScaledSeries> {
        let setup = self.setup_for(params);
        let series = run_simulation(
            &setup,
            self.spec.replication_seed(replication),
            self.n_days(),
            1,
            |day, _| Ok(self.schedule.action_at(day)),
        )?;
        Ok(ScaledSeries::from_counts(&series, setup.population.pop_scale(), self.spec.start_date))
    }

    pub fn replication_losses(&self, params: &CalibrationParams) -> Result<Vec<f64>> {
        (0..self.spec.replications)
            .into_par_iter()
            .map(|r| series_loss(&self.simulate(params, r)?, &self.observed, &self.spec.weights))
            .collect()
    }

    pub fn search(&self) -> Result<SearchOutcome> {
        search_with(&self.spec, |p| self.replication_losses(p))
    }

    pub fn random_search(&self) -> Result<SearchOutcome> {
        random_search_with(&self.spec, |p| self.replication_losses(p))
    }

    /// Observed and replication-mean fitted values on each observed date.
    pub fn write_fit_csv<W: Write>(&self, params: &CalibrationParams, writer: W) -> Result<()> {
        let runs = (0..self.spec.replications)
            .map(|r| self.simulate(params, r))
            .collect::<Result<Vec<_>>>()?;
        let fit = ScaledSeries::mean(&runs)?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "observed_confirmed", "fitted_confirmed", "observed_deaths", "fitted_deaths"])?;
        for p in self.observed.points() {
            if let Some(i) = fit.index_of(p.date) {
                w.write_record([
                    p.date.to_string(),
                    p.cum_confirmed.to_string(),
                    fit.confirmed[i].to_string(),
                    p.cum_deaths.to_string(),
                    fit.deaths[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Replication-mean simulated series at known parameters, for self-consistency checks.
pub fn synthetic_observed(
    setup: &SimSetup,
    schedule: &SchedulePolicy,
    start: NaiveDate,
    n_days: u32,
    seeds: &[u64],
) -> Result<ObservedSeries> {
    let runs = seeds
        .iter()
        .map(|&seed| {
            let s = run_simulation(setup, seed, n_days, 1, |day, _| Ok(schedule.action_at(day)))?;
            Ok(ScaledSeries::from_counts(&s, setup.population.pop_scale(), start))
        })
        .collect::<Result<Vec<_>>>()?;
    ScaledSeries::mean(&runs)?.to_observed()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 21).unwrap() + chrono::Days::new(d as u64)
    }

    fn observed(values: &[(f64, f64)]) -> ObservedSeries {
        ObservedSeries::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &(c, d))| ObservedPoint { date: date(i as u32), cum_confirmed: c, cum_deaths: d })
                .collect(),
        )
        .unwrap()
    }

    fn sim(values: &[(f64, f64)]) -> ScaledSeries {
        ScaledSeries {
            start: date(0),
            confirmed: values.iter().map(|v| v.0).collect(),
            deaths: values.iter().map(|v| v.1).collect(),
        }
    }

    #[test]
    fn loss_closed_forms() {
        let w = LossWeights::default();
        let obs = observed(&[(10.0, 1.0), (20.0, 2.0), (40.0, 5.0)]);
        assert_eq!(series_loss(&sim(&[(10.0, 1.0), (20.0, 2.0), (40.0, 5.0)]), &obs, &w).unwrap(), 0.0);
        let doubled = sim(&[(20.0, 2.0), (40.0, 4.0), (80.0, 10.0)]);
        assert!((series_loss(&doubled, &obs, &w).unwrap() - 1.0).abs() < 1e-12);
        let skewed = LossWeights { cases: 3.0, deaths: 1.0 };
        assert!((series_loss(&doubled, &obs, &skewed).unwrap() - 1.0).abs() < 1e-12);
        let one = observed(&[(100.0, 0.0)]);
        let cases_only = LossWeights { cases: 1.0, deaths: 0.0 };
        assert!((series_loss(&sim(&[(110.0, 0.0)]), &one, &cases_only).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn zero_observations_use_unit_denominator() {
        let obs = observed(&[(0.0, 0.0)]);
        let l = series_loss(&sim(&[(3.0, 0.0)]), &obs, &LossWeights { cases: 1.0, deaths: 0.0 }).unwrap();
        assert_eq!(l, 9.0);
    }

    #[test]
    fn disjoint_dates_are_alignment_errors() {
        let obs = observed(&[(1.0, 0.0)]);
        let mut s = sim(&[(1.0, 0.0)]);
        s.start = date(5);
        assert!(matches!(series_loss(&s, &obs, &LossWeights::default()), Err(Error::Alignment(_))));
    }

    #[test]
    fn observed_csv_validation() {
        let good = "date,cum_confirmed,cum_deaths\n2020-01-21,0,0\n2020-01-22,2,0\n";
        let s = ObservedSeries::from_csv(good.as_bytes()).unwrap();
        assert_eq!(s.points().len(), 2);
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert_eq!(ObservedSeries::from_csv(out.as_slice()).unwrap(), s);
        for bad in [
            "date,cum_confirmed,cum_deaths\n2020-01-22,0,0\n2020-01-21,1,0\n",
            "date,cum_confirmed,cum_deaths\n2020-01-21,5,0\n2020-01-22,4,0\n",
            "date,cum_confirmed,cum_deaths\n2020-01-21,5,-1\n",
            "date,cum_confirmed,cum_deaths\nJan 21,5,0\n",
            "date,cum_confirmed,cum_deaths\n",
        ] {
            assert!(matches!(ObservedSeries::from_csv(bad.as_bytes()), Err(Error::Parse(_))), "{bad}");
        }
    }

    fn bowl(p: &CalibrationParams) -> Result<Vec<f64>> {
        let a = (p.pop_infected - 100_000.0) / 300_000.0;
        let b = (p.beta_initial - 0.006) / 0.01;
        Ok(vec![a * a + b * b])
    }

    #[test]
    fn single_trial_returns_the_sampled_point() {
        let spec = CalibrationSpec { trials: 1, ..CalibrationSpec::default() };
        let out = search_with(&spec, bowl).unwrap();
        assert_eq!(out.trials.len(), 1);
        assert_eq!(out.best, out.trials[0].params);
        assert_eq!(out.best_loss, out.trials[0].loss.unwrap());
    }

    #[test]
    fn search_is_deterministic_and_incumbent_never_worsens() {
        let spec = CalibrationSpec { trials: 40, seed: 9, ..CalibrationSpec::default() };
        let a = search_with(&spec, bowl).unwrap();
        assert_eq!(a, search_with(&spec, bowl).unwrap());
        let best: Vec<f64> = a.trials.iter().map(|t| t.best_so_far.unwrap()).collect();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*best.last().unwrap(), a.best_loss);
        assert_eq!(a.trials.iter().filter(|t| t.phase == Phase::Global).count(), 28);
        assert!((a.best.beta_initial - 0.006).abs() < 0.001, "{:?}", a.best);
        let mut log = Vec::new();
        a.write_trial_log(&mut log).unwrap();
        assert_eq!(String::from_utf8(log).unwrap().lines().count(), 41);
    }

    #[test]
    fn failed_trials_are_logged_and_skipped() {
        let spec = CalibrationSpec { trials: 20, ..CalibrationSpec::default() };
        let flaky = |p: &CalibrationParams| {
            if p.beta_initial > 0.007 {
                Err(Error::Training("boom".into()))
            } else {
                bowl(p)
            }
        };
        let out = search_with(&spec, flaky).unwrap();
        assert!(out.trials.iter().any(|t| t.loss.is_none() && t.error.is_some()));
        assert!(out.best.beta_initial <= 0.007);
        let all_fail = |_: &CalibrationParams| -> Result<Vec<f64>> { Err(Error::Training("boom".into())) };
        assert!(matches!(search_with(&spec, all_fail), Err(Error::Search(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for spec in [
            CalibrationSpec { trials: 0, ..CalibrationSpec::default() },
            CalibrationSpec { beta_range: [0.01, 0.001], ..CalibrationSpec::default() },
            CalibrationSpec { replications: 0, ..CalibrationSpec::default() },
        ] {
            assert!(spec.validate().is_err());
        }
    }

    #[test]
    fn latin_hypercube_fills_every_stratum() {
        let mut rng = substream(3, Stream::Search);
        let pts = latin_hypercube(10, &mut rng);
        for d in 0..2 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[d] * 10.0) as usize).collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn simulator_backed_loss_is_zero_on_its_own_output() {
        let mut setup = SimSetup::default();
        setup.population.pop_size = 500;
        setup.population.pop_infected = 10.0 * setup.population.pop_scale();
        let spec = CalibrationSpec { replications: 1, trials: 1, ..CalibrationSpec::default() };
        let schedule = crate::baselines::uk_approx_schedule();
        let obs = synthetic_observed(&setup, &schedule, spec.start_date, 60, &[spec.replication_seed(0)]).unwrap();
        let cal = Calibrator::new(setup.clone(), schedule, obs, spec).unwrap();
        assert_eq!(cal.n_days(), 60);
        let p = CalibrationParams {
            pop_infected: setup.population.pop_infected,
            beta_initial: setup.population.beta_initial,
        };
        assert_eq!(cal.replication_losses(&p).unwrap(), vec![0.0]);
        let mut fit = Vec::new();
        cal.write_fit_csv(&p, &mut fit).unwrap();
        assert_eq!(String::from_utf8(fit).unwrap().lines().count(), 61);
    }

    proptest! {
        #[test]
        fn loss_is_non_negative_and_zero_only_on_match(
            vals in prop::collection::vec((0.0f64..1e6, 0.0f64..1e4), 1..20),
            k in 0usize..20,
            bump in 1.0f64..100.0,
        ) {
            let mut acc = (0.0, 0.0);
            let cum: Vec<(f64, f64)> = vals.iter().map(|v| { acc.0 += v.0; acc.1 += v.1; acc }).collect();
            let obs = observed(&cum);
            let w = LossWeights::default();
            prop_assert_eq!(series_loss(&sim(&cum), &obs, &w).unwrap(), 0.0);
            let mut off = cum.clone();
            let k = k % off.len();
            off[k].0 += bump;
            prop_assert!(series_loss(&sim(&off), &obs, &w).unwrap() > 0.0);
        }
    }
}
