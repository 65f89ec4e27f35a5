//! Post-hoc metrics: reproduction number, economic loss and strategy reports.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::abm::DailyCounts;
use crate::agents::EpisodeMetrics;
use crate::error::{Error, Result};
use crate::rewards::{economic_loss, DailyReward, RewardWeights};

/// One defined R_t estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtPoint {
    pub day: u32,
    pub rt: f64,
    /// Window mean of currently infectious agents behind the estimate.
    pub mean_infectious: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RtSeries {
    pub window: usize,
    pub points: Vec<RtPoint>,
}

/// Ratio estimator of the effective reproduction number.
///
/// For each day the trailing `window` days (fewer at the start of the series)
/// are averaged; `R_t = mean new infections / mean infectious * duration`.
/// Days whose window holds no infectious agent are omitted.
pub fn estimate_rt(series: &[DailyCounts], mean_infectious_duration: f64, window: usize) -> Result<RtSeries> {
    if series.is_empty() {
        return Err(Error::Shape("R_t needs a non-empty series".into()));
    }
    if !(mean_infectious_duration > 0.0) || window == 0 {
        return Err(Error::config("R_t needs a positive duration and window"));
    }
    let mut points = Vec::new();
    for (i, today) in series.iter().enumerate() {
        let span = &series[(i + 1).saturating_sub(window)..=i];
        let infectious: u64 = span.iter().map(|c| c.infectious).sum();
        if infectious == 0 {
            continue;
        }
        let new: u64 = span.iter().map(|c| c.new_infections).sum();
        points.push(RtPoint {
            day: today.day,
            rt: new as f64 / infectious as f64 * mean_infectious_duration,
            mean_infectious: infectious as f64 / span.len() as f64,
        });
    }
    Ok(RtSeries { window, points })
}

impl RtSeries {
    /// First day R_t drops below 1 after having been at or above it, and stays
    /// below for `sustain` further estimates (or until the series ends).
    ///
    /// Only estimates backed by at least `min_infectious` agents on average are
    /// considered, which screens out the noise of the first few cases.
    pub fn crossing_day(&self, min_infectious: f64, sustain: usize) -> Option<u32> {
        let pts: Vec<&RtPoint> = self.points.iter().filter(|p| p.mean_infectious >= min_infectious).collect();
        let mut above = false;
        for (i, p) in pts.iter().enumerate() {
            if p.rt >= 1.0 {
                above = true;
                continue;
            }
            if above && pts[i..].iter().take(sustain + 1).all(|q| q.rt < 1.0) {
                return Some(p.day);
            }
        }
        None
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["day", "rt"])?;
        for p in &self.points {
            w.write_record([p.day.to_string(), p.rt.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean daily economic loss of a trace, as a percentage.
pub fn aggregate_economic_loss(trace: &[DailyReward], w: &RewardWeights) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let total: f64 = trace.iter().map(|d| economic_loss(d.r_e, d.population, w)).sum();
    100.0 * total / trace.len() as f64
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

/// Settings for the R_t column of a comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtSettings {
    pub window: usize,
    /// Minimum infectious agents, as a fraction of the population, for an
    /// estimate to count towards the crossing day.
    pub min_infectious_fraction: f64,
    pub sustain: usize,
}

impl Default for RtSettings {
    fn default() -> Self {
        Self {
            window: 7,
            min_infectious_fraction: 0.01,
            sustain: 7,
        }
    }
}

impl RtSettings {
    pub fn crossing_day(&self, series: &[DailyCounts], mean_infectious_duration: f64) -> Result<Option<u32>> {
        let population = series.first().map_or(0, |c| c.stock_total()) as f64;
        let rt = estimate_rt(series, mean_infectious_duration, self.window)?;
        Ok(rt.crossing_day(self.min_infectious_fraction * population, self.sustain))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub name: String,
    pub episodes: usize,
    pub cumulative_infections: Summary,
    pub deaths: Summary,
    /// Percent.
    pub economic_loss: Summary,
    pub total_return: Summary,
    /// Over the episodes in which R_t crosses below 1.
    pub rt_crossing_day: Summary,
    pub rt_crossings: usize,
    /// Per-seed crossing day, aligned with the report's sorted `seeds`.
    pub crossing_days: Vec<Option<u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<StrategyRow>,
}

/// Summarizes strategies evaluated on one common seed set.
pub fn compare_strategies(
    strategies: &[(String, Vec<EpisodeMetrics>)],
    mean_infectious_duration: f64,
    rt: &RtSettings,
) -> Result<ComparisonReport> {
    if strategies.len() < 2 {
        return Err(Error::Protocol("a comparison needs at least two strategies".into()));
    }
    let mut seeds: Vec<u64> = strategies[0].1.iter().map(|m| m.seed).collect();
    seeds.sort_unstable();
    let mut rows = Vec::with_capacity(strategies.len());
    for (name, metrics) in strategies {
        let mut s: Vec<u64> = metrics.iter().map(|m| m.seed).collect();
        s.sort_unstable();
        if s != seeds {
            return Err(Error::Protocol(format!("strategy {name} was evaluated on a different seed set")));
        }
        let by_seed: Vec<&EpisodeMetrics> = seeds
            .iter()
            .map(|seed| metrics.iter().find(|m| m.seed == *seed).expect("seed sets match"))
            .collect();
        let col = |f: &dyn Fn(&EpisodeMetrics) -> f64| Summary::of(&by_seed.iter().map(|m| f(m)).collect::<Vec<_>>());
        let crossing_days = by_seed
            .iter()
            .map(|m| rt.crossing_day(&m.series, mean_infectious_duration))
            .collect::<Result<Vec<_>>>()?;
        let crossed: Vec<f64> = crossing_days.iter().flatten().map(|d| *d as f64).collect();
        rows.push(StrategyRow {
            name: name.clone(),
            episodes: by_seed.len(),
            cumulative_infections: col(&|m| m.cumulative_infections as f64),
            deaths: col(&|m| m.deaths as f64),
            economic_loss: col(&|m| 100.0 * m.mean_economic_loss),
            total_return: col(&|m| m.total_return),
            rt_crossing_day: Summary::of(&crossed),
            rt_crossings: crossed.len(),
            crossing_days,
        });
    }
    Ok(ComparisonReport { seeds, rows })
}

impl ComparisonReport {
    pub fn row(&self, name: &str) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "strategy",
            "episodes",
            "infections_mean",
            "infections_sd",
            "deaths_mean",
            "deaths_sd",
            "economic_loss_pct_mean",
            "economic_loss_pct_sd",
            "return_mean",
            "return_sd",
            "rt_crossing_day_mean",
            "rt_crossing_day_sd",
            "rt_crossings",
        ])?;
        for r in &self.rows {
            let mut rec = vec![r.name.clone(), r.episodes.to_string()];
            for s in [r.cumulative_infections, r.deaths, r.economic_loss, r.total_return, r.rt_crossing_day] {
                rec.push(s.mean.to_string());
                rec.push(s.sd.to_string());
            }
            rec.push(r.rt_crossings.to_string());
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "seeds: {}", seeds.join(" "));
        let _ = writeln!(
            out,
            "{:<20} {:>20} {:>16} {:>16} {:>22} {:>18}",
            "strategy", "infections", "deaths", "loss %", "return", "R_t < 1 from day"
        );
        let pm = |s: Summary, p: usize| format!("{:.p$} ± {:.p$}", s.mean, s.sd);
        for r in &self.rows {
            let crossing = if r.rt_crossings == 0 {
                "never".to_string()
            } else {
                format!("{} ({}/{})", pm(r.rt_crossing_day, 1), r.rt_crossings, r.episodes)
            };
            let _ = writeln!(
                out,
                "{:<20} {:>20} {:>16} {:>16} {:>22} {:>18}",
                r.name,
                pm(r.cumulative_infections, 1),
                pm(r.deaths, 1),
                pm(r.economic_loss, 2),
                pm(r.total_return, 1),
                crossing
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abm::{run_simulation, SimSetup};
    use crate::interventions::Action;
    use proptest::prelude::*;

    fn counts(day: u32, infectious: u64, new_infections: u64) -> DailyCounts {
        DailyCounts {
            day,
            susceptible: 1000 - infectious,
            infectious,
            new_infections,
            ..DailyCounts::default()
        }
    }

    #[test]
    fn zero_transmission_gives_zero() {
        let s: Vec<_> = (0..20).map(|d| counts(d, 10, 0)).collect();
        let rt = estimate_rt(&s, 8.0, 7).unwrap();
        assert_eq!(rt.points.len(), 20);
        assert!(rt.points.iter().all(|p| p.rt == 0.0));
    }

    #[test]
    fn steady_state_gives_one() {
        let s: Vec<_> = (0..30).map(|d| counts(d, 80, 10)).collect();
        let rt = estimate_rt(&s, 8.0, 7).unwrap();
        assert!(rt.points.iter().all(|p| (p.rt - 1.0).abs() < 1e-9));
    }

    #[test]
    fn days_without_infectious_are_omitted() {
        let mut s: Vec<_> = (0..10).map(|d| counts(d, 0, 0)).collect();
        s[6].infectious = 3;
        let rt = estimate_rt(&s, 8.0, 2).unwrap();
        assert_eq!(rt.points.iter().map(|p| p.day).collect::<Vec<_>>(), vec![6, 7]);
        assert!(estimate_rt(&s[..3], 8.0, 7).unwrap().points.is_empty());
        assert!(estimate_rt(&[], 8.0, 7).is_err());
    }

    #[test]
    fn uncontrolled_growth_phase_exceeds_one() {
        let mut setup = SimSetup::default();
        setup.population.pop_size = 2000;
        setup.population.pop_infected = 169_650.0;
        let series = run_simulation(&setup, 3, 80, 1, |_, _| Ok(Action::NULL)).unwrap();
        let rt = estimate_rt(&series, setup.disease.mean_infectious_duration(), 7).unwrap();
        let mut run = 0;
        let mut best = 0;
        for p in &rt.points {
            run = if p.rt > 1.0 { run + 1 } else { 0 };
            best = best.max(run);
        }
        assert!(best >= 5, "longest run above one: {best}");
    }

    #[test]
    fn crossing_requires_prior_growth_and_persistence() {
        let rt = |v: &[f64]| RtSeries {
            window: 7,
            points: v
                .iter()
                .enumerate()
                .map(|(i, &rt)| RtPoint { day: i as u32, rt, mean_infectious: 50.0 })
                .collect(),
        };
        assert_eq!(rt(&[0.5, 1.5, 1.2, 0.9, 0.8, 0.7]).crossing_day(1.0, 2), Some(3));
        assert_eq!(rt(&[0.5, 1.5, 0.9, 1.1, 0.8, 0.7]).crossing_day(1.0, 2), Some(4));
        assert_eq!(rt(&[0.5, 0.5, 0.5]).crossing_day(1.0, 2), None);
        assert_eq!(rt(&[1.5, 0.5]).crossing_day(100.0, 0), None);
    }

    #[test]
    fn null_trace_has_zero_loss() {
        let w = RewardWeights::default();
        let trace: Vec<DailyReward> = (0..14)
            .map(|d| crate::rewards::daily_reward(&counts(d, 0, 0), &Action::NULL, &w))
            .collect();
        assert_eq!(aggregate_economic_loss(&trace, &w), 0.0);
        assert_eq!(aggregate_economic_loss(&[], &w), 0.0);
    }

    #[test]
    fn constant_loss_is_reported_as_percent() {
        let w = RewardWeights::default();
        let population = 2000.0;
        let r_e = w.mu1 * population * (1.0 - 0.3801);
        let d = DailyReward {
            population,
            r_h: 0.0,
            r_h_scaled: 0.0,
            r_e,
            r_e_scaled: r_e,
            economic_loss: 0.3801,
            combined: 0.0,
        };
        let loss = aggregate_economic_loss(&vec![d; 10], &w);
        assert!((loss - 38.01).abs() < 1e-9, "{loss}");
    }

    fn metrics(seed: u64, infections: u64) -> EpisodeMetrics {
        EpisodeMetrics {
            seed,
            total_return: infections as f64,
            cumulative_infections: infections,
            deaths: 1,
            mean_economic_loss: 0.1,
            daily_actions: vec![],
            series: (0..20).map(|d| counts(d, 30, if d < 10 { 8 } else { 1 })).collect(),
            daily_losses: vec![],
        }
    }

    #[test]
    fn identical_strategies_give_identical_rows() {
        let m: Vec<_> = (0..4).map(|s| metrics(s, 100 + s)).collect();
        let r = compare_strategies(&[("a".into(), m.clone()), ("b".into(), m)], 8.0, &RtSettings::default()).unwrap();
        let mut b = r.rows[1].clone();
        b.name = "a".into();
        assert_eq!(r.rows[0], b);
        assert_eq!(r.rows[0].rt_crossings, 4);
        assert!(r.to_text().contains("R_t"));
    }

    #[test]
    fn report_is_permutation_invariant() {
        let a: Vec<_> = (0..4).map(|s| metrics(s, 100 + s)).collect();
        let mut b: Vec<_> = (0..4).map(|s| metrics(s, 300 - s)).collect();
        let s = RtSettings::default();
        let r1 = compare_strategies(&[("a".into(), a.clone()), ("b".into(), b.clone())], 8.0, &s).unwrap();
        b.reverse();
        let r2 = compare_strategies(&[("b".into(), b), ("a".into(), a)], 8.0, &s).unwrap();
        assert_eq!(r1.row("a").unwrap().cumulative_infections, r2.row("a").unwrap().cumulative_infections);
        assert_eq!(r1.row("b").unwrap().total_return, r2.row("b").unwrap().total_return);
        let mut csv = Vec::new();
        r1.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    }

    #[test]
    fn mismatched_seeds_are_rejected() {
        let a: Vec<_> = (0..4).map(|s| metrics(s, 1)).collect();
        let b: Vec<_> = (1..5).map(|s| metrics(s, 1)).collect();
        let s = RtSettings::default();
        assert!(matches!(
            compare_strategies(&[("a".into(), a.clone()), ("b".into(), b)], 8.0, &s),
            Err(Error::Protocol(_))
        ));
        assert!(matches!(compare_strategies(&[("a".into(), a)], 8.0, &s), Err(Error::Protocol(_))));
    }

    proptest! {
        #[test]
        fn rt_is_scale_free(
            rows in prop::collection::vec((0u64..50, 0u64..20), 1..40),
            k in 1u64..20,
            window in 1usize..10,
        ) {
            let s: Vec<_> = rows.iter().enumerate().map(|(d, &(i, n))| counts(d as u32, i, n)).collect();
            let scaled: Vec<_> = s
                .iter()
                .map(|c| DailyCounts { infectious: c.infectious * k, new_infections: c.new_infections * k, ..*c })
                .collect();
            let a = estimate_rt(&s, 8.0, window).unwrap();
            let b = estimate_rt(&scaled, 8.0, window).unwrap();
            prop_assert_eq!(a.points.len(), b.points.len());
            for (p, q) in a.points.iter().zip(&b.points) {
                prop_assert_eq!(p.day, q.day);
                prop_assert!((p.rt - q.rt).abs() <= 1e-12 * p.rt.max(1.0));
                prop_assert!(p.rt >= 0.0);
            }
        }
    }
}
