//! Population and disease parameters.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean contacts (or weights) per layer: household, school, work, community.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerValues {
    pub h: f64,
    pub s: f64,
    pub w: f64,
    pub c: f64,
}

impl LayerValues {
    pub fn as_array(&self) -> [f64; 4] {
        [self.h, self.s, self.w, self.c]
    }
}

/// A step function of age: `values[k]` applies to ages in
/// `[lower_bounds[k], lower_bounds[k + 1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeBanded {
    pub lower_bounds: Vec<f64>,
    pub values: Vec<f64>,
}

impl AgeBanded {
    pub fn constant(value: f64) -> Self {
        Self {
            lower_bounds: vec![0.0],
            values: vec![value],
        }
    }

    pub fn decades(values: Vec<f64>) -> Self {
        let lower_bounds = (0..values.len()).map(|k| 10.0 * k as f64).collect();
        Self {
            lower_bounds,
            values,
        }
    }

    pub fn lookup(&self, age: f64) -> f64 {
        let k = self.lower_bounds.partition_point(|&lb| lb <= age);
        self.values[k.saturating_sub(1)]
    }

    fn validate(&self, name: &str, probability: bool) -> Result<()> {
        if self.values.is_empty() || self.values.len() != self.lower_bounds.len() {
            return Err(Error::config(format!(
                "{name}: lower_bounds and values must be non-empty and equally long"
            )));
        }
        if self.lower_bounds[0] != 0.0 || self.lower_bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!(
                "{name}: lower_bounds must start at 0 and increase strictly"
            )));
        }
        for &v in &self.values {
            if !v.is_finite() || v < 0.0 || (probability && v > 1.0) {
                return Err(Error::config(format!("{name}: value {v} out of range")));
            }
        }
        Ok(())
    }
}

/// Age distribution: band `k` covers `[edges[k], edges[k + 1])` with weight `weights[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgePyramid {
    pub edges: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Default for AgePyramid {
    /// Coarse UK-like decades, 80+ folded into one band ending at 100.
    fn default() -> Self {
        Self {
            edges: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 100.0],
            weights: vec![0.12, 0.115, 0.13, 0.135, 0.13, 0.135, 0.11, 0.08, 0.045],
        }
    }
}

impl AgePyramid {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total: f64 = self.weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut band = self.weights.len() - 1;
        for (k, &w) in self.weights.iter().enumerate() {
            if u < w {
                band = k;
                break;
            }
            u -= w;
        }
        let (lo, hi) = (self.edges[band], self.edges[band + 1]);
        lo + rng.random::<f64>() * (hi - lo)
    }

    fn validate(&self) -> Result<()> {
        if self.weights.is_empty() || self.edges.len() != self.weights.len() + 1 {
            return Err(Error::config("age_pyramid: need len(edges) = len(weights) + 1"));
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("age_pyramid: edges must increase strictly"));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::config("age_pyramid: weights must be non-negative with positive sum"));
        }
        Ok(())
    }
}

/// Duration distribution in whole days; every sample is at least one day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DurationDist {
    /// Lognormal parameterized by its own mean and standard deviation.
    LogNormal { mean: f64, sd: f64 },
    /// Integer days drawn uniformly from `low..=high`.
    Uniform { low: u32, high: u32 },
    Fixed { days: u32 },
}

impl DurationDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let days = match *self {
            DurationDist::LogNormal { mean, sd } => {
                let sigma2 = (1.0 + (sd * sd) / (mean * mean)).ln();
                let mu = mean.ln() - 0.5 * sigma2;
                // validated: mean > 0, sd >= 0
                let x: f64 = LogNormal::new(mu, sigma2.sqrt())
                    .expect("validated lognormal")
                    .sample(rng);
                x.round() as u32
            }
            DurationDist::Uniform { low, high } => rng.random_range(low..=high),
            DurationDist::Fixed { days } => days,
        };
        days.max(1)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DurationDist::LogNormal { mean, .. } => mean,
            DurationDist::Uniform { low, high } => 0.5 * (low + high) as f64,
            DurationDist::Fixed { days } => days as f64,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            DurationDist::LogNormal { mean, sd } => mean.is_finite() && mean > 0.0 && sd.is_finite() && sd >= 0.0,
            DurationDist::Uniform { low, high } => low >= 1 && low <= high,
            DurationDist::Fixed { days } => days >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("{name}: invalid duration distribution {self:?}")))
        }
    }
}

/// Who is simulated and how they mix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    /// Real population represented by the agents.
    pub total_pop: f64,
    pub pop_size: usize,
    /// Initially infected persons on the real-population scale.
    pub pop_infected: f64,
    pub contacts: LayerValues,
    pub layer_weights: LayerValues,
    /// Per-contact per-day transmission probability.
    pub beta_initial: f64,
    /// Relative transmissibility of asymptomatic infectious agents.
    pub asymp_factor: f64,
    pub sus_odds_ratios: AgeBanded,
    pub age_pyramid: AgePyramid,
    /// Ages in `[school_age[0], school_age[1])` attend school.
    pub school_age: [f64; 2],
    /// Ages in `[work_age[0], work_age[1])` attend a workplace.
    pub work_age: [f64; 2],
    pub school_size: usize,
    pub workplace_size: usize,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            total_pop: 67.86e6,
            pop_size: 10_000,
            pop_infected: 5856.0,
            contacts: LayerValues {
                h: 3.0,
                s: 20.0,
                w: 20.0,
                c: 20.0,
            },
            layer_weights: LayerValues {
                h: 1.0,
                s: 1.0,
                w: 1.0,
                c: 1.0,
            },
            beta_initial: 0.005997,
            asymp_factor: 2.0,
            sus_odds_ratios: AgeBanded {
                lower_bounds: vec![0.0, 10.0, 20.0],
                values: vec![1.0, 1.0, 1.0],
            },
            age_pyramid: AgePyramid::default(),
            school_age: [6.0, 22.0],
            work_age: [22.0, 65.0],
            school_size: 200,
            workplace_size: 40,
        }
    }
}

impl PopulationConfig {
    /// Real persons represented by one agent.
    pub fn pop_scale(&self) -> f64 {
        self.total_pop / self.pop_size as f64
    }

    /// Agents moved to Exposed at the start: `max(1, round(pop_infected / pop_scale))`.
    pub fn seeded_agents(&self) -> usize {
        let raw = (self.pop_infected / self.pop_scale()).round();
        if raw < 1.0 {
            1
        } else {
            raw as usize
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 2 {
            return Err(Error::config("population.pop_size must be at least 2"));
        }
        if !(self.total_pop.is_finite() && self.total_pop > 0.0) {
            return Err(Error::config("population.total_pop must be positive"));
        }
        if !(self.pop_infected.is_finite() && self.pop_infected >= 0.0) {
            return Err(Error::config("population.pop_infected must be non-negative"));
        }
        if !(self.beta_initial > 0.0 && self.beta_initial < 1.0) {
            return Err(Error::config("population.beta_initial must lie in (0, 1)"));
        }
        if self.contacts.as_array().iter().any(|&c| !(c.is_finite() && c > 0.0)) {
            return Err(Error::config("population.contacts must all be positive"));
        }
        if self.layer_weights.as_array().iter().any(|&w| !(w.is_finite() && w >= 0.0)) {
            return Err(Error::config("population.layer_weights must be non-negative"));
        }
        if !(self.asymp_factor.is_finite() && self.asymp_factor >= 0.0) {
            return Err(Error::config("population.asymp_factor must be non-negative"));
        }
        if self.school_size < 2 || self.workplace_size < 2 {
            return Err(Error::config("school_size and workplace_size must be at least 2"));
        }
        self.sus_odds_ratios.validate("population.sus_odds_ratios", false)?;
        self.age_pyramid.validate()
    }
}

/// Natural history of infection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiseaseConfig {
    /// Exposed to infectious.
    pub latent_duration: DurationDist,
    /// Infectious to recovered (asymptomatic and non-severe courses).
    pub infectious_duration: DurationDist,
    /// Mild infectious to severe, for courses that become severe.
    pub severe_onset_delay: DurationDist,
    /// Severe to recovered or dead.
    pub severe_duration: DurationDist,
    pub prob_symptomatic: AgeBanded,
    pub prob_severe_given_symptomatic: AgeBanded,
    pub prob_death_given_severe: AgeBanded,
}

impl Default for DiseaseConfig {
    fn default() -> Self {
        Self {
            latent_duration: DurationDist::LogNormal { mean: 4.5, sd: 1.5 },
            infectious_duration: DurationDist::LogNormal { mean: 8.0, sd: 2.0 },
            severe_onset_delay: DurationDist::Uniform { low: 5, high: 8 },
            severe_duration: DurationDist::LogNormal { mean: 8.0, sd: 2.0 },
            prob_symptomatic: AgeBanded::decades(vec![
                0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90,
            ]),
            prob_severe_given_symptomatic: AgeBanded::decades(vec![
                0.001, 0.001, 0.011, 0.034, 0.043, 0.082, 0.118, 0.166, 0.184,
            ]),
            prob_death_given_severe: AgeBanded::decades(vec![
                0.04, 0.036, 0.015, 0.0145, 0.0326, 0.043, 0.081, 0.173, 0.50,
            ]),
        }
    }
}

impl DiseaseConfig {
    pub fn validate(&self) -> Result<()> {
        self.latent_duration.validate("disease.latent_duration")?;
        self.infectious_duration.validate("disease.infectious_duration")?;
        self.severe_onset_delay.validate("disease.severe_onset_delay")?;
        self.severe_duration.validate("disease.severe_duration")?;
        self.prob_symptomatic.validate("disease.prob_symptomatic", true)?;
        self.prob_severe_given_symptomatic
            .validate("disease.prob_severe_given_symptomatic", true)?;
        self.prob_death_given_severe
            .validate("disease.prob_death_given_severe", true)
    }

    pub fn mean_infectious_duration(&self) -> f64 {
        self.infectious_duration.mean()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    #[test]
    fn pop_scale_matches_table_defaults() {
        let cfg = PopulationConfig::default();
        assert_eq!(cfg.pop_scale(), 6786.0);
    }

    #[test]
    fn scaled_seeding() {
        let mut cfg = PopulationConfig::default();
        assert_eq!(cfg.seeded_agents(), 1);
        cfg.pop_infected = 0.0;
        assert_eq!(cfg.seeded_agents(), 1);
        cfg.pop_infected = 67_860.0;
        assert_eq!(cfg.seeded_agents(), 10);
    }

    #[test]
    fn age_band_lookup() {
        let t = AgeBanded::decades(vec![1.0, 2.0, 3.0]);
        assert_eq!(t.lookup(0.0), 1.0);
        assert_eq!(t.lookup(9.99), 1.0);
        assert_eq!(t.lookup(10.0), 2.0);
        assert_eq!(t.lookup(95.0), 3.0);
    }

    #[test]
    fn durations_are_at_least_one_day() {
        let mut rng = substream(3, Stream::Progression);
        let d = DurationDist::LogNormal { mean: 0.2, sd: 0.1 };
        assert!((0..500).all(|_| d.sample(&mut rng) >= 1));
        let u = DurationDist::Uniform { low: 5, high: 8 };
        assert!((0..500).map(|_| u.sample(&mut rng)).all(|x| (5..=8).contains(&x)));
    }

    #[test]
    fn lognormal_mean_is_respected() {
        let mut rng = substream(11, Stream::Progression);
        let d = DurationDist::LogNormal { mean: 8.0, sd: 2.0 };
        let n = 20_000;
        let mean = (0..n).map(|_| d.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean - 8.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = PopulationConfig::default();
        cfg.pop_size = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = PopulationConfig::default();
        cfg.beta_initial = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PopulationConfig::default();
        cfg.contacts.s = 0.0;
        assert!(cfg.validate().is_err());
        assert!(PopulationConfig::default().validate().is_ok());
        assert!(DiseaseConfig::default().validate().is_ok());
    }
}
