//! Health reward, economic reward, action-change penalty and economic loss.
//!
//! All quantities are in agent units; the total population `P` is the sum of
//! the day's stocks.

use serde::{Deserialize, Serialize};

use crate::abm::DailyCounts;
use crate::error::{Error, Result};
use crate::interventions::{Action, ActionSpaceKind};

/// Coefficients of the reward terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    /// Weight of the health reward.
    pub lambda1: f64,
    /// Weight of the scaled economic reward.
    pub lambda2: f64,
    /// Weight of the action-change penalty (continuous actions only).
    pub lambda3: f64,
    /// Health weights for new infections, new severe cases and new deaths.
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
    /// Economic weights for output, testing, quarantine and lockdown.
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    /// Multiplier on `r_E / P` before combination.
    pub economic_scale: f64,
    /// When set, `r_H` is multiplied by `reference / P` before combination,
    /// so its weight relative to the economic term does not depend on the
    /// number of simulated agents. `None` uses `r_H` as is.
    pub health_reference_population: Option<f64>,
    /// Person-day equivalents charged per administered test.
    pub cost_per_test: f64,
    /// Person-day equivalents charged once per agent entering quarantine.
    pub quarantine_processing_cost: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            omega1: 1.0,
            omega2: 5.0,
            omega3: 100.0,
            mu1: 1.0,
            mu2: 0.5,
            mu3: 0.5,
            mu4: 1.0,
            economic_scale: 100.0,
            health_reference_population: Some(10_000.0),
            cost_per_test: 1.0,
            quarantine_processing_cost: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.omega1,
            self.omega2,
            self.omega3,
            self.mu1,
            self.mu2,
            self.mu3,
            self.mu4,
            self.economic_scale,
            self.cost_per_test,
            self.quarantine_processing_cost,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("reward weights must be finite"));
        }
        if let Some(r) = self.health_reference_population {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::config("rewards.health_reference_population must be positive"));
            }
        }
        if self.mu1 <= 0.0 {
            return Err(Error::config("rewards.mu1 must be positive"));
        }
        Ok(())
    }
}

/// `N_R - ω1 N_I - ω2 N_S - ω3 N_D`.
pub fn health_reward(counts: &DailyCounts, w: &RewardWeights) -> f64 {
    counts.new_recovered as f64
        - w.omega1 * counts.new_infections as f64
        - w.omega2 * counts.new_severe as f64
        - w.omega3 * counts.new_deaths as f64
}

/// `r_H` rescaled to the reference population, when one is configured.
pub fn scaled_health_reward(r_h: f64, population: f64, w: &RewardWeights) -> f64 {
    match w.health_reference_population {
        Some(reference) if population > 0.0 => r_h * reference / population,
        _ => r_h,
    }
}

/// Components of the economic reward for one day.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EconomicTerms {
    pub population: f64,
    /// Output of agents neither infected, quarantined nor dead.
    pub c_e: f64,
    pub c_t: f64,
    pub c_q: f64,
    pub c_beta: f64,
    pub r_e: f64,
    pub r_e_scaled: f64,
}

/// `r_E = μ1 C_E - μ2 C_T - μ3 C_Q - μ4 C_β` and its scaled form `κ r_E / P`.
pub fn economic_reward(counts: &DailyCounts, action: &Action, w: &RewardWeights) -> EconomicTerms {
    let p = counts.stock_total() as f64;
    let c_e = p
        - counts.currently_infected as f64
        - counts.currently_quarantined as f64
        - counts.cumulative_dead as f64;
    let c_beta = p * (1.0 - action.ch_beta);
    let c_t = w.cost_per_test * counts.new_tests as f64;
    let c_q = w.quarantine_processing_cost * counts.new_quarantined as f64;
    let r_e = w.mu1 * c_e - w.mu2 * c_t - w.mu3 * c_q - w.mu4 * c_beta;
    let r_e_scaled = if p > 0.0 { w.economic_scale * r_e / p } else { 0.0 };
    EconomicTerms {
        population: p,
        c_e,
        c_t,
        c_q,
        c_beta,
        r_e,
        r_e_scaled,
    }
}

/// Piecewise-linear penalty on large action changes, summed over components:
/// `-100 (d - 0.2)` when `d = |a_t - a_prev| > 0.2`, else 0.
pub fn action_penalty(a_t: &Action, a_prev: &Action, kind: ActionSpaceKind) -> Result<f64> {
    if kind != ActionSpaceKind::Continuous {
        return Err(Error::Protocol(
            "the action-change penalty applies to continuous actions only".into(),
        ));
    }
    Ok(a_t
        .to_array()
        .iter()
        .zip(a_prev.to_array())
        .map(|(x, y)| {
            let d = (x - y).abs();
            if d > 0.2 {
                -100.0 * (d - 0.2)
            } else {
                0.0
            }
        })
        .sum())
}

/// `λ1 r_H + λ2 r_E_scaled`, plus `λ3 r_P` when a penalty is supplied.
///
/// `r_h` is taken as given; see [`scaled_health_reward`].
pub fn combine(r_h: f64, r_e_scaled: f64, r_p: Option<f64>, w: &RewardWeights) -> f64 {
    let base = w.lambda1 * r_h + w.lambda2 * r_e_scaled;
    match r_p {
        Some(p) => base + w.lambda3 * p,
        None => base,
    }
}

/// Daily economic loss relative to the epidemic-free economy `μ1 P`, from the unscaled `r_E`.
pub fn economic_loss(r_e: f64, population: f64, w: &RewardWeights) -> f64 {
    let full = w.mu1 * population;
    (full - r_e) / full
}

/// Reward terms of one simulated day.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DailyReward {
    pub population: f64,
    pub r_h: f64,
    /// `r_H` after [`scaled_health_reward`]; this is what enters `combined`.
    pub r_h_scaled: f64,
    pub r_e: f64,
    pub r_e_scaled: f64,
    pub economic_loss: f64,
    /// `λ1 r_H + λ2 r_E_scaled` for the day.
    pub combined: f64,
}

pub fn daily_reward(counts: &DailyCounts, action: &Action, w: &RewardWeights) -> DailyReward {
    let r_h = health_reward(counts, w);
    let econ = economic_reward(counts, action, w);
    let r_h_scaled = scaled_health_reward(r_h, econ.population, w);
    DailyReward {
        population: econ.population,
        r_h,
        r_h_scaled,
        r_e: econ.r_e,
        r_e_scaled: econ.r_e_scaled,
        economic_loss: economic_loss(econ.r_e, econ.population, w),
        combined: combine(r_h_scaled, econ.r_e_scaled, None, w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(p: u64) -> DailyCounts {
        DailyCounts {
            susceptible: p,
            ..DailyCounts::default()
        }
    }

    fn unit_omega() -> RewardWeights {
        RewardWeights {
            omega1: 1.0,
            omega2: 1.0,
            omega3: 1.0,
            ..RewardWeights::default()
        }
    }

    #[test]
    fn health_reward_cases() {
        let w = unit_omega();
        assert_eq!(health_reward(&counts(100), &w), 0.0);
        let c = DailyCounts {
            new_recovered: 10,
            new_infections: 4,
            new_severe: 2,
            new_deaths: 1,
            ..counts(100)
        };
        assert_eq!(health_reward(&c, &w), 3.0);
        let c = DailyCounts {
            new_deaths: 1,
            ..counts(100)
        };
        let w = RewardWeights {
            omega3: 100.0,
            ..unit_omega()
        };
        assert_eq!(health_reward(&c, &w), -100.0);
    }

    #[test]
    fn economic_output_and_lockdown_cost() {
        let w = RewardWeights::default();
        let c = DailyCounts {
            susceptible: 9840,
            exposed: 40,
            infectious: 60,
            dead: 10,
            recovered: 50,
            currently_infected: 100,
            currently_quarantined: 50,
            cumulative_dead: 10,
            ..DailyCounts::default()
        };
        assert_eq!(c.stock_total(), 10_000);
        assert_eq!(economic_reward(&c, &Action::NULL, &w).c_e, 9840.0);
        assert_eq!(economic_reward(&c, &Action::NULL, &w).c_beta, 0.0);
        let e = economic_reward(&counts(10_000), &Action::new(0.6, 0.0, 0.0), &w);
        assert!((e.c_beta - 4000.0).abs() < 1e-9);
    }

    #[test]
    fn penalty_piecewise() {
        let k = ActionSpaceKind::Continuous;
        let a = Action::new(0.7, 0.4, 0.1);
        assert_eq!(action_penalty(&a, &a, k).unwrap(), 0.0);
        let b = Action::new(0.7, 0.7, 0.1);
        assert!((action_penalty(&b, &a, k).unwrap() + 10.0).abs() < 1e-9);
        // exactly 0.2 apart in binary arithmetic: 0.5 and 0.7 give 0.19999999999999996
        let c = Action::new(0.5, 0.25, 0.0);
        let d = Action::new(0.5, 0.25, 0.2);
        assert_eq!(action_penalty(&c, &d, k).unwrap(), 0.0);
        assert!(matches!(action_penalty(&a, &a, ActionSpaceKind::Discrete), Err(Error::Protocol(_))));
    }

    #[test]
    fn combination() {
        let w = RewardWeights::default();
        assert_eq!(combine(3.0, 2.0, None, &w), 5.0);
        assert_eq!(combine(3.0, 2.0, Some(-10.0), &w), -5.0);
        let zero = RewardWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            ..w
        };
        assert_eq!(combine(3.0, 2.0, Some(-10.0), &zero), 0.0);
    }

    #[test]
    fn health_scaling_to_reference() {
        let w = RewardWeights::default();
        assert_eq!(scaled_health_reward(-7.0, 10_000.0, &w), -7.0);
        assert_eq!(scaled_health_reward(-7.0, 2_000.0, &w), -35.0);
        let raw = RewardWeights {
            health_reference_population: None,
            ..w
        };
        assert_eq!(scaled_health_reward(-7.0, 2_000.0, &raw), -7.0);
    }

    #[test]
    fn economic_loss_cases() {
        let w = RewardWeights::default();
        let e = economic_reward(&counts(10_000), &Action::NULL, &w);
        assert_eq!(e.r_e, 10_000.0);
        assert_eq!(economic_loss(e.r_e, e.population, &w), 0.0);
        assert_eq!(economic_loss(0.0, 10_000.0, &w), 1.0);
        assert!((economic_loss(6199.0, 10_000.0, &w) - 0.3801).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn health_reward_is_linear(nr in 0u64..500, ni in 0u64..500, ns in 0u64..50, nd in 0u64..20) {
            let w = RewardWeights::default();
            let c = DailyCounts { new_recovered: nr, new_infections: ni, new_severe: ns, new_deaths: nd, ..counts(1000) };
            let c2 = DailyCounts { new_recovered: 2 * nr, new_infections: 2 * ni, new_severe: 2 * ns, new_deaths: 2 * nd, ..c };
            prop_assert!((health_reward(&c2, &w) - 2.0 * health_reward(&c, &w)).abs() < 1e-9);
        }

        #[test]
        fn loss_in_unit_interval_without_costs(mi in 0u64..300, mq in 0u64..300, md in 0u64..300) {
            let w = RewardWeights { mu2: 0.0, mu3: 0.0, mu4: 0.0, ..RewardWeights::default() };
            let c = DailyCounts { susceptible: 1000 - md, dead: md, currently_infected: mi, currently_quarantined: mq, cumulative_dead: md, ..DailyCounts::default() };
            let e = economic_reward(&c, &Action::new(0.5, 1.0, 1.0), &w);
            let loss = economic_loss(e.r_e, e.population, &w);
            prop_assert!((0.0..=1.0).contains(&loss));
        }

        #[test]
        fn penalty_is_continuous(x in 0.5f64..1.0, eps in -1e-7f64..1e-7) {
            let k = ActionSpaceKind::Continuous;
            let prev = Action::new(0.75, 0.5, 0.5);
            let a = action_penalty(&Action::new(x, 0.5, 0.5), &prev, k).unwrap();
            let b = action_penalty(&Action::new((x + eps).clamp(0.5, 1.0), 0.5, 0.5), &prev, k).unwrap();
            prop_assert!((a - b).abs() <= 100.0 * eps.abs() + 1e-12);
        }
    }
}
