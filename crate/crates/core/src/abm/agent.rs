use serde::{Deserialize, Serialize};

/// Per-agent epidemiological state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpiState {
    Susceptible,
    Exposed,
    InfectiousAsymptomatic,
    InfectiousMild,
    InfectiousSevere,
    Recovered,
    Dead,
}

impl EpiState {
    pub fn is_infectious(self) -> bool {
        matches!(
            self,
            EpiState::InfectiousAsymptomatic | EpiState::InfectiousMild | EpiState::InfectiousSevere
        )
    }

    /// Exposed or infectious.
    pub fn is_infected(self) -> bool {
        self == EpiState::Exposed || self.is_infectious()
    }

    pub fn is_symptomatic(self) -> bool {
        matches!(self, EpiState::InfectiousMild | EpiState::InfectiousSevere)
    }

    pub fn is_absorbing(self) -> bool {
        matches!(self, EpiState::Recovered | EpiState::Dead)
    }
}

/// One simulated person.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u32,
    pub age: f64,
    pub epi_state: EpiState,
    pub state_entry_day: u32,
    /// Day of the next scheduled state change, with its target in `next_state`.
    pub scheduled_transition_day: Option<u32>,
    pub next_state: Option<EpiState>,
    pub diagnosed: bool,
    pub last_tested_day: Option<u32>,
    /// Quarantine runs while `day < quarantined_until`.
    pub quarantined_until: Option<u32>,
    /// Day the pending test result returns.
    pub test_pending_until: Option<u32>,
    pub pending_result_positive: bool,
    pub household: u32,
    pub school: Option<u32>,
    pub workplace: Option<u32>,
}

impl Agent {
    pub fn new(id: u32, age: f64, household: u32) -> Self {
        Self {
            id,
            age,
            epi_state: EpiState::Susceptible,
            state_entry_day: 0,
            scheduled_transition_day: None,
            next_state: None,
            diagnosed: false,
            last_tested_day: None,
            quarantined_until: None,
            test_pending_until: None,
            pending_result_positive: false,
            household,
            school: None,
            workplace: None,
        }
    }

    pub fn is_quarantined(&self, day: u32) -> bool {
        self.quarantined_until.is_some_and(|until| day < until)
    }

    pub(crate) fn schedule(&mut self, day: u32, next: EpiState) {
        debug_assert!(day > self.state_entry_day || self.epi_state == EpiState::Susceptible);
        self.scheduled_transition_day = Some(day);
        self.next_state = Some(next);
    }

    pub(crate) fn enter(&mut self, state: EpiState, day: u32) {
        self.epi_state = state;
        self.state_entry_day = day;
        self.scheduled_transition_day = None;
        self.next_state = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_predicates() {
        assert!(EpiState::InfectiousSevere.is_infectious());
        assert!(!EpiState::Exposed.is_infectious());
        assert!(EpiState::Exposed.is_infected());
        assert!(EpiState::Dead.is_absorbing());
        assert!(!EpiState::InfectiousAsymptomatic.is_symptomatic());
    }

    #[test]
    fn quarantine_window_is_half_open() {
        let mut a = Agent::new(0, 30.0, 0);
        a.quarantined_until = Some(10);
        assert!(a.is_quarantined(9));
        assert!(!a.is_quarantined(10));
    }
}
