//! Fixed, non-learned intervention schedules.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interventions::Action;

/// Step function of the day: the latest entry starting at or before a day applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulePolicy {
    entries: Vec<(u32, Action)>,
    /// Repeat the schedule with this period, in days.
    period: Option<u32>,
}

impl SchedulePolicy {
    pub fn new(entries: Vec<(u32, Action)>) -> Result<Self> {
        if entries.first().map(|e| e.0) != Some(0) {
            return Err(Error::Parse("schedule must start at day 0".into()));
        }
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Parse(format!(
                    "schedule days must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        for (_, a) in &entries {
            a.validate_physical().map_err(|e| Error::Parse(e.to_string()))?;
        }
        Ok(Self { entries, period: None })
    }

    /// Schedule that never intervenes.
    pub fn null() -> Self {
        Self {
            entries: vec![(0, Action::NULL)],
            period: None,
        }
    }

    /// Repeats the schedule every `period` days.
    pub fn periodic(entries: Vec<(u32, Action)>, period: u32) -> Result<Self> {
        let mut s = Self::new(entries)?;
        if period == 0 || s.entries.last().is_some_and(|e| e.0 >= period) {
            return Err(Error::Parse("period must exceed every entry's start day".into()));
        }
        s.period = Some(period);
        Ok(s)
    }

    pub fn entries(&self) -> &[(u32, Action)] {
        &self.entries
    }

    pub fn action_at(&self, day: u32) -> Action {
        let d = self.period.map_or(day, |p| day % p);
        let k = self.entries.partition_point(|e| e.0 <= d);
        self.entries[k - 1].1
    }
}

/// Seven normal days followed by seven days at `ch_beta = 0.2`, repeating.
pub fn seven_work_seven_lockdown() -> SchedulePolicy {
    seven_work_seven_lockdown_with(0.0, 0.0)
}

/// As [`seven_work_seven_lockdown`] with constant testing and tracing levels.
pub fn seven_work_seven_lockdown_with(ch_tp: f64, ch_ctp: f64) -> SchedulePolicy {
    SchedulePolicy {
        entries: vec![
            (0, Action::new(1.0, ch_tp, ch_ctp)),
            (7, Action::new(0.2, ch_tp, ch_ctp)),
        ],
        period: Some(14),
    }
}

/// Parses a schedule CSV with header `day,ch_beta,ch_tp,ch_ctp`.
/// Lines starting with `#` are comments.
pub fn parse_schedule<R: Read>(reader: R) -> Result<SchedulePolicy> {
    #[derive(Deserialize)]
    struct Row {
        day: u32,
        ch_beta: f64,
        ch_tp: f64,
        ch_ctp: f64,
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut entries = Vec::new();
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("schedule row {}: {e}", i + 1)))?;
        entries.push((row.day, Action::new(row.ch_beta, row.ch_tp, row.ch_ctp)));
    }
    SchedulePolicy::new(entries)
}

/// Loads a schedule file; see [`parse_schedule`].
pub fn real_world_schedule(path: &Path) -> Result<SchedulePolicy> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_schedule(file).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// The approximate UK timeline shipped with the crate.
pub const UK_APPROX_SCHEDULE: &str = include_str!("../data/uk_approx_schedule.csv");

pub fn uk_approx_schedule() -> SchedulePolicy {
    parse_schedule(UK_APPROX_SCHEDULE.as_bytes()).expect("bundled schedule parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_work_seven_lockdown_days() {
        let s = seven_work_seven_lockdown();
        assert_eq!(s.action_at(3).ch_beta, 1.0);
        assert_eq!(s.action_at(10).ch_beta, 0.2);
        assert_eq!(s.action_at(14).ch_beta, 1.0);
        for d in 0..200 {
            assert_eq!(s.action_at(d), s.action_at(d + 14));
        }
    }

    #[test]
    fn single_change_step_function() {
        let s = parse_schedule("day,ch_beta,ch_tp,ch_ctp\n0,1,0,0\n60,0.5,0,0\n".as_bytes()).unwrap();
        assert_eq!(s.action_at(59), Action::NULL);
        assert_eq!(s.action_at(60), Action::new(0.5, 0.0, 0.0));
        let null = parse_schedule("day,ch_beta,ch_tp,ch_ctp\n0,1,0,0\n".as_bytes()).unwrap();
        assert!((0..200).all(|d| null.action_at(d) == SchedulePolicy::null().action_at(d)));
    }

    #[test]
    fn malformed_schedules_rejected() {
        for text in [
            "day,ch_beta,ch_tp,ch_ctp\n0,1,0,0\n10,0.5,0,0\n10,0.6,0,0\n",
            "day,ch_beta,ch_tp,ch_ctp\n5,1,0,0\n",
            "day,ch_beta,ch_tp,ch_ctp\n0,1,0\n",
            "day,ch_beta,ch_tp,ch_ctp\n0,1.5,0,0\n",
            "day,ch_beta,ch_tp,ch_ctp\n",
        ] {
            assert!(matches!(parse_schedule(text.as_bytes()), Err(Error::Parse(_))), "{text}");
        }
    }

    #[test]
    fn bundled_uk_schedule() {
        let s = uk_approx_schedule();
        let mut distinct: Vec<Action> = Vec::new();
        for (_, a) in s.entries() {
            if !distinct.contains(a) {
                distinct.push(*a);
            }
        }
        assert!(distinct.len() >= 3);
        assert_eq!(s.action_at(0), Action::NULL);
    }
}
