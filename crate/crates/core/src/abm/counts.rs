use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Stocks and flows of one simulated day, in agents.
///
/// `currently_quarantined` counts quarantined agents that are neither infected
/// nor dead, so `currently_infected + currently_quarantined + cumulative_dead`
/// never exceeds the population.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyCounts {
    pub day: u32,
    pub susceptible: u64,
    pub exposed: u64,
    /// All three infectious states.
    pub infectious: u64,
    pub recovered: u64,
    pub dead: u64,
    pub new_infections: u64,
    pub new_severe: u64,
    pub new_deaths: u64,
    pub new_recovered: u64,
    pub new_tests: u64,
    pub new_quarantined: u64,
    pub new_diagnoses: u64,
    pub cumulative_tests: u64,
    pub cumulative_quarantined: u64,
    pub cumulative_diagnoses: u64,
    /// Seeded agents plus every transmission so far.
    pub cumulative_infections: u64,
    /// Exposed plus infectious.
    pub currently_infected: u64,
    pub currently_quarantined: u64,
    pub cumulative_dead: u64,
}

impl DailyCounts {
    pub fn stock_total(&self) -> u64 {
        self.susceptible + self.exposed + self.infectious + self.recovered + self.dead
    }
}

/// Writes one CSV row per day with a header of field names.
pub fn write_counts_csv<W: Write>(writer: W, series: &[DailyCounts]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in series {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_counts_csv<R: std::io::Read>(reader: R) -> Result<Vec<DailyCounts>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_is_field_names() {
        let mut buf = Vec::new();
        write_counts_csv(&mut buf, &[DailyCounts::default()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("day,susceptible,exposed,infectious,recovered,dead,new_infections"));
        assert!(header.ends_with("currently_infected,currently_quarantined,cumulative_dead"));
        let back = read_counts_csv(text.as_bytes()).unwrap();
        assert_eq!(back, vec![DailyCounts::default()]);
    }
}
