//! Deterministic agent-based SEIRD simulator with household, school, work and
//! community contact layers.

mod agent;
mod counts;
mod params;
mod population;
mod sim;

pub use agent::{Agent, EpiState};
pub use counts::{read_counts_csv, write_counts_csv, DailyCounts};
pub use params::{AgeBanded, AgePyramid, DiseaseConfig, DurationDist, LayerValues, PopulationConfig};
pub use population::{synthesize_population, Csr, Population};
pub use sim::{run_simulation, seed_infections, SimSetup, Simulation};
