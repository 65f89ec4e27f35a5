//! Run configuration: one TOML document holding every numeric knob.
//!
//! Files are overlays on the built-in defaults. Tables merge key by key, and
//! `--set a.b.c=value` overrides apply last. Unknown keys are rejected so a
//! typo never silently falls back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::abm::{DiseaseConfig, PopulationConfig, SimSetup};
use crate::agents::{DqnConfig, PpoConfig};
use crate::analysis::RtSettings;
use crate::calibration::CalibrationSpec;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::interventions::InterventionConfig;
use crate::rewards::RewardWeights;

/// Environment variable naming a config file used when `--config` is absent.
pub const CONFIG_ENV_VAR: &str = "EPIRL_CONFIG";

/// The shipped defaults, identical to `Config::default()`.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../data/default_config.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub episodes: usize,
    /// Episodes between periodic checkpoints; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            checkpoint_every: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub seeds: Vec<u64>,
    pub rt: RtSettings,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=10).collect(),
            rt: RtSettings::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub population: PopulationConfig,
    pub disease: DiseaseConfig,
    pub interventions: InterventionConfig,
    pub env: EnvConfig,
    pub rewards: RewardWeights,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
    pub training: TrainingConfig,
    pub evaluation: EvaluationConfig,
    pub calibration: CalibrationSpec,
}

impl Config {
    pub fn sim_setup(&self) -> SimSetup {
        SimSetup {
            population: self.population.clone(),
            disease: self.disease.clone(),
            interventions: self.interventions.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_setup().validate()?;
        self.env.validate()?;
        self.rewards.validate()?;
        self.ppo.validate()?;
        self.dqn.validate()?;
        self.calibration.validate()?;
        if self.evaluation.seeds.is_empty() {
            return Err(Error::config("evaluation.seeds must not be empty"));
        }
        Ok(())
    }

    /// Resolved configuration as a TOML document.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    pub fn to_table(&self) -> Result<Table> {
        Table::try_from(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    /// Defaults, then each overlay in order, then `key=value` overrides.
    pub fn resolve(overlays: &[Table], overrides: &[String]) -> Result<Self> {
        let defaults = Config::default().to_table()?;
        let mut merged = defaults.clone();
        for overlay in overlays {
            check_known(&defaults, overlay, "")?;
            merge(&mut merged, overlay.clone());
        }
        for o in overrides {
            let overlay = parse_override(o)?;
            check_known(&defaults, &overlay, "")?;
            merge(&mut merged, overlay);
        }
        let cfg: Config = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or the file named by `EPIRL_CONFIG`) over the defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<(Self, Option<PathBuf>)> {
        let path = path
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV_VAR).map(PathBuf::from));
        let overlays = match &path {
            Some(p) => vec![read_table(p)?],
            None => Vec::new(),
        };
        Ok((Self::resolve(&overlays, overrides)?, path))
    }
}

pub fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_table(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Recursive table merge; non-table values in `overlay` replace.
pub fn merge(base: &mut Table, overlay: Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if !switches_kind(b, &o) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// A tagged table changing variant is replaced whole rather than merged.
fn switches_kind(base: &Table, overlay: &Table) -> bool {
    matches!((base.get("kind"), overlay.get("kind")), (Some(a), Some(b)) if a != b)
}

fn check_known(defaults: &Table, overlay: &Table, prefix: &str) -> Result<()> {
    for (k, v) in overlay {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (defaults.get(k), v) {
            (None, _) => return Err(Error::config(format!("unknown configuration key `{path}`"))),
            (Some(Value::Table(d)), Value::Table(o)) if !switches_kind(d, o) => check_known(d, o, &path)?,
            _ => {}
        }
    }
    Ok(())
}

/// `a.b.c=value` as a nested table. The value is read as TOML, falling back
/// to a bare string.
pub fn parse_override(text: &str) -> Result<Table> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{text}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::config(format!("override `{text}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut table = Table::new();
    let mut segments: Vec<&str> = key.split('.').collect();
    let last = segments.pop().expect("non-empty key");
    table.insert(last.to_string(), value);
    for seg in segments.into_iter().rev() {
        let mut outer = Table::new();
        outer.insert(seg.to_string(), Value::Table(table));
        table = outer;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_match_code() {
        let shipped = Config::resolve(&[parse_table(DEFAULT_CONFIG_TOML).unwrap()], &[]).unwrap();
        assert_eq!(shipped, Config::default());
        assert_eq!(parse_table(DEFAULT_CONFIG_TOML).unwrap(), Config::default().to_table().unwrap());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default();
        let back = Config::resolve(&[parse_table(&c.to_toml().unwrap()).unwrap()], &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overlays_merge_and_overrides_win() {
        let overlay = parse_table("[population]\npop_size = 2000\n[ppo]\nlearning_rate = 0.001\n").unwrap();
        let c = Config::resolve(
            &[overlay],
            &["population.pop_infected=169650".into(), "env.action_space_kind=discrete".into()],
        )
        .unwrap();
        assert_eq!(c.population.pop_size, 2000);
        assert_eq!(c.population.pop_infected, 169650.0);
        assert_eq!(c.population.beta_initial, PopulationConfig::default().beta_initial);
        assert_eq!(c.ppo.learning_rate, 0.001);
        assert_eq!(c.ppo.batch_size, PpoConfig::default().batch_size);
        assert_eq!(c.env.action_space_kind, crate::interventions::ActionSpaceKind::Discrete);
    }

    #[test]
    fn tagged_tables_can_switch_variant() {
        let overlay = parse_table("[disease.latent_duration]\nkind = \"fixed\"\ndays = 3\n");
        let overlay = overlay.unwrap();
        match Config::resolve(&[overlay], &[]) {
            Ok(c) => assert_ne!(c.disease.latent_duration, DiseaseConfig::default().latent_duration),
            Err(Error::Config(msg)) => assert!(!msg.contains("unknown configuration key"), "{msg}"),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        for bad in ["population.pop_sise=10", "nothing=1", "rewards.mu1=-1", "ppo.batch_size=\"x\""] {
            assert!(matches!(Config::resolve(&[], &[bad.into()]), Err(Error::Config(_))), "{bad}");
        }
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
    }

    #[test]
    fn override_values_parse_as_toml() {
        let t = parse_override("evaluation.seeds=[5, 6]").unwrap();
        assert_eq!(t["evaluation"]["seeds"].as_array().unwrap().len(), 2);
        let s = parse_override("calibration.start_date=2020-02-01").unwrap();
        assert!(s["calibration"]["start_date"].is_datetime() || s["calibration"]["start_date"].is_str());
        let c = Config::resolve(&[], &["calibration.start_date=\"2020-02-01\"".into()]).unwrap();
        assert_eq!(c.calibration.start_date.to_string(), "2020-02-01");
    }
}
