//! The workflows behind the `epirl` binary.
//!
//! Each command validates every input before touching the output directory,
//! writes `manifest.json` first, and removes a directory it created if a later
//! step fails.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{
    evaluate, load_checkpoint, save_checkpoint, train, write_curve_csv, AgentKind, Checkpoint, EpisodeMetrics,
    EvalPolicy, TrainOptions,
};
use crate::analysis::{compare_strategies, estimate_rt, ComparisonReport};
use crate::baselines::{real_world_schedule, seven_work_seven_lockdown, uk_approx_schedule, SchedulePolicy};
use crate::calibration::{Calibrator, ObservedSeries};
use crate::config::Config;
use crate::env::EpidemicEnv;
use crate::error::{Error, Result};
use crate::interventions::ActionSpaceKind;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

/// Where a policy comes from, as written on the command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicySpec {
    None,
    SevenWorkSevenLockdown,
    UkApprox,
    ScheduleFile(PathBuf),
    Checkpoint(PathBuf),
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::config(format!(
                "invalid policy `{s}`; expected none, schedule:7w7l, schedule:uk-approx, schedule:<file> or checkpoint:<file>"
            ))
        };
        match s.split_once(':') {
            None if s == "none" => Ok(PolicySpec::None),
            Some(("schedule", "7w7l")) => Ok(PolicySpec::SevenWorkSevenLockdown),
            Some(("schedule", "uk-approx")) => Ok(PolicySpec::UkApprox),
            Some(("schedule", p)) if !p.is_empty() => Ok(PolicySpec::ScheduleFile(p.into())),
            Some(("checkpoint", p)) if !p.is_empty() => Ok(PolicySpec::Checkpoint(p.into())),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicySpec::None => write!(f, "none"),
            PolicySpec::SevenWorkSevenLockdown => write!(f, "schedule:7w7l"),
            PolicySpec::UkApprox => write!(f, "schedule:uk-approx"),
            PolicySpec::ScheduleFile(p) => write!(f, "schedule:{}", p.display()),
            PolicySpec::Checkpoint(p) => write!(f, "checkpoint:{}", p.display()),
        }
    }
}

impl PolicySpec {
    /// Short name used in reports and file names.
    pub fn label(&self) -> String {
        let stem = |p: &Path| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "file".into())
        };
        match self {
            PolicySpec::None => "none".into(),
            PolicySpec::SevenWorkSevenLockdown => "7w7l".into(),
            PolicySpec::UkApprox => "uk-approx".into(),
            PolicySpec::ScheduleFile(p) => format!("schedule-{}", stem(p)),
            PolicySpec::Checkpoint(p) => format!("checkpoint-{}", stem(p)),
        }
    }

    pub fn file(&self) -> Option<&Path> {
        match self {
            PolicySpec::ScheduleFile(p) | PolicySpec::Checkpoint(p) => Some(p),
            _ => None,
        }
    }

    pub fn schedule(&self) -> Result<SchedulePolicy> {
        match self {
            PolicySpec::None => Ok(SchedulePolicy::null()),
            PolicySpec::SevenWorkSevenLockdown => Ok(seven_work_seven_lockdown()),
            PolicySpec::UkApprox => Ok(uk_approx_schedule()),
            PolicySpec::ScheduleFile(p) => real_world_schedule(p),
            PolicySpec::Checkpoint(_) => Err(Error::config(format!("`{self}` is not a schedule"))),
        }
    }

    pub fn load(&self) -> Result<EvalPolicy> {
        match self {
            PolicySpec::Checkpoint(p) => {
                let ckpt = load_checkpoint(p).map_err(|e| match e {
                    Error::FileIo { .. } | Error::Parse(_) => e,
                    other => Error::Parse(format!("{}: {other}", p.display())),
                })?;
                Ok(EvalPolicy::Agent(ckpt.agent))
            }
            _ => Ok(EvalPolicy::Schedule(self.schedule()?)),
        }
    }
}

/// Seed list: `a..b` (inclusive) or comma-separated values.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |_| Error::config(format!("invalid seed list `{text}`"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        (a..=b).collect()
    } else {
        text.split(',').map(|s| s.trim().parse().map_err(bad)).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(Error::config(format!("seed list `{text}` is empty")));
    }
    Ok(seeds)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Provenance of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seeds: Vec<u64>,
    pub parameters: BTreeMap<String, String>,
    pub config_file: Option<InputFile>,
    pub inputs: Vec<InputFile>,
    pub output_dir: String,
    pub outputs: Vec<String>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
}

/// Settings shared by every command.
#[derive(Clone, Debug)]
pub struct CommonArgs {
    pub config: Config,
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
}

impl CommonArgs {
    fn manifest(&self, command: &str, seeds: Vec<u64>) -> Result<RunManifest> {
        Ok(RunManifest {
            command: command.into(),
            tool_version: TOOL_VERSION.into(),
            seeds,
            parameters: BTreeMap::new(),
            config_file: self.config_path.as_deref().map(InputFile::hash).transpose()?,
            inputs: Vec::new(),
            output_dir: self.out.display().to_string(),
            outputs: Vec::new(),
            config: serde_json::to_value(&self.config)?,
        })
    }
}

/// Output directory that is removed again if the command does not finish.
struct OutputDir {
    path: PathBuf,
    created: bool,
    finished: bool,
}

impl OutputDir {
    fn open(path: &Path, manifest: &RunManifest) -> Result<Self> {
        let created = !path.exists();
        std::fs::create_dir_all(path).map_err(|e| Error::file(path, e))?;
        let dir = Self {
            path: path.to_path_buf(),
            created,
            finished: false,
        };
        dir.write(MANIFEST_FILE, |w| {
            serde_json::to_writer_pretty(&mut *w, manifest)?;
            writeln!(w)?;
            Ok(())
        })?;
        Ok(dir)
    }

    fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn write(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| Error::file(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::file(&path, e))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn finish(mut self) {
        self.finished = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if !self.finished && self.created {
            let _ = std::fs::remove_dir_all(&self.path);
        }
    }
}

/// Environment for `policy`: agents fix the action space they were trained on.
fn env_for(config: &Config, policy: &EvalPolicy) -> Result<EpidemicEnv> {
    let mut env_cfg = config.env.clone();
    if let EvalPolicy::Agent(agent) = policy {
        env_cfg.action_space_kind = agent.action_space_kind();
        if agent.input_dim() != env_cfg.observation_dim() {
            return Err(Error::config(format!(
                "agent expects {} observation components, the environment provides {}",
                agent.input_dim(),
                env_cfg.observation_dim()
            )));
        }
    }
    EpidemicEnv::new(config.sim_setup(), env_cfg, config.rewards.clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub cumulative_infections: u64,
    /// Cumulative infections on the real-population scale.
    pub cumulative_infections_scaled: f64,
    pub deaths: u64,
    pub economic_loss_pct: f64,
    pub total_return: f64,
    pub rt_crossing_day: Option<u32>,
}

fn summarize(config: &Config, m: &EpisodeMetrics) -> Result<EpisodeSummary> {
    let duration = config.disease.mean_infectious_duration();
    Ok(EpisodeSummary {
        seed: m.seed,
        cumulative_infections: m.cumulative_infections,
        cumulative_infections_scaled: m.cumulative_infections as f64 * config.population.pop_scale(),
        deaths: m.deaths,
        economic_loss_pct: 100.0 * m.mean_economic_loss,
        total_return: m.total_return,
        rt_crossing_day: config.evaluation.rt.crossing_day(&m.series, duration)?,
    })
}

fn write_actions(w: &mut impl Write, m: &EpisodeMetrics) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["day", "ch_beta", "ch_tp", "ch_ctp", "economic_loss"])?;
    for (d, (a, l)) in m.daily_actions.iter().zip(&m.daily_losses).enumerate() {
        c.write_record([d.to_string(), a.ch_beta.to_string(), a.ch_tp.to_string(), a.ch_ctp.to_string(), l.to_string()])?;
    }
    c.flush()?;
    Ok(())
}

fn write_episode_files(dir: &OutputDir, prefix: &str, config: &Config, m: &EpisodeMetrics) -> Result<()> {
    dir.write(&format!("{prefix}counts.csv"), |w| crate::abm::write_counts_csv(w, &m.series))?;
    dir.write(&format!("{prefix}actions.csv"), |w| write_actions(w, m))?;
    let rt = estimate_rt(&m.series, config.disease.mean_infectious_duration(), config.evaluation.rt.window)?;
    dir.write(&format!("{prefix}rt.csv"), |w| rt.write_csv(w))
}

/// One episode under `policy`; writes counts, actions, R_t and a summary.
pub fn simulate(common: &CommonArgs, policy: &PolicySpec, seed: u64) -> Result<EpisodeSummary> {
    let loaded = policy.load()?;
    let env = env_for(&common.config, &loaded)?;
    let mut manifest = common.manifest("simulate", vec![seed])?;
    manifest.parameters.insert("policy".into(), policy.to_string());
    manifest.inputs.extend(policy.file().map(InputFile::hash).transpose()?);
    manifest.outputs = ["counts.csv", "actions.csv", "rt.csv", "summary.json"].map(String::from).to_vec();
    let dir = OutputDir::open(&common.out, &manifest)?;
    let m = evaluate(&loaded, &env, &[seed])?.remove(0);
    write_episode_files(&dir, "", &common.config, &m)?;
    let summary = summarize(&common.config, &m)?;
    dir.write_json("summary.json", &summary)?;
    dir.finish();
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrateSummary {
    pub pop_infected: f64,
    pub beta_initial: f64,
    pub loss: f64,
    pub trials: usize,
    pub failed_trials: usize,
}

/// Fits `pop_infected` and `beta_initial` to an observed series.
///
/// `best_params.toml` is a config overlay that later commands accept via `--config`.
pub fn calibrate(
    common: &CommonArgs,
    data: &Path,
    schedule: &PolicySpec,
    trials: Option<usize>,
    seed: u64,
) -> Result<CalibrateSummary> {
    let file = File::open(data).map_err(|e| Error::file(data, e))?;
    let observed = ObservedSeries::from_csv(file).map_err(|e| Error::Parse(format!("{}: {e}", data.display())))?;
    let sched = schedule.schedule()?;
    let mut spec = common.config.calibration.clone();
    spec.seed = seed;
    if let Some(t) = trials {
        spec.trials = t;
    }
    let cal = Calibrator::new(common.config.sim_setup(), sched, observed, spec)?;
    let mut manifest = common.manifest("calibrate", vec![seed])?;
    manifest.parameters.insert("schedule".into(), schedule.to_string());
    manifest.parameters.insert("trials".into(), cal.spec.trials.to_string());
    manifest.inputs.push(InputFile::hash(data)?);
    manifest.inputs.extend(schedule.file().map(InputFile::hash).transpose()?);
    manifest.outputs = ["best_params.toml", "trials.csv", "fit.csv", "summary.json"].map(String::from).to_vec();
    let dir = OutputDir::open(&common.out, &manifest)?;
    let outcome = cal.search()?;
    dir.write("best_params.toml", |w| {
        writeln!(w, "[population]")?;
        writeln!(w, "pop_infected = {:?}", outcome.best.pop_infected)?;
        writeln!(w, "beta_initial = {:?}", outcome.best.beta_initial)?;
        Ok(())
    })?;
    dir.write("trials.csv", |w| outcome.write_trial_log(w))?;
    dir.write("fit.csv", |w| cal.write_fit_csv(&outcome.best, w))?;
    let summary = CalibrateSummary {
        pop_infected: outcome.best.pop_infected,
        beta_initial: outcome.best.beta_initial,
        loss: outcome.best_loss,
        trials: outcome.trials.len(),
        failed_trials: outcome.trials.iter().filter(|t| t.loss.is_none()).count(),
    };
    dir.write_json("summary.json", &summary)?;
    dir.finish();
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub agent: AgentKind,
    pub space: ActionSpaceKind,
    pub episodes: usize,
    pub leading_mean: Option<f64>,
    pub trailing_mean: Option<f64>,
}

/// Trains an agent; writes periodic checkpoints, the final checkpoint and the curve.
pub fn train_agent(
    common: &CommonArgs,
    agent: AgentKind,
    space: Option<ActionSpaceKind>,
    episodes: Option<usize>,
    seed: u64,
    resume: Option<&Path>,
) -> Result<TrainSummary> {
    let mut config = common.config.clone();
    let space = space.unwrap_or(match agent {
        AgentKind::Ppo => config.env.action_space_kind,
        AgentKind::Dqn => ActionSpaceKind::Discrete,
    });
    if agent == AgentKind::Dqn && space == ActionSpaceKind::Continuous {
        return Err(Error::config("dqn requires the discrete action space"));
    }
    config.env.action_space_kind = space;
    let total = episodes.unwrap_or(config.training.episodes);
    let resume_ckpt = resume.map(load_checkpoint).transpose()?;
    if let Some(c) = &resume_ckpt {
        if c.agent.kind() != agent || c.agent.action_space_kind() != space {
            return Err(Error::config("resume checkpoint was trained with a different agent or action space"));
        }
    }
    let mut env = EpidemicEnv::new(config.sim_setup(), config.env.clone(), config.rewards.clone())?;
    let mut manifest = common.manifest("train", vec![seed])?;
    manifest.config = serde_json::to_value(&config)?;
    manifest.parameters.insert("agent".into(), format!("{agent:?}").to_lowercase());
    manifest.parameters.insert("space".into(), format!("{space:?}").to_lowercase());
    manifest.parameters.insert("episodes".into(), total.to_string());
    manifest.inputs.extend(resume.map(InputFile::hash).transpose()?);
    manifest.outputs = ["checkpoint.json", "curve.csv", "summary.json", "checkpoints/"].map(String::from).to_vec();
    let dir = OutputDir::open(&common.out, &manifest)?;
    let opts = TrainOptions {
        total_episodes: total,
        seed,
        checkpoint_every: (config.training.checkpoint_every > 0).then_some(config.training.checkpoint_every),
        config_echo: manifest.config.clone(),
    };
    let ckpt_dir = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::file(&ckpt_dir, e))?;
    let mut on_ckpt = |c: &Checkpoint| {
        log::info!("checkpoint at episode {}", c.episodes_done);
        save_checkpoint(&ckpt_dir.join(format!("episode_{:06}.json", c.episodes_done)), c)
    };
    let out = train(&mut env, agent, &config.ppo, &config.dqn, &opts, resume_ckpt, &mut on_ckpt)?;
    save_checkpoint(&dir.join("checkpoint.json"), &out.checkpoint)?;
    dir.write("curve.csv", |w| write_curve_csv(w, out.curve()))?;
    let k = 50.min(out.curve().len() / 2).max(1);
    let means = crate::agents::train::leading_trailing_means(out.curve(), k);
    let summary = TrainSummary {
        agent,
        space,
        episodes: out.checkpoint.episodes_done,
        leading_mean: means.map(|m| m.0),
        trailing_mean: means.map(|m| m.1),
    };
    dir.write_json("summary.json", &summary)?;
    dir.finish();
    Ok(summary)
}

fn csv_row(s: &EpisodeSummary) -> Vec<String> {
    vec![
        s.seed.to_string(),
        s.cumulative_infections.to_string(),
        s.cumulative_infections_scaled.to_string(),
        s.deaths.to_string(),
        s.economic_loss_pct.to_string(),
        s.total_return.to_string(),
        s.rt_crossing_day.map(|d| d.to_string()).unwrap_or_default(),
    ]
}

const EPISODE_HEADER: [&str; 7] = [
    "seed",
    "cumulative_infections",
    "cumulative_infections_scaled",
    "deaths",
    "economic_loss_pct",
    "total_return",
    "rt_crossing_day",
];

/// Evaluates one policy on a seed set; writes per-episode metrics.
pub fn evaluate_policy(common: &CommonArgs, policy: &PolicySpec, seeds: &[u64]) -> Result<Vec<EpisodeSummary>> {
    let loaded = policy.load()?;
    let env = env_for(&common.config, &loaded)?;
    let mut manifest = common.manifest("evaluate", seeds.to_vec())?;
    manifest.parameters.insert("policy".into(), policy.to_string());
    manifest.inputs.extend(policy.file().map(InputFile::hash).transpose()?);
    manifest.outputs = vec!["episodes.csv".into(), "summary.json".into()];
    let dir = OutputDir::open(&common.out, &manifest)?;
    let metrics = evaluate(&loaded, &env, seeds)?;
    let rows = metrics.iter().map(|m| summarize(&common.config, m)).collect::<Result<Vec<_>>>()?;
    dir.write("episodes.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(EPISODE_HEADER)?;
        for r in &rows {
            c.write_record(csv_row(r))?;
        }
        c.flush()?;
        Ok(())
    })?;
    dir.write_json("summary.json", &rows)?;
    dir.finish();
    Ok(rows)
}

/// Evaluates several policies on one seed set; writes the comparison report,
/// per-episode R_t series and epidemic traces.
pub fn compare(common: &CommonArgs, policies: &[PolicySpec], seeds: &[u64]) -> Result<ComparisonReport> {
    if policies.len() < 2 {
        return Err(Error::config("compare needs at least two policies"));
    }
    let loaded = policies.iter().map(|p| p.load()).collect::<Result<Vec<_>>>()?;
    let envs = loaded.iter().map(|p| env_for(&common.config, p)).collect::<Result<Vec<_>>>()?;
    let mut labels: Vec<String> = Vec::new();
    for p in policies {
        let base = p.label();
        let mut label = base.clone();
        let mut k = 2;
        while labels.contains(&label) {
            label = format!("{base}-{k}");
            k += 1;
        }
        labels.push(label);
    }
    let mut manifest = common.manifest("compare", seeds.to_vec())?;
    for (i, p) in policies.iter().enumerate() {
        manifest.parameters.insert(format!("policy.{i}"), format!("{} = {p}", labels[i]));
        manifest.inputs.extend(p.file().map(InputFile::hash).transpose()?);
    }
    manifest.outputs = ["report.csv", "report.txt", "report.json", "episodes/"].map(String::from).to_vec();
    let dir = OutputDir::open(&common.out, &manifest)?;
    let mut strategies = Vec::with_capacity(policies.len());
    for ((label, policy), env) in labels.iter().zip(&loaded).zip(&envs) {
        log::info!("evaluating {label} on {} seeds", seeds.len());
        let metrics = evaluate(policy, env, seeds)?;
        for m in &metrics {
            write_episode_files(&dir, &format!("episodes/{label}/seed_{}_", m.seed), &common.config, m)?;
        }
        strategies.push((label.clone(), metrics));
    }
    let report = compare_strategies(
        &strategies,
        common.config.disease.mean_infectious_duration(),
        &common.config.evaluation.rt,
    )?;
    dir.write("report.csv", |w| report.write_csv(w))?;
    dir.write("report.txt", |w| Ok(w.write_all(report.to_text().as_bytes())?))?;
    dir.write_json("report.json", &report)?;
    dir.finish();
    Ok(report)
}

/// Whether an error stems from the invocation rather than the computation.
pub fn is_usage_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Parse(_) | Error::FileIo { .. } | Error::Alignment(_))
}
