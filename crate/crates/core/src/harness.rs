//! Seeded experiment runs, aggregation and report files.
//!
//! Run `i` of an experiment uses seed `base_seed + i`. The environment draws
//! from stream 0 of a ChaCha8 generator with that seed and the agent from
//! stream 1, so runs are independent of each other and of scheduling.
//! Results are always ordered by run index.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, RandomAgent};
use crate::error::{Error, Result};
use crate::essr::{EssrAgent, EssrConfig};
use crate::mdp::TabularMdp;
use crate::td::{FeatureMap, SfQAgent, SfQConfig};

/// z-value of the two-sided 95% normal interval.
const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "essr")]
    Essr,
    #[serde(rename = "sf-q")]
    SfQ,
    #[serde(rename = "baseline-random")]
    BaselineRandom,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Essr, AgentKind::SfQ, AgentKind::BaselineRandom];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Essr => "essr",
            AgentKind::SfQ => "sf-q",
            AgentKind::BaselineRandom => "baseline-random",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownAgent(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Built-in environment name or path to an environment file.
    pub environment: String,
    pub agent: AgentKind,
    pub essr: EssrConfig,
    pub sfq: SfQConfig,
    pub horizon: u64,
    pub num_runs: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Keep the per-step reward log of every run.
    pub log_steps: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            environment: "riverswim".into(),
            agent: AgentKind::Essr,
            essr: EssrConfig::default(),
            sfq: SfQConfig::default(),
            horizon: 5000,
            num_runs: 100,
            base_seed: 0,
            workers: 0,
            log_steps: false,
        }
    }
}

/// Parameters accepted by [`ExperimentSpec::set_parameter`] and sweeps.
pub const SWEEPABLE: &[&str] = &[
    "gamma",
    "beta",
    "alpha",
    "tau",
    "eval_tolerance",
    "epsilon_start",
    "epsilon_end",
    "epsilon_anneal_fraction",
    "max_bonus",
];

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if self.num_runs == 0 {
            return Err(Error::InvalidArgument("num_runs must be at least 1".into()));
        }
        match self.agent {
            AgentKind::Essr => self.essr.validate(),
            AgentKind::SfQ => self.sfq.validate(),
            AgentKind::BaselineRandom => Ok(()),
        }
    }

    pub fn resolve_environment(&self) -> Result<TabularMdp> {
        match TabularMdp::builtin(&self.environment) {
            Err(Error::UnknownEnvironment(name)) => {
                let path = Path::new(&self.environment);
                if path.is_file() {
                    TabularMdp::load(path)
                } else {
                    Err(Error::UnknownEnvironment(name))
                }
            }
            other => other,
        }
    }

    pub fn run_seed(&self, run_index: usize) -> u64 {
        self.base_seed.wrapping_add(run_index as u64)
    }

    /// Sets a hyperparameter by name. Shared names (`gamma`, `beta`) are set
    /// on every agent configuration.
    pub fn set_parameter(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "gamma" => {
                self.essr.gamma = value;
                self.sfq.gamma = value;
            }
            "beta" => {
                self.essr.beta = value;
                self.sfq.beta = value;
            }
            "alpha" => self.sfq.alpha = value,
            "tau" => self.sfq.tau = value,
            "eval_tolerance" => self.essr.eval_tolerance = value,
            "epsilon_start" => self.sfq.epsilon_start = value,
            "epsilon_end" => self.sfq.epsilon_end = value,
            "epsilon_anneal_fraction" => self.sfq.epsilon_anneal_fraction = value,
            "max_bonus" => self.sfq.max_bonus = Some(value),
            other => return Err(Error::UnknownParameter(other.to_string())),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub run_index: usize,
    pub seed: u64,
    /// Undiscounted extrinsic reward over the horizon.
    pub cumulative_reward: f64,
    /// Extrinsic reward plus the scaled bonus the agent paid itself.
    pub cumulative_augmented_reward: f64,
    pub step_rewards: Option<Vec<f64>>,
    #[serde(skip)]
    pub final_counts: DMatrix<u64>,
    /// Step at which each state was first occupied (0 for the start state).
    pub first_visits: Vec<Option<u64>>,
    pub wall_clock_ms: f64,
}

fn build_agent(spec: &ExperimentSpec, mdp: &TabularMdp, rng: ChaCha8Rng) -> Result<Box<dyn Agent>> {
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    Ok(match spec.agent {
        AgentKind::Essr => Box::new(EssrAgent::with_rng(n, m, spec.essr, rng)?),
        AgentKind::SfQ => Box::new(SfQAgent::with_features(
            FeatureMap::tabular(n),
            m,
            spec.sfq,
            spec.horizon,
            rng,
        )?),
        AgentKind::BaselineRandom => Box::new(RandomAgent::new(m, rng)),
    })
}

/// One independent run of `spec.horizon` steps.
pub fn run_single(spec: &ExperimentSpec, mdp: &TabularMdp, run_index: usize) -> Result<RunResult> {
    let started = Instant::now();
    let seed = spec.run_seed(run_index);
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent_rng = ChaCha8Rng::seed_from_u64(seed);
    agent_rng.set_stream(1);
    let mut agent = build_agent(spec, mdp, agent_rng)?;

    let n = mdp.num_states();
    let mut counts = DMatrix::<u64>::zeros(n, n);
    let mut first_visits = vec![None; n];
    let mut log = spec.log_steps.then(|| Vec::with_capacity(spec.horizon as usize));
    let mut total = 0.0;
    let mut augmented = 0.0;

    let mut state = mdp.sample_start(&mut env_rng);
    first_visits[state] = Some(0);
    for step in 0..spec.horizon {
        let action = agent.act(state);
        let sample = mdp.sample_transition(state, action, &mut env_rng)?;
        agent.observe(&sample)?;
        total += sample.reward;
        augmented += sample.reward + agent.last_bonus();
        if let Some(log) = log.as_mut() {
            log.push(sample.reward);
        }
        counts[(state, sample.next_state)] += 1;
        state = sample.next_state;
        first_visits[state].get_or_insert(step + 1);
    }

    Ok(RunResult {
        run_index,
        seed,
        cumulative_reward: total,
        cumulative_augmented_reward: augmented,
        step_rewards: log,
        final_counts: counts,
        first_visits,
        wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Summary statistics over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub spec: ExperimentSpec,
    pub mean: f64,
    /// Sample standard deviation; undefined for a single run.
    pub std: Option<f64>,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: Option<f64>,
    pub runs: Vec<RunResult>,
}

/// `(mean, sample std, 95% half-width)`.
pub fn summary_stats(values: &[f64]) -> (f64, Option<f64>, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    (mean, Some(std), Some(Z_95 * std / n.sqrt()))
}

impl AggregateReport {
    pub fn from_runs(spec: ExperimentSpec, runs: Vec<RunResult>) -> Self {
        let values: Vec<f64> = runs.iter().map(|r| r.cumulative_reward).collect();
        let (mean, std, ci95) = summary_stats(&values);
        Self {
            spec,
            mean,
            std,
            ci95,
            runs,
        }
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.cumulative_reward).collect()
    }

    /// JSON summary: statistics plus an echo of the configuration.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "environment": self.spec.environment,
            "agent": self.spec.agent.as_str(),
            "runs": self.runs.len(),
            "horizon": self.spec.horizon,
            "base_seed": self.spec.base_seed,
            "mean": self.mean,
            "std": self.std,
            "ci95": self.ci95,
            "config": self.spec,
        })
    }
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs `spec.num_runs` independent runs in parallel and aggregates them.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<AggregateReport> {
    spec.validate()?;
    let mdp = spec.resolve_environment()?;
    let runs = with_pool(spec.workers, || {
        (0..spec.num_runs)
            .into_par_iter()
            .map(|i| run_single(spec, &mdp, i))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(AggregateReport::from_runs(spec.clone(), runs))
}

/// One experiment per value of `parameter`.
pub fn sweep(spec: &ExperimentSpec, parameter: &str, values: &[f64]) -> Result<Vec<(f64, AggregateReport)>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    if !SWEEPABLE.contains(&parameter) {
        return Err(Error::UnknownParameter(parameter.to_string()));
    }
    values
        .iter()
        .map(|&v| {
            let mut s = spec.clone();
            s.set_parameter(parameter, v)?;
            Ok((v, run_experiment(&s)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the per-run CSV (`run_index,seed,cumulative_reward,wall_clock_ms`)
/// or the JSON summary.
pub fn emit_report(report: &AggregateReport, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
            w.write_record(["run_index", "seed", "cumulative_reward", "wall_clock_ms"])
                .map_err(csv_err(path))?;
            for r in &report.runs {
                w.write_record([
                    r.run_index.to_string(),
                    r.seed.to_string(),
                    r.cumulative_reward.to_string(),
                    r.wall_clock_ms.to_string(),
                ])
                .map_err(csv_err(path))?;
            }
            w.flush().map_err(io_err(path))
        }
        ReportFormat::Json => {
            let file = File::create(path).map_err(io_err(path))?;
            let mut out = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut out, &report.summary_json()).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?;
            writeln!(out).map_err(io_err(path))?;
            out.flush().map_err(io_err(path))
        }
    }
}

/// `run_index,step,reward` for every logged run.
pub fn emit_step_log(report: &AggregateReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["run_index", "step", "reward"]).map_err(csv_err(path))?;
    for r in &report.runs {
        for (t, reward) in r.step_rewards.iter().flatten().enumerate() {
            w.write_record([r.run_index.to_string(), t.to_string(), reward.to_string()])
                .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Sweep summary, one row per value: `parameter,value,runs,mean,std,ci95`.
/// Undefined statistics are left empty.
pub fn emit_sweep(parameter: &str, results: &[(f64, AggregateReport)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["parameter", "value", "runs", "mean", "std", "ci95"])
        .map_err(csv_err(path))?;
    for (v, r) in results {
        w.write_record([
            parameter.to_string(),
            v.to_string(),
            r.runs.len().to_string(),
            r.mean.to_string(),
            fmt_opt(r.std),
            fmt_opt(r.ci95),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Median of first-passage times; runs that never arrive count as infinite.
pub fn median_first_passage(runs: &[RunResult], target: usize) -> f64 {
    let mut times: Vec<f64> = runs
        .iter()
        .map(|r| r.first_visits[target].map_or(f64::INFINITY, |t| t as f64))
        .collect();
    times.sort_by(f64::total_cmp);
    let n = times.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        times[n / 2]
    } else {
        (times[n / 2 - 1] + times[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(agent: AgentKind) -> ExperimentSpec {
        ExperimentSpec {
            agent,
            horizon: 200,
            num_runs: 3,
            base_seed: 17,
            log_steps: true,
            ..Default::default()
        }
    }

    #[test]
    fn horizon_one_is_one_reward() {
        let spec = ExperimentSpec {
            horizon: 1,
            ..small(AgentKind::BaselineRandom)
        };
        let report = run_experiment(&spec).unwrap();
        for r in &report.runs {
            assert_eq!(r.step_rewards.as_ref().unwrap().len(), 1);
            assert_eq!(r.cumulative_reward, r.step_rewards.as_ref().unwrap()[0]);
        }
        let spec = ExperimentSpec { horizon: 0, ..spec };
        assert!(run_experiment(&spec).is_err());
    }

    #[test]
    fn log_sums_to_cumulative_reward() {
        for kind in AgentKind::ALL {
            let report = run_experiment(&small(kind)).unwrap();
            for r in &report.runs {
                let sum: f64 = r.step_rewards.as_ref().unwrap().iter().sum();
                assert_eq!(sum, r.cumulative_reward);
                assert_eq!(r.final_counts.iter().sum::<u64>(), 200);
            }
        }
    }

    #[test]
    fn seeds_follow_run_index() {
        let report = run_experiment(&small(AgentKind::Essr)).unwrap();
        let seeds: Vec<u64> = report.runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![17, 18, 19]);
    }

    #[test]
    fn statistics() {
        let (mean, std, ci) = summary_stats(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, 2.5);
        let s = (5.0f64 / 3.0).sqrt();
        assert!((std.unwrap() - s).abs() < 1e-15);
        assert!((ci.unwrap() - 1.96 * s / 2.0).abs() < 1e-15);
        assert_eq!(summary_stats(&[7.0]), (7.0, None, None));
    }

    #[test]
    fn unknown_names() {
        assert!(matches!("dqn".parse::<AgentKind>(), Err(Error::UnknownAgent(_))));
        let spec = ExperimentSpec {
            environment: "nowhere".into(),
            ..small(AgentKind::Essr)
        };
        assert!(matches!(run_experiment(&spec), Err(Error::UnknownEnvironment(_))));
        assert!(matches!(
            sweep(&small(AgentKind::Essr), "lambda", &[1.0]),
            Err(Error::UnknownParameter(_))
        ));
        assert!(sweep(&small(AgentKind::Essr), "beta", &[]).is_err());
    }

    #[test]
    fn median_with_censoring() {
        let mk = |t: Option<u64>| RunResult {
            run_index: 0,
            seed: 0,
            cumulative_reward: 0.0,
            cumulative_augmented_reward: 0.0,
            step_rewards: None,
            final_counts: DMatrix::zeros(1, 1),
            first_visits: vec![t],
            wall_clock_ms: 0.0,
        };
        assert_eq!(median_first_passage(&[mk(Some(3)), mk(None), mk(Some(1))], 0), 3.0);
        assert_eq!(median_first_passage(&[mk(Some(3)), mk(Some(5))], 0), 4.0);
        assert!(median_first_passage(&[mk(None), mk(None), mk(Some(1))], 0).is_infinite());
    }
}
