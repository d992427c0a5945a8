use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ssr_explore::harness::{self, emit_report, emit_step_log, emit_sweep, ReportFormat};
use ssr_explore::verify::{run_suite, Suite};
use ssr_explore::{AgentKind, AggregateReport, CountingScheme, ExperimentSpec, TabularMdp};

#[derive(Parser)]
#[command(name = "ssrx", version, about = "Run and verify SSR exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run independent seeded runs of one agent on one environment.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Repeat the experiment for each value of one parameter.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Parameter to vary (gamma, beta, alpha, tau, eval_tolerance, ...).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run randomized property suites.
    Verify {
        /// Suite name, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the built-in environments.
    Envs {
        /// Print the named environment in the text format.
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML file with experiment settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in environment name or path to an environment file.
    #[arg(long)]
    env: Option<String>,
    /// essr, sf-q or baseline-random.
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// algorithm1 or definition2.
    #[arg(long)]
    scheme: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; without it a JSON summary goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Also write per-step rewards next to the output file.
    #[arg(long)]
    log_steps: bool,
}

impl ExperimentArgs {
    fn spec(&self) -> anyhow::Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentSpec::default(),
        };
        if let Some(env) = &self.env {
            spec.environment = env.clone();
        }
        if let Some(agent) = &self.agent {
            spec.agent = agent.parse::<AgentKind>()?;
        }
        for (name, value) in [
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("tau", self.tau),
            ("alpha", self.alpha),
        ] {
            if let Some(v) = value {
                spec.set_parameter(name, v)?;
            }
        }
        if let Some(h) = self.horizon {
            spec.horizon = h;
        }
        if let Some(n) = self.runs {
            spec.num_runs = n;
        }
        if let Some(s) = self.seed {
            spec.base_seed = s;
        }
        if let Some(scheme) = &self.scheme {
            spec.essr.counting_scheme = scheme.parse::<CountingScheme>()?;
        }
        if let Some(w) = self.workers {
            spec.workers = w;
        }
        spec.log_steps |= self.log_steps;
        if spec.log_steps && self.out.is_none() {
            bail!("--log-steps needs --out");
        }
        Ok(spec)
    }
}

fn steps_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.steps.csv"))
}

fn describe(report: &AggregateReport) -> String {
    let opt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.1}"));
    format!(
        "{} on {}: mean {:.1}, std {}, ci95 {} over {} runs",
        report.spec.agent,
        report.spec.environment,
        report.mean,
        opt(report.std),
        opt(report.ci95),
        report.runs.len()
    )
}

fn run(exp: &ExperimentArgs) -> anyhow::Result<()> {
    let spec = exp.spec()?;
    let report = harness::run_experiment(&spec)?;
    eprintln!("{}", describe(&report));
    match &exp.out {
        Some(out) => {
            emit_report(&report, exp.format.into(), out)?;
            if spec.log_steps {
                emit_step_log(&report, &steps_path(out))?;
            }
        }
        None => println!("{}", serde_json_pretty(&report)?),
    }
    Ok(())
}

fn serde_json_pretty(report: &AggregateReport) -> anyhow::Result<String> {
    Ok(format!("{:#}", report.summary_json()))
}

fn sweep(exp: &ExperimentArgs, param: &str, values: &[f64]) -> anyhow::Result<()> {
    let spec = exp.spec()?;
    let results = harness::sweep(&spec, param, values)?;
    for (v, report) in &results {
        eprintln!("{param}={v}: {}", describe(report));
    }
    match &exp.out {
        Some(out) => emit_sweep(param, &results, out)?,
        None => {
            for (v, report) in &results {
                println!("{param}={v} {}", serde_json_pretty(report)?);
            }
        }
    }
    Ok(())
}

fn verify(suite: &str, trials: usize, seed: u64) -> anyhow::Result<bool> {
    let suites = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse::<Suite>()?]
    };
    let mut ok = true;
    for s in suites {
        let report = run_suite(s, trials, seed)?;
        println!("{report}");
        ok &= report.passed();
    }
    Ok(ok)
}

fn envs(show: Option<&str>) -> anyhow::Result<()> {
    match show {
        Some(name) => print!("{}", TabularMdp::builtin(name)?.to_text()),
        None => {
            for name in TabularMdp::builtin_names() {
                match TabularMdp::builtin(name) {
                    Ok(mdp) => println!("{name}\t{} states\t{} actions", mdp.num_states(), mdp.num_actions()),
                    Err(_) => println!("{name}\tk states\t1 action"),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { exp } => run(exp).map(|_| true),
        Command::Sweep { exp, param, values } => sweep(exp, param, values).map(|_| true),
        Command::Verify { suite, trials, seed } => verify(suite, *trials, *seed),
        Command::Envs { show } => envs(show.as_deref()).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
