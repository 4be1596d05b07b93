mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{AcceptanceFailure, SweepParam};
use config::{Format, InitialSource, RunConfig};
use entroflow::experiments::{ScenarioName, ScenarioSpec};
use entroflow::{IntegrateError, KernelFamily, Method, Schedule, StepControl};

const EXIT_IO: u8 = 1;
const EXIT_VALIDATION: u8 = 3;
const EXIT_INTEGRATION: u8 = 4;
const EXIT_ACCEPTANCE: u8 = 5;

/// Gradient flow of relative entropy for SNE and t-SNE.
///
/// Exit codes: 0 success, 1 I/O error, 2 usage error, 3 invalid input,
/// 4 integration failure, 5 failed checks under --assert.
#[derive(Parser)]
#[command(name = "entroflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario or a custom flow described by a config file.
    Run(Box<RunArgs>),
    /// Shorthand for `run scenario <NAME>`.
    Scenario(ScenarioArgs),
    /// Sample the kernel assumptions on a grid and print the report.
    VerifyKernel(VerifyArgs),
    /// Fit per-point bandwidths to a perplexity and write P.
    Calibrate(CalibrateArgs),
    /// Run one configuration per parameter value, concurrently.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    target: Option<RunTarget>,
}

#[derive(Subcommand)]
enum RunTarget {
    /// Run a named scenario: sym3, sym4, collapse3 or doubling.
    Scenario(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    name: ScenarioName,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Default, Clone)]
struct Overrides {
    /// cauchy, gaussian or power:<p>.
    #[arg(long)]
    kernel: Option<String>,
    /// Scenario affinity parameter.
    #[arg(long)]
    a: Option<f64>,
    /// Scenario initial half-width.
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Seed for a random initial configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Standard deviation of random initial coordinates.
    #[arg(long)]
    scale: Option<f64>,
    /// Embedding dimension for a random initial configuration.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Initial step (adaptive) or the step (fixed RK4).
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Log-spaced snapshots per decade.
    #[arg(long, conflicts_with = "snapshots")]
    per_decade: Option<usize>,
    /// Equally spaced snapshot count.
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    separation_threshold: Option<f64>,
    /// Output directory (default $ENTROFLOW_OUT/<name> or ./entroflow-out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats for the trajectory.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    /// Include coordinates in trajectory.csv.
    #[arg(long)]
    coords: bool,
    /// Exit with status 5 if any reported check fails.
    #[arg(long)]
    assert: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "rk45" | "dopri5" | "adaptive" => Ok(Method::Rk45Adaptive),
        "rk4" | "fixed" => Ok(Method::Rk4Fixed),
        _ => Err(format!("unknown method {s:?}; expected rk45 or rk4")),
    }
}

impl Overrides {
    /// Later values win field by field.
    fn merge(self, later: Overrides) -> Overrides {
        Overrides {
            kernel: later.kernel.or(self.kernel),
            a: later.a.or(self.a),
            x0: later.x0.or(self.x0),
            t_end: later.t_end.or(self.t_end),
            seed: later.seed.or(self.seed),
            scale: later.scale.or(self.scale),
            dim: later.dim.or(self.dim),
            method: later.method.or(self.method),
            dt: later.dt.or(self.dt),
            rel_tol: later.rel_tol.or(self.rel_tol),
            abs_tol: later.abs_tol.or(self.abs_tol),
            max_steps: later.max_steps.or(self.max_steps),
            per_decade: later.per_decade.or(self.per_decade),
            snapshots: later.snapshots.or(self.snapshots),
            separation_threshold: later.separation_threshold.or(self.separation_threshold),
            out: later.out.or(self.out),
            format: later.format.or(self.format),
            coords: self.coords || later.coords,
            assert: self.assert || later.assert,
        }
    }

    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(k) = &self.kernel {
            k.parse::<KernelFamily>()?;
            cfg.kernel = Some(k.clone());
        }
        if self.a.is_some() {
            cfg.a = self.a;
        }
        if self.x0.is_some() {
            cfg.x0 = self.x0;
        }
        if self.t_end.is_some() {
            cfg.t_end = self.t_end;
        }
        if self.seed.is_some() || self.scale.is_some() || self.dim.is_some() {
            match &mut cfg.initial {
                Some(InitialSource::Random { s, seed, scale }) => {
                    *seed = self.seed.unwrap_or(*seed);
                    *scale = self.scale.unwrap_or(*scale);
                    *s = self.dim.unwrap_or(*s);
                }
                None if cfg.scenario.is_none() => {
                    let Some(seed) = self.seed else {
                        return Err(entroflow::Error::InvalidConfiguration(
                            "a random initial configuration needs --seed".into(),
                        )
                        .into());
                    };
                    cfg.initial =
                        Some(InitialSource::Random { s: self.dim.unwrap_or(2), seed, scale: self.scale.unwrap_or(1.0) });
                }
                _ => {
                    return Err(entroflow::Error::InvalidConfiguration(
                        "--seed, --scale and --dim need a random initial configuration".into(),
                    )
                    .into())
                }
            }
        }
        let touches_control = self.method.is_some()
            || self.dt.is_some()
            || self.rel_tol.is_some()
            || self.abs_tol.is_some()
            || self.max_steps.is_some();
        if touches_control {
            let mut control = cfg.control.clone().unwrap_or_else(|| StepControl::for_horizon(horizon(cfg)));
            if let Some(m) = self.method {
                control.method = m;
            }
            if let Some(dt) = self.dt {
                control.dt_init = dt;
            }
            if let Some(v) = self.rel_tol {
                control.rel_tol = v;
            }
            if let Some(v) = self.abs_tol {
                control.abs_tol = v;
            }
            if let Some(v) = self.max_steps {
                control.max_steps = v;
            }
            cfg.control = Some(control);
        }
        if let Some(per_decade) = self.per_decade {
            cfg.schedule = Some(Schedule::Log { per_decade });
        }
        if let Some(count) = self.snapshots {
            cfg.schedule = Some(Schedule::Linear { count });
        }
        if self.separation_threshold.is_some() {
            cfg.separation_threshold = self.separation_threshold;
        }
        if let Some(f) = &self.format {
            cfg.output.formats = f.clone();
        }
        cfg.output.coords |= self.coords;
        Ok(())
    }
}

/// `t_end` the run will use, for sizing a default step control.
fn horizon(cfg: &RunConfig) -> f64 {
    if let Some(t) = cfg.t_end {
        return t;
    }
    match (cfg.scenario, cfg.kernel_family()) {
        (Some(name), Ok(kernel)) => ScenarioSpec::new(name, kernel).t_end,
        _ => 1e3,
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// cauchy, gaussian or power:<p>.
    kernel: String,
    /// Allow power exponents below one, which violate convexity.
    #[arg(long)]
    unchecked: bool,
    #[arg(long, default_value_t = 1000)]
    grid_points: usize,
    #[arg(long, default_value_t = 1e8)]
    grid_max: f64,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV (one point per row) or JSON dataset.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    perplexity: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Base configuration; alternatively give --scenario.
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<ScenarioName>,
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, default_value_t = std::thread::available_parallelism().map_or(1, |n| n.get()))]
    jobs: usize,
    #[command(flatten)]
    overrides: Overrides,
}

fn base_config(path: Option<&Path>) -> anyhow::Result<(RunConfig, PathBuf)> {
    match path {
        Some(p) => {
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((RunConfig::load(p)?, base))
        }
        None => Ok((RunConfig::default(), PathBuf::from("."))),
    }
}

fn run_once(mut cfg: RunConfig, base: &Path, overrides: Overrides) -> anyhow::Result<()> {
    overrides.apply(&mut cfg)?;
    let dir = commands::output_dir(overrides.out.as_deref(), &cfg);
    let outcome = commands::execute(&cfg, base, &dir, overrides.assert)?;
    commands::print_summary(&outcome);
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let (mut cfg, base) = base_config(args.config.as_deref())?;
            let overrides = match args.target {
                Some(RunTarget::Scenario(s)) => {
                    cfg.scenario = Some(s.name);
                    args.overrides.merge(s.overrides)
                }
                None => args.overrides,
            };
            run_once(cfg, &base, overrides)
        }
        Command::Scenario(s) => {
            let cfg = RunConfig { scenario: Some(s.name), ..Default::default() };
            run_once(cfg, Path::new("."), s.overrides)
        }
        Command::VerifyKernel(v) => {
            let family: KernelFamily = v.kernel.parse()?;
            let passed = commands::verify_kernel(family, v.unchecked, v.grid_points, v.grid_max, v.json)?;
            if v.assert && !passed {
                return Err(AcceptanceFailure(format!("kernel {family} fails its assumptions")).into());
            }
            Ok(())
        }
        Command::Calibrate(c) => {
            let dir = c.out.unwrap_or_else(|| {
                std::env::var_os(commands::OUT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("entroflow-out"))
                    .join("calibrate")
            });
            commands::calibrate(&c.dataset, c.perplexity, &dir)
        }
        Command::Sweep(s) => {
            let (mut cfg, base) = base_config(s.config.as_deref())?;
            if let Some(name) = s.scenario {
                cfg.scenario = Some(name);
            }
            s.overrides.apply(&mut cfg)?;
            let root = commands::output_dir(s.overrides.out.as_deref(), &cfg);
            let entries = commands::sweep(&cfg, &base, &root, s.param, &s.values, s.jobs, s.overrides.assert, exit_code)?;
            let mut worst = 0;
            for e in &entries {
                let status = match (&e.error, e.acceptance_passed) {
                    (Some(err), _) => format!("error (exit {}): {err}", e.exit_code),
                    (None, Some(true)) => "ok".to_string(),
                    (None, _) => "ok, some checks failed".to_string(),
                };
                println!("{} = {}: {status}", s.param.label(), e.value);
                worst = worst.max(e.exit_code);
            }
            println!("wrote {}", root.join("sweep.json").display());
            if worst != 0 {
                return Err(SweepFailure(worst).into());
            }
            Ok(())
        }
    }
}

/// Carries the worst per-run exit code out of a sweep.
#[derive(Debug)]
struct SweepFailure(u8);

impl std::fmt::Display for SweepFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "at least one sweep run failed")
    }
}

impl std::error::Error for SweepFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(SweepFailure(code)) = err.downcast_ref::<SweepFailure>() {
        return *code;
    }
    if err.downcast_ref::<AcceptanceFailure>().is_some() {
        return EXIT_ACCEPTANCE;
    }
    match err.downcast_ref::<IntegrateError>() {
        Some(IntegrateError::Invalid(_)) => return EXIT_VALIDATION,
        Some(_) => return EXIT_INTEGRATION,
        None => {}
    }
    match err.downcast_ref::<entroflow::Error>() {
        Some(entroflow::Error::Io(_)) => EXIT_IO,
        Some(_) => EXIT_VALIDATION,
        None => EXIT_IO,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
