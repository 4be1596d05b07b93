use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context;
use serde::Serialize;

use entroflow::affinity::{calibrate_bandwidths, conditional_probs, row_perplexity, symmetrize};
use entroflow::diagnostics::separation_check;
use entroflow::experiments::{assess, conservation_checks, run_with_oracle, standard_fits, ScalarOracle};
use entroflow::integrator::integrate;
use entroflow::io::{
    read_dataset, to_json, write_affinity, write_bandwidths, write_report, write_trajectory_csv,
    write_trajectory_json, OracleSummary, RunReport, SeparationReport,
};
use entroflow::kernel::{default_grid, verify_assumptions};
use entroflow::{IntegrateError, Kernel, KernelFamily, Trajectory};

use crate::config::{resolve, Format, Resolved, RunConfig};

pub const OUT_ENV: &str = "ENTROFLOW_OUT";
pub const DEFAULT_SEPARATION_THRESHOLD: f64 = 100.0;

/// Raised when `--assert` is set and a check fails.
#[derive(Debug)]
pub struct AcceptanceFailure(pub String);

impl fmt::Display for AcceptanceFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "acceptance failed: {}", self.0)
    }
}

impl std::error::Error for AcceptanceFailure {}

/// `--out` wins, then the config's `output.dir`, then `$ENTROFLOW_OUT/<name>`,
/// then `./entroflow-out/<name>`.
pub fn output_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = &cfg.output.dir {
        return dir.clone();
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("entroflow-out"));
    root.join(cfg.run_name())
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: RunReport,
}

fn write_trajectory(dir: &Path, cfg: &RunConfig, traj: &Trajectory) -> anyhow::Result<()> {
    for format in &cfg.output.formats {
        match format {
            Format::Csv => write_trajectory_csv(&dir.join("trajectory.csv"), traj, cfg.output.coords)?,
            Format::Json => write_trajectory_json(&dir.join("trajectory.json"), traj)?,
        }
    }
    Ok(())
}

/// Writes whatever was integrated before the failure, then passes the
/// error on.
fn keep_partial(dir: &Path, cfg: &RunConfig, err: IntegrateError) -> anyhow::Error {
    if let Some(partial) = err.partial() {
        if let Err(e) = write_trajectory(dir, cfg, partial) {
            eprintln!("warning: could not write partial trajectory: {e}");
        }
    }
    err.into()
}

/// Resolves, integrates and writes `config.json`, `trajectory.*` and
/// `report.json` into `dir`.
pub fn execute(cfg: &RunConfig, base: &Path, dir: &Path, assert: bool) -> anyhow::Result<RunOutcome> {
    let resolved = resolve(cfg, base)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.json"), to_json(cfg)?).with_context(|| format!("writing {}/config.json", dir.display()))?;
    let threshold = cfg.separation_threshold.unwrap_or(DEFAULT_SEPARATION_THRESHOLD);

    let report = match resolved {
        Resolved::Scenario(spec) => {
            let run = run_with_oracle(&spec).map_err(|e| keep_partial(dir, cfg, e))?;
            write_trajectory(dir, cfg, &run.trajectory)?;
            let oracle = match (&run.oracle, ScalarOracle::for_spec(&spec)?) {
                (Some(cmp), Some(o)) => Some(OracleSummary {
                    description: o.description().to_string(),
                    max_rel_discrepancy: cmp.max_rel_discrepancy,
                    max_symmetry_violation: cmp.max_symmetry_violation,
                }),
                _ => None,
            };
            RunReport {
                scenario: spec.name.to_string(),
                kernel: spec.kernel.to_string(),
                t_end: spec.t_end,
                exponent_fits: standard_fits(&run.trajectory, spec.t_end),
                separation: SeparationReport { threshold, min_ratio: separation_check(&run.trajectory, threshold) },
                oracle,
                acceptance: assess(&run),
                stats: run.trajectory.stats,
            }
        }
        Resolved::Custom(run) => {
            let kernel = Kernel::new(run.kernel)?;
            let traj = integrate(&run.initial, &run.affinity, &kernel, &run.control, run.t_end, &run.schedule)
                .map_err(|e| keep_partial(dir, cfg, e))?;
            write_trajectory(dir, cfg, &traj)?;
            RunReport {
                scenario: "custom".into(),
                kernel: run.kernel.to_string(),
                t_end: run.t_end,
                exponent_fits: standard_fits(&traj, run.t_end),
                separation: SeparationReport { threshold, min_ratio: separation_check(&traj, threshold) },
                oracle: None,
                acceptance: conservation_checks(&traj),
                stats: traj.stats,
            }
        }
    };
    write_report(&dir.join("report.json"), &report)?;
    if assert && !report.all_passed() {
        let failed: Vec<_> = report.acceptance.iter().filter(|c| !c.passed).map(|c| c.criterion.clone()).collect();
        return Err(AcceptanceFailure(failed.join(", ")).into());
    }
    Ok(RunOutcome { dir: dir.to_path_buf(), report })
}

pub fn print_summary(outcome: &RunOutcome) {
    let r = &outcome.report;
    println!("{} ({} kernel) to t = {}: {} steps, {} rejected", r.scenario, r.kernel, r.t_end, r.stats.accepted, r.stats.rejected);
    for fit in &r.exponent_fits {
        println!(
            "  fit {} over [{}, {}]: slope {:.4}, r^2 {:.5}",
            fit.quantity.as_str(), fit.window.0, fit.window.1, fit.slope, fit.r_squared
        );
    }
    if let Some(o) = &r.oracle {
        println!(
            "  scalar oracle: max relative discrepancy {:.2e}, symmetry violation {:.2e}",
            o.max_rel_discrepancy, o.max_symmetry_violation
        );
    }
    for c in &r.acceptance {
        println!("  [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.criterion, c.detail);
    }
    println!("  wrote {}", outcome.dir.display());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    A,
    X0,
    TEnd,
    Kernel,
    Seed,
}

impl SweepParam {
    pub fn label(self) -> &'static str {
        match self {
            SweepParam::A => "a",
            SweepParam::X0 => "x0",
            SweepParam::TEnd => "t_end",
            SweepParam::Kernel => "kernel",
            SweepParam::Seed => "seed",
        }
    }

    fn apply(self, cfg: &mut RunConfig, value: &str) -> anyhow::Result<()> {
        let num = || -> anyhow::Result<f64> {
            value.parse::<f64>().map_err(|_| entroflow::Error::InvalidParameter(format!("sweep value {value:?} is not a number")).into())
        };
        match self {
            SweepParam::A => cfg.a = Some(num()?),
            SweepParam::X0 => cfg.x0 = Some(num()?),
            SweepParam::TEnd => cfg.t_end = Some(num()?),
            SweepParam::Kernel => {
                value.parse::<KernelFamily>()?;
                cfg.kernel = Some(value.to_string());
            }
            SweepParam::Seed => {
                let seed = value
                    .parse::<u64>()
                    .map_err(|_| entroflow::Error::InvalidParameter(format!("seed {value:?} is not an integer")))?;
                match &mut cfg.initial {
                    Some(crate::config::InitialSource::Random { seed: s, .. }) => *s = seed,
                    _ => {
                        return Err(entroflow::Error::InvalidConfiguration(
                            "sweeping the seed needs a random initial configuration".into(),
                        )
                        .into())
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct SweepEntry {
    pub value: String,
    pub dir: PathBuf,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_passed: Option<bool>,
}

/// Runs one configuration per value on `jobs` threads, each in
/// `root/<param>=<value>`, and writes `root/sweep.json`.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    base_cfg: &RunConfig,
    base: &Path,
    root: &Path,
    param: SweepParam,
    values: &[String],
    jobs: usize,
    assert: bool,
    classify: fn(&anyhow::Error) -> u8,
) -> anyhow::Result<Vec<SweepEntry>> {
    fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SweepEntry>>> = Mutex::new((0..values.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, values.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(value) = values.get(i) else { break };
                let dir = root.join(format!("{}={}", param.label(), value));
                let mut cfg = base_cfg.clone();
                cfg.output.dir = None;
                let outcome = param.apply(&mut cfg, value).and_then(|_| execute(&cfg, base, &dir, assert));
                let entry = match outcome {
                    Ok(o) => SweepEntry {
                        value: value.clone(),
                        dir,
                        exit_code: 0,
                        error: None,
                        acceptance_passed: Some(o.report.all_passed()),
                    },
                    Err(e) => SweepEntry {
                        value: value.clone(),
                        dir,
                        exit_code: classify(&e),
                        error: Some(format!("{e:#}")),
                        acceptance_passed: None,
                    },
                };
                results.lock().unwrap()[i] = Some(entry);
            });
        }
    });
    let entries: Vec<SweepEntry> = results.into_inner().unwrap().into_iter().map(|e| e.expect("every value ran")).collect();
    fs::write(root.join("sweep.json"), to_json(&entries)?).with_context(|| format!("writing {}/sweep.json", root.display()))?;
    Ok(entries)
}

pub fn verify_kernel(family: KernelFamily, unchecked: bool, points: usize, max: f64, json: bool) -> anyhow::Result<bool> {
    let kernel = match (family, unchecked) {
        (KernelFamily::Power(p), true) => Kernel::power_unchecked(p),
        _ => Kernel::new(family)?,
    };
    let report = verify_assumptions(&kernel, &default_grid(points, max));
    if json {
        print!("{}", to_json(&report)?);
    } else {
        println!("{report}");
    }
    Ok(report.all_passed())
}

pub fn calibrate(dataset: &Path, perplexity: f64, dir: &Path) -> anyhow::Result<()> {
    let data = read_dataset(dataset)?;
    let bw = calibrate_bandwidths(&data, perplexity)?;
    let p = symmetrize(&conditional_probs(&data, &bw)?)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_bandwidths(&dir.join("bandwidths.json"), &bw)?;
    write_affinity(&dir.join("affinity.json"), &p)?;
    let worst = (0..data.n())
        .map(|i| (row_perplexity(&data, i, bw.sigma[i]) - perplexity).abs() / perplexity)
        .fold(0.0, f64::max);
    let (lo, hi) = bw.sigma.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    println!("calibrated {} rows to perplexity {perplexity}: sigma in [{lo:.6}, {hi:.6}], worst relative error {worst:.2e}", data.n());
    println!("  wrote {}", dir.display());
    Ok(())
}
