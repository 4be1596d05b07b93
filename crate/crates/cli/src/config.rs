//! Run configuration: one JSON document, with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use entroflow::affinity::{calibrate_bandwidths, conditional_probs, symmetrize};
use entroflow::experiments::{ScenarioName, ScenarioSpec};
use entroflow::flow::recenter;
use entroflow::io::{read_affinity, read_dataset, AffinityFile};
use entroflow::{AffinityMatrix, Configuration, Error, KernelFamily, Schedule, StepControl};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `cauchy`, `gaussian` or `power:<p>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    /// A scenario supplies both the affinity matrix and the initial data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affinity: Option<AffinitySource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<StepControl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation_threshold: Option<f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AffinitySource {
    Matrix(AffinityFile),
    File(PathBuf),
    Dataset { path: PathBuf, perplexity: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSource {
    Points(Vec<Vec<f64>>),
    File(PathBuf),
    Random { s: usize, seed: u64, #[serde(default = "unit")] scale: f64 },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Include coordinates in the CSV.
    #[serde(default)]
    pub coords: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, formats: default_formats(), coords: false }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
            .map_err(Into::into)
    }

    pub fn kernel_family(&self) -> anyhow::Result<KernelFamily> {
        Ok(match &self.kernel {
            Some(k) => k.parse()?,
            None => KernelFamily::Cauchy,
        })
    }

    /// Name used for the default output directory.
    pub fn run_name(&self) -> String {
        self.scenario.map_or_else(|| "custom".to_string(), |s| s.to_string())
    }
}

pub enum Resolved {
    Scenario(ScenarioSpec),
    Custom(CustomRun),
}

pub struct CustomRun {
    pub kernel: KernelFamily,
    pub affinity: AffinityMatrix,
    pub initial: Configuration,
    pub t_end: f64,
    pub control: StepControl,
    pub schedule: Schedule,
}

fn validation(msg: String) -> anyhow::Error {
    Error::InvalidConfiguration(msg).into()
}

/// Checks that the sources are unambiguous and loads whatever they point
/// to. Relative paths are taken relative to `base`.
pub fn resolve(cfg: &RunConfig, base: &Path) -> anyhow::Result<Resolved> {
    let kernel = cfg.kernel_family()?;
    if let Some(name) = cfg.scenario {
        if cfg.affinity.is_some() || cfg.initial.is_some() {
            return Err(validation("a scenario supplies its own affinity and initial data; remove `affinity`/`initial`".into()));
        }
        let mut spec = ScenarioSpec::new(name, kernel);
        if let Some(a) = cfg.a {
            spec.a = a;
        }
        if let Some(x0) = cfg.x0 {
            spec.x0 = x0;
        }
        if let Some(t) = cfg.t_end {
            spec.t_end = t;
        }
        spec.control = cfg.control.clone();
        if let Some(s) = &cfg.schedule {
            spec.schedule = s.clone();
        }
        return Ok(Resolved::Scenario(spec));
    }
    if cfg.a.is_some() || cfg.x0.is_some() {
        return Err(validation("`a` and `x0` only apply to scenarios".into()));
    }
    let Some(affinity) = &cfg.affinity else {
        return Err(validation("no affinity source: give `scenario` or `affinity`".into()));
    };
    let Some(initial) = &cfg.initial else {
        return Err(validation("no initial configuration: give `scenario` or `initial`".into()));
    };
    let rel = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let affinity = match affinity {
        AffinitySource::Matrix(m) => m.clone().into_affinity()?,
        AffinitySource::File(path) => read_affinity(&rel(path))?,
        AffinitySource::Dataset { path, perplexity } => {
            let data = read_dataset(&rel(path))?;
            let bw = calibrate_bandwidths(&data, *perplexity)?;
            symmetrize(&conditional_probs(&data, &bw)?)?
        }
    };
    let n = affinity.n();
    let initial = match initial {
        InitialSource::Points(points) => Configuration::from_points(points)?,
        InitialSource::File(path) => {
            let text = std::fs::read_to_string(rel(path)).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        }
        InitialSource::Random { s, seed, scale } => random_configuration(n, *s, *seed, *scale)?,
    };
    if initial.n() != n {
        bail!(Error::DimensionMismatch(format!("affinity has n = {n}, initial configuration has {} points", initial.n())));
    }
    if n <= initial.s() + 1 {
        bail!(Error::DimensionConstraint { n, s: initial.s() });
    }
    let t_end = cfg.t_end.unwrap_or(1e3);
    Ok(Resolved::Custom(CustomRun {
        kernel,
        affinity,
        initial,
        t_end,
        control: cfg.control.clone().unwrap_or_else(|| StepControl::for_horizon(t_end)),
        schedule: cfg.schedule.clone().unwrap_or_default(),
    }))
}

/// Standard normal coordinates times `scale`, recentered.
pub fn random_configuration(n: usize, s: usize, seed: u64, scale: f64) -> anyhow::Result<Configuration> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(validation(format!("random scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<f64> = (0..n * s)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect();
    Ok(recenter(&Configuration::new(n, s, coords)?))
}
