//! Similarity kernels `beta` for the low-dimensional similarities, with
//! `gamma = 1 / beta`.
//!
//! Every kernel is a closed-form family, so all derivatives are exact. The
//! structural requirements on `gamma` (convex, nondecreasing, `gamma(0) = 1`,
//! bounded logarithmic derivative) are checked by sampling in
//! [`verify_assumptions`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `beta(x) = 1 / (1 + x)`, the t-SNE kernel.
    Cauchy,
    /// `beta(x) = exp(-x)`, the SNE kernel.
    Gaussian,
    /// `gamma(x) = (1 + x)^p` with `p >= 1`.
    Power(f64),
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Cauchy => write!(f, "cauchy"),
            KernelFamily::Gaussian => write!(f, "gaussian"),
            KernelFamily::Power(p) => write!(f, "power:{p}"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    /// Parses `"cauchy" | "gaussian" | "power:<p>"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "cauchy" => Ok(KernelFamily::Cauchy),
            "gaussian" => Ok(KernelFamily::Gaussian),
            other => {
                if let Some(rest) = other.strip_prefix("power:") {
                    let p: f64 = rest.parse().map_err(|_| {
                        Error::InvalidParameter(format!("cannot parse power exponent {rest:?}"))
                    })?;
                    Ok(KernelFamily::Power(p))
                } else {
                    Err(Error::InvalidParameter(format!(
                        "unknown kernel {s:?}; expected cauchy, gaussian or power:<p>"
                    )))
                }
            }
        }
    }
}

/// A validated similarity kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
}

/// Builds a kernel from its family, rejecting `Power(p)` with `p < 1`.
pub fn make_kernel(family: KernelFamily) -> Result<Kernel> {
    Kernel::new(family)
}

impl Kernel {
    pub fn new(family: KernelFamily) -> Result<Self> {
        if let KernelFamily::Power(p) = family {
            if !p.is_finite() || p < 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "power kernel requires p >= 1 for convex gamma, got {p}"
                )));
            }
        }
        Ok(Kernel { family })
    }

    pub fn cauchy() -> Self {
        Kernel { family: KernelFamily::Cauchy }
    }

    pub fn gaussian() -> Self {
        Kernel { family: KernelFamily::Gaussian }
    }

    /// Builds a power kernel without the `p >= 1` check. Only useful for
    /// exercising the assumption report on kernels that violate it.
    pub fn power_unchecked(p: f64) -> Self {
        Kernel { family: KernelFamily::Power(p) }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn name(&self) -> String {
        self.family.to_string()
    }

    #[inline]
    pub fn beta(&self, x: f64) -> f64 {
        match self.family {
            KernelFamily::Cauchy => 1.0 / (1.0 + x),
            KernelFamily::Gaussian => (-x).exp(),
            KernelFamily::Power(p) => (1.0 + x).powf(-p),
        }
    }

    /// `log beta(x)`, evaluated without forming `beta` so it stays finite
    /// where `beta` underflows.
    #[inline]
    pub fn log_beta(&self, x: f64) -> f64 {
        match self.family {
            KernelFamily::Cauchy => -x.ln_1p(),
            KernelFamily::Gaussian => -x,
            KernelFamily::Power(p) => -p * x.ln_1p(),
        }
    }

    /// `(log beta)'(x)`.
    #[inline]
    pub fn log_beta_prime(&self, x: f64) -> f64 {
        match self.family {
            KernelFamily::Cauchy => -1.0 / (1.0 + x),
            KernelFamily::Gaussian => -1.0,
            KernelFamily::Power(p) => -p / (1.0 + x),
        }
    }

    #[inline]
    pub fn gamma(&self, x: f64) -> f64 {
        match self.family {
            KernelFamily::Cauchy => 1.0 + x,
            KernelFamily::Gaussian => x.exp(),
            KernelFamily::Power(p) => (1.0 + x).powf(p),
        }
    }

    #[inline]
    pub fn gamma_prime(&self, x: f64) -> f64 {
        match self.family {
            KernelFamily::Cauchy => 1.0,
            KernelFamily::Gaussian => x.exp(),
            KernelFamily::Power(p) => p * (1.0 + x).powf(p - 1.0),
        }
    }

    /// Declared upper bound on `(log gamma)'` over `[0, inf)`.
    pub fn declared_log_gamma_prime_bound(&self) -> f64 {
        match self.family {
            KernelFamily::Cauchy | KernelFamily::Gaussian => 1.0,
            KernelFamily::Power(p) => p,
        }
    }
}

/// Outcome of one sampled assumption check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest observed violation (0 when none).
    pub worst_violation: f64,
    /// Grid points at which the check could not be evaluated because a
    /// value fell outside the representable f64 range.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub kernel: String,
    pub grid_len: usize,
    pub checks: Vec<CheckResult>,
    /// Observed `sup (log gamma)'` over the grid.
    pub sup_log_gamma_prime: f64,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kernel {} on {} grid points", self.kernel, self.grid_len)?;
        for c in &self.checks {
            write!(
                f,
                "  [{}] {:<22} worst violation {:.3e}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.worst_violation
            )?;
            if c.skipped > 0 {
                write!(f, " ({} points out of f64 range)", c.skipped)?;
            }
            writeln!(f)?;
        }
        write!(f, "  sup (log gamma)' = {}", self.sup_log_gamma_prime)
    }
}

pub const CHECK_GAMMA_AT_ZERO: &str = "gamma(0)=1";
pub const CHECK_MONOTONE: &str = "gamma nondecreasing";
pub const CHECK_CONVEX: &str = "midpoint convexity";
pub const CHECK_LOG_GAMMA_BOUND: &str = "(log gamma)' bounded";
pub const CHECK_RECIPROCAL: &str = "beta*gamma=1";
pub const CHECK_LOG_DERIVATIVE: &str = "(log beta)'=-gamma'/gamma";

const ABS_TOL: f64 = 1e-12;
const REL_TOL: f64 = 1e-12;

/// Logarithmic grid of `points` values on `[0, max]`: zero followed by
/// log-spaced values from `1e-6` to `max`.
pub fn default_grid(points: usize, max: f64) -> Vec<f64> {
    let points = points.max(2);
    let lo = 1e-6f64.ln();
    let hi = max.ln();
    let mut grid = Vec::with_capacity(points);
    grid.push(0.0);
    let m = points - 1;
    for k in 0..m {
        let frac = if m == 1 { 1.0 } else { k as f64 / (m - 1) as f64 };
        grid.push((lo + frac * (hi - lo)).exp());
    }
    if let Some(last) = grid.last_mut() {
        *last = max;
    }
    grid
}

/// The default 1000-point grid on `[0, 1e8]`.
pub fn standard_grid() -> Vec<f64> {
    default_grid(1000, 1e8)
}

fn representable(v: f64) -> bool {
    v.is_normal() && v > 0.0
}

/// Samples the kernel on `grid` and reports every structural check.
pub fn verify_assumptions(kernel: &Kernel, grid: &[f64]) -> AssumptionReport {
    let mut checks = Vec::new();

    let g0 = kernel.gamma(0.0);
    let v = (g0 - 1.0).abs();
    checks.push(CheckResult {
        name: CHECK_GAMMA_AT_ZERO.into(),
        passed: v <= ABS_TOL,
        worst_violation: v,
        skipped: 0,
    });

    // monotone: gamma' >= 0 pointwise and gamma nondecreasing along the grid
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for (k, &x) in grid.iter().enumerate() {
        let gp = kernel.gamma_prime(x);
        if gp.is_nan() {
            skipped += 1;
        } else if gp < 0.0 {
            worst = worst.max(-gp);
        }
        if k > 0 {
            let (ga, gb) = (kernel.gamma(grid[k - 1]), kernel.gamma(x));
            if ga.is_finite() && gb.is_finite() {
                let drop = ga - gb;
                if drop > REL_TOL * ga.abs() {
                    worst = worst.max(drop);
                }
            }
        }
    }
    checks.push(CheckResult {
        name: CHECK_MONOTONE.into(),
        passed: worst == 0.0,
        worst_violation: worst,
        skipped,
    });

    // midpoint convexity over every pair of grid points
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for (i, &a) in grid.iter().enumerate() {
        for &b in &grid[i + 1..] {
            let mid = kernel.gamma(0.5 * (a + b));
            let chord = 0.5 * (kernel.gamma(a) + kernel.gamma(b));
            if !mid.is_finite() || !chord.is_finite() {
                skipped += 1;
                continue;
            }
            let excess = mid - chord;
            if excess > ABS_TOL + REL_TOL * chord.abs() {
                worst = worst.max(excess);
            }
        }
    }
    checks.push(CheckResult {
        name: CHECK_CONVEX.into(),
        passed: worst == 0.0,
        worst_violation: worst,
        skipped,
    });

    // (log gamma)' = -(log beta)' is in closed form and never overflows
    let bound = kernel.declared_log_gamma_prime_bound();
    let mut sup = f64::NEG_INFINITY;
    for &x in grid {
        sup = sup.max(-kernel.log_beta_prime(x));
    }
    let excess = (sup - bound).max(0.0);
    checks.push(CheckResult {
        name: CHECK_LOG_GAMMA_BOUND.into(),
        passed: sup.is_finite() && excess <= ABS_TOL + REL_TOL * bound,
        worst_violation: excess,
        skipped: 0,
    });

    let mut worst = 0.0f64;
    let mut skipped = 0;
    for &x in grid {
        let (b, g) = (kernel.beta(x), kernel.gamma(x));
        if !representable(b) || !representable(g) {
            skipped += 1;
            continue;
        }
        worst = worst.max((b * g - 1.0).abs());
    }
    checks.push(CheckResult {
        name: CHECK_RECIPROCAL.into(),
        passed: worst <= REL_TOL,
        worst_violation: worst,
        skipped,
    });

    let mut worst = 0.0f64;
    let mut skipped = 0;
    for &x in grid {
        let (g, gp) = (kernel.gamma(x), kernel.gamma_prime(x));
        if !representable(g) || !gp.is_finite() {
            skipped += 1;
            continue;
        }
        let from_gamma = -gp / g;
        let direct = kernel.log_beta_prime(x);
        let scale = direct.abs().max(from_gamma.abs());
        let rel = if scale == 0.0 { 0.0 } else { (direct - from_gamma).abs() / scale };
        worst = worst.max(rel);
    }
    checks.push(CheckResult {
        name: CHECK_LOG_DERIVATIVE.into(),
        passed: worst <= REL_TOL,
        worst_violation: worst,
        skipped,
    });

    AssumptionReport {
        kernel: kernel.name(),
        grid_len: grid.len(),
        checks,
        sup_log_gamma_prime: sup,
    }
}
