//! Quantities constrained by the long-time theory: second moment `S`,
//! diameter, pairwise separation, rescaled shapes and power-law exponents
//! fitted on log-log axes.

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::flow::{center_of_mass, relative_entropy, similarities, Configuration};
use crate::integrator::{FlowState, Trajectory};
use crate::kernel::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    /// `S = sum_i |y_i|^2`.
    #[serde(rename = "S")]
    pub second_moment: f64,
    pub diam: f64,
    pub cost: f64,
    pub min_sqdist: f64,
    pub max_sqdist: f64,
    pub com_norm: f64,
    /// `min_sqdist / S`, defined as 0 when `S = 0`.
    pub separation_ratio: f64,
}

/// Geometry-only part of a record: `(S, min_sqdist, max_sqdist, com_norm)`.
fn geometry(config: &Configuration) -> (f64, f64, f64, f64) {
    let n = config.n();
    let s_moment: f64 = config.coords().iter().map(|v| v * v).sum();
    let mut min_sq = f64::INFINITY;
    let mut max_sq = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d = config.sqdist(i, j);
            min_sq = min_sq.min(d);
            max_sq = max_sq.max(d);
        }
    }
    let com = center_of_mass(config);
    let com_norm = com.iter().map(|v| v * v).sum::<f64>().sqrt();
    (s_moment, min_sq, max_sq, com_norm)
}

pub fn diameter(config: &Configuration) -> f64 {
    geometry(config).2.sqrt()
}

pub fn record(state: &FlowState, p: &AffinityMatrix, kernel: &Kernel) -> Result<DiagnosticRecord> {
    let (s_moment, min_sq, max_sq, com_norm) = geometry(&state.config);
    let cost = relative_entropy(p, &similarities(&state.config, kernel))?;
    Ok(DiagnosticRecord {
        t: state.t,
        second_moment: s_moment,
        diam: max_sq.sqrt(),
        cost,
        min_sqdist: min_sq,
        max_sqdist: max_sq,
        com_norm,
        separation_ratio: if s_moment > 0.0 { min_sq / s_moment } else { 0.0 },
    })
}

/// `max_sqdist / min_sqdist`; infinite when two points coincide.
pub fn equilateral_gap(rec: &DiagnosticRecord) -> f64 {
    if rec.min_sqdist > 0.0 {
        rec.max_sqdist / rec.min_sqdist
    } else {
        f64::INFINITY
    }
}

/// `Y / diam Y`.
pub fn rescaled_config(config: &Configuration) -> Result<Configuration> {
    let diam = diameter(config);
    if diam <= 0.0 {
        return Err(Error::ZeroDiameter);
    }
    let coords = config.coords().iter().map(|v| v / diam).collect();
    config.with_coords(coords)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Diam,
    #[serde(rename = "S")]
    SecondMoment,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Diam => "diam",
            Quantity::SecondMoment => "S",
        }
    }

    fn of(self, rec: &DiagnosticRecord) -> f64 {
        match self {
            Quantity::Diam => rec.diam,
            Quantity::SecondMoment => rec.second_moment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub quantity: Quantity,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 8;

/// Ordinary least squares of `log y` against `log t`.
pub fn fit_power_law(samples: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples { found: samples.len(), needed: MIN_FIT_SAMPLES });
    }
    for &(t, v) in samples {
        if v.is_nan() || t.is_nan() || v <= 0.0 || t <= 0.0 {
            return Err(Error::NonpositiveValue { t, value: v });
        }
    }
    let m = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientSamples { found: 1, needed: MIN_FIT_SAMPLES });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // a constant series is fitted exactly; its syy is pure rounding
    let flat = syy <= m * (16.0 * f64::EPSILON * (1.0 + my.abs())).powi(2);
    let r2 = if flat { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok((slope, intercept, r2))
}

/// Power-law exponent of `quantity` over snapshots with `t` in `window`.
pub fn growth_exponent(traj: &Trajectory, quantity: Quantity, window: (f64, f64)) -> Result<ExponentFit> {
    let (lo, hi) = window;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::InvalidParameter(format!("empty fit window ({lo}, {hi})")));
    }
    let samples: Vec<(f64, f64)> = traj
        .records()
        .filter(|r| r.t >= lo && r.t <= hi && r.t > 0.0)
        .map(|r| (r.t, quantity.of(r)))
        .collect();
    let (slope, intercept, r_squared) = fit_power_law(&samples)?;
    Ok(ExponentFit { quantity, slope, intercept, r_squared, window, n_samples: samples.len() })
}

/// Infimum of `min_sqdist / S` over snapshots with `S >= threshold`;
/// `None` when no snapshot qualifies.
pub fn separation_check(traj: &Trajectory, s_threshold: f64) -> Option<f64> {
    traj.records()
        .filter(|r| r.second_moment >= s_threshold)
        .map(|r| r.separation_ratio)
        .reduce(f64::min)
}

/// Largest `|mean(y)(t) - mean(y)(0)|` over the trajectory.
pub fn max_com_drift(traj: &Trajectory) -> f64 {
    let mut it = traj.snapshots.iter();
    let Some(first) = it.next() else { return 0.0 };
    let c0 = center_of_mass(&first.state.config);
    it.map(|snap| {
        let c = center_of_mass(&snap.state.config);
        c.iter().zip(&c0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    })
    .fold(0.0, f64::max)
}

/// Largest increase of the cost between consecutive snapshots (0 if the
/// cost never increases).
pub fn max_cost_increase(traj: &Trajectory) -> f64 {
    traj.snapshots
        .windows(2)
        .map(|w| w[1].record.cost - w[0].record.cost)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{Snapshot, Trajectory};

    fn uniform3() -> AffinityMatrix {
        AffinityMatrix::from_pair_values(3, |_, _| 1.0 / 6.0).unwrap()
    }

    fn state(xs: &[f64], t: f64) -> FlowState {
        FlowState { t, config: Configuration::on_line(xs).unwrap() }
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> Trajectory {
        let mut snaps = vec![];
        for k in 0..=40 {
            let t = if k == 0 { 0.0 } else { 10f64.powf(k as f64 / 10.0) };
            let x = f(t);
            let st = state(&[x, 0.0, -x], t);
            let rec = record(&st, &uniform3(), &Kernel::cauchy()).unwrap();
            snaps.push(Snapshot { state: st, record: rec });
        }
        Trajectory::from_snapshots(snaps)
    }

    #[test]
    fn record_three_points() {
        let r = record(&state(&[1.0, 0.0, -1.0], 0.0), &uniform3(), &Kernel::cauchy()).unwrap();
        assert_eq!(r.second_moment, 2.0);
        assert_eq!(r.diam, 2.0);
        assert_eq!(r.min_sqdist, 1.0);
        assert_eq!(r.max_sqdist, 4.0);
        assert_eq!(r.separation_ratio, 0.5);
        assert_eq!(r.com_norm, 0.0);
        assert_eq!(equilateral_gap(&r), 4.0);
    }

    #[test]
    fn record_total_collapse() {
        let r = record(&state(&[0.0, 0.0, 0.0], 0.0), &uniform3(), &Kernel::gaussian()).unwrap();
        assert_eq!(r.second_moment, 0.0);
        assert_eq!(r.diam, 0.0);
        assert_eq!(r.separation_ratio, 0.0);
        assert!(r.cost.abs() < 1e-15);
    }

    #[test]
    fn rescale() {
        let c = Configuration::on_line(&[50.0, 0.0, -50.0]).unwrap();
        let r = rescaled_config(&c).unwrap();
        assert_eq!(r.coords(), &[0.5, 0.0, -0.5]);
        let rr = rescaled_config(&r).unwrap();
        assert_eq!(rr, r);
        let z = Configuration::on_line(&[1.0, 1.0]).unwrap();
        assert_eq!(rescaled_config(&z), Err(Error::ZeroDiameter));
    }

    #[test]
    fn exact_power_law_fit() {
        // diam = 2x = 3 t^{1/4}
        let traj = synthetic(|t| 1.5 * t.powf(0.25));
        let fit = growth_exponent(&traj, Quantity::Diam, (1.0, 1e4)).unwrap();
        assert!((fit.slope - 0.25).abs() < 1e-12, "{fit:?}");
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.n_samples, 41 - 1);
        let s_fit = growth_exponent(&traj, Quantity::SecondMoment, (1.0, 1e4)).unwrap();
        assert!((s_fit.slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_fit() {
        let traj = synthetic(|_| 2.5);
        let fit = growth_exponent(&traj, Quantity::Diam, (1.0, 1e4)).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn fit_errors() {
        let traj = synthetic(|t| t);
        assert!(matches!(
            growth_exponent(&traj, Quantity::Diam, (1.0, 2.0)),
            Err(Error::InsufficientSamples { .. })
        ));
        let traj = synthetic(|t| if t > 100.0 { 0.0 } else { 1.0 });
        assert!(matches!(
            growth_exponent(&traj, Quantity::Diam, (1.0, 1e4)),
            Err(Error::NonpositiveValue { .. })
        ));
    }

    #[test]
    fn separation_qualifying_snapshots() {
        let traj = synthetic(|t| t.sqrt());
        // S = 2x^2 = 2t; symmetric shape has ratio 1/2
        assert_eq!(separation_check(&traj, 100.0), Some(0.5));
        assert_eq!(separation_check(&traj, 1e9), None);
    }

    #[test]
    fn diam_second_moment_equivalence_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(2..9);
            let s = rng.gen_range(1..4);
            let coords = (0..n * s).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let c = crate::flow::recenter(&Configuration::new(n, s, coords).unwrap());
            let (sm, _, max_sq, _) = geometry(&c);
            let (diam, root_s) = (max_sq.sqrt(), sm.sqrt());
            assert!(diam <= 2.0 * root_s + 1e-9);
            assert!(root_s <= (n as f64).sqrt() * diam + 1e-9);
            let bound = 2.0 * (n as f64).sqrt();
            assert!(diam / bound <= root_s && root_s <= bound * diam);
        }
    }
}
