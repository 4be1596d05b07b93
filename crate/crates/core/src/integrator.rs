//! Long-horizon integration of the gradient flow with snapshot output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::AffinityMatrix;
use crate::diagnostics::{record, DiagnosticRecord};
use crate::error::Error;
use crate::flow::{center_of_mass, flow_field_into, recenter, Configuration};
use crate::kernel::Kernel;
use crate::ode::{rk4_step, Driver, OdeError, OdeSystem, Stats};

pub use crate::ode::{Method, StepControl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub config: Configuration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub state: FlowState,
    pub record: DiagnosticRecord,
}

/// Output times after `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `count` equally spaced times ending at `t_end`.
    Linear { count: usize },
    /// Times `10^(k / per_decade)` at or above `dt_init`, then `t_end`.
    Log { per_decade: usize },
    /// Explicit times; those outside `(0, t_end]` are dropped.
    Times(Vec<f64>),
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Log { per_decade: 10 }
    }
}

impl Schedule {
    /// Strictly increasing output times in `(0, t_end]`, always ending at
    /// `t_end`.
    pub fn times(&self, dt_init: f64, t_end: f64) -> Vec<f64> {
        let mut out: Vec<f64> = match self {
            Schedule::Linear { count } => {
                let count = (*count).max(1);
                (1..=count).map(|k| t_end * k as f64 / count as f64).collect()
            }
            Schedule::Log { per_decade } => {
                let ppd = (*per_decade).max(1) as i64;
                let ppd_f = ppd as f64;
                let mut k = (dt_init.log10() * ppd_f).ceil() as i64;
                let mut v = Vec::new();
                loop {
                    let t = if k % ppd == 0 {
                        10f64.powi((k / ppd) as i32)
                    } else {
                        10f64.powf(k as f64 / ppd_f)
                    };
                    if t >= t_end {
                        break;
                    }
                    if t >= dt_init {
                        v.push(t);
                    }
                    k += 1;
                }
                v
            }
            Schedule::Times(ts) => ts.iter().copied().filter(|&t| t > 0.0 && t < t_end).collect(),
        };
        out.sort_by(f64::total_cmp);
        out.dedup();
        out.retain(|&t| t < t_end);
        out.push(t_end);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub schedule: Option<Schedule>,
    /// Whether the initial configuration was shifted to put its center of
    /// mass at the origin.
    pub recentered: bool,
    /// Center of mass of the configuration as supplied.
    pub initial_offset: Vec<f64>,
    pub stats: Stats,
}

impl Trajectory {
    pub fn from_snapshots(snapshots: Vec<Snapshot>) -> Self {
        Trajectory { snapshots, schedule: None, recentered: false, initial_offset: vec![], stats: Stats::default() }
    }

    pub fn records(&self) -> impl Iterator<Item = &DiagnosticRecord> {
        self.snapshots.iter().map(|s| &s.record)
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    /// Snapshot whose time is closest to `t`.
    pub fn nearest(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.state.t - t).abs().total_cmp(&(b.state.t - t).abs()))
    }

    /// Snapshots with `lo <= t <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.iter().filter(move |s| s.state.t >= lo && s.state.t <= hi)
    }
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("step size underflow at t = {t}: controller asked for dt = {dt:e}")]
    StepUnderflow { t: f64, dt: f64, partial: Box<Trajectory> },
    #[error("maximum step count {max_steps} exceeded at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: u64, partial: Box<Trajectory> },
    #[error("nonfinite state at t = {t}")]
    NonfiniteState { t: f64, partial: Box<Trajectory> },
}

impl IntegrateError {
    /// Snapshots recorded before the failure.
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            IntegrateError::Invalid(_) => None,
            IntegrateError::StepUnderflow { partial, .. }
            | IntegrateError::MaxStepsExceeded { partial, .. }
            | IntegrateError::NonfiniteState { partial, .. } => Some(partial),
        }
    }
}

/// The gradient flow as an [`OdeSystem`] over row-major coordinates.
pub struct FlowSystem<'a> {
    pub affinity: &'a AffinityMatrix,
    pub kernel: Kernel,
    pub s: usize,
}

impl OdeSystem for FlowSystem<'_> {
    fn dim(&self) -> usize {
        self.affinity.n() * self.s
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        flow_field_into(y, self.s, self.affinity, &self.kernel, dy);
    }
}

fn check_shapes(config: &Configuration, p: &AffinityMatrix) -> Result<(), Error> {
    if p.n() != config.n() {
        return Err(Error::DimensionMismatch(format!(
            "affinity has n = {}, configuration has n = {}",
            p.n(),
            config.n()
        )));
    }
    Ok(())
}

/// One classical RK4 step.
pub fn step(state: &FlowState, dt: f64, p: &AffinityMatrix, kernel: &Kernel) -> Result<FlowState, Error> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("step size {dt} must be positive")));
    }
    check_shapes(&state.config, p)?;
    let sys = FlowSystem { affinity: p, kernel: *kernel, s: state.config.s() };
    let mut out = vec![0.0; sys.dim()];
    rk4_step(&sys, state.config.coords(), dt, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfiguration(format!("nonfinite state after step from t = {}", state.t)));
    }
    Ok(FlowState { t: state.t + dt, config: state.config.with_coords(out)? })
}

/// Integrates the flow from `initial` to `t_end`, recording a snapshot at
/// `t = 0` and at every scheduled time. The initial configuration is
/// recentered if its center of mass is not at the origin.
pub fn integrate(
    initial: &Configuration,
    p: &AffinityMatrix,
    kernel: &Kernel,
    control: &StepControl,
    t_end: f64,
    schedule: &Schedule,
) -> Result<Trajectory, IntegrateError> {
    check_shapes(initial, p)?;
    let (n, s) = (initial.n(), initial.s());
    if n <= s + 1 {
        return Err(Error::DimensionConstraint { n, s }.into());
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_end = {t_end} must be positive")).into());
    }
    control.validate().map_err(Error::InvalidParameter)?;

    let offset = center_of_mass(initial);
    let recentered = offset.iter().any(|&m| m != 0.0);
    let start = if recentered { recenter(initial) } else { initial.clone() };

    let mut traj = Trajectory {
        snapshots: Vec::new(),
        schedule: Some(schedule.clone()),
        recentered,
        initial_offset: offset,
        stats: Stats::default(),
    };
    let first = FlowState { t: 0.0, config: start.clone() };
    let rec = record(&first, p, kernel)?;
    traj.snapshots.push(Snapshot { state: first, record: rec });

    let sys = FlowSystem { affinity: p, kernel: *kernel, s };
    let mut driver = Driver::new(&sys, control.clone(), 0.0, start.into_coords());
    for target in schedule.times(control.dt_init, t_end) {
        let outcome = driver.advance_to(target);
        traj.stats = driver.stats();
        if let Err(e) = outcome {
            let partial = Box::new(traj);
            return Err(match e {
                OdeError::StepUnderflow { t, dt } => IntegrateError::StepUnderflow { t, dt, partial },
                OdeError::MaxStepsExceeded { t, max_steps } => {
                    IntegrateError::MaxStepsExceeded { t, max_steps, partial }
                }
                OdeError::NonfiniteState { t } => IntegrateError::NonfiniteState { t, partial },
            });
        }
        let coords = driver.y().to_vec();
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonfiniteState { t: driver.t(), partial: Box::new(traj) });
        }
        let state = FlowState { t: target, config: Configuration::new(n, s, coords)? };
        let rec = record(&state, p, kernel)?;
        traj.snapshots.push(Snapshot { state, record: rec });
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{max_com_drift, max_cost_increase};
    use crate::flow::flow_vector_field;

    fn sym3(a: f64) -> AffinityMatrix {
        AffinityMatrix::from_pair_values(3, |i, j| if j - i == 1 { a } else { (1.0 - 4.0 * a) / 2.0 }).unwrap()
    }

    #[test]
    fn log_schedule_hits_decades() {
        let ts = Schedule::Log { per_decade: 4 }.times(1e-3, 1e2);
        assert_eq!(ts.first(), Some(&1e-3));
        assert_eq!(ts.last(), Some(&1e2));
        assert!(ts.contains(&1.0) && ts.contains(&10.0));
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(ts.len(), 5 * 4 + 1);
        let ts = Schedule::Log { per_decade: 10 }.times(2e-3, 0.1);
        assert!(ts[0] >= 2e-3);
        let ts = Schedule::Linear { count: 4 }.times(1e-3, 2.0);
        assert_eq!(ts, vec![0.5, 1.0, 1.5, 2.0]);
        let ts = Schedule::Times(vec![3.0, -1.0, 1.0, 1.0, 9.0]).times(1e-3, 5.0);
        assert_eq!(ts, vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn stationary_start_stays_put() {
        // p taken equal to q of the starting configuration
        let c = Configuration::on_line(&[0.3, -1.0, 0.7]).unwrap();
        let k = Kernel::cauchy();
        let cache = crate::flow::similarities(&c, &k);
        let p = AffinityMatrix::from_pair_values(3, |i, j| cache.q(i, j)).unwrap();
        let traj = integrate(&c, &p, &k, &StepControl::for_horizon(10.0), 10.0, &Schedule::default()).unwrap();
        for snap in &traj.snapshots {
            for (a, b) in snap.state.config.coords().iter().zip(c.coords()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_field_step_is_identity() {
        let p = AffinityMatrix::from_pair_values(2, |_, _| 0.5).unwrap();
        for xs in [[0.0, 0.0], [3.0, -1.0]] {
            let st = FlowState { t: 0.0, config: Configuration::on_line(&xs).unwrap() };
            let next = step(&st, 0.1, &p, &Kernel::gaussian()).unwrap();
            assert_eq!(next.config, st.config);
            assert_eq!(next.t, 0.1);
        }
    }

    #[test]
    fn single_small_step_first_order() {
        let p = sym3(0.235);
        let st = FlowState { t: 0.0, config: Configuration::on_line(&[1.0, 0.0, -1.0]).unwrap() };
        let dt = 1e-4;
        let next = step(&st, dt, &p, &Kernel::cauchy()).unwrap();
        let dx = next.config.coords()[0] - 1.0;
        assert!((dx / dt - 0.032).abs() < 1e-5, "{}", dx / dt);
        assert!(step(&st, -1.0, &p, &Kernel::cauchy()).is_err());
    }

    #[test]
    fn rejects_n_not_above_s_plus_one() {
        let p = AffinityMatrix::from_pair_values(3, |_, _| 1.0 / 6.0).unwrap();
        let c = Configuration::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let err = integrate(&c, &p, &Kernel::cauchy(), &StepControl::for_horizon(1.0), 1.0, &Schedule::default())
            .unwrap_err();
        assert!(matches!(err, IntegrateError::Invalid(Error::DimensionConstraint { n: 3, s: 2 })));
        assert!(err.to_string().contains("n > s+1"));
    }

    #[test]
    fn recenters_and_records_offset() {
        let p = sym3(0.2);
        let c = Configuration::on_line(&[3.0, 2.0, 1.0]).unwrap();
        let traj =
            integrate(&c, &p, &Kernel::gaussian(), &StepControl::for_horizon(1.0), 1.0, &Schedule::default()).unwrap();
        assert!(traj.recentered);
        assert_eq!(traj.initial_offset, vec![2.0]);
        assert_eq!(traj.snapshots[0].state.config.coords(), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn max_steps_keeps_partial() {
        let p = sym3(0.235);
        let c = Configuration::on_line(&[1.0, 0.0, -1.0]).unwrap();
        let ctl = StepControl { max_steps: 50, ..StepControl::for_horizon(1e3) };
        let err = integrate(&c, &p, &Kernel::cauchy(), &ctl, 1e3, &Schedule::default()).unwrap_err();
        let partial = err.partial().unwrap();
        assert!(matches!(err, IntegrateError::MaxStepsExceeded { .. }));
        assert!(!partial.snapshots.is_empty());
        assert_eq!(partial.snapshots[0].state.t, 0.0);
    }

    #[test]
    fn random_run_conserves_and_descends() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                w[i * n + j] = rng.gen_range(0.1..1.0);
            }
        }
        let total: f64 = 2.0 * w.iter().sum::<f64>();
        let p = AffinityMatrix::from_pair_values(n, |i, j| w[i * n + j] / total).unwrap();
        let c = Configuration::new(n, 2, (0..2 * n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        for kernel in [Kernel::cauchy(), Kernel::gaussian()] {
            let t_end = 1e3;
            let traj = integrate(&c, &p, &kernel, &StepControl::for_horizon(t_end), t_end, &Schedule::default())
                .unwrap();
            let diam = traj.records().map(|r| r.diam).fold(0.0, f64::max);
            assert!(max_com_drift(&traj) <= 1e-8 * (1.0 + diam));
            assert!(max_cost_increase(&traj) <= 1e-10);
            let ts: Vec<f64> = traj.records().map(|r| r.t).collect();
            assert!(ts.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(*ts.last().unwrap(), t_end);
        }
    }

    #[test]
    fn tolerance_refinement_within_error_estimate() {
        let p = sym3(0.235);
        let c = Configuration::on_line(&[1.0, 0.0, -1.0]).unwrap();
        let t_end = 100.0;
        let run = |rel_tol: f64| {
            let ctl = StepControl { rel_tol, ..StepControl::for_horizon(t_end) };
            integrate(&c, &p, &Kernel::cauchy(), &ctl, t_end, &Schedule::Linear { count: 1 }).unwrap()
        };
        let (coarse, fine) = (run(1e-6), run(5e-7));
        let diff = coarse
            .last()
            .unwrap()
            .state
            .config
            .coords()
            .iter()
            .zip(fine.last().unwrap().state.config.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < coarse.stats.accumulated_error, "{diff} vs {}", coarse.stats.accumulated_error);
    }

    #[test]
    fn field_system_matches_vector_field() {
        let p = sym3(0.235);
        let c = Configuration::on_line(&[0.7, 0.1, -1.3]).unwrap();
        let sys = FlowSystem { affinity: &p, kernel: Kernel::cauchy(), s: 1 };
        let mut dy = vec![0.0; 3];
        sys.rhs(c.coords(), &mut dy);
        assert_eq!(dy, flow_vector_field(&c, &p, &Kernel::cauchy()).unwrap());
    }
}
