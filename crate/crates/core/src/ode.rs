//! Explicit Runge-Kutta time stepping for autonomous systems `y' = f(y)`.
//!
//! Two methods: classical fixed-step RK4 and the Dormand-Prince 5(4)
//! embedded pair with FSAL and step-size control. A [`Driver`] owns the
//! state and advances it exactly onto requested output times by clipping
//! the last step, never by interpolation.

use serde::{Deserialize, Serialize};

/// Right-hand side of an autonomous ODE.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub method: Method,
    pub dt_init: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_steps: u64,
}

impl StepControl {
    /// Defaults for a run to `t_end`: adaptive, `rel_tol = 1e-8`,
    /// `abs_tol = 1e-10`, `dt_init = 1e-3`, `dt_max = t_end / 100`.
    pub fn for_horizon(t_end: f64) -> Self {
        let dt_max = (t_end / 100.0).max(1e-3);
        StepControl {
            method: Method::Rk45Adaptive,
            dt_init: 1e-3f64.min(dt_max),
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            dt_min: 1e-14,
            dt_max,
            max_steps: 100_000_000,
        }
    }

    pub fn fixed(dt: f64) -> Self {
        StepControl {
            method: Method::Rk4Fixed,
            dt_init: dt,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            dt_min: dt,
            dt_max: dt,
            max_steps: 100_000_000,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.dt_init) && positive(self.dt_min) && positive(self.dt_max)) {
            return Err("step sizes must be positive and finite".into());
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(format!(
                "need dt_min <= dt_init <= dt_max, got {} <= {} <= {}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("{name} = {v} must lie in (0, 1)"));
            }
        }
        if self.max_steps == 0 {
            return Err("max_steps must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeError {
    StepUnderflow { t: f64, dt: f64 },
    MaxStepsExceeded { t: f64, max_steps: u64 },
    NonfiniteState { t: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    /// Sum over accepted steps of the max-norm local error estimate.
    pub accumulated_error: f64,
}

/// One classical RK4 step of size `dt` from `y` into `out`.
pub fn rk4_step<S: OdeSystem + ?Sized>(sys: &S, y: &[f64], dt: f64, out: &mut [f64]) {
    let m = y.len();
    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    sys.rhs(y, &mut k1);
    for i in 0..m {
        tmp[i] = y[i] + 0.5 * dt * k1[i];
    }
    sys.rhs(&tmp, &mut k2);
    for i in 0..m {
        tmp[i] = y[i] + 0.5 * dt * k2[i];
    }
    sys.rhs(&tmp, &mut k3);
    for i in 0..m {
        tmp[i] = y[i] + dt * k3[i];
    }
    sys.rhs(&tmp, &mut k4);
    for i in 0..m {
        out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

// Dormand-Prince 5(4) tableau; the systems are autonomous, so the nodes
// c_i are not needed
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (difference between the 5th and embedded 4th order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Advances an [`OdeSystem`] with a given [`StepControl`].
pub struct Driver<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    control: StepControl,
    t: f64,
    y: Vec<f64>,
    dt: f64,
    k: [Vec<f64>; 7],
    k1_current: bool,
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    stats: Stats,
}

impl<'a, S: OdeSystem + ?Sized> Driver<'a, S> {
    pub fn new(sys: &'a S, control: StepControl, t0: f64, y0: Vec<f64>) -> Self {
        let m = sys.dim();
        assert_eq!(y0.len(), m, "initial state has wrong dimension");
        let dt = control.dt_init;
        Driver {
            sys,
            control,
            t: t0,
            y: y0,
            dt,
            k: std::array::from_fn(|_| vec![0.0; m]),
            k1_current: false,
            tmp: vec![0.0; m],
            y_new: vec![0.0; m],
            stats: Stats::default(),
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    /// Step size the controller would try next.
    pub fn next_dt(&self) -> f64 {
        self.dt
    }

    fn steps_taken(&self) -> u64 {
        self.stats.accepted + self.stats.rejected
    }

    /// Integrates from the current time up to exactly `target`.
    pub fn advance_to(&mut self, target: f64) -> Result<(), OdeError> {
        while self.t < target {
            if self.steps_taken() >= self.control.max_steps {
                return Err(OdeError::MaxStepsExceeded { t: self.t, max_steps: self.control.max_steps });
            }
            let remaining = target - self.t;
            match self.control.method {
                Method::Rk4Fixed => self.fixed_step(remaining)?,
                Method::Rk45Adaptive => self.adaptive_step(remaining)?,
            }
        }
        Ok(())
    }

    fn fixed_step(&mut self, remaining: f64) -> Result<(), OdeError> {
        let clipped = remaining <= self.control.dt_init;
        let h = if clipped { remaining } else { self.control.dt_init };
        rk4_step(self.sys, &self.y, h, &mut self.y_new);
        self.stats.rhs_evals += 4;
        if self.y_new.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonfiniteState { t: self.t });
        }
        std::mem::swap(&mut self.y, &mut self.y_new);
        self.t = if clipped { self.t + remaining } else { self.t + h };
        self.stats.accepted += 1;
        Ok(())
    }

    /// Dormand-Prince trial step of size `h`; leaves the candidate in
    /// `y_new`, stage derivatives in `k`, and returns the scaled error
    /// norm together with the max-norm absolute error estimate.
    fn dopri_trial(&mut self, h: f64) -> (f64, f64) {
        let m = self.y.len();
        let sys = self.sys;
        if !self.k1_current {
            sys.rhs(&self.y, &mut self.k[0]);
            self.stats.rhs_evals += 1;
            self.k1_current = true;
        }
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let (y, tmp, y_new) = (&self.y, &mut self.tmp, &mut self.y_new);
        for i in 0..m {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(tmp, k2);
        for i in 0..m {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(tmp, k3);
        for i in 0..m {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(tmp, k4);
        for i in 0..m {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(tmp, k5);
        for i in 0..m {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(tmp, k6);
        for i in 0..m {
            y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        sys.rhs(y_new, k7);
        self.stats.rhs_evals += 6;

        let mut ratio = 0.0f64;
        let mut abs_err = 0.0f64;
        for i in 0..m {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = self.control.abs_tol + self.control.rel_tol * y[i].abs().max(y_new[i].abs());
            let e = e.abs();
            if !e.is_finite() || !y_new[i].is_finite() {
                return (f64::INFINITY, f64::INFINITY);
            }
            ratio = ratio.max(e / scale);
            abs_err = abs_err.max(e);
        }
        (ratio, abs_err)
    }

    fn adaptive_step(&mut self, remaining: f64) -> Result<(), OdeError> {
        let ctl = self.control.clone();
        loop {
            let proposal = self.dt.min(ctl.dt_max);
            let clipped = remaining <= proposal;
            let h = if clipped { remaining } else { proposal };
            let (ratio, abs_err) = self.dopri_trial(h);
            let factor = if ratio == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * ratio.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if ratio <= 1.0 {
                std::mem::swap(&mut self.y, &mut self.y_new);
                // FSAL: last stage is the derivative at the new point
                self.k.swap(0, 6);
                self.t = if clipped { self.t + remaining } else { self.t + h };
                self.stats.accepted += 1;
                self.stats.accumulated_error += abs_err;
                let next = (h * factor).min(ctl.dt_max);
                // a step shortened to land on an output time says nothing
                // against the step the controller had planned
                self.dt = if clipped { next.max(self.dt) } else { next };
                return Ok(());
            }
            self.stats.rejected += 1;
            let shrink = if ratio.is_finite() { factor.min(1.0) } else { MIN_FACTOR };
            let next = h * shrink;
            if next < ctl.dt_min && next < remaining {
                if !ratio.is_finite() {
                    return Err(OdeError::NonfiniteState { t: self.t });
                }
                return Err(OdeError::StepUnderflow { t: self.t, dt: next });
            }
            self.dt = next;
            if self.steps_taken() >= ctl.max_steps {
                return Err(OdeError::MaxStepsExceeded { t: self.t, max_steps: ctl.max_steps });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0];
        }
    }

    /// Harmonic oscillator `x'' = -x`.
    struct Oscillator;

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    /// `x' = x^{-3}`, exact solution `x^4 = x0^4 + 4t`.
    struct InverseCube;

    impl OdeSystem for InverseCube {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[0].powi(-3);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |dt: f64| {
            let mut d = Driver::new(&Decay(1.0), StepControl::fixed(dt), 0.0, vec![1.0]);
            d.advance_to(1.0).unwrap();
            (d.y()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 16.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn adaptive_decay_meets_tolerance() {
        let mut ctl = StepControl::for_horizon(10.0);
        ctl.rel_tol = 1e-10;
        ctl.abs_tol = 1e-14;
        let mut d = Driver::new(&Decay(1.0), ctl, 0.0, vec![1.0]);
        for &t in &[0.5, 1.0, 5.0, 10.0] {
            d.advance_to(t).unwrap();
            assert_eq!(d.t(), t);
            let exact = (-t).exp();
            assert!((d.y()[0] - exact).abs() <= 1e-8 * exact, "t={t}: {} vs {exact}", d.y()[0]);
        }
    }

    #[test]
    fn oscillator_long_run() {
        let ctl = StepControl { dt_max: 0.5, ..StepControl::for_horizon(100.0) };
        let mut d = Driver::new(&Oscillator, ctl, 0.0, vec![1.0, 0.0]);
        d.advance_to(100.0).unwrap();
        assert!((d.y()[0] - 100f64.cos()).abs() < 1e-6);
        assert!((d.y()[1] + 100f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn inverse_cube_growth_with_growing_steps() {
        let t_end = 1e6;
        let mut d = Driver::new(&InverseCube, StepControl::for_horizon(t_end), 0.0, vec![1.0]);
        d.advance_to(t_end).unwrap();
        let exact = (1.0 + 4.0 * t_end).powf(0.25);
        assert!((d.y()[0] - exact).abs() < 1e-6 * exact);
        assert!(d.stats().accepted < 5000, "{:?}", d.stats());
    }

    #[test]
    fn step_underflow_reported() {
        struct Blowup;
        impl OdeSystem for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, y: &[f64], dy: &mut [f64]) {
                dy[0] = y[0] * y[0];
            }
        }
        let ctl = StepControl { dt_min: 1e-9, ..StepControl::for_horizon(2.0) };
        let mut d = Driver::new(&Blowup, ctl, 0.0, vec![1.0]);
        let err = d.advance_to(2.0).unwrap_err();
        assert!(
            matches!(err, OdeError::StepUnderflow { t, .. } | OdeError::NonfiniteState { t } if t < 1.01 && t > 0.9),
            "{err:?}"
        );
    }

    #[test]
    fn max_steps_reported() {
        let ctl = StepControl { max_steps: 10, ..StepControl::fixed(1e-3) };
        let mut d = Driver::new(&Decay(1.0), ctl, 0.0, vec![1.0]);
        assert!(matches!(d.advance_to(1.0), Err(OdeError::MaxStepsExceeded { max_steps: 10, .. })));
    }

    #[test]
    fn control_validation() {
        assert!(StepControl::for_horizon(1e6).validate().is_ok());
        let bad = StepControl { dt_min: 1.0, ..StepControl::for_horizon(1e6) };
        assert!(bad.validate().is_err());
        let bad = StepControl { rel_tol: 1.5, ..StepControl::for_horizon(1e6) };
        assert!(bad.validate().is_err());
    }
}
