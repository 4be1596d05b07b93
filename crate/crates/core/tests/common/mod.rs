//! Reference implementations used only by tests. They share no code
//! with the library beyond its public types.
#![allow(dead_code)]

use entroflow::{AffinityMatrix, Configuration, Kernel, KernelFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Closed-form `beta`, `gamma`, `gamma'` and `(log beta)'` per family.
#[derive(Debug, Clone, Copy)]
pub enum RefKernel {
    Cauchy,
    Gaussian,
    Power(f64),
}

impl RefKernel {
    pub fn of(kernel: &Kernel) -> Self {
        match kernel.family() {
            KernelFamily::Cauchy => RefKernel::Cauchy,
            KernelFamily::Gaussian => RefKernel::Gaussian,
            KernelFamily::Power(p) => RefKernel::Power(p),
        }
    }

    pub fn beta(self, x: f64) -> f64 {
        match self {
            RefKernel::Cauchy => 1.0 / (1.0 + x),
            RefKernel::Gaussian => (-x).exp(),
            RefKernel::Power(p) => (1.0 + x).powf(-p),
        }
    }

    pub fn gamma(self, x: f64) -> f64 {
        match self {
            RefKernel::Cauchy => 1.0 + x,
            RefKernel::Gaussian => x.exp(),
            RefKernel::Power(p) => (1.0 + x).powf(p),
        }
    }

    pub fn gamma_prime(self, x: f64) -> f64 {
        match self {
            RefKernel::Cauchy => 1.0,
            RefKernel::Gaussian => x.exp(),
            RefKernel::Power(p) => p * (1.0 + x).powf(p - 1.0),
        }
    }

    pub fn log_beta_prime(self, x: f64) -> f64 {
        match self {
            RefKernel::Cauchy => -1.0 / (1.0 + x),
            RefKernel::Gaussian => -1.0,
            RefKernel::Power(p) => -p / (1.0 + x),
        }
    }
}

pub fn sqdist(y: &[f64], s: usize, i: usize, j: usize) -> f64 {
    (0..s).map(|k| (y[i * s + k] - y[j * s + k]).powi(2)).sum()
}

/// `sum_{i != j} p_ij log(p_ij / q_ij)` computed directly from `beta`.
pub fn ref_cost(y: &[f64], s: usize, p: &AffinityMatrix, k: RefKernel) -> f64 {
    let n = p.n();
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                z += k.beta(sqdist(y, s, i, j));
            }
        }
    }
    let mut c = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p.get(i, j);
            if i != j && pij > 0.0 {
                let q = k.beta(sqdist(y, s, i, j)) / z;
                c += pij * (pij / q).ln();
            }
        }
    }
    c
}

/// `(8/Z) sum_{i<j} (p_ij Z - A_ij) |y_i - y_j|^2 (log beta)'`.
pub fn ref_ds_dt_pairs(y: &[f64], s: usize, p: &AffinityMatrix, k: RefKernel) -> f64 {
    let n = p.n();
    let z = ref_z(y, s, n, k);
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = sqdist(y, s, i, j);
            acc += (p.get(i, j) * z - k.beta(d)) * d * k.log_beta_prime(d);
        }
    }
    8.0 / z * acc
}

/// Cauchy form `(8/Z) sum_{i<j} (p_ij Z - A_ij) A_ij`.
pub fn ref_ds_dt_cauchy(y: &[f64], s: usize, p: &AffinityMatrix) -> f64 {
    let n = p.n();
    let k = RefKernel::Cauchy;
    let z = ref_z(y, s, n, k);
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let a = k.beta(sqdist(y, s, i, j));
            acc += (p.get(i, j) * z - a) * a;
        }
    }
    8.0 / z * acc
}

/// Gaussian form `(8/Z) sum_{i<j} (p_ij Z - A_ij) log(A_ij / Z)`.
pub fn ref_ds_dt_gaussian(y: &[f64], s: usize, p: &AffinityMatrix) -> f64 {
    let n = p.n();
    let k = RefKernel::Gaussian;
    let z = ref_z(y, s, n, k);
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = sqdist(y, s, i, j);
            acc += (p.get(i, j) * z - k.beta(d)) * (-d - z.ln());
        }
    }
    8.0 / z * acc
}

fn ref_z(y: &[f64], s: usize, n: usize, k: RefKernel) -> f64 {
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                z += k.beta(sqdist(y, s, i, j));
            }
        }
    }
    z
}

/// Random positive symmetric `P` with directed total 1.
pub fn random_affinity(rng: &mut ChaCha8Rng, n: usize) -> AffinityMatrix {
    let mut w = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rng.gen_range(0.05..1.0);
            w[i * n + j] = v;
            total += 2.0 * v;
        }
    }
    AffinityMatrix::from_pair_values(n, |i, j| w[i * n + j] / total).unwrap()
}

pub fn random_config(rng: &mut ChaCha8Rng, n: usize, s: usize, scale: f64) -> Configuration {
    let coords = (0..n * s).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Configuration::new(n, s, coords).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const KERNELS: [KernelFamily; 3] = [KernelFamily::Cauchy, KernelFamily::Gaussian, KernelFamily::Power(2.0)];

/// Symmetric layouts whose half-width obeys a scalar ODE.
#[derive(Debug, Clone, Copy)]
pub enum RefLayout {
    /// `(X, 0, -X)` with `p_12 = p_23 = a`.
    Line3,
    /// `(X,0), (0,X), (-X,0), (0,-X)` with adjacent `p = a`.
    Square4,
}

/// `dX/dt` in the product-of-brackets form written through `gamma`.
pub fn ref_scalar_rhs(layout: RefLayout, x: f64, a: f64, k: RefKernel) -> f64 {
    match layout {
        RefLayout::Line3 => {
            let (u, v) = (x * x, 4.0 * x * x);
            let z = 4.0 * k.beta(u) + 2.0 * k.beta(v);
            let (g1, g4, d1, d4) = (k.gamma(u), k.gamma(v), k.gamma_prime(u), k.gamma_prime(v));
            4.0 * x / z * ((1.0 - 4.0 * a) * g4 - 2.0 * a * g1) * (d1 * g4 - 4.0 * d4 * g1) / (g1 * g1 * g4 * g4)
        }
        RefLayout::Square4 => {
            let (u, v) = (2.0 * x * x, 4.0 * x * x);
            let z = 8.0 * k.beta(u) + 4.0 * k.beta(v);
            let (g2, g4, d2, d4) = (k.gamma(u), k.gamma(v), k.gamma_prime(u), k.gamma_prime(v));
            8.0 * x / z * ((1.0 - 8.0 * a) * g4 - 4.0 * a * g2) * (d2 * g4 - 2.0 * d4 * g2) / (g2 * g2 * g4 * g4)
        }
    }
}

/// Classical RK4 for a scalar ODE with step `h * (1 + t)`, reporting `X`
/// at each of the increasing `times`, each of which is hit exactly.
pub fn rk4_scalar(f: impl Fn(f64) -> f64, x0: f64, h: f64, times: &[f64]) -> Vec<f64> {
    let mut t = 0.0;
    let mut x = x0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t < target {
            let full = h * (1.0 + t);
            let last = target - t <= full;
            let dt = if last { target - t } else { full };
            let k1 = f(x);
            let k2 = f(x + 0.5 * dt * k1);
            let k3 = f(x + 0.5 * dt * k2);
            let k4 = f(x + dt * k3);
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t = if last { target } else { t + dt };
        }
        out.push(x);
    }
    out
}
