//! Embedding-space similarities, the relative entropy cost and its
//! gradient flow field.
//!
//! With `A_ij = beta(|y_i - y_j|^2)` and `Z = sum_{i != j} A_ij`, the
//! similarities are `q_ij = A_ij / Z` and the flow is
//!
//! ```text
//! dy_i/dt = 4 sum_{j != i} (p_ij - q_ij) (y_i - y_j) (log beta)'(|y_i - y_j|^2)
//! ```
//!
//! which is `-grad_{y_i}` of `C(Y) = sum_{i != j} p_ij log(p_ij / q_ij)`.
//! All sums run over `j` in ascending order.

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// `n` points in `R^s`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigurationRepr", into = "ConfigurationRepr")]
pub struct Configuration {
    n: usize,
    s: usize,
    coords: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConfigurationRepr {
    n: usize,
    s: usize,
    points: Vec<f64>,
}

impl TryFrom<ConfigurationRepr> for Configuration {
    type Error = Error;

    fn try_from(r: ConfigurationRepr) -> Result<Self> {
        Configuration::new(r.n, r.s, r.points)
    }
}

impl From<Configuration> for ConfigurationRepr {
    fn from(c: Configuration) -> Self {
        ConfigurationRepr { n: c.n, s: c.s, points: c.coords }
    }
}

impl Configuration {
    pub fn new(n: usize, s: usize, coords: Vec<f64>) -> Result<Self> {
        if n < 2 || s < 1 {
            return Err(Error::InvalidConfiguration(format!(
                "need n >= 2 and s >= 1, got n = {n}, s = {s}"
            )));
        }
        if coords.len() != n * s {
            return Err(Error::InvalidConfiguration(format!(
                "expected {} coordinates, got {}",
                n * s,
                coords.len()
            )));
        }
        if let Some(k) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfiguration(format!(
                "nonfinite coordinate {} of point {}",
                k % s,
                k / s
            )));
        }
        Ok(Configuration { n, s, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len();
        let s = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != s) {
            return Err(Error::InvalidConfiguration("points have mixed dimensions".into()));
        }
        Self::new(n, s, points.concat())
    }

    /// One-dimensional configuration from a list of positions.
    pub fn on_line(xs: &[f64]) -> Result<Self> {
        Self::new(xs.len(), 1, xs.to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.s..(i + 1) * self.s]
    }

    pub fn sqdist(&self, i: usize, j: usize) -> f64 {
        sqdist(self.point(i), self.point(j))
    }

    /// Replaces the coordinates, keeping the shape.
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        Self::new(self.n, self.s, coords)
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }
}

#[inline]
fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise squared distances and kernel values of a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseCache {
    n: usize,
    sqdist: Vec<f64>,
    a: Vec<f64>,
    log_a: Vec<f64>,
    z: f64,
}

impl PairwiseCache {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn sqdist(&self, i: usize, j: usize) -> f64 {
        self.sqdist[i * self.n + j]
    }

    /// `A_ij = beta(|y_i - y_j|^2)`; zero on the diagonal.
    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// `log A_ij`, finite even where `A_ij` underflows.
    #[inline]
    pub fn log_a(&self, i: usize, j: usize) -> f64 {
        self.log_a[i * self.n + j]
    }

    /// `Z = sum_{i != j} A_ij`.
    pub fn z(&self) -> f64 {
        self.z
    }

    #[inline]
    pub fn q(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.a(i, j) / self.z
        }
    }
}

fn check_same_n(p: &AffinityMatrix, n: usize) -> Result<()> {
    if p.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "affinity has n = {}, configuration has n = {n}",
            p.n()
        )));
    }
    Ok(())
}

pub fn similarities(config: &Configuration, kernel: &Kernel) -> PairwiseCache {
    let n = config.n();
    let mut sq = vec![0.0; n * n];
    let mut a = vec![0.0; n * n];
    let mut log_a = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = config.sqdist(i, j);
            let (b, lb) = (kernel.beta(d), kernel.log_beta(d));
            sq[i * n + j] = d;
            sq[j * n + i] = d;
            a[i * n + j] = b;
            a[j * n + i] = b;
            log_a[i * n + j] = lb;
            log_a[j * n + i] = lb;
        }
    }
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                z += a[i * n + j];
            }
        }
    }
    PairwiseCache { n, sqdist: sq, a, log_a, z }
}

/// `C = sum_{i != j} p_ij log(p_ij / q_ij)`, using `log q_ij = log A_ij - log Z`
/// so that an underflowed `A_ij` does not produce an infinite cost.
pub fn relative_entropy(p: &AffinityMatrix, cache: &PairwiseCache) -> Result<f64> {
    check_same_n(p, cache.n())?;
    let n = cache.n();
    let log_z = cache.z().ln();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.get(i, j);
            let log_q = cache.log_a(i, j) - log_z;
            total += pij * (pij.ln() - log_q);
        }
    }
    Ok(total)
}

/// Relative entropy of a configuration.
pub fn cost(config: &Configuration, p: &AffinityMatrix, kernel: &Kernel) -> Result<f64> {
    relative_entropy(p, &similarities(config, kernel))
}

/// Evaluates the flow field on raw row-major coordinates into `out`.
///
/// # Panics
/// If the slice lengths disagree with `p.n()` and `s`.
pub fn flow_field_into(coords: &[f64], s: usize, p: &AffinityMatrix, kernel: &Kernel, out: &mut [f64]) {
    let n = p.n();
    assert_eq!(coords.len(), n * s);
    assert_eq!(out.len(), n * s);
    let mut sq = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = sqdist(&coords[i * s..(i + 1) * s], &coords[j * s..(j + 1) * s]);
            sq[i * n + j] = d;
            sq[j * n + i] = d;
        }
    }
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let b = kernel.beta(sq[i * n + j]);
                a[i * n + j] = b;
                z += b;
            }
        }
    }
    out.fill(0.0);
    for i in 0..n {
        let yi = &coords[i * s..(i + 1) * s];
        let vi = &mut out[i * s..(i + 1) * s];
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = sq[i * n + j];
            let w = 4.0 * (p.get(i, j) - a[i * n + j] / z) * kernel.log_beta_prime(d);
            let yj = &coords[j * s..(j + 1) * s];
            for k in 0..s {
                vi[k] += w * (yi[k] - yj[k]);
            }
        }
    }
}

/// Velocities `dy_i/dt`, row-major with the configuration's layout.
pub fn flow_vector_field(config: &Configuration, p: &AffinityMatrix, kernel: &Kernel) -> Result<Vec<f64>> {
    check_same_n(p, config.n())?;
    let mut out = vec![0.0; config.coords().len()];
    flow_field_into(config.coords(), config.s(), p, kernel, &mut out);
    Ok(out)
}

pub fn center_of_mass(config: &Configuration) -> Vec<f64> {
    let (n, s) = (config.n(), config.s());
    let mut m = vec![0.0; s];
    for i in 0..n {
        for (mk, y) in m.iter_mut().zip(config.point(i)) {
            *mk += y;
        }
    }
    for mk in &mut m {
        *mk /= n as f64;
    }
    m
}

pub fn recenter(config: &Configuration) -> Configuration {
    let m = center_of_mass(config);
    let s = config.s();
    let coords = config
        .coords()
        .iter()
        .enumerate()
        .map(|(k, v)| v - m[k % s])
        .collect();
    Configuration { n: config.n(), s, coords }
}

/// `dS/dt` computed from the field as `sum_i 2 y_i . v_i`.
pub fn second_moment_rate(config: &Configuration, velocities: &[f64]) -> f64 {
    2.0 * config
        .coords()
        .iter()
        .zip(velocities)
        .map(|(y, v)| y * v)
        .sum::<f64>()
}

/// Pair form `(8/Z) sum_{i<j} (p_ij Z - A_ij) |y_i-y_j|^2 (log beta)'(|y_i-y_j|^2)`.
pub fn second_moment_rate_pairs(p: &AffinityMatrix, cache: &PairwiseCache, kernel: &Kernel) -> f64 {
    let (n, z) = (cache.n(), cache.z());
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = cache.sqdist(i, j);
            sum += (p.get(i, j) * z - cache.a(i, j)) * d * kernel.log_beta_prime(d);
        }
    }
    8.0 / z * sum
}

/// Cauchy specialization `(8/Z) sum_{i<j} (p_ij Z - A_ij) A_ij`.
pub fn second_moment_rate_cauchy(p: &AffinityMatrix, cache: &PairwiseCache) -> f64 {
    let (n, z) = (cache.n(), cache.z());
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let a = cache.a(i, j);
            sum += (p.get(i, j) * z - a) * a;
        }
    }
    8.0 / z * sum
}

/// Gaussian specialization `(8/Z) sum_{i<j} (p_ij Z - A_ij) log(A_ij / Z)`.
pub fn second_moment_rate_gaussian(p: &AffinityMatrix, cache: &PairwiseCache) -> f64 {
    let (n, z) = (cache.n(), cache.z());
    let log_z = z.ln();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += (p.get(i, j) * z - cache.a(i, j)) * (cache.log_a(i, j) - log_z);
        }
    }
    8.0 / z * sum
}

/// `sum_{i<j} (p_ij Z - A_ij)`, identically zero.
pub fn pair_balance(p: &AffinityMatrix, cache: &PairwiseCache) -> f64 {
    let (n, z) = (cache.n(), cache.z());
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += p.get(i, j) * z - cache.a(i, j);
        }
    }
    sum
}
