//! Target distribution `p_ij` on directed pairs.
//!
//! Either built from high-dimensional points (Gaussian conditionals with
//! per-point bandwidths, then symmetrized) or loaded from a matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// High-dimensional input points, row-major `n x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighDimDataset {
    n: usize,
    d: usize,
    points: Vec<f64>,
}

impl HighDimDataset {
    pub fn new(n: usize, d: usize, points: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need at least 2 points, got {n}")));
        }
        if d == 0 {
            return Err(Error::InvalidDataset("ambient dimension must be positive".into()));
        }
        if points.len() != n * d {
            return Err(Error::InvalidDataset(format!(
                "expected {} coordinates for {n} points in dimension {d}, got {}",
                n * d,
                points.len()
            )));
        }
        if let Some(k) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "nonfinite coordinate at point {}, column {}",
                k / d,
                k % d
            )));
        }
        Ok(HighDimDataset { n, d, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::InvalidDataset(format!(
                "row {i} has {} columns, expected {d}",
                r.len()
            )));
        }
        Self::new(n, d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn sqdist(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Pairs `(i, j)`, `i < j`, of coincident points.
    pub fn duplicate_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.point(i) == self.point(j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Per-point Gaussian bandwidths `sigma_i > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub sigma: Vec<f64>,
}

impl Bandwidths {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if let Some(i) = sigma.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "sigma[{i}] = {} must be positive and finite",
                sigma[i]
            )));
        }
        Ok(Bandwidths { sigma })
    }

    pub fn uniform(n: usize, sigma: f64) -> Result<Self> {
        Self::new(vec![sigma; n])
    }
}

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, entries: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }
}

/// Symmetric, strictly positive off-diagonal probability distribution on
/// directed pairs `i != j`, summing to one over ordered pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    p: Vec<f64>,
}

/// Off-diagonal total must be one within this before and after validation.
pub const TOTAL_TOL: f64 = 1e-12;
/// Largest asymmetry `|p_ij - p_ji|` accepted, and repaired, on load.
pub const LOAD_ASYMMETRY_TOL: f64 = 1e-9;
/// Largest deviation of the total from one that is renormalized on load.
pub const LOAD_TOTAL_TOL: f64 = 1e-6;

impl AffinityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.p
    }

    pub fn total(&self) -> f64 {
        off_diagonal_total(self.n, &self.p)
    }

    /// Builds a matrix from unordered pair values: each value `w_{ij}`,
    /// `i < j`, is stored in both `(i, j)` and `(j, i)`, and the caller is
    /// responsible for `2 * sum w = 1`.
    pub fn from_pair_values(n: usize, value: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = value(i, j);
                p[i * n + j] = v;
                p[j * n + i] = v;
            }
        }
        Self::validated(n, p)
    }

    /// Strict validation; no repair is attempted.
    pub fn validated(n: usize, p: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidAffinity(format!("need n >= 2, got {n}")));
        }
        if p.len() != n * n {
            return Err(Error::InvalidAffinity(format!(
                "expected {} entries for n = {n}, got {}",
                n * n,
                p.len()
            )));
        }
        for i in 0..n {
            if p[i * n + i] != 0.0 {
                return Err(Error::InvalidAffinity(format!(
                    "diagonal entry p[{i}][{i}] = {} must be zero",
                    p[i * n + i]
                )));
            }
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = p[i * n + j];
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidAffinity(format!(
                        "p[{i}][{j}] = {v}; every off-diagonal entry must be positive"
                    )));
                }
                if v != p[j * n + i] {
                    return Err(Error::InvalidAffinity(format!(
                        "p[{i}][{j}] = {v} differs from p[{j}][{i}] = {}",
                        p[j * n + i]
                    )));
                }
            }
        }
        let total = off_diagonal_total(n, &p);
        if (total - 1.0).abs() > TOTAL_TOL {
            return Err(Error::InvalidAffinity(format!(
                "off-diagonal total is {total}, expected 1"
            )));
        }
        Ok(AffinityMatrix { n, p })
    }
}

fn off_diagonal_total(n: usize, p: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += p[i * n + j];
            }
        }
    }
    total
}

/// Row `i` of the Gaussian conditional `p_{j|i}` for bandwidth `sigma`,
/// written into `out` (diagonal zero). Returns the normalizer of the
/// shifted exponentials.
fn conditional_row(sqd: &[f64], i: usize, sigma: f64, out: &mut [f64]) -> f64 {
    let n = sqd.len();
    let d_min = (0..n)
        .filter(|&k| k != i)
        .map(|k| sqd[k])
        .fold(f64::INFINITY, f64::min);
    let scale = 1.0 / (2.0 * sigma * sigma);
    let mut norm = 0.0;
    for k in 0..n {
        if k == i {
            out[k] = 0.0;
            continue;
        }
        let w = (-(sqd[k] - d_min) * scale).exp();
        out[k] = w;
        norm += w;
    }
    if norm > 0.0 {
        for v in out.iter_mut() {
            *v /= norm;
        }
    }
    norm
}

fn sqdist_rows(data: &HighDimDataset) -> Vec<Vec<f64>> {
    (0..data.n())
        .map(|i| (0..data.n()).map(|j| data.sqdist(i, j)).collect())
        .collect()
}

/// Gaussian conditionals `p_{j|i}`; row `i` sums to one.
pub fn conditional_probs(data: &HighDimDataset, bw: &Bandwidths) -> Result<SquareMatrix> {
    let n = data.n();
    if bw.sigma.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} bandwidths for {n} points",
            bw.sigma.len()
        )));
    }
    let sqd = sqdist_rows(data);
    let mut out = SquareMatrix::zeros(n);
    let mut row = vec![0.0; n];
    for (i, d) in sqd.iter().enumerate() {
        let norm = conditional_row(d, i, bw.sigma[i], &mut row);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::DegenerateRow { row: i });
        }
        out.entries[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    Ok(out)
}

/// `p_ij = (p_{i|j} + p_{j|i}) / (2n)`.
pub fn symmetrize(conditionals: &SquareMatrix) -> Result<AffinityMatrix> {
    let n = conditionals.n;
    for i in 0..n {
        let s: f64 = conditionals.row(i).iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidAffinity(format!(
                "conditional row {i} sums to {s}, expected 1"
            )));
        }
    }
    let denom = 2.0 * n as f64;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = (conditionals.get(i, j) + conditionals.get(j, i)) / denom;
            if v <= 0.0 {
                return Err(Error::AffinityUnderflow { i, j });
            }
            p[i * n + j] = v;
            p[j * n + i] = v;
        }
    }
    let total = off_diagonal_total(n, &p);
    if (total - 1.0).abs() > TOTAL_TOL {
        // rows sum to one only within 1e-9; rescale onto the simplex
        for v in &mut p {
            *v /= total;
        }
    }
    AffinityMatrix::validated(n, p)
}

/// Shannon entropy in bits of a probability row.
pub fn entropy_bits(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.log2())
        .sum::<f64>()
}

/// Perplexity `2^H` of row `i` of the conditionals for a given bandwidth.
pub fn row_perplexity(data: &HighDimDataset, i: usize, sigma: f64) -> f64 {
    let sqd: Vec<f64> = (0..data.n()).map(|j| data.sqdist(i, j)).collect();
    let mut row = vec![0.0; data.n()];
    conditional_row(&sqd, i, sigma, &mut row);
    entropy_bits(&row).exp2()
}

pub const LOG_SIGMA_LO: f64 = -20.0;
pub const LOG_SIGMA_HI: f64 = 20.0;
pub const CALIBRATION_MAX_ITERS: usize = 200;
pub const PERPLEXITY_REL_TOL: f64 = 1e-6;

/// Bisection on `log sigma_i` so that each row has the target perplexity.
pub fn calibrate_bandwidths(data: &HighDimDataset, target_perplexity: f64) -> Result<Bandwidths> {
    let n = data.n();
    let upper = (n - 1) as f64 * (1.0 + PERPLEXITY_REL_TOL);
    if !(target_perplexity > 1.0 && target_perplexity < upper) {
        return Err(Error::ParameterOutOfRange {
            name: "perplexity".into(),
            value: target_perplexity,
            interval: format!("(1, {}) for n = {n}", n - 1),
        });
    }
    let sqd = sqdist_rows(data);
    let mut row = vec![0.0; n];
    let mut perplexity = |i: usize, log_sigma: f64| {
        conditional_row(&sqd[i], i, log_sigma.exp(), &mut row);
        entropy_bits(&row).exp2()
    };
    let tol = PERPLEXITY_REL_TOL * target_perplexity;

    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        let p_lo = perplexity(i, LOG_SIGMA_LO);
        let p_hi = perplexity(i, LOG_SIGMA_HI);
        if target_perplexity < p_lo - tol || target_perplexity > p_hi + tol {
            return Err(Error::NotBracketed { row: i, target: target_perplexity, lo: p_lo, hi: p_hi });
        }
        let (mut lo, mut hi) = (LOG_SIGMA_LO, LOG_SIGMA_HI);
        let mut mid = 0.5 * (lo + hi);
        let mut converged = false;
        for _ in 0..CALIBRATION_MAX_ITERS {
            mid = 0.5 * (lo + hi);
            let p = perplexity(i, mid);
            if (p - target_perplexity).abs() <= tol {
                converged = true;
                break;
            }
            if p < target_perplexity {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if !converged {
            return Err(Error::NotBracketed { row: i, target: target_perplexity, lo: p_lo, hi: p_hi });
        }
        sigma.push(mid.exp());
    }
    Bandwidths::new(sigma)
}

/// Validates a user-supplied matrix, repairing asymmetry up to
/// [`LOAD_ASYMMETRY_TOL`] and total mass off by up to [`LOAD_TOTAL_TOL`].
pub fn load_affinity(matrix: &SquareMatrix) -> Result<AffinityMatrix> {
    let n = matrix.n;
    if matrix.entries.len() != n * n {
        return Err(Error::InvalidAffinity(format!(
            "expected {} entries for n = {n}, got {}",
            n * n,
            matrix.entries.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidAffinity(format!("need n >= 2, got {n}")));
    }
    for i in 0..n {
        let d = matrix.get(i, i);
        if d != 0.0 {
            return Err(Error::InvalidAffinity(format!("diagonal entry p[{i}][{i}] = {d} must be zero")));
        }
        for j in 0..n {
            let v = matrix.get(i, j);
            if i != j && !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidAffinity(format!(
                    "p[{i}][{j}] = {v}; every off-diagonal entry must be positive"
                )));
            }
        }
    }
    let mut p = matrix.entries.clone();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (matrix.get(i, j), matrix.get(j, i));
            if (a - b).abs() > LOAD_ASYMMETRY_TOL {
                return Err(Error::InvalidAffinity(format!(
                    "asymmetry |p[{i}][{j}] - p[{j}][{i}]| = {:e} exceeds {LOAD_ASYMMETRY_TOL:e}",
                    (a - b).abs()
                )));
            }
            let avg = 0.5 * (a + b);
            p[i * n + j] = avg;
            p[j * n + i] = avg;
        }
    }
    let total = off_diagonal_total(n, &p);
    if (total - 1.0).abs() > LOAD_TOTAL_TOL {
        return Err(Error::InvalidAffinity(format!(
            "off-diagonal total {total} differs from 1 by more than {LOAD_TOTAL_TOL:e}"
        )));
    }
    if (total - 1.0).abs() > TOTAL_TOL {
        for v in &mut p {
            *v /= total;
        }
    }
    AffinityMatrix::validated(n, p)
}
