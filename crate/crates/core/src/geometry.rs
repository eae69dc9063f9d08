//! Ellipsoidal shells: construction, volumes, membership and uniform sampling.
//!
//! A family is a center `mu`, a lower-triangular factor `L` of the scale
//! matrix `Sigma = L L^T`, and squared radii `0 = c_0 < c_1 < ... < c_M`.
//! Shell `i` is `{theta : c_{i-1} <= (theta - mu)^T Sigma^{-1} (theta - mu) <= c_i}`.
//! Volumes are carried as logarithms throughout.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Upper bound for jitter escalation in [`cholesky_factor`].
pub const DEFAULT_JITTER_CAP: f64 = 1e-2;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: data.len() });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut data = vec![0.0; dim * dim];
        for (i, v) in diag.iter().enumerate() {
            data[i * dim + i] = *v;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| {
            (0..i).all(|j| {
                let (a, b) = (self.get(i, j), self.get(j, i));
                (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
            })
        })
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Lower-triangular Cholesky factor `L` of a positive-definite scale matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    dim: usize,
    /// Row-major, strictly upper part zero.
    lower: Vec<f64>,
    /// Jitter that was added to the diagonal before factorization.
    #[serde(default)]
    jitter: f64,
}

impl ScaleFactor {
    pub fn identity(dim: usize) -> Self {
        let mut lower = vec![0.0; dim * dim];
        for i in 0..dim {
            lower[i * dim + i] = 1.0;
        }
        Self { dim, lower, jitter: 0.0 }
    }

    /// Builds a factor from explicit lower-triangular entries.
    pub fn from_lower(dim: usize, lower: Vec<f64>) -> Result<Self> {
        if lower.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: lower.len() });
        }
        for i in 0..dim {
            if !(lower[i * dim + i] > 0.0) || !lower[i * dim + i].is_finite() {
                return Err(Error::NotPositiveDefinite { jitter: 0.0 });
            }
            for j in i + 1..dim {
                if lower[i * dim + j] != 0.0 {
                    return Err(Error::InvalidParameter("factor is not lower triangular".into()));
                }
            }
        }
        Ok(Self { dim, lower, jitter: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    pub fn lower_rows(&self) -> Vec<Vec<f64>> {
        self.lower.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// `log det L = 0.5 log det Sigma`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).ln()).sum()
    }

    /// `L x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i + 1];
            out[i] = row.iter().zip(&x[..=i]).map(|(a, b)| a * b).sum();
        }
    }

    /// Solves `L z = x` in place by forward substitution.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.lower[i * d + i];
        }
    }

    /// `L L^T`.
    pub fn reconstruct(&self) -> SquareMatrix {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                data[i * d + j] = s;
                data[j * d + i] = s;
            }
        }
        SquareMatrix { dim: d, data }
    }
}

fn try_cholesky(sigma: &SquareMatrix, jitter: f64) -> Option<Vec<f64>> {
    let d = sigma.dim();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = sigma.get(i, j);
            if i == j {
                s += jitter;
            }
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Cholesky factor of `sigma + jitter I`, escalating the jitter by ten up to
/// [`DEFAULT_JITTER_CAP`] when factorization fails.
pub fn cholesky_factor(sigma: &SquareMatrix, jitter: f64) -> Result<ScaleFactor> {
    cholesky_factor_capped(sigma, jitter, DEFAULT_JITTER_CAP)
}

pub fn cholesky_factor_capped(sigma: &SquareMatrix, jitter: f64, cap: f64) -> Result<ScaleFactor> {
    if sigma.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("scale matrix has non-finite entries".into()));
    }
    if !sigma.is_symmetric(1e-9) {
        return Err(Error::InvalidParameter("scale matrix is not symmetric".into()));
    }
    if jitter < 0.0 {
        return Err(Error::InvalidParameter(format!("negative jitter {jitter}")));
    }
    let dim = sigma.dim();
    let mut current = jitter;
    loop {
        if let Some(lower) = try_cholesky(sigma, current) {
            return Ok(ScaleFactor { dim, lower, jitter: current });
        }
        if current >= cap {
            return Err(Error::NotPositiveDefinite { jitter: current });
        }
        let scale = (0..dim).map(|i| sigma.get(i, i).abs()).fold(0.0, f64::max).max(1.0);
        current = if current > 0.0 { current * 10.0 } else { 1e-12 * scale };
        current = current.min(cap);
    }
}

/// `(theta - mu)^T Sigma^{-1} (theta - mu)` via one triangular solve.
pub fn mahalanobis_sq(theta: &[f64], mu: &[f64], scale: &ScaleFactor) -> Result<f64> {
    let d = scale.dim();
    if theta.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: theta.len() });
    }
    if mu.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: mu.len() });
    }
    let mut z: Vec<f64> = theta.iter().zip(mu).map(|(t, m)| t - m).collect();
    scale.solve_in_place(&mut z);
    Ok(z.iter().map(|v| v * v).sum())
}

/// Log volume of the unit ball in `d` dimensions.
pub fn log_unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)
}

/// `log[V_d det(L) (c_hi^{d/2} - c_lo^{d/2})]`, evaluated without forming
/// the powers.
pub fn shell_log_volume(d: usize, scale: &ScaleFactor, c_lo: f64, c_hi: f64) -> Result<f64> {
    if !(c_lo >= 0.0) || !(c_hi > c_lo) || !c_hi.is_finite() {
        return Err(Error::InvalidRadii { c_lo, c_hi });
    }
    let h = d as f64 / 2.0;
    let log_ratio_pow = h * (c_lo / c_hi).ln();
    let log_diff = (-log_ratio_pow.exp_m1()).ln();
    Ok(log_unit_ball_volume(d) + scale.log_det() + h * c_hi.ln() + log_diff)
}

/// `sqrt(c_i) = sqrt_c1 + delta (i - 1)` for `i = 1..=count`, prefixed by `c_0 = 0`.
pub fn build_radii(sqrt_c1: f64, delta: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count + 1);
    out.push(0.0);
    for i in 1..=count {
        let r = sqrt_c1 + delta * (i - 1) as f64;
        out.push(r * r);
    }
    out
}

/// Linear-in-radius schedule used to build and extend shell families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiiSchedule {
    pub sqrt_c1: f64,
    pub delta: f64,
}

impl RadiiSchedule {
    pub fn new(sqrt_c1: f64, delta: f64) -> Result<Self> {
        if !(sqrt_c1 > 0.0) || !(delta >= 0.0) || !sqrt_c1.is_finite() || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "radii schedule sqrt_c1={sqrt_c1}, delta={delta}"
            )));
        }
        Ok(Self { sqrt_c1, delta })
    }

    /// Schedule whose `count`-th radius equals `sqrt_c_max`.
    pub fn spanning(sqrt_c1: f64, sqrt_c_max: f64, count: usize) -> Result<Self> {
        let delta = if count > 1 { (sqrt_c_max - sqrt_c1) / (count - 1) as f64 } else { 0.0 };
        Self::new(sqrt_c1, delta)
    }

    pub fn radii_sq(&self, count: usize) -> Vec<f64> {
        build_radii(self.sqrt_c1, self.delta, count)
    }
}

/// Concentric ellipsoidal shells around one center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellFamily {
    center: Vec<f64>,
    scale: ScaleFactor,
    schedule: RadiiSchedule,
    radii_sq: Vec<f64>,
}

impl ShellFamily {
    pub fn new(center: Vec<f64>, scale: ScaleFactor, schedule: RadiiSchedule, count: usize) -> Result<Self> {
        if center.len() != scale.dim() {
            return Err(Error::DimensionMismatch { expected: scale.dim(), got: center.len() });
        }
        if count == 0 {
            return Err(Error::InvalidParameter("shell count must be positive".into()));
        }
        let radii_sq = schedule.radii_sq(count);
        if radii_sq.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidParameter("radii must be finite and strictly increasing".into()));
        }
        Ok(Self { center, scale, schedule, radii_sq })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> &ScaleFactor {
        &self.scale
    }

    pub fn schedule(&self) -> RadiiSchedule {
        self.schedule
    }

    /// Number of shells `M`.
    pub fn count(&self) -> usize {
        self.radii_sq.len() - 1
    }

    pub fn radii_sq(&self) -> &[f64] {
        &self.radii_sq
    }

    /// Same family with `count` shells; existing radii are unchanged.
    pub fn with_count(&self, count: usize) -> Result<Self> {
        Self::new(self.center.clone(), self.scale.clone(), self.schedule, count)
    }

    /// Shell `index` in `1..=M`.
    pub fn shell(&self, index: usize) -> Result<Shell<'_>> {
        if index == 0 || index > self.count() {
            return Err(Error::InvalidParameter(format!(
                "shell index {index} outside 1..={}",
                self.count()
            )));
        }
        Ok(Shell { family: self, index, c_lo: self.radii_sq[index - 1], c_hi: self.radii_sq[index] })
    }

    pub fn mahalanobis_sq(&self, theta: &[f64]) -> Result<f64> {
        mahalanobis_sq(theta, &self.center, &self.scale)
    }
}

/// One annulus `A_i` of a family.
#[derive(Debug, Clone, Copy)]
pub struct Shell<'a> {
    pub family: &'a ShellFamily,
    pub index: usize,
    pub c_lo: f64,
    pub c_hi: f64,
}

impl Shell<'_> {
    pub fn log_volume(&self) -> Result<f64> {
        shell_log_volume(self.family.dim(), self.family.scale(), self.c_lo, self.c_hi)
    }

    pub fn contains(&self, theta: &[f64]) -> Result<bool> {
        let m = self.family.mahalanobis_sq(theta)?;
        Ok(m >= self.c_lo && m <= self.c_hi)
    }
}

/// Uniform point on the unit sphere in `d` dimensions.
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R, d: usize, out: &mut [f64]) {
    loop {
        let mut norm_sq = 0.0;
        for v in out.iter_mut().take(d) {
            *v = rng.sample(StandardNormal);
            norm_sq += *v * *v;
        }
        if norm_sq > 0.0 {
            let inv = norm_sq.sqrt().recip();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

/// Uniform draw on a shell: `theta = mu + r L u`.
pub fn sample_uniform_shell<R: Rng + ?Sized>(rng: &mut R, shell: &Shell<'_>) -> Vec<f64> {
    let family = shell.family;
    let d = family.dim();
    let mut u = vec![0.0; d];
    sample_unit_sphere(rng, d, &mut u);
    // r^d uniform on [c_lo^{d/2}, c_hi^{d/2}], written relative to c_hi.
    let df = d as f64;
    let rho = ((df / 2.0) * (shell.c_lo / shell.c_hi).ln()).exp();
    let w: f64 = rng.random();
    let mut r = shell.c_hi.sqrt() * (rho + w * (1.0 - rho)).powf(1.0 / df);
    r = r.clamp(shell.c_lo.sqrt(), shell.c_hi.sqrt());
    let mut theta = vec![0.0; d];
    family.scale().mul_vec(&u, &mut theta);
    for (t, m) in theta.iter_mut().zip(family.center()) {
        *t = m + r * *t;
    }
    theta
}

/// Smallest `i` with `c_{i-1} <= m(theta) <= c_i`, or `None` beyond `c_M`.
pub fn shell_index(theta: &[f64], family: &ShellFamily) -> Result<Option<usize>> {
    let m = family.mahalanobis_sq(theta)?;
    let radii = family.radii_sq();
    if m > radii[radii.len() - 1] {
        return Ok(None);
    }
    // First index with c_i >= m; boundary values go to the lower shell.
    let i = radii[1..].partition_point(|&c| c < m);
    Ok(Some(i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use crate::stats::{ks_critical_one_sample, ks_statistic};
    use std::f64::consts::PI;

    fn unit_family(d: usize, radii: &[f64]) -> ShellFamily {
        // Schedule from explicit sqrt radii when they are linear.
        let r: Vec<f64> = radii.iter().map(|c| c.sqrt()).collect();
        let delta = if r.len() > 1 { r[1] - r[0] } else { 0.0 };
        ShellFamily::new(vec![0.0; d], ScaleFactor::identity(d), RadiiSchedule::new(r[0], delta).unwrap(), r.len())
            .unwrap()
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let l = cholesky_factor(&SquareMatrix::identity(3), 0.0).unwrap();
        assert_eq!(l.lower_rows(), ScaleFactor::identity(3).lower_rows());
        let l = cholesky_factor(&SquareMatrix::diagonal(&[4.0, 9.0]), 0.0).unwrap();
        assert_eq!(l.lower_rows(), vec![vec![2.0, 0.0], vec![0.0, 3.0]]);
    }

    #[test]
    fn cholesky_rank_deficient_with_jitter() {
        let sigma = SquareMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let l = cholesky_factor(&sigma, 1e-8).unwrap();
        assert!(l.get(0, 0) > 0.0 && l.get(1, 1) > 0.0);
        let rec = l.reconstruct();
        let expected = SquareMatrix::from_rows(&[
            vec![1.0 + l.jitter(), 1.0],
            vec![1.0, 1.0 + l.jitter()],
        ])
        .unwrap();
        assert!(rec.max_abs_diff(&expected) < 1e-12);
        assert!(l.jitter() >= 1e-8);
    }

    #[test]
    fn cholesky_reconstruction_error() {
        let d = 6;
        let mut rows = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                rows[i][j] = 10.0 * (-((i as f64 - j as f64).powi(2)) / 2.0).exp();
            }
        }
        let sigma = SquareMatrix::from_rows(&rows).unwrap();
        let l = cholesky_factor(&sigma, 0.0).unwrap();
        assert_eq!(l.jitter(), 0.0);
        let rel = l.reconstruct().max_abs_diff(&sigma) / 10.0;
        assert!(rel < 1e-10);
    }

    #[test]
    fn cholesky_fails_at_cap() {
        let sigma = SquareMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -5.0]]).unwrap();
        assert!(matches!(cholesky_factor(&sigma, 0.0), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn mahalanobis_examples() {
        let id2 = ScaleFactor::identity(2);
        assert_eq!(mahalanobis_sq(&[1.0, 2.0], &[1.0, 2.0], &id2).unwrap(), 0.0);
        assert_eq!(mahalanobis_sq(&[3.0, 4.0], &[0.0, 0.0], &id2).unwrap(), 25.0);
        let s = cholesky_factor(&SquareMatrix::diagonal(&[4.0]), 0.0).unwrap();
        assert_eq!(mahalanobis_sq(&[2.0], &[0.0], &s).unwrap(), 1.0);
        assert!(matches!(
            mahalanobis_sq(&[1.0], &[0.0, 0.0], &id2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn shell_volume_examples() {
        let id2 = ScaleFactor::identity(2);
        assert!((shell_log_volume(2, &id2, 0.0, 1.0).unwrap() - PI.ln()).abs() < 1e-12);
        assert!((shell_log_volume(2, &id2, 1.0, 4.0).unwrap() - (3.0 * PI).ln()).abs() < 1e-12);
        let sigma = 1.7_f64;
        let s = cholesky_factor(&SquareMatrix::diagonal(&[sigma * sigma]), 0.0).unwrap();
        let c: f64 = 2.3;
        let expected = (2.0 * sigma * c.sqrt()).ln();
        assert!((shell_log_volume(1, &s, 0.0, c).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(shell_log_volume(2, &id2, 1.0, 1.0), Err(Error::InvalidRadii { .. })));
    }

    #[test]
    fn shell_volume_monotone_in_high_dimension() {
        for d in [50, 100, 200] {
            let s = ScaleFactor::identity(d);
            let mut prev = f64::NEG_INFINITY;
            for i in 1..200 {
                let c_hi = 0.5 * i as f64;
                let v = shell_log_volume(d, &s, 0.25, c_hi + 0.25).unwrap();
                assert!(v.is_finite(), "d={d} c={c_hi}");
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn radii_schedule_values() {
        let r = build_radii(0.05, 9.5e-5, 3);
        assert!((r[2].sqrt() - 0.050095).abs() < 1e-12);
        let r = build_radii(0.05, 0.0, 1);
        assert_eq!(r.len(), 2);
        assert!((r[1] - 0.0025).abs() < 1e-15);
        let r = build_radii(0.05, 3e-5, 3);
        assert!((r[3].sqrt() - 0.05006).abs() < 1e-12);
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn shell_index_edges() {
        let fam = unit_family(2, &[1.0, 4.0, 9.0]);
        assert_eq!(shell_index(&[0.0, 0.0], &fam).unwrap(), Some(1));
        assert_eq!(shell_index(&[1.0, 0.0], &fam).unwrap(), Some(1));
        assert_eq!(shell_index(&[1.5, 0.0], &fam).unwrap(), Some(2));
        assert_eq!(shell_index(&[3.0, 0.0], &fam).unwrap(), Some(3));
        assert_eq!(shell_index(&[3.1, 0.0], &fam).unwrap(), None);
    }

    #[test]
    fn uniform_shell_containment() {
        let sigma = SquareMatrix::from_rows(&[vec![2.0, 0.6, 0.1], vec![0.6, 1.0, 0.2], vec![0.1, 0.2, 0.5]]).unwrap();
        let fam = ShellFamily::new(
            vec![1.0, -2.0, 0.5],
            cholesky_factor(&sigma, 0.0).unwrap(),
            RadiiSchedule::new(0.05, 0.01).unwrap(),
            300,
        )
        .unwrap();
        let mut rng = stream(1, Domain::Diagnostics, 0, 0);
        for n in 0..100_000usize {
            let i = 1 + n % fam.count();
            let shell = fam.shell(i).unwrap();
            let theta = sample_uniform_shell(&mut rng, &shell);
            assert_eq!(shell_index(&theta, &fam).unwrap(), Some(i));
        }
    }

    #[test]
    fn uniform_shell_mean_is_center() {
        let fam = ShellFamily::new(
            vec![3.0, -1.0],
            cholesky_factor(&SquareMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap(), 0.0).unwrap(),
            RadiiSchedule::new(1.0, 1.0).unwrap(),
            2,
        )
        .unwrap();
        let shell = fam.shell(2).unwrap();
        let mut rng = stream(2, Domain::Diagnostics, 0, 0);
        let n = 1_000_000;
        let mut sum = [0.0; 2];
        let mut sum_sq = [0.0; 2];
        for _ in 0..n {
            let t = sample_uniform_shell(&mut rng, &shell);
            for k in 0..2 {
                sum[k] += t[k];
                sum_sq[k] += t[k] * t[k];
            }
        }
        for k in 0..2 {
            let mean = sum[k] / n as f64;
            let var = sum_sq[k] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!((mean - fam.center()[k]).abs() < 4.0 * se, "coord {k}: {mean}");
        }
    }

    #[test]
    fn radius_law_in_unit_disk() {
        let fam = unit_family(2, &[1.0]);
        let shell = fam.shell(1).unwrap();
        let mut rng = stream(3, Domain::Diagnostics, 0, 0);
        let r2: Vec<f64> = (0..100_000)
            .map(|_| {
                let t = sample_uniform_shell(&mut rng, &shell);
                t[0] * t[0] + t[1] * t[1]
            })
            .collect();
        let ks = ks_statistic(&r2, |x| x.clamp(0.0, 1.0));
        assert!(ks < ks_critical_one_sample(r2.len(), 0.01), "KS = {ks}");
    }
}
