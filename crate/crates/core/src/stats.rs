//! Goodness-of-fit statistics and kernel density grids used by the
//! diagnostics suite and the output writers.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Asymptotic Kolmogorov constant `c(alpha) = sqrt(-ln(alpha/2)/2)`.
pub fn ks_constant(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

pub fn ks_critical_one_sample(n: usize, alpha: f64) -> f64 {
    ks_constant(alpha) / (n as f64).sqrt()
}

pub fn ks_critical_two_sample(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ks_constant(alpha) * ((n + m) / (n * m)).sqrt()
}

/// One-sample Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Pearson chi-square test result.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square goodness of fit; adjacent cells are pooled until each
/// expected count reaches 5.
pub fn chi_square_gof(observed: &[u64], expected_prob: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected_prob.len() || observed.is_empty() {
        return Err(Error::DimensionMismatch { expected: expected_prob.len(), got: observed.len() });
    }
    let n: u64 = observed.iter().sum();
    let n = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (o, p) in observed.iter().zip(expected_prob) {
        o_acc += *o as f64;
        e_acc += p * n;
        if e_acc >= 5.0 {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => cells.push((o_acc, e_acc)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::InvalidParameter("too few cells for a chi-square test".into()));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(ChiSquareTest { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

/// Total variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Trapezoid rule on an arbitrary grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])).sum()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule: `0.9 min(sd, IQR/1.34) n^{-1/5}`.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let sd = variance(xs).sqrt();
    let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (xs.len() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate on an equispaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub bandwidth: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

pub const DENSITY_GRID_POINTS: usize = 256;
pub const DENSITY_MIN_SAMPLES: usize = 100;

pub fn kde_grid(xs: &[f64], points: usize) -> Result<DensityGrid> {
    if xs.len() < DENSITY_MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: DENSITY_MIN_SAMPLES, got: xs.len() });
    }
    let h = silverman_bandwidth(xs);
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter("zero bandwidth: column is constant".into()));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (xs.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let x: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let density = x
        .iter()
        .map(|g| {
            norm * xs
                .iter()
                .map(|s| {
                    let z = (g - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(DensityGrid { bandwidth: h, x, density })
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ks_constant_at_one_percent() {
        assert!((ks_constant(0.01) - 1.6276).abs() < 1e-4);
    }

    #[test]
    fn ks_detects_shift() {
        let mut rng = stream(1, Domain::Diagnostics, 0, 0);
        let a: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        let crit = ks_critical_two_sample(5000, 5000, 0.01);
        assert!(ks_two_sample(&a, &b) < crit);
        assert!(ks_two_sample(&a, &c) > crit);
        assert!(ks_statistic(&a, |x| normal_cdf(x, 0.0, 1.0)) < ks_critical_one_sample(5000, 0.01));
    }

    #[test]
    fn kde_standard_normal() {
        let mut rng = stream(2, Domain::Diagnostics, 0, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let g = kde_grid(&xs, DENSITY_GRID_POINTS).unwrap();
        let peak = g.x[g.density.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
        assert!(peak.abs() < 0.1, "peak at {peak}");
        assert!((trapezoid(&g.x, &g.density) - 1.0).abs() < 0.02);
        assert_eq!(g.x.len(), 256);
    }

    #[test]
    fn kde_rejects_constant_and_short_columns() {
        assert!(kde_grid(&[1.0; 500], 256).is_err());
        assert!(matches!(kde_grid(&[1.0, 2.0], 256), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn chi_square_pools_small_cells() {
        let t = chi_square_gof(&[50, 50, 0, 0], &[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(t.dof, 1);
        assert!(t.statistic.abs() < 1e-12);
    }
}
