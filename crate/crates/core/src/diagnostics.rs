//! Self-contained diagnostics: each check compares a component against an
//! independent oracle at small scale and reports a statistic and threshold.

use std::f64::consts::E;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::diffeo::{f_derivative, f_inverse, f_scalar, h_forward, Diffeomorphism};
use crate::estimation::{estimate_family, estimate_shell, EstimateSettings, RatioMode, DEFAULT_ETA};
use crate::error::Result;
use crate::geometry::{sample_uniform_shell, RadiiSchedule, ScaleFactor, ShellFamily};
use crate::perfect::{iid_sample_multimodal, SamplerSettings, SamplingPlan, ShellSamplerContext};
use crate::rng::{stream, Domain};
use crate::stats::{ks_critical_one_sample, ks_critical_two_sample, ks_statistic, ks_two_sample, mean};
use crate::targets::{GaussianMixture, LogDensity};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn below(name: &'static str, statistic: f64, threshold: f64) -> Self {
        Self { name, statistic, threshold, passed: statistic < threshold }
    }
}

/// log|det J| of `h` by central differences with partial pivoting.
pub fn fd_log_abs_det(theta: &[f64], diff: &Diffeomorphism, step: f64) -> f64 {
    let d = theta.len();
    let mut jac = vec![vec![0.0; d]; d];
    for j in 0..d {
        let (mut p, mut m) = (theta.to_vec(), theta.to_vec());
        p[j] += step;
        m[j] -= step;
        let (hp, hm) = (h_forward(&p, diff), h_forward(&m, diff));
        for i in 0..d {
            jac[i][j] = (hp[i] - hm[i]) / (2.0 * step);
        }
    }
    let mut log_det = 0.0;
    for c in 0..d {
        let piv = (c..d).max_by(|&a, &b| jac[a][c].abs().total_cmp(&jac[b][c].abs())).unwrap_or(c);
        jac.swap(c, piv);
        let p = jac[c][c];
        log_det += p.abs().ln();
        for r in c + 1..d {
            let f = jac[r][c] / p;
            for k in c..d {
                jac[r][k] -= f * jac[c][k];
            }
        }
    }
    log_det
}

/// Hit-or-miss volume of a shell from uniform points in its bounding box;
/// returns the estimate and its standard error.
pub fn hit_or_miss_volume<R: Rng + ?Sized>(family: &ShellFamily, index: usize, n: usize, rng: &mut R) -> Result<(f64, f64)> {
    let shell = family.shell(index)?;
    let d = family.dim();
    let half: Vec<f64> = family.scale().lower_rows().iter().map(|row| shell.c_hi.sqrt() * row.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let box_vol: f64 = half.iter().map(|h| 2.0 * h).product();
    let mut hits = 0usize;
    let mut x = vec![0.0; d];
    for _ in 0..n {
        for i in 0..d {
            x[i] = family.center()[i] + half[i] * (2.0 * rng.random::<f64>() - 1.0);
        }
        if shell.contains(&x)? {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    Ok((box_vol * p, box_vol * (p * (1.0 - p) / n as f64).sqrt()))
}

fn annulus() -> Result<(ShellFamily, GaussianMixture)> {
    let fam = ShellFamily::new(vec![0.0, 0.0], ScaleFactor::identity(2), RadiiSchedule::new(0.8, 0.7)?, 2)?;
    let cov = ScaleFactor::from_lower(2, vec![1.0, 0.0, 0.4, 0.8])?;
    Ok((fam, GaussianMixture::new(vec![1.0], vec![vec![0.5, -0.3]], vec![cov])?))
}

fn transform_checks(seed: u64) -> Vec<CheckResult> {
    let mut knot: f64 = 0.0;
    let mut round: f64 = 0.0;
    let mut rng = stream(seed, Domain::Diagnostics, 10, 0);
    for b in [0.01, 0.3, 2.0] {
        knot = knot.max((f_scalar(1.0 / b, b) - 2.0 * E / 3.0).abs()).max((f_derivative(1.0 / b, b) - b * E).abs());
        for _ in 0..10_000 {
            let x = rng.random::<f64>() * 50.0 / b;
            round = round.max((f_inverse(f_scalar(x, b), b) - x).abs() / x.max(1e-300));
        }
    }
    vec![CheckResult::below("transform_knots", knot, 1e-12), CheckResult::below("transform_roundtrip", round, 1e-10)]
}

fn jacobian_check(seed: u64) -> Result<CheckResult> {
    let mut rng = stream(seed, Domain::Diagnostics, 11, 0);
    let mut worst: f64 = 0.0;
    for d in [1usize, 2, 5] {
        let diff = Diffeomorphism::new(0.3)?;
        for _ in 0..20 {
            let scale = 4.0 * rng.random::<f64>() / 0.3;
            let theta: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt()).collect();
            let exact = diff.log_jacobian(&theta);
            worst = worst.max((exact - fd_log_abs_det(&theta, &diff, 1e-6)).abs() / exact.abs().max(1.0));
        }
    }
    Ok(CheckResult::below("jacobian", worst, 1e-4))
}

fn volume_check(seed: u64) -> Result<CheckResult> {
    let fam = ShellFamily::new(vec![0.3, -1.0], ScaleFactor::from_lower(2, vec![1.0, 0.0, 0.4, 0.8])?, RadiiSchedule::new(0.8, 0.7)?, 3)?;
    let exact = fam.shell(2)?.log_volume()?.exp();
    let (mc, se) = hit_or_miss_volume(&fam, 2, 40_000, &mut stream(seed, Domain::Diagnostics, 12, 0))?;
    Ok(CheckResult::below("shell_volume_z", (mc - exact).abs() / se, 3.0))
}

fn identity_check(seed: u64) -> Result<CheckResult> {
    let (fam, g) = annulus()?;
    let shell = fam.shell(2)?;
    let diff = Diffeomorphism::new(0.01)?;
    let n = 2000;
    let e = estimate_shell(&g, &diff, &shell, n, DEFAULT_ETA, &mut stream(seed, Domain::Diagnostics, 13, 0), RatioMode::PaperRatio)?;
    let mut rng = stream(seed, Domain::Diagnostics, 13, 0);
    let plain = e.log_volume.exp() * (0..n).map(|_| g.log_density(&sample_uniform_shell(&mut rng, &shell)).exp()).sum::<f64>() / n as f64;
    Ok(CheckResult::below("estimator_identity", (e.log_mass_hat.exp() / plain - 1.0).abs(), 1e-8))
}

fn shell_sampler_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let (fam, g) = annulus()?;
    let shell = fam.shell(2)?;
    let diff = Diffeomorphism::new(0.01)?;
    let mut rng = stream(seed, Domain::Diagnostics, 14, 0);
    let est = estimate_shell(&g, &diff, &shell, 5000, DEFAULT_ETA, &mut rng, RatioMode::PaperRatio)?;
    let ctx = ShellSamplerContext::new(&g, &diff, shell, &est, RatioMode::PaperRatio)?;
    let n = 3000;
    let draws = (0..n).map(|_| ctx.perfect_sample(&mut rng)).collect::<Result<Vec<_>>>()?;
    let ts: Vec<f64> = draws.iter().map(|d| d.t as f64).collect();
    let p = ctx.p_hat;
    let se = (1.0 - p).sqrt() / p / (n as f64).sqrt();
    let z = if se > 0.0 { (mean(&ts) - 1.0 / p).abs() / se } else { (mean(&ts) - 1.0).abs() };
    let max = g.log_density(&[0.5, -0.3]);
    let mut oracle = Vec::with_capacity(n);
    while oracle.len() < n {
        let th = sample_uniform_shell(&mut rng, &shell);
        if rng.random::<f64>().ln() < g.log_density(&th) - max {
            oracle.push(th);
        }
    }
    let crit = ks_critical_two_sample(n, n, 0.01);
    let ks = (0..2)
        .map(|c| {
            let a: Vec<f64> = draws.iter().map(|d| d.theta[c]).collect();
            let b: Vec<f64> = oracle.iter().map(|x| x[c]).collect();
            ks_two_sample(&a, &b) / crit
        })
        .fold(0.0, f64::max);
    Ok(vec![CheckResult::below("backward_time_z", z, 3.0), CheckResult::below("single_shell_ks_ratio", ks, 1.0)])
}

fn end_to_end_check(seed: u64) -> Result<CheckResult> {
    let mix = GaussianMixture::separated_pair(2)?;
    let target: Arc<dyn LogDensity> = Arc::new(mix.clone());
    let diff = Diffeomorphism::new(0.01)?;
    let settings = EstimateSettings::new(400, DEFAULT_ETA, RatioMode::PaperRatio, seed);
    let center = vec![(2.0 * 1.0 + 2.0) / 3.0, (2.0 * 2.0 + 4.0) / 3.0];
    let fam = ShellFamily::new(center, mix.factors()[0].clone(), RadiiSchedule::spanning(0.1, 6.0, 60)?, 60)?;
    let table = estimate_family(&mix, &diff, &fam, 0, &settings)?;
    let mut plan = SamplingPlan::new(target, diff, vec![1.0], vec![fam], vec![table], settings)?;
    let n = 2000;
    let (samples, _) = iid_sample_multimodal(&mut plan, n, &SamplerSettings::new(seed))?;
    let crit = ks_critical_one_sample(n, 0.01);
    let worst = (0..2)
        .map(|c| {
            let xs: Vec<f64> = samples.iter().map(|s| s.theta[c]).collect();
            ks_statistic(&xs, |x| mix.marginal_cdf(c, x)) / crit
        })
        .fold(0.0, f64::max);
    Ok(CheckResult::below("end_to_end_ks_ratio", worst, 1.0))
}

/// Runs every check; statistics below their thresholds pass.
pub fn run_diagnostics(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = transform_checks(seed);
    out.push(jacobian_check(seed)?);
    out.push(volume_check(seed)?);
    out.push(identity_check(seed)?);
    out.extend(shell_sampler_checks(seed)?);
    out.push(end_to_end_check(seed)?);
    Ok(out)
}
