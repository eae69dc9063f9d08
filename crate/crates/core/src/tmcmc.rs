//! Additive transformation-based MCMC pilot runs: one scalar innovation
//! shared by all coordinates with independent random signs.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SquareMatrix;
use crate::rng::{stream, Domain};
use crate::targets::LogDensity;

pub const INIT_ATTEMPTS: usize = 1000;

/// Current position of a chain together with its log density.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub log_density: f64,
    proposal: Vec<f64>,
}

impl ChainState {
    pub fn new<T: LogDensity + ?Sized>(target: &T, theta: Vec<f64>) -> Self {
        let log_density = target.log_density(&theta);
        let proposal = theta.clone();
        Self { theta, log_density, proposal }
    }
}

/// One additive move: `theta'_i = theta_i + b_i a_i |z|`.
pub fn additive_tmcmc_step<T, R>(target: &T, state: &mut ChainState, move_scales: &[f64], rng: &mut R) -> bool
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let z: f64 = rng.sample(StandardNormal);
    let eps = z.abs();
    for ((p, t), a) in state.proposal.iter_mut().zip(&state.theta).zip(move_scales) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        *p = t + sign * a * eps;
    }
    let log_new = target.log_density(&state.proposal);
    let log_ratio = log_new - state.log_density;
    let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    if accept {
        std::mem::swap(&mut state.theta, &mut state.proposal);
        state.log_density = log_new;
    }
    accept
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub move_scales: Vec<f64>,
    pub seed: u64,
    /// Distinguishes concurrent chains sharing a seed.
    #[serde(default)]
    pub chain_id: u64,
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    /// Box `[lo, hi]^d` for random initial points.
    #[serde(default = "default_init_box")]
    pub init_box: (f64, f64),
}

fn default_init_box() -> (f64, f64) {
    (-1.0, 1.0)
}

impl ChainConfig {
    pub fn new(n_iter: usize, burn_in: usize, thin: usize, move_scales: Vec<f64>, seed: u64) -> Self {
        Self { n_iter, burn_in, thin, move_scales, seed, chain_id: 0, init: None, init_box: default_init_box() }
    }

    pub fn kept(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.burn_in >= self.n_iter || self.thin == 0 {
            return Err(Error::InvalidParameter(format!(
                "chain needs burn_in < n_iter and thin >= 1 (got {}, {}, {})",
                self.burn_in, self.n_iter, self.thin
            )));
        }
        if self.move_scales.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.move_scales.len() });
        }
        if self.move_scales.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter("move scales must be positive and finite".into()));
        }
        if let Some(init) = &self.init {
            if init.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: init.len() });
            }
        }
        if !(self.init_box.0 < self.init_box.1) {
            return Err(Error::InvalidParameter("initializer box needs lo < hi".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub accepted: u64,
    pub total: u64,
}

fn initial_state<T, R>(target: &T, config: &ChainConfig, rng: &mut R) -> Result<ChainState>
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let d = target.dim();
    if let Some(init) = &config.init {
        let state = ChainState::new(target, init.clone());
        if state.log_density.is_finite() {
            return Ok(state);
        }
    }
    let (lo, hi) = config.init_box;
    for _ in 0..INIT_ATTEMPTS {
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(lo..hi)).collect();
        let state = ChainState::new(target, theta);
        if state.log_density.is_finite() {
            return Ok(state);
        }
    }
    Err(Error::TargetUnevaluable { attempts: INIT_ATTEMPTS })
}

/// Burn-in, then keeps every `thin`-th state.
pub fn run_chain<T: LogDensity + ?Sized>(target: &T, config: &ChainConfig) -> Result<ChainOutput> {
    let d = target.dim();
    config.validate(d)?;
    let mut rng = stream(config.seed, Domain::Chain, config.chain_id, 0);
    let mut state = initial_state(target, config, &mut rng)?;
    let mut samples = Vec::with_capacity(config.kept());
    let mut accepted = 0u64;
    let kept = config.kept();
    let total = config.burn_in + kept * config.thin;
    for it in 1..=total {
        if additive_tmcmc_step(target, &mut state, &config.move_scales, &mut rng) {
            accepted += 1;
        }
        if it > config.burn_in && (it - config.burn_in) % config.thin == 0 {
            samples.push(state.theta.clone());
        }
    }
    Ok(ChainOutput {
        samples,
        acceptance_rate: if total == 0 { 0.0 } else { accepted as f64 / total as f64 },
        accepted,
        total: total as u64,
    })
}

/// Short pilot runs that set `a_i = 2.4/sqrt(d) * sd_i`; the returned
/// scales are then held fixed for the kept chain.
pub fn adapt_move_scales<T: LogDensity + ?Sized>(
    target: &T,
    init: Option<Vec<f64>>,
    iterations: usize,
    rounds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = target.dim();
    let factor = 2.4 / (d as f64).sqrt();
    let mut scales = vec![factor; d];
    let mut start = init;
    for round in 0..rounds {
        let mut cfg = ChainConfig::new(iterations.max(2), 0, 1, scales.clone(), seed);
        cfg.chain_id = u64::MAX - round as u64;
        cfg.init = start.clone();
        let out = run_chain(target, &cfg)?;
        let (mean, cov) = match empirical_moments(&out.samples) {
            Ok(m) => m,
            Err(_) => break,
        };
        for (i, a) in scales.iter_mut().enumerate() {
            let sd = cov.get(i, i).sqrt();
            if sd > 0.0 && sd.is_finite() {
                *a = factor * sd;
            } else {
                *a *= 0.1;
            }
        }
        start = out.samples.last().cloned().or(Some(mean));
    }
    Ok(scales)
}

/// Sample mean and unbiased, symmetrized covariance.
pub fn empirical_moments(samples: &[Vec<f64>]) -> Result<(Vec<f64>, SquareMatrix)> {
    let d = samples.first().map(|s| s.len()).unwrap_or(0);
    if samples.len() < d + 1 || samples.len() < 2 {
        return Err(Error::TooFewSamples { needed: (d + 1).max(2), got: samples.len() });
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: s.len() });
        }
        mean.iter_mut().zip(s).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for s in samples {
        centered.iter_mut().zip(s.iter().zip(&mean)).for_each(|(c, (x, m))| *c = x - m);
        for i in 0..d {
            for j in 0..=i {
                cov[i * d + j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[i * d + j] / (n - 1.0);
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok((mean, SquareMatrix::from_row_major(d, cov)?))
}

/// One row per sample, header from `labels`.
pub fn write_chain_csv(path: &Path, labels: &[String], samples: &[Vec<f64>]) -> Result<()> {
    write_chain_csv_with_comments(path, &[], labels, samples)
}

/// Like [`write_chain_csv`] with leading `# ` comment lines.
pub fn write_chain_csv_with_comments(path: &Path, comments: &[String], labels: &[String], samples: &[Vec<f64>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{}", labels.join(","))?;
    for s in samples {
        let row: Vec<String> = s.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_chain_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let labels: Vec<String> = match lines.next() {
        Some((_, l)) => l.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Ok((Vec::new(), Vec::new())),
    };
    let mut samples = Vec::new();
    for (i, l) in lines {
        let row: std::result::Result<Vec<f64>, _> = l.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::Data { path: path.display().to_string(), line: i + 1, message: e.to_string() })?;
        if row.len() != labels.len() {
            return Err(Error::Data {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("expected {} fields, found {}", labels.len(), row.len()),
            });
        }
        samples.push(row);
    }
    Ok((labels, samples))
}
