//! Unnormalized log densities: the evaluator trait, fixed-dimensional
//! Gaussian mixtures, the normal-mixture posterior with unknown number of
//! components, and a conjugate regression model with closed-form evidence.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::{cholesky_factor, ScaleFactor, SquareMatrix};
use crate::numeric::{log_sum_exp, nan_to_neg_inf};
use crate::rng::{stream, Domain};
use crate::stats::normal_cdf;

const LN_2PI: f64 = 1.8378770664093453;

/// Unnormalized log density on `R^d`. May return `-inf`, never NaN.
pub trait LogDensity: Send + Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, theta: &[f64]) -> f64;

    fn coordinate_labels(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("theta{i}")).collect()
    }
}

impl<T: LogDensity + ?Sized> LogDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, theta: &[f64]) -> f64 {
        (**self).log_density(theta)
    }
    fn coordinate_labels(&self) -> Vec<String> {
        (**self).coordinate_labels()
    }
}

impl<T: LogDensity + ?Sized> LogDensity for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, theta: &[f64]) -> f64 {
        (**self).log_density(theta)
    }
    fn coordinate_labels(&self) -> Vec<String> {
        (**self).coordinate_labels()
    }
}

impl<T: LogDensity + ?Sized> LogDensity for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, theta: &[f64]) -> f64 {
        (**self).log_density(theta)
    }
    fn coordinate_labels(&self) -> Vec<String> {
        (**self).coordinate_labels()
    }
}

/// Log density backed by a closure.
pub struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F> FnDensity<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> LogDensity for FnDensity<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, theta: &[f64]) -> f64 {
        (self.f)(theta)
    }
}

/// `log N(x; m, L L^T)`.
pub fn gaussian_log_pdf(x: &[f64], mean: &[f64], factor: &ScaleFactor) -> f64 {
    let d = factor.dim();
    let mut z: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    factor.solve_in_place(&mut z);
    let q: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * q - factor.log_det() - 0.5 * d as f64 * LN_2PI
}

/// Finite mixture of multivariate normals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    factors: Vec<ScaleFactor>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, factors: Vec<ScaleFactor>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != factors.len() {
            return Err(Error::InvalidParameter("mixture needs matching weights, means and factors".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("mixture weights must form a simplex (sum {total})")));
        }
        let d = means[0].len();
        for (m, f) in means.iter().zip(&factors) {
            if m.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: m.len() });
            }
            if f.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: f.dim() });
            }
        }
        Ok(Self { weights, means, factors })
    }

    /// Two components with means `nu` and `2 nu`, `nu_i = i`, common scale
    /// `S_ij = 10 exp(-(i-j)^2/2)`, weights 2/3 and 1/3.
    pub fn separated_pair(dim: usize) -> Result<Self> {
        let nu: Vec<f64> = (1..=dim).map(|i| i as f64).collect();
        let two_nu: Vec<f64> = nu.iter().map(|v| 2.0 * v).collect();
        let factor = cholesky_factor(&banded_scale(dim), 0.0)?;
        Self::new(vec![2.0 / 3.0, 1.0 / 3.0], vec![nu, two_nu], vec![factor.clone(), factor])
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn factors(&self) -> &[ScaleFactor] {
        &self.factors
    }

    /// `log w_c + log N(theta; m_c, Sigma_c)` for every component.
    pub fn component_log_terms(&self, theta: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.factors)
            .map(|((w, m), f)| w.ln() + gaussian_log_pdf(theta, m, f))
            .collect()
    }

    /// Posterior component probabilities at `theta`.
    pub fn responsibilities(&self, theta: &[f64]) -> Vec<f64> {
        let terms = self.component_log_terms(theta);
        let total = log_sum_exp(&terms);
        terms.iter().map(|t| (t - total).exp()).collect()
    }

    /// Marginal CDF of one coordinate.
    pub fn marginal_cdf(&self, coord: usize, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.factors)
            .map(|((w, m), f)| {
                let var: f64 = (0..=coord).map(|k| f.get(coord, k).powi(2)).sum();
                w * normal_cdf(x, m[coord], var.sqrt())
            })
            .sum()
    }

    /// Exact draw, used by the oracles.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut c = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                c = i;
                break;
            }
        }
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = vec![0.0; d];
        self.factors[c].mul_vec(&z, &mut x);
        x.iter_mut().zip(&self.means[c]).for_each(|(a, m)| *a += m);
        x
    }
}

/// `S_ij = 10 exp(-(i-j)^2/2)`.
pub fn banded_scale(dim: usize) -> SquareMatrix {
    let mut data = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let k = i as f64 - j as f64;
            data[i * dim + j] = 10.0 * (-k * k / 2.0).exp();
        }
    }
    SquareMatrix::from_row_major(dim, data).expect("square by construction")
}

/// `log sum_c w_c N(theta; m_c, Sigma_c)`.
pub fn gaussian_mixture_log_unnorm(spec: &GaussianMixture, theta: &[f64]) -> Result<f64> {
    if theta.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: theta.len() });
    }
    Ok(log_sum_exp(&spec.component_log_terms(theta)))
}

impl LogDensity for GaussianMixture {
    fn dim(&self) -> usize {
        self.means[0].len()
    }
    fn log_density(&self, theta: &[f64]) -> f64 {
        nan_to_neg_inf(log_sum_exp(&self.component_log_terms(theta)))
    }
}

/// Max-subtracted softmax.
pub fn softmax_weights(omega: &[f64]) -> Vec<f64> {
    let max = omega.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = omega.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// Parameters of a `k`-component normal mixture: means, log precisions and
/// weight logits. Flattened in that block order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModelParams {
    pub nu: Vec<f64>,
    pub tau_star: Vec<f64>,
    pub omega: Vec<f64>,
}

impl MixtureModelParams {
    pub fn new(nu: Vec<f64>, tau_star: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        if nu.is_empty() || nu.len() != tau_star.len() || nu.len() != omega.len() {
            return Err(Error::InvalidParameter("nu, tau*, omega must share a positive length".into()));
        }
        Ok(Self { nu, tau_star, omega })
    }

    pub fn k(&self) -> usize {
        self.nu.len()
    }

    /// Unpacks `(nu_1..nu_k, tau*_1..tau*_k, omega_1..omega_k)`.
    pub fn from_theta(theta: &[f64]) -> Result<Self> {
        if theta.is_empty() || theta.len() % 3 != 0 {
            return Err(Error::InvalidParameter(format!("length {} is not 3k", theta.len())));
        }
        let k = theta.len() / 3;
        Self::new(theta[..k].to_vec(), theta[k..2 * k].to_vec(), theta[2 * k..].to_vec())
    }

    pub fn to_theta(&self) -> Vec<f64> {
        let mut v = self.nu.clone();
        v.extend_from_slice(&self.tau_star);
        v.extend_from_slice(&self.omega);
        v
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax_weights(&self.omega)
    }
}

/// Coordinate labels in block order.
pub fn mixture_labels(k: usize) -> Vec<String> {
    let mut v: Vec<String> = (1..=k).map(|j| format!("nu{j}")).collect();
    v.extend((1..=k).map(|j| format!("tau_star{j}")));
    v.extend((1..=k).map(|j| format!("omega{j}")));
    v
}

/// Hyperparameters of the mixture prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePriorHyper {
    /// Gamma shape is `s/2`.
    pub s: f64,
    /// Gamma rate is `S/2`.
    pub big_s: f64,
    pub nu0: f64,
    pub psi: f64,
    pub mu_omega: f64,
    /// Variance of the weight logits.
    pub sigma2_omega: f64,
    pub k_max: usize,
    /// Prior probabilities of `k = 1..=k_max`; uniform when empty.
    #[serde(default)]
    pub k_prior: Vec<f64>,
}

impl Default for MixturePriorHyper {
    fn default() -> Self {
        Self {
            s: 4.0,
            big_s: 2.0 * (0.2 / 0.573),
            nu0: 5.02,
            psi: 33.3,
            mu_omega: 0.0,
            sigma2_omega: 0.5,
            k_max: 30,
            k_prior: Vec::new(),
        }
    }
}

impl MixturePriorHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.big_s > 0.0 && self.psi > 0.0 && self.sigma2_omega > 0.0) || self.k_max == 0 {
            return Err(Error::InvalidParameter("s, S, psi, sigma2_omega and k_max must be positive".into()));
        }
        if !self.k_prior.is_empty() {
            let total: f64 = self.k_prior.iter().sum();
            if self.k_prior.len() != self.k_max || (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter("k_prior must be a simplex over 1..=k_max".into()));
            }
        }
        Ok(())
    }

    pub fn log_prior_k(&self, k: usize) -> f64 {
        if k == 0 || k > self.k_max {
            return f64::NEG_INFINITY;
        }
        if self.k_prior.is_empty() {
            -(self.k_max as f64).ln()
        } else {
            self.k_prior[k - 1].ln()
        }
    }
}

/// `sum_i log sum_j pi_j N(y_i; nu_j, 1/tau_j)`, `tau_j = exp(tau*_j)`.
pub fn mixture_log_likelihood(params: &MixtureModelParams, y: &[f64]) -> f64 {
    let k = params.k();
    let log_w_total = log_sum_exp(&params.omega);
    let consts: Vec<f64> = (0..k)
        .map(|j| params.omega[j] - log_w_total + 0.5 * params.tau_star[j] - 0.5 * LN_2PI)
        .collect();
    let taus: Vec<f64> = params.tau_star.iter().map(|t| t.exp()).collect();
    let mut terms = vec![0.0; k];
    let mut total = 0.0;
    for &yi in y {
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            let r = yi - params.nu[j];
            let t = nan_to_neg_inf(consts[j] - 0.5 * taus[j] * r * r);
            terms[j] = t;
            max = max.max(t);
        }
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let s: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        total += max + s.ln();
    }
    nan_to_neg_inf(total)
}

/// Normalized log prior of `(nu, tau*, omega)` given `k`.
pub fn mixture_log_prior(params: &MixtureModelParams, hyper: &MixturePriorHyper) -> f64 {
    let a = hyper.s / 2.0;
    let rate = hyper.big_s / 2.0;
    let tau_const = a * rate.ln() - ln_gamma(a);
    let nu_const = -0.5 * (LN_2PI + hyper.psi.ln());
    let om_const = -0.5 * (LN_2PI + hyper.sigma2_omega.ln());
    let mut total = 0.0;
    for j in 0..params.k() {
        let ts = params.tau_star[j];
        let tau = ts.exp();
        // Gamma density of tau times the Jacobian e^{tau*}.
        total += tau_const + a * ts - rate * tau;
        let dn = params.nu[j] - hyper.nu0;
        total += nu_const + 0.5 * ts - 0.5 * tau * dn * dn / hyper.psi;
        let dw = params.omega[j] - hyper.mu_omega;
        total += om_const - 0.5 * dw * dw / hyper.sigma2_omega;
    }
    nan_to_neg_inf(total)
}

/// `pi(theta_k | k, y)` up to the evidence: likelihood times normalized prior.
#[derive(Debug, Clone)]
pub struct NormalMixturePosterior {
    k: usize,
    hyper: MixturePriorHyper,
    data: Arc<Vec<f64>>,
}

impl NormalMixturePosterior {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn hyper(&self) -> &MixturePriorHyper {
        &self.hyper
    }

    /// Data-driven starting point: means at evenly spaced quantiles, a
    /// common precision matched to the within-group spread, equal weights.
    pub fn initial_point(&self) -> Vec<f64> {
        let k = self.k;
        if self.data.is_empty() {
            let mut v = vec![self.hyper.nu0; k];
            v.extend(vec![(self.hyper.s / self.hyper.big_s).ln(); k]);
            v.extend(vec![self.hyper.mu_omega; k]);
            return v;
        }
        let mut sorted = self.data.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let nu: Vec<f64> = (0..k)
            .map(|j| sorted[(((j as f64 + 0.5) / k as f64) * n as f64) as usize % n])
            .collect();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = sorted.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let within = (var / (k * k) as f64).max(1e-4);
        let mut v = nu;
        v.extend(vec![-within.ln(); k]);
        v.extend(vec![0.0; k]);
        v
    }
}

impl LogDensity for NormalMixturePosterior {
    fn dim(&self) -> usize {
        3 * self.k
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let k = self.k;
        let params = MixtureModelParams {
            nu: theta[..k].to_vec(),
            tau_star: theta[k..2 * k].to_vec(),
            omega: theta[2 * k..3 * k].to_vec(),
        };
        let prior = mixture_log_prior(&params, &self.hyper);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        nan_to_neg_inf(prior + mixture_log_likelihood(&params, &self.data))
    }

    fn coordinate_labels(&self) -> Vec<String> {
        mixture_labels(self.k)
    }
}

pub fn conditional_posterior_target(k: usize, hyper: &MixturePriorHyper, y: Arc<Vec<f64>>) -> Result<NormalMixturePosterior> {
    hyper.validate()?;
    if k == 0 || k > hyper.k_max {
        return Err(Error::InvalidParameter(format!("k = {k} outside 1..={}", hyper.k_max)));
    }
    Ok(NormalMixturePosterior { k, hyper: hyper.clone(), data: y })
}

/// Mixture density at a single point.
pub fn predictive_density(params: &MixtureModelParams, y_new: f64) -> f64 {
    mixture_log_likelihood(params, &[y_new]).exp()
}

/// Reads a single-column CSV of observations. A non-numeric first line is
/// taken as a header; blank lines are skipped.
pub fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_observations(&text, &path.display().to_string())
}

pub fn parse_observations(text: &str, origin: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(_) => {
                return Err(Error::Data {
                    path: origin.to_string(),
                    line: i + 1,
                    message: format!("non-finite value {field:?}"),
                })
            }
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(_) => {
                return Err(Error::Data {
                    path: origin.to_string(),
                    line: i + 1,
                    message: format!("not a number: {field:?}"),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Data { path: origin.to_string(), line: 0, message: "no observations".into() });
    }
    Ok(out)
}

/// Synthetic stand-in for an acidity-style dataset: `n` draws in `(2, 8)`
/// from `0.6 N(4.3, 0.4^2) + 0.4 N(6.3, 0.45^2)`.
pub fn synthetic_acidity(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Domain::Synthetic, 0, 0);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let z: f64 = rng.sample(StandardNormal);
        let y = if rng.random::<f64>() < 0.6 { 4.3 + 0.4 * z } else { 6.3 + 0.45 * z };
        if y > 2.0 && y < 8.0 {
            out.push(y);
        }
    }
    out
}

/// Linear-Gaussian regression `y = X beta + e`, `e ~ N(0, noise_var I)`,
/// `beta ~ N(0, prior_var I)`; the log density is likelihood times the
/// normalized prior, so its integral is the model evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BayesLinearRegression {
    design: Vec<Vec<f64>>,
    y: Vec<f64>,
    noise_var: f64,
    prior_var: f64,
}

impl BayesLinearRegression {
    pub fn new(design: Vec<Vec<f64>>, y: Vec<f64>, noise_var: f64, prior_var: f64) -> Result<Self> {
        if design.len() != y.len() || design.is_empty() {
            return Err(Error::DimensionMismatch { expected: y.len(), got: design.len() });
        }
        let p = design[0].len();
        if p == 0 || design.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidParameter("design rows must share a positive width".into()));
        }
        if !(noise_var > 0.0 && prior_var > 0.0) {
            return Err(Error::InvalidParameter("variances must be positive".into()));
        }
        Ok(Self { design, y, noise_var, prior_var })
    }

    pub fn design(&self) -> &[Vec<f64>] {
        &self.design
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn prior_var(&self) -> f64 {
        self.prior_var
    }
}

impl LogDensity for BayesLinearRegression {
    fn dim(&self) -> usize {
        self.design[0].len()
    }

    fn log_density(&self, beta: &[f64]) -> f64 {
        let n = self.y.len() as f64;
        let p = beta.len() as f64;
        let rss: f64 = self
            .design
            .iter()
            .zip(&self.y)
            .map(|(row, yi)| {
                let fit: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
                (yi - fit).powi(2)
            })
            .sum();
        let b2: f64 = beta.iter().map(|b| b * b).sum();
        let lik = -0.5 * n * (LN_2PI + self.noise_var.ln()) - 0.5 * rss / self.noise_var;
        let prior = -0.5 * p * (LN_2PI + self.prior_var.ln()) - 0.5 * b2 / self.prior_var;
        nan_to_neg_inf(lik + prior)
    }
}
