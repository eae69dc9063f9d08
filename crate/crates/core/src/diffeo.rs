//! Isotropic flattening map `h(theta) = f(|theta|) theta / |theta|`.
//!
//! `f(x) = e^{bx} - e/3` for `x > 1/b` and `x^3 b^3 e/6 + x b e/2` below the
//! knot; the two branches meet with matching value `2e/3` and slope `be`.
//! Sampling happens in `gamma = h(theta)`; Jacobians are evaluated at the
//! pre-image `theta` so the change of variables is exact.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::targets::LogDensity;

const KNOT_VALUE: f64 = 2.0 * E / 3.0;
const INVERSE_REL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diffeomorphism {
    b: f64,
}

impl Diffeomorphism {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("diffeomorphism parameter b = {b} must be positive")));
        }
        Ok(Self { b })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn f(&self, x: f64) -> f64 {
        f_scalar(x, self.b)
    }

    pub fn f_inverse(&self, y: f64) -> f64 {
        f_inverse(y, self.b)
    }

    pub fn forward(&self, theta: &[f64]) -> Vec<f64> {
        h_forward(theta, self)
    }

    pub fn inverse(&self, gamma: &[f64]) -> Vec<f64> {
        h_inverse(gamma, self)
    }

    pub fn log_jacobian(&self, theta: &[f64]) -> f64 {
        log_jacobian_at_theta(theta, self)
    }
}

pub fn f_scalar(x: f64, b: f64) -> f64 {
    if x > 1.0 / b {
        (b * x).exp() - E / 3.0
    } else {
        let u = b * x;
        u * u * u * E / 6.0 + u * E / 2.0
    }
}

/// `f'(x)`.
pub fn f_derivative(x: f64, b: f64) -> f64 {
    if x > 1.0 / b {
        b * (b * x).exp()
    } else {
        let u = b * x;
        b * E / 2.0 * (1.0 + u * u)
    }
}

/// Inverse of [`f_scalar`]: logarithm above the knot, safeguarded Newton on
/// the cubic below it.
pub fn f_inverse(y: f64, b: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y > KNOT_VALUE {
        return (y + E / 3.0).ln() / b;
    }
    // Solve e/6 u^3 + e/2 u = y for u = b x in [0, 1].
    let g = |u: f64| E / 6.0 * u * u * u + E / 2.0 * u - y;
    let dg = |u: f64| E / 2.0 * (u * u + 1.0);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    // The linearization overshoots the root of this convex increasing cubic.
    let mut u = (2.0 * y / E).min(1.0);
    for _ in 0..200 {
        let gu = g(u);
        if gu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = u - gu / dg(u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - u).abs() <= INVERSE_REL_TOL * next.abs() || hi - lo <= f64::EPSILON * hi;
        u = next;
        if done {
            break;
        }
    }
    u / b
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn h_forward(theta: &[f64], diff: &Diffeomorphism) -> Vec<f64> {
    let r = norm(theta);
    if r == 0.0 {
        return vec![0.0; theta.len()];
    }
    let s = diff.f(r) / r;
    theta.iter().map(|t| t * s).collect()
}

pub fn h_inverse(gamma: &[f64], diff: &Diffeomorphism) -> Vec<f64> {
    let r = norm(gamma);
    if r == 0.0 {
        return vec![0.0; gamma.len()];
    }
    let s = diff.f_inverse(r) / r;
    gamma.iter().map(|g| g * s).collect()
}

/// `log f'(r) + (d - 1)(log f(r) - log r)` with `r = |theta|`.
pub fn log_jacobian_at_theta(theta: &[f64], diff: &Diffeomorphism) -> f64 {
    let b = diff.b();
    let d = theta.len() as f64;
    let r = norm(theta);
    let log_knot_slope = (b * E / 2.0).ln();
    if r < 1e-12 {
        return d * log_knot_slope;
    }
    let u = b * r;
    let (log_fprime, log_f_over_r) = if r > 1.0 / b {
        // log f = u + log(1 - (e/3) e^{-u}) stays finite for large u.
        let log_f = u + (-(E / 3.0) * (-u).exp()).ln_1p();
        (b.ln() + u, log_f - r.ln())
    } else {
        (log_knot_slope + (u * u).ln_1p(), log_knot_slope + (u * u / 3.0).ln_1p())
    };
    log_fprime + (d - 1.0) * log_f_over_r
}

/// Log density of `gamma = h(theta)` when `theta` has unnormalized density
/// `target`: `log pi(h^{-1}(gamma)) - log|det grad h|` at the pre-image.
pub fn log_pushforward<T: LogDensity + ?Sized>(target: &T, gamma: &[f64], diff: &Diffeomorphism) -> Result<f64> {
    let theta = h_inverse(gamma, diff);
    log_pushforward_at_preimage(target, &theta, diff)
}

/// [`log_pushforward`] when the pre-image `theta` is already known.
pub fn log_pushforward_at_preimage<T: LogDensity + ?Sized>(
    target: &T,
    theta: &[f64],
    diff: &Diffeomorphism,
) -> Result<f64> {
    let lp = target.log_density(theta);
    if lp.is_nan() {
        return Err(Error::TargetNan);
    }
    Ok(lp - log_jacobian_at_theta(theta, diff))
}
