//! Per-shell Monte Carlo estimates of mass and minorization probability,
//! shell-selection tables, and shell-summed marginal likelihoods.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffeo::{log_jacobian_at_theta, Diffeomorphism};
use crate::error::{Error, Result};
use crate::geometry::{sample_uniform_shell, Shell, ShellFamily};
use crate::numeric::{ext_f64, ext_f64_vec, normalize_log_weights, LogSumExp};
use crate::rng::{stream, Domain};
use crate::targets::LogDensity;

pub const DEFAULT_ETA: f64 = 1e-10;
pub const DEFAULT_MC_SIZE: usize = 5000;

/// Consecutive negligible shells that end an evidence sum.
pub const TAIL_RUN: usize = 20;
/// Relative contribution below which a shell is negligible.
pub const TAIL_REL: f64 = 1e-8;

const EVIDENCE_BATCH: usize = 64;

/// Which log ratio feeds the minorization extremes and the residual kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// `log pi_gamma - log q_i`, the importance weight of the shell proposal.
    #[default]
    PaperRatio,
    /// `log pi_gamma` alone.
    RawPushforward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellEstimate {
    pub index: usize,
    pub c_lo: f64,
    pub c_hi: f64,
    pub log_volume: f64,
    #[serde(with = "ext_f64")]
    pub log_mass_hat: f64,
    #[serde(with = "ext_f64")]
    pub log_s_hat: f64,
    #[serde(rename = "log_S_hat", with = "ext_f64")]
    pub log_big_s_hat: f64,
    pub p_hat: f64,
    pub mc_size: usize,
    pub eta: f64,
}

impl ShellEstimate {
    fn empty(shell: &Shell<'_>, log_volume: f64, n: usize, eta: f64) -> Self {
        Self {
            index: shell.index,
            c_lo: shell.c_lo,
            c_hi: shell.c_hi,
            log_volume,
            log_mass_hat: f64::NEG_INFINITY,
            log_s_hat: f64::NEG_INFINITY,
            log_big_s_hat: f64::NEG_INFINITY,
            p_hat: 0.0,
            mc_size: n,
            eta,
        }
    }

    pub fn has_mass(&self) -> bool {
        self.log_mass_hat > f64::NEG_INFINITY
    }
}

/// Log ratio for one uniform shell point, given `log pi(theta)`, the log
/// Jacobian at `theta` and the shell log volume.
#[inline]
pub fn log_ratio(mode: RatioMode, log_target: f64, log_jac: f64, log_volume: f64) -> f64 {
    let log_pushforward = log_target - log_jac;
    match mode {
        // log q_i(gamma) = -log L(A) - log|det grad h(theta)|.
        RatioMode::PaperRatio => log_pushforward + log_jac + log_volume,
        RatioMode::RawPushforward => log_pushforward,
    }
}

/// Minorization probability from ratio extremes.
pub fn minorization_probability(log_s: f64, log_big_s: f64, eta: f64) -> f64 {
    if !(log_s > f64::NEG_INFINITY) || !log_big_s.is_finite() {
        return 0.0;
    }
    ((log_s - log_big_s).exp() - eta).max(0.0)
}

/// `N` uniform points on the shell: mass estimate `L(A) mean(pi_gamma |det|)`
/// and the extremes of the chosen log ratio.
pub fn estimate_shell<T, R>(
    target: &T,
    diff: &Diffeomorphism,
    shell: &Shell<'_>,
    n: usize,
    eta: f64,
    rng: &mut R,
    mode: RatioMode,
) -> Result<ShellEstimate>
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    if n < 2 {
        return Err(Error::InvalidParameter(format!("Monte Carlo size {n} must be at least 2")));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta {eta} outside [0, 1)")));
    }
    let log_volume = shell.log_volume()?;
    let mut acc = LogSumExp::default();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..n {
        let theta = sample_uniform_shell(rng, shell);
        let lp = target.log_density(&theta);
        if lp.is_nan() {
            return Err(Error::TargetNan);
        }
        let lj = log_jacobian_at_theta(&theta, diff);
        acc.push(lp);
        let r = log_ratio(mode, lp, lj, log_volume);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let total = acc.value();
    if total == f64::NEG_INFINITY {
        return Err(Error::AllZeroDensity { shell: shell.index });
    }
    Ok(ShellEstimate {
        index: shell.index,
        c_lo: shell.c_lo,
        c_hi: shell.c_hi,
        log_volume,
        log_mass_hat: log_volume + total - (n as f64).ln(),
        log_s_hat: lo,
        log_big_s_hat: hi,
        p_hat: minorization_probability(lo, hi, eta),
        mc_size: n,
        eta,
    })
}

/// Estimation settings shared by every shell of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSettings {
    pub mc_size: usize,
    pub eta: f64,
    pub ratio_mode: RatioMode,
    pub seed: u64,
}

impl EstimateSettings {
    pub fn new(mc_size: usize, eta: f64, ratio_mode: RatioMode, seed: u64) -> Self {
        Self { mc_size, eta, ratio_mode, seed }
    }
}

/// Estimates of shells `first..=last` of a family; shell `i` of mode `j`
/// always uses stream `(seed, j, i)`.
pub fn estimate_shell_range<T: LogDensity + ?Sized>(
    target: &T,
    diff: &Diffeomorphism,
    family: &ShellFamily,
    mode_index: usize,
    first: usize,
    last: usize,
    settings: &EstimateSettings,
) -> Result<Vec<ShellEstimate>> {
    (first..=last)
        .into_par_iter()
        .map(|i| {
            let shell = family.shell(i)?;
            let mut rng = stream(settings.seed, Domain::ShellEstimate, mode_index as u64, i as u64);
            match estimate_shell(target, diff, &shell, settings.mc_size, settings.eta, &mut rng, settings.ratio_mode) {
                Err(Error::AllZeroDensity { .. }) => {
                    Ok(ShellEstimate::empty(&shell, shell.log_volume()?, settings.mc_size, settings.eta))
                }
                other => other,
            }
        })
        .collect()
}

/// Shell estimates of one mode family with the normalized shell-selection
/// log probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEstimates {
    pub mode: usize,
    pub shells: Vec<ShellEstimate>,
    #[serde(with = "ext_f64_vec")]
    pub log_selection: Vec<f64>,
    /// Estimated fraction of the family's mass cut off by truncation; a
    /// truncated family is a bounded region and is never doubled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped_mass: Option<f64>,
}

impl FamilyEstimates {
    pub fn from_shells(mode: usize, shells: Vec<ShellEstimate>) -> Result<Self> {
        let log_mass: Vec<f64> = shells.iter().map(|s| s.log_mass_hat).collect();
        let probs = normalize_log_weights(&log_mass).ok_or(Error::NoMassAnywhere { mode })?;
        let log_selection = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { mode, shells, log_selection, dropped_mass: None })
    }

    /// The first `keep` shells as a bounded family.
    pub fn truncate(&self, keep: usize) -> Result<Self> {
        if keep == 0 || keep > self.count() {
            return Err(Error::InvalidParameter(format!("cannot keep {keep} of {} shells", self.count())));
        }
        let mut out = Self::from_shells(self.mode, self.shells[..keep].to_vec())?;
        let kept = (out.log_total_mass() - self.log_total_mass()).exp();
        out.dropped_mass = Some((1.0 - kept).max(0.0) + self.dropped_mass.unwrap_or(0.0) * kept);
        Ok(out)
    }

    pub fn count(&self) -> usize {
        self.shells.len()
    }

    pub fn selection_probabilities(&self) -> Vec<f64> {
        self.log_selection.iter().map(|l| l.exp()).collect()
    }

    /// Mean backward time `T` of one draw, `sum_i w_i / p_i` over the shells
    /// with positive selection probability.
    pub fn expected_steps(&self) -> f64 {
        self.shells.iter().zip(self.selection_probabilities()).filter(|(_, w)| *w > 0.0).map(|(s, w)| w / s.p_hat).sum()
    }

    /// Log of the estimated total mass of the family's shells.
    pub fn log_total_mass(&self) -> f64 {
        let mut acc = LogSumExp::default();
        self.shells.iter().for_each(|s| acc.push(s.log_mass_hat));
        acc.value()
    }
}

pub fn estimate_family<T: LogDensity + ?Sized>(
    target: &T,
    diff: &Diffeomorphism,
    family: &ShellFamily,
    mode_index: usize,
    settings: &EstimateSettings,
) -> Result<FamilyEstimates> {
    let shells = estimate_shell_range(target, diff, family, mode_index, 1, family.count(), settings)?;
    FamilyEstimates::from_shells(mode_index, shells)
}

/// Extends `current` to all shells of `family`, estimating only the new ones.
pub fn extend_family<T: LogDensity + ?Sized>(
    target: &T,
    diff: &Diffeomorphism,
    family: &ShellFamily,
    current: &FamilyEstimates,
    settings: &EstimateSettings,
) -> Result<FamilyEstimates> {
    let have = current.count();
    if family.count() <= have {
        return Ok(current.clone());
    }
    let mut shells = current.shells.clone();
    shells.extend(estimate_shell_range(target, diff, family, current.mode, have + 1, family.count(), settings)?);
    FamilyEstimates::from_shells(current.mode, shells)
}

/// Per-mode estimates of a multimodal decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub modes: Vec<FamilyEstimates>,
}

pub fn estimate_table<T: LogDensity + ?Sized>(
    target: &T,
    diff: &Diffeomorphism,
    families: &[ShellFamily],
    settings: &EstimateSettings,
) -> Result<EstimateTable> {
    let modes = families
        .iter()
        .enumerate()
        .map(|(j, f)| estimate_family(target, diff, f, j, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimateTable { modes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub k: usize,
    #[serde(with = "ext_f64")]
    pub log_evidence: f64,
    pub shells_used: usize,
    /// True when the tail rule stopped the sum before the shell cap.
    pub converged: bool,
}

/// Sum of per-shell mass estimates of a likelihood-times-normalized-prior
/// target, stopping after [`TAIL_RUN`] consecutive shells each contribute
/// less than [`TAIL_REL`] of the running sum, or at the family's last shell.
pub fn marginal_likelihood<T: LogDensity + ?Sized>(
    k: usize,
    target: &T,
    family: &ShellFamily,
    diff: &Diffeomorphism,
    mc_size: usize,
    seed: u64,
) -> Result<EvidenceEstimate> {
    let cap = family.count();
    let mut acc = LogSumExp::default();
    let mut small_run = 0usize;
    let mut next = 1usize;
    let log_rel = TAIL_REL.ln();
    while next <= cap {
        let last = (next + EVIDENCE_BATCH - 1).min(cap);
        let batch: Vec<f64> = (next..=last)
            .into_par_iter()
            .map(|i| {
                let shell = family.shell(i)?;
                let mut rng = stream(seed, Domain::Evidence, k as u64, i as u64);
                match estimate_shell(target, diff, &shell, mc_size, 0.0, &mut rng, RatioMode::PaperRatio) {
                    Ok(e) => Ok(e.log_mass_hat),
                    Err(Error::AllZeroDensity { .. }) => Ok(f64::NEG_INFINITY),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for (offset, log_mass) in batch.into_iter().enumerate() {
            let before = acc.value();
            acc.push(log_mass);
            if before > f64::NEG_INFINITY && log_mass < before + log_rel {
                small_run += 1;
            } else {
                small_run = 0;
            }
            if small_run >= TAIL_RUN {
                return Ok(EvidenceEstimate { k, log_evidence: acc.value(), shells_used: next + offset, converged: true });
            }
        }
        next = last + 1;
    }
    Ok(EvidenceEstimate { k, log_evidence: acc.value(), shells_used: cap, converged: false })
}

/// `pi(k | y)` proportional to `pi(k) f(y | k)`.
pub fn k_posterior(log_prior: &[f64], log_evidence: &[f64]) -> Result<Vec<f64>> {
    if log_prior.len() != log_evidence.len() {
        return Err(Error::DimensionMismatch { expected: log_prior.len(), got: log_evidence.len() });
    }
    let joint: Vec<f64> = log_prior
        .iter()
        .zip(log_evidence)
        .map(|(p, e)| if p.is_nan() || e.is_nan() { f64::NEG_INFINITY } else { p + e })
        .collect();
    normalize_log_weights(&joint).ok_or(Error::AllModelsImpossible)
}
