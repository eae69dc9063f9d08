//! Perfect sampling inside one shell, multimodal iid sampling over shell
//! families, and iid sampling across models of different dimension.
//!
//! States are kept in `theta` coordinates. The shell proposal is uniform on
//! `A_i` mapped through `h`, so every ratio used below is a function of
//! `theta` and the chain on `gamma` is the image of the chain on `theta`.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffeo::{log_jacobian_at_theta, Diffeomorphism};
use crate::error::{Error, Result};
use crate::estimation::{extend_family, k_posterior, log_ratio, EstimateSettings, FamilyEstimates, RatioMode, ShellEstimate};
use crate::geometry::{sample_uniform_shell, Shell, ShellFamily};
use crate::rng::{stream, Domain};
use crate::targets::LogDensity;

/// Default absolute cap on the shell count reachable by doubling.
pub const DEFAULT_MAX_SHELLS: usize = 1 << 22;

const SELECT_STREAM: u64 = 0;
const SHELL_STREAM: u64 = 1;
const MODEL_STREAM: u64 = 2;

/// `T` on `{1, 2, ...}` with `P(T = t) = p (1 - p)^(t - 1)`, by inverse CDF.
pub fn sample_geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    if p == 1.0 {
        return Ok(1);
    }
    let u = 1.0 - rng.random::<f64>();
    let t = (u.ln() / (-p).ln_1p()).ceil();
    Ok(if t < 1.0 { 1 } else if t >= u64::MAX as f64 { u64::MAX } else { t as u64 })
}

/// Residual acceptance probability for independence-sampler acceptance `alpha`.
#[inline]
pub fn residual_accept_probability(alpha: f64, p_hat: f64) -> f64 {
    if p_hat >= 1.0 {
        return 1.0;
    }
    ((alpha - p_hat) / (1.0 - p_hat)).clamp(0.0, 1.0)
}

/// Counters shared by all draws of a run.
#[derive(Debug, Default)]
pub struct SamplerCounters {
    residual_steps: AtomicU64,
    violations: AtomicU64,
}

impl SamplerCounters {
    pub fn residual_steps(&self) -> u64 {
        self.residual_steps.load(Ordering::Relaxed)
    }

    pub fn violations(&self) -> u64 {
        self.violations.load(Ordering::Relaxed)
    }

    fn add(&self, steps: u64, violations: u64) {
        self.residual_steps.fetch_add(steps, Ordering::Relaxed);
        self.violations.fetch_add(violations, Ordering::Relaxed);
    }
}

/// Current state of a residual chain with its cached log ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualState {
    pub theta: Vec<f64>,
    pub log_ratio: f64,
}

/// Everything needed to simulate inside one shell.
#[derive(Debug, Clone, Copy)]
pub struct ShellSamplerContext<'a, T: ?Sized> {
    pub target: &'a T,
    pub diff: &'a Diffeomorphism,
    pub shell: Shell<'a>,
    pub p_hat: f64,
    pub log_volume: f64,
    pub ratio_mode: RatioMode,
}

/// Result of one perfect draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellDraw {
    pub theta: Vec<f64>,
    pub t: u64,
    pub residual_steps: u64,
    pub violations: u64,
}

impl<'a, T: LogDensity + ?Sized> ShellSamplerContext<'a, T> {
    pub fn new(
        target: &'a T,
        diff: &'a Diffeomorphism,
        shell: Shell<'a>,
        estimate: &ShellEstimate,
        ratio_mode: RatioMode,
    ) -> Result<Self> {
        if !estimate.has_mass() || !(estimate.p_hat > 0.0) {
            return Err(Error::ZeroMinorization { mode: 0, shell: shell.index });
        }
        if !(estimate.p_hat < 1.0) {
            return Err(Error::InvalidProbability(estimate.p_hat));
        }
        Ok(Self { target, diff, shell, p_hat: estimate.p_hat, log_volume: shell.log_volume()?, ratio_mode })
    }

    pub fn log_ratio_at(&self, theta: &[f64]) -> f64 {
        let lp = self.target.log_density(theta);
        let lp = if lp.is_nan() { f64::NEG_INFINITY } else { lp };
        let lj = match self.ratio_mode {
            RatioMode::PaperRatio => 0.0,
            RatioMode::RawPushforward => log_jacobian_at_theta(theta, self.diff),
        };
        log_ratio(self.ratio_mode, lp, lj, self.log_volume)
    }

    /// A draw from the shell proposal `Q_i`.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> ResidualState {
        let theta = sample_uniform_shell(rng, &self.shell);
        let log_ratio = self.log_ratio_at(&theta);
        ResidualState { theta, log_ratio }
    }

    /// One step of the residual kernel `(P - p Q) / (1 - p)`. Returns true
    /// when the step met `alpha < p_hat`, a minorization violation.
    pub fn residual_step<R: Rng + ?Sized>(&self, state: &mut ResidualState, rng: &mut R) -> bool {
        let proposal = self.propose(rng);
        let alpha = independence_acceptance(proposal.log_ratio, state.log_ratio);
        let u: f64 = rng.random();
        if u < residual_accept_probability(alpha, self.p_hat) {
            *state = proposal;
        }
        alpha < self.p_hat
    }

    /// One step of the plain independence sampler, for kernel checks.
    pub fn independence_step<R: Rng + ?Sized>(&self, state: &mut ResidualState, rng: &mut R) {
        let proposal = self.propose(rng);
        let alpha = independence_acceptance(proposal.log_ratio, state.log_ratio);
        if rng.random::<f64>() < alpha {
            *state = proposal;
        }
    }

    /// Draws `T`, starts from `Q_i` and applies `T - 1` residual steps.
    pub fn perfect_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ShellDraw> {
        let t = sample_geometric(self.p_hat, rng)?;
        let mut state = self.propose(rng);
        let mut violations = 0;
        for _ in 1..t {
            violations += u64::from(self.residual_step(&mut state, rng));
        }
        Ok(ShellDraw { theta: state.theta, t, residual_steps: t - 1, violations })
    }
}

#[inline]
fn independence_acceptance(proposed: f64, current: f64) -> f64 {
    if current == f64::NEG_INFINITY {
        return 1.0;
    }
    (proposed - current).min(0.0).exp()
}

/// One iid output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidSample {
    pub draw_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub theta: Vec<f64>,
    pub mode_j: usize,
    pub shell_i: usize,
    #[serde(rename = "T")]
    pub t: u64,
}

/// Shell families, their estimates and mode weights for one target.
#[derive(Clone)]
pub struct SamplingPlan {
    pub target: Arc<dyn LogDensity>,
    pub diff: Diffeomorphism,
    pub weights: Vec<f64>,
    pub families: Vec<ShellFamily>,
    pub tables: Vec<FamilyEstimates>,
    pub estimate: EstimateSettings,
}

impl SamplingPlan {
    pub fn new(
        target: Arc<dyn LogDensity>,
        diff: Diffeomorphism,
        weights: Vec<f64>,
        families: Vec<ShellFamily>,
        tables: Vec<FamilyEstimates>,
        estimate: EstimateSettings,
    ) -> Result<Self> {
        let m = families.len();
        if m == 0 || weights.len() != m || tables.len() != m {
            return Err(Error::InvalidParameter("plan needs matching weights, families and tables".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || !((total - 1.0).abs() < 1e-9) {
            return Err(Error::InvalidParameter(format!("mode weights must form a simplex (sum {total})")));
        }
        for (f, t) in families.iter().zip(&tables) {
            if f.dim() != target.dim() {
                return Err(Error::DimensionMismatch { expected: target.dim(), got: f.dim() });
            }
            if f.count() != t.count() {
                return Err(Error::InvalidParameter("table and family shell counts differ".into()));
            }
        }
        Ok(Self { target, diff, weights, families, tables, estimate })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    /// Doubles the shell count of mode `j`, estimating only the new shells.
    pub fn double(&mut self, j: usize, max_shells: usize) -> Result<()> {
        let m = self.families[j].count();
        if m * 2 > max_shells {
            return Err(Error::ShellCapExceeded { mode: j, cap: max_shells });
        }
        let family = self.families[j].with_count(m * 2)?;
        let table = extend_family(&*self.target, &self.diff, &family, &self.tables[j], &self.estimate)?;
        self.families[j] = family;
        self.tables[j] = table;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub seed: u64,
    pub max_shells: usize,
}

impl SamplerSettings {
    pub fn new(seed: u64) -> Self {
        Self { seed, max_shells: DEFAULT_MAX_SHELLS }
    }
}

/// Run counters reported alongside the samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerReport {
    pub draws: u64,
    pub residual_steps: u64,
    pub violations: u64,
    pub doublings: Vec<(usize, usize)>,
}

impl SamplerReport {
    pub fn violation_rate(&self) -> f64 {
        if self.residual_steps == 0 {
            0.0
        } else {
            self.violations as f64 / self.residual_steps as f64
        }
    }

    fn merge(&mut self, other: SamplerReport) {
        self.draws += other.draws;
        self.residual_steps += other.residual_steps;
        self.violations += other.violations;
        self.doublings.extend(other.doublings);
    }
}

fn pick<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Mode and shell for each draw. Selection is sequential in draw index, so
/// doublings happen at the same points for any worker count. Picking the
/// last shell of an unbounded family doubles it.
fn select_shells(plan: &mut SamplingPlan, draws: &[u64], settings: &SamplerSettings, report: &mut SamplerReport) -> Result<Vec<(usize, usize)>> {
    let mut shell_probs: Vec<Vec<f64>> = plan.tables.iter().map(|t| t.selection_probabilities()).collect();
    let mut out = Vec::with_capacity(draws.len());
    for &r in draws {
        let mut rng = stream(settings.seed, Domain::Draw, r, SELECT_STREAM);
        let j = pick(&plan.weights, &mut rng);
        loop {
            let i = pick(&shell_probs[j], &mut rng) + 1;
            if i < plan.families[j].count() || plan.tables[j].dropped_mass.is_some() {
                out.push((j, i));
                break;
            }
            plan.double(j, settings.max_shells)?;
            report.doublings.push((j, plan.families[j].count()));
            shell_probs[j] = plan.tables[j].selection_probabilities();
        }
    }
    Ok(out)
}

fn sample_selected(plan: &SamplingPlan, draws: &[u64], picks: &[(usize, usize)], k: Option<usize>, settings: &SamplerSettings) -> Result<(Vec<IidSample>, SamplerCounters)> {
    let counters = SamplerCounters::default();
    let samples = draws
        .par_iter()
        .zip(picks.par_iter())
        .with_max_len(1)
        .map(|(&r, &(j, i))| {
            let shell = plan.families[j].shell(i)?;
            let est = &plan.tables[j].shells[i - 1];
            let ctx = ShellSamplerContext::new(&*plan.target, &plan.diff, shell, est, plan.estimate.ratio_mode).map_err(|e| match e {
                Error::ZeroMinorization { shell, .. } => Error::ZeroMinorization { mode: j, shell },
                other => other,
            })?;
            let mut rng = stream(settings.seed, Domain::Draw, r, SHELL_STREAM);
            let draw = ctx.perfect_sample(&mut rng)?;
            counters.add(draw.residual_steps, draw.violations);
            Ok(IidSample { draw_index: r, k, theta: draw.theta, mode_j: j, shell_i: i, t: draw.t })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, counters))
}

/// iid draws with the given draw indices from the target of `plan`.
pub fn sample_draws(plan: &mut SamplingPlan, draws: &[u64], k: Option<usize>, settings: &SamplerSettings) -> Result<(Vec<IidSample>, SamplerReport)> {
    let mut report = SamplerReport::default();
    let picks = select_shells(plan, draws, settings, &mut report)?;
    let (samples, counters) = sample_selected(plan, draws, &picks, k, settings)?;
    report.draws = draws.len() as u64;
    report.residual_steps = counters.residual_steps();
    report.violations = counters.violations();
    Ok((samples, report))
}

/// `count` iid draws `0..count` from a multimodal target.
pub fn iid_sample_multimodal(plan: &mut SamplingPlan, count: usize, settings: &SamplerSettings) -> Result<(Vec<IidSample>, SamplerReport)> {
    let draws: Vec<u64> = (0..count as u64).collect();
    sample_draws(plan, &draws, None, settings)
}

/// Model indices with their prior and log evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPosterior {
    pub ks: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl ModelPosterior {
    pub fn from_evidence(ks: Vec<usize>, log_prior: &[f64], log_evidence: &[f64]) -> Result<Self> {
        if ks.len() != log_prior.len() {
            return Err(Error::DimensionMismatch { expected: ks.len(), got: log_prior.len() });
        }
        let probabilities = k_posterior(log_prior, log_evidence)?;
        Ok(Self { ks, probabilities })
    }

    pub fn probability_of(&self, k: usize) -> f64 {
        self.ks.iter().position(|x| *x == k).map_or(0.0, |i| self.probabilities[i])
    }
}

/// Model index for each of the draws `0..count`.
pub fn draw_models(posterior: &ModelPosterior, count: usize, seed: u64) -> Vec<usize> {
    (0..count as u64)
        .map(|r| posterior.ks[pick(&posterior.probabilities, &mut stream(seed, Domain::Draw, r, MODEL_STREAM))])
        .collect()
}

/// Distinct model indices in a set of draws.
pub fn distinct_models(models: &[usize]) -> Vec<usize> {
    let mut ks = models.to_vec();
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// iid pairs `(k, theta_k)` for pre-drawn model indices; every drawn `k`
/// needs a plan.
pub fn iid_sample_vardim(
    models: &[usize],
    plans: &mut BTreeMap<usize, SamplingPlan>,
    settings: &SamplerSettings,
) -> Result<(Vec<IidSample>, SamplerReport)> {
    let mut by_k: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for (r, k) in models.iter().enumerate() {
        by_k.entry(*k).or_default().push(r as u64);
    }
    let mut all = Vec::with_capacity(models.len());
    let mut report = SamplerReport::default();
    for (k, draws) in by_k {
        let plan = plans.get_mut(&k).ok_or(Error::MissingPlan(k))?;
        let (samples, rep) = sample_draws(plan, &draws, Some(k), settings)?;
        all.extend(samples);
        report.merge(rep);
    }
    all.sort_by_key(|s| s.draw_index);
    Ok((all, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{estimate_family, estimate_shell, DEFAULT_ETA};
    use crate::geometry::{RadiiSchedule, ScaleFactor};
    use crate::stats::{chi_square_gof, ks_critical_two_sample, ks_two_sample, mean, total_variation};
    use crate::targets::{FnDensity, GaussianMixture};

    fn diff() -> Diffeomorphism {
        Diffeomorphism::new(0.01).unwrap()
    }

    #[test]
    fn geometric_law() {
        let mut rng = stream(1, Domain::Diagnostics, 0, 0);
        assert!((0..100).all(|_| sample_geometric(1.0, &mut rng).unwrap() == 1));
        assert!(matches!(sample_geometric(0.0, &mut rng), Err(Error::InvalidProbability(_))));
        assert!(matches!(sample_geometric(1.5, &mut rng), Err(Error::InvalidProbability(_))));
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_geometric(0.5, &mut rng).unwrap() as f64).collect();
        let se = (0.5f64 / 0.25 / n as f64).sqrt();
        assert!((mean(&xs) - 2.0).abs() < 3.0 * se);
        let p = 1e-3;
        let draws: Vec<u64> = (0..20_000).map(|_| sample_geometric(p, &mut rng).unwrap()).collect();
        assert!(draws.iter().all(|t| *t >= 1));
        let edges = [0u64, 100, 250, 500, 750, 1000, 1500, 2000, 3000, 4500];
        let mut counts = vec![0u64; edges.len()];
        let mut probs = vec![0.0; edges.len()];
        for t in &draws {
            let b = edges.iter().rposition(|e| *t > *e).unwrap();
            counts[b] += 1;
        }
        for b in 0..edges.len() {
            let lo = (1.0 - p).powf(edges[b] as f64);
            let hi = if b + 1 < edges.len() { (1.0 - p).powf(edges[b + 1] as f64) } else { 0.0 };
            probs[b] = lo - hi;
        }
        assert!(chi_square_gof(&counts, &probs).unwrap().p_value > 0.01);
    }

    #[test]
    fn residual_acceptance_boundaries() {
        assert_eq!(residual_accept_probability(1.0, 0.3), 1.0);
        assert_eq!(residual_accept_probability(0.3, 0.3), 0.0);
        assert_eq!(residual_accept_probability(0.1, 0.3), 0.0);
    }

    fn annulus() -> (ShellFamily, GaussianMixture) {
        let fam = ShellFamily::new(vec![0.0, 0.0], ScaleFactor::identity(2), RadiiSchedule::new(0.8, 0.7).unwrap(), 2).unwrap();
        let cov = ScaleFactor::from_lower(2, vec![1.0, 0.0, 0.4, 0.8]).unwrap();
        let g = GaussianMixture::new(vec![1.0], vec![vec![0.5, -0.3]], vec![cov]).unwrap();
        (fam, g)
    }

    #[test]
    fn flat_shell_gives_proposal_law_and_no_violations() {
        let t = FnDensity::new(3, |_: &[f64]| 0.0);
        let fam = ShellFamily::new(vec![0.0; 3], ScaleFactor::identity(3), RadiiSchedule::new(1.0, 1.0).unwrap(), 3).unwrap();
        let shell = fam.shell(2).unwrap();
        let mut rng = stream(2, Domain::Diagnostics, 0, 0);
        let est = estimate_shell(&t, &diff(), &shell, 100, DEFAULT_ETA, &mut rng, RatioMode::PaperRatio).unwrap();
        let df = diff();
        let ctx = ShellSamplerContext::new(&t, &df, shell, &est, RatioMode::PaperRatio).unwrap();
        let mut viol = 0;
        for _ in 0..1000 {
            let d = ctx.perfect_sample(&mut rng).unwrap();
            assert!(shell.contains(&d.theta).unwrap());
            assert!(d.t <= 2);
            viol += d.violations;
        }
        assert_eq!(viol, 0);
    }

    #[test]
    fn single_shell_matches_rejection_oracle() {
        let (fam, g) = annulus();
        let shell = fam.shell(2).unwrap();
        let mut rng = stream(3, Domain::Diagnostics, 0, 0);
        let est = estimate_shell(&g, &diff(), &shell, 5000, DEFAULT_ETA, &mut rng, RatioMode::PaperRatio).unwrap();
        let df = diff();
        let ctx = ShellSamplerContext::new(&g, &df, shell, &est, RatioMode::PaperRatio).unwrap();
        let n = 5000;
        let mut steps = 0;
        let mut viol = 0;
        let perfect: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let d = ctx.perfect_sample(&mut rng).unwrap();
                steps += d.residual_steps;
                viol += d.violations;
                d.theta
            })
            .collect();
        let max = g.log_density(&[0.5, -0.3]);
        let mut oracle = Vec::with_capacity(n);
        while oracle.len() < n {
            let th = sample_uniform_shell(&mut rng, &shell);
            if rng.random::<f64>().ln() < g.log_density(&th) - max {
                oracle.push(th);
            }
        }
        for c in 0..2 {
            let a: Vec<f64> = perfect.iter().map(|x| x[c]).collect();
            let b: Vec<f64> = oracle.iter().map(|x| x[c]).collect();
            assert!(ks_two_sample(&a, &b) < ks_critical_two_sample(n, n, 0.01));
        }
        assert!((viol as f64) < 1e-3 * steps.max(1) as f64);
    }

    #[test]
    fn kernel_mixture_identity() {
        let (fam, g) = annulus();
        let shell = fam.shell(2).unwrap();
        let mut rng = stream(4, Domain::Diagnostics, 0, 0);
        let est = estimate_shell(&g, &diff(), &shell, 5000, DEFAULT_ETA, &mut rng, RatioMode::PaperRatio).unwrap();
        let df = diff();
        let ctx = ShellSamplerContext::new(&g, &df, shell, &est, RatioMode::PaperRatio).unwrap();
        let start = ResidualState { theta: vec![1.2, 0.0], log_ratio: ctx.log_ratio_at(&[1.2, 0.0]) };
        let bins = 24;
        let bin = |th: &[f64]| (((th[1].atan2(th[0]) + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)) * bins as f64) as usize % bins;
        let (mut split, mut plain) = (vec![0.0; bins], vec![0.0; bins]);
        let n = 100_000;
        for _ in 0..n {
            let mut s = start.clone();
            if rng.random::<f64>() < ctx.p_hat {
                s = ctx.propose(&mut rng);
            } else {
                ctx.residual_step(&mut s, &mut rng);
            }
            split[bin(&s.theta)] += 1.0 / n as f64;
            let mut s = start.clone();
            ctx.independence_step(&mut s, &mut rng);
            plain[bin(&s.theta)] += 1.0 / n as f64;
        }
        assert!(total_variation(&split, &plain) < 0.02);
    }

    fn plan_for(g: GaussianMixture, weights: Vec<f64>, centers: &[Vec<f64>], count: usize, sched: RadiiSchedule) -> SamplingPlan {
        let target: Arc<dyn LogDensity> = Arc::new(g.clone());
        let settings = EstimateSettings::new(500, DEFAULT_ETA, RatioMode::PaperRatio, 11);
        let families: Vec<ShellFamily> =
            centers.iter().enumerate().map(|(j, c)| ShellFamily::new(c.clone(), g.factors()[j.min(g.factors().len() - 1)].clone(), sched, count).unwrap()).collect();
        let tables = families.iter().enumerate().map(|(j, f)| estimate_family(&g, &diff(), f, j, &settings).unwrap()).collect();
        SamplingPlan::new(target, diff(), weights, families, tables, settings).unwrap()
    }

    #[test]
    fn unimodal_moments_and_doubling() {
        let g = GaussianMixture::new(vec![1.0], vec![vec![1.0, -1.0]], vec![ScaleFactor::from_lower(2, vec![1.0, 0.0, 0.5, 0.7]).unwrap()]).unwrap();
        let mut plan = plan_for(g, vec![1.0], &[vec![1.0, -1.0]], 8, RadiiSchedule::new(0.25, 0.25).unwrap());
        let k = 4000;
        let (samples, report) = iid_sample_multimodal(&mut plan, k, &SamplerSettings::new(5)).unwrap();
        assert_eq!(samples.len(), k);
        assert!(!report.doublings.is_empty());
        assert!(samples.iter().enumerate().all(|(r, s)| s.draw_index == r as u64 && s.mode_j == 0));
        for (c, (m, sd)) in [(1.0, 1.0), (-1.0, (0.25f64 + 0.49).sqrt())].into_iter().enumerate() {
            let xs: Vec<f64> = samples.iter().map(|s| s.theta[c]).collect();
            assert!((mean(&xs) - m).abs() < 3.0 * sd / (k as f64).sqrt(), "coord {c}: {}", mean(&xs));
        }
        let mut capped = plan_for(
            GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![ScaleFactor::identity(1)]).unwrap(),
            vec![1.0],
            &[vec![0.0]],
            2,
            RadiiSchedule::new(0.1, 0.1).unwrap(),
        );
        let tight = SamplerSettings { seed: 1, max_shells: 8 };
        assert!(matches!(iid_sample_multimodal(&mut capped, 200, &tight), Err(Error::ShellCapExceeded { mode: 0, cap: 8 })));
    }

    #[test]
    fn reproducible_across_workers() {
        let g = GaussianMixture::separated_pair(2).unwrap();
        let centers = g.means().to_vec();
        let base = plan_for(g, vec![0.5, 0.5], &centers, 16, RadiiSchedule::new(0.3, 0.3).unwrap());
        let run = |w: usize| {
            let mut p = base.clone();
            rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap().install(|| iid_sample_multimodal(&mut p, 300, &SamplerSettings::new(9)).unwrap().0)
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a, run(1));
    }

    #[test]
    fn vardim_degenerate_and_missing_plan() {
        let g = GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![ScaleFactor::identity(1)]).unwrap();
        let plan = plan_for(g, vec![1.0], &[vec![0.0]], 20, RadiiSchedule::new(0.2, 0.2).unwrap());
        let post = ModelPosterior::from_evidence(vec![1, 2], &[0.0, f64::NEG_INFINITY], &[-3.0, -1.0]).unwrap();
        let models = draw_models(&post, 100, 3);
        assert!(models.iter().all(|k| *k == 1));
        assert_eq!(distinct_models(&models), vec![1]);
        let mut plans = BTreeMap::from([(1, plan.clone())]);
        let (s, _) = iid_sample_vardim(&models, &mut plans, &SamplerSettings::new(4)).unwrap();
        assert!(s.iter().all(|x| x.k == Some(1)));
        let mut direct = plan;
        let (d, _) = iid_sample_multimodal(&mut direct, 100, &SamplerSettings::new(4)).unwrap();
        assert!(s.iter().zip(&d).all(|(a, b)| a.theta == b.theta));
        assert!(matches!(iid_sample_vardim(&[1, 2], &mut plans, &SamplerSettings::new(4)), Err(Error::MissingPlan(2))));
    }

    #[test]
    fn sample_record_json() {
        let s = IidSample { draw_index: 3, k: Some(2), theta: vec![1.0, -0.5], mode_j: 0, shell_i: 7, t: 4 };
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"draw_index":3,"k":2,"theta":[1.0,-0.5],"mode_j":0,"shell_i":7,"T":4}"#);
        assert_eq!(serde_json::from_str::<IidSample>(&text).unwrap(), s);
    }
}
