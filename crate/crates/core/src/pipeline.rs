//! End-to-end stages: pilot chain, modes, modal radii, shell plans,
//! evidence per model, iid sampling and posterior predictive curves.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EvidenceCenter, ModeStrategy, EvidenceConfig, ModesConfig, PilotConfig, RunConfig, ShellConfig, TargetSpec};
use crate::diffeo::Diffeomorphism;
use crate::error::{Error, Result};
use crate::estimation::{estimate_family, marginal_likelihood, EstimateSettings, EvidenceEstimate, FamilyEstimates};
use crate::geometry::{cholesky_factor, RadiiSchedule, ShellFamily, SquareMatrix};
use crate::io::PredictiveGrid;
use crate::modes::{max_pairwise_distance, min_radius_for_members, modal_decomposition, mode_sweep, polish_mode, largest_feasible, ModalDecomposition, Mode, SweepOptions};
use crate::numeric::ext_f64;
use crate::perfect::{distinct_models, draw_models, iid_sample_multimodal, iid_sample_vardim, IidSample, ModelPosterior, SamplerReport, SamplerSettings, SamplingPlan};
use crate::rng::{stream, Domain};
use crate::stats::{kde_grid, DensityGrid, DENSITY_GRID_POINTS};
use crate::targets::{
    banded_scale, conditional_posterior_target, predictive_density, read_observations, synthetic_acidity, GaussianMixture, LogDensity,
    MixtureModelParams,
};
use crate::tmcmc::{adapt_move_scales, empirical_moments, run_chain, ChainConfig, ChainOutput};

/// A fixed-dimension target with its starting point and labels.
#[derive(Clone)]
pub struct TargetBundle {
    pub target: Arc<dyn LogDensity>,
    pub init: Option<Vec<f64>>,
    /// Component count when the target is a mixture-model posterior.
    pub k: Option<usize>,
}

impl TargetBundle {
    pub fn labels(&self) -> Vec<String> {
        self.target.coordinate_labels()
    }
}

/// Gaussian mixture described by a builtin target spec.
pub fn builtin_mixture(spec: &TargetSpec) -> Result<Option<GaussianMixture>> {
    match spec {
        TargetSpec::SeparatedPair { dim } => GaussianMixture::separated_pair(*dim).map(Some),
        TargetSpec::GaussianMixture { weights, means, covariances } => {
            let factors = covariances
                .iter()
                .map(|c| cholesky_factor(&SquareMatrix::from_rows(c)?, 0.0))
                .collect::<Result<Vec<_>>>()?;
            GaussianMixture::new(weights.clone(), means.clone(), factors).map(Some)
        }
        TargetSpec::NormalMixture { .. } => Ok(None),
    }
}

/// Observations of a mixture-model target: the data file when given,
/// otherwise the synthetic acidity-like sample.
pub fn observations(spec: &TargetSpec) -> Result<Arc<Vec<f64>>> {
    match spec {
        TargetSpec::NormalMixture { data: Some(path), .. } => Ok(Arc::new(read_observations(path)?)),
        TargetSpec::NormalMixture { data: None, synthetic_n, synthetic_seed, .. } => Ok(Arc::new(synthetic_acidity(*synthetic_n, *synthetic_seed))),
        _ => Err(Error::Config("target has no observations".into())),
    }
}

/// Mixture-model posterior for `k` components.
pub fn mixture_target(spec: &TargetSpec, k: usize, data: Arc<Vec<f64>>) -> Result<TargetBundle> {
    let TargetSpec::NormalMixture { hyper, .. } = spec else {
        return Err(Error::Config("target is not a mixture model".into()));
    };
    let post = conditional_posterior_target(k, hyper, data)?;
    let init = Some(post.initial_point());
    Ok(TargetBundle { target: Arc::new(post), init, k: Some(k) })
}

/// Fixed-dimension target; mixture models use their configured `k`.
pub fn fixed_target(spec: &TargetSpec) -> Result<TargetBundle> {
    if let Some(mix) = builtin_mixture(spec)? {
        let init = Some(vec![0.0; mix.dim()]);
        return Ok(TargetBundle { target: Arc::new(mix), init, k: None });
    }
    let TargetSpec::NormalMixture { k, .. } = spec else { unreachable!() };
    mixture_target(spec, *k, observations(spec)?)
}

/// Seed for the shell estimates of model `k`.
pub fn model_seed(seed: u64, k: Option<usize>) -> u64 {
    match k {
        None => seed,
        Some(k) => seed ^ ((k as u64) << 48),
    }
}

/// Adapted move scales, then the kept pilot chain.
pub fn pilot_chain(bundle: &TargetBundle, pilot: &PilotConfig, seed: u64) -> Result<ChainOutput> {
    let chain_id = bundle.k.unwrap_or(0) as u64;
    let scales = adapt_move_scales(&*bundle.target, bundle.init.clone(), pilot.adapt_iterations, pilot.adapt_rounds, seed ^ 0xA5A5)?;
    let mut cfg = ChainConfig::new(pilot.n_iter, pilot.burn_in, pilot.thin, scales, seed);
    cfg.chain_id = chain_id;
    cfg.init = bundle.init.clone();
    run_chain(&*bundle.target, &cfg)
}

/// Centrality sweep over the pilot cloud, optionally followed by a hill
/// climb on the target and a second merge.
pub fn find_modes(target: &dyn LogDensity, samples: &[Vec<f64>], cfg: &ModesConfig) -> Result<Vec<Mode>> {
    let opts = SweepOptions {
        delta_merge: cfg.delta_merge,
        local_maxima: cfg.local_maxima,
        refine: cfg.refine,
        min_relative_count: cfg.min_relative_count,
    };
    let modes = mode_sweep(samples, &cfg.eps_grid, &opts)?;
    if !cfg.polish {
        return Ok(modes);
    }
    let (_, cov) = empirical_moments(samples)?;
    let d = cov.dim();
    let step = 0.1 * (0..d).map(|i| cov.get(i, i).sqrt()).sum::<f64>() / d as f64;
    let polished: Vec<Mode> = modes
        .par_iter()
        .map(|m| Mode { point: polish_mode(target, &m.point, step, step * 1e-6), count: m.count })
        .collect();
    let merge = cfg.delta_merge * max_pairwise_distance(samples);
    let mut accepted: Vec<Mode> = Vec::new();
    for m in polished {
        let far = accepted.iter().all(|a| a.point.iter().zip(&m.point).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() > merge);
        if far {
            accepted.push(m);
        }
    }
    Ok(accepted)
}

pub fn families_for(decomp: &ModalDecomposition, shells: &ShellConfig) -> Result<Vec<ShellFamily>> {
    let schedule = RadiiSchedule::new(shells.sqrt_c1, shells.delta)?;
    decomp
        .modes
        .iter()
        .zip(&decomp.factors)
        .map(|(mu, f)| ShellFamily::new(mu.clone(), f.clone(), schedule, shells.count))
        .collect()
}

pub fn estimate_settings(shells: &ShellConfig, seed: u64) -> EstimateSettings {
    EstimateSettings::new(shells.mc_size, shells.eta, shells.ratio_mode, seed)
}

/// Shells selected with lower probability are ignored by the radius check.
pub const NEGLIGIBLE_SELECTION: f64 = 1e-12;

/// Every shell with non-negligible selection probability has positive
/// minorization probability.
fn shells_usable(target: &dyn LogDensity, decomp: &ModalDecomposition, shells: &ShellConfig, seed: u64) -> Result<bool> {
    let diff = Diffeomorphism::new(shells.b)?;
    let settings = estimate_settings(shells, seed);
    for (j, fam) in families_for(decomp, shells)?.iter().enumerate() {
        match estimate_family(target, &diff, fam, j, &settings) {
            Ok(t) => {
                let probs = t.selection_probabilities();
                if t.shells.iter().zip(&probs).any(|(s, p)| *p >= NEGLIGIBLE_SELECTION && !(s.p_hat > 0.0)) {
                    return Ok(false);
                }
            }
            Err(Error::NoMassAnywhere { .. }) => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

fn try_decomposition(samples: &[Vec<f64>], modes: &[Vec<f64>], radii: &[f64]) -> Result<Option<ModalDecomposition>> {
    match modal_decomposition(samples, modes, radii) {
        Ok(d) => Ok(Some(d)),
        Err(Error::EmptyModalRegion(_) | Error::NotPositiveDefinite { .. } | Error::TooFewSamples { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Modal decomposition with configured radii, or with the largest common
/// radius that keeps every member covariance positive definite and every
/// shell with mass at positive minorization probability.
pub fn decompose(target: &dyn LogDensity, samples: &[Vec<f64>], modes: &[Vec<f64>], cfg: &RunConfig, seed: u64) -> Result<ModalDecomposition> {
    if let Some(r) = &cfg.modes.radii {
        let radii = if r.len() == 1 { vec![r[0]; modes.len()] } else { r.clone() };
        if radii.len() != modes.len() {
            return Err(Error::Config(format!("{} modal radii for {} modes", radii.len(), modes.len())));
        }
        return modal_decomposition(samples, modes, &radii);
    }
    let d = target.dim();
    let mut lo: f64 = 0.0;
    for mu in modes {
        lo = lo.max(min_radius_for_members(samples, mu, d + 2)?);
    }
    let hi = max_pairwise_distance(samples).max(lo);
    let eps = largest_feasible(lo, hi, cfg.modes.radius_search_iters, |eps| {
        match try_decomposition(samples, modes, &vec![eps; modes.len()])? {
            Some(decomp) => shells_usable(target, &decomp, &cfg.shells, seed),
            None => Ok(false),
        }
    })
    .or_else(|e| match e {
        // No radius passes the shell check; keep the smallest valid balls.
        Error::InvalidParameter(_) => Ok(lo),
        other => Err(other),
    })?;
    modal_decomposition(samples, modes, &vec![eps; modes.len()])
}

/// Modes and modal decomposition of a pilot chain under the configured
/// strategy.
pub fn modal_setup(target: &dyn LogDensity, samples: &[Vec<f64>], cfg: &RunConfig, seed: u64) -> Result<(Vec<Mode>, ModalDecomposition)> {
    match cfg.modes.strategy {
        ModeStrategy::Sweep => {
            let modes = find_modes(target, samples, &cfg.modes)?;
            let points: Vec<Vec<f64>> = modes.iter().map(|m| m.point.clone()).collect();
            let decomposition = decompose(target, samples, &points, cfg, seed)?;
            Ok((modes, decomposition))
        }
        ModeStrategy::Moments => {
            let (mean, cov) = empirical_moments(samples)?;
            let mut decomposition =
                ModalDecomposition::new(vec![mean.clone()], vec![max_pairwise_distance(samples)], vec![1.0], vec![cholesky_factor(&cov, 0.0)?])?;
            decomposition.counts = vec![samples.len()];
            Ok((vec![Mode { point: mean, count: samples.len() as u32 }], decomposition))
        }
    }
}

/// Families, estimates and settings of a plan, without the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub k: Option<usize>,
    pub b: f64,
    pub settings: EstimateSettings,
    pub decomposition: ModalDecomposition,
    pub families: Vec<ShellFamily>,
    pub tables: Vec<FamilyEstimates>,
}

impl PlanDocument {
    pub fn from_plan(plan: &SamplingPlan, decomposition: &ModalDecomposition, k: Option<usize>) -> Self {
        Self {
            k,
            b: plan.diff.b(),
            settings: plan.estimate,
            decomposition: decomposition.with_weights(plan.weights.clone()).unwrap_or_else(|_| decomposition.clone()),
            families: plan.families.clone(),
            tables: plan.tables.clone(),
        }
    }

    pub fn into_plan(self, target: Arc<dyn LogDensity>) -> Result<SamplingPlan> {
        SamplingPlan::new(target, Diffeomorphism::new(self.b)?, self.decomposition.weights, self.families, self.tables, self.settings)
    }
}

/// Family cut before its first shell with mass and minorization probability
/// at most `floor`; unchanged when there is none.
pub fn trim_family(family: &ShellFamily, table: FamilyEstimates, floor: f64) -> Result<(ShellFamily, FamilyEstimates)> {
    let Some(keep) = table.shells.iter().position(|s| s.has_mass() && !(s.p_hat > floor)) else {
        return Ok((family.clone(), table));
    };
    if keep == 0 {
        return Err(Error::ZeroMinorization { mode: table.mode, shell: 1 });
    }
    Ok((family.with_count(keep)?, table.truncate(keep)?))
}

pub fn build_plan(target: Arc<dyn LogDensity>, decomp: &ModalDecomposition, shells: &ShellConfig, seed: u64) -> Result<SamplingPlan> {
    let diff = Diffeomorphism::new(shells.b)?;
    let settings = estimate_settings(shells, seed);
    let mut families = Vec::with_capacity(decomp.m());
    let mut tables = Vec::with_capacity(decomp.m());
    for (j, f) in families_for(decomp, shells)?.into_iter().enumerate() {
        let table = estimate_family(&*target, &diff, &f, j, &settings)?;
        let (f, table) = if shells.trim { trim_family(&f, table, shells.trim_floor)? } else { (f, table) };
        families.push(f);
        tables.push(table);
    }
    SamplingPlan::new(target, diff, decomp.weights.clone(), families, tables, settings)
}

pub fn sampler_settings(cfg: &RunConfig) -> SamplerSettings {
    SamplerSettings { seed: cfg.seed, max_shells: cfg.shells.max_shells }
}

/// Output of the fixed-dimension stages.
pub struct FixedRun {
    pub chain: ChainOutput,
    pub modes: Vec<Mode>,
    pub decomposition: ModalDecomposition,
    pub plan: SamplingPlan,
    pub samples: Vec<IidSample>,
    pub report: SamplerReport,
}

/// Pilot, modes, decomposition, estimates and `cfg.draws` iid draws.
pub fn run_fixed(bundle: &TargetBundle, cfg: &RunConfig) -> Result<FixedRun> {
    let chain = pilot_chain(bundle, &cfg.pilot, cfg.seed)?;
    let seed = model_seed(cfg.seed, bundle.k);
    let (modes, decomposition) = modal_setup(&*bundle.target, &chain.samples, cfg, seed)?;
    let mut plan = build_plan(bundle.target.clone(), &decomposition, &cfg.shells, seed)?;
    let (samples, report) = iid_sample_multimodal(&mut plan, cfg.draws, &sampler_settings(cfg))?;
    Ok(FixedRun { chain, modes, decomposition, plan, samples, report })
}

/// Shell family for an evidence run around the pilot mean or best point.
pub fn evidence_family(target: &dyn LogDensity, samples: &[Vec<f64>], ecfg: &EvidenceConfig) -> Result<ShellFamily> {
    let (mean, cov) = empirical_moments(samples)?;
    let center = match ecfg.center {
        EvidenceCenter::Mean => mean,
        EvidenceCenter::Mode => {
            let best = samples
                .iter()
                .map(|s| (target.log_density(s), s))
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, s)| s.clone())
                .ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
            polish_mode(target, &best, 0.01, 1e-6)
        }
    };
    let factor = cholesky_factor(&cov, 0.0)?;
    ShellFamily::new(center, factor, RadiiSchedule::new(ecfg.sqrt_c1, ecfg.delta)?, ecfg.count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    pub k: usize,
    #[serde(with = "ext_f64")]
    pub log_prior: f64,
    #[serde(with = "ext_f64")]
    pub log_evidence: f64,
    pub shells_used: usize,
    pub converged: bool,
    pub posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceTable {
    pub entries: Vec<EvidenceEntry>,
}

impl EvidenceTable {
    pub fn from_estimates(log_prior: &[f64], estimates: &[EvidenceEstimate]) -> Result<Self> {
        let ks: Vec<usize> = estimates.iter().map(|e| e.k).collect();
        let log_ev: Vec<f64> = estimates.iter().map(|e| e.log_evidence).collect();
        let post = ModelPosterior::from_evidence(ks, log_prior, &log_ev)?;
        let entries = estimates
            .iter()
            .zip(log_prior)
            .zip(&post.probabilities)
            .map(|((e, lp), p)| EvidenceEntry {
                k: e.k,
                log_prior: *lp,
                log_evidence: e.log_evidence,
                shells_used: e.shells_used,
                converged: e.converged,
                posterior: *p,
            })
            .collect();
        Ok(Self { entries })
    }

    pub fn posterior(&self) -> ModelPosterior {
        ModelPosterior {
            ks: self.entries.iter().map(|e| e.k).collect(),
            probabilities: self.entries.iter().map(|e| e.posterior).collect(),
        }
    }

    /// `{k: log_evidence}`.
    pub fn log_evidence_map(&self) -> BTreeMap<usize, f64> {
        self.entries.iter().map(|e| (e.k, e.log_evidence)).collect()
    }
}

/// Pilot chains and evidence for every configured `k`.
pub struct EvidenceRun {
    pub table: EvidenceTable,
    pub chains: BTreeMap<usize, ChainOutput>,
    pub data: Arc<Vec<f64>>,
}

pub fn run_evidence(cfg: &RunConfig) -> Result<EvidenceRun> {
    let TargetSpec::NormalMixture { k_values, hyper, .. } = &cfg.target else {
        return Err(Error::Config("evidence runs need a normal_mixture target".into()));
    };
    let data = observations(&cfg.target)?;
    let diff = Diffeomorphism::new(cfg.evidence.b)?;
    let mut chains = BTreeMap::new();
    let mut estimates = Vec::new();
    let mut log_prior = Vec::new();
    for &k in k_values {
        let bundle = mixture_target(&cfg.target, k, data.clone())?;
        let chain = pilot_chain(&bundle, &cfg.pilot, cfg.seed)?;
        let family = evidence_family(&*bundle.target, &chain.samples, &cfg.evidence)?;
        estimates.push(marginal_likelihood(k, &*bundle.target, &family, &diff, cfg.evidence.mc_size, cfg.seed)?);
        log_prior.push(hyper.log_prior_k(k));
        chains.insert(k, chain);
    }
    let table = EvidenceTable::from_estimates(&log_prior, &estimates)?;
    Ok(EvidenceRun { table, chains, data })
}

pub struct VarDimRun {
    pub evidence: EvidenceTable,
    pub models: Vec<usize>,
    pub plans: BTreeMap<usize, PlanDocument>,
    pub samples: Vec<IidSample>,
    pub report: SamplerReport,
}

/// Model indices first, then plans only for the drawn models, then draws.
pub fn run_vardim(cfg: &RunConfig) -> Result<VarDimRun> {
    let ev = run_evidence(cfg)?;
    let models = draw_models(&ev.table.posterior(), cfg.draws, cfg.seed);
    let mut plans = BTreeMap::new();
    let mut decomps = BTreeMap::new();
    for k in distinct_models(&models) {
        let bundle = mixture_target(&cfg.target, k, ev.data.clone())?;
        let chain = &ev.chains[&k];
        let seed = model_seed(cfg.seed, Some(k));
        let (_, decomp) = modal_setup(&*bundle.target, &chain.samples, cfg, seed)?;
        plans.insert(k, build_plan(bundle.target.clone(), &decomp, &cfg.shells, seed)?);
        decomps.insert(k, decomp);
    }
    let (samples, report) = iid_sample_vardim(&models, &mut plans, &sampler_settings(cfg))?;
    let docs = plans.iter().map(|(k, p)| (*k, PlanDocument::from_plan(p, &decomps[k], Some(*k)))).collect();
    Ok(VarDimRun { evidence: ev.table, models, plans: docs, samples, report })
}

/// Per-draw predictive densities on `grid` and their pointwise mean.
pub fn predictive(samples: &[IidSample], grid: &[f64]) -> Result<PredictiveGrid> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let per_draw = samples
        .par_iter()
        .map(|s| {
            let params = MixtureModelParams::from_theta(&s.theta)?;
            Ok(grid.iter().map(|y| predictive_density(&params, *y)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_draw.len() as f64;
    let mean = (0..grid.len()).map(|i| per_draw.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    Ok(PredictiveGrid { y: grid.to_vec(), mean, per_draw })
}

/// Kernel density grid of every coordinate.
pub fn density_grids(samples: &[Vec<f64>]) -> Result<Vec<DensityGrid>> {
    let d = samples.first().map_or(0, |s| s.len());
    (0..d)
        .map(|c| {
            let xs: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            kde_grid(&xs, DENSITY_GRID_POINTS)
        })
        .collect()
}

/// Banded covariance used by the separated-pair target, exposed for
/// diagnostics.
pub fn separated_pair_covariance(dim: usize) -> SquareMatrix {
    banded_scale(dim)
}

/// Reference draws from a builtin Gaussian mixture, for diagnostics.
pub fn reference_draws(mix: &GaussianMixture, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, Domain::Diagnostics, 1, 0);
    (0..n).map(|_| mix.sample(&mut rng)).collect()
}
