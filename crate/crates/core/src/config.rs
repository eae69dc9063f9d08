//! Run configuration: TOML documents with shipped defaults, a desk-scale
//! preset and a hash over every field that changes results.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimation::{RatioMode, DEFAULT_ETA, DEFAULT_MC_SIZE};
use crate::perfect::DEFAULT_MAX_SHELLS;
use crate::targets::MixturePriorHyper;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Two Gaussians at `nu` and `2 nu` with `nu_i = i`, weights 2/3 and 1/3.
    SeparatedPair { dim: usize },
    GaussianMixture { weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Vec<Vec<f64>>> },
    /// Normal mixture posterior over `(nu, tau*, omega)` for `k` components.
    NormalMixture {
        #[serde(default)]
        data: Option<PathBuf>,
        #[serde(default = "default_synthetic_n")]
        synthetic_n: usize,
        #[serde(default)]
        synthetic_seed: u64,
        #[serde(default = "default_k_values")]
        k_values: Vec<usize>,
        /// Component count for fixed-dimension stages.
        #[serde(default = "default_fixed_k")]
        k: usize,
        #[serde(default)]
        hyper: MixturePriorHyper,
    },
}

fn default_synthetic_n() -> usize {
    155
}

fn default_k_values() -> Vec<usize> {
    (1..=5).collect()
}

fn default_fixed_k() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub adapt_iterations: usize,
    pub adapt_rounds: usize,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self { n_iter: 1_600_000, burn_in: 100_000, thin: 150, adapt_iterations: 5_000, adapt_rounds: 4 }
    }
}

/// How the modal decomposition is obtained from the pilot chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeStrategy {
    /// Centrality sweep, then balls of a searched or configured radius.
    #[default]
    Sweep,
    /// One family at the chain mean with the chain covariance.
    Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModesConfig {
    pub strategy: ModeStrategy,
    pub eps_grid: Vec<f64>,
    pub delta_merge: f64,
    pub local_maxima: bool,
    pub refine: bool,
    pub min_relative_count: f64,
    /// Hill-climb each mode on the target and merge modes that meet.
    pub polish: bool,
    /// Fixed modal radii; searched when absent.
    pub radii: Option<Vec<f64>>,
    pub radius_search_iters: usize,
}

impl Default for ModesConfig {
    fn default() -> Self {
        Self {
            strategy: ModeStrategy::Sweep,
            eps_grid: (1..=10).map(|i| 0.05 * i as f64).collect(),
            delta_merge: 0.05,
            local_maxima: true,
            refine: true,
            min_relative_count: 0.1,
            polish: true,
            radii: None,
            radius_search_iters: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShellConfig {
    pub b: f64,
    pub sqrt_c1: f64,
    pub delta: f64,
    pub count: usize,
    pub mc_size: usize,
    pub eta: f64,
    pub ratio_mode: RatioMode,
    pub max_shells: usize,
    /// Drop the outer shells from the first one that carries mass and has
    /// minorization probability at most `trim_floor`.
    pub trim: bool,
    pub trim_floor: f64,
}

impl Default for ShellConfig {
    fn default() -> Self {
        Self {
            b: 0.01,
            sqrt_c1: 0.05,
            delta: 9.5e-5,
            count: 100_000,
            mc_size: DEFAULT_MC_SIZE,
            eta: DEFAULT_ETA,
            ratio_mode: RatioMode::PaperRatio,
            max_shells: DEFAULT_MAX_SHELLS,
            trim: false,
            trim_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceCenter {
    Mean,
    Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvidenceConfig {
    pub b: f64,
    pub sqrt_c1: f64,
    pub delta: f64,
    pub count: usize,
    pub mc_size: usize,
    pub center: EvidenceCenter,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        Self { b: 0.3, sqrt_c1: 0.05, delta: 3e-5, count: 100_000, mc_size: DEFAULT_MC_SIZE, center: EvidenceCenter::Mean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { lo: 2.0, hi: 8.0, points: 100 }
    }
}

impl PredictConfig {
    /// `lo + (hi - lo) / points * i` for `i < points`.
    pub fn grid(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / self.points as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: TargetSpec,
    #[serde(default)]
    pub seed: u64,
    /// Number of iid draws `K`.
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub pilot: PilotConfig,
    #[serde(default)]
    pub modes: ModesConfig,
    #[serde(default)]
    pub shells: ShellConfig,
    #[serde(default)]
    pub evidence: EvidenceConfig,
    #[serde(default)]
    pub predict: PredictConfig,
    /// Worker threads; does not affect results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_draws() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Full-size settings.
    Paper,
    /// Settings sized for a workstation.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected paper or desk)"))),
        }
    }
}

impl RunConfig {
    pub fn new(target: TargetSpec) -> Self {
        Self {
            target,
            seed: 0,
            draws: default_draws(),
            pilot: PilotConfig::default(),
            modes: ModesConfig::default(),
            shells: ShellConfig::default(),
            evidence: EvidenceConfig::default(),
            predict: PredictConfig::default(),
            workers: None,
            out: None,
        }
    }

    pub fn preset(preset: Preset, target: TargetSpec) -> Self {
        let mut cfg = Self::new(target);
        if matches!(cfg.target, TargetSpec::NormalMixture { .. }) {
            // Mixture posteriors use one family at the pilot mean, cut where
            // minorization is lost.
            cfg.modes.strategy = ModeStrategy::Moments;
            cfg.shells.trim = true;
        }
        if preset == Preset::Desk {
            cfg.apply_desk();
        }
        cfg
    }

    fn apply_desk(&mut self) {
        self.pilot = PilotConfig { n_iter: 220_000, burn_in: 20_000, thin: 20, adapt_iterations: 4_000, adapt_rounds: 3 };
        self.shells.delta = 0.01;
        self.shells.count = 1_000;
        self.shells.mc_size = 1_000;
        if self.shells.trim {
            // Shells below this floor cost over a million residual steps per draw.
            self.shells.trim_floor = 1e-6;
        }
        // Same evidence reach as the full-size schedule, in fewer shells.
        self.evidence.delta = 0.003;
        self.evidence.count = 1_000;
        self.evidence.mc_size = 2_000;
    }

    /// Default target for the builtin desk runs.
    pub fn default_target() -> TargetSpec {
        TargetSpec::SeparatedPair { dim: 5 }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; see [`parse_with_preset`].
    pub fn load(path: &Path, fallback: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse_with_preset(&text, fallback)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("shells.b", self.shells.b),
            ("shells.sqrt_c1", self.shells.sqrt_c1),
            ("shells.delta", self.shells.delta),
            ("evidence.b", self.evidence.b),
            ("evidence.sqrt_c1", self.evidence.sqrt_c1),
            ("evidence.delta", self.evidence.delta),
            ("modes.delta_merge", self.modes.delta_merge),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite (got {v})")));
            }
        }
        let counts = [
            ("shells.count", self.shells.count),
            ("shells.mc_size", self.shells.mc_size),
            ("evidence.count", self.evidence.count),
            ("evidence.mc_size", self.evidence.mc_size),
            ("draws", self.draws),
            ("pilot.n_iter", self.pilot.n_iter),
            ("pilot.thin", self.pilot.thin),
            ("predict.points", self.predict.points),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.shells.mc_size < 2 || self.evidence.mc_size < 2 {
            return Err(Error::Config("Monte Carlo sizes must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.shells.trim_floor) {
            return Err(Error::Config(format!("shells.trim_floor must lie in [0, 1) (got {})", self.shells.trim_floor)));
        }
        if !(0.0..1.0).contains(&self.shells.eta) {
            return Err(Error::Config(format!("shells.eta must lie in [0, 1) (got {})", self.shells.eta)));
        }
        if self.shells.max_shells < self.shells.count {
            return Err(Error::Config("shells.max_shells is below shells.count".into()));
        }
        if self.pilot.burn_in >= self.pilot.n_iter {
            return Err(Error::Config("pilot.burn_in must be below pilot.n_iter".into()));
        }
        let grid = &self.modes.eps_grid;
        if grid.is_empty() || grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("modes.eps_grid must be ascending inside (0, 1)".into()));
        }
        if let Some(r) = &self.modes.radii {
            if r.is_empty() || r.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config("modes.radii must be positive".into()));
            }
        }
        if !(self.predict.hi > self.predict.lo) {
            return Err(Error::Config("predict.hi must exceed predict.lo".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        match &self.target {
            TargetSpec::SeparatedPair { dim } if *dim == 0 => Err(Error::Config("target.dim must be positive".into())),
            TargetSpec::NormalMixture { k_values, k, hyper, .. } => {
                hyper.validate()?;
                if k_values.is_empty() || k_values.iter().chain([k]).any(|v| *v == 0 || *v > hyper.k_max) {
                    return Err(Error::Config(format!("k values must lie in 1..={}", hyper.k_max)));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 of the canonical JSON of every result-affecting field.
    pub fn hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.workers = None;
        semantic.out = None;
        let text = serde_json::to_string(&semantic).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses a config whose optional top-level `preset` key selects the base
/// settings that the remaining keys override.
pub fn parse_with_preset(text: &str, fallback: Preset) -> Result<RunConfig> {
    let mut value: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let preset = match value.remove("preset") {
        Some(toml::Value::String(s)) => s.parse()?,
        Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        None => fallback,
    };
    let target = match value.get("target") {
        Some(t) => t.clone().try_into::<TargetSpec>().map_err(|e| Error::Config(e.to_string()))?,
        None => RunConfig::default_target(),
    };
    let base = RunConfig::preset(preset, target);
    let mut merged: toml::Table = toml::Value::try_from(&base)
        .map_err(|e| Error::Config(e.to_string()))?
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    merge_tables(&mut merged, value);
    let cfg: RunConfig = toml::Value::Table(merged).try_into().map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if k != "target" => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
