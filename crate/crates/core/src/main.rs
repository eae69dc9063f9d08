use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use iid_shell::config::{Preset, RunConfig, TargetSpec};
use iid_shell::diagnostics::run_diagnostics;
use iid_shell::io::{read_artifact, read_chain, read_samples, write_artifact, write_chain, write_density_grid, write_predictive, write_samples, Provenance, SampleHeader};
use iid_shell::modes::{ModalDecomposition, Mode};
use iid_shell::perfect::{iid_sample_multimodal, SamplerReport};
use iid_shell::pipeline::{
    build_plan, density_grids, fixed_target, modal_setup, model_seed, pilot_chain, predictive, run_evidence, run_vardim, sampler_settings,
    PlanDocument, TargetBundle, NEGLIGIBLE_SELECTION,
};
use iid_shell::stats::trapezoid;
use iid_shell::{Error, Result};

#[derive(Parser)]
#[command(name = "iid-shell", version, about = "Exact iid sampling by ellipsoidal shell decomposition")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base settings when the config has no `preset` key.
    #[arg(long, global = true, default_value = "paper")]
    preset: String,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "IID_SHELL_WORKERS")]
    workers: Option<usize>,
    /// Artifact directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pilot chain and write chain.csv.
    Pilot {
        /// Component count for mixture-model targets.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Locate modes and modal regions from chain.csv; writes modes.json.
    Modes {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Estimate shell masses and minorization probabilities; writes estimates.json.
    Estimate {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Draw iid samples from the fixed-dimension target; writes samples.jsonl.
    Sample {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Log evidence for every configured component count; writes evidence.json.
    Evidence,
    /// Evidence, model draws and iid samples across component counts.
    Vardim {
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Posterior predictive densities from samples.jsonl.
    Predict {
        /// Sample file; defaults to samples.jsonl in the artifact directory.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Self-contained diagnostics suite.
    Check,
    /// Print the resolved configuration and its hash.
    Config,
}

#[derive(Serialize, Deserialize)]
struct ModesDocument {
    modes: Vec<Mode>,
    decomposition: ModalDecomposition,
}

#[derive(Serialize)]
struct SampleSummary<'a> {
    draws: usize,
    report: &'a SamplerReport,
    violation_rate: f64,
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    provenance: Provenance,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn check_provenance(&self, found: &Provenance, what: &Path) {
        if *found != self.provenance {
            eprintln!(
                "{}",
                json!({ "warning": "stale artifact", "path": what.display().to_string(), "config_hash": found.config_hash, "seed": found.seed })
            );
        }
    }

    /// Stderr warning for every truncated family of a plan.
    fn warn_truncation(&self, doc: &PlanDocument) {
        for t in &doc.tables {
            if let Some(dropped) = t.dropped_mass {
                eprintln!("{}", json!({ "warning": "truncated family", "k": doc.k, "mode": t.mode, "shells": t.count(), "dropped_mass": dropped, "expected_steps": t.expected_steps() }));
            }
        }
    }

    fn emit(&self, stage: &str, body: serde_json::Value) {
        println!("{}", json!({ "stage": stage, "config_hash": self.provenance.config_hash, "seed": self.provenance.seed, "result": body }));
    }
}

fn set_k(cfg: &mut RunConfig, k: Option<usize>) -> Result<()> {
    match (k, &mut cfg.target) {
        (None, _) => Ok(()),
        (Some(v), TargetSpec::NormalMixture { k, .. }) => {
            *k = v;
            Ok(())
        }
        (Some(_), _) => Err(Error::Config("--k applies only to normal_mixture targets".into())),
    }
}

fn resolve(cli: &Cli) -> Result<Context> {
    let preset: Preset = cli.preset.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path, preset)?,
        None => RunConfig::preset(preset, RunConfig::default_target()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    match &cli.command {
        Command::Pilot { k } | Command::Modes { k } | Command::Estimate { k } => set_k(&mut cfg, *k)?,
        Command::Sample { k, draws } => {
            set_k(&mut cfg, *k)?;
            if let Some(d) = draws {
                cfg.draws = *d;
            }
        }
        Command::Vardim { draws: Some(d) } => cfg.draws = *d,
        _ => {}
    }
    cfg.validate()?;
    if let Some(w) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    let provenance = Provenance { config_hash: cfg.hash(), seed: cfg.seed };
    Ok(Context { cfg, out, provenance })
}

fn stage_pilot(ctx: &Context, bundle: &TargetBundle) -> Result<Vec<Vec<f64>>> {
    let chain = pilot_chain(bundle, &ctx.cfg.pilot, ctx.cfg.seed)?;
    write_chain(&ctx.path("chain.csv"), &ctx.provenance, &bundle.labels(), &chain.samples)?;
    ctx.emit("pilot", json!({ "kept": chain.samples.len(), "acceptance_rate": chain.acceptance_rate }));
    Ok(chain.samples)
}

fn load_chain(ctx: &Context, bundle: &TargetBundle) -> Result<Vec<Vec<f64>>> {
    let path = ctx.path("chain.csv");
    if !path.exists() {
        return stage_pilot(ctx, bundle);
    }
    let (prov, labels, samples) = read_chain(&path)?;
    if let Some(p) = prov {
        ctx.check_provenance(&p, &path);
    }
    if labels.len() != bundle.target.dim() {
        return Err(Error::DimensionMismatch { expected: bundle.target.dim(), got: labels.len() });
    }
    Ok(samples)
}

fn stage_modes(ctx: &Context, bundle: &TargetBundle) -> Result<ModesDocument> {
    let chain = load_chain(ctx, bundle)?;
    let (modes, decomposition) = modal_setup(&*bundle.target, &chain, &ctx.cfg, model_seed(ctx.cfg.seed, bundle.k))?;
    let doc = ModesDocument { modes, decomposition };
    write_artifact(&ctx.path("modes.json"), "modes", &ctx.provenance, &doc)?;
    ctx.emit("modes", json!({ "modes": doc.decomposition.modes, "radii": doc.decomposition.radii, "weights": doc.decomposition.weights }));
    Ok(doc)
}

fn load_modes(ctx: &Context, bundle: &TargetBundle) -> Result<ModesDocument> {
    let path = ctx.path("modes.json");
    if !path.exists() {
        return stage_modes(ctx, bundle);
    }
    let a = read_artifact::<ModesDocument>(&path, "modes")?;
    ctx.check_provenance(&a.provenance, &path);
    Ok(a.body)
}

fn stage_estimate(ctx: &Context, bundle: &TargetBundle) -> Result<PlanDocument> {
    let modes = load_modes(ctx, bundle)?;
    let seed = model_seed(ctx.cfg.seed, bundle.k);
    let plan = build_plan(bundle.target.clone(), &modes.decomposition, &ctx.cfg.shells, seed)?;
    let doc = PlanDocument::from_plan(&plan, &modes.decomposition, bundle.k);
    write_artifact(&ctx.path("estimates.json"), "estimates", &ctx.provenance, &doc)?;
    let shells: Vec<usize> = doc.tables.iter().map(|t| t.count()).collect();
    let min_p: Vec<f64> = doc
        .tables
        .iter()
        .map(|t| t.shells.iter().zip(t.selection_probabilities()).filter(|(_, p)| *p >= NEGLIGIBLE_SELECTION).map(|(s, _)| s.p_hat).fold(1.0, f64::min))
        .collect();
    let dropped: Vec<Option<f64>> = doc.tables.iter().map(|t| t.dropped_mass).collect();
    let steps: Vec<f64> = doc.tables.iter().map(|t| t.expected_steps()).collect();
    ctx.warn_truncation(&doc);
    ctx.emit("estimate", json!({ "shells": shells, "min_p_hat": min_p, "dropped_mass": dropped, "expected_steps": steps }));
    Ok(doc)
}

fn load_estimates(ctx: &Context, bundle: &TargetBundle) -> Result<PlanDocument> {
    let path = ctx.path("estimates.json");
    if !path.exists() {
        return stage_estimate(ctx, bundle);
    }
    let a = read_artifact::<PlanDocument>(&path, "estimates")?;
    ctx.check_provenance(&a.provenance, &path);
    Ok(a.body)
}

fn stage_sample(ctx: &Context, bundle: &TargetBundle) -> Result<()> {
    let doc = load_estimates(ctx, bundle)?;
    let decomposition = doc.decomposition.clone();
    let mut plan = doc.into_plan(bundle.target.clone())?;
    let (samples, report) = iid_sample_multimodal(&mut plan, ctx.cfg.draws, &sampler_settings(&ctx.cfg))?;
    let labels = bundle.labels();
    write_samples(&ctx.path("samples.jsonl"), &SampleHeader { provenance: ctx.provenance.clone(), labels: labels.clone() }, &samples)?;
    let thetas: Vec<Vec<f64>> = samples.iter().map(|s| s.theta.clone()).collect();
    if thetas.len() >= 100 {
        for (label, grid) in labels.iter().zip(density_grids(&thetas)?) {
            write_density_grid(&ctx.path(&format!("density_{label}.tsv")), &grid)?;
        }
    }
    if !report.doublings.is_empty() {
        let grown = PlanDocument::from_plan(&plan, &decomposition, bundle.k);
        write_artifact(&ctx.path("estimates.json"), "estimates", &ctx.provenance, &grown)?;
    }
    let summary = SampleSummary { draws: samples.len(), report: &report, violation_rate: report.violation_rate() };
    write_artifact(&ctx.path("report.json"), "sample_report", &ctx.provenance, &summary)?;
    ctx.emit("sample", serde_json::to_value(&summary)?);
    Ok(())
}

fn stage_evidence(ctx: &Context) -> Result<()> {
    let run = run_evidence(&ctx.cfg)?;
    write_artifact(&ctx.path("evidence.json"), "evidence", &ctx.provenance, &run.table)?;
    ctx.emit("evidence", serde_json::to_value(&run.table)?);
    Ok(())
}

fn stage_vardim(ctx: &Context) -> Result<()> {
    let run = run_vardim(&ctx.cfg)?;
    write_artifact(&ctx.path("evidence.json"), "evidence", &ctx.provenance, &run.evidence)?;
    write_artifact(&ctx.path("plans.json"), "plans", &ctx.provenance, &run.plans)?;
    write_samples(&ctx.path("samples.jsonl"), &SampleHeader { provenance: ctx.provenance.clone(), labels: Vec::new() }, &run.samples)?;
    let mut freq: BTreeMap<usize, f64> = BTreeMap::new();
    for k in &run.models {
        *freq.entry(*k).or_default() += 1.0 / run.models.len() as f64;
    }
    let mut dropped: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for (k, doc) in &run.plans {
        ctx.warn_truncation(doc);
        dropped.insert(*k, doc.tables.iter().map(|t| t.dropped_mass).collect());
    }
    let summary = SampleSummary { draws: run.samples.len(), report: &run.report, violation_rate: run.report.violation_rate() };
    write_artifact(&ctx.path("report.json"), "sample_report", &ctx.provenance, &summary)?;
    ctx.emit("vardim", json!({ "model_frequencies": freq, "posterior": run.evidence.posterior().probabilities, "dropped_mass": dropped, "report": summary }));
    Ok(())
}

fn stage_predict(ctx: &Context, samples: Option<&Path>) -> Result<()> {
    let path = samples.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("samples.jsonl"));
    let (header, draws) = read_samples(&path)?;
    ctx.check_provenance(&header.provenance, &path);
    let grid = predictive(&draws, &ctx.cfg.predict.grid())?;
    write_predictive(&ctx.out, "predictive", &grid)?;
    ctx.emit("predict", json!({ "points": grid.y.len(), "draws": grid.per_draw.len(), "trapezoid_mass": trapezoid(&grid.y, &grid.mean) }));
    Ok(())
}

fn stage_check(ctx: &Context) -> Result<bool> {
    let results = run_diagnostics(ctx.cfg.seed)?;
    for r in &results {
        println!("{}", serde_json::to_string(r)?);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn run(cli: &Cli) -> Result<bool> {
    let ctx = resolve(cli)?;
    let bundle = || fixed_target(&ctx.cfg.target);
    match &cli.command {
        Command::Pilot { .. } => stage_pilot(&ctx, &bundle()?).map(|_| ()),
        Command::Modes { .. } => stage_modes(&ctx, &bundle()?).map(|_| ()),
        Command::Estimate { .. } => stage_estimate(&ctx, &bundle()?).map(|_| ()),
        Command::Sample { .. } => stage_sample(&ctx, &bundle()?),
        Command::Evidence => stage_evidence(&ctx),
        Command::Vardim { .. } => stage_vardim(&ctx),
        Command::Predict { samples } => stage_predict(&ctx, samples.as_deref()),
        Command::Check => return stage_check(&ctx),
        Command::Config => {
            print!("{}", ctx.cfg.to_toml()?);
            println!("# config_hash = \"{}\"", ctx.provenance.config_hash);
            Ok(())
        }
    }?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}", json!({ "error": "DiagnosticsFailed", "message": "one or more diagnostics failed" }));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(2)
        }
    }
}
