//! The `nexus` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::distributions::RngHandle;
use crate::error::{Error, Result};
use crate::eval::{replicate_experiment, Method, ReplicateConfig};
use crate::io::{self, RunConfig, TraceFile};
use crate::model::{prior_mean_curves, Hyperparameters, PairIndex};
use crate::posterior::{
    edge_probability_heatmap_data, network_similarity, pathway_shared_proportions, select_edges,
};
use crate::sampler::{run_chain_with, TraceOptions};
use crate::simulation::{generate_dataset, simulate_truth, SimulationDesign};

#[derive(Debug, Parser)]
#[command(
    name = "nexus",
    version,
    about = "Joint sparse Gaussian graphical models across groups of unequal size"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw the four-group benchmark truths and data sets.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a group manifest.
    Fit(FitArgs),
    /// Edge inclusion probabilities and selections from a saved trace.
    Select(TraceArgs),
    /// Network similarity indices from a saved trace.
    Similarity(TraceArgs),
    /// Shared-edge proportions per pathway pair from a saved trace.
    Pathways(PathwayArgs),
    /// Replicated simulation benchmark with per-graph and shared-edge AUC.
    Benchmark(BenchmarkArgs),
    /// Prior means of the penalty parameters as a function of delta.
    PriorCurves(PriorCurveArgs),
}

#[derive(Debug, Args, Default)]
struct CommonArgs {
    /// TOML file whose keys match the hyperparameter names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
struct HyperArgs {
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    alpha_gamma: Option<f64>,
    #[arg(long)]
    beta_gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Total sweeps including burn-in.
    #[arg(long = "iterations")]
    n_iterations: Option<usize>,
    #[arg(long = "burnin")]
    n_burnin: Option<usize>,
    /// Fit each group on its own, without the fused penalty.
    #[arg(long)]
    independent: bool,
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[arg(long, default_value_t = 20)]
    p: usize,
    /// Sample size of each group.
    #[arg(long, value_delimiter = ',', default_values_t = [20, 40, 60, 80])]
    sizes: Vec<usize>,
    /// Multiplier on the absolute row sum in the positive-definite repair.
    #[arg(long, default_value_t = 1.0)]
    repair_slack: f64,
    /// Scale simulated columns to unit variance.
    #[arg(long)]
    standardize: bool,
}

impl DesignArgs {
    fn design(&self) -> SimulationDesign {
        SimulationDesign {
            p: self.p,
            sample_sizes: self.sizes.clone(),
            repair_slack: self.repair_slack,
            standardize: self.standardize,
            ..SimulationDesign::default()
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    design: DesignArgs,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Group manifest: a CSV with columns `label,path`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Scale each column to unit variance after centering.
    #[arg(long)]
    scale: bool,
    /// Keep every retained precision matrix so any threshold can be queried later.
    #[arg(long)]
    full_trace: bool,
    /// Extra thresholds to track alongside the default grid.
    #[arg(long, value_delimiter = ',')]
    extra_kappa: Vec<f64>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// `trace.json` written by `fit`.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    kappa: Option<f64>,
}

#[derive(Debug, Args)]
struct PathwayArgs {
    #[command(flatten)]
    trace: TraceArgs,
    /// Lines of `pathway,variable,variable,...`.
    #[arg(long)]
    annotation: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    replicates: Option<usize>,
    /// Skip the independent-mode baseline.
    #[arg(long)]
    no_baseline: bool,
}

#[derive(Debug, Args)]
struct PriorCurveArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Defaults to 0, 0.05, ..., 1.
    #[arg(long, value_delimiter = ',')]
    deltas: Vec<f64>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr as a single
/// `error[<kind>]: <message>` line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Select(a) => select(a),
        Command::Similarity(a) => similarity(a),
        Command::Pathways(a) => pathways(a),
        Command::Benchmark(a) => benchmark(a),
        Command::PriorCurves(a) => prior_curves(a),
    }
}

fn base_config(common: &CommonArgs, hyper: Option<&HyperArgs>) -> Result<RunConfig> {
    let file = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cli = RunConfig {
        output: common.out.clone(),
        seed: common.seed,
        ..RunConfig::default()
    };
    if let Some(h) = hyper {
        cli.alpha1 = h.alpha1;
        cli.beta1 = h.beta1;
        cli.alpha2 = h.alpha2;
        cli.beta2 = h.beta2;
        cli.alpha_gamma = h.alpha_gamma;
        cli.beta_gamma = h.beta_gamma;
        cli.delta = h.delta;
        cli.kappa = h.kappa;
        cli.n_iterations = h.n_iterations;
        cli.n_burnin = h.n_burnin;
        cli.independent_mode = h.independent.then_some(true);
    }
    Ok(file.overridden_by(&cli))
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output.clone().ok_or_else(|| {
        Error::InvalidInput("no output directory; pass --out or set `output`".into())
    })?;
    io::create_dir(&dir)?;
    Ok(dir)
}

/// Wall time is logged rather than written, so reruns give identical files.
fn write_metadata<T: Serialize>(
    dir: &Path,
    command: &str,
    hash: &str,
    settings: &T,
    started: Instant,
) -> Result<()> {
    io::write_json(
        &dir.join("metadata.json"),
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": hash,
            "settings": settings,
        }),
    )?;
    log::info!(
        "{command} finished in {:.2}s",
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulateSettings {
    seed: u64,
    design: SimulationDesign,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = base_config(&a.common, None)?;
    let dir = output_dir(&cfg)?;
    let settings = SimulateSettings {
        seed: cfg.seed.unwrap_or(0),
        design: a.design.design(),
    };
    let hash = io::config_hash(&("simulate", &settings))?;
    let mut rng = RngHandle::for_replicate(settings.seed, 0, 0);
    let truth = simulate_truth(&mut rng, &settings.design)?;
    let data = generate_dataset(
        &mut rng,
        &truth.thetas,
        &settings.design.sample_sizes,
        settings.design.standardize,
    )?;
    io::write_dataset(&dir, &data)?;
    io::write_truth(&dir, &hash, &data.labels(), data.variable_names(), &truth)?;
    write_metadata(&dir, "simulate", &hash, &settings, started)
}

#[derive(Serialize)]
struct FitSettings<'a> {
    manifest: &'a Path,
    scale: bool,
    full_trace: bool,
    extra_kappa: &'a [f64],
    hyper: &'a Hyperparameters,
}

fn fit(a: FitArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = base_config(&a.common, Some(&a.hyper))?;
    if a.data.is_some() {
        cfg.input = a.data.clone();
    }
    if a.scale {
        cfg.scale = Some(true);
    }
    if a.full_trace {
        cfg.full_trace = Some(true);
    }
    let manifest = cfg.input.clone().ok_or_else(|| {
        Error::InvalidInput("no group manifest; pass --data or set `input`".into())
    })?;
    let data = io::load_dataset(&manifest, cfg.scale.unwrap_or(false))?;
    let hyper = cfg.hyperparameters(&data.sample_sizes())?;
    let dir = output_dir(&cfg)?;
    let options = TraceOptions {
        keep_thetas: cfg.full_trace.unwrap_or(false),
        extra_kappas: a.extra_kappa.clone(),
    };
    let settings = FitSettings {
        manifest: &manifest,
        scale: cfg.scale.unwrap_or(false),
        full_trace: options.keep_thetas,
        extra_kappa: &a.extra_kappa,
        hyper: &hyper,
    };
    let hash = io::config_hash(&("fit", &settings))?;
    log::info!(
        "fitting {} groups, p = {}, {} sweeps",
        data.n_groups(),
        data.p(),
        hyper.n_iterations
    );
    let mut rng = RngHandle::new(hyper.seed);
    let trace = run_chain_with(&data, &hyper, &mut rng, &options)?;
    let file = TraceFile {
        config_hash: hash.clone(),
        labels: data.labels(),
        variable_names: data.variable_names().to_vec(),
        sample_sizes: data.sample_sizes(),
        hyper: hyper.clone(),
        trace,
    };
    file.save(&dir.join("trace.json"))?;
    write_selection(&dir, &hash, &file, hyper.kappa)?;
    if !hyper.independent_mode && data.n_groups() > 1 {
        write_similarity_table(&dir, &hash, &file)?;
    }
    write_metadata(&dir, "fit", &hash, &settings, started)
}

fn write_selection(dir: &Path, hash: &str, file: &TraceFile, kappa: f64) -> Result<()> {
    let report = select_edges(&file.trace, kappa)?;
    let mean_pc = file.trace.posterior_mean_partial_correlations();
    io::write_edge_lists(
        dir,
        hash,
        &file.labels,
        &file.variable_names,
        &report,
        &mean_pc,
    )?;
    let heat = edge_probability_heatmap_data(&report)?;
    io::write_heatmap(
        &dir.join("heatmap.csv"),
        hash,
        &file.labels,
        &file.variable_names,
        &heat,
    )
}

fn write_similarity_table(dir: &Path, hash: &str, file: &TraceFile) -> Result<()> {
    let report = network_similarity(&file.trace, &file.trace.posterior_mean_thetas())?;
    io::write_similarity(&dir.join("similarity.csv"), hash, &file.labels, &report)
}

#[derive(Serialize)]
struct TraceSettings<'a> {
    trace_hash: &'a str,
    kappa: f64,
    annotation: Option<&'a Path>,
}

fn load_trace(a: &TraceArgs) -> Result<(RunConfig, TraceFile, f64)> {
    let mut cfg = base_config(&a.common, None)?;
    if a.trace.is_some() {
        cfg.input = a.trace.clone();
    }
    if a.kappa.is_some() {
        cfg.kappa = a.kappa;
    }
    let path = cfg
        .input
        .clone()
        .ok_or_else(|| Error::InvalidInput("no trace file; pass --trace or set `input`".into()))?;
    let file = TraceFile::load(&path)?;
    let kappa = cfg.kappa.unwrap_or(file.hyper.kappa);
    Ok((cfg, file, kappa))
}

fn select(a: TraceArgs) -> Result<()> {
    let started = Instant::now();
    let (cfg, file, kappa) = load_trace(&a)?;
    let dir = output_dir(&cfg)?;
    let settings = TraceSettings {
        trace_hash: &file.config_hash,
        kappa,
        annotation: None,
    };
    let hash = io::config_hash(&("select", &settings))?;
    write_selection(&dir, &hash, &file, kappa)?;
    write_metadata(&dir, "select", &hash, &settings, started)
}

fn similarity(a: TraceArgs) -> Result<()> {
    let started = Instant::now();
    let (cfg, file, kappa) = load_trace(&a)?;
    let dir = output_dir(&cfg)?;
    let settings = TraceSettings {
        trace_hash: &file.config_hash,
        kappa,
        annotation: None,
    };
    let hash = io::config_hash(&("similarity", &settings))?;
    write_similarity_table(&dir, &hash, &file)?;
    write_metadata(&dir, "similarity", &hash, &settings, started)
}

fn pathways(a: PathwayArgs) -> Result<()> {
    let started = Instant::now();
    let (cfg, file, kappa) = load_trace(&a.trace)?;
    let dir = output_dir(&cfg)?;
    let annotation = io::parse_annotation(&a.annotation, &file.variable_names)?;
    let settings = TraceSettings {
        trace_hash: &file.config_hash,
        kappa,
        annotation: Some(&a.annotation),
    };
    let hash = io::config_hash(&("pathways", &settings))?;
    let report = select_edges(&file.trace, kappa)?;
    let mut rows = Vec::new();
    for (x, y) in PairIndex::new(file.labels.len()).iter() {
        for share in
            pathway_shared_proportions(&report.adjacency[x], &report.adjacency[y], &annotation)?
        {
            rows.push((file.labels[x].clone(), file.labels[y].clone(), share));
        }
    }
    io::write_pathways(&dir.join("pathways.csv"), &hash, &rows)?;
    write_metadata(&dir, "pathways", &hash, &settings, started)
}

/// Worker cap from `NEXUS_THREADS`, if set.
fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("NEXUS_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidInput(format!(
                "NEXUS_THREADS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

#[derive(Serialize)]
struct BenchmarkSettings<'a> {
    design: &'a SimulationDesign,
    hyper: &'a Hyperparameters,
    replicates: usize,
    methods: Vec<&'static str>,
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = base_config(&a.common, Some(&a.hyper))?;
    if a.replicates.is_some() {
        cfg.replicates = a.replicates;
    }
    let dir = output_dir(&cfg)?;
    let design = a.design.design();
    let hyper = cfg.hyperparameters(&design.sample_sizes)?;
    let mut methods = vec![Method::Joint];
    if !a.no_baseline {
        methods.push(Method::Independent);
    }
    let config = ReplicateConfig {
        design,
        hyper,
        n_replicates: cfg.replicates.unwrap_or(10),
        methods,
        threads: thread_cap()?,
    };
    let settings = BenchmarkSettings {
        design: &config.design,
        hyper: &config.hyper,
        replicates: config.n_replicates,
        methods: config.methods.iter().map(|m| m.name()).collect(),
    };
    let hash = io::config_hash(&("benchmark", &settings))?;
    let report = replicate_experiment(&config)?;
    io::write_benchmark(&dir, &hash, &report)?;
    write_metadata(&dir, "benchmark", &hash, &settings, started)
}

#[derive(Serialize)]
struct PriorCurveSettings<'a> {
    sizes: &'a [usize],
    deltas: &'a [f64],
    hyper: &'a Hyperparameters,
}

fn prior_curves(a: PriorCurveArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = base_config(&a.common, Some(&a.hyper))?;
    let dir = output_dir(&cfg)?;
    let hyper = cfg.hyperparameters(&a.sizes)?;
    let deltas = if a.deltas.is_empty() {
        (0..=20).map(|k| k as f64 / 20.0).collect()
    } else {
        a.deltas.clone()
    };
    let settings = PriorCurveSettings {
        sizes: &a.sizes,
        deltas: &deltas,
        hyper: &hyper,
    };
    let hash = io::config_hash(&("prior-curves", &settings))?;
    let curves = prior_mean_curves(&a.sizes, &deltas, &hyper)?;
    io::write_prior_curves(&dir.join("prior_curves.csv"), &hash, &a.sizes, &curves)?;
    write_metadata(&dir, "prior-curves", &hash, &settings, started)
}
