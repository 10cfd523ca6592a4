//! Scoring estimated networks against known truths, and the replicated
//! simulation benchmark.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::RngHandle;
use crate::error::{Error, Result};
use crate::model::{Hyperparameters, PairIndex};
use crate::posterior::select_edges;
use crate::sampler::{run_chain, ChainTrace};
use crate::simulation::{generate_dataset, simulate_truth, SimulationDesign};

/// Mann-Whitney AUC with midranks for ties.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {bad}")));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput(format!(
            "AUC needs both classes; got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        rank_sum += midrank * order[start..end].iter().filter(|&&i| truth[i]).count() as f64;
        start = end;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// AUC for edges present in both truths, scored by `min(score_a, score_b)`.
pub fn shared_edge_auc(
    scores_a: &[f64],
    scores_b: &[f64],
    truth_a: &[bool],
    truth_b: &[bool],
) -> Result<f64> {
    let m = scores_a.len();
    if scores_b.len() != m || truth_a.len() != m || truth_b.len() != m {
        return Err(Error::InvalidInput(
            "shared-edge inputs differ in length".into(),
        ));
    }
    let scores: Vec<f64> = scores_a
        .iter()
        .zip(scores_b)
        .map(|(a, b)| a.min(*b))
        .collect();
    let labels: Vec<bool> = truth_a.iter().zip(truth_b).map(|(a, b)| *a && *b).collect();
    roc_auc(&scores, &labels)
}

/// Matthews correlation coefficient; 0 when any margin is empty.
pub fn mcc(tp: u64, fp: u64, tn: u64, fn_: u64) -> f64 {
    let (tp, fp, tn, fn_) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / denom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub group: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub mcc: f64,
}

pub fn threshold_sweep(
    trace: &ChainTrace,
    truth: &[Vec<bool>],
    kappas: &[f64],
) -> Result<Vec<SweepRow>> {
    if truth.len() != trace.n_groups || truth.iter().any(|t| t.len() != trace.n_edges()) {
        return Err(Error::InvalidInput(
            "truth does not match the trace's groups and edges".into(),
        ));
    }
    let mut rows = Vec::with_capacity(kappas.len() * trace.n_groups);
    for &kappa in kappas {
        let report = select_edges(trace, kappa)?;
        for (c, (sel, tr)) in report.adjacency.iter().zip(truth).enumerate() {
            let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
            for (&s, &t) in sel.iter().zip(tr) {
                match (s, t) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => fn_ += 1,
                }
            }
            let ratio = |a: u64, b: u64| {
                if a + b == 0 {
                    0.0
                } else {
                    a as f64 / (a + b) as f64
                }
            };
            rows.push(SweepRow {
                kappa,
                group: c,
                tpr: ratio(tp, fn_),
                fpr: ratio(fp, tn),
                mcc: mcc(tp, fp, tn, fn_),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Joint,
    Independent,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Joint => "nexus",
            Method::Independent => "independent",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Method::Joint => 1,
            Method::Independent => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplicateConfig {
    pub design: SimulationDesign,
    /// Sampler settings; `seed` is the master seed for the whole experiment
    /// and `independent_mode` is ignored.
    pub hyper: Hyperparameters,
    pub n_replicates: usize,
    pub methods: Vec<Method>,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub method: Method,
    /// AUC per group.
    pub per_graph: Vec<f64>,
    /// Shared-edge AUC per group pair, `NaN` when the pair has no shared or
    /// no unshared true edges.
    pub shared: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
        let n = v.len();
        let mean = if n == 0 {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / n as f64
        };
        let sd = if n < 2 {
            f64::NAN
        } else {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, sd, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub per_graph: Vec<MeanSd>,
    pub shared: Vec<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub n_groups: usize,
    pub results: Vec<ReplicateResult>,
    pub summaries: Vec<MethodSummary>,
}

/// Simulate, fit and score one replicate. The truth and data come from
/// stream `(seed, r, 0)`, the fit from `(seed, r, 1)` for the joint model or
/// `(seed, r, 2)` for the independent baseline.
pub fn run_replicate(
    config: &ReplicateConfig,
    replicate: usize,
    method: Method,
) -> Result<ReplicateResult> {
    let seed = config.hyper.seed;
    let mut sim_rng = RngHandle::for_replicate(seed, replicate as u64, 0);
    let truth = simulate_truth(&mut sim_rng, &config.design)?;
    let data = generate_dataset(
        &mut sim_rng,
        &truth.thetas,
        &config.design.sample_sizes,
        config.design.standardize,
    )?;
    let mut hyper = config.hyper.clone();
    hyper.independent_mode = method == Method::Independent;
    let mut fit_rng = RngHandle::for_replicate(seed, replicate as u64, method.stream());
    let trace = run_chain(&data, &hyper, &mut fit_rng)?;
    let scores = trace.posterior_mean_abs_partial_correlations();
    let per_graph = scores
        .iter()
        .zip(&truth.edges)
        .map(|(s, t)| roc_auc(s, t))
        .collect::<Result<Vec<_>>>()?;
    let shared = PairIndex::new(data.n_groups())
        .iter()
        .map(|(a, b)| {
            shared_edge_auc(&scores[a], &scores[b], &truth.edges[a], &truth.edges[b])
                .unwrap_or(f64::NAN)
        })
        .collect();
    Ok(ReplicateResult {
        replicate,
        method,
        per_graph,
        shared,
    })
}

/// Runs every (replicate, method) task, in parallel when allowed, and
/// aggregates in task order so the report does not depend on scheduling.
pub fn replicate_experiment(config: &ReplicateConfig) -> Result<BenchmarkReport> {
    if config.n_replicates == 0 {
        return Err(Error::InvalidInput(
            "at least one replicate is required".into(),
        ));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidInput("no methods to evaluate".into()));
    }
    config.hyper.validate()?;
    let tasks: Vec<(usize, Method)> = (0..config.n_replicates)
        .flat_map(|r| config.methods.iter().map(move |&m| (r, m)))
        .collect();
    let run = || -> Vec<Result<ReplicateResult>> {
        tasks
            .par_iter()
            .map(|&(r, m)| run_replicate(config, r, m))
            .collect()
    };
    let outcomes = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let results = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let n_groups = config.design.sample_sizes.len();
    let n_pairs = PairIndex::new(n_groups).len();
    let summaries = config
        .methods
        .iter()
        .map(|&method| {
            let rows: Vec<&ReplicateResult> =
                results.iter().filter(|r| r.method == method).collect();
            MethodSummary {
                method,
                per_graph: (0..n_groups)
                    .map(|c| MeanSd::of(rows.iter().map(|r| r.per_graph[c])))
                    .collect(),
                shared: (0..n_pairs)
                    .map(|k| MeanSd::of(rows.iter().map(|r| r.shared[k])))
                    .collect(),
            }
        })
        .collect();
    Ok(BenchmarkReport {
        n_groups,
        results,
        summaries,
    })
}
