//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Set `NEXUS_THREADS` to bound the worker threads used by the replicate study.

mod common;

use std::io::Write;
use std::time::Instant;

use common::{batch_mean_se, iid_mean_se};
use nalgebra::DMatrix;
use nexus::eval::{roc_auc, threshold_sweep, BenchmarkReport, Method, ReplicateConfig};
use nexus::model::prior_mean_curves;
use nexus::sampler::{run_model, GibbsChain};
use nexus::simulation::{build_theta1, generate_dataset, make_positive_definite};
use nexus::{
    network_similarity, partial_correlations, run_chain, select_edges, simulate_truth,
    Hyperparameters, NexusModel, PairIndex, RngHandle, SimulationDesign, TraceOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};

const PER_GRAPH_TARGET: [f64; 4] = [0.83, 0.88, 0.94, 0.94];
const PER_GRAPH_TOL: f64 = 0.06;
const SHARED_TARGET: [f64; 6] = [0.83, 0.91, 0.90, 0.92, 0.92, 0.94];
const SHARED_TOL: f64 = 0.08;
const Z_LIMIT: f64 = 4.0;
const ORACLE_SE_MULTIPLE: f64 = 3.0;
const EXACT_TOL: f64 = 1e-12;
const BENCH_SEED: u64 = 20_240_601;
const REPLICATES: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, outcome: &Outcome, started: Instant) {
    println!(
        "criterion {n}: {} {} [{:.1}s]",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        started.elapsed().as_secs_f64()
    );
    std::io::stdout().flush().ok();
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn within(values: &[f64], targets: &[f64], tol: f64) -> bool {
    values.len() == targets.len()
        && values
            .iter()
            .zip(targets)
            .all(|(v, t)| v.is_finite() && (v - t).abs() <= tol)
}

fn threads_from_env() -> Option<usize> {
    std::env::var("NEXUS_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
}

fn benchmark() -> nexus::Result<BenchmarkReport> {
    let design = SimulationDesign::default();
    let mut hyper = Hyperparameters::for_sample_sizes(&design.sample_sizes);
    hyper.seed = BENCH_SEED;
    nexus::eval::replicate_experiment(&ReplicateConfig {
        design,
        hyper,
        n_replicates: REPLICATES,
        methods: vec![Method::Joint, Method::Independent],
        threads: threads_from_env(),
    })
}

fn summary(report: &BenchmarkReport, method: Method) -> (Vec<f64>, Vec<f64>) {
    let s = report
        .summaries
        .iter()
        .find(|s| s.method == method)
        .expect("method was run");
    (
        s.per_graph.iter().map(|m| m.mean).collect(),
        s.shared.iter().map(|m| m.mean).collect(),
    )
}

fn criterion_1(report: &BenchmarkReport) -> Outcome {
    let (per_graph, _) = summary(report, Method::Joint);
    Outcome {
        pass: within(&per_graph, &PER_GRAPH_TARGET, PER_GRAPH_TOL),
        detail: format!(
            "per-graph mean AUC {} vs {} +/- {PER_GRAPH_TOL}",
            fmt(&per_graph),
            fmt(&PER_GRAPH_TARGET)
        ),
    }
}

fn criterion_2(report: &BenchmarkReport) -> Outcome {
    let (_, shared) = summary(report, Method::Joint);
    let counts: Vec<usize> = report
        .summaries
        .iter()
        .find(|s| s.method == Method::Joint)
        .map(|s| s.shared.iter().map(|m| m.n).collect())
        .unwrap_or_default();
    Outcome {
        pass: within(&shared, &SHARED_TARGET, SHARED_TOL),
        detail: format!(
            "shared-edge mean AUC {} vs {} +/- {SHARED_TOL} (replicates per pair {counts:?})",
            fmt(&shared),
            fmt(&SHARED_TARGET)
        ),
    }
}

fn criterion_7(report: &BenchmarkReport) -> Outcome {
    let (joint, _) = summary(report, Method::Joint);
    let (independent, _) = summary(report, Method::Independent);
    Outcome {
        pass: joint[0] > independent[0],
        detail: format!(
            "C1 mean AUC joint {:.3} vs independent {:.3}; independent per-graph {}",
            joint[0],
            independent[0],
            fmt(&independent)
        ),
    }
}

/// Exact draws from the prior-only target for `p = 3`, `C = 2` by rejection.
///
/// Proposal: `λ1²` and `γ` from their hyperpriors, `(λ2)² ~ Gamma(α2 + m/2, β2)`,
/// diagonals `Exp(γ)`, off-diagonals Laplace with rate `λ1`. The remaining
/// factor of the target is `exp(−λ2 Σ|θ¹ − θ²|)` on the positive-definite
/// cone, which is at most one.
struct PriorOracle {
    alpha1: f64,
    rate1: f64,
    alpha2: f64,
    rate2: f64,
    alpha_gamma: f64,
    beta_gamma: f64,
}

const GIR_STATS: [&str; 10] = [
    "theta12[1]",
    "theta12[2]",
    "theta11[1]",
    "theta11[2]",
    "theta23[1]",
    "lambda1^2[1]",
    "lambda1^2[2]",
    "lambda2^2",
    "gamma",
    "theta12[1]*theta12[2]",
];

fn gir_stats(thetas: [&DMatrix<f64>; 2], l1: [f64; 2], l2: f64, gamma: f64) -> [f64; 10] {
    [
        thetas[0][(0, 1)],
        thetas[1][(0, 1)],
        thetas[0][(0, 0)],
        thetas[1][(0, 0)],
        thetas[0][(1, 2)],
        l1[0],
        l1[1],
        l2,
        gamma,
        thetas[0][(0, 1)] * thetas[1][(0, 1)],
    ]
}

impl PriorOracle {
    fn draw(&self, rng: &mut ChaCha8Rng) -> (u64, [f64; 10]) {
        let m = 3.0;
        let mut proposals = 0;
        loop {
            proposals += 1;
            let l1 = [0, 1].map(|_| gamma_rate(rng, self.alpha1, self.rate1));
            let l2 = gamma_rate(rng, self.alpha2 + m / 2.0, self.rate2);
            let gamma = gamma_rate(rng, self.alpha_gamma, self.beta_gamma);
            let thetas = l1.map(|l| {
                let lambda = l.sqrt();
                let mut t = DMatrix::<f64>::zeros(3, 3);
                for i in 0..3 {
                    t[(i, i)] = Exp::new(gamma).unwrap().sample(rng);
                    for j in i + 1..3 {
                        let magnitude = Exp::new(lambda).unwrap().sample(rng);
                        let v = if rng.random::<bool>() {
                            magnitude
                        } else {
                            -magnitude
                        };
                        t[(i, j)] = v;
                        t[(j, i)] = v;
                    }
                }
                t
            });
            let fused: f64 = [(0, 1), (0, 2), (1, 2)]
                .iter()
                .map(|&(i, j)| (thetas[0][(i, j)] - thetas[1][(i, j)]).abs())
                .sum();
            let accept = (-l2.sqrt() * fused).exp();
            let pd = thetas.iter().all(|t| t.clone().cholesky().is_some());
            if pd && rng.random::<f64>() < accept {
                return (
                    proposals,
                    gir_stats([&thetas[0], &thetas[1]], l1, l2, gamma),
                );
            }
        }
    }
}

fn gamma_rate(rng: &mut ChaCha8Rng, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).unwrap().sample(rng)
}

fn criterion_3() -> nexus::Result<Outcome> {
    let sizes = [10usize, 10];
    let sweeps = 100_000;
    let hyper = Hyperparameters {
        alpha1: 6.0,
        beta1: 150.0,
        alpha2: 2.0,
        beta2: 200.0,
        alpha_gamma: 10.0,
        beta_gamma: 20.0,
        delta: 0.5,
        kappa: 0.05,
        n_iterations: sweeps + 2_000,
        n_burnin: 2_000,
        seed: 0,
        independent_mode: false,
    };
    let model = NexusModel::prior_only(&sizes, 3, &hyper)?;
    let oracle = PriorOracle {
        alpha1: 6.0,
        rate1: 1.5,
        alpha2: 2.0,
        rate2: 2.0,
        alpha_gamma: 10.0,
        beta_gamma: 20.0,
    };
    let rates = model.rates();
    if rates
        .beta1
        .iter()
        .any(|b| (b - oracle.rate1).abs() > EXACT_TOL)
        || (rates.beta2[0] - oracle.rate2).abs() > EXACT_TOL
    {
        return Ok(Outcome {
            pass: false,
            detail: format!("hyperprior rates {rates:?} differ from the oracle's"),
        });
    }

    let options = TraceOptions {
        keep_thetas: true,
        ..TraceOptions::default()
    };
    let trace = run_model(&model, &mut RngHandle::new(31), &options)?;
    let draws = trace.theta_draws.as_ref().expect("kept");
    let gibbs: Vec<[f64; 10]> = (0..draws.len())
        .map(|t| {
            let l1 = &trace.lambda1_sq_draws[t];
            gir_stats(
                [&draws[t][0], &draws[t][1]],
                [l1[0], l1[1]],
                trace.lambda2_sq_draws[t][0],
                trace.gamma_draws[t][0],
            )
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut proposals = 0;
    let exact: Vec<[f64; 10]> = (0..sweeps)
        .map(|_| {
            let (k, s) = oracle.draw(&mut rng);
            proposals += k;
            s
        })
        .collect();

    let mut worst = (0.0f64, String::new());
    for (k, name) in GIR_STATS.iter().enumerate() {
        for power in [1, 2] {
            let g: Vec<f64> = gibbs.iter().map(|s| s[k].powi(power)).collect();
            let e: Vec<f64> = exact.iter().map(|s| s[k].powi(power)).collect();
            let (gm, gse) = batch_mean_se(&g, 100);
            let (em, ese) = iid_mean_se(&e);
            let z = (gm - em) / (gse * gse + ese * ese).sqrt();
            if z.is_nan() || z.abs() > worst.0 {
                worst = (
                    z.abs(),
                    format!("E[{name}^{power}] gibbs {gm:.4} exact {em:.4}"),
                );
            }
        }
    }
    Ok(Outcome {
        pass: worst.0 < Z_LIMIT,
        detail: format!(
            "{} moments over {sweeps} sweeps, max |z| {:.2} < {Z_LIMIT} at {}; oracle acceptance {:.3}",
            2 * GIR_STATS.len(),
            worst.0,
            worst.1,
            sweeps as f64 / proposals as f64
        ),
    })
}

/// Unnormalized log posterior of `(θ11, θ12, θ22, log λ1², log γ)` for one
/// group of bivariate data, including the log-scale Jacobian.
struct BivariatePosterior {
    n: f64,
    s: [f64; 3],
    alpha1: f64,
    rate1: f64,
    alpha_gamma: f64,
    beta_gamma: f64,
}

impl BivariatePosterior {
    fn log_density(&self, x: &[f64; 5]) -> f64 {
        let [t11, t12, t22, a, g] = *x;
        let det = t11 * t22 - t12 * t12;
        if t11 <= 0.0 || t22 <= 0.0 || det <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let (l1_sq, gamma) = (a.exp(), g.exp());
        let lambda = l1_sq.sqrt();
        0.5 * self.n * det.ln() - 0.5 * (self.s[0] * t11 + 2.0 * self.s[1] * t12 + self.s[2] * t22)
            + (0.5 * lambda).ln()
            - lambda * t12.abs()
            + 2.0 * gamma.ln()
            - gamma * (t11 + t22)
            + (self.alpha1 - 1.0) * a
            - self.rate1 * l1_sq
            + (self.alpha_gamma - 1.0) * g
            - self.beta_gamma * gamma
            + a
            + g
    }
}

/// Component-wise random-walk Metropolis; step sizes adapt during warm-up only.
fn metropolis_theta12(target: &BivariatePosterior, sweeps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = [1.0, 0.0, 1.0, 0.0, 0.0];
    let mut current = target.log_density(&x);
    let mut steps = [0.5; 5];
    let warmup = 50_000;
    let mut accepted = [0usize; 5];
    let mut out = Vec::with_capacity(sweeps);
    for it in 0..warmup + sweeps {
        for k in 0..5 {
            let mut y = x;
            let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
            y[k] += steps[k] * z;
            let proposed = target.log_density(&y);
            if rng.random::<f64>().ln() < proposed - current {
                x = y;
                current = proposed;
                accepted[k] += 1;
            }
        }
        if it < warmup && (it + 1) % 500 == 0 {
            for k in 0..5 {
                let rate = accepted[k] as f64 / 500.0;
                steps[k] *= if rate > 0.44 { 1.2 } else { 0.8 };
                accepted[k] = 0;
            }
        }
        if it >= warmup {
            out.push(x[1]);
        }
    }
    out
}

fn criterion_4() -> nexus::Result<Outcome> {
    let n = 15;
    let truth = DMatrix::from_row_slice(2, 2, &[1.0, 0.45, 0.45, 1.2]);
    let data = generate_dataset(&mut RngHandle::new(41), &[truth], &[n], false)?;
    let mut hyper = Hyperparameters::for_sample_sizes(&[n]);
    hyper.n_iterations = 205_000;
    hyper.n_burnin = 5_000;
    let model = NexusModel::new(&data, &hyper)?;
    let options = TraceOptions {
        keep_thetas: true,
        ..TraceOptions::default()
    };
    let trace = run_model(&model, &mut RngHandle::new(42), &options)?;
    let gibbs: Vec<f64> = trace
        .theta_draws
        .as_ref()
        .expect("kept")
        .iter()
        .map(|d| d[0][(0, 1)])
        .collect();

    let x = &data.groups()[0].data;
    let s = x.transpose() * x;
    let target = BivariatePosterior {
        n: n as f64,
        s: [s[(0, 0)], s[(0, 1)], s[(1, 1)]],
        alpha1: hyper.alpha1,
        rate1: hyper.beta1 / (n * n) as f64,
        alpha_gamma: hyper.alpha_gamma,
        beta_gamma: hyper.beta_gamma,
    };
    let oracle = metropolis_theta12(&target, 2_000_000, 43);

    let (gm, gse) = batch_mean_se(&gibbs, 100);
    let (om, ose) = batch_mean_se(&oracle, 100);
    let combined = (gse * gse + ose * ose).sqrt();
    let diff = (gm - om).abs();
    Ok(Outcome {
        pass: diff < ORACLE_SE_MULTIPLE * combined,
        detail: format!(
            "posterior mean theta12 gibbs {gm:.4} (se {gse:.4}) vs metropolis {om:.4} (se {ose:.4}); \
             |diff| = {:.2} combined se",
            diff / combined
        ),
    })
}

fn criterion_5() -> nexus::Result<Outcome> {
    let design = SimulationDesign::default();
    let mut sim_rng = RngHandle::new(51);
    let truth = simulate_truth(&mut sim_rng, &design)?;
    let data = generate_dataset(&mut sim_rng, &truth.thetas, &design.sample_sizes, false)?;
    let hyper = Hyperparameters::for_sample_sizes(&design.sample_sizes);
    let model = NexusModel::new(&data, &hyper)?;

    let mut problems = Vec::new();
    let mut chain = GibbsChain::new(&model);
    let mut rng = RngHandle::new(52);
    let (mut checked, mut violations) = (0usize, 0usize);
    for it in 0..hyper.n_iterations {
        if let Err(e) = chain.sweep(&mut rng) {
            problems.push(format!("sweep {it} failed: {e}"));
            break;
        }
        if it >= hyper.n_burnin {
            for theta in &chain.state().thetas {
                checked += 1;
                if theta.clone().cholesky().is_none() {
                    violations += 1;
                }
            }
        }
    }
    if violations > 0 {
        problems.push(format!(
            "{violations} of {checked} retained draws not positive definite"
        ));
    }

    let trace = run_chain(&data, &hyper, &mut RngHandle::new(53))?;
    let grid = trace.kappa_grid.clone();
    let reports = grid
        .iter()
        .map(|&k| select_edges(&trace, k))
        .collect::<nexus::Result<Vec<_>>>()?;
    for w in reports.windows(2) {
        for c in 0..trace.n_groups {
            let (lo, hi) = (&w[0], &w[1]);
            let prob_ok = lo.inclusion_prob[c]
                .iter()
                .zip(&hi.inclusion_prob[c])
                .all(|(a, b)| b <= a);
            let set_ok = lo.adjacency[c]
                .iter()
                .zip(&hi.adjacency[c])
                .all(|(a, b)| !*b || *a);
            if !(prob_ok && set_ok) {
                problems.push(format!(
                    "selection grows from kappa {} to {} in group {c}",
                    lo.kappa, hi.kappa
                ));
            }
        }
    }
    let sweep = threshold_sweep(&trace, &truth.edges, &grid)?;
    for c in 0..trace.n_groups {
        let fpr: Vec<f64> = sweep
            .iter()
            .filter(|r| r.group == c)
            .map(|r| r.fpr)
            .collect();
        if fpr.windows(2).any(|w| w[1] > w[0]) {
            problems.push(format!("FPR increases with kappa in group {c}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let mut worst_pc = 0.0f64;
    for _ in 0..100 {
        let p = rng.random_range(2..12);
        let a = DMatrix::from_fn(p, p, |_, _| rng.random::<f64>() - 0.5);
        let theta = &a * a.transpose() + DMatrix::identity(p, p) * 0.1;
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(p, |_, _| {
            10f64.powf(rng.random_range(-2.0..2.0))
        }));
        let scaled = &d * &theta * &d;
        let diff = (partial_correlations(&scaled)? - partial_correlations(&theta)?)
            .abs()
            .max();
        worst_pc = worst_pc.max(diff);
    }
    if worst_pc > 1e-10 {
        problems.push(format!(
            "partial correlations change by {worst_pc:e} under rescaling"
        ));
    }

    let mut worst_auc = 0.0f64;
    for _ in 0..100 {
        let len = rng.random_range(10..200);
        let mut labels: Vec<bool> = (0..len).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..len)
            .map(|_| (rng.random::<f64>() * 20.0).round() / 20.0)
            .collect();
        let base = roc_auc(&scores, &labels)?;
        let transforms: [fn(f64) -> f64; 3] = [f64::exp, |x| 3.0 * x - 7.0, |x| x * x * x + x];
        for f in transforms {
            let t: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            worst_auc = worst_auc.max((roc_auc(&t, &labels)? - base).abs());
        }
    }
    if worst_auc > EXACT_TOL {
        problems.push(format!(
            "AUC changes by {worst_auc:e} under a monotone transform"
        ));
    }

    Ok(Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!(
                "{checked} retained draws positive definite; selection and FPR monotone over {} kappa values; \
                 scale invariance max diff {worst_pc:.1e}; AUC invariance max diff {worst_auc:.1e}",
                grid.len()
            )
        } else {
            problems.join("; ")
        },
    })
}

fn criterion_6() -> nexus::Result<Outcome> {
    let n = [50usize, 100, 200];
    let hyper = Hyperparameters::for_sample_sizes(&n);
    let deltas: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let curves = prior_mean_curves(&n, &deltas, &hyper)?;
    let pairs = PairIndex::new(n.len());
    let smallest_pair = pairs.index(0, 1);
    let mut problems = Vec::new();
    for row in &curves {
        if row.delta < 1.0 {
            if !row.within.windows(2).all(|w| w[0] < w[1]) {
                problems.push(format!(
                    "within means not ordered by size at delta {}",
                    row.delta
                ));
            }
            let lowest = row
                .cross
                .iter()
                .enumerate()
                .all(|(k, &v)| k == smallest_pair || row.cross[smallest_pair] < v);
            let by_pair = row.cross.windows(2).all(|w| w[0] < w[1]);
            if !(lowest && by_pair) {
                problems.push(format!(
                    "cross means misordered at delta {}: {:?}",
                    row.delta, row.cross
                ));
            }
        } else {
            let all = row.within.iter().chain(&row.cross);
            let spread_within = spread(&row.within);
            let spread_cross = spread(&row.cross);
            if all.clone().any(|v| !v.is_finite())
                || spread_within > EXACT_TOL
                || spread_cross > EXACT_TOL
            {
                problems.push(format!(
                    "means differ at delta 1: within spread {spread_within:e}, cross spread {spread_cross:e}"
                ));
            }
        }
    }
    Ok(Outcome {
        pass: problems.is_empty() && curves.last().map(|r| r.delta) == Some(1.0),
        detail: if problems.is_empty() {
            format!(
                "n = {n:?}, {} delta values; orderings hold below 1 and means coincide at 1",
                deltas.len()
            )
        } else {
            problems.join("; ")
        },
    })
}

fn spread(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - lo) / hi.abs()
}

fn criterion_8() -> nexus::Result<Outcome> {
    let p = 20;
    let sizes = [60usize, 60, 60];
    let base = make_positive_definite(&build_theta1(p)?, 1.0)?;
    let mut hyper = Hyperparameters::for_sample_sizes(&sizes);
    hyper.n_iterations = 10_000;
    hyper.n_burnin = 2_500;
    let identical = PairIndex::new(3).index(0, 1);
    let mut hits = 0;
    let mut pattern = String::new();
    for seed in 0..10u64 {
        let mut rng = RngHandle::for_replicate(81, seed, 0);
        let mut order: Vec<usize> = (0..p).collect();
        for i in (1..p).rev() {
            order.swap(i, rng.index(i + 1));
        }
        let other = DMatrix::from_fn(p, p, |i, j| base[(order[i], order[j])]);
        let data = generate_dataset(
            &mut rng,
            &[base.clone(), base.clone(), other],
            &sizes,
            false,
        )?;
        let trace = run_chain(&data, &hyper, &mut RngHandle::for_replicate(81, seed, 1))?;
        let similarity = network_similarity(&trace, &trace.posterior_mean_thetas())?;
        let top = similarity.nnsi[identical] == 1.0;
        hits += usize::from(top);
        pattern.push(if top { '+' } else { '-' });
    }
    Ok(Outcome {
        pass: hits >= 9,
        detail: format!("identical-truth pair has NNSI = 1 in {hits}/10 seeds [{pattern}]"),
    })
}

fn run(outcome: nexus::Result<Outcome>) -> Outcome {
    outcome.unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!("error: {e}"),
    })
}

fn main() {
    let started = Instant::now();
    let mut all_pass = true;
    let mut emit = |n: usize, o: Outcome| {
        report(n, &o, started);
        all_pass &= o.pass;
    };

    let bench = benchmark().map_err(|e| e.to_string());
    let from_bench = |f: fn(&BenchmarkReport) -> Outcome| match &bench {
        Ok(b) => f(b),
        Err(e) => Outcome {
            pass: false,
            detail: format!("error: {e}"),
        },
    };
    emit(1, from_bench(criterion_1));
    emit(2, from_bench(criterion_2));
    emit(3, run(criterion_3()));
    emit(4, run(criterion_4()));
    emit(5, run(criterion_5()));
    emit(6, run(criterion_6()));
    emit(7, from_bench(criterion_7));
    emit(8, run(criterion_8()));

    if !all_pass {
        std::process::exit(1);
    }
}
