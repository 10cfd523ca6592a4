//! Edge selection, network similarity indices and pathway summaries computed
//! from a finished chain.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::CholeskyFactor;
use crate::model::{check_kappa, PairIndex};
use crate::sampler::ChainTrace;

/// `ρ_ij = −θ_ij / sqrt(θ_ii θ_jj)` with a unit diagonal.
pub fn partial_correlations(theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    CholeskyFactor::new(theta)?;
    let p = theta.nrows();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            -theta[(i, j)] / (theta[(i, i)] * theta[(j, j)]).sqrt()
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeReport {
    pub kappa: f64,
    /// `[group][edge]`, fraction of retained draws with `|ρ| > kappa`.
    pub inclusion_prob: Vec<Vec<f64>>,
    /// `inclusion_prob > 0.5`.
    pub adjacency: Vec<Vec<bool>>,
}

impl EdgeReport {
    pub fn from_probabilities(kappa: f64, inclusion_prob: Vec<Vec<f64>>) -> Self {
        let adjacency = inclusion_prob
            .iter()
            .map(|g| g.iter().map(|&q| q > 0.5).collect())
            .collect();
        Self {
            kappa,
            inclusion_prob,
            adjacency,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.inclusion_prob.len()
    }
}

pub fn select_edges(trace: &ChainTrace, kappa: f64) -> Result<EdgeReport> {
    check_kappa(kappa)?;
    if trace.n_retained == 0 {
        return Err(Error::InvalidInput("trace has no retained draws".into()));
    }
    let n = trace.n_retained as f64;
    let probs = trace
        .exceedance_counts(kappa)?
        .into_iter()
        .map(|g| g.into_iter().map(|k| k as f64 / n).collect())
        .collect();
    Ok(EdgeReport::from_probabilities(kappa, probs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityReport {
    /// Posterior mean of `(λ2^{cc'})²` per group pair.
    pub nsi: Vec<f64>,
    /// `nsi` mapped linearly so that its minimum is 0 and maximum is 1.
    pub nnsi: Vec<f64>,
    /// Entrywise L1 distance between posterior-mean precision matrices.
    pub l1_distance: Vec<f64>,
    /// False when `nnsi` is degenerate (a single pair, or all `nsi` equal)
    /// and was filled with zeros.
    pub nnsi_defined: bool,
}

/// Min-max normalization; degenerate inputs map to zeros and `false`.
pub fn normalize_nsi(nsi: &[f64]) -> (Vec<f64>, bool) {
    let lo = nsi.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = nsi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if nsi.len() < 2 || hi <= lo {
        return (vec![0.0; nsi.len()], false);
    }
    (nsi.iter().map(|v| (v - lo) / (hi - lo)).collect(), true)
}

pub fn network_similarity(
    trace: &ChainTrace,
    posterior_mean_thetas: &[DMatrix<f64>],
) -> Result<SimilarityReport> {
    if trace.independent_mode || trace.lambda2_sq_draws.is_empty() {
        return Err(Error::Unsupported(
            "network similarity needs cross-group penalty draws; the trace was run in independent mode"
                .into(),
        ));
    }
    if posterior_mean_thetas.len() != trace.n_groups {
        return Err(Error::InvalidInput(format!(
            "{} precision matrices for {} groups",
            posterior_mean_thetas.len(),
            trace.n_groups
        )));
    }
    let pairs = PairIndex::new(trace.n_groups);
    let n = trace.lambda2_sq_draws.len() as f64;
    let nsi: Vec<f64> = (0..pairs.len())
        .map(|k| trace.lambda2_sq_draws.iter().map(|d| d[k]).sum::<f64>() / n)
        .collect();
    let (nnsi, nnsi_defined) = normalize_nsi(&nsi);
    if !nnsi_defined {
        log::warn!("normalized similarity index is undefined for {} pair(s) with equal values; reporting 0", nsi.len());
    }
    let l1_distance = pairs
        .iter()
        .map(|(a, b)| {
            (&posterior_mean_thetas[a] - &posterior_mean_thetas[b])
                .abs()
                .sum()
        })
        .collect();
    Ok(SimilarityReport {
        nsi,
        nnsi,
        l1_distance,
        nnsi_defined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pathway {
    pub name: String,
    pub members: BTreeSet<usize>,
}

/// Named variable sets; a variable may belong to several pathways.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathwayAnnotation {
    pathways: Vec<Pathway>,
}

impl PathwayAnnotation {
    pub fn new(pathways: Vec<Pathway>, p: usize) -> Result<Self> {
        for pw in &pathways {
            if let Some(bad) = pw.members.iter().find(|&&m| m >= p) {
                return Err(Error::InvalidInput(format!(
                    "pathway `{}` references variable index {bad} but p = {p}",
                    pw.name
                )));
            }
        }
        Ok(Self { pathways })
    }

    pub fn pathways(&self) -> &[Pathway] {
        &self.pathways
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathwayShare {
    pub first: String,
    pub second: String,
    /// Edges in the block selected in both groups.
    pub shared: usize,
    /// Edges in the block selected in at least one group.
    pub union: usize,
    pub proportion: f64,
}

/// Shared-edge proportions within each pathway (`first == second`) and
/// between every pair of pathways.
///
/// The block of pathways `(P, Q)` holds the unordered pairs `{i, j}`, `i ≠ j`,
/// with one end in `P` and the other in `Q`. The proportion is
/// `shared / union` over that block, 0 when the union is empty.
pub fn pathway_shared_proportions(
    adjacency_a: &[bool],
    adjacency_b: &[bool],
    annotation: &PathwayAnnotation,
) -> Result<Vec<PathwayShare>> {
    if adjacency_a.len() != adjacency_b.len() {
        return Err(Error::InvalidInput(format!(
            "adjacency lengths differ: {} vs {}",
            adjacency_a.len(),
            adjacency_b.len()
        )));
    }
    let p = p_from_edges(adjacency_a.len())?;
    let edges = PairIndex::new(p);
    let pws = annotation.pathways();
    for pw in pws {
        if pw.members.is_empty() {
            log::warn!(
                "pathway `{}` has no members; its proportions are 0",
                pw.name
            );
        }
        if let Some(bad) = pw.members.iter().find(|&&m| m >= p) {
            return Err(Error::InvalidInput(format!(
                "pathway `{}` references variable index {bad} but p = {p}",
                pw.name
            )));
        }
    }
    let mut out = Vec::new();
    for (a, pa) in pws.iter().enumerate() {
        for pb in &pws[a..] {
            let mut block = BTreeSet::new();
            for &i in &pa.members {
                for &j in &pb.members {
                    if i != j {
                        block.insert(edges.index(i, j));
                    }
                }
            }
            let shared = block
                .iter()
                .filter(|&&e| adjacency_a[e] && adjacency_b[e])
                .count();
            let union = block
                .iter()
                .filter(|&&e| adjacency_a[e] || adjacency_b[e])
                .count();
            out.push(PathwayShare {
                first: pa.name.clone(),
                second: pb.name.clone(),
                shared,
                union,
                proportion: if union > 0 {
                    shared as f64 / union as f64
                } else {
                    0.0
                },
            });
        }
    }
    Ok(out)
}

pub(crate) fn p_from_edges(m: usize) -> Result<usize> {
    let p = ((1.0 + (1.0 + 8.0 * m as f64).sqrt()) / 2.0).round() as usize;
    if p * (p - 1) / 2 != m {
        return Err(Error::InvalidInput(format!(
            "{m} is not a triangular number of variable pairs"
        )));
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapData {
    /// Edges selected in at least one group, in lexicographic order.
    pub edges: Vec<(usize, usize)>,
    /// `rows[r][c]`: inclusion probability of `edges[r]` in group `c`.
    pub rows: Vec<Vec<f64>>,
    /// Group order from average-linkage clustering of the probability columns.
    pub group_order: Vec<usize>,
}

pub fn edge_probability_heatmap_data(report: &EdgeReport) -> Result<HeatmapData> {
    let n_groups = report.n_groups();
    let m = report.inclusion_prob.first().map_or(0, Vec::len);
    if report.inclusion_prob.iter().any(|g| g.len() != m) {
        return Err(Error::InvalidInput(
            "groups disagree on the number of edges".into(),
        ));
    }
    let pairs = PairIndex::new(p_from_edges(m)?);
    let keep: Vec<usize> = (0..m)
        .filter(|&e| report.adjacency.iter().any(|g| g[e]))
        .collect();
    let rows: Vec<Vec<f64>> = keep
        .iter()
        .map(|&e| report.inclusion_prob.iter().map(|g| g[e]).collect())
        .collect();
    let columns: Vec<Vec<f64>> = (0..n_groups)
        .map(|c| rows.iter().map(|r| r[c]).collect())
        .collect();
    Ok(HeatmapData {
        edges: keep.iter().map(|&e| pairs.pair(e)).collect(),
        rows,
        group_order: average_linkage_order(&columns),
    })
}

/// Leaf order of an average-linkage (UPGMA) dendrogram over Euclidean
/// distances. Ties merge the lowest-indexed pair first; each merge places the
/// cluster holding the smaller original index on the left.
pub fn average_linkage_order(points: &[Vec<f64>]) -> Vec<usize> {
    let n = points.len();
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let base: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dist(&points[i], &points[j])).collect())
        .collect();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let total: f64 = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| (i, j)))
                    .map(|(i, j)| base[i][j])
                    .sum();
                let d = total / (clusters[a].len() * clusters[b].len()) as f64;
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (_, a, b) = best;
        let right = clusters.remove(b);
        let left = &mut clusters[a];
        if right.iter().min() < left.iter().min() {
            let mut merged = right;
            merged.extend_from_slice(left);
            *left = merged;
        } else {
            left.extend(right);
        }
    }
    clusters.pop().unwrap_or_default()
}
