//! Synthetic four-group benchmark: a banded precision matrix, three
//! successive edge perturbations, a diagonal-dominance repair and Gaussian
//! sampling.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use serde::Serialize;

use crate::distributions::RngHandle;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, CholeskyFactor};
use crate::model::{PairIndex, PanDataset};

/// Size parameters of the generator. `Default` is the 20-variable,
/// four-group design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationDesign {
    pub p: usize,
    pub sample_sizes: Vec<usize>,
    /// Edges removed from and added to `Θ1` to form `Θ2`.
    pub changes_2: usize,
    /// Shared edges of `Θ1, Θ2` removed (and as many new edges added) for `Θ3`.
    pub changes_3: usize,
    /// Common edges of `Θ1..Θ3` removed (and as many added) for `Θ4`.
    pub changes_4: usize,
    /// Attempts at drawing a perturbation that survives the repair.
    pub max_repair_attempts: usize,
    /// Multiplier on the absolute row sum used by the repair.
    pub repair_slack: f64,
    /// Scale each generated column to unit variance.
    pub standardize: bool,
}

impl Default for SimulationDesign {
    fn default() -> Self {
        Self {
            p: 20,
            sample_sizes: vec![20, 40, 60, 80],
            changes_2: 5,
            changes_3: 10,
            changes_4: 5,
            max_repair_attempts: 100,
            repair_slack: 1.0,
            standardize: false,
        }
    }
}

/// Edge additions and removals, as upper-triangle `(i, j)` positions.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Perturbation {
    pub removed: Vec<(usize, usize)>,
    pub added: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimTruth {
    /// Repaired precision matrices.
    pub thetas: Vec<DMatrix<f64>>,
    /// `edges[c][e]` over lexicographic variable pairs.
    pub edges: Vec<Vec<bool>>,
    /// `|E_a ∩ E_b|` divided by the mean edge count, per group pair.
    pub shared_proportions: Vec<f64>,
    pub perturbations: Vec<Perturbation>,
}

impl SimTruth {
    pub fn from_thetas(thetas: Vec<DMatrix<f64>>, perturbations: Vec<Perturbation>) -> Self {
        let edges: Vec<Vec<bool>> = thetas.iter().map(edge_set).collect();
        let shared_proportions = PairIndex::new(edges.len())
            .iter()
            .map(|(a, b)| {
                let shared = edges[a]
                    .iter()
                    .zip(&edges[b])
                    .filter(|(x, y)| **x && **y)
                    .count();
                let mean = 0.5 * (count(&edges[a]) + count(&edges[b])) as f64;
                if mean > 0.0 {
                    shared as f64 / mean
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            thetas,
            edges,
            shared_proportions,
            perturbations,
        }
    }
}

fn count(edges: &[bool]) -> usize {
    edges.iter().filter(|e| **e).count()
}

pub fn edge_set(theta: &DMatrix<f64>) -> Vec<bool> {
    PairIndex::new(theta.nrows())
        .iter()
        .map(|(i, j)| theta[(i, j)] != 0.0)
        .collect()
}

/// Unit diagonal, 0.5 on the first off-diagonal band, 0.4 on the second.
pub fn build_theta1(p: usize) -> Result<DMatrix<f64>> {
    if p < 3 {
        return Err(Error::InvalidInput(format!(
            "banded design needs p >= 3, got {p}"
        )));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| match i.abs_diff(j) {
        0 => 1.0,
        1 => 0.5,
        2 => 0.4,
        _ => 0.0,
    }))
}

fn new_edge_value(rng: &mut RngHandle) -> f64 {
    let magnitude = 0.4 + 0.2 * rng.uniform();
    if rng.uniform() < 0.5 {
        -magnitude
    } else {
        magnitude
    }
}

/// Zeroes `n_remove` of `removable` and fills `n_add` of `addable` with
/// values from ±[0.4, 0.6].
fn perturb(
    rng: &mut RngHandle,
    base: &DMatrix<f64>,
    removable: &[(usize, usize)],
    addable: &[(usize, usize)],
    n_remove: usize,
    n_add: usize,
) -> Result<(DMatrix<f64>, Perturbation)> {
    if removable.len() < n_remove || addable.len() < n_add {
        return Err(Error::InvalidInput(format!(
            "cannot remove {n_remove} of {} edges and add {n_add} of {} candidates",
            removable.len(),
            addable.len()
        )));
    }
    let mut out = base.clone();
    let mut log = Perturbation::default();
    let mut picks = sample_indices(rng, removable.len(), n_remove).into_vec();
    picks.sort_unstable();
    for k in picks {
        let (i, j) = removable[k];
        out[(i, j)] = 0.0;
        out[(j, i)] = 0.0;
        log.removed.push((i, j));
    }
    let mut picks = sample_indices(rng, addable.len(), n_add).into_vec();
    picks.sort_unstable();
    for k in picks {
        let (i, j) = addable[k];
        let v = new_edge_value(rng);
        out[(i, j)] = v;
        out[(j, i)] = v;
        log.added.push((i, j));
    }
    Ok((out, log))
}

fn positions_where(p: usize, pred: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize)> {
    PairIndex::new(p)
        .iter()
        .filter(|&(i, j)| pred(i, j))
        .collect()
}

/// Builds `Θ2`, `Θ3`, `Θ4` from `Θ1` by successive perturbation (unrepaired).
pub fn perturb_chain(
    rng: &mut RngHandle,
    theta1: &DMatrix<f64>,
    design: &SimulationDesign,
) -> Result<([DMatrix<f64>; 3], [Perturbation; 3])> {
    let p = theta1.nrows();
    let nz = |t: &DMatrix<f64>, i: usize, j: usize| t[(i, j)] != 0.0;

    let removable = positions_where(p, |i, j| nz(theta1, i, j));
    let addable = positions_where(p, |i, j| !nz(theta1, i, j));
    let (t2, log2) = perturb(
        rng,
        theta1,
        &removable,
        &addable,
        design.changes_2,
        design.changes_2,
    )?;

    let removable = positions_where(p, |i, j| nz(theta1, i, j) && nz(&t2, i, j));
    let addable = positions_where(p, |i, j| !nz(theta1, i, j) && !nz(&t2, i, j));
    let (t3, log3) = perturb(
        rng,
        &t2,
        &removable,
        &addable,
        design.changes_3,
        design.changes_3,
    )?;

    let removable = positions_where(p, |i, j| nz(theta1, i, j) && nz(&t2, i, j) && nz(&t3, i, j));
    let addable = positions_where(p, |i, j| {
        !nz(theta1, i, j) && !nz(&t2, i, j) && !nz(&t3, i, j)
    });
    let (t4, log4) = perturb(
        rng,
        &t3,
        &removable,
        &addable,
        design.changes_4,
        design.changes_4,
    )?;

    Ok(([t2, t3, t4], [log2, log3, log4]))
}

/// Divides each off-diagonal entry by `slack` times the absolute
/// off-diagonal sum of its row, then averages with the transpose. The
/// diagonal is kept.
pub fn make_positive_definite(theta: &DMatrix<f64>, slack: f64) -> Result<DMatrix<f64>> {
    if !slack.is_finite() || slack <= 0.0 {
        return Err(Error::ParameterDomain {
            name: "repair_slack",
            value: slack,
            expected: "finite and > 0",
        });
    }
    let p = theta.nrows();
    if theta.ncols() != p {
        return Err(Error::InvalidInput("repair needs a square matrix".into()));
    }
    let mut scaled = theta.clone();
    for i in 0..p {
        let row_sum: f64 = (0..p)
            .filter(|&j| j != i)
            .map(|j| theta[(i, j)].abs())
            .sum();
        if row_sum > 0.0 {
            for j in (0..p).filter(|&j| j != i) {
                scaled[(i, j)] = theta[(i, j)] / (slack * row_sum);
            }
        }
    }
    let repaired = (&scaled + scaled.transpose()) * 0.5;
    if CholeskyFactor::new(&repaired).is_err() {
        return Err(Error::RepairFailure {
            min_eigenvalue: min_eigenvalue(&repaired),
        });
    }
    Ok(repaired)
}

/// Draws a full four-group truth, redrawing the perturbations if a repair fails.
pub fn simulate_truth(rng: &mut RngHandle, design: &SimulationDesign) -> Result<SimTruth> {
    let theta1 = build_theta1(design.p)?;
    let mut last_err = None;
    for _ in 0..design.max_repair_attempts.max(1) {
        let (rest, logs) = perturb_chain(rng, &theta1, design)?;
        let repaired: Result<Vec<_>> = std::iter::once(&theta1)
            .chain(rest.iter())
            .map(|t| make_positive_definite(t, design.repair_slack))
            .collect();
        match repaired {
            Ok(thetas) => {
                let mut perturbations = vec![Perturbation::default()];
                perturbations.extend(logs);
                return Ok(SimTruth::from_thetas(thetas, perturbations));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// `n[c]` draws from `N(0, Θ_c⁻¹)` per group, centered and optionally scaled
/// to unit column variance.
pub fn generate_dataset(
    rng: &mut RngHandle,
    thetas: &[DMatrix<f64>],
    n: &[usize],
    standardize: bool,
) -> Result<PanDataset> {
    if thetas.len() != n.len() || thetas.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} precision matrices but {} sample sizes",
            thetas.len(),
            n.len()
        )));
    }
    let p = thetas[0].nrows();
    let mut groups = Vec::with_capacity(thetas.len());
    for (c, (theta, &nc)) in thetas.iter().zip(n).enumerate() {
        let factor = CholeskyFactor::new(theta)?;
        let mut x = DMatrix::<f64>::zeros(nc, p);
        for r in 0..nc {
            let mut z = DVector::from_iterator(p, (0..p).map(|_| rng.standard_normal()));
            factor.solve_upper_in_place(&mut z);
            x.set_row(r, &z.transpose());
        }
        groups.push((format!("C{}", c + 1), x));
    }
    PanDataset::new(
        groups,
        (1..=p).map(|j| format!("V{j}")).collect(),
        standardize,
    )
}
