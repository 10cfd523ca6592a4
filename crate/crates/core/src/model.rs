//! Model types, hyperparameters and the sample-size correction formulas.
//!
//! Pair-indexed arrays (variable pairs `i < j`, group pairs `c < c'`) are
//! stored flat in lexicographic order; see [`PairIndex`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};

/// Canonical lexicographic indexing of unordered pairs `(a, b)`, `a < b < n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    n: usize,
}

impl PairIndex {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of the unordered pair `{a, b}`; `a != b`.
    pub fn index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a != b && a < self.n && b < self.n);
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        a * self.n - a * (a + 1) / 2 + (b - a - 1)
    }

    pub fn pair(&self, k: usize) -> (usize, usize) {
        debug_assert!(k < self.len());
        let mut a = 0;
        let mut start = 0;
        loop {
            let row = self.n - a - 1;
            if k < start + row {
                return (a, a + 1 + (k - start));
            }
            start += row;
            a += 1;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |a| ((a + 1)..self.n).map(move |b| (a, b)))
    }
}

#[derive(Debug, Clone)]
pub struct Group {
    pub label: String,
    /// `n_c × p`, column-centered.
    pub data: DMatrix<f64>,
}

/// Centered data for `C` groups over a shared, ordered variable set.
#[derive(Debug, Clone)]
pub struct PanDataset {
    groups: Vec<Group>,
    variable_names: Vec<String>,
}

impl PanDataset {
    /// Validates shapes, rejects non-finite entries, and centers every column
    /// of every group. With `scale`, columns are also divided by their sample
    /// standard deviation.
    pub fn new(
        groups: Vec<(String, DMatrix<f64>)>,
        variable_names: Vec<String>,
        scale: bool,
    ) -> Result<Self> {
        let p = variable_names.len();
        if p < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 variables, got {p}"
            )));
        }
        if groups.is_empty() {
            return Err(Error::InvalidInput("need at least one group".into()));
        }
        let mut out = Vec::with_capacity(groups.len());
        for (label, mut data) in groups {
            if data.ncols() != p {
                return Err(Error::InvalidInput(format!(
                    "group `{label}` has {} columns, expected {p}",
                    data.ncols()
                )));
            }
            if data.nrows() < 2 {
                return Err(Error::InvalidInput(format!(
                    "group `{label}` has {} samples, need at least 2",
                    data.nrows()
                )));
            }
            if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "group `{label}` has a non-finite entry at row {}",
                    pos % data.nrows()
                )));
            }
            let n = data.nrows() as f64;
            for (j, name) in variable_names.iter().enumerate() {
                let mut col = data.column_mut(j);
                let mean = col.sum() / n;
                col.add_scalar_mut(-mean);
                if scale {
                    let sd = (col.norm_squared() / (n - 1.0)).sqrt();
                    if sd <= 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "group `{label}` variable `{name}` is constant and cannot be scaled"
                        )));
                    }
                    col /= sd;
                }
            }
            out.push(Group { label, data });
        }
        Ok(Self {
            groups: out,
            variable_names,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn p(&self) -> usize {
        self.variable_names.len()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn labels(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.label.clone()).collect()
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.data.nrows()).collect()
    }

    /// Scatter matrix `XᵀX` of group `c`.
    pub fn scatter(&self, c: usize) -> DMatrix<f64> {
        let x = &self.groups[c].data;
        x.transpose() * x
    }

    /// Dataset made of the listed groups, in the listed order.
    pub fn select_groups(&self, order: &[usize]) -> Result<Self> {
        if order.is_empty() || order.iter().any(|&c| c >= self.n_groups()) {
            return Err(Error::InvalidInput(format!(
                "group selection {order:?} out of range for {} groups",
                self.n_groups()
            )));
        }
        Ok(Self {
            groups: order.iter().map(|&c| self.groups[c].clone()).collect(),
            variable_names: self.variable_names.clone(),
        })
    }

    pub fn max_abs_column_mean(&self) -> f64 {
        self.groups
            .iter()
            .flat_map(|g| {
                let n = g.data.nrows() as f64;
                g.data.column_iter().map(move |c| (c.sum() / n).abs())
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub alpha_gamma: f64,
    pub beta_gamma: f64,
    pub delta: f64,
    pub kappa: f64,
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub seed: u64,
    pub independent_mode: bool,
}

impl Hyperparameters {
    /// Settings of the simulation study: α1 = 1, α2 = 0.1, β1 = 0.1·n̄²,
    /// β2 = n̄², α_γ = β_γ = 1, 20 000 sweeps with 5 000 burn-in.
    pub fn for_sample_sizes(sample_sizes: &[usize]) -> Self {
        let n_bar = mean_size(sample_sizes);
        Self {
            alpha1: 1.0,
            beta1: 0.1 * n_bar * n_bar,
            alpha2: 0.1,
            beta2: n_bar * n_bar,
            alpha_gamma: 1.0,
            beta_gamma: 1.0,
            delta: 0.5,
            kappa: 0.05,
            n_iterations: 20_000,
            n_burnin: 5_000,
            seed: 0,
            independent_mode: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("alpha1", self.alpha1)?;
        check_positive("beta1", self.beta1)?;
        check_positive("alpha2", self.alpha2)?;
        check_positive("beta2", self.beta2)?;
        check_positive("alpha_gamma", self.alpha_gamma)?;
        check_positive("beta_gamma", self.beta_gamma)?;
        check_delta(self.delta)?;
        check_kappa(self.kappa)?;
        if self.n_iterations == 0 || self.n_burnin >= self.n_iterations {
            return Err(Error::InvalidInput(format!(
                "need 0 <= n_burnin < n_iterations, got n_burnin = {}, n_iterations = {}",
                self.n_burnin, self.n_iterations
            )));
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        self.n_iterations - self.n_burnin
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name: "delta",
            value: delta,
            expected: "in [0, 1]",
        })
    }
}

pub(crate) fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa < 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name: "kappa",
            value: kappa,
            expected: "in (0, 1)",
        })
    }
}

fn mean_size(n: &[usize]) -> f64 {
    n.iter().sum::<usize>() as f64 / n.len() as f64
}

/// `n_c^e = n̄^δ · n_c^(1−δ)` with `n̄` the arithmetic mean of `n`.
pub fn effective_sample_sizes(n: &[usize], delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    if n.is_empty() || n.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "sample sizes must be nonempty and >= 1, got {n:?}"
        )));
    }
    let n_bar = mean_size(n);
    Ok(n.iter()
        .map(|&nc| n_bar.powf(delta) * (nc as f64).powf(1.0 - delta))
        .collect())
}

/// Group-specific gamma rates for the squared penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperpriorRates {
    /// `β1 / (n_c^e)²`, one per group.
    pub beta1: Vec<f64>,
    /// `β2 · ((n_c^e + n_c'^e) / (2 n_c^e n_c'^e))²`, one per group pair.
    pub beta2: Vec<f64>,
}

pub fn hyperprior_rates(n_eff: &[f64], beta1: f64, beta2: f64) -> Result<HyperpriorRates> {
    check_positive("beta1", beta1)?;
    check_positive("beta2", beta2)?;
    for &ne in n_eff {
        check_positive("n_eff", ne)?;
    }
    let pairs = PairIndex::new(n_eff.len());
    Ok(HyperpriorRates {
        beta1: n_eff.iter().map(|ne| beta1 / (ne * ne)).collect(),
        beta2: pairs
            .iter()
            .map(|(a, b)| {
                let r = (n_eff[a] + n_eff[b]) / (2.0 * n_eff[a] * n_eff[b]);
                beta2 * r * r
            })
            .collect(),
    })
}

/// Prior means of the squared penalties at one value of δ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorMeans {
    pub delta: f64,
    /// `(α1/β1)(n_c^e)²` per group.
    pub within: Vec<f64>,
    /// `(α2/β2)(2 n_c^e n_c'^e / (n_c^e + n_c'^e))²` per group pair.
    pub cross: Vec<f64>,
}

pub fn prior_mean_curves(
    n: &[usize],
    deltas: &[f64],
    hyper: &Hyperparameters,
) -> Result<Vec<PriorMeans>> {
    if deltas.is_empty() {
        return Err(Error::InvalidInput("empty delta grid".into()));
    }
    deltas
        .iter()
        .map(|&delta| {
            let ne = effective_sample_sizes(n, delta)?;
            let rates = hyperprior_rates(&ne, hyper.beta1, hyper.beta2)?;
            Ok(PriorMeans {
                delta,
                within: rates.beta1.iter().map(|b| hyper.alpha1 / b).collect(),
                cross: rates.beta2.iter().map(|b| hyper.alpha2 / b).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    /// `(λ1^c)²` per group.
    pub lambda1_sq: Vec<f64>,
    /// `(λ2^{cc'})²` per group pair.
    pub lambda2_sq: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentScales {
    /// `tau_sq[c][e]` for group `c`, variable pair `e`.
    pub tau_sq: Vec<Vec<f64>>,
    /// `omega_sq[k][e]` for group pair `k`, variable pair `e`.
    pub omega_sq: Vec<Vec<f64>>,
}

/// Every quantity the Gibbs sampler updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub thetas: Vec<DMatrix<f64>>,
    pub latents: LatentScales,
    pub penalties: PenaltyState,
}

impl ChainState {
    pub fn n_groups(&self) -> usize {
        self.thetas.len()
    }

    pub fn p(&self) -> usize {
        self.thetas[0].nrows()
    }

    /// Diagonal entries `θ_D`, group-major.
    pub fn diagonal(&self) -> Vec<f64> {
        self.thetas
            .iter()
            .flat_map(|t| t.diagonal().iter().copied().collect::<Vec<_>>())
            .collect()
    }

    /// Off-diagonal entries `θ_ND`, ordered by variable pair then group.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let pairs = PairIndex::new(self.p());
        pairs
            .iter()
            .flat_map(|(i, j)| self.thetas.iter().map(move |t| t[(i, j)]))
            .collect()
    }
}
