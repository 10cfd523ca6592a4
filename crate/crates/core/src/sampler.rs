//! Gibbs sampler for the joint shrinkage model.
//!
//! Conditional on latent scales, the off-diagonal entries of all `C`
//! precision matrices are Gaussian: for each variable pair `(i, j)` the
//! vector `(θ_ij^1, …, θ_ij^C)` has precision
//!
//! ```text
//! Q[c, c]  = 1/τ²_ij^c + Σ_{c' ≠ c} 1/ω²_ij^{cc'}
//! Q[c, c'] = −1/ω²_ij^{cc'}
//! ```
//!
//! Mixing `τ² ~ Exp(λ1²/2)` and `ω² ~ Exp(λ2²/2)` recovers the Laplace
//! penalties `λ1|θ_ij^c|` and `λ2|θ_ij^c − θ_ij^{c'}|`. The full conditionals
//! are then
//!
//! ```text
//! 1/τ²   ~ InvGaussian(λ1 / |θ_ij^c|, λ1²)
//! 1/ω²   ~ InvGaussian(λ2 / |θ_ij^c − θ_ij^{c'}|, λ2²)
//! λ1²    ~ Gamma(α1 + p(p−1)/2, β1^c + Σ τ²/2)
//! λ2²    ~ Gamma(α2 + p(p−1)/2, β2^{cc'} + Σ ω²/2)
//! γ      ~ Gamma(α_γ + Cp, β_γ + Σ θ_ii)
//! ```
//!
//! Columns of each `Θ_c` are drawn block-wise: with `u = θ_{−i,i}` and
//! `v = θ_ii − uᵀ Θ_{−i,−i}⁻¹ u`,
//!
//! ```text
//! v ~ Gamma(n_c/2 + 1, (s_ii + 2γ)/2)
//! u ~ N(P⁻¹ b, P⁻¹),  P = (s_ii + 2γ) Θ_{−i,−i}⁻¹ + diag(Q_ij[c, c]),
//!                     b = m − s_{−i,i},  m_j = Σ_{c'≠c} θ_ij^{c'} / ω²_ij^{cc'}
//! ```
//!
//! so `Θ_c` stays positive definite whenever `v > 0`. The covariance
//! `Σ_c = Θ_c⁻¹` is carried through the column loop by rank-one updates and
//! refreshed from a fresh Cholesky factor after every group, which doubles as
//! the positive-definiteness check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{
    sample_gamma, sample_inverse_gaussian, sample_mvn_canonical, RngHandle,
};
use crate::error::{Error, Result};
use crate::linalg::CholeskyFactor;
use crate::model::{
    check_kappa, effective_sample_sizes, hyperprior_rates, ChainState, Hyperparameters,
    HyperpriorRates, LatentScales, PairIndex, PanDataset, PenaltyState,
};

/// Floor applied to `|θ_ij|` and `|θ_ij − θ_ij'|` before they enter a
/// reciprocal-scale mean.
pub const ABS_FLOOR: f64 = 1e-12;

/// The model conditioned on (possibly empty) data: sufficient statistics,
/// group-specific hyperprior rates and the fusion switch.
#[derive(Debug, Clone)]
pub struct NexusModel {
    p: usize,
    scatter: Vec<DMatrix<f64>>,
    n_obs: Vec<f64>,
    rates: HyperpriorRates,
    hyper: Hyperparameters,
    fused: bool,
}

impl NexusModel {
    pub fn new(data: &PanDataset, hyper: &Hyperparameters) -> Result<Self> {
        hyper.validate()?;
        let sizes = data.sample_sizes();
        let rates = rates_for(&sizes, hyper)?;
        Ok(Self {
            p: data.p(),
            scatter: (0..data.n_groups()).map(|c| data.scatter(c)).collect(),
            n_obs: sizes.iter().map(|&n| n as f64).collect(),
            rates,
            fused: !hyper.independent_mode && data.n_groups() > 1,
            hyper: hyper.clone(),
        })
    }

    /// The model with the likelihood switched off. `sample_sizes` only feed
    /// the hyperprior rates.
    pub fn prior_only(sample_sizes: &[usize], p: usize, hyper: &Hyperparameters) -> Result<Self> {
        hyper.validate()?;
        if p < 2 {
            return Err(Error::InvalidInput(format!("need p >= 2, got {p}")));
        }
        let rates = rates_for(sample_sizes, hyper)?;
        Ok(Self {
            p,
            scatter: vec![DMatrix::zeros(p, p); sample_sizes.len()],
            n_obs: vec![0.0; sample_sizes.len()],
            rates,
            fused: !hyper.independent_mode && sample_sizes.len() > 1,
            hyper: hyper.clone(),
        })
    }

    /// Model for group `c` alone, keeping its rate from the full group set.
    fn single_group(&self, c: usize) -> Self {
        Self {
            p: self.p,
            scatter: vec![self.scatter[c].clone()],
            n_obs: vec![self.n_obs[c]],
            rates: HyperpriorRates {
                beta1: vec![self.rates.beta1[c]],
                beta2: Vec::new(),
            },
            hyper: self.hyper.clone(),
            fused: false,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_groups(&self) -> usize {
        self.scatter.len()
    }

    pub fn is_fused(&self) -> bool {
        self.fused
    }

    pub fn rates(&self) -> &HyperpriorRates {
        &self.rates
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    fn edges(&self) -> PairIndex {
        PairIndex::new(self.p)
    }

    fn group_pairs(&self) -> PairIndex {
        PairIndex::new(self.n_groups())
    }

    /// Identity precisions, unit latent scales, penalties at their prior means.
    pub fn initial_state(&self) -> ChainState {
        let m = self.edges().len();
        let h = &self.hyper;
        let n_pairs = if self.fused {
            self.group_pairs().len()
        } else {
            0
        };
        ChainState {
            thetas: vec![DMatrix::identity(self.p, self.p); self.n_groups()],
            latents: LatentScales {
                tau_sq: vec![vec![1.0; m]; self.n_groups()],
                omega_sq: vec![vec![1.0; m]; n_pairs],
            },
            penalties: PenaltyState {
                lambda1_sq: self.rates.beta1.iter().map(|b| h.alpha1 / b).collect(),
                lambda2_sq: self.rates.beta2[..n_pairs]
                    .iter()
                    .map(|b| h.alpha2 / b)
                    .collect(),
                gamma: h.alpha_gamma / h.beta_gamma,
            },
        }
    }

    /// Draws `(u, v)` for column `i` of group `c` given `Θ_{−i,−i}⁻¹`.
    fn draw_column(
        &self,
        state: &ChainState,
        c: usize,
        i: usize,
        theta11_inv: &DMatrix<f64>,
        rng: &mut RngHandle,
    ) -> Result<ColumnDraw> {
        let edges = self.edges();
        let groups = self.group_pairs();
        let s = &self.scatter[c];
        let scale = s[(i, i)] + 2.0 * state.penalties.gamma;
        let k = self.p - 1;

        let mut precision = theta11_inv * scale;
        let mut linear = DVector::<f64>::zeros(k);
        for (r, j) in (0..self.p).filter(|&j| j != i).enumerate() {
            let e = edges.index(i, j);
            let mut diag = 1.0 / state.latents.tau_sq[c][e];
            let mut pull = 0.0;
            if self.fused {
                for (c2, theta2) in state.thetas.iter().enumerate() {
                    if c2 == c {
                        continue;
                    }
                    let w = 1.0 / state.latents.omega_sq[groups.index(c, c2)][e];
                    diag += w;
                    pull += w * theta2[(i, j)];
                }
            }
            precision[(r, r)] += diag;
            linear[r] = pull - s[(j, i)];
        }

        let u = sample_mvn_canonical(rng, &linear, &precision)?;
        let v = sample_gamma(rng, 0.5 * self.n_obs[c] + 1.0, 0.5 * scale)?;
        let theta11_inv_u = theta11_inv * &u;
        Ok(ColumnDraw {
            u,
            v,
            theta11_inv_u,
        })
    }

    /// Replaces column/row `i` of `Θ_c` with a draw from its full conditional.
    ///
    /// This entry point factorizes `Θ_{−i,−i}` from scratch; the sweep uses a
    /// cached inverse instead.
    pub fn update_theta_column(
        &self,
        state: &mut ChainState,
        c: usize,
        i: usize,
        rng: &mut RngHandle,
    ) -> Result<()> {
        let theta = &state.thetas[c];
        let others: Vec<usize> = (0..self.p).filter(|&j| j != i).collect();
        let sub = theta.select_rows(&others).select_columns(&others);
        let inv = CholeskyFactor::new(&sub)?.inverse();
        let draw = self.draw_column(state, c, i, &inv, rng)?;
        draw.apply(&mut state.thetas[c], i);
        Ok(())
    }

    /// Updates every column of `Θ_c`, keeping `sigma = Θ_c⁻¹` current.
    /// Returns the smallest Cholesky pivot of the updated `Θ_c`.
    fn update_theta_group(
        &self,
        state: &mut ChainState,
        sigma: &mut DMatrix<f64>,
        c: usize,
        rng: &mut RngHandle,
    ) -> Result<f64> {
        let p = self.p;
        for i in 0..p {
            let others: Vec<usize> = (0..p).filter(|&j| j != i).collect();
            let sii = sigma[(i, i)];
            let mut inv = DMatrix::<f64>::zeros(p - 1, p - 1);
            for (r, &a) in others.iter().enumerate() {
                for (q, &b) in others.iter().enumerate() {
                    inv[(r, q)] = sigma[(a, b)] - sigma[(a, i)] * sigma[(b, i)] / sii;
                }
            }
            let draw = self.draw_column(state, c, i, &inv, rng)?;
            draw.apply(&mut state.thetas[c], i);

            // Block inverse with Schur complement v.
            let w = &draw.theta11_inv_u;
            for (r, &a) in others.iter().enumerate() {
                for (q, &b) in others.iter().enumerate() {
                    sigma[(a, b)] = inv[(r, q)] + w[r] * w[q] / draw.v;
                }
                sigma[(a, i)] = -w[r] / draw.v;
                sigma[(i, a)] = -w[r] / draw.v;
            }
            sigma[(i, i)] = 1.0 / draw.v;
        }
        debug_assert!(crate::linalg::is_symmetric(&state.thetas[c], 0.0));
        let factor = CholeskyFactor::new(&state.thetas[c])?;
        *sigma = factor.inverse();
        Ok(factor.min_pivot())
    }

    pub fn update_tau_sq(&self, state: &mut ChainState, rng: &mut RngHandle) -> Result<()> {
        let edges = self.edges();
        for c in 0..self.n_groups() {
            let lambda_sq = state.penalties.lambda1_sq[c];
            let lambda = lambda_sq.sqrt();
            let theta = &state.thetas[c];
            for (e, (i, j)) in edges.iter().enumerate() {
                let a = theta[(i, j)].abs().max(ABS_FLOOR);
                let inv = sample_inverse_gaussian(rng, lambda / a, lambda_sq)?;
                state.latents.tau_sq[c][e] = 1.0 / inv;
            }
        }
        Ok(())
    }

    /// No-op unless the model is fused.
    pub fn update_omega_sq(&self, state: &mut ChainState, rng: &mut RngHandle) -> Result<()> {
        if !self.fused {
            return Ok(());
        }
        let edges = self.edges();
        for (k, (c1, c2)) in self.group_pairs().iter().enumerate() {
            let lambda_sq = state.penalties.lambda2_sq[k];
            let lambda = lambda_sq.sqrt();
            for (e, (i, j)) in edges.iter().enumerate() {
                let d = (state.thetas[c1][(i, j)] - state.thetas[c2][(i, j)])
                    .abs()
                    .max(ABS_FLOOR);
                let inv = sample_inverse_gaussian(rng, lambda / d, lambda_sq)?;
                state.latents.omega_sq[k][e] = 1.0 / inv;
            }
        }
        Ok(())
    }

    pub fn update_lambda1_sq(&self, state: &mut ChainState, rng: &mut RngHandle) -> Result<()> {
        let m = self.edges().len() as f64;
        for c in 0..self.n_groups() {
            let tau_sum: f64 = state.latents.tau_sq[c].iter().sum();
            state.penalties.lambda1_sq[c] = sample_gamma(
                rng,
                self.hyper.alpha1 + m,
                self.rates.beta1[c] + 0.5 * tau_sum,
            )?;
        }
        Ok(())
    }

    /// No-op unless the model is fused.
    pub fn update_lambda2_sq(&self, state: &mut ChainState, rng: &mut RngHandle) -> Result<()> {
        if !self.fused {
            return Ok(());
        }
        let m = self.edges().len() as f64;
        for k in 0..self.group_pairs().len() {
            let omega_sum: f64 = state.latents.omega_sq[k].iter().sum();
            state.penalties.lambda2_sq[k] = sample_gamma(
                rng,
                self.hyper.alpha2 + m,
                self.rates.beta2[k] + 0.5 * omega_sum,
            )?;
        }
        Ok(())
    }

    pub fn update_gamma(&self, state: &mut ChainState, rng: &mut RngHandle) -> Result<()> {
        let (shape, rate) = self.gamma_conditional(state);
        state.penalties.gamma = sample_gamma(rng, shape, rate)?;
        Ok(())
    }

    /// Shape and rate of the full conditional of `γ`.
    pub fn gamma_conditional(&self, state: &ChainState) -> (f64, f64) {
        let diag_sum: f64 = state.thetas.iter().map(|t| t.trace()).sum();
        (
            self.hyper.alpha_gamma + (self.n_groups() * self.p) as f64,
            self.hyper.beta_gamma + diag_sum,
        )
    }

    /// Log of the joint density of `(Θ, λ1², λ2², γ)` with latent scales
    /// integrated out, up to an additive constant. `-∞` off the
    /// positive-definite cone.
    pub fn log_unnormalized_posterior(&self, state: &ChainState) -> f64 {
        let h = &self.hyper;
        let edges = self.edges();
        let mut total = 0.0;
        for (c, theta) in state.thetas.iter().enumerate() {
            let Ok(factor) = CholeskyFactor::new(theta) else {
                return f64::NEG_INFINITY;
            };
            let trace_s_theta = self.scatter[c].component_mul(theta).sum();
            total += 0.5 * self.n_obs[c] * factor.log_det() - 0.5 * trace_s_theta;

            let lambda = state.penalties.lambda1_sq[c].sqrt();
            for (i, j) in edges.iter() {
                total += (0.5 * lambda).ln() - lambda * theta[(i, j)].abs();
            }
            let gamma = state.penalties.gamma;
            total += self.p as f64 * gamma.ln() - gamma * theta.trace();
            total += log_gamma_kernel(state.penalties.lambda1_sq[c], h.alpha1, self.rates.beta1[c]);
        }
        if self.fused {
            for (k, (c1, c2)) in self.group_pairs().iter().enumerate() {
                let lambda = state.penalties.lambda2_sq[k].sqrt();
                for (i, j) in edges.iter() {
                    let d = state.thetas[c1][(i, j)] - state.thetas[c2][(i, j)];
                    total += (0.5 * lambda).ln() - lambda * d.abs();
                }
                total +=
                    log_gamma_kernel(state.penalties.lambda2_sq[k], h.alpha2, self.rates.beta2[k]);
            }
        }
        total + log_gamma_kernel(state.penalties.gamma, h.alpha_gamma, h.beta_gamma)
    }
}

fn log_gamma_kernel(x: f64, shape: f64, rate: f64) -> f64 {
    (shape - 1.0) * x.ln() - rate * x
}

fn rates_for(sizes: &[usize], hyper: &Hyperparameters) -> Result<HyperpriorRates> {
    let n_eff = effective_sample_sizes(sizes, hyper.delta)?;
    hyperprior_rates(&n_eff, hyper.beta1, hyper.beta2)
}

struct ColumnDraw {
    u: DVector<f64>,
    v: f64,
    theta11_inv_u: DVector<f64>,
}

impl ColumnDraw {
    fn apply(&self, theta: &mut DMatrix<f64>, i: usize) {
        let p = theta.nrows();
        for (r, j) in (0..p).filter(|&j| j != i).enumerate() {
            theta[(i, j)] = self.u[r];
            theta[(j, i)] = self.u[r];
        }
        theta[(i, i)] = self.v + self.u.dot(&self.theta11_inv_u);
    }
}

/// One running chain: model, current state and cached covariances.
pub struct GibbsChain<'m> {
    model: &'m NexusModel,
    state: ChainState,
    sigmas: Vec<DMatrix<f64>>,
    iteration: usize,
}

impl<'m> GibbsChain<'m> {
    pub fn new(model: &'m NexusModel) -> Self {
        Self::from_state(model, model.initial_state()).expect("identity start is positive definite")
    }

    pub fn from_state(model: &'m NexusModel, state: ChainState) -> Result<Self> {
        let sigmas = state
            .thetas
            .iter()
            .map(|t| CholeskyFactor::new(t).map(|f| f.inverse()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            state,
            sigmas,
            iteration: 0,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One full sweep in the fixed order: Θ columns (group by group),
    /// τ², ω², λ1², λ2², γ. Returns the smallest Cholesky pivot over the
    /// updated precision matrices.
    pub fn sweep(&mut self, rng: &mut RngHandle) -> Result<f64> {
        let model = self.model;
        let iteration = self.iteration;
        let fail = |group: usize| {
            move |e: Error| Error::SamplerFailure {
                iteration,
                group,
                source: Box::new(e),
            }
        };
        let mut min_pivot = f64::INFINITY;
        for c in 0..model.n_groups() {
            let pivot = model
                .update_theta_group(&mut self.state, &mut self.sigmas[c], c, rng)
                .map_err(fail(c))?;
            min_pivot = min_pivot.min(pivot);
        }
        model.update_tau_sq(&mut self.state, rng).map_err(fail(0))?;
        model
            .update_omega_sq(&mut self.state, rng)
            .map_err(fail(0))?;
        model
            .update_lambda1_sq(&mut self.state, rng)
            .map_err(fail(0))?;
        model
            .update_lambda2_sq(&mut self.state, rng)
            .map_err(fail(0))?;
        model.update_gamma(&mut self.state, rng).map_err(fail(0))?;
        self.iteration += 1;
        Ok(min_pivot)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceOptions {
    /// Keep every retained `Θ` draw (memory grows with the iteration count).
    pub keep_thetas: bool,
    /// Extra thresholds at which exceedance counts are tracked, on top of
    /// `hyper.kappa` and the default grid 0.01, 0.02, …, 0.99.
    pub extra_kappas: Vec<f64>,
}

pub fn default_kappa_grid(kappa: f64, extra: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = (1..100).map(|k| k as f64 / 100.0).collect();
    grid.push(kappa);
    grid.extend_from_slice(extra);
    grid.retain(|k| *k > 0.0 && *k < 1.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Post-burn-in summary of a chain.
///
/// Edge statistics are group-major flat arrays: entry `c * m + e` for group
/// `c` and variable pair `e` (lexicographic `i < j`), `m = p(p−1)/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub p: usize,
    pub n_groups: usize,
    pub independent_mode: bool,
    pub n_retained: usize,
    /// Sorted thresholds with tracked exceedance counts.
    pub kappa_grid: Vec<f64>,
    /// `hist[(c * m + e) * (K + 1) + b]`: draws whose `|ρ|` exceeds exactly
    /// `b` grid values.
    pub exceedance_hist: Vec<u32>,
    pub partial_corr_sum: Vec<f64>,
    pub abs_partial_corr_sum: Vec<f64>,
    /// `Σ Θ_c` over retained draws, group-major, column-major within group.
    pub theta_sum: Vec<f64>,
    /// `[iteration][c]`.
    pub lambda1_sq_draws: Vec<Vec<f64>>,
    /// `[iteration][group pair]`; empty in independent mode.
    pub lambda2_sq_draws: Vec<Vec<f64>>,
    /// `[iteration][k]`: one `γ` in joint mode, one per group in independent mode.
    pub gamma_draws: Vec<Vec<f64>>,
    pub theta_draws: Option<Vec<Vec<DMatrix<f64>>>>,
    /// Smallest Cholesky pivot seen across retained draws.
    pub min_cholesky_pivot: f64,
}

impl ChainTrace {
    fn empty(
        p: usize,
        n_groups: usize,
        independent: bool,
        kappa_grid: Vec<f64>,
        keep: bool,
    ) -> Self {
        let m = PairIndex::new(p).len();
        let bins = kappa_grid.len() + 1;
        Self {
            p,
            n_groups,
            independent_mode: independent,
            n_retained: 0,
            kappa_grid,
            exceedance_hist: vec![0; n_groups * m * bins],
            partial_corr_sum: vec![0.0; n_groups * m],
            abs_partial_corr_sum: vec![0.0; n_groups * m],
            theta_sum: vec![0.0; n_groups * p * p],
            lambda1_sq_draws: Vec::new(),
            lambda2_sq_draws: Vec::new(),
            gamma_draws: Vec::new(),
            theta_draws: keep.then(Vec::new),
            min_cholesky_pivot: f64::INFINITY,
        }
    }

    pub fn n_edges(&self) -> usize {
        PairIndex::new(self.p).len()
    }

    fn record(&mut self, state: &ChainState, min_pivot: f64) {
        let m = self.n_edges();
        let bins = self.kappa_grid.len() + 1;
        let edges = PairIndex::new(self.p);
        for (c, theta) in state.thetas.iter().enumerate() {
            for (e, (i, j)) in edges.iter().enumerate() {
                let rho = -theta[(i, j)] / (theta[(i, i)] * theta[(j, j)]).sqrt();
                let a = rho.abs();
                let b = self.kappa_grid.partition_point(|&k| k < a);
                self.exceedance_hist[(c * m + e) * bins + b] += 1;
                self.partial_corr_sum[c * m + e] += rho;
                self.abs_partial_corr_sum[c * m + e] += a;
            }
            let offset = c * self.p * self.p;
            for (slot, v) in self.theta_sum[offset..offset + self.p * self.p]
                .iter_mut()
                .zip(theta.iter())
            {
                *slot += v;
            }
        }
        self.lambda1_sq_draws
            .push(state.penalties.lambda1_sq.clone());
        if !self.independent_mode {
            self.lambda2_sq_draws
                .push(state.penalties.lambda2_sq.clone());
        }
        self.gamma_draws.push(vec![state.penalties.gamma]);
        if let Some(draws) = self.theta_draws.as_mut() {
            draws.push(state.thetas.clone());
        }
        self.min_cholesky_pivot = self.min_cholesky_pivot.min(min_pivot);
        self.n_retained += 1;
    }

    /// Concatenates single-group traces of the same length along the group axis.
    fn merge_groups(parts: Vec<ChainTrace>) -> Self {
        let first = &parts[0];
        let mut out = ChainTrace::empty(
            first.p,
            parts.len(),
            true,
            first.kappa_grid.clone(),
            first.theta_draws.is_some(),
        );
        out.n_retained = first.n_retained;
        out.exceedance_hist = parts
            .iter()
            .flat_map(|t| t.exceedance_hist.iter().copied())
            .collect();
        out.partial_corr_sum = parts
            .iter()
            .flat_map(|t| t.partial_corr_sum.iter().copied())
            .collect();
        out.abs_partial_corr_sum = parts
            .iter()
            .flat_map(|t| t.abs_partial_corr_sum.iter().copied())
            .collect();
        out.theta_sum = parts
            .iter()
            .flat_map(|t| t.theta_sum.iter().copied())
            .collect();
        for it in 0..out.n_retained {
            out.lambda1_sq_draws
                .push(parts.iter().map(|t| t.lambda1_sq_draws[it][0]).collect());
            out.gamma_draws
                .push(parts.iter().map(|t| t.gamma_draws[it][0]).collect());
            if let Some(draws) = out.theta_draws.as_mut() {
                draws.push(
                    parts
                        .iter()
                        .map(|t| t.theta_draws.as_ref().unwrap()[it][0].clone())
                        .collect(),
                );
            }
        }
        out.min_cholesky_pivot = parts
            .iter()
            .map(|t| t.min_cholesky_pivot)
            .fold(f64::INFINITY, f64::min);
        out
    }

    /// Per-group counts of retained draws with `|ρ_e| > kappa`.
    ///
    /// Exact for thresholds on the tracked grid; other thresholds need the
    /// full `Θ` draws.
    pub fn exceedance_counts(&self, kappa: f64) -> Result<Vec<Vec<u64>>> {
        check_kappa(kappa)?;
        let m = self.n_edges();
        if let Some(k) = self
            .kappa_grid
            .iter()
            .position(|&g| (g - kappa).abs() < 1e-12)
        {
            let bins = self.kappa_grid.len() + 1;
            return Ok((0..self.n_groups)
                .map(|c| {
                    (0..m)
                        .map(|e| {
                            let h =
                                &self.exceedance_hist[(c * m + e) * bins..(c * m + e + 1) * bins];
                            h[k + 1..].iter().map(|&x| x as u64).sum()
                        })
                        .collect()
                })
                .collect());
        }
        let Some(draws) = self.theta_draws.as_ref() else {
            return Err(Error::Unsupported(format!(
                "threshold {kappa} was not tracked and the trace holds no full draws"
            )));
        };
        let edges = PairIndex::new(self.p);
        let mut counts = vec![vec![0u64; m]; self.n_groups];
        for thetas in draws {
            for (c, theta) in thetas.iter().enumerate() {
                for (e, (i, j)) in edges.iter().enumerate() {
                    let rho = -theta[(i, j)] / (theta[(i, i)] * theta[(j, j)]).sqrt();
                    if rho.abs() > kappa {
                        counts[c][e] += 1;
                    }
                }
            }
        }
        Ok(counts)
    }

    fn per_group_mean(&self, sums: &[f64]) -> Vec<Vec<f64>> {
        let n = self.n_retained.max(1) as f64;
        sums.chunks(self.n_edges())
            .map(|g| g.iter().map(|s| s / n).collect())
            .collect()
    }

    pub fn posterior_mean_partial_correlations(&self) -> Vec<Vec<f64>> {
        self.per_group_mean(&self.partial_corr_sum)
    }

    pub fn posterior_mean_abs_partial_correlations(&self) -> Vec<Vec<f64>> {
        self.per_group_mean(&self.abs_partial_corr_sum)
    }

    pub fn posterior_mean_thetas(&self) -> Vec<DMatrix<f64>> {
        let n = self.n_retained.max(1) as f64;
        self.theta_sum
            .chunks(self.p * self.p)
            .map(|g| DMatrix::from_column_slice(self.p, self.p, g) / n)
            .collect()
    }
}

/// Runs a chain with default trace options.
pub fn run_chain(
    data: &PanDataset,
    hyper: &Hyperparameters,
    rng: &mut RngHandle,
) -> Result<ChainTrace> {
    run_chain_with(data, hyper, rng, &TraceOptions::default())
}

/// Runs `n_iterations` sweeps and records the last `n_iterations − n_burnin`.
///
/// In independent mode each group runs as its own single-group chain on
/// stream `rng.split(c)` with its own `γ`, so group `c`'s trace depends only
/// on group `c`'s data (and on the group sizes through the hyperprior rates).
pub fn run_chain_with(
    data: &PanDataset,
    hyper: &Hyperparameters,
    rng: &mut RngHandle,
    options: &TraceOptions,
) -> Result<ChainTrace> {
    let model = NexusModel::new(data, hyper)?;
    run_model(&model, rng, options)
}

pub fn run_model(
    model: &NexusModel,
    rng: &mut RngHandle,
    options: &TraceOptions,
) -> Result<ChainTrace> {
    let hyper = model.hyper();
    if hyper.independent_mode {
        let parts = (0..model.n_groups())
            .map(|c| {
                let single = model.single_group(c);
                let mut stream = rng.split(c as u64);
                sample(&single, &mut stream, options).map_err(|e| match e {
                    Error::SamplerFailure {
                        iteration, source, ..
                    } => Error::SamplerFailure {
                        iteration,
                        group: c,
                        source,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChainTrace::merge_groups(parts))
    } else {
        sample(model, rng, options)
    }
}

fn sample(model: &NexusModel, rng: &mut RngHandle, options: &TraceOptions) -> Result<ChainTrace> {
    let hyper = model.hyper();
    let grid = default_kappa_grid(hyper.kappa, &options.extra_kappas);
    let mut trace = ChainTrace::empty(
        model.p(),
        model.n_groups(),
        hyper.independent_mode,
        grid,
        options.keep_thetas,
    );
    let mut chain = GibbsChain::new(model);
    for it in 0..hyper.n_iterations {
        let pivot = chain.sweep(rng)?;
        if it >= hyper.n_burnin {
            trace.record(chain.state(), pivot);
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    fn toy_data(seed: u64, sizes: &[usize], p: usize) -> PanDataset {
        let mut rng = RngHandle::new(seed);
        let groups = sizes
            .iter()
            .enumerate()
            .map(|(c, &n)| {
                let x = DMatrix::from_fn(n, p, |_, _| rng.standard_normal());
                (format!("g{c}"), x)
            })
            .collect();
        PanDataset::new(groups, (0..p).map(|j| format!("v{j}")).collect(), false).unwrap()
    }

    fn short(hyper: &mut Hyperparameters, iters: usize, burn: usize) {
        hyper.n_iterations = iters;
        hyper.n_burnin = burn;
    }

    #[test]
    fn chain_is_deterministic() {
        let data = toy_data(1, &[30, 30], 3);
        let mut hyper = Hyperparameters::for_sample_sizes(&[30, 30]);
        short(&mut hyper, 2000, 500);
        let a = run_chain(&data, &hyper, &mut RngHandle::new(11)).unwrap();
        let b = run_chain(&data, &hyper, &mut RngHandle::new(11)).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&data, &hyper, &mut RngHandle::new(12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn precision_matrices_stay_positive_definite() {
        let data = toy_data(2, &[10, 25, 60], 5);
        let mut hyper = Hyperparameters::for_sample_sizes(&[10, 25, 60]);
        short(&mut hyper, 300, 0);
        let model = NexusModel::new(&data, &hyper).unwrap();
        let mut chain = GibbsChain::new(&model);
        let mut rng = RngHandle::new(3);
        for _ in 0..300 {
            let pivot = chain.sweep(&mut rng).unwrap();
            assert!(pivot > 0.0);
            for t in &chain.state().thetas {
                assert!(crate::linalg::is_symmetric(t, 0.0));
                assert!(min_eigenvalue(t) > 0.0);
            }
        }
    }

    #[test]
    fn single_column_update_keeps_positive_definite() {
        let data = toy_data(4, &[40, 20], 4);
        let hyper = Hyperparameters::for_sample_sizes(&[40, 20]);
        let model = NexusModel::new(&data, &hyper).unwrap();
        let mut state = model.initial_state();
        let mut rng = RngHandle::new(5);
        for round in 0..50 {
            for c in 0..2 {
                model
                    .update_theta_column(&mut state, c, round % 4, &mut rng)
                    .unwrap();
                assert!(min_eigenvalue(&state.thetas[c]) > 0.0);
            }
        }
    }

    #[test]
    fn cached_and_direct_column_updates_agree() {
        let data = toy_data(6, &[25, 35], 4);
        let hyper = Hyperparameters::for_sample_sizes(&[25, 35]);
        let model = NexusModel::new(&data, &hyper).unwrap();
        let mut warm = GibbsChain::new(&model);
        let mut rng = RngHandle::new(1);
        for _ in 0..20 {
            warm.sweep(&mut rng).unwrap();
        }
        let start = warm.state().clone();

        let mut direct = start.clone();
        let mut r1 = RngHandle::new(99);
        for i in 0..4 {
            model
                .update_theta_column(&mut direct, 0, i, &mut r1)
                .unwrap();
        }
        let mut cached = start.clone();
        let mut sigma = CholeskyFactor::new(&cached.thetas[0]).unwrap().inverse();
        let mut r2 = RngHandle::new(99);
        model
            .update_theta_group(&mut cached, &mut sigma, 0, &mut r2)
            .unwrap();
        assert!((&direct.thetas[0] - &cached.thetas[0]).abs().max() < 1e-9);
    }

    #[test]
    fn initial_state_matches_prior_means() {
        let hyper = Hyperparameters::for_sample_sizes(&[20, 40, 60]);
        let model = NexusModel::prior_only(&[20, 40, 60], 4, &hyper).unwrap();
        let s = model.initial_state();
        assert_eq!(s.thetas[0], DMatrix::identity(4, 4));
        assert_eq!(s.latents.tau_sq.len(), 3);
        assert_eq!(s.latents.omega_sq.len(), 3);
        for (l, b) in s.penalties.lambda1_sq.iter().zip(&model.rates().beta1) {
            assert!((l - hyper.alpha1 / b).abs() < 1e-12);
        }
        assert_eq!(s.penalties.gamma, 1.0);
    }

    #[test]
    fn gamma_conditional_with_unit_diagonal() {
        let mut hyper = Hyperparameters::for_sample_sizes(&[20, 40]);
        hyper.alpha_gamma = 2.0;
        hyper.beta_gamma = 3.0;
        let model = NexusModel::prior_only(&[20, 40], 5, &hyper).unwrap();
        let state = model.initial_state();
        let (shape, rate) = model.gamma_conditional(&state);
        assert_eq!(shape, 2.0 + 10.0);
        assert_eq!(rate, 3.0 + 10.0);
    }

    #[test]
    fn strong_shrinkage_gives_large_reciprocal_scales() {
        let hyper = Hyperparameters::for_sample_sizes(&[20]);
        let model = NexusModel::prior_only(&[20], 3, &hyper).unwrap();
        let mut state = model.initial_state();
        state.penalties.lambda1_sq = vec![1e4];
        state.thetas[0][(0, 1)] = 1e-6;
        state.thetas[0][(1, 0)] = 1e-6;
        let mut rng = RngHandle::new(8);
        let mut sum = 0.0;
        for _ in 0..200 {
            model.update_tau_sq(&mut state, &mut rng).unwrap();
            sum += 1.0 / state.latents.tau_sq[0][0];
        }
        // E[1/τ²] = λ1/|θ| = 1e8
        assert!(sum / 200.0 > 1e7);
    }

    #[test]
    fn floor_handles_exact_zeros() {
        let hyper = Hyperparameters::for_sample_sizes(&[20, 20]);
        let model = NexusModel::prior_only(&[20, 20], 3, &hyper).unwrap();
        let mut state = model.initial_state();
        let mut rng = RngHandle::new(9);
        model.update_tau_sq(&mut state, &mut rng).unwrap();
        model.update_omega_sq(&mut state, &mut rng).unwrap();
        assert!(state.latents.tau_sq[0]
            .iter()
            .all(|t| *t > 0.0 && t.is_finite()));
        assert!(state.latents.omega_sq[0]
            .iter()
            .all(|t| *t > 0.0 && t.is_finite()));
    }

    #[test]
    fn updates_are_deterministic() {
        let data = toy_data(10, &[20, 30], 3);
        let hyper = Hyperparameters::for_sample_sizes(&[20, 30]);
        let model = NexusModel::new(&data, &hyper).unwrap();
        let mut chain = GibbsChain::new(&model);
        let mut rng = RngHandle::new(2);
        for _ in 0..5 {
            chain.sweep(&mut rng).unwrap();
        }
        let base = chain.state().clone();
        type Step = fn(&NexusModel, &mut ChainState, &mut RngHandle) -> Result<()>;
        let steps: [Step; 5] = [
            NexusModel::update_tau_sq,
            NexusModel::update_omega_sq,
            NexusModel::update_lambda1_sq,
            NexusModel::update_lambda2_sq,
            NexusModel::update_gamma,
        ];
        for step in steps {
            let mut a = base.clone();
            let mut b = base.clone();
            step(&model, &mut a, &mut RngHandle::new(77)).unwrap();
            step(&model, &mut b, &mut RngHandle::new(77)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, base);
        }
    }

    #[test]
    fn independent_mode_leaves_cross_terms_alone() {
        let data = toy_data(11, &[20, 30], 3);
        let mut hyper = Hyperparameters::for_sample_sizes(&[20, 30]);
        hyper.independent_mode = true;
        short(&mut hyper, 200, 50);
        let model = NexusModel::new(&data, &hyper).unwrap();
        assert!(!model.is_fused());
        let mut state = model.initial_state();
        assert!(state.latents.omega_sq.is_empty());
        let before = state.clone();
        let mut rng = RngHandle::new(1);
        model.update_omega_sq(&mut state, &mut rng).unwrap();
        model.update_lambda2_sq(&mut state, &mut rng).unwrap();
        assert_eq!(state, before);
        let trace = run_chain(&data, &hyper, &mut RngHandle::new(1)).unwrap();
        assert!(trace.lambda2_sq_draws.is_empty());
        assert_eq!(trace.gamma_draws[0].len(), 2);
    }

    #[test]
    fn independent_group_matches_single_group_run() {
        let x = toy_data(12, &[30], 3);
        let both = PanDataset::new(
            vec![
                ("a".into(), x.groups()[0].data.clone()),
                ("b".into(), x.groups()[0].data.clone()),
            ],
            x.variable_names().to_vec(),
            false,
        )
        .unwrap();
        let mut hyper = Hyperparameters::for_sample_sizes(&[30, 30]);
        hyper.independent_mode = true;
        short(&mut hyper, 1500, 500);
        let root = RngHandle::new(21);
        let joint = run_chain(&both, &hyper, &mut root.clone()).unwrap();

        let mut single_hyper = hyper.clone();
        single_hyper.independent_mode = false;
        let single = run_chain(&x, &single_hyper, &mut root.split(0)).unwrap();

        let m = joint.n_edges();
        assert_eq!(joint.partial_corr_sum[..m], single.partial_corr_sum[..]);
        assert_eq!(
            joint.abs_partial_corr_sum[..m],
            single.abs_partial_corr_sum[..]
        );
        let bins = joint.kappa_grid.len() + 1;
        assert_eq!(
            joint.exceedance_hist[..m * bins],
            single.exceedance_hist[..]
        );
        for (a, b) in joint.lambda1_sq_draws.iter().zip(&single.lambda1_sq_draws) {
            assert_eq!(a[0], b[0]);
        }
        for (a, b) in joint.gamma_draws.iter().zip(&single.gamma_draws) {
            assert_eq!(a[0], b[0]);
        }
    }

    #[test]
    fn exceedance_counts_are_bounded_and_monotone() {
        let data = toy_data(13, &[30, 50], 4);
        let mut hyper = Hyperparameters::for_sample_sizes(&[30, 50]);
        short(&mut hyper, 600, 100);
        let trace = run_chain_with(
            &data,
            &hyper,
            &mut RngHandle::new(2),
            &TraceOptions {
                keep_thetas: true,
                extra_kappas: vec![],
            },
        )
        .unwrap();
        assert_eq!(trace.n_retained, 500);
        let mut prev: Option<Vec<Vec<u64>>> = None;
        for &k in &trace.kappa_grid.clone() {
            let counts = trace.exceedance_counts(k).unwrap();
            assert!(counts
                .iter()
                .flatten()
                .all(|&x| x as usize <= trace.n_retained));
            if let Some(p) = &prev {
                for (a, b) in counts.iter().flatten().zip(p.iter().flatten()) {
                    assert!(a <= b);
                }
            }
            prev = Some(counts);
        }
        // off-grid thresholds fall back to the stored draws
        assert_eq!(trace.exceedance_counts(0.123).unwrap().len(), 2);
        let on_grid = trace.exceedance_counts(0.05).unwrap();
        let mut no_grid = trace.clone();
        no_grid.exceedance_hist.clear();
        no_grid.kappa_grid.clear();
        assert_eq!(no_grid.exceedance_counts(0.05).unwrap(), on_grid);
    }

    #[test]
    fn untracked_threshold_without_draws_is_unsupported() {
        let data = toy_data(14, &[20], 3);
        let mut hyper = Hyperparameters::for_sample_sizes(&[20]);
        short(&mut hyper, 50, 10);
        let trace = run_chain(&data, &hyper, &mut RngHandle::new(1)).unwrap();
        assert!(matches!(
            trace.exceedance_counts(0.123),
            Err(Error::Unsupported(_))
        ));
        assert!(trace.exceedance_counts(1.5).is_err());
    }

    #[test]
    fn larger_penalty_lowers_density_of_denser_state() {
        let data = toy_data(15, &[20, 30], 3);
        let hyper = Hyperparameters::for_sample_sizes(&[20, 30]);
        let model = NexusModel::new(&data, &hyper).unwrap();
        let mut sparse = model.initial_state();
        sparse.thetas[0][(0, 1)] = 0.05;
        sparse.thetas[0][(1, 0)] = 0.05;
        let mut dense = sparse.clone();
        dense.thetas[0][(0, 1)] = 0.4;
        dense.thetas[0][(1, 0)] = 0.4;
        let lp = |s: &ChainState| model.log_unnormalized_posterior(s);
        assert!(lp(&sparse).is_finite() && lp(&dense).is_finite());
        let mut sparse_hi = sparse.clone();
        let mut dense_hi = dense.clone();
        sparse_hi.penalties.lambda1_sq[0] *= 4.0;
        dense_hi.penalties.lambda1_sq[0] *= 4.0;
        // raising λ1 costs more for the state with larger Σ|θ_ij|
        let d_sparse = lp(&sparse_hi) - lp(&sparse);
        let d_dense = lp(&dense_hi) - lp(&dense);
        assert!(d_dense < d_sparse);
        let mut indefinite = sparse.clone();
        indefinite.thetas[0][(0, 1)] = 2.0;
        indefinite.thetas[0][(1, 0)] = 2.0;
        assert_eq!(lp(&indefinite), f64::NEG_INFINITY);
    }
}
