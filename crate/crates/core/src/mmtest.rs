//! Per-feature heterogeneity statistic via fixed-dispersion MM iteration.
//!
//! Each feature is fitted with a K-component quasi-density mixture whose
//! dispersion is frozen at the working estimate. The update cycle is the
//! standard minorize-maximize step for mixtures: responsibilities from the
//! current parameters, then mixture proportions, then component means as
//! responsibility-weighted averages. The statistic is twice the gap between
//! the fitted heterogeneous quasi-log-likelihood and the homogeneous one
//! (all component means equal to the feature mean).

use ndarray::ArrayView2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neighborhood::{working_dispersion, AuxiliarySpace, NeighborIndex};
use crate::qlik::{q_raw, VarianceModel, DEFAULT_MU_FLOOR};
use crate::rng::{stream, PURPOSE_MM};

/// Mass below which a component's mean update is skipped and its previous
/// mean kept, so emptied components never produce 0/0.
const MIN_COMPONENT_MASS: f64 = 1e-12;

/// Screening configuration shared by all features of one run.
#[derive(Clone, Debug)]
pub struct MmConfig {
    /// Number of mixture components K (>= 2); reduced per feature when the
    /// feature has fewer distinct values.
    pub k_components: usize,
    /// Iteration budget per feature.
    pub max_iters: usize,
    /// Early stop once the relative quasi-log-likelihood gain drops below
    /// this tolerance.
    pub rel_tol: f64,
    pub seed: u64,
    pub model: VarianceModel,
    /// Neighborhood exponent: r_n = floor(n^beta).
    pub beta: f64,
    /// Dispersion floor.
    pub m_phi: f64,
    /// Mean floor for quasi-density evaluation.
    pub mu_floor: f64,
}

impl Default for MmConfig {
    fn default() -> Self {
        MmConfig {
            k_components: 2,
            max_iters: 100,
            rel_tol: 1e-8,
            seed: 0,
            model: VarianceModel::QuasiNegBinomial,
            beta: 0.9,
            m_phi: 0.01,
            mu_floor: DEFAULT_MU_FLOOR,
        }
    }
}

impl MmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_components < 2 {
            return Err(Error::Config(format!(
                "k_components must be >= 2, got {}",
                self.k_components
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if self.rel_tol < 0.0 {
            return Err(Error::Config("rel_tol must be non-negative".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.m_phi.is_nan() || self.m_phi <= 0.0 {
            return Err(Error::Config(format!("m_phi must be positive, got {}", self.m_phi)));
        }
        if self.mu_floor.is_nan() || self.mu_floor <= 0.0 {
            return Err(Error::Config(format!(
                "mu_floor must be positive, got {}",
                self.mu_floor
            )));
        }
        Ok(())
    }
}

/// Mixture state for one feature.
#[derive(Clone, Debug)]
pub struct MmFitState {
    /// Mixture proportions, on the simplex.
    pub alpha: Vec<f64>,
    /// Component means, each >= mu_floor.
    pub mu: Vec<f64>,
    /// Responsibilities, row-major n x K; these are the weights that
    /// produced the current `alpha` and `mu`.
    pub resp: Vec<f64>,
    /// Quasi-log-likelihood after initialization and after each update.
    pub loglik_trace: Vec<f64>,
}

/// Per-feature screening outcome.
#[derive(Clone, Debug)]
pub struct FeatureStatistic {
    pub feature_id: String,
    /// 2 * (l1 - l0); may be negative, never clamped.
    pub mm_stat: f64,
    pub phi_hat: f64,
    /// Fitted heterogeneous quasi-log-likelihood.
    pub l1: f64,
    /// Homogeneous quasi-log-likelihood at the feature mean.
    pub l0: f64,
    pub iters_used: usize,
    /// Set for all-zero features, whose statistic is fixed at zero.
    pub degenerate: bool,
}

/// Precomputed per-feature terms so the inner loop avoids repeated
/// logarithms. For the built-in models the quasi-log-likelihood splits into
/// per-spot and per-component parts:
///   quasi-Poisson:  (x ln mu - x ln x - mu + x) / phi
///   quasi-NB:       x ln mu - x ln x - (x + 1/phi)(ln1p(phi mu) - ln1p(phi x))
struct FeatureEval<'a> {
    x: &'a [f64],
    model: &'a VarianceModel,
    phi: f64,
    inv_phi: f64,
    /// x * ln x per spot (0 at x = 0).
    x_ln_x: Vec<f64>,
    /// ln1p(phi * x) per spot (quasi-NB only).
    ln1p_x: Vec<f64>,
}

impl<'a> FeatureEval<'a> {
    fn new(x: &'a [f64], phi: f64, model: &'a VarianceModel) -> Self {
        let x_ln_x = x
            .iter()
            .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
            .collect();
        let ln1p_x = match model {
            VarianceModel::QuasiNegBinomial => {
                x.iter().map(|&v| (phi * v).ln_1p()).collect()
            }
            _ => Vec::new(),
        };
        FeatureEval {
            x,
            model,
            phi,
            inv_phi: 1.0 / phi,
            x_ln_x,
            ln1p_x,
        }
    }

    /// Per-component caches reused across all spots of one pass.
    fn component_cache(&self, mu: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ln_mu: Vec<f64> = mu.iter().map(|&m| m.ln()).collect();
        let ln1p_mu: Vec<f64> = match self.model {
            VarianceModel::QuasiNegBinomial => {
                mu.iter().map(|&m| (self.phi * m).ln_1p()).collect()
            }
            _ => Vec::new(),
        };
        (ln_mu, ln1p_mu)
    }

    #[inline]
    fn q(&self, i: usize, k: usize, mu: &[f64], ln_mu: &[f64], ln1p_mu: &[f64]) -> f64 {
        match self.model {
            VarianceModel::QuasiPoisson => {
                (self.x[i] * ln_mu[k] - self.x_ln_x[i] - mu[k] + self.x[i]) * self.inv_phi
            }
            VarianceModel::QuasiNegBinomial => {
                self.x[i] * ln_mu[k] - self.x_ln_x[i]
                    - (self.x[i] + self.inv_phi) * (ln1p_mu[k] - self.ln1p_x[i])
            }
            VarianceModel::Custom { .. } => q_raw(self.model, self.x[i], mu[k], self.phi),
        }
    }

    /// One log-space pass: quasi-log-likelihood of the mixture, and the
    /// responsibility matrix if requested.
    fn pass(&self, alpha: &[f64], mu: &[f64], mut resp: Option<&mut [f64]>) -> f64 {
        let k_n = alpha.len();
        let (ln_mu, ln1p_mu) = self.component_cache(mu);
        let ln_alpha: Vec<f64> = alpha.iter().map(|&a| a.ln()).collect();
        let mut logw = vec![0.0f64; k_n];
        let mut total = 0.0;
        for i in 0..self.x.len() {
            let mut max = f64::NEG_INFINITY;
            for k in 0..k_n {
                let lw = ln_alpha[k] + self.q(i, k, mu, &ln_mu, &ln1p_mu);
                logw[k] = lw;
                if lw > max {
                    max = lw;
                }
            }
            // log-sum-exp; max is finite whenever some alpha_k > 0
            let mut sum = 0.0;
            for lw in logw.iter() {
                sum += (lw - max).exp();
            }
            let lse = max + sum.ln();
            total += lse;
            if let Some(r) = resp.as_deref_mut() {
                for k in 0..k_n {
                    r[i * k_n + k] = (logw[k] - lse).exp();
                }
            }
        }
        total
    }
}

/// Type-7 empirical quantile (linear interpolation of order statistics).
fn type7_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Initial mixture parameters: uniform proportions and jittered quantile
/// means. When the feature has fewer than `k` distinct clamped values, the
/// effective component count drops to that number.
pub fn init_params(
    x: &[f64],
    k: usize,
    rng: &mut ChaCha8Rng,
    mu_floor: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut sorted: Vec<f64> = x.iter().map(|&v| v.max(mu_floor)).collect();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = 1usize;
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            distinct += 1;
        }
    }
    let k_eff = k.min(distinct).max(1);

    let mut mu = Vec::with_capacity(k_eff);
    for j in 1..=k_eff {
        let p = (j as f64 - 0.5) / k_eff as f64;
        let base = type7_quantile(&sorted, p);
        let mut attempt = 0u32;
        loop {
            let u: f64 = rng.random_range(-0.05..=0.05);
            let mut cand = (base * (1.0 + u)).max(mu_floor);
            if attempt >= 64 {
                // deterministic nudge after persistent collisions
                cand = cand * (1.0 + (attempt - 63) as f64 * 1e-9) + mu_floor;
            }
            if !mu.contains(&cand) {
                mu.push(cand);
                break;
            }
            attempt += 1;
        }
    }
    let alpha = vec![1.0 / k_eff as f64; k_eff];
    (alpha, mu)
}

impl MmFitState {
    /// Build the state at the initial parameters: responsibilities and the
    /// first trace entry are evaluated immediately.
    fn init(eval: &FeatureEval<'_>, alpha: Vec<f64>, mu: Vec<f64>) -> Self {
        let mut resp = vec![0.0; eval.x.len() * alpha.len()];
        let l = eval.pass(&alpha, &mu, Some(&mut resp));
        MmFitState {
            alpha,
            mu,
            resp,
            loglik_trace: vec![l],
        }
    }

    pub fn k_effective(&self) -> usize {
        self.alpha.len()
    }
}

/// One MM update: responsibilities from the current parameters, then
/// proportions, then means; the quasi-log-likelihood at the new parameters
/// is appended to the trace.
pub fn mm_update(
    state: &mut MmFitState,
    x: &[f64],
    phi_hat: f64,
    model: &VarianceModel,
    mu_floor: f64,
) -> Result<()> {
    let eval = FeatureEval::new(x, phi_hat, model);
    mm_update_with(state, &eval, mu_floor)
}

fn mm_update_with(state: &mut MmFitState, eval: &FeatureEval<'_>, mu_floor: f64) -> Result<()> {
    let k_n = state.alpha.len();
    let n = eval.x.len();

    eval.pass(&state.alpha, &state.mu, Some(&mut state.resp));

    let mut mass = vec![0.0f64; k_n];
    let mut weighted = vec![0.0f64; k_n];
    for i in 0..n {
        for k in 0..k_n {
            let w = state.resp[i * k_n + k];
            mass[k] += w;
            weighted[k] += w * eval.x[i];
        }
    }
    for k in 0..k_n {
        state.alpha[k] = mass[k] / n as f64;
        if mass[k] >= MIN_COMPONENT_MASS {
            state.mu[k] = (weighted[k] / mass[k]).max(mu_floor);
        }
    }

    let l = eval.pass(&state.alpha, &state.mu, None);
    if !l.is_finite() {
        return Err(Error::Numerical {
            feature: String::new(),
            message: format!("quasi-log-likelihood became non-finite ({l})"),
        });
    }
    state.loglik_trace.push(l);
    Ok(())
}

fn attach_feature(err: Error, id: &str) -> Error {
    match err {
        Error::Numerical { message, .. } => Error::Numerical {
            feature: id.to_string(),
            message,
        },
        other => other,
    }
}

fn degenerate_statistic(id: &str, m_phi: f64) -> FeatureStatistic {
    FeatureStatistic {
        feature_id: id.to_string(),
        mm_stat: 0.0,
        phi_hat: m_phi,
        l1: 0.0,
        l0: 0.0,
        iters_used: 0,
        degenerate: true,
    }
}

pub(crate) fn column_statistic(
    x: &[f64],
    nbr: &NeighborIndex,
    cfg: &MmConfig,
    purpose: u64,
    index: u64,
    id: &str,
) -> Result<FeatureStatistic> {
    if x.iter().all(|&v| v == 0.0) {
        return Ok(degenerate_statistic(id, cfg.m_phi));
    }
    let disp = working_dispersion(x, nbr, &cfg.model, cfg.m_phi, cfg.mu_floor)
        .map_err(|e| attach_feature(e, id))?;
    let eval = FeatureEval::new(x, disp.phi_hat, &cfg.model);

    let mut rng = stream(cfg.seed, purpose, index);
    let (alpha0, mu0) = init_params(x, cfg.k_components, &mut rng, cfg.mu_floor);
    let mut state = MmFitState::init(&eval, alpha0, mu0);

    for _ in 0..cfg.max_iters {
        mm_update_with(&mut state, &eval, cfg.mu_floor).map_err(|e| attach_feature(e, id))?;
        let m = state.loglik_trace.len();
        let prev = state.loglik_trace[m - 2];
        let gain = state.loglik_trace[m - 1] - prev;
        if gain.abs() <= cfg.rel_tol * prev.abs().max(1.0) {
            break;
        }
    }

    let l1 = *state.loglik_trace.last().unwrap();
    let n = x.len() as f64;
    let xbar = (x.iter().sum::<f64>() / n).max(cfg.mu_floor);
    let l0 = eval.pass(&[1.0], &[xbar], None);
    let mm_stat = 2.0 * (l1 - l0);
    if !mm_stat.is_finite() {
        return Err(Error::Numerical {
            feature: id.to_string(),
            message: format!("statistic is non-finite (l1={l1}, l0={l0})"),
        });
    }
    Ok(FeatureStatistic {
        feature_id: id.to_string(),
        mm_stat,
        phi_hat: disp.phi_hat,
        l1,
        l0,
        iters_used: state.loglik_trace.len() - 1,
        degenerate: false,
    })
}

/// Fit one feature and return its statistic. The quasi-log-likelihood trace
/// lives only inside the call; use [`mm_update`] directly to inspect it.
pub fn mm_statistic(x: &[f64], nbr: &NeighborIndex, cfg: &MmConfig) -> Result<FeatureStatistic> {
    cfg.validate()?;
    if x.len() != nbr.n_spots() {
        return Err(Error::Config(format!(
            "feature length {} does not match spot count {}",
            x.len(),
            nbr.n_spots()
        )));
    }
    column_statistic(x, nbr, cfg, PURPOSE_MM, 0, "0")
}

/// Screen every column of `values` (n x m) in parallel. Each column owns an
/// isolated RNG stream keyed by `(seed, purpose, column)`, so results do not
/// depend on thread count or execution order.
pub(crate) fn statistics_for_columns(
    values: ArrayView2<'_, f64>,
    ids: &[String],
    nbr: &NeighborIndex,
    cfg: &MmConfig,
    purpose: u64,
) -> Result<Vec<FeatureStatistic>> {
    (0..values.ncols())
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = values.column(j).iter().copied().collect();
            column_statistic(&col, nbr, cfg, purpose, j as u64, &ids[j])
        })
        .collect()
}

/// Screen all features of an expression matrix against an auxiliary space.
pub fn screen_all(
    x: &crate::io::ExpressionMatrix,
    space: &AuxiliarySpace,
    cfg: &MmConfig,
) -> Result<Vec<FeatureStatistic>> {
    cfg.validate()?;
    if x.n_genes() == 0 {
        return Err(Error::Config("expression matrix has no features".into()));
    }
    if space.n_spots() != x.n_spots() {
        return Err(Error::Config(format!(
            "auxiliary space has {} spots but matrix has {}",
            space.n_spots(),
            x.n_spots()
        )));
    }
    let nbr = crate::neighborhood::build_neighbors(space, cfg.beta)?;
    statistics_for_columns(x.values.view(), &x.gene_ids, &nbr, cfg, PURPOSE_MM)
}
