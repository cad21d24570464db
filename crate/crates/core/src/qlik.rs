//! Variance models and quasi-likelihood evaluation.
//!
//! A variance model ties the variance of a count feature to its mean via
//! `V(mu; phi) = V1(mu) + phi * V2(mu)`. The quasi-log-likelihood of an
//! observation `x` under mean `mu` is the integral of `(x - t) / V(t; phi)`
//! from `x` to `mu`; the quasi-density is its exponential. Built-in models
//! use closed forms; a Gauss-Kronrod quadrature routine evaluates the
//! integral directly and serves as the validation oracle.

use crate::error::{Error, Result};

/// Lower clamp applied to means before quasi-density evaluation. The
/// integrand is singular at mu = 0, and fitted means on sparse features can
/// drift toward zero, so means are floored rather than rejected.
pub const DEFAULT_MU_FLOOR: f64 = 1e-8;

/// Mean-variance law `V(mu; phi) = V1(mu) + phi * V2(mu)`.
///
/// `V1` and `V2` must be smooth (continuously differentiable to third
/// order) with `V2(mu) > 0` for `mu > 0`; custom models are trusted to
/// satisfy this.
#[derive(Clone, Copy, Debug)]
pub enum VarianceModel {
    /// `V1 = 0`, `V2 = mu`: variance proportional to the mean.
    QuasiPoisson,
    /// `V1 = mu`, `V2 = mu^2`: the negative-binomial mean-variance law.
    QuasiNegBinomial,
    /// User-supplied variance components.
    Custom { v1: fn(f64) -> f64, v2: fn(f64) -> f64 },
}

impl VarianceModel {
    /// Variance offset `V1(mu)`.
    pub fn v1(&self, mu: f64) -> f64 {
        match self {
            VarianceModel::QuasiPoisson => 0.0,
            VarianceModel::QuasiNegBinomial => mu,
            VarianceModel::Custom { v1, .. } => v1(mu),
        }
    }

    /// Dispersion multiplier `V2(mu)`.
    pub fn v2(&self, mu: f64) -> f64 {
        match self {
            VarianceModel::QuasiPoisson => mu,
            VarianceModel::QuasiNegBinomial => mu * mu,
            VarianceModel::Custom { v2, .. } => v2(mu),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VarianceModel::QuasiPoisson => "quasi-poisson",
            VarianceModel::QuasiNegBinomial => "quasi-nb",
            VarianceModel::Custom { .. } => "custom",
        }
    }

    /// Parse a model name as used in config files and CLI flags.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "quasi-poisson" | "qp" => Ok(VarianceModel::QuasiPoisson),
            "quasi-nb" | "qnb" => Ok(VarianceModel::QuasiNegBinomial),
            other => Err(Error::Config(format!(
                "unknown variance model '{other}' (expected quasi-poisson or quasi-nb)"
            ))),
        }
    }
}

fn check_mu_phi(mu: f64, phi: f64) -> Result<()> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::Domain(format!("mean must be finite and positive, got {mu}")));
    }
    if !phi.is_finite() || phi <= 0.0 {
        return Err(Error::Domain(format!(
            "dispersion must be finite and positive, got {phi}"
        )));
    }
    Ok(())
}

fn check_x(x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!(
            "observation must be finite and non-negative, got {x}"
        )));
    }
    Ok(())
}

/// `V(mu; phi) = V1(mu) + phi * V2(mu)`, strictly positive.
pub fn variance(model: &VarianceModel, mu: f64, phi: f64) -> Result<f64> {
    check_mu_phi(mu, phi)?;
    let v = model.v1(mu) + phi * model.v2(mu);
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::Domain(format!(
            "variance model produced non-positive variance {v} at mu={mu}, phi={phi}"
        )));
    }
    Ok(v)
}

/// Closed-form quasi-log-likelihood for the built-in models; hot path,
/// assumes arguments already validated. Custom models fall back to
/// quadrature.
#[inline]
pub(crate) fn q_raw(model: &VarianceModel, x: f64, mu: f64, phi: f64) -> f64 {
    match model {
        VarianceModel::QuasiPoisson => {
            if x == 0.0 {
                -mu / phi
            } else {
                (x * (mu / x).ln() - (mu - x)) / phi
            }
        }
        VarianceModel::QuasiNegBinomial => {
            // ln((1 + phi*mu)/(1 + phi*x)) via ln_1p for small phi stability
            let log_ratio = (phi * mu).ln_1p() - (phi * x).ln_1p();
            if x == 0.0 {
                -log_ratio / phi
            } else {
                x * (mu / x).ln() - (x + 1.0 / phi) * log_ratio
            }
        }
        VarianceModel::Custom { .. } => {
            // one rough panel sets the scale for the refinement tolerance
            let integrand = |t: f64| (x - t) / (model.v1(t) + phi * model.v2(t));
            let (rough, _) = gk15(&integrand, x, mu);
            let tol = 1e-12 + 1e-10 * rough.abs();
            quadrature_raw(model, x, mu, phi, tol).unwrap_or(f64::NAN)
        }
    }
}

/// Quasi-log-likelihood `Q(x; mu, phi)`. Zero at `mu = x` (for `x > 0`) and
/// non-positive everywhere.
pub fn quasi_loglik(model: &VarianceModel, x: f64, mu: f64, phi: f64) -> Result<f64> {
    check_x(x)?;
    check_mu_phi(mu, phi)?;
    Ok(q_raw(model, x, mu, phi))
}

/// Quasi-density `exp(Q)`; lies in (0, 1] for `x > 0`. Underflow to zero is
/// permitted; mixture code works in log space.
pub fn quasi_density(model: &VarianceModel, x: f64, mu: f64, phi: f64) -> Result<f64> {
    Ok(quasi_loglik(model, x, mu, phi)?.exp())
}

// 15-point Kronrod extension of 7-point Gauss (QUADPACK dqk15 constants).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One G7-K15 panel on [a, b]: returns (Kronrod estimate, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).abs())
}

fn adaptive_gk<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let (estimate, err) = gk15(f, a, b);
    if !estimate.is_finite() {
        return Err(Error::Domain(
            "quadrature encountered a non-finite integrand value".into(),
        ));
    }
    if err <= tol || (b - a).abs() < 1e-300 {
        return Ok(estimate);
    }
    if depth == 0 {
        return Err(Error::Domain(format!(
            "quadrature failed to converge on [{a}, {b}] (residual error {err:e})"
        )));
    }
    let mid = 0.5 * (a + b);
    let left = adaptive_gk(f, a, mid, 0.5 * tol, depth - 1)?;
    let right = adaptive_gk(f, mid, b, 0.5 * tol, depth - 1)?;
    Ok(left + right)
}

fn quadrature_raw(model: &VarianceModel, x: f64, mu: f64, phi: f64, tol: f64) -> Result<f64> {
    let lo = x.min(mu);
    if lo < 0.0 {
        return Err(Error::Domain(
            "integration path crosses the singularity at t = 0".into(),
        ));
    }
    let integrand = |t: f64| (x - t) / (model.v1(t) + phi * model.v2(t));
    // Gauss-Kronrod nodes are interior, so a t = 0 endpoint (x = 0) is never
    // evaluated and the removable singularity there needs no special casing.
    adaptive_gk(&integrand, x, mu, tol, 48)
}

/// Adaptive numerical integration of `(x - t) / V(t; phi)` from `x` to
/// `mu`, accurate to absolute error `tol`. Validation oracle for the
/// closed forms in [`quasi_loglik`].
pub fn quadrature_oracle(
    model: &VarianceModel,
    x: f64,
    mu: f64,
    phi: f64,
    tol: f64,
) -> Result<f64> {
    check_x(x)?;
    check_mu_phi(mu, phi)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if x == mu {
        return Ok(0.0);
    }
    quadrature_raw(model, x, mu, phi, tol)
}
