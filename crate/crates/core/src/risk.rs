//! Excess-risk bound for a BN layer whose mean is the optimally blended
//! train/test estimate.
//!
//! With probability at least `1 - delta` the excess risk is at most
//!
//! ```text
//! L |gamma| / sqrt(var_P_hat + eps) * { r (|dmu| + t_P) + (1 - r) t_Q
//!     + [ r |k3_P| / n^{3/2} + (1 - r) |k3_Q| / m^{3/2} ] / (6 V^{3/2}) }
//! ```
//!
//! where `r = A / V`, `A = var_Q/m - (k3_P/n^{3/2} + k3_Q/m^{3/2}) / 2` and
//! `V = dmu^2 + var_P/n + var_Q/m`. `t_P` and `t_Q` are Bernstein radii.
//! The ratio `r` is used as is; it is not clamped to `[0, 1]`.

use crate::stats::{apply_bn, BnAffine, ShiftScenario};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RiskBoundConfig {
    /// Almost-sure bound on `|X|` and `|Y|`.
    pub bound_b: f64,
    pub lipschitz_l: f64,
    pub affine: BnAffine,
    pub delta: f64,
    /// Train variance estimate used in the prefactor.
    pub var_p_hat: f64,
}

impl RiskBoundConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bound_b > 0.0 && self.bound_b.is_finite()) {
            return Err(Error::invalid("bound_b must be positive"));
        }
        if !(self.lipschitz_l > 0.0 && self.lipschitz_l.is_finite()) {
            return Err(Error::invalid("lipschitz_l must be positive"));
        }
        check_delta(self.delta)?;
        if !(self.var_p_hat >= 0.0 && self.var_p_hat.is_finite()) {
            return Err(Error::invalid("var_p_hat must be nonnegative"));
        }
        self.affine.validate()
    }

    /// `L |gamma| / sqrt(var_p_hat + eps)`
    pub fn prefactor(&self) -> f64 {
        self.lipschitz_l * self.affine.gamma.abs()
            / libm::sqrt(self.var_p_hat + self.affine.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RiskBoundReport {
    pub a_term: f64,
    pub v_term: f64,
    pub t_p: f64,
    pub t_q: f64,
    pub lambda_eff: f64,
    /// False when `A / V` falls outside `[0, 1]`.
    pub lambda_eff_in_range: bool,
    pub term_bias_var: f64,
    pub term_test_conc: f64,
    pub term_skew: f64,
    pub prefactor: f64,
    pub total_excess: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(alloc::format!(
            "confidence delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(())
}

/// Bernstein radius `sqrt(2 s2 ln(4/delta) / count) + 2 B ln(4/delta) / (3 count)`.
pub fn concentration_radius(sigma2: f64, count: usize, bound_b: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if count == 0 {
        return Err(Error::invalid("concentration radius needs count >= 1"));
    }
    if sigma2 < 0.0 {
        return Err(Error::invalid("variance must be nonnegative"));
    }
    let log_term = libm::log(4.0 / delta);
    let c = count as f64;
    Ok(libm::sqrt(2.0 * sigma2 * log_term / c) + 2.0 * bound_b * log_term / (3.0 * c))
}

pub fn bound_terms(
    scenario: &ShiftScenario,
    n: usize,
    m: usize,
    config: &RiskBoundConfig,
) -> Result<RiskBoundReport> {
    config.validate()?;
    if n == 0 || m == 0 {
        return Err(Error::invalid("sample sizes n and m must be at least 1"));
    }
    let (nf, mf) = (n as f64, m as f64);
    let n32 = nf * libm::sqrt(nf);
    let m32 = mf * libm::sqrt(mf);
    let dmu = scenario.delta_mu();

    let a_term =
        scenario.var_q() / mf - 0.5 * (scenario.kappa3_p() / n32 + scenario.kappa3_q() / m32);
    let v_term = dmu * dmu + scenario.var_p() / nf + scenario.var_q() / mf;
    if v_term <= 0.0 {
        return Err(Error::ZeroDenominator("risk bound (V)"));
    }
    let t_p = concentration_radius(scenario.var_p(), n, config.bound_b, config.delta)?;
    let t_q = concentration_radius(scenario.var_q(), m, config.bound_b, config.delta)?;

    let lambda_eff = a_term / v_term;
    let term_bias_var = lambda_eff * (dmu.abs() + t_p);
    let term_test_conc = (1.0 - lambda_eff) * t_q;
    let term_skew = (lambda_eff * scenario.kappa3_p().abs() / n32
        + (1.0 - lambda_eff) * scenario.kappa3_q().abs() / m32)
        / (6.0 * v_term * libm::sqrt(v_term));
    let prefactor = config.prefactor();

    Ok(RiskBoundReport {
        a_term,
        v_term,
        t_p,
        t_q,
        lambda_eff,
        lambda_eff_in_range: (0.0..=1.0).contains(&lambda_eff),
        term_bias_var,
        term_test_conc,
        term_skew,
        prefactor,
        total_excess: prefactor * (term_bias_var + term_test_conc + term_skew),
    })
}

/// Average of `L |BN(z; mu_adapted) - BN(z; mu_true)|` over `z_grid`, both
/// maps sharing the normalizing variance `var`.
pub fn risk_proxy_excess(
    mu_adapted: f64,
    mu_true: f64,
    var: f64,
    affine: &BnAffine,
    lipschitz_l: f64,
    z_grid: &[f64],
) -> f64 {
    if z_grid.is_empty() {
        return 0.0;
    }
    let total: f64 = z_grid
        .iter()
        .map(|&z| (apply_bn(z, mu_adapted, var, affine) - apply_bn(z, mu_true, var, affine)).abs())
        .sum();
    lipschitz_l * total / z_grid.len() as f64
}
