//! Normalized train/test mean gap and its Edgeworth-corrected CDF.
//!
//! For train size `n` and test size `m` the statistic is
//!
//! ```text
//! T(n, m) = sqrt(n m / (n + m)) * (mean_Q - mean_P - delta_mu)
//! ```
//!
//! whose variance is `V = (n var_Q + m var_P) / (n + m)` and whose third
//! cumulant is `D3 = kappa3_Q a^3 / sqrt(m) - kappa3_P b^3 / sqrt(n)` with
//! `a = sqrt(n / (n + m))`, `b = sqrt(m / (n + m))`. Note that `V` weights the
//! *test* variance by the *train* size `n` and vice versa; that is the exact
//! variance of `T` because the scale factor carries `n m`.

use crate::special::{norm_cdf, norm_pdf};
use crate::stats::{Sample, ShiftScenario};
use crate::{Error, Result};

/// Derived quantities of `T(n, m)` for one scenario and sample-size pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TnmParams {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub v_nm: f64,
    pub delta3_nm: f64,
}

impl TnmParams {
    /// Builds params from a variance and third cumulant directly (sizes unset).
    pub fn from_cumulants(v_nm: f64, delta3_nm: f64) -> Result<Self> {
        if !(v_nm > 0.0 && v_nm.is_finite()) || !delta3_nm.is_finite() {
            return Err(Error::invalid(alloc::format!(
                "V must be positive and finite (V = {v_nm})"
            )));
        }
        Ok(TnmParams {
            n: 0,
            m: 0,
            alpha: core::f64::consts::FRAC_1_SQRT_2,
            beta: core::f64::consts::FRAC_1_SQRT_2,
            v_nm,
            delta3_nm,
        })
    }

    pub fn sd(&self) -> f64 {
        libm::sqrt(self.v_nm)
    }

    /// Standardized skewness `D3 / V^{3/2}`.
    pub fn skewness(&self) -> f64 {
        self.delta3_nm / (self.v_nm * self.sd())
    }
}

pub fn tnm_params(scenario: &ShiftScenario, n: usize, m: usize) -> Result<TnmParams> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("sample sizes n and m must be at least 1"));
    }
    let (nf, mf) = (n as f64, m as f64);
    let total = nf + mf;
    let alpha = libm::sqrt(nf / total);
    let beta = libm::sqrt(mf / total);
    let v_nm = (nf * scenario.var_q() + mf * scenario.var_p()) / total;
    let delta3_nm = scenario.kappa3_q() * alpha * alpha * alpha / libm::sqrt(mf)
        - scenario.kappa3_p() * beta * beta * beta / libm::sqrt(nf);
    Ok(TnmParams {
        n,
        m,
        alpha,
        beta,
        v_nm,
        delta3_nm,
    })
}

/// `sqrt(n m / (n + m))`
pub fn tnm_scale(n: usize, m: usize) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    libm::sqrt(nf * mf / (nf + mf))
}

/// Realized `T(n, m)` from sample means, centred by the true shift.
pub fn tnm_from_means(mean_p: f64, n: usize, mean_q: f64, m: usize, delta_mu: f64) -> f64 {
    tnm_scale(n, m) * (mean_q - mean_p - delta_mu)
}

pub fn tnm_statistic(train: &Sample, test: &Sample, scenario: &ShiftScenario) -> f64 {
    tnm_from_means(
        train.mean(),
        train.len(),
        test.mean(),
        test.len(),
        scenario.delta_mu(),
    )
}

/// The skewness term subtracted from the normal CDF.
pub fn edgeworth_correction(x: f64, params: &TnmParams) -> f64 {
    let sd = params.sd();
    let z = x / sd;
    params.delta3_nm / (6.0 * params.v_nm * sd) * (z * z - 1.0) * norm_pdf(z)
}

/// Third-order Edgeworth approximation of `P(T <= x)`.
///
/// The truncated series is not clamped and can leave `[0, 1]` slightly in the
/// far tails of strongly skewed cases.
pub fn edgeworth_cdf(x: f64, params: &TnmParams) -> f64 {
    norm_cdf(x / params.sd()) - edgeworth_correction(x, params)
}

/// Density obtained by differentiating [`edgeworth_cdf`]; may be negative.
pub fn edgeworth_density(x: f64, params: &TnmParams) -> f64 {
    let sd = params.sd();
    let z = x / sd;
    let he3 = z * z * z - 3.0 * z;
    norm_pdf(z) / sd * (1.0 + params.skewness() / 6.0 * he3)
}

pub fn normal_cdf_baseline(x: f64, params: &TnmParams) -> f64 {
    norm_cdf(x / params.sd())
}
