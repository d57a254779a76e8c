//! One-step M-estimation of the test BN mean.
//!
//! Starting from an initializer (usually the train mean) a single Newton step
//! on the estimating equation `sum_j psi(Y_j, mu) = 0` gives
//!
//! ```text
//! mu_onestep = mu_init - sum_j psi(Y_j, mu_init) / sum_j dpsi/dmu(Y_j, mu_init)
//! ```
//!
//! Derivative summaries follow the sign convention `psi'_0 = -E[dpsi/dmu]`
//! and `psi''_0 = E[d2psi/dmu2]`; the empirical versions replace expectations
//! by test-sample averages.

use crate::stats::{pairwise_sum, Sample};
use crate::{Error, Result};
use alloc::vec::Vec;

/// Estimating functions `psi(y, mu)` with analytic `mu`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum ScoreFunction {
    /// `y - mu`
    Linear,
    /// `(y - mu) [1 - k3 / (6 sigma^3) (y - mu)]`
    SkewCorrected { kappa3_q: f64, sigma_q: f64 },
    /// `clamp(y - mu, -c, c)`; second derivative taken as zero everywhere.
    Huber { threshold: f64 },
    /// `(y - mu) / sqrt(1 + ((y - mu) / c)^2)`, a smooth bounded score.
    PseudoHuber { scale: f64 },
}

impl ScoreFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScoreFunction::Linear => Ok(()),
            ScoreFunction::SkewCorrected { kappa3_q, sigma_q } => {
                if !(sigma_q > 0.0 && sigma_q.is_finite()) || !kappa3_q.is_finite() {
                    return Err(Error::invalid(
                        "skew-corrected score needs sigma_q > 0 and finite kappa3_q",
                    ));
                }
                Ok(())
            }
            ScoreFunction::Huber { threshold: c } | ScoreFunction::PseudoHuber { scale: c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::invalid("robust score threshold must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Skew-corrected score with plug-in moments from the test sample.
    pub fn skew_corrected_from(test: &Sample) -> Result<Self> {
        let summary = crate::stats::summarize(test);
        let score = ScoreFunction::SkewCorrected {
            kappa3_q: summary.third_central,
            sigma_q: libm::sqrt(summary.var_biased),
        };
        score.validate()?;
        Ok(score)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScoreFunction::Linear => "linear",
            ScoreFunction::SkewCorrected { .. } => "skew_corrected",
            ScoreFunction::Huber { .. } => "huber",
            ScoreFunction::PseudoHuber { .. } => "pseudo_huber",
        }
    }

    /// Whether `d2psi/dmu2` exists everywhere.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, ScoreFunction::Huber { .. })
    }

    fn skew_coef(kappa3_q: f64, sigma_q: f64) -> f64 {
        kappa3_q / (6.0 * sigma_q * sigma_q * sigma_q)
    }

    pub fn psi(&self, y: f64, mu: f64) -> f64 {
        let r = y - mu;
        match *self {
            ScoreFunction::Linear => r,
            ScoreFunction::SkewCorrected { kappa3_q, sigma_q } => {
                r * (1.0 - Self::skew_coef(kappa3_q, sigma_q) * r)
            }
            ScoreFunction::Huber { threshold } => r.clamp(-threshold, threshold),
            ScoreFunction::PseudoHuber { scale } => {
                let s = r / scale;
                r / libm::sqrt(1.0 + s * s)
            }
        }
    }

    /// `d psi / d mu`
    pub fn dpsi(&self, y: f64, mu: f64) -> f64 {
        let r = y - mu;
        match *self {
            ScoreFunction::Linear => -1.0,
            ScoreFunction::SkewCorrected { kappa3_q, sigma_q } => {
                -1.0 + 2.0 * Self::skew_coef(kappa3_q, sigma_q) * r
            }
            ScoreFunction::Huber { threshold } => {
                if r.abs() < threshold {
                    -1.0
                } else {
                    0.0
                }
            }
            ScoreFunction::PseudoHuber { scale } => {
                let s = r / scale;
                let q = 1.0 + s * s;
                -1.0 / (q * libm::sqrt(q))
            }
        }
    }

    /// `d^2 psi / d mu^2`
    pub fn d2psi(&self, y: f64, mu: f64) -> f64 {
        let r = y - mu;
        match *self {
            ScoreFunction::Linear | ScoreFunction::Huber { .. } => 0.0,
            ScoreFunction::SkewCorrected { kappa3_q, sigma_q } => {
                -2.0 * Self::skew_coef(kappa3_q, sigma_q)
            }
            ScoreFunction::PseudoHuber { scale } => {
                let s = r / scale;
                let q = 1.0 + s * s;
                -3.0 * s / (scale * q * q * libm::sqrt(q))
            }
        }
    }

    /// Population score summaries at `mu` for a test law with the given mean
    /// and variance. Only defined for the polynomial scores.
    pub fn population_summary(&self, mean_q: f64, var_q: f64, mu: f64) -> Result<PopulationScore> {
        let e = mean_q - mu;
        match *self {
            ScoreFunction::Linear => Ok(PopulationScore {
                mean_psi: e,
                psi_prime0: 1.0,
                psi_second0: 0.0,
            }),
            ScoreFunction::SkewCorrected { kappa3_q, sigma_q } => {
                let c = Self::skew_coef(kappa3_q, sigma_q);
                Ok(PopulationScore {
                    mean_psi: e - c * (var_q + e * e),
                    psi_prime0: 1.0 - 2.0 * c * e,
                    psi_second0: -2.0 * c,
                })
            }
            _ => Err(Error::invalid(alloc::format!(
                "no closed-form population summary for the {} score",
                self.name()
            ))),
        }
    }

    /// Root of `E[psi(Y, mu)] = 0` for a test law with the given mean and
    /// variance. For the skew-corrected score this differs from `mean_q` by
    /// `(1 - sqrt(1 - 4 c^2 var)) / (2c)`, `c = k3 / (6 sigma^3)`.
    pub fn population_root(&self, mean_q: f64, var_q: f64) -> Result<f64> {
        match *self {
            ScoreFunction::Linear => Ok(mean_q),
            ScoreFunction::SkewCorrected { kappa3_q, sigma_q } => {
                let c = Self::skew_coef(kappa3_q, sigma_q);
                if c == 0.0 {
                    return Ok(mean_q);
                }
                let disc = 1.0 - 4.0 * c * c * var_q;
                if disc < 0.0 {
                    return Err(Error::NumericalDomain(alloc::format!(
                        "skew-corrected population equation has no root (1 - 4c^2 var = {disc})"
                    )));
                }
                // e = (1 - sqrt(disc)) / (2c), rationalized
                let e = 2.0 * c * var_q / (1.0 + libm::sqrt(disc));
                Ok(mean_q - e)
            }
            _ => Err(Error::invalid(alloc::format!(
                "no closed-form population root for the {} score",
                self.name()
            ))),
        }
    }
}

/// `E[psi]`, `psi'_0 = -E[dpsi/dmu]` and `psi''_0 = E[d2psi/dmu2]` at one `mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationScore {
    pub mean_psi: f64,
    pub psi_prime0: f64,
    pub psi_second0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpansionCheck {
    pub lhs: f64,
    pub base: f64,
    pub linear_term: f64,
    pub quadratic_term: f64,
    pub remainder: f64,
}

impl ExpansionCheck {
    pub fn rhs(&self) -> f64 {
        self.base + self.linear_term + self.quadratic_term
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OneStepResult {
    pub mu_init: f64,
    pub score_sum: f64,
    pub dscore_sum: f64,
    pub mu_onestep: f64,
    pub expansion_check: Option<ExpansionCheck>,
}

fn sum_over(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mapped: Vec<f64> = values.iter().map(|&y| f(y)).collect();
    pairwise_sum(&mapped)
}

pub fn one_step_update(
    score: &ScoreFunction,
    test: &Sample,
    mu_init: f64,
) -> Result<OneStepResult> {
    score.validate()?;
    if !mu_init.is_finite() {
        return Err(Error::invalid("initializer must be finite"));
    }
    let ys = test.values();
    let score_sum = sum_over(ys, |y| score.psi(y, mu_init));
    let dscore_sum = sum_over(ys, |y| score.dpsi(y, mu_init));
    if dscore_sum.abs() < 1e-12 * ys.len() as f64 {
        return Err(Error::DegenerateDerivative { sum: dscore_sum });
    }
    Ok(OneStepResult {
        mu_init,
        score_sum,
        dscore_sum,
        mu_onestep: mu_init - score_sum / dscore_sum,
        expansion_check: None,
    })
}

/// [`one_step_update`] plus the score expansion between `mu0` and the
/// one-step value.
pub fn one_step_with_check(
    score: &ScoreFunction,
    test: &Sample,
    mu_init: f64,
    mu0: f64,
) -> Result<OneStepResult> {
    let mut result = one_step_update(score, test, mu_init)?;
    result.expansion_check = Some(score_expansion_check(score, test, mu0, result.mu_onestep)?);
    Ok(result)
}

/// Second-order expansion of the mean score around `mu0`, evaluated at `mu`:
/// `mean psi(mu) = mean psi(mu0) - (mu - mu0) psi'_0 + (mu - mu0)^2 psi''_0 / 2 + R`.
pub fn score_expansion_check(
    score: &ScoreFunction,
    test: &Sample,
    mu0: f64,
    mu: f64,
) -> Result<ExpansionCheck> {
    score.validate()?;
    if !score.is_smooth() {
        return Err(Error::invalid(alloc::format!(
            "the {} score is not twice differentiable",
            score.name()
        )));
    }
    let ys = test.values();
    let m = ys.len() as f64;
    let lhs = sum_over(ys, |y| score.psi(y, mu)) / m;
    let base = sum_over(ys, |y| score.psi(y, mu0)) / m;
    let psi_prime0 = -sum_over(ys, |y| score.dpsi(y, mu0)) / m;
    let psi_second0 = sum_over(ys, |y| score.d2psi(y, mu0)) / m;
    let step = mu - mu0;
    let linear_term = -step * psi_prime0;
    let quadratic_term = 0.5 * step * step * psi_second0;
    Ok(ExpansionCheck {
        lhs,
        base,
        linear_term,
        quadratic_term,
        remainder: lhs - (base + linear_term + quadratic_term),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LanTerms {
    pub lambda_m: f64,
    pub z_m: f64,
    pub z_m_star: f64,
    pub eta_hat: f64,
    pub psi_prime0: f64,
    pub psi_second0: f64,
}

impl LanTerms {
    /// Cubic local log-likelihood-ratio expansion at another `h`.
    pub fn lambda_at(&self, h: f64) -> f64 {
        h * self.psi_prime0 * self.z_m - 0.5 * self.psi_prime0 * h * h
            + self.psi_second0 * h * h * h / 6.0
    }
}

/// Empirical local-asymptotic-normality terms at `mu0` for local
/// alternative `mu0 + h / sqrt(m)`.
pub fn lan_terms(score: &ScoreFunction, test: &Sample, mu0: f64, h: f64) -> Result<LanTerms> {
    score.validate()?;
    if !score.is_smooth() {
        return Err(Error::invalid(alloc::format!(
            "the {} score is not twice differentiable",
            score.name()
        )));
    }
    let ys = test.values();
    if ys.len() < 2 {
        return Err(Error::invalid("LAN terms need at least two test values"));
    }
    let m = ys.len() as f64;
    let psis: Vec<f64> = ys.iter().map(|&y| score.psi(y, mu0)).collect();
    let psi_sum = pairwise_sum(&psis);
    let psi_prime0 = -sum_over(ys, |y| score.dpsi(y, mu0)) / m;
    if psi_prime0.abs() < 1e-12 {
        return Err(Error::DegenerateDerivative {
            sum: psi_prime0 * m,
        });
    }
    let psi_second0 = sum_over(ys, |y| score.d2psi(y, mu0)) / m;
    let z_m_star = psi_sum / libm::sqrt(m);
    let z_m = z_m_star / psi_prime0;
    let psi_mean = psi_sum / m;
    let var_psi = sum_over(&psis, |p| (p - psi_mean) * (p - psi_mean)) / m;
    let mut terms = LanTerms {
        lambda_m: 0.0,
        z_m,
        z_m_star,
        eta_hat: var_psi / (psi_prime0 * psi_prime0),
        psi_prime0,
        psi_second0,
    };
    terms.lambda_m = terms.lambda_at(h);
    Ok(terms)
}
