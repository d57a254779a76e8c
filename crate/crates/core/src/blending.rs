//! Convex blending of train and test BN means and the MSE-optimal weight.
//!
//! The adapted mean is `mu(lambda) = lambda * mean_P + (1 - lambda) * mean_Q`.
//! Its approximate mean squared error around `mu_Q` is
//!
//! ```text
//! E(lambda) = lambda^2 dmu^2 + lambda^2 var_P / n + (1 - lambda)^2 var_Q / m
//!           + | lambda k3_P / n^{3/2} - (1 - lambda) k3_Q / m^{3/2} |
//! ```
//!
//! and the closed-form weight minimizes the branch where the absolute value's
//! argument is nonnegative. A common simplification of `E` drops the `lambda^2`
//! on the train-variance term; [`ObjectiveForm::AsDisplayed`] evaluates that
//! variant for comparison, but the closed form only minimizes
//! [`ObjectiveForm::Consistent`].

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BlendInputs {
    pub delta_mu: f64,
    pub var_p_hat: f64,
    pub var_q_hat: f64,
    pub kappa3_p: f64,
    pub kappa3_q: f64,
    pub n: usize,
    pub m: usize,
}

impl BlendInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::invalid("blend sizes n and m must be at least 1"));
        }
        let vals = [
            self.delta_mu,
            self.var_p_hat,
            self.var_q_hat,
            self.kappa3_p,
            self.kappa3_q,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("blend inputs must be finite"));
        }
        if self.var_p_hat < 0.0 || self.var_q_hat < 0.0 {
            return Err(Error::invalid("blend variances must be nonnegative"));
        }
        Ok(())
    }

    fn train_skew(&self) -> f64 {
        let n = self.n as f64;
        self.kappa3_p / (n * libm::sqrt(n))
    }

    fn test_skew(&self) -> f64 {
        let m = self.m as f64;
        self.kappa3_q / (m * libm::sqrt(m))
    }

    fn train_var(&self) -> f64 {
        self.var_p_hat / self.n as f64
    }

    fn test_var(&self) -> f64 {
        self.var_q_hat / self.m as f64
    }

    /// `dmu^2 + var_P / n + var_Q / m`
    pub fn denominator(&self) -> f64 {
        self.delta_mu * self.delta_mu + self.train_var() + self.test_var()
    }

    /// Argument of the absolute value in the skewness term.
    pub fn skew_gap(&self, lambda: f64) -> f64 {
        lambda * self.train_skew() - (1.0 - lambda) * self.test_skew()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ObjectiveForm {
    /// `lambda^2 var_P / n`, the form the closed-form weight differentiates.
    #[default]
    Consistent,
    /// Constant `var_P / n`, as in the simplified display.
    AsDisplayed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlendResult {
    /// Closed-form stationary point, unclamped.
    pub lambda_raw: f64,
    /// Minimizer over `[0, 1]`.
    pub lambda_star: f64,
    /// Consistent-form objective at `lambda_star`.
    pub objective_at_star: f64,
    /// Whether the skewness term's argument is nonnegative at the clamped
    /// closed-form weight.
    pub sign_condition_met: bool,
}

/// `lambda * mu_p_hat + (1 - lambda) * mu_q_hat`
pub fn blend_mean(lambda: f64, mu_p_hat: f64, mu_q_hat: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(alloc::format!(
            "blend weight must lie in [0, 1], got {lambda}"
        )));
    }
    Ok(lambda * mu_p_hat + (1.0 - lambda) * mu_q_hat)
}

/// Objective in the simplified display form (constant train-variance term).
pub fn mse_objective(lambda: f64, inputs: &BlendInputs) -> f64 {
    mse_objective_with(lambda, inputs, ObjectiveForm::AsDisplayed)
}

pub fn mse_objective_with(lambda: f64, inputs: &BlendInputs, form: ObjectiveForm) -> f64 {
    let bias = lambda * lambda * inputs.delta_mu * inputs.delta_mu;
    let train = match form {
        ObjectiveForm::Consistent => lambda * lambda * inputs.train_var(),
        ObjectiveForm::AsDisplayed => inputs.train_var(),
    };
    let one_minus = 1.0 - lambda;
    let test = one_minus * one_minus * inputs.test_var();
    bias + train + test + inputs.skew_gap(lambda).abs()
}

pub fn optimal_lambda(inputs: &BlendInputs) -> Result<BlendResult> {
    inputs.validate()?;
    let denom = inputs.denominator();
    if denom <= 0.0 {
        return Err(Error::ZeroDenominator(
            "optimal blend weight (dmu^2 + var_P/n + var_Q/m)",
        ));
    }
    let skew_sum = inputs.train_skew() + inputs.test_skew();
    let lambda_raw = (inputs.test_var() - 0.5 * skew_sum) / denom;
    let clamped = lambda_raw.clamp(0.0, 1.0);
    let sign_condition_met = inputs.skew_gap(clamped) >= 0.0;

    let objective = |l: f64| mse_objective_with(l, inputs, ObjectiveForm::Consistent);
    let lambda_star = if sign_condition_met {
        clamped
    } else {
        // The objective is convex and piecewise quadratic with one kink, so
        // the minimizer is a boundary, the kink, or a branch stationary point.
        let negative_branch = (inputs.test_var() + 0.5 * skew_sum) / denom;
        let mut candidates = [0.0, 1.0, clamped, negative_branch.clamp(0.0, 1.0), 0.0];
        let mut count = 4;
        if skew_sum != 0.0 {
            candidates[4] = (inputs.test_skew() / skew_sum).clamp(0.0, 1.0);
            count = 5;
        }
        candidates[..count]
            .iter()
            .copied()
            .fold((f64::NAN, f64::INFINITY), |(best, best_val), l| {
                let val = objective(l);
                if val < best_val {
                    (l, val)
                } else {
                    (best, best_val)
                }
            })
            .0
    };

    Ok(BlendResult {
        lambda_raw,
        lambda_star,
        objective_at_star: objective(lambda_star),
        sign_condition_met,
    })
}
