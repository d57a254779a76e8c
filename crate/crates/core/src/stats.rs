//! Samples, plug-in moments, population moments and the BN affine map.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Label {
    Train,
    Test,
}

/// Observations of a single BN channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
    label: Label,
}

impl Sample {
    /// Fails on an empty sample or any non-finite value.
    pub fn new(values: Vec<f64>, label: Label) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("sample must contain at least one value"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "sample value at index {i} is not finite"
            )));
        }
        Ok(Sample { values, label })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.values) / self.values.len() as f64
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Sum with a fixed pairwise reduction tree. The result depends only on the
/// order of `xs`, never on how the work was scheduled.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f` applied to each element.
pub fn pairwise_sum_by<F: Fn(f64) -> f64 + Copy>(xs: &[f64], f: F) -> f64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        return xs.iter().map(|&x| f(x)).sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_by(&xs[..mid], f) + pairwise_sum_by(&xs[mid..], f)
}

/// Plug-in moments of one sample. Both central moments use `1/n`
/// normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentSummary {
    pub n: usize,
    pub mean: f64,
    pub var_biased: f64,
    pub third_central: f64,
}

impl MomentSummary {
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("cannot summarize an empty sample"));
        }
        let n = values.len();
        let nf = n as f64;
        let mean = pairwise_sum(values) / nf;
        let var_biased = pairwise_sum_by(values, |x| {
            let d = x - mean;
            d * d
        }) / nf;
        let third_central = pairwise_sum_by(values, |x| {
            let d = x - mean;
            d * d * d
        }) / nf;
        Ok(MomentSummary {
            n,
            mean,
            var_biased: var_biased.max(0.0),
            third_central,
        })
    }
}

pub fn summarize(sample: &Sample) -> MomentSummary {
    // Sample::new guarantees a non-empty, finite sample.
    MomentSummary::from_slice(sample.values()).expect("validated sample")
}

/// Summarizes each channel of row-major `[rows, channels]` data independently.
pub fn summarize_channels(data: &[f64], channels: usize) -> Result<Vec<MomentSummary>> {
    if channels == 0 || data.is_empty() || !data.len().is_multiple_of(channels) {
        return Err(Error::invalid(format!(
            "data of length {} is not a non-empty multiple of {channels} channels",
            data.len()
        )));
    }
    (0..channels)
        .map(|c| {
            let column: Vec<f64> = data.iter().skip(c).step_by(channels).copied().collect();
            MomentSummary::from_slice(&column)
        })
        .collect()
}

/// Population mean, variance and third cumulant of one distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PopulationMoments {
    pub mean: f64,
    pub var: f64,
    pub kappa3: f64,
}

/// Ground-truth parameters of a train (P) / test (Q) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShiftScenario {
    mu_p: f64,
    mu_q: f64,
    var_p: f64,
    var_q: f64,
    kappa3_p: f64,
    kappa3_q: f64,
}

impl ShiftScenario {
    pub fn new(
        mu_p: f64,
        mu_q: f64,
        var_p: f64,
        var_q: f64,
        kappa3_p: f64,
        kappa3_q: f64,
    ) -> Result<Self> {
        let all = [mu_p, mu_q, var_p, var_q, kappa3_p, kappa3_q];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scenario parameters must be finite"));
        }
        if var_p <= 0.0 || var_q <= 0.0 {
            return Err(Error::invalid(format!(
                "scenario variances must be positive (var_p = {var_p}, var_q = {var_q})"
            )));
        }
        Ok(ShiftScenario {
            mu_p,
            mu_q,
            var_p,
            var_q,
            kappa3_p,
            kappa3_q,
        })
    }

    pub fn from_moments(train: PopulationMoments, test: PopulationMoments) -> Result<Self> {
        Self::new(
            train.mean,
            test.mean,
            train.var,
            test.var,
            train.kappa3,
            test.kappa3,
        )
    }

    pub fn from_specs(train: &DistributionSpec, test: &DistributionSpec) -> Result<Self> {
        Self::from_moments(population_moments(train)?, population_moments(test)?)
    }

    pub fn mu_p(&self) -> f64 {
        self.mu_p
    }
    pub fn mu_q(&self) -> f64 {
        self.mu_q
    }
    pub fn var_p(&self) -> f64 {
        self.var_p
    }
    pub fn var_q(&self) -> f64 {
        self.var_q
    }
    pub fn kappa3_p(&self) -> f64 {
        self.kappa3_p
    }
    pub fn kappa3_q(&self) -> f64 {
        self.kappa3_q
    }

    /// `mu_q - mu_p`
    pub fn delta_mu(&self) -> f64 {
        self.mu_q - self.mu_p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BnAffine {
    pub gamma: f64,
    pub beta_shift: f64,
    pub epsilon: f64,
}

impl BnAffine {
    pub fn new(gamma: f64, beta_shift: f64, epsilon: f64) -> Result<Self> {
        let affine = BnAffine {
            gamma,
            beta_shift,
            epsilon,
        };
        affine.validate()?;
        Ok(affine)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.beta_shift.is_finite()) {
            return Err(Error::invalid("BN gamma and beta must be finite"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "BN epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl Default for BnAffine {
    fn default() -> Self {
        BnAffine {
            gamma: 1.0,
            beta_shift: 0.0,
            epsilon: 1e-5,
        }
    }
}

/// `gamma * (z - mu) / sqrt(var + epsilon) + beta`.
#[inline]
pub fn apply_bn(z: f64, mu: f64, var: f64, affine: &BnAffine) -> f64 {
    affine.gamma * (z - mu) / libm::sqrt(var + affine.epsilon) + affine.beta_shift
}

/// Simulation families with closed-form mean, variance and third cumulant.
///
/// `shifted_gamma` and `lognormal_centered` are recentred so that their mean
/// equals `loc`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum DistributionSpec {
    Gaussian {
        mean: f64,
        var: f64,
    },
    ShiftedGamma {
        shape: f64,
        scale: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        loc: f64,
    },
    LognormalCentered {
        /// Standard deviation of the underlying normal.
        log_scale: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        loc: f64,
    },
    TwoPoint {
        low: f64,
        high: f64,
        p_high: f64,
    },
}

impl DistributionSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            DistributionSpec::Gaussian { .. } => "gaussian",
            DistributionSpec::ShiftedGamma { .. } => "shifted_gamma",
            DistributionSpec::LognormalCentered { .. } => "lognormal_centered",
            DistributionSpec::TwoPoint { .. } => "two_point",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match *self {
            DistributionSpec::Gaussian { mean, var } => {
                if !finite(&[mean, var]) || var < 0.0 {
                    return Err(Error::invalid(format!(
                        "gaussian needs finite mean and var >= 0 (var = {var})"
                    )));
                }
            }
            DistributionSpec::ShiftedGamma { shape, scale, loc } => {
                if !finite(&[shape, scale, loc]) || shape <= 0.0 || scale <= 0.0 {
                    return Err(Error::invalid(format!(
                        "shifted_gamma needs shape > 0 and scale > 0 (shape = {shape}, scale = {scale})"
                    )));
                }
            }
            DistributionSpec::LognormalCentered { log_scale, loc } => {
                if !finite(&[log_scale, loc]) || log_scale <= 0.0 {
                    return Err(Error::invalid(format!(
                        "lognormal_centered needs log_scale > 0 (got {log_scale})"
                    )));
                }
            }
            DistributionSpec::TwoPoint { low, high, p_high } => {
                if !finite(&[low, high, p_high]) || !(0.0..=1.0).contains(&p_high) {
                    return Err(Error::invalid(format!(
                        "two_point needs finite support and p_high in [0, 1] (p_high = {p_high})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest absolute value the family can produce, when bounded.
    pub fn abs_bound(&self) -> Option<f64> {
        match *self {
            DistributionSpec::TwoPoint { low, high, .. } => Some(low.abs().max(high.abs())),
            DistributionSpec::Gaussian { mean, var: 0.0 } => Some(mean.abs()),
            _ => None,
        }
    }
}

pub fn population_moments(spec: &DistributionSpec) -> Result<PopulationMoments> {
    spec.validate()?;
    let moments = match *spec {
        DistributionSpec::Gaussian { mean, var } => PopulationMoments {
            mean,
            var,
            kappa3: 0.0,
        },
        // kappa_r = (r - 1)! * k * theta^r; the shift only moves the mean.
        DistributionSpec::ShiftedGamma { shape, scale, loc } => PopulationMoments {
            mean: loc,
            var: shape * scale * scale,
            kappa3: 2.0 * shape * scale * scale * scale,
        },
        DistributionSpec::LognormalCentered { log_scale, loc } => {
            let w = libm::exp(log_scale * log_scale);
            let wm1 = libm::expm1(log_scale * log_scale);
            PopulationMoments {
                mean: loc,
                var: wm1 * w,
                kappa3: (w + 2.0) * wm1 * wm1 * w * libm::sqrt(w),
            }
        }
        DistributionSpec::TwoPoint { low, high, p_high } => {
            let d = high - low;
            let pq = p_high * (1.0 - p_high);
            PopulationMoments {
                mean: low + p_high * d,
                var: pq * d * d,
                kappa3: pq * (1.0 - 2.0 * p_high) * d * d * d,
            }
        }
    };
    Ok(moments)
}
