//! Saddlepoint density and Lugannani-Rice tail for the truncated CGF
//! `K(t) = v t^2 / 2 + d3 t^3 / 6`.
//!
//! The saddlepoint equation `K'(t) = v t + d3 t^2 / 2 = x` is a quadratic. Its
//! Gaussian-limit root is taken in the rationalized form
//! `t = 2x / (v + sqrt(v^2 + 2 d3 x))`, which has no cancellation for small
//! `d3 x` and gives `K''(t) = sqrt(v^2 + 2 d3 x)` directly. Real roots with
//! positive curvature exist only for `v^2 + 2 d3 x > 0`.
//!
//! On that branch `t x - K(t) = t^2 (v + 2 d3 t / 3) / 2`, so
//! `w = t sqrt(v + 2 d3 t / 3)` and `u = t sqrt(K''(t))`, and the
//! Lugannani-Rice correction `1/u - 1/w` reduces to
//! `-(d3 / 3) / (sqrt(a) sqrt(b) (sqrt(a) + sqrt(b)))` with
//! `a = v + 2 d3 t / 3`, `b = K''(t)`; the removable singularity at `x = 0`
//! never has to be evaluated as a difference of reciprocals, and the tail is
//! continuous through `x = 0` without a separate limit branch.

use crate::edgeworth::TnmParams;
use crate::special::{norm_pdf, norm_sf, sqrt_2pi};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CgfModel {
    pub v: f64,
    pub delta3: f64,
}

impl CgfModel {
    pub fn new(v: f64, delta3: f64) -> Result<Self> {
        let model = CgfModel { v, delta3 };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0 && self.v.is_finite()) || !self.delta3.is_finite() {
            return Err(Error::invalid(alloc::format!(
                "CGF needs v > 0 and finite delta3 (v = {}, delta3 = {})",
                self.v,
                self.delta3
            )));
        }
        Ok(())
    }

    pub fn from_params(params: &TnmParams) -> Result<Self> {
        Self::new(params.v_nm, params.delta3_nm)
    }

    /// Finite end of the attainable `x` range: a lower bound when
    /// `delta3 > 0`, an upper bound when `delta3 < 0`, `None` when Gaussian.
    pub fn domain_edge(&self) -> Option<f64> {
        if self.delta3 == 0.0 {
            None
        } else {
            Some(-self.v * self.v / (2.0 * self.delta3))
        }
    }

    pub fn in_domain(&self, x: f64) -> bool {
        self.discriminant(x) > 0.0
    }

    fn discriminant(&self, x: f64) -> f64 {
        self.v * self.v + 2.0 * self.delta3 * x
    }
}

/// `(K(t), K'(t), K''(t))`
pub fn cgf_eval(model: &CgfModel, t: f64) -> (f64, f64, f64) {
    let (v, d) = (model.v, model.delta3);
    let k = 0.5 * v * t * t + d * t * t * t / 6.0;
    let k1 = v * t + 0.5 * d * t * t;
    let k2 = v + d * t;
    (k, k1, k2)
}

fn solve_with_curvature(model: &CgfModel, x: f64) -> Result<(f64, f64)> {
    let disc = model.discriminant(x);
    if disc < 0.0 || disc.is_nan() {
        return Err(Error::OutOfDomain {
            x,
            bound: model.domain_edge().unwrap_or(f64::NAN),
        });
    }
    let curvature = libm::sqrt(disc);
    if curvature <= 0.0 {
        return Err(Error::InvalidCurvature { curvature });
    }
    Ok((2.0 * x / (model.v + curvature), curvature))
}

pub fn solve_saddlepoint(model: &CgfModel, x: f64) -> Result<f64> {
    solve_with_curvature(model, x).map(|(t, _)| t)
}

/// Everything computed at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SaddlepointEval {
    pub x: f64,
    pub t_hat: f64,
    pub k_at: f64,
    pub k2_at: f64,
    pub w_hat: f64,
    pub u_hat: f64,
    pub density: f64,
    pub tail_upper: f64,
}

pub fn evaluate(model: &CgfModel, x: f64) -> Result<SaddlepointEval> {
    let (t, k2) = solve_with_curvature(model, x)?;
    let (v, d) = (model.v, model.delta3);
    let a = v + 2.0 * d * t / 3.0;
    let sqrt_a = libm::sqrt(a);
    let sqrt_b = libm::sqrt(k2);
    let w_hat = t * sqrt_a;
    let u_hat = t * sqrt_b;

    // K(t) - t x, exact on the saddlepoint branch
    let exponent = -t * t * (0.5 * v + d * t / 3.0);
    let density = libm::exp(exponent) / (sqrt_2pi() * sqrt_b);

    let correction = (d / 3.0) / (sqrt_a * sqrt_b * (sqrt_a + sqrt_b));
    let tail_upper = norm_sf(w_hat) - norm_pdf(w_hat) * correction;

    Ok(SaddlepointEval {
        x,
        t_hat: t,
        k_at: cgf_eval(model, t).0,
        k2_at: k2,
        w_hat,
        u_hat,
        density,
        tail_upper,
    })
}

/// Unnormalized saddlepoint density
/// `exp(K(t) - t x) / sqrt(2 pi K''(t))` at the saddlepoint `t`.
pub fn saddlepoint_density(model: &CgfModel, x: f64) -> Result<f64> {
    evaluate(model, x).map(|e| e.density)
}

/// Lugannani-Rice approximation of `P(T >= x)`.
pub fn lugannani_rice_tail(model: &CgfModel, x: f64) -> Result<f64> {
    evaluate(model, x).map(|e| e.tail_upper)
}

/// The `w -> 0` limit `1/2 - d3 / (6 sqrt(2 pi) v^{3/2})`.
pub fn tail_at_origin(model: &CgfModel) -> f64 {
    0.5 - model.delta3 / (6.0 * sqrt_2pi() * model.v * libm::sqrt(model.v))
}

/// Tail with the correction frozen at its `w -> 0` limit,
/// `1 - Phi(w) - phi(w) d3 / (6 v^{3/2})`. Agrees with
/// [`lugannani_rice_tail`] to first order around the origin.
pub fn tail_limit_branch(model: &CgfModel, x: f64) -> Result<f64> {
    let e = evaluate(model, x)?;
    let limit = model.delta3 / (6.0 * model.v * libm::sqrt(model.v));
    Ok(norm_sf(e.w_hat) - norm_pdf(e.w_hat) * limit)
}

/// Trapezoid integral of the saddlepoint density over `[lo, hi]`, clipped to
/// the model's domain. Diagnostic only; the density is never renormalized.
pub fn density_integral(model: &CgfModel, lo: f64, hi: f64, steps: usize) -> Result<f64> {
    if lo.partial_cmp(&hi) != Some(core::cmp::Ordering::Less) || steps == 0 {
        return Err(Error::invalid(
            "density integral needs lo < hi and steps >= 1",
        ));
    }
    let (mut lo, mut hi) = (lo, hi);
    if let Some(edge) = model.domain_edge() {
        // step just inside the edge, where the density is still finite
        let inset = 1e-9 * (1.0 + edge.abs());
        if model.delta3 > 0.0 {
            lo = lo.max(edge + inset);
        } else {
            hi = hi.min(edge - inset);
        }
    }
    if lo >= hi {
        return Ok(0.0);
    }
    let h = (hi - lo) / steps as f64;
    let mut acc = 0.0;
    for i in 0..=steps {
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        acc += w * saddlepoint_density(model, lo + i as f64 * h)?;
    }
    Ok(acc * h)
}
