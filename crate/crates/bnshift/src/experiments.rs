//! Monte Carlo studies built on the harness: risk-bound coverage, the
//! saddlepoint density sup-norm curve, the one-step expansion diagnostic and
//! LAN moments.

use crate::harness::{EmpiricalCdf, GridSpec, KernelDensity};
use crate::rng::{derive_seed, stream_rng};
use crate::sampling::Sampler;
use crate::{Error, Result};
use bnshift_core::blending::{optimal_lambda, BlendInputs};
use bnshift_core::edgeworth::{tnm_from_means, tnm_params};
use bnshift_core::mestimator::{lan_terms, one_step_update, ScoreFunction};
use bnshift_core::risk::{bound_terms, risk_proxy_excess, RiskBoundConfig, RiskBoundReport};
use bnshift_core::saddlepoint::{saddlepoint_density, CgfModel};
use bnshift_core::stats::{
    pairwise_sum, population_moments, DistributionSpec, Label, MomentSummary, Sample, ShiftScenario,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageOptions {
    /// Fixed blend weight instead of the plug-in optimum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_override: Option<f64>,
    /// Replace the test sample mean by the true test mean.
    #[serde(default)]
    pub oracle_test_mean: bool,
    /// Activations at which the BN outputs are compared.
    pub z_grid: GridSpec,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        CoverageOptions {
            lambda_override: None,
            oracle_test_mean: false,
            z_grid: GridSpec {
                lo: -3.0,
                hi: 3.0,
                points: 61,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageRow {
    pub rep: usize,
    pub lambda: f64,
    pub excess: f64,
    pub bound: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub rows: Vec<CoverageRow>,
    pub fraction: f64,
    /// Bound at the population train variance.
    pub report: RiskBoundReport,
}

/// Fraction of replicates whose realized excess risk proxy stays below the
/// bound.
///
/// Each replicate draws `n` train and `m` test values, blends the means with
/// the plug-in optimal weight and compares `L |BN_adapted(z) - BN_true(z)|`
/// averaged over the grid against `total_excess`. The bound's `A`, `V` and
/// radii use population moments; both BN maps and the bound's prefactor
/// normalize with the replicate's train variance estimate.
#[allow(clippy::too_many_arguments)]
pub fn coverage_experiment(
    train: &DistributionSpec,
    test: &DistributionSpec,
    n: usize,
    m: usize,
    config: &RiskBoundConfig,
    options: &CoverageOptions,
    reps: usize,
    seed: u64,
) -> Result<CoverageResult> {
    if reps == 0 {
        return Err(Error::config("coverage needs reps >= 1"));
    }
    if let Some(l) = options.lambda_override {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::config(format!("lambda_override {l} outside [0, 1]")));
        }
    }
    options.z_grid.validate()?;
    let scenario = ShiftScenario::from_specs(train, test)?;
    let report = bound_terms(&scenario, n, m, config)?;
    let z_grid = options.z_grid.values();
    let (sp, sq) = (Sampler::new(train)?, Sampler::new(test)?);

    let rows = (0..reps)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(n), Vec::with_capacity(m)),
            |(xs, ys), rep| -> Result<CoverageRow> {
                let mut rng = stream_rng(seed, rep as u64);
                sp.fill(&mut rng, xs, n);
                sq.fill(&mut rng, ys, m);
                let p = MomentSummary::from_slice(xs)?;
                let q = MomentSummary::from_slice(ys)?;
                let mu_q_hat = if options.oracle_test_mean {
                    scenario.mu_q()
                } else {
                    q.mean
                };
                let lambda = match options.lambda_override {
                    Some(l) => l,
                    None => {
                        optimal_lambda(&BlendInputs {
                            delta_mu: q.mean - p.mean,
                            var_p_hat: p.var_biased,
                            var_q_hat: q.var_biased,
                            kappa3_p: p.third_central,
                            kappa3_q: q.third_central,
                            n,
                            m,
                        })?
                        .lambda_star
                    }
                };
                let mu_tta = lambda * p.mean + (1.0 - lambda) * mu_q_hat;
                let excess = risk_proxy_excess(
                    mu_tta,
                    scenario.mu_q(),
                    p.var_biased,
                    &config.affine,
                    config.lipschitz_l,
                    &z_grid,
                );
                let rep_config = RiskBoundConfig {
                    var_p_hat: p.var_biased,
                    ..*config
                };
                let bound = rep_config.prefactor()
                    * (report.term_bias_var + report.term_test_conc + report.term_skew);
                Ok(CoverageRow {
                    rep,
                    lambda,
                    excess,
                    bound,
                    covered: excess <= bound,
                })
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let covered = rows.iter().filter(|r| r.covered).count();
    Ok(CoverageResult {
        fraction: covered as f64 / reps as f64,
        rows,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: usize,
    pub m: usize,
    pub sup_error: f64,
    /// Three pointwise kernel-density standard errors at the peak.
    pub noise_floor: f64,
    /// Grid points inside the saddlepoint domain.
    pub points_used: usize,
}

/// Sup over the grid of `|KDE(x) - saddlepoint_density(x)|` for each size.
///
/// The grid defaults to 201 points over `+-5 sqrt(V)`; points outside the
/// truncated CGF's domain are skipped. Size `i` uses `derive_seed(seed, i)`.
pub fn sup_norm_error_curve(
    train: &DistributionSpec,
    test: &DistributionSpec,
    sizes: &[(usize, usize)],
    grid: Option<GridSpec>,
    reps: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if sizes.is_empty() {
        return Err(Error::config("sup-norm curve needs at least one size"));
    }
    if reps < 2 {
        return Err(Error::config("sup-norm curve needs reps >= 2"));
    }
    let scenario = ShiftScenario::from_specs(train, test)?;
    let mut out = Vec::with_capacity(sizes.len());
    for (i, &(n, m)) in sizes.iter().enumerate() {
        let params = tnm_params(&scenario, n, m)?;
        let model = CgfModel::from_params(&params)?;
        let grid = grid.unwrap_or_else(|| GridSpec::around(0.0, params.sd()));
        grid.validate()?;
        let means =
            crate::harness::simulate_means(train, test, n, m, reps, derive_seed(seed, i as u64))?;
        let ts: Vec<f64> = means
            .into_iter()
            .map(|(mp, mq)| tnm_from_means(mp, n, mq, m, scenario.delta_mu()))
            .collect();
        let kde = KernelDensity::from_ecdf(EmpiricalCdf::new(ts))?;
        let xs: Vec<f64> = grid
            .values()
            .into_iter()
            .filter(|&x| model.in_domain(x))
            .collect();
        let pairs = xs
            .par_iter()
            .map(|&x| Ok((kde.eval(x), saddlepoint_density(&model, x)?)))
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let sup_error = pairs.iter().map(|(k, s)| (k - s).abs()).fold(0.0, f64::max);
        let peak = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
        out.push(CurvePoint {
            n,
            m,
            sup_error,
            noise_floor: kde.noise_floor(peak),
            points_used: xs.len(),
        });
    }
    Ok(out)
}

/// Score used by the one-step and LAN studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreChoice {
    Linear,
    /// Skew-corrected score with the test law's population moments.
    SkewCorrected,
    /// Skew-corrected score with moments estimated from each test sample.
    SkewCorrectedPlugin,
    Huber {
        threshold: f64,
    },
    PseudoHuber {
        scale: f64,
    },
}

impl ScoreChoice {
    fn resolve(
        &self,
        test_spec: &DistributionSpec,
        test: Option<&Sample>,
    ) -> Result<ScoreFunction> {
        let score = match *self {
            ScoreChoice::Linear => ScoreFunction::Linear,
            ScoreChoice::SkewCorrected => {
                let pm = population_moments(test_spec)?;
                ScoreFunction::SkewCorrected {
                    kappa3_q: pm.kappa3,
                    sigma_q: pm.var.sqrt(),
                }
            }
            ScoreChoice::SkewCorrectedPlugin => match test {
                Some(s) => ScoreFunction::skew_corrected_from(s)?,
                None => return Err(Error::config("plug-in score needs a test sample")),
            },
            ScoreChoice::Huber { threshold } => ScoreFunction::Huber { threshold },
            ScoreChoice::PseudoHuber { scale } => ScoreFunction::PseudoHuber { scale },
        };
        score.validate()?;
        Ok(score)
    }
}

/// Starting value of the one-step update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    /// The train sample mean as is.
    TrainMean,
    /// `mu0 + (train mean - mu_P)`: the train mean's sampling error around
    /// the target, without the population shift.
    #[default]
    CenteredTrainMean,
    /// The target `mu0` itself.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionRow {
    pub rep: usize,
    pub mu0: f64,
    pub mu_init: f64,
    /// `sqrt(m) (mu_onestep - mu0)`
    pub scaled_error: f64,
    /// `Z*/psi'_0 + psi''_0 Z*^2 / (2 psi'_0^3 sqrt(m))`
    pub expansion: f64,
    /// `Z*/psi'_0 + psi''_0 Z*^2 / (2 psi'_0^2)`
    pub expansion_displayed: f64,
    pub diff: f64,
    pub diff_displayed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionStudy {
    pub rows: Vec<ExpansionRow>,
    pub median_abs_diff: f64,
    pub median_abs_diff_displayed: f64,
}

fn median_abs(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.map(f64::abs).collect();
    v.sort_unstable_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Default train size for expansion studies, `ceil(m^{3/2})`.
pub fn superlinear_n(m: usize) -> usize {
    let mf = m as f64;
    (mf * mf.sqrt()).ceil() as usize
}

/// Distribution of `sqrt(m)(mu_onestep - mu0)` minus its two-term expansion.
///
/// `mu0` is the population root of the score under the test law. Empirical
/// `psi'_0`, `psi''_0` and `Z*` are evaluated at `mu0`. Both the consistent
/// second-order term (with `psi'_0^3` and `1/sqrt(m)`) and the displayed one
/// are reported.
#[allow(clippy::too_many_arguments)]
pub fn onestep_expansion_check(
    score: ScoreChoice,
    train: &DistributionSpec,
    test: &DistributionSpec,
    n: usize,
    m: usize,
    init: Initializer,
    reps: usize,
    seed: u64,
) -> Result<ExpansionStudy> {
    if reps == 0 || n == 0 || m < 2 {
        return Err(Error::config(
            "expansion check needs reps >= 1, n >= 1, m >= 2",
        ));
    }
    let pq = population_moments(test)?;
    let mu_p = population_moments(train)?.mean;
    let (sp, sq) = (Sampler::new(train)?, Sampler::new(test)?);
    let fixed_score = match score {
        ScoreChoice::SkewCorrectedPlugin => None,
        _ => Some(score.resolve(test, None)?),
    };
    let root_mu0 = |s: &ScoreFunction| -> Result<f64> {
        match s {
            ScoreFunction::Linear | ScoreFunction::SkewCorrected { .. } => {
                Ok(s.population_root(pq.mean, pq.var)?)
            }
            // symmetric scores share the mean as root only for symmetric
            // laws; use the mean as the target otherwise
            _ => Ok(pq.mean),
        }
    };
    let sqrt_m = (m as f64).sqrt();
    let rows = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<ExpansionRow> {
            let mut rng = stream_rng(seed, rep as u64);
            let train_mean = sp.draw_mean(&mut rng, n);
            let mut ys = Vec::with_capacity(m);
            sq.fill(&mut rng, &mut ys, m);
            let test_sample = Sample::new(ys, Label::Test)?;
            let s = match fixed_score {
                Some(s) => s,
                None => score.resolve(test, Some(&test_sample))?,
            };
            let mu0 = root_mu0(&s)?;
            let mu_init = match init {
                Initializer::TrainMean => train_mean,
                Initializer::CenteredTrainMean => mu0 + (train_mean - mu_p),
                Initializer::Oracle => mu0,
            };
            let step = one_step_update(&s, &test_sample, mu_init)?;
            let lan = lan_terms(&s, &test_sample, mu0, 0.0)?;
            let (z, d1, d2) = (lan.z_m_star, lan.psi_prime0, lan.psi_second0);
            let first = z / d1;
            let expansion = first + d2 * z * z / (2.0 * d1 * d1 * d1 * sqrt_m);
            let expansion_displayed = first + d2 * z * z / (2.0 * d1 * d1);
            let scaled_error = sqrt_m * (step.mu_onestep - mu0);
            Ok(ExpansionRow {
                rep,
                mu0,
                mu_init,
                scaled_error,
                expansion,
                expansion_displayed,
                diff: scaled_error - expansion,
                diff_displayed: scaled_error - expansion_displayed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpansionStudy {
        median_abs_diff: median_abs(rows.iter().map(|r| r.diff)),
        median_abs_diff_displayed: median_abs(rows.iter().map(|r| r.diff_displayed)),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LanRow {
    pub rep: usize,
    pub z_m: f64,
    pub z_m_star: f64,
    pub eta_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanStudy {
    pub rows: Vec<LanRow>,
    pub mu0: f64,
    pub mean_z: f64,
    /// `1/(reps - 1)`-normalized variance of `z_m` across replicates.
    pub var_z: f64,
    /// Population `eta` when available in closed form (linear score),
    /// otherwise the replicate average of `eta_hat`.
    pub eta: f64,
}

/// Replicates of the LAN terms at the score's population root.
pub fn lan_study(
    score: ScoreChoice,
    test: &DistributionSpec,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<LanStudy> {
    if reps < 2 || m < 2 {
        return Err(Error::config("LAN study needs reps >= 2 and m >= 2"));
    }
    let s = match score {
        ScoreChoice::Linear | ScoreChoice::SkewCorrected => score.resolve(test, None)?,
        _ => return Err(Error::config(
            "LAN study needs a score with a closed-form population root (linear or skew_corrected)",
        )),
    };
    let pq = population_moments(test)?;
    let mu0 = s.population_root(pq.mean, pq.var)?;
    let sq = Sampler::new(test)?;
    let rows = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<LanRow> {
            let mut rng = stream_rng(seed, rep as u64);
            let mut ys = Vec::with_capacity(m);
            sq.fill(&mut rng, &mut ys, m);
            let t = lan_terms(&s, &Sample::new(ys, Label::Test)?, mu0, 0.0)?;
            Ok(LanRow {
                rep,
                z_m: t.z_m,
                z_m_star: t.z_m_star,
                eta_hat: t.eta_hat,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let r = reps as f64;
    let zs: Vec<f64> = rows.iter().map(|x| x.z_m).collect();
    let mean_z = pairwise_sum(&zs) / r;
    let dev: Vec<f64> = zs.iter().map(|z| (z - mean_z) * (z - mean_z)).collect();
    let var_z = pairwise_sum(&dev) / (r - 1.0);
    let eta = match s {
        ScoreFunction::Linear => pq.var,
        _ => {
            let etas: Vec<f64> = rows.iter().map(|x| x.eta_hat).collect();
            pairwise_sum(&etas) / r
        }
    };
    Ok(LanStudy {
        rows,
        mu0,
        mean_z,
        var_z,
        eta,
    })
}
