//! Monte Carlo engine: simulated draws of `T_{n,m}` and of the blended mean,
//! empirical CDF and kernel density estimates, and their comparison with the
//! analytic approximations.
//!
//! Replicates run in parallel, each on its own RNG stream, and results are
//! collected in replicate order; reductions across replicates use
//! [`pairwise_sum`]. Outputs are thus independent of the worker count.

use crate::rng::{derive_seed, stream_rng};
use crate::sampling::Sampler;
use crate::{Error, Result};
use bnshift_core::edgeworth::{
    edgeworth_cdf, normal_cdf_baseline, tnm_from_means, tnm_params, TnmParams,
};
use bnshift_core::saddlepoint::{lugannani_rice_tail, saddlepoint_density, CgfModel};
use bnshift_core::special::norm_pdf;
use bnshift_core::stats::{pairwise_sum, DistributionSpec, ShiftScenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `points` equally spaced values from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        let g = GridSpec { lo, hi, points };
        g.validate()?;
        Ok(g)
    }

    /// 201 points over `mu +- 5 sd`.
    pub fn around(mu: f64, sd: f64) -> Self {
        GridSpec {
            lo: mu - 5.0 * sd,
            hi: mu + 5.0 * sd,
            points: 201,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::config(format!(
                "grid needs finite lo < hi (lo = {}, hi = {})",
                self.lo, self.hi
            )));
        }
        if self.points < 2 {
            return Err(Error::config("grid needs at least 2 points"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.hi
                } else {
                    self.lo + i as f64 * step
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub train: DistributionSpec,
    pub test: DistributionSpec,
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub seed: u64,
    /// Defaults to [`GridSpec::around`]`(0, sqrt(V))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::config("sample sizes n and m must be at least 1"));
        }
        if self.reps == 0 {
            return Err(Error::config("reps must be at least 1"));
        }
        self.train.validate()?;
        self.test.validate()?;
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<ShiftScenario> {
        Ok(ShiftScenario::from_specs(&self.train, &self.test)?)
    }

    pub fn params(&self) -> Result<TnmParams> {
        Ok(tnm_params(&self.scenario()?, self.n, self.m)?)
    }

    pub fn grid_values(&self) -> Result<Vec<f64>> {
        let grid = match self.grid {
            Some(g) => g,
            None => GridSpec::around(0.0, self.params()?.sd()),
        };
        Ok(grid.values())
    }
}

/// Train and test sample means of each replicate.
pub fn simulate_means(
    train: &DistributionSpec,
    test: &DistributionSpec,
    n: usize,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let (sp, sq) = (Sampler::new(train)?, Sampler::new(test)?);
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let mp = sp.draw_mean(&mut rng, n);
            let mq = sq.draw_mean(&mut rng, m);
            (mp, mq)
        })
        .collect())
}

/// `reps` independent realizations of `T_{n,m}`, centred at the true shift.
pub fn simulate_tnm(config: &SimConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let dmu = config.scenario()?.delta_mu();
    let means = simulate_means(
        &config.train,
        &config.test,
        config.n,
        config.m,
        config.reps,
        config.seed,
    )?;
    Ok(means
        .into_iter()
        .map(|(mp, mq)| tnm_from_means(mp, config.n, mq, config.m, dmu))
        .collect())
}

pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_unstable_by(f64::total_cmp);
        EmpiricalCdf { sorted: values }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of values `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        let n = self.sorted.len() as f64;
        let mean = pairwise_sum(&self.sorted) / n;
        let dev: Vec<f64> = self
            .sorted
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .collect();
        (pairwise_sum(&dev) / n).sqrt()
    }

    /// Linear-interpolated sample quantile.
    pub fn quantile(&self, p: f64) -> f64 {
        let pos = p.clamp(0.0, 1.0) * (self.sorted.len() - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        match self.sorted.get(i + 1) {
            Some(next) => self.sorted[i] + frac * (next - self.sorted[i]),
            None => self.sorted[i],
        }
    }
}

/// Dvoretzky-Kiefer-Wolfowitz radius `sqrt(ln(2/alpha) / (2 count))`: the
/// empirical CDF is uniformly within this of the truth with prob. `1 - alpha`.
pub fn dkw_bound(count: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * count as f64)).sqrt()
}

/// DKW radius at `alpha = 0.05`, used as the noise floor of CDF comparisons.
pub fn dkw_floor(count: usize) -> f64 {
    dkw_bound(count, 0.05)
}

/// Gaussian kernel density estimate with Silverman's bandwidth.
pub struct KernelDensity {
    cdf: EmpiricalCdf,
    bandwidth: f64,
}

impl KernelDensity {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_ecdf(EmpiricalCdf::new(values))
    }

    pub fn from_ecdf(cdf: EmpiricalCdf) -> Result<Self> {
        if cdf.len() < 2 {
            return Err(Error::config("kernel density needs at least two values"));
        }
        let sd = cdf.std_dev();
        let iqr = cdf.quantile(0.75) - cdf.quantile(0.25);
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        if spread <= 0.0 {
            return Err(bnshift_core::Error::NumericalDomain(
                "kernel density of a constant sample".into(),
            )
            .into());
        }
        let bandwidth = 0.9 * spread * (cdf.len() as f64).powf(-0.2);
        Ok(KernelDensity { cdf, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let s = self.cdf.sorted();
        // kernel mass beyond 9 bandwidths is below 1e-17
        let lo = s.partition_point(|&v| v < x - 9.0 * h);
        let hi = s.partition_point(|&v| v <= x + 9.0 * h);
        let mut acc = 0.0;
        for &v in &s[lo..hi] {
            acc += norm_pdf((x - v) / h);
        }
        acc / (s.len() as f64 * h)
    }

    /// Three pointwise standard errors of the estimate at density level
    /// `peak`: `3 sqrt(peak R(K) / (N h))` with `R(K) = 1 / (2 sqrt(pi))`.
    pub fn noise_floor(&self, peak: f64) -> f64 {
        let rk = 0.5 / std::f64::consts::PI.sqrt();
        3.0 * (peak * rk / (self.cdf.len() as f64 * self.bandwidth)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Normal,
    Edgeworth,
    SaddlepointDensity,
    LugannaniRice,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Normal => "normal",
            Method::Edgeworth => "edgeworth",
            Method::SaddlepointDensity => "saddlepoint_density",
            Method::LugannaniRice => "lugannani_rice",
        }
    }

    pub fn is_density(&self) -> bool {
        matches!(self, Method::SaddlepointDensity)
    }

    /// Analytic value at `x`; `None` outside the method's domain.
    pub fn eval(&self, x: f64, params: &TnmParams) -> Result<Option<f64>> {
        Ok(match self {
            Method::Normal => Some(normal_cdf_baseline(x, params)),
            Method::Edgeworth => Some(edgeworth_cdf(x, params)),
            Method::SaddlepointDensity | Method::LugannaniRice => {
                let model = CgfModel::from_params(params)?;
                if !model.in_domain(x) {
                    return Ok(None);
                }
                Some(if self.is_density() {
                    saddlepoint_density(&model, x)?
                } else {
                    1.0 - lugannani_rice_tail(&model, x)?
                })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxComparison {
    pub method: Method,
    /// Largest absolute error over the grid points where the method is defined.
    pub sup_norm: f64,
    /// Average absolute error over the same points.
    pub ks_like: f64,
    /// `|approx - empirical|` per grid point; NaN where undefined.
    pub errors: Vec<f64>,
    pub values: Vec<f64>,
}

impl ApproxComparison {
    fn from_values(method: Method, values: Vec<f64>, reference: &[f64]) -> Self {
        let errors: Vec<f64> = values
            .iter()
            .zip(reference)
            .map(|(a, e)| (a - e).abs())
            .collect();
        let defined: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
        let sup_norm = defined.iter().copied().fold(0.0, f64::max);
        let ks_like = if defined.is_empty() {
            0.0
        } else {
            pairwise_sum(&defined) / defined.len() as f64
        };
        ApproxComparison {
            method,
            sup_norm,
            ks_like,
            errors,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfComparison {
    pub grid: Vec<f64>,
    pub empirical_cdf: Vec<f64>,
    /// Kernel density at the grid; present when a density method was asked for.
    pub empirical_density: Option<Vec<f64>>,
    pub comparisons: Vec<ApproxComparison>,
    /// DKW noise floor of the empirical CDF.
    pub dkw_floor: f64,
    pub params: TnmParams,
}

impl CdfComparison {
    pub fn get(&self, method: Method) -> Option<&ApproxComparison> {
        self.comparisons.iter().find(|c| c.method == method)
    }
}

/// Empirical CDF (and density, if needed) of simulated `T_{n,m}` against each
/// analytic method on the configured grid.
pub fn compare_cdf(config: &SimConfig, methods: &[Method]) -> Result<CdfComparison> {
    let params = config.params()?;
    let grid = config.grid_values()?;
    let cdf = EmpiricalCdf::new(simulate_tnm(config)?);
    let empirical_cdf: Vec<f64> = grid.iter().map(|&x| cdf.eval(x)).collect();
    let dkw = dkw_floor(cdf.len());
    let empirical_density = if methods.iter().any(Method::is_density) {
        let kde = KernelDensity::from_ecdf(cdf)?;
        Some(grid.par_iter().map(|&x| kde.eval(x)).collect::<Vec<f64>>())
    } else {
        None
    };
    let mut comparisons = Vec::with_capacity(methods.len());
    for &method in methods {
        let values = grid
            .iter()
            .map(|&x| Ok(method.eval(x, &params)?.unwrap_or(f64::NAN)))
            .collect::<Result<Vec<f64>>>()?;
        let reference = match (&empirical_density, method.is_density()) {
            (Some(d), true) => d.as_slice(),
            _ => empirical_cdf.as_slice(),
        };
        comparisons.push(ApproxComparison::from_values(method, values, reference));
    }
    Ok(CdfComparison {
        grid,
        empirical_cdf,
        empirical_density,
        comparisons,
        dkw_floor: dkw,
        params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub m: usize,
    pub error: f64,
    pub noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResult {
    pub points: Vec<RatePoint>,
    /// OLS slope of `ln error` on `ln min(n, m)`.
    pub slope: f64,
    /// Set when some error is at or below its DKW noise floor, in which case
    /// the slope mostly measures Monte Carlo noise.
    pub noise_floor_hit: bool,
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = pairwise_sum(xs) / k;
    let my = pairwise_sum(ys) / k;
    let sxy: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect();
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    pairwise_sum(&sxy) / pairwise_sum(&sxx)
}

/// Sup-norm CDF error of `method` across a ladder of sizes and its log-log
/// slope against `min(n, m)`. Size `i` uses seed `derive_seed(seed, i)`.
pub fn rate_regression(
    train: &DistributionSpec,
    test: &DistributionSpec,
    ladder: &[(usize, usize)],
    method: Method,
    reps: usize,
    seed: u64,
) -> Result<RateResult> {
    if ladder.len() < 4 {
        return Err(bnshift_core::Error::InvalidInput(format!(
            "rate regression needs at least 4 sizes, got {}",
            ladder.len()
        ))
        .into());
    }
    if method.is_density() {
        return Err(Error::config(
            "rate regression compares CDFs; pick a CDF method",
        ));
    }
    let mut points = Vec::with_capacity(ladder.len());
    for (i, &(n, m)) in ladder.iter().enumerate() {
        let config = SimConfig {
            train: *train,
            test: *test,
            n,
            m,
            reps,
            seed: derive_seed(seed, i as u64),
            grid: None,
        };
        let cmp = compare_cdf(&config, &[method])?;
        points.push(RatePoint {
            n,
            m,
            error: cmp.comparisons[0].sup_norm,
            noise_floor: cmp.dkw_floor,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n.min(p.m) as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.error.ln()).collect();
    Ok(RateResult {
        slope: ols_slope(&xs, &ys),
        noise_floor_hit: points.iter().any(|p| p.error <= p.noise_floor),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MsePoint {
    pub lambda: f64,
    pub mse: f64,
    /// Monte Carlo standard error of `mse`.
    pub se: f64,
}

/// Empirical `E[(mu_TTA(lambda) - mu_Q)^2]` for each `lambda`, every weight
/// reusing the same replicate means.
pub fn mse_curve(
    train: &DistributionSpec,
    test: &DistributionSpec,
    n: usize,
    m: usize,
    lambdas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<MsePoint>> {
    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::config(format!("blend weight {l} outside [0, 1]")));
    }
    if reps < 2 || n == 0 || m == 0 {
        return Err(Error::config("mse curve needs reps >= 2 and n, m >= 1"));
    }
    let mu_q = ShiftScenario::from_specs(train, test)?.mu_q();
    let means = simulate_means(train, test, n, m, reps, seed)?;
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            let sq: Vec<f64> = means
                .iter()
                .map(|&(mp, mq)| {
                    let e = lambda * mp + (1.0 - lambda) * mq - mu_q;
                    e * e
                })
                .collect();
            let r = reps as f64;
            let mse = pairwise_sum(&sq) / r;
            let dev: Vec<f64> = sq.iter().map(|s| (s - mse) * (s - mse)).collect();
            let var = pairwise_sum(&dev) / (r - 1.0);
            MsePoint {
                lambda,
                mse,
                se: (var / r).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_exact() {
        let g = GridSpec::new(-1.0, 2.0, 7).unwrap().values();
        assert_eq!(g.len(), 7);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[6], 2.0);
        assert!(GridSpec::new(1.0, 1.0, 3).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn ecdf_counts_ties_right_continuously() {
        let c = EmpiricalCdf::new(vec![3.0, 1.0, 2.0, 2.0]);
        assert_eq!(c.eval(0.0), 0.0);
        assert_eq!(c.eval(1.0), 0.25);
        assert_eq!(c.eval(2.0), 0.75);
        assert_eq!(c.eval(10.0), 1.0);
        assert_eq!(c.quantile(0.5), 2.0);
    }

    #[test]
    fn dkw_example() {
        let d = dkw_bound(1_000_000, 0.05);
        assert!((d - (40.0_f64.ln() / 2e6).sqrt()).abs() < 1e-15);
        assert!((d - 0.001_358_1).abs() < 1e-7);
    }

    #[test]
    fn ols_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 0.5 * x).collect();
        assert!((ols_slope(&xs, &ys) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn kde_integrates_to_one() {
        let values: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
        let kde = KernelDensity::new(values).unwrap();
        let grid = GridSpec::new(-5.0, 15.0, 4001).unwrap().values();
        let h = grid[1] - grid[0];
        let total: f64 = grid.iter().map(|&x| kde.eval(x)).sum::<f64>() * h;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
}
