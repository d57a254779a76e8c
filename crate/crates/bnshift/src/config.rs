//! Run configuration.
//!
//! Configuration is TOML. Top-level keys are `seed`, `output_dir`, `format`
//! (`"table"` or `"rows"`) and `threads`; each subcommand reads its own
//! section (`[simulate]`, `[compare_cdf]`, `[optimal_lambda]`,
//! `[saddlepoint]`, `[one_step]`, `[bound]`, `[rate]`, `[mse_curve]`). Every
//! key is optional and unknown keys are rejected. Distributions are inline
//! tables tagged by `family`:
//!
//! ```toml
//! seed = 7
//!
//! [compare_cdf]
//! n = 50
//! m = 50
//! reps = 1000000
//! methods = ["normal", "edgeworth"]
//! train = { family = "gaussian", mean = 0.0, var = 1.0 }
//! test = { family = "shifted_gamma", shape = 2.0, scale = 1.0 }
//! ```
//!
//! Overrides `path.to.key=value` are applied on top of the file before it is
//! parsed; `value` is read as a TOML value, falling back to a string.

use crate::experiments::{CoverageOptions, Initializer, ScoreChoice};
use crate::harness::{GridSpec, Method, SimConfig};
use crate::table::Format;
use crate::{Error, Result};
use bnshift_core::blending::BlendInputs;
use bnshift_core::risk::RiskBoundConfig;
use bnshift_core::saddlepoint::CgfModel;
use bnshift_core::stats::{BnAffine, DistributionSpec, ShiftScenario};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const DEFAULT_SEED: u64 = 20_240_601;

fn gaussian(mean: f64, var: f64) -> DistributionSpec {
    DistributionSpec::Gaussian { mean, var }
}

fn gamma(shape: f64, scale: f64) -> DistributionSpec {
    DistributionSpec::ShiftedGamma {
        shape,
        scale,
        loc: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub simulate: SimulateSection,
    pub compare_cdf: CompareCdfSection,
    pub optimal_lambda: OptimalLambdaSection,
    pub saddlepoint: SaddlepointSection,
    pub one_step: OneStepSection,
    pub bound: BoundSection,
    pub rate: RateSection,
    pub mse_curve: MseCurveSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            output_dir: None,
            format: Format::Table,
            threads: None,
            simulate: Default::default(),
            compare_cdf: Default::default(),
            optimal_lambda: Default::default(),
            saddlepoint: Default::default(),
            one_step: Default::default(),
            bound: Default::default(),
            rate: Default::default(),
            mse_curve: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub train: DistributionSpec,
    pub test: DistributionSpec,
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            train: gaussian(0.0, 1.0),
            test: gamma(2.0, 1.0),
            n: 50,
            m: 50,
            reps: 10_000,
            grid: None,
        }
    }
}

impl SimulateSection {
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            train: self.train,
            test: self.test,
            n: self.n,
            m: self.m,
            reps: self.reps,
            seed,
            grid: self.grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareCdfSection {
    pub train: DistributionSpec,
    pub test: DistributionSpec,
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub methods: Vec<Method>,
}

impl Default for CompareCdfSection {
    fn default() -> Self {
        CompareCdfSection {
            train: gaussian(0.0, 1.0),
            test: gamma(2.0, 1.0),
            n: 50,
            m: 50,
            reps: 100_000,
            grid: None,
            methods: vec![Method::Normal, Method::Edgeworth],
        }
    }
}

impl CompareCdfSection {
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            train: self.train,
            test: self.test,
            n: self.n,
            m: self.m,
            reps: self.reps,
            seed,
            grid: self.grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimalLambdaSection {
    pub delta_mu: f64,
    pub var_p_hat: f64,
    pub var_q_hat: f64,
    pub kappa3_p: f64,
    pub kappa3_q: f64,
    pub n: usize,
    pub m: usize,
}

impl Default for OptimalLambdaSection {
    fn default() -> Self {
        OptimalLambdaSection {
            delta_mu: 0.0,
            var_p_hat: 1.0,
            var_q_hat: 1.0,
            kappa3_p: 0.0,
            kappa3_q: 0.0,
            n: 100,
            m: 100,
        }
    }
}

impl OptimalLambdaSection {
    pub fn inputs(&self) -> BlendInputs {
        BlendInputs {
            delta_mu: self.delta_mu,
            var_p_hat: self.var_p_hat,
            var_q_hat: self.var_q_hat,
            kappa3_p: self.kappa3_p,
            kappa3_q: self.kappa3_q,
            n: self.n,
            m: self.m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaddlepointSection {
    pub v: f64,
    pub delta3: f64,
    /// Defaults to 201 points over `+-5 sqrt(v)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl Default for SaddlepointSection {
    fn default() -> Self {
        SaddlepointSection {
            v: 1.0,
            delta3: 0.3,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneStepMode {
    /// One-step estimate against its two-term expansion.
    #[default]
    Expansion,
    /// LAN terms at the population root.
    Lan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OneStepSection {
    pub mode: OneStepMode,
    pub score: ScoreChoice,
    pub train: DistributionSpec,
    pub test: DistributionSpec,
    /// Defaults to `ceil(m^{3/2})`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub m: usize,
    pub reps: usize,
    pub init: Initializer,
}

impl Default for OneStepSection {
    fn default() -> Self {
        OneStepSection {
            mode: OneStepMode::Expansion,
            score: ScoreChoice::SkewCorrected,
            train: gaussian(0.0, 1.0),
            test: gamma(2.0, 0.5),
            n: None,
            m: 200,
            reps: 1000,
            init: Initializer::CenteredTrainMean,
        }
    }
}

/// Explicit population moments, an alternative to train/test families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMoments {
    pub mu_p: f64,
    pub mu_q: f64,
    pub var_p: f64,
    pub var_q: f64,
    pub kappa3_p: f64,
    pub kappa3_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    /// Overrides the moments implied by `train` and `test` for the bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioMoments>,
    pub train: DistributionSpec,
    pub test: DistributionSpec,
    pub n: usize,
    pub m: usize,
    pub bound_b: f64,
    pub lipschitz_l: f64,
    pub affine: BnAffine,
    pub delta: f64,
    /// Train variance in the prefactor; defaults to the population value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_p_hat: Option<f64>,
    /// Replicates of the coverage experiment; 0 skips it.
    pub coverage_reps: usize,
    pub coverage: CoverageOptions,
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection {
            scenario: None,
            train: DistributionSpec::TwoPoint {
                low: 0.0,
                high: 1.0,
                p_high: 0.3,
            },
            test: DistributionSpec::TwoPoint {
                low: 0.0,
                high: 2.0,
                p_high: 0.2,
            },
            n: 200,
            m: 50,
            bound_b: 2.0,
            lipschitz_l: 1.0,
            affine: BnAffine::default(),
            delta: 0.1,
            var_p_hat: None,
            coverage_reps: 0,
            coverage: CoverageOptions::default(),
        }
    }
}

impl BoundSection {
    pub fn scenario(&self) -> Result<ShiftScenario> {
        Ok(match self.scenario {
            Some(s) => {
                ShiftScenario::new(s.mu_p, s.mu_q, s.var_p, s.var_q, s.kappa3_p, s.kappa3_q)?
            }
            None => ShiftScenario::from_specs(&self.train, &self.test)?,
        })
    }

    pub fn risk_config(&self) -> Result<RiskBoundConfig> {
        let var_p_hat = match self.var_p_hat {
            Some(v) => v,
            None => self.scenario()?.var_p(),
        };
        Ok(RiskBoundConfig {
            bound_b: self.bound_b,
            lipschitz_l: self.lipschitz_l,
            affine: self.affine,
            delta: self.delta,
            var_p_hat,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateSection {
    pub train: DistributionSpec,
    pub test: DistributionSpec,
    /// `(n, m)` pairs, at least four.
    pub sizes: Vec<(usize, usize)>,
    /// CDF methods give the DKW-floored sup-norm rate; `saddlepoint_density`
    /// gives the kernel-density sup-norm curve.
    pub method: Method,
    pub reps: usize,
}

impl Default for RateSection {
    fn default() -> Self {
        RateSection {
            train: gaussian(0.0, 0.01),
            test: gamma(0.1, 1.0),
            sizes: vec![(25, 25), (50, 50), (100, 100), (200, 200), (400, 400)],
            method: Method::Normal,
            reps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MseCurveSection {
    pub train: DistributionSpec,
    pub test: DistributionSpec,
    pub n: usize,
    pub m: usize,
    pub lambdas: GridSpec,
    pub reps: usize,
}

impl Default for MseCurveSection {
    fn default() -> Self {
        MseCurveSection {
            train: gaussian(0.0, 1.0),
            test: gaussian(0.2, 1.0),
            n: 100,
            m: 50,
            lambdas: GridSpec {
                lo: 0.0,
                hi: 1.0,
                points: 101,
            },
            reps: 20_000,
        }
    }
}

/// Section name a subcommand reads, as used in dotted override paths.
pub fn section_key(command: &str) -> String {
    command.replace('-', "_")
}

/// Sets `path` (dot separated) in `root`, creating intermediate tables.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{assignment}` is not PATH=VALUE")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(format!("bad override path `{path}`")));
    }
    let value = parse_value(raw.trim());
    set_path(root, &keys, value)
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Deep-merges `top` into `base`. Tables tagged with `family` are variants
/// of an enum and replace the base table whole when the family is given.
pub fn merge_tables(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) if !t.contains_key("family") => {
                merge_tables(b, t)
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

pub(crate) fn set_path(root: &mut toml::Table, keys: &[&str], value: toml::Value) -> Result<()> {
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut cur = root;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override path crosses non-table key `{k}`")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses a (possibly overridden) TOML document strictly.
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string().trim_end().to_string()))?;
        if cfg.seed > i64::MAX as u64 {
            return Err(Error::config("seed must be below 2^63"));
        }
        Ok(cfg)
    }

    /// The defaults as a TOML table, the bottom layer of every run.
    pub fn default_table() -> toml::Table {
        toml::Table::try_from(RunConfig::default()).expect("defaults serialize")
    }

    pub fn parse_str(text: &str) -> Result<toml::Table> {
        text.parse::<toml::Table>()
            .map_err(|e| Error::config(e.to_string().trim_end().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    /// Checks the section `command` reads against module preconditions.
    pub fn validate_for(&self, command: &str) -> Result<()> {
        let check = |r: bnshift_core::Result<()>| r.map_err(|e| Error::config(e.to_string()));
        let positive = |what: &str, v: usize| {
            if v == 0 {
                Err(Error::config(format!("{what} must be at least 1")))
            } else {
                Ok(())
            }
        };
        if self.threads == Some(0) {
            return Err(Error::config("threads must be at least 1"));
        }
        match command {
            "simulate" => self.simulate.sim_config(self.seed).validate(),
            "compare-cdf" => {
                let c = &self.compare_cdf;
                c.sim_config(self.seed).validate()?;
                if c.methods.is_empty() {
                    return Err(Error::config("compare_cdf.methods is empty"));
                }
                Ok(())
            }
            "optimal-lambda" => check(self.optimal_lambda.inputs().validate()),
            "saddlepoint" => {
                let s = &self.saddlepoint;
                check(CgfModel::new(s.v, s.delta3).map(|_| ()))?;
                match s.grid {
                    Some(g) => g.validate(),
                    None => Ok(()),
                }
            }
            "one-step" => {
                let s = &self.one_step;
                check(s.train.validate())?;
                check(s.test.validate())?;
                if s.m < 2 {
                    return Err(Error::config("one_step.m must be at least 2"));
                }
                if let Some(n) = s.n {
                    positive("one_step.n", n)?;
                }
                if s.reps < 2 {
                    return Err(Error::config("one_step.reps must be at least 2"));
                }
                Ok(())
            }
            "bound" => {
                let b = &self.bound;
                positive("bound.n", b.n)?;
                positive("bound.m", b.m)?;
                check(b.train.validate())?;
                check(b.test.validate())?;
                let rc = b.risk_config().map_err(|e| Error::config(e.to_string()))?;
                check(rc.validate())?;
                if b.coverage_reps > 0 {
                    b.coverage.z_grid.validate()?;
                    if let Some(l) = b.coverage.lambda_override {
                        if !(0.0..=1.0).contains(&l) {
                            return Err(Error::config(
                                "bound.coverage.lambda_override outside [0, 1]",
                            ));
                        }
                    }
                }
                Ok(())
            }
            "rate" => {
                let r = &self.rate;
                check(r.train.validate())?;
                check(r.test.validate())?;
                if r.sizes.len() < 4 {
                    return Err(Error::config(format!(
                        "rate.sizes needs at least 4 sizes, got {}",
                        r.sizes.len()
                    )));
                }
                if r.sizes.iter().any(|&(n, m)| n == 0 || m == 0) {
                    return Err(Error::config("rate.sizes entries must be positive"));
                }
                positive("rate.reps", r.reps)
            }
            "mse-curve" => {
                let s = &self.mse_curve;
                check(s.train.validate())?;
                check(s.test.validate())?;
                positive("mse_curve.n", s.n)?;
                positive("mse_curve.m", s.m)?;
                s.lambdas.validate()?;
                if s.lambdas.lo < 0.0 || s.lambdas.hi > 1.0 {
                    return Err(Error::config("mse_curve.lambdas must lie in [0, 1]"));
                }
                if s.reps < 2 {
                    return Err(Error::config("mse_curve.reps must be at least 2"));
                }
                Ok(())
            }
            other => Err(Error::config(format!("unknown command `{other}`"))),
        }
    }
}
