//! `bnshift` command-line front end.
//!
//! Configuration comes from an optional TOML file (see [`crate::config`]),
//! then `--set PATH=VALUE` overrides, then the dedicated flags. Tables and
//! the resolved configuration are written to the output directory: `--out`,
//! else `output_dir` from the config, else `$BNSHIFT_OUTPUT_DIR`, else
//! `bnshift-out`.
//!
//! Exit codes: 0 success, 2 bad configuration or usage, 3 numeric domain
//! error, 4 I/O failure.

use crate::config::{apply_override, merge_tables, section_key, set_path, OneStepMode, RunConfig};
use crate::experiments::{
    coverage_experiment, lan_study, onestep_expansion_check, sup_norm_error_curve, superlinear_n,
};
use crate::harness::{
    compare_cdf, mse_curve, ols_slope, rate_regression, simulate_tnm, GridSpec, RatePoint,
    RateResult,
};
use crate::table::{fmt_short, write_atomic, Table};
use crate::{Error, Result};
use bnshift_core::blending::{mse_objective, optimal_lambda, BlendInputs};
use bnshift_core::edgeworth::tnm_params;
use bnshift_core::risk::bound_terms;
use bnshift_core::saddlepoint::{density_integral, evaluate, CgfModel};
use bnshift_core::stats::{pairwise_sum, population_moments, ShiftScenario};
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

pub const OUTPUT_DIR_ENV: &str = "BNSHIFT_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "bnshift-out";

#[derive(Debug, Parser)]
#[command(
    name = "bnshift",
    version,
    about = "Higher-order asymptotics for BN test-time adaptation"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo replicates for the selected subcommand.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Dotted-path override, e.g. `compare_cdf.n=100`. Repeatable.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    pub set: Vec<String>,
    /// Skip the human-readable summary.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Draw T_{n,m} replicates.
    Simulate,
    /// Empirical CDF of T_{n,m} against normal, Edgeworth and saddlepoint forms.
    CompareCdf,
    /// Closed-form optimal blend weight.
    OptimalLambda,
    /// Saddlepoint density and Lugannani-Rice tail on a grid.
    Saddlepoint,
    /// One-step M-estimator expansion or LAN study.
    OneStep,
    /// Excess-risk bound, optionally with a coverage experiment.
    Bound,
    /// Sup-norm error rate across sample sizes.
    Rate,
    /// Empirical MSE of the blended mean across weights.
    MseCurve,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::CompareCdf => "compare-cdf",
            Command::OptimalLambda => "optimal-lambda",
            Command::Saddlepoint => "saddlepoint",
            Command::OneStep => "one-step",
            Command::Bound => "bound",
            Command::Rate => "rate",
            Command::MseCurve => "mse-curve",
        }
    }

    /// Key that `--reps` sets, relative to the command's section.
    fn reps_key(&self) -> Option<&'static str> {
        match self {
            Command::OptimalLambda | Command::Saddlepoint => None,
            Command::Bound => Some("coverage_reps"),
            _ => Some("reps"),
        }
    }
}

/// Everything a subcommand produces.
pub struct Outcome {
    pub tables: Vec<(String, Table)>,
    pub summary: String,
}

/// Builds the resolved configuration: file, then overrides, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut table = RunConfig::default_table();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file = RunConfig::parse_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        merge_tables(&mut table, file);
    }
    for assignment in &cli.set {
        apply_override(&mut table, assignment)?;
    }
    let int = |v: u64| -> Result<toml::Value> {
        i64::try_from(v)
            .map(toml::Value::Integer)
            .map_err(|_| Error::config(format!("value {v} too large")))
    };
    if let Some(seed) = cli.seed {
        set_path(&mut table, &["seed"], int(seed)?)?;
    }
    if let Some(reps) = cli.reps {
        let key = cli.command.reps_key().ok_or_else(|| {
            Error::config(format!("--reps does not apply to `{}`", cli.command.name()))
        })?;
        let section = section_key(cli.command.name());
        set_path(&mut table, &[section.as_str(), key], int(reps as u64)?)?;
    }
    if let Some(t) = cli.threads {
        set_path(&mut table, &["threads"], int(t as u64)?)?;
    }
    if let Some(out) = &cli.out {
        set_path(
            &mut table,
            &["output_dir"],
            toml::Value::String(out.to_string_lossy().into_owned()),
        )?;
    }
    let mut cfg = RunConfig::from_table(table)?;
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => PathBuf::from(DEFAULT_OUTPUT_DIR),
        });
    }
    cfg.validate_for(cli.command.name())?;
    Ok(cfg)
}

/// Runs `command` under `cfg` without touching the filesystem.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome> {
    match cfg.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::config(format!("cannot start {t} threads: {e}")))?;
            pool.install(|| dispatch(command, cfg))
        }
        None => dispatch(command, cfg),
    }
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<Outcome> {
    match command {
        Command::Simulate => run_simulate(cfg),
        Command::CompareCdf => run_compare_cdf(cfg),
        Command::OptimalLambda => run_optimal_lambda(cfg),
        Command::Saddlepoint => run_saddlepoint(cfg),
        Command::OneStep => run_one_step(cfg),
        Command::Bound => run_bound(cfg),
        Command::Rate => run_rate(cfg),
        Command::MseCurve => run_mse_curve(cfg),
    }
}

fn bool_f(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn run_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let sim = cfg.simulate.sim_config(cfg.seed);
    let ts = simulate_tnm(&sim)?;
    let params = sim.params()?;
    let mut table = Table::new(&["rep", "t"], Some(cfg.seed));
    for (i, &t) in ts.iter().enumerate() {
        table.push(vec![i as f64, t]);
    }
    let r = ts.len() as f64;
    let mean = pairwise_sum(&ts) / r;
    let dev: Vec<f64> = ts.iter().map(|t| (t - mean) * (t - mean)).collect();
    let var = if ts.len() > 1 {
        pairwise_sum(&dev) / (r - 1.0)
    } else {
        0.0
    };
    let summary = format!(
        "simulate: reps={} n={} m={}\n  mean(T)={}  var(T)={}  V={}  Delta3={}\n",
        ts.len(),
        sim.n,
        sim.m,
        fmt_short(mean),
        fmt_short(var),
        fmt_short(params.v_nm),
        fmt_short(params.delta3_nm)
    );
    Ok(Outcome {
        tables: vec![("simulate.tsv".into(), table)],
        summary,
    })
}

fn run_compare_cdf(cfg: &RunConfig) -> Result<Outcome> {
    let sec = &cfg.compare_cdf;
    let cmp = compare_cdf(&sec.sim_config(cfg.seed), &sec.methods)?;
    let mut columns = vec!["x", "empirical"];
    if cmp.empirical_density.is_some() {
        columns.push("empirical_density");
    }
    columns.extend(cmp.comparisons.iter().map(|c| c.method.name()));
    let mut table = Table::new(&columns, Some(cfg.seed));
    for (i, &x) in cmp.grid.iter().enumerate() {
        let mut row = vec![x, cmp.empirical_cdf[i]];
        if let Some(d) = &cmp.empirical_density {
            row.push(d[i]);
        }
        row.extend(cmp.comparisons.iter().map(|c| c.values[i]));
        table.push(row);
    }
    let mut summary = format!(
        "compare-cdf: reps={} n={} m={} V={} Delta3={}\n  DKW floor (95%) = {}\n",
        sec.reps,
        sec.n,
        sec.m,
        fmt_short(cmp.params.v_nm),
        fmt_short(cmp.params.delta3_nm),
        fmt_short(cmp.dkw_floor)
    );
    for c in &cmp.comparisons {
        let _ = writeln!(
            summary,
            "  {:<20} sup_norm={}  mean_abs={}",
            c.method.name(),
            fmt_short(c.sup_norm),
            fmt_short(c.ks_like)
        );
    }
    Ok(Outcome {
        tables: vec![("compare_cdf.tsv".into(), table)],
        summary,
    })
}

fn run_optimal_lambda(cfg: &RunConfig) -> Result<Outcome> {
    let inputs: BlendInputs = cfg.optimal_lambda.inputs();
    let r = optimal_lambda(&inputs)?;
    let mut table = Table::new(
        &[
            "lambda_raw",
            "lambda_star",
            "objective_at_star",
            "objective_displayed_at_star",
            "sign_condition_met",
        ],
        None,
    );
    table.push(vec![
        r.lambda_raw,
        r.lambda_star,
        r.objective_at_star,
        mse_objective(r.lambda_star, &inputs),
        bool_f(r.sign_condition_met),
    ]);
    let summary = format!(
        "optimal-lambda: lambda*={}  raw={}  E(lambda*)={}  sign condition {}\n",
        fmt_short(r.lambda_star),
        fmt_short(r.lambda_raw),
        fmt_short(r.objective_at_star),
        if r.sign_condition_met {
            "holds"
        } else {
            "fails"
        }
    );
    Ok(Outcome {
        tables: vec![("optimal_lambda.tsv".into(), table)],
        summary,
    })
}

fn run_saddlepoint(cfg: &RunConfig) -> Result<Outcome> {
    let sec = &cfg.saddlepoint;
    let model = CgfModel::new(sec.v, sec.delta3)?;
    let grid = sec
        .grid
        .unwrap_or_else(|| GridSpec::around(0.0, sec.v.sqrt()));
    let mut table = Table::new(&["x", "density", "tail", "t_hat", "w_hat", "u_hat"], None);
    let mut skipped = 0;
    for x in grid.values() {
        if !model.in_domain(x) {
            skipped += 1;
            continue;
        }
        let e = evaluate(&model, x)?;
        table.push(vec![x, e.density, e.tail_upper, e.t_hat, e.w_hat, e.u_hat]);
    }
    let mut summary = format!(
        "saddlepoint: v={} delta3={}  points={} skipped(out of domain)={}\n",
        fmt_short(sec.v),
        fmt_short(sec.delta3),
        table.rows.len(),
        skipped
    );
    if skipped == 0 {
        let mass = density_integral(&model, grid.lo, grid.hi, 4000)?;
        let _ = writeln!(
            summary,
            "  density integral over grid = {}",
            fmt_short(mass)
        );
    }
    Ok(Outcome {
        tables: vec![("saddlepoint.tsv".into(), table)],
        summary,
    })
}

fn run_one_step(cfg: &RunConfig) -> Result<Outcome> {
    let sec = &cfg.one_step;
    match sec.mode {
        OneStepMode::Expansion => {
            let n = sec.n.unwrap_or_else(|| superlinear_n(sec.m));
            let study = onestep_expansion_check(
                sec.score, &sec.train, &sec.test, n, sec.m, sec.init, sec.reps, cfg.seed,
            )?;
            let mut table = Table::new(
                &[
                    "rep",
                    "mu0",
                    "mu_init",
                    "scaled_error",
                    "expansion",
                    "expansion_displayed",
                    "diff",
                    "diff_displayed",
                ],
                Some(cfg.seed),
            );
            for r in &study.rows {
                table.push(vec![
                    r.rep as f64,
                    r.mu0,
                    r.mu_init,
                    r.scaled_error,
                    r.expansion,
                    r.expansion_displayed,
                    r.diff,
                    r.diff_displayed,
                ]);
            }
            let summary = format!(
                "one-step: n={} m={} reps={}\n  median |diff| = {}  (displayed form: {})\n",
                n,
                sec.m,
                sec.reps,
                fmt_short(study.median_abs_diff),
                fmt_short(study.median_abs_diff_displayed)
            );
            Ok(Outcome {
                tables: vec![("one_step.tsv".into(), table)],
                summary,
            })
        }
        OneStepMode::Lan => {
            let study = lan_study(sec.score, &sec.test, sec.m, sec.reps, cfg.seed)?;
            let mut table = Table::new(&["rep", "z_m", "z_m_star", "eta_hat"], Some(cfg.seed));
            for r in &study.rows {
                table.push(vec![r.rep as f64, r.z_m, r.z_m_star, r.eta_hat]);
            }
            let summary = format!(
                "one-step (LAN): m={} reps={} mu0={}\n  mean(z_m)={}  var(z_m)={}  eta={}\n",
                sec.m,
                sec.reps,
                fmt_short(study.mu0),
                fmt_short(study.mean_z),
                fmt_short(study.var_z),
                fmt_short(study.eta)
            );
            Ok(Outcome {
                tables: vec![("one_step_lan.tsv".into(), table)],
                summary,
            })
        }
    }
}

fn run_bound(cfg: &RunConfig) -> Result<Outcome> {
    let sec = &cfg.bound;
    let scenario = sec.scenario()?;
    let rc = sec.risk_config()?;
    let r = bound_terms(&scenario, sec.n, sec.m, &rc)?;
    let mut report = Table::new(
        &[
            "a_term",
            "v_term",
            "t_p",
            "t_q",
            "lambda_eff",
            "lambda_eff_in_range",
            "term_bias_var",
            "term_test_conc",
            "term_skew",
            "prefactor",
            "total_excess",
        ],
        None,
    );
    report.push(vec![
        r.a_term,
        r.v_term,
        r.t_p,
        r.t_q,
        r.lambda_eff,
        bool_f(r.lambda_eff_in_range),
        r.term_bias_var,
        r.term_test_conc,
        r.term_skew,
        r.prefactor,
        r.total_excess,
    ]);
    let mut summary = format!(
        "bound: n={} m={} delta={}\n  A={} V={} lambda_eff={}{}\n  total excess bound = {}\n",
        sec.n,
        sec.m,
        fmt_short(rc.delta),
        fmt_short(r.a_term),
        fmt_short(r.v_term),
        fmt_short(r.lambda_eff),
        if r.lambda_eff_in_range {
            ""
        } else {
            " (outside [0, 1])"
        },
        fmt_short(r.total_excess)
    );
    let mut tables = vec![("bound.tsv".to_string(), report)];
    if sec.coverage_reps > 0 {
        if sec.scenario.is_some() {
            return Err(Error::config(
                "coverage draws from bound.train/bound.test; drop bound.scenario to run it",
            ));
        }
        let cov = coverage_experiment(
            &sec.train,
            &sec.test,
            sec.n,
            sec.m,
            &rc,
            &sec.coverage,
            sec.coverage_reps,
            cfg.seed,
        )?;
        let mut t = Table::new(
            &["rep", "lambda", "excess", "bound", "covered"],
            Some(cfg.seed),
        );
        for row in &cov.rows {
            t.push(vec![
                row.rep as f64,
                row.lambda,
                row.excess,
                row.bound,
                bool_f(row.covered),
            ]);
        }
        let d = rc.delta;
        let floor = 1.0 - d - 3.0 * (d * (1.0 - d) / sec.coverage_reps as f64).sqrt();
        let _ = writeln!(
            summary,
            "  coverage = {} over {} reps (binomial floor {})",
            fmt_short(cov.fraction),
            sec.coverage_reps,
            fmt_short(floor)
        );
        tables.push(("coverage.tsv".into(), t));
    }
    Ok(Outcome { tables, summary })
}

fn run_rate(cfg: &RunConfig) -> Result<Outcome> {
    let sec = &cfg.rate;
    let res = if sec.method.is_density() {
        let curve =
            sup_norm_error_curve(&sec.train, &sec.test, &sec.sizes, None, sec.reps, cfg.seed)?;
        let xs: Vec<f64> = curve.iter().map(|p| (p.n.min(p.m) as f64).ln()).collect();
        let ys: Vec<f64> = curve.iter().map(|p| p.sup_error.ln()).collect();
        RateResult {
            slope: ols_slope(&xs, &ys),
            noise_floor_hit: curve.iter().any(|p| p.sup_error <= p.noise_floor),
            points: curve
                .iter()
                .map(|p| RatePoint {
                    n: p.n,
                    m: p.m,
                    error: p.sup_error,
                    noise_floor: p.noise_floor,
                })
                .collect(),
        }
    } else {
        rate_regression(
            &sec.train, &sec.test, &sec.sizes, sec.method, sec.reps, cfg.seed,
        )?
    };
    let mut table = Table::new(&["n", "m", "error", "noise_floor"], Some(cfg.seed));
    for p in &res.points {
        table.push(vec![p.n as f64, p.m as f64, p.error, p.noise_floor]);
    }
    let summary = format!(
        "rate: method={} reps={}\n  log-log slope = {}{}\n",
        sec.method.name(),
        sec.reps,
        fmt_short(res.slope),
        if res.noise_floor_hit {
            "  (noise floor reached: slope reflects MC noise)"
        } else {
            ""
        }
    );
    Ok(Outcome {
        tables: vec![("rate.tsv".into(), table)],
        summary,
    })
}

fn run_mse_curve(cfg: &RunConfig) -> Result<Outcome> {
    let sec = &cfg.mse_curve;
    let lambdas = sec.lambdas.values();
    let pts = mse_curve(
        &sec.train, &sec.test, sec.n, sec.m, &lambdas, sec.reps, cfg.seed,
    )?;
    let mut table = Table::new(&["lambda", "mse", "se"], Some(cfg.seed));
    for p in &pts {
        table.push(vec![p.lambda, p.mse, p.se]);
    }
    let best = pts
        .iter()
        .min_by(|a, b| a.mse.total_cmp(&b.mse))
        .expect("grid has at least two points");
    let scenario = ShiftScenario::from_specs(&sec.train, &sec.test)?;
    let (pp, pq) = (
        population_moments(&sec.train)?,
        population_moments(&sec.test)?,
    );
    let star = optimal_lambda(&BlendInputs {
        delta_mu: scenario.delta_mu(),
        var_p_hat: pp.var,
        var_q_hat: pq.var,
        kappa3_p: pp.kappa3,
        kappa3_q: pq.kappa3,
        n: sec.n,
        m: sec.m,
    })?;
    let params = tnm_params(&scenario, sec.n, sec.m)?;
    let summary = format!(
        "mse-curve: n={} m={} reps={}\n  empirical argmin = {}  closed-form lambda* = {}  (V={})\n",
        sec.n,
        sec.m,
        sec.reps,
        fmt_short(best.lambda),
        fmt_short(star.lambda_star),
        fmt_short(params.v_nm)
    );
    Ok(Outcome {
        tables: vec![("mse_curve.tsv".into(), table)],
        summary,
    })
}

/// Parses `args`, runs the subcommand, writes outputs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_cli(&cli) {
        Ok(summary) => {
            if !cli.quiet {
                print!("{summary}");
            }
            0
        }
        Err(e) => {
            eprintln!("error[{}] {}: {e}", e.kind(), cli.command.name());
            e.exit_code()
        }
    }
}

fn run_cli(cli: &Cli) -> Result<String> {
    let cfg = resolve_config(cli)?;
    let outcome = execute(cli.command, &cfg)?;
    let dir = cfg.output_dir.clone().expect("resolved above");
    let echo = format!(
        "# resolved configuration for `bnshift {}`\n{}",
        cli.command.name(),
        cfg.to_toml()?
    );
    write_atomic(
        &dir.join(format!("{}.config.toml", section_key(cli.command.name()))),
        &echo,
    )?;
    let mut summary = outcome.summary;
    for (name, table) in &outcome.tables {
        let path = dir.join(name);
        write_atomic(&path, &table.render(cfg.format))?;
        let _ = writeln!(summary, "  wrote {}", path.display());
    }
    Ok(summary)
}
