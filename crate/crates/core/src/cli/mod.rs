//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 solver failure.

mod instance;

pub use instance::{
    FactorModelSpec, InstanceFile, LoadError, PinSpec, PolytopeSpec, SRectSpec, UncertaintyKind, UncertaintySpec,
};

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use serde_json::json;

use crate::error::Error;
use crate::experiments::{comparison_pipeline, ComparisonConfig, FactorSetup};
use crate::factor::{factorize_with_absorbing, nmf_factorize, NmfOptions};
use crate::mdp::{expected_reward, nominal_value_iteration, Policy, DEFAULT_EPS};
use crate::robust::{
    blackwell_scan, evaluate_worst_case_lp, s_rect_evaluate, s_rect_robust_vi, verify_duality, RobustProblem, Variant,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rmdp", version, about = "Robust MDPs under factor-matrix transition uncertainty")]
pub struct Cli {
    /// Worker threads for parallel sections (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Instance file (JSON).
    pub instance: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Uncertainty radius; `compare` accepts a comma-separated grid.
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn single_tau(&self) -> Result<Option<f64>, Error> {
        match self.tau.as_slice() {
            [] => Ok(None),
            [t] => Ok(Some(*t)),
            _ => Err(Error::invalid("tau", "this command takes a single radius")),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal policy of the nominal MDP.
    SolveNominal {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a factor model to the nominal kernel and write it into a new instance file (--out).
    BuildFactors {
        #[command(flatten)]
        common: Common,
        /// Number of factors (excluding pinned absorbing factors with --exclude-absorbing).
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value_t = 20_000)]
        max_iters: usize,
        /// Factor only non-absorbing rows and pin one factor per absorbing state.
        #[arg(long)]
        exclude_absorbing: bool,
    },
    /// Worst-case reward of a policy over the factor uncertainty set.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Policy file: a JSON matrix or a report with a `policy` field. Defaults to uniform.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Use the single linear program instead of value iteration.
        #[arg(long)]
        lp: bool,
    },
    /// Robust optimal policy over the factor uncertainty set.
    Improve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "f1")]
        variant: Variant,
    },
    /// s-rectangular baseline: robust value iteration, or evaluation with --policy.
    SRect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Nominal versus robust comparison tables (CSV).
    Compare {
        #[command(flatten)]
        common: Common,
        /// Total factor rank, pinned absorbing factors included; also the rank of B_r samples.
        #[arg(long, default_value_t = 4)]
        r: usize,
        /// Perturbed kernels per family and radius.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value = "f1")]
        variant: Variant,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Robust optimum across a discount grid.
    Blackwell {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        #[arg(long, default_value = "f1")]
        variant: Variant,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Load(_) | CliError::Io(_) => EXIT_INVALID,
            CliError::Model(e) if e.is_validation() => EXIT_INVALID,
            CliError::Model(_) => EXIT_SOLVER,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (program name first) and runs the command, writing reports
/// to `stdout` and diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    if let Some(n) = cli.threads {
        // A pool may already exist when running in-process more than once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit<T: Serialize>(report: &T, out: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let text = serde_json::to_string_pretty(report).expect("report serialises") + "\n";
    stdout.write_all(text.as_bytes())?;
    if let Some(path) = out {
        std::fs::write(path, &text)?;
    }
    Ok(())
}

fn load_policy(path: &Path) -> CliResult<Policy> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(LoadError::Json)?;
    let matrix = match value.get("policy") {
        Some(p) => p.clone(),
        None => value,
    };
    let rows: Vec<Vec<f64>> = serde_json::from_value(matrix).map_err(LoadError::Json)?;
    Ok(Policy::new(crate::numerics::Matrix::from_rows(&rows)?)?)
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::SolveNominal { common } => {
            let file = InstanceFile::load(&common.instance)?;
            let inst = file.instance()?;
            let p = file.nominal_kernel()?;
            let (policy, value) = nominal_value_iteration(&inst, &p, common.eps)?;
            let objective = expected_reward(&inst, &policy, &p)?;
            emit(
                &json!({ "policy": policy, "value": value, "objective": objective }),
                common.out.as_deref(),
                stdout,
            )
        }
        Command::BuildFactors {
            common,
            r,
            restarts,
            max_iters,
            exclude_absorbing,
        } => {
            let mut file = InstanceFile::load(&common.instance)?;
            let out = common
                .out
                .clone()
                .ok_or_else(|| Error::invalid("out", "build-factors writes a new instance file; pass --out"))?;
            let p = file.nominal_kernel()?;
            let opts = NmfOptions {
                max_iters,
                restarts,
                seed: common.seed,
                ..NmfOptions::default()
            };
            let (fm, pinned, res) = if exclude_absorbing {
                factorize_with_absorbing(&p, r, &opts)?
            } else {
                let res = nmf_factorize(&p, r, &opts)?;
                (res.factor_model(p.states(), p.actions())?, Vec::new(), res)
            };
            info!("best restart {} after {} iterations", res.restart, res.history.len() - 1);
            file.kernel = Some(p.to_nested());
            file.set_factor_model(&fm);
            if !pinned.is_empty() {
                let spec = file.uncertainty.get_or_insert(UncertaintySpec {
                    kind: UncertaintyKind::Budget,
                    tau: None,
                    c: 1.0,
                    pinned: Vec::new(),
                    factors: Vec::new(),
                });
                spec.pinned = pinned.into_iter().map(|(index, point)| PinSpec { index, point }).collect();
            }
            file.save(&out)?;
            emit(
                &json!({
                    "l2": res.residuals.l2,
                    "l1": res.residuals.l1,
                    "linf": res.residuals.linf,
                    "objective": res.objective,
                    "rank": fm.rank(),
                }),
                None,
                stdout,
            )
        }
        Command::Evaluate { common, policy, lp } => {
            let file = InstanceFile::load(&common.instance)?;
            let inst = file.instance()?;
            let fm = file.require_factor_model()?;
            let fu = file.uncertainty(&fm, common.single_tau()?)?;
            let problem = RobustProblem::new(&inst, &fm, &fu)?;
            let pi = match policy {
                Some(path) => load_policy(&path)?,
                None => Policy::uniform(inst.states(), inst.actions()),
            };
            if lp {
                let (z, cert) = evaluate_worst_case_lp(&problem, &pi)?;
                emit(&json!({ "objective": z, "certificate": cert }), common.out.as_deref(), stdout)
            } else {
                let wc = problem.evaluate_worst_case(&pi, common.eps)?;
                emit(
                    &json!({
                        "objective": wc.z,
                        "w_star": wc.w_star,
                        "beta": wc.beta,
                        "value": wc.value,
                        "iterations": wc.iterations,
                    }),
                    common.out.as_deref(),
                    stdout,
                )
            }
        }
        Command::Improve { common, variant } => {
            let file = InstanceFile::load(&common.instance)?;
            let inst = file.instance()?;
            let fm = file.require_factor_model()?;
            let fu = file.uncertainty(&fm, common.single_tau()?)?;
            let problem = RobustProblem::new(&inst, &fm, &fu)?;
            let report = problem.improve_policy(common.eps, variant)?;
            let check = verify_duality(&problem, &report, common.eps)?;
            emit(
                &json!({
                    "policy": report.policy,
                    "objective": report.objective,
                    "report": report,
                    "duality": check,
                }),
                common.out.as_deref(),
                stdout,
            )
        }
        Command::SRect { common, policy } => {
            let file = InstanceFile::load(&common.instance)?;
            let inst = file.instance()?;
            let sr = file.s_rect(common.single_tau()?)?;
            let sol = match policy {
                Some(path) => s_rect_evaluate(&inst, &sr, &load_policy(&path)?, common.eps)?,
                None => s_rect_robust_vi(&inst, &sr, common.eps)?,
            };
            emit(
                &json!({ "policy": sol.policy, "objective": sol.z, "value": sol.v, "iterations": sol.iterations }),
                common.out.as_deref(),
                stdout,
            )
        }
        Command::Compare {
            common,
            r,
            n,
            restarts,
            variant,
            json,
        } => {
            let file = InstanceFile::load(&common.instance)?;
            let inst = file.instance()?;
            let setup = match file.factor_model()? {
                Some(fm) => FactorSetup {
                    pinned: file
                        .uncertainty
                        .as_ref()
                        .map(|u| u.pinned.iter().map(|p| (p.index, p.point.clone())).collect())
                        .unwrap_or_default(),
                    fm,
                    residuals: None,
                },
                None => {
                    let opts = NmfOptions {
                        restarts,
                        seed: common.seed,
                        ..NmfOptions::default()
                    };
                    FactorSetup::from_kernel(&file.nominal_kernel()?, r, &opts)?
                }
            };
            let mut config = ComparisonConfig {
                r,
                n,
                seed: common.seed,
                eps: common.eps,
                variant,
                ..ComparisonConfig::default()
            };
            if !common.tau.is_empty() {
                config.taus = common.tau.clone();
            }
            let report = comparison_pipeline(&inst, &setup, &config)?;
            let csv = report.to_csv();
            stdout.write_all(csv.as_bytes())?;
            if let Some(path) = &common.out {
                std::fs::write(path, &csv)?;
            }
            if let Some(path) = json {
                std::fs::write(path, serde_json::to_string_pretty(&report).expect("report serialises") + "\n")?;
            }
            Ok(())
        }
        Command::Blackwell {
            common,
            lambdas,
            variant,
        } => {
            let file = InstanceFile::load(&common.instance)?;
            let inst = file.instance()?;
            let fm = file.require_factor_model()?;
            let fu = file.uncertainty(&fm, common.single_tau()?)?;
            let scan = blackwell_scan(&inst, &fm, &fu, &lambdas, common.eps, variant)?;
            emit(&scan, common.out.as_deref(), stdout)
        }
    }
}
