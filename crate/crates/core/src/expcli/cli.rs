//! Argument parsing and exit codes.
//!
//! Exit codes: 0 success, 1 a certificate failed or an instance errored,
//! 2 invalid arguments or config, 3 any other runtime error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::run::{self, RunOptions};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "slope-lab", version, about = "Slopes, subgradient flows and slope-stability certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Multiplies every numerical tolerance.
    #[arg(long, default_value_t = 1.0)]
    pub tol_scale: f64,
    /// Omit the timestamp header line from outputs.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the flow of one instance as JSON lines.
    Flow {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        instance: usize,
    },
    /// Full certificate report for one instance.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        instance: usize,
    },
    /// Certify every instance of the config.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Recover `f(x) - f_*` from slopes along the flow.
    Reconstruct {
        #[command(flatten)]
        common: Common,
    },
    /// Curve length over distance to the argmin set, per dimension.
    Knstudy {
        #[command(flatten)]
        common: Common,
        /// Run every sweep in this dimension only.
        #[arg(long)]
        n: Option<usize>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Flow { common, .. }
            | Command::Verify { common, .. }
            | Command::Sweep { common }
            | Command::Reconstruct { common }
            | Command::Knstudy { common, .. } => common,
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => 2,
                _ => 3,
            }
        }
    }
}

fn execute(cmd: &Command) -> Result<i32> {
    let common = cmd.common();
    if !(common.tol_scale > 0.0 && common.tol_scale.is_finite()) {
        return Err(Error::Config(format!("--tol-scale: must be positive, got {}", common.tol_scale)));
    }
    let cfg = ExperimentConfig::load(&common.config)?;
    let opts = RunOptions {
        out: common.out.clone(),
        seed: common.seed,
        tol_scale: common.tol_scale,
        timestamp: !common.no_timestamp,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs: must be positive".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| dispatch(cmd, &cfg, &opts))
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<i32> {
    match cmd {
        Command::Flow { instance, .. } => {
            let (traj, cert) = run::flow_one(cfg, opts, *instance)?;
            println!(
                "instance {instance}: {} steps, termination {:?}, length {:.9}, d(x0,C_f) {:.9}, lemma bound {:.9} ({})",
                traj.last_index(),
                traj.termination,
                traj.total_length(),
                cert.dist0,
                cert.lemma1_bound,
                if cert.passed { "pass" } else { "FAIL" }
            );
            Ok(if cert.passed { 0 } else { 1 })
        }
        Command::Verify { instance, .. } => {
            let out = run::verify_one(cfg, opts, *instance)?;
            println!("{}", serde_json::to_string_pretty(&out.report)?);
            let r = &out.report;
            let kind = if r.equality { "equality case" } else { "strict" };
            println!(
                "instance {instance}: lhs {:.12} rhs {:.12} margin {:.3e} [{}; {kind}] {}",
                r.lhs,
                r.rhs_main,
                r.margin,
                r.proof_case.label(),
                if r.passed { "certified" } else { "FAILED" }
            );
            Ok(if r.passed && out.certificate.passed { 0 } else { 1 })
        }
        Command::Sweep { .. } => {
            let res = run::sweep(cfg, opts);
            run::write_sweep(&res, cfg, opts)?;
            let s = &res.summary;
            println!(
                "{} instances: {} certified, {} failed, {} errors, {} equality cases; min margin {:.3e}",
                s.instances, s.certified, s.certificate_failures, s.errors, s.equality_cases, s.min_margin
            );
            for (n, k) in &s.empirical_k {
                println!(
                    "n={n}: max length ratio {:.6} over {} flows (order bound {})",
                    k.max_ratio, k.count, k.order_bound
                );
            }
            Ok(if s.failures() == 0 { 0 } else { 1 })
        }
        Command::Reconstruct { .. } => {
            let rows = run::reconstruct_all(cfg, opts)?;
            for r in &rows {
                println!(
                    "instance {}: gap {:.9} reconstructed {:.9} (rel err {:.2e}, bracket [{:.9}, {:.9}])",
                    r.instance_id, r.gap, r.integral, r.rel_err, r.lower, r.upper
                );
            }
            Ok(0)
        }
        Command::Knstudy { n, .. } => {
            if let Some(n) = n {
                if !(1..=16).contains(n) {
                    return Err(Error::Config(format!("--n: must be in 1..=16, got {n}")));
                }
            }
            let (_, studies) = run::knstudy(cfg, opts, *n)?;
            let mut ok = true;
            for (n, s) in &studies {
                println!(
                    "n={n}: max ratio {:.6} (median {:.6}) over {} flows, {} excluded; order bound {}",
                    s.max_ratio, s.median_ratio, s.count, s.excluded, s.order_bound
                );
                ok &= s.within_bound;
            }
            Ok(if ok { 0 } else { 1 })
        }
    }
}
