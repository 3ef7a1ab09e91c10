//! Command-line front end of `rindler-core`: configuration, scans, reports and output validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod validate;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};

use config::RunConfig;
use error::CliError;
use output::{Format, Outcome};

#[derive(Debug, Parser)]
#[command(name = "rindler-rates", version, about = "Thermalization of a uniformly accelerated two-level detector")]
pub struct Cli {
    /// TOML run configuration (the bundled reference configuration when absent)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// output file; stdout when absent
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// worker threads for scan points
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// reserved; every computation is deterministic
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// override a configuration key, e.g. --set model.lambda=0.02
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,

    /// exit with status 3 when a reported check fails
    #[arg(long, global = true)]
    pub strict: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Golden-rule rates xi(E), eta(E) and relaxation times over an E grid
    Rates,
    /// Detailed-balance ratio S(-s)/S(s) against exp(-2 pi s)
    KmsCheck,
    /// Perturbative and truncated-Liouvillean resonances
    Resonances,
    /// Reduced detector dynamics towards the Gibbs state
    Simulate,
    /// Convergence of xi to the strictly localized coupling
    LocalizedLimit,
    /// Re-read an output file and re-check its invariants
    Validate {
        /// file written by one of the other subcommands
        path: PathBuf,
    },
    /// Print the effective configuration after overrides
    ShowConfig,
}

fn dump_path(out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".spectrum.json");
            PathBuf::from(s)
        }
        None => PathBuf::from("rindler-rates.spectrum.json"),
    }
}

fn report(o: &Outcome, to_stdout: bool) {
    let mut lines = vec![format!("{}: {} rows", o.kind, o.table.rows.len())];
    if let Some(obj) = o.summary.as_object() {
        for (k, v) in obj {
            if v.is_number() {
                lines.push(format!("  {k} = {v}"));
            }
        }
    }
    for c in &o.checks {
        lines.push(format!("  check {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    for l in lines {
        if to_stdout {
            println!("{l}");
        } else {
            eprintln!("{l}");
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be >= 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            warn!("thread pool already initialized: {e}");
        }
    }
    if cli.seed.is_some() {
        info!("--seed is reserved and has no effect");
    }
    if let Command::Validate { path } = &cli.command {
        let rep = validate::validate_file(path)?;
        println!(
            "validate {}: kind {}, {} rows, {} checks, {} violation(s){}",
            path.display(),
            rep.kind,
            rep.rows,
            rep.checked,
            rep.violations.len(),
            if rep.with_config { "" } else { " (no sidecar: config-dependent checks skipped)" }
        );
        for v in &rep.violations {
            println!("  {v}");
        }
        return if rep.violations.is_empty() { Ok(()) } else { Err(CliError::Invalid(rep.violations.len())) };
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    info!("config hash {}", cfg.hash());
    let out = cli.out.as_deref();
    let outcome = match &cli.command {
        Command::Rates => commands::rates(&cfg)?,
        Command::KmsCheck => commands::kms_check(&cfg)?,
        Command::Resonances => commands::resonances(&cfg, &dump_path(out))?,
        Command::Simulate => commands::simulate(&cfg)?,
        Command::LocalizedLimit => commands::localized_limit(&cfg)?,
        Command::ShowConfig => {
            print!("{}", cfg.canonical());
            return Ok(());
        }
        Command::Validate { .. } => unreachable!(),
    };
    let default_format = if matches!(cli.command, Command::Resonances) { Format::Json } else { Format::Csv };
    output::write(&outcome, &cfg, cli.format.unwrap_or(default_format), out)?;
    report(&outcome, out.is_some());
    let total = outcome.table.rows.len();
    if outcome.failed_rows > 0 {
        return Err(if outcome.failed_rows == total {
            CliError::Numerical(format!("all {total} scan points failed"))
        } else {
            CliError::Partial(outcome.failed_rows, total)
        });
    }
    let failed = outcome.checks.iter().filter(|c| !c.passed).count();
    if cli.strict && failed > 0 {
        return Err(CliError::Numerical(format!("{failed} check(s) failed")));
    }
    Ok(())
}
