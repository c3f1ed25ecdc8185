//! `l2man`: batch driver for the L²(Ω, M) experiments.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use l2man::{ManifoldSpec, ProbSpace};

use config::{load_json, ConfigError, Experiment, ExperimentConfig, GalleryCase};
use run::{output_path, RunContext};

#[derive(Parser, Debug)]
#[command(name = "l2man", version, about = "Metric geometry and rigidity checks for L²(Ω, M)")]
struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where to write the JSON report (stdout if omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; more than one enables parallel decomposition.
    #[arg(long, global = true, value_name = "K")]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default)]
struct DomainArgs {
    /// ProbSpace JSON file.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Uniform grid space with this many atoms.
    #[arg(long, conflicts_with = "space")]
    uniform: Option<usize>,
    /// ManifoldSpec JSON file.
    #[arg(long)]
    manifold: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a probability space and summarize its automorphisms.
    Space {
        #[command(flatten)]
        domain: DomainArgs,
    },
    /// Numeric Alexandrov angles against the closed form.
    Angle {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long)]
        pairs: Option<usize>,
        /// CSV file for the convergence trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Recover (φ, ρ) from an isometry oracle.
    Decompose {
        #[command(flatten)]
        domain: DomainArgs,
        /// generated, identity, automorphism, pointwise, r1 or hilbert.
        #[arg(long)]
        oracle: Option<String>,
        /// L2Isometry JSON used by the generated oracle.
        #[arg(long)]
        isometry: Option<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
        /// RIGID or NON_RIGID.
        #[arg(long)]
        expect: Option<String>,
    },
    /// Recover η from an affine oracle.
    EtaRecover {
        #[command(flatten)]
        domain: DomainArgs,
        /// builtin:<name>
        #[arg(long)]
        oracle: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        pairs: Option<usize>,
        /// AFFINE or NOT_AFFINE.
        #[arg(long)]
        expect: Option<String>,
    },
    /// Counterexample gallery.
    Gallery {
        #[command(subcommand)]
        action: GalleryAction,
    },
    /// The full acceptance battery.
    Suite,
}

#[derive(Subcommand, Debug)]
enum GalleryAction {
    Run {
        #[arg(long, value_enum)]
        case: Option<GalleryCase>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        pairs: Option<usize>,
        /// Product or factor manifold JSON.
        #[arg(long)]
        manifold: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn apply_domain(cfg: &mut ExperimentConfig, d: DomainArgs) -> Result<(), ConfigError> {
    if let Some(p) = d.space {
        cfg.space = Some(load_json::<ProbSpace>(&p)?);
        cfg.uniform = None;
    }
    if d.uniform.is_some() {
        cfg.uniform = d.uniform;
        cfg.space = None;
    }
    if let Some(p) = d.manifold {
        cfg.manifold = Some(load_json::<ManifoldSpec>(&p)?);
    }
    Ok(())
}

/// Merges the config file with the subcommand flags. Returns the config and
/// an explicit report path, if the subcommand took one.
fn resolve(cli: Cli) -> Result<(ExperimentConfig, Option<PathBuf>, Option<PathBuf>, RunContext), ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => load_json::<ExperimentConfig>(p)?,
        None => ExperimentConfig::default(),
    };
    let mut report = None;
    let chosen = match cli.command {
        None => None,
        Some(Command::Space { domain }) => {
            apply_domain(&mut cfg, domain)?;
            Some(Experiment::Space)
        }
        Some(Command::Angle { domain, pairs, trace }) => {
            apply_domain(&mut cfg, domain)?;
            set(&mut cfg.pairs, pairs);
            set(&mut cfg.trace, trace);
            Some(Experiment::Angle)
        }
        Some(Command::Decompose { domain, oracle, isometry, m, expect }) => {
            apply_domain(&mut cfg, domain)?;
            set(&mut cfg.oracle, oracle);
            if let Some(p) = isometry {
                cfg.isometry = Some(load_json(&p)?);
            }
            set(&mut cfg.m, m);
            set(&mut cfg.expect, expect);
            Some(Experiment::Decompose)
        }
        Some(Command::EtaRecover { domain, oracle, report: r, pairs, expect }) => {
            apply_domain(&mut cfg, domain)?;
            set(&mut cfg.oracle, oracle);
            set(&mut cfg.pairs, pairs);
            set(&mut cfg.expect, expect);
            report = r;
            Some(Experiment::EtaRecover)
        }
        Some(Command::Gallery { action: GalleryAction::Run { case, m, k, pairs, manifold, report: r } }) => {
            set(&mut cfg.case, case);
            set(&mut cfg.m, m);
            set(&mut cfg.k, k);
            set(&mut cfg.pairs, pairs);
            if let Some(p) = manifold {
                cfg.manifold = Some(load_json(&p)?);
            }
            report = r;
            Some(Experiment::Gallery)
        }
        Some(Command::Suite) => Some(Experiment::Suite),
    };
    if let Some(e) = chosen {
        if cfg.experiment.is_some_and(|c| c != e) {
            return Err(ConfigError(format!(
                "config field `experiment` is {:?} but the subcommand asks for {e:?}",
                cfg.experiment.unwrap()
            )));
        }
        cfg.experiment = Some(e);
    }
    let threads = cli.parallel.unwrap_or(1);
    if threads == 0 {
        return Err(ConfigError("--parallel must be at least 1".into()));
    }
    if threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| ConfigError(format!("cannot start worker pool: {e}")))?;
    }
    let ctx = RunContext {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        parallel: threads > 1,
    };
    Ok((cfg, report, cli.out, ctx))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let outcome = resolve(cli).and_then(|(cfg, report, out, ctx)| {
        let outcome = run::run(&cfg, &ctx)?;
        match output_path(report, out) {
            Some(path) => std::fs::write(&path, &outcome.json)
                .map_err(|e| ConfigError(format!("cannot write {}: {e}", path.display())))?,
            None => print!("{}", outcome.json),
        }
        Ok(outcome)
    });
    match outcome {
        Ok(o) => {
            for line in &o.lines {
                eprintln!("{line}");
            }
            eprintln!(
                "{} in {:.2}s",
                if o.passed { "PASS" } else { "FAIL" },
                started.elapsed().as_secs_f64()
            );
            if o.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
