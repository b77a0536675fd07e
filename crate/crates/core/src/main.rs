use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ograd::geometry::SyntheticConstraint;
use ograd::harness::{self, ExperimentConfig, Fault, VerifyOptions};
use ograd::metrics::{energy_distance, mae, max_abs_constraint};
use ograd::targets::synthetic_ground_truth;
use ograd::{io, Error};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ograd",
    version,
    about = "Orthogonal-space gradient samplers on level sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config and write samples, metrics and metadata.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check closed-form geometry against finite differences.
    Verify {
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Energy distance between two sample files, plus constraint error of each.
    Metrics {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = ConstraintArg::Synthetic)]
        constraint: ConstraintArg,
    },
    /// Write exact samples of the conditioned synthetic target.
    Groundtruth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    NegateCorrection,
    CriticalPoint,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConstraintArg {
    Synthetic,
}

fn fail(code: u8, err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn cmd_run(config: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, &e),
    };
    let outcome = match harness::run_experiment(&cfg) {
        Ok(o) => o,
        Err(e @ Error::Step { .. }) => return fail(EXIT_RUNTIME, &e),
        Err(e) => return fail(EXIT_USAGE, &e),
    };
    for w in &outcome.record.warnings {
        eprintln!("warning: {w}");
    }
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    if let Err(e) = harness::write_outputs(&dir, &cfg, &outcome) {
        return fail(EXIT_USAGE, &e);
    }
    let last = |name: &str| {
        outcome
            .metrics
            .iter()
            .find(|m| m.name == name)
            .and_then(|m| m.last())
            .unwrap_or(f64::NAN)
    };
    println!(
        "{} finished {} iterations in {:.3}s: mae={:.6e} energy_distance={:.6e} -> {}",
        cfg.sampler.method.name(),
        cfg.sampler.n_iters,
        outcome.record.wall_time_secs,
        last("mae"),
        last("energy_distance"),
        dir.display()
    );
    ExitCode::SUCCESS
}

fn cmd_verify(points: usize, seed: u64, fault: Option<FaultArg>) -> ExitCode {
    let opts = VerifyOptions {
        points,
        seed,
        fault: fault.map(|f| match f {
            FaultArg::NegateCorrection => Fault::NegateCorrection,
            FaultArg::CriticalPoint => Fault::CriticalPoint,
        }),
        ..VerifyOptions::default()
    };
    match harness::run_verify(&opts) {
        Ok(report) => {
            print!("{}", report.render());
            if report.all_passed() {
                println!("all checks passed");
                ExitCode::SUCCESS
            } else {
                println!(
                    "{} check(s) failed",
                    report.rows.iter().filter(|r| !r.passed).count()
                );
                ExitCode::from(EXIT_VERIFY_FAILED)
            }
        }
        Err(e) => fail(EXIT_USAGE, &e),
    }
}

fn cmd_metrics(a: PathBuf, b: PathBuf, constraint: ConstraintArg) -> ExitCode {
    let result = (|| -> ograd::Result<serde_json::Value> {
        let sa = io::read_samples(&a)?;
        let sb = io::read_samples(&b)?;
        let ConstraintArg::Synthetic = constraint;
        let c = SyntheticConstraint;
        Ok(json!({
            "energy_distance": energy_distance(&sa, &sb)?,
            "a": {"path": a, "n": sa.len(), "mae": mae(&sa, &c), "max_abs_g": max_abs_constraint(&sa, &c)},
            "b": {"path": b, "n": sb.len(), "mae": mae(&sb, &c), "max_abs_g": max_abs_constraint(&sb, &c)},
        }))
    })();
    match result {
        Ok(v) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&v).expect("json values serialize")
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_USAGE, &e),
    }
}

fn cmd_groundtruth(n: usize, seed: u64, out: PathBuf) -> ExitCode {
    let result = synthetic_ground_truth(n, seed).and_then(|s| io::write_samples(&out, &s));
    match result {
        Ok(()) => {
            println!("wrote {n} samples to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_USAGE, &e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run { config, out } => cmd_run(config, out),
        Command::Verify {
            points,
            seed,
            inject_fault,
        } => cmd_verify(points, seed, inject_fault),
        Command::Metrics { a, b, constraint } => cmd_metrics(a, b, constraint),
        Command::Groundtruth { n, seed, out } => cmd_groundtruth(n, seed, out),
    }
}
