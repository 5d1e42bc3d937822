use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use fermat_rays::{catalog_listing, emit_outputs, load_scenario, run, scenario};

#[derive(Parser)]
#[command(name = "fermat-rays", version, about = "Light rays from an event to an observer by arrival-time shortening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write reports.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Probe light convexity of the region before searching.
        #[arg(long)]
        check_convexity: bool,
        /// Compare conjugate-point indices with the Hessian inertia.
        #[arg(long)]
        hessian_crosscheck: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Search past-pointing rays.
        #[arg(long)]
        past: bool,
    },
    /// Parse and validate a scenario, printing the resolved form.
    Validate { scenario: PathBuf },
    /// List the built-in charts.
    Catalog,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<u8> {
    match Cli::parse().command {
        Command::Catalog => {
            for (name, about) in catalog_listing() {
                println!("{name:<28} {about}");
            }
            Ok(0)
        }
        Command::Validate { scenario } => {
            let sc = load_scenario(&scenario)?;
            print!("{}", sc.to_toml());
            Ok(0)
        }
        Command::Run {
            scenario: path,
            out,
            check_convexity,
            hessian_crosscheck,
            seed,
            past,
        } => {
            let mut sc = load_scenario(&path)?;
            sc.checks.convexity |= check_convexity;
            sc.checks.hessian_crosscheck |= hessian_crosscheck;
            if let Some(s) = seed {
                sc.seed = s;
            }
            if past && !sc.past {
                sc.past = true;
                sc = scenario::resolve(sc)?;
            }
            let outcome = run(&sc)?;
            emit_outputs(&outcome, &out)?;
            let rep = &outcome.report;
            for r in &rep.records {
                let mu = r.mu.map_or("?".to_string(), |m| m.to_string());
                println!("ray {}: tau = {} mu = {mu}", r.id, r.tau);
            }
            println!("ledger: {}", rep.ledger.relations.verdict);
            for w in &rep.exit.warnings {
                println!("warning: {w}");
            }
            for r in &rep.exit.reasons {
                println!("failure: {r}");
            }
            println!("reports written to {}", out.display());
            Ok(rep.exit.code as u8)
        }
    }
}
