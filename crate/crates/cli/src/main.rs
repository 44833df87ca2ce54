//! Batch runner: one config file in, CSV and JSON out.
//!
//! Exit status is 0 on success, 1 when a statistical verdict fails, 2 for
//! configuration errors and 3 for numerical failures.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use mhawkes::config::{Config, PathFormat};
use mhawkes::limits::LimitConstants;
use mhawkes::microbes::all_constants;
use mhawkes::model::{validate, ModelSpec};
use mhawkes::montecarlo::{run_experiment, Mode, Status, StatsReport};
use mhawkes::resolvent::{GridSpec, ResolventTable};
use mhawkes::simulate::{io, simulate_replica, SimOptions};
use mhawkes::Error;

#[derive(Parser, Debug)]
#[command(name = "mhawkes", version, about = "Marked Hawkes processes with immigration: resolvents, limit constants and Monte Carlo checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the resolvent equations and write the grids.
    Resolvent(Common),
    /// Compute drifts and limit variances.
    Constants(Common),
    /// Simulate paths.
    Simulate(Common),
    /// Check the laws of large numbers by simulation.
    VerifyLln(Common),
    /// Check the central limit theorems by simulation.
    VerifyClt(Common),
    /// Constants of the budding-microbe model.
    Microbes(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Resolvent(c)
            | Command::Constants(c)
            | Command::Simulate(c)
            | Command::VerifyLln(c)
            | Command::VerifyClt(c)
            | Command::Microbes(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Resolvent(_) => "resolvent",
            Command::Constants(_) => "constants",
            Command::Simulate(_) => "simulate",
            Command::VerifyLln(_) => "verify-lln",
            Command::VerifyClt(_) => "verify-clt",
            Command::Microbes(_) => "microbes",
        }
    }
}

enum Outcome {
    Pass,
    StatisticalFail,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> mhawkes::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn solve(spec: &ModelSpec, config: &Config) -> mhawkes::Result<(GridSpec, ResolventTable)> {
    let grid = config.grid.resolve(spec)?;
    Ok((grid, ResolventTable::solve(spec, grid)?))
}

fn run(cmd: &Command) -> mhawkes::Result<Outcome> {
    let common = cmd.common();
    let config = Config::load(&common.config)?;
    let seed = common.seed.unwrap_or(config.seed);
    // fail fast: every block this command needs is checked before any work
    let spec = config.spec()?;
    let experiment = match cmd {
        Command::VerifyLln(_) | Command::VerifyClt(_) => Some(config.experiment(seed)?),
        _ => None,
    };
    if matches!(cmd, Command::Simulate(_)) && config.simulate.is_none() {
        return Err(Error::Config("missing [simulate] block".into()));
    }
    if matches!(cmd, Command::Microbes(_)) && config.microbes.is_none() {
        return Err(Error::Config("missing [microbes] block".into()));
    }
    let out = &common.out;
    fs::create_dir_all(out)?;

    match cmd {
        Command::Resolvent(_) => {
            let (grid, table) = solve(&spec, &config)?;
            table.write_dir(out)?;
            println!("resolvent: h = {}, horizon = {}, |R_H| = {}, |R_I| = {}", grid.h, grid.horizon, table.l1_rh, table.l1_ri);
            Ok(Outcome::Pass)
        }
        Command::Constants(_) => {
            let (_, table) = solve(&spec, &config)?;
            let constants = LimitConstants::compute(&spec, &table)?;
            write_json(&out.join("constants.json"), &constants)?;
            write_json(&out.join("validation.json"), &validate(&spec))?;
            if let Some(p) = &config.microbes {
                write_json(&out.join("microbes.json"), &all_constants(p)?)?;
            }
            println!(
                "constants: m = {}, hawkes drift = {}, sigma_Z^2 = {}",
                constants.branching_ratio, constants.hawkes_drift, constants.sigma_z2
            );
            Ok(Outcome::Pass)
        }
        Command::Simulate(_) => {
            let sim = config.simulate.expect("checked above");
            let opts = SimOptions::default();
            for r in 0..sim.replicas {
                let path = simulate_replica(&spec, sim.horizon, seed, r as u64, &opts)?;
                if matches!(sim.format, PathFormat::Csv | PathFormat::Both) {
                    io::write_csv(&path, BufWriter::new(File::create(out.join(format!("path_{r}.csv")))?))?;
                }
                if matches!(sim.format, PathFormat::Binary | PathFormat::Both) {
                    let mut w = BufWriter::new(File::create(out.join(format!("path_{r}.bin")))?);
                    io::write_binary(&path, &mut w)?;
                    w.flush()?;
                }
                println!("simulate: replica {r}: {} events", path.events.len());
            }
            Ok(Outcome::Pass)
        }
        Command::VerifyLln(_) | Command::VerifyClt(_) => {
            let mut e = experiment.expect("checked above");
            e.mode = if matches!(cmd, Command::VerifyLln(_)) { Mode::Lln } else { Mode::Clt };
            let (_, table) = solve(&spec, &config)?;
            let constants = LimitConstants::compute(&spec, &table)?;
            let report = run_experiment(&spec, &constants, &e)?;
            write_json(&out.join("report.json"), &report)?;
            let mut w = BufWriter::new(File::create(out.join("report.csv"))?);
            report.write_csv(&mut w)?;
            w.flush()?;
            print_verdicts(&report);
            Ok(if report.pass { Outcome::Pass } else { Outcome::StatisticalFail })
        }
        Command::Microbes(_) => {
            let params = config.microbes.as_ref().expect("checked above");
            let c = all_constants(params)?;
            write_json(&out.join("microbes.json"), &c)?;
            println!(
                "microbes: m = {}, drift_B = {}, drift_T = {}, progeny variance = {}",
                c.budding.branching_ratio, c.budding.drift_b, c.progeny.drift, c.progeny.total_variance
            );
            Ok(Outcome::Pass)
        }
    }
}

fn print_verdicts(report: &StatsReport) {
    for v in report.all_verdicts() {
        let status = match v.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let scale = v.scale.map(|t| format!(" T={t}")).unwrap_or_default();
        println!("{status} {}{scale}: estimate {} vs reference {} (tolerance {})", v.name, v.estimate, v.reference, v.tolerance);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = cli.command.common().clone();
    let threads = common.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        eprintln!("error: --threads must be positive");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(3);
    }

    let started = unix_seconds();
    let result = run(&cli.command);
    let (code, status) = match &result {
        Ok(Outcome::Pass) => (0, "pass".to_string()),
        Ok(Outcome::StatisticalFail) => (1, "statistical failure".to_string()),
        Err(e) if e.is_config() => (2, e.to_string()),
        Err(e) => (3, e.to_string()),
    };
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    if common.out.is_dir() {
        let meta = serde_json::json!({
            "command": cli.command.name(),
            "config": common.config.display().to_string(),
            "seed": common.seed,
            "threads": threads,
            "version": env!("CARGO_PKG_VERSION"),
            "started_unix": started,
            "finished_unix": unix_seconds(),
            "exit_code": code,
            "status": status,
        });
        if let Err(e) = write_json(&common.out.join("metadata.json"), &meta) {
            eprintln!("warning: cannot write metadata: {e}");
        }
    }
    ExitCode::from(code)
}
