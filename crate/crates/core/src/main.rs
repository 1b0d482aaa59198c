use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use multicopter_cbf::config::ScenarioConfig;
use multicopter_cbf::output::{write_csv, Comparison};
use multicopter_cbf::sim::{run, SafetyReport, Scenario};
use multicopter_cbf::verify::{self, Fault};
use multicopter_cbf::Error;

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "mcbf", version, about = "Multicopter CBF safety-filter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trajectory.csv and report.json.
    Run(RunArgs),
    /// Simulate with and without the safety filter and write compare.json.
    Compare(RunArgs),
    /// Run the seeded property suites and print worst residuals.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML). The built-in orbit scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the simulated duration, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Seed for stochastic scenario elements (the shipped scenarios have none).
    #[arg(long)]
    seed: Option<u64>,
    /// Run the nominal controller alone.
    #[arg(long)]
    no_safety_filter: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Scenario whose vehicle and safety settings are checked.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<InjectedFault>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InjectedFault {
    VelocityResidualSign,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::SingularThrust { .. } | Error::IntegrationDiverged => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn load(path: Option<&Path>) -> Result<ScenarioConfig, Error> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::paper()),
    }
}

fn scenario(args: &RunArgs, filter: Option<bool>) -> Result<Scenario, Error> {
    let mut cfg = load(args.config.as_deref())?;
    if let Some(d) = args.duration {
        cfg.simulation.duration = d;
    }
    if let Some(s) = args.seed {
        cfg.simulation.seed = s;
    }
    if args.no_safety_filter {
        cfg.simulation.safety_filter = false;
    }
    if let Some(f) = filter {
        cfg.simulation.safety_filter = f;
    }
    cfg.to_scenario()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, value).map_err(|e| Error::Io(e.into()))
}

fn print_report(r: &SafetyReport) {
    println!(
        "{} ({}): {} steps, {} relaxed, {} saturated",
        r.scenario,
        if r.filter_enabled { "filter on" } else { "filter off" },
        r.steps,
        r.relaxed_steps,
        r.saturated_steps
    );
    for f in &r.families {
        println!(
            "  {:<16} min {:>10.6} at t = {:>7.3} s  violation intervals: {}",
            f.family.name(),
            f.min_h,
            f.min_time,
            f.violations.len()
        );
    }
    if r.filter_enabled {
        println!("  filter time: mean {:.4} ms, max {:.4} ms", r.solve_time.mean_ms, r.solve_time.max_ms);
    }
}

fn cmd_run(args: &RunArgs) -> Result<u8, Error> {
    let sc = scenario(args, None)?;
    fs::create_dir_all(&args.out_dir)?;
    let out = run(&sc)?;
    write_csv(BufWriter::new(File::create(args.out_dir.join("trajectory.csv"))?), &out.records)?;
    write_json(&args.out_dir.join("report.json"), &out.report)?;
    print_report(&out.report);
    Ok(if sc.filter_enabled && out.report.violated() { EXIT_VIOLATION } else { 0 })
}

fn cmd_compare(args: &RunArgs) -> Result<u8, Error> {
    let safe = scenario(args, Some(true))?;
    let nominal = scenario(args, Some(false))?;
    fs::create_dir_all(&args.out_dir)?;
    let (a, b) = std::thread::scope(|s| {
        let h = s.spawn(|| run(&nominal));
        let a = run(&safe);
        (a, h.join().expect("simulation thread panicked"))
    });
    let cmp = Comparison::new(a?.report, b?.report);
    write_json(&args.out_dir.join("compare.json"), &cmp)?;
    print_report(&cmp.filtered);
    print_report(&cmp.nominal);
    Ok(if cmp.filtered.violated() { EXIT_VIOLATION } else { 0 })
}

fn cmd_check(args: &CheckArgs) -> Result<u8, Error> {
    let cfg = load(args.config.as_deref())?;
    let params = cfg.vehicle_params()?;
    let safety = cfg.safety_config(&params)?;
    let fault = match args.inject_fault {
        None => Fault::None,
        Some(InjectedFault::VelocityResidualSign) => Fault::VelocityResidualSign,
    };
    let reports = verify::run_all(args.seed, &safety, &params, fault)?;
    let mut ok = true;
    for r in &reports {
        ok &= r.passed;
        println!(
            "{} {:<12} samples {:>5}  worst {:.3e}  tol {:.0e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.samples,
            r.worst,
            r.tolerance
        );
        for n in r.notes.iter().take(5) {
            println!("     {n}");
        }
    }
    Ok(if ok { 0 } else { EXIT_VIOLATION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
