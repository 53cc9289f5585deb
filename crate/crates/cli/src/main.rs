//! `jla`: run joint-limit avoidance experiments from TOML configs.
//!
//! Exit codes: 0 clean run, 1 invalid config or other error, 2 a joint
//! limit was reached, 3 the simulation diverged.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use jla_core::analysis::{report, RunReport};
use jla_core::config::ExperimentConfig;
use jla_core::control::ControlLaw;
use jla_core::fuzz::fuzz_configs;
use jla_core::plot::plot_trace;
use jla_core::selftest::{run_selftest, SelfTestSetup};
use jla_core::simulation::{
    compare_breaking_forces, run, run_batch, BreakingForce, ExternalForceProfile, SimConfig, SimTrace,
};
use jla_core::trace::{save_csv, TraceTable};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_VIOLATION: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "jla", version, about = "Joint-limit avoidance experiments on a planar arm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (or a randomized batch for configs with a [fuzz] table).
    Run(RunArgs),
    /// Run the same experiment under several laws and compare them.
    Compare(CommonArgs),
    /// Check the model and parametrization invariants.
    Selftest,
    /// Re-plot a saved trace CSV.
    Plot {
        trace: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Config file path or shipped preset name.
    config: String,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_parser = parse_law)]
    law: Option<ControlLaw>,
}

fn parse_law(s: &str) -> Result<ControlLaw, String> {
    s.parse().map_err(|e: jla_core::Error| e.to_string())
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which here means a limit violation
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Selftest => Ok(cmd_selftest()),
        Command::Plot { trace, out_dir } => cmd_plot(&trace, out_dir),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let diverged = e
                .chain()
                .filter_map(|c| c.downcast_ref::<jla_core::Error>())
                .any(|c| c.is_divergence());
            ExitCode::from(if diverged { EXIT_DIVERGED } else { EXIT_ERROR })
        }
    }
}

fn load(args: &CommonArgs, law: Option<ControlLaw>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(law) = law {
        config.law = law;
    }
    if let Some(dt) = args.dt {
        config.sim.dt = dt;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    // re-validate with the overrides applied
    config.to_sim_config()?;
    Ok(config)
}

fn out_dir(args: &CommonArgs, config: &ExperimentConfig) -> PathBuf {
    args.out_dir
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(&config.name))
}

fn exit_code(reports: &[RunReport]) -> u8 {
    if reports.iter().any(|r| r.diverged) {
        EXIT_DIVERGED
    } else if reports.iter().any(|r| r.violated || r.left_feasible_space) {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    }
}

/// Writes the trace, report and plots of one run under `dir`.
fn emit_run(config: &ExperimentConfig, sim: &SimConfig, trace: &SimTrace, dir: &Path) -> Result<RunReport> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let rep = report(trace, &sim.limits)?;
    fs::write(dir.join("report.txt"), rep.to_text())?;
    fs::write(
        dir.join("summary.csv"),
        format!("{}\n{}\n", RunReport::csv_header(sim.limits.n()), rep.csv_row()),
    )?;
    if config.output.trace || config.output.plots {
        let csv = dir.join("trace.csv");
        save_csv(trace, &sim.limits, &csv)?;
        if config.output.plots {
            plot_trace(&TraceTable::load(&csv)?, dir)?;
        }
        if !config.output.trace {
            fs::remove_file(&csv)?;
        }
    }
    Ok(rep)
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let config = load(&args.common, args.law)?;
    let sim = config.to_sim_config()?;
    let dir = out_dir(&args.common, &config);
    if let Some(spec) = config.fuzz_spec() {
        return run_fuzz(&config, &sim, &spec, &dir);
    }
    let trace = run(&sim)?;
    let rep = emit_run(&config, &sim, &trace, &dir)?;
    print!("{}", rep.to_text());
    println!("output                 {}", dir.display());
    Ok(exit_code(&[rep]))
}

fn run_fuzz(
    config: &ExperimentConfig,
    sim: &SimConfig,
    spec: &jla_core::fuzz::FuzzSpec,
    dir: &Path,
) -> Result<u8> {
    let configs = fuzz_configs(sim, spec);
    let traces = run_batch(&configs);
    fs::create_dir_all(dir)?;
    let mut summary = format!("run,{}\n", RunReport::csv_header(sim.limits.n()));
    let mut reports = Vec::with_capacity(traces.len());
    for (k, (c, trace)) in configs.iter().zip(traces).enumerate() {
        let trace = trace.with_context(|| format!("fuzz run {k}"))?;
        let rep = if config.output.trace || config.output.plots {
            emit_run(config, c, &trace, &dir.join(format!("run_{k:03}")))?
        } else {
            report(&trace, &c.limits)?
        };
        summary.push_str(&format!("{k},{}\n", rep.csv_row()));
        reports.push(rep);
    }
    fs::write(dir.join("summary.csv"), summary)?;
    let violated = reports.iter().filter(|r| r.violated).count();
    let min_margin = reports.iter().map(|r| r.min_margin.min()).fold(f64::INFINITY, f64::min);
    let worst_xi = reports.iter().map(|r| r.final_xi_err.max(r.final_xi_err_dot)).fold(0.0, f64::max);
    println!("runs                   {}", reports.len());
    println!("runs with violation    {violated}");
    println!("min margin [deg]       {:.4}", min_margin.to_degrees());
    println!("worst final xi error   {worst_xi:.3e}");
    println!("output                 {}", dir.display());
    Ok(exit_code(&reports))
}

fn cmd_compare(args: CommonArgs) -> Result<u8> {
    let config = load(&args, None)?;
    let sim = config.to_sim_config()?;
    let dir = out_dir(&args, &config);
    let laws = config.laws_to_compare();

    let mut reports = Vec::new();
    for law in &laws {
        let mut c = sim.clone();
        c.controller.law = *law;
        let trace = run(&c)?;
        reports.push(emit_run(&config, &c, &trace, &dir.join(law.name()))?);
    }
    println!(
        "{:<10} {:>18} {:>10} {:>16} {:>14}",
        "law", "min margin [deg]", "episodes", "final |q~| [rad]", "final |xi~|"
    );
    for rep in &reports {
        println!(
            "{:<10} {:>18.4} {:>10} {:>16.3e} {:>14.3e}",
            rep.law.name(),
            rep.min_margin.min().to_degrees(),
            rep.violation_episodes,
            rep.final_q_err,
            rep.final_xi_err
        );
    }

    let searchable = matches!(sim.force, ExternalForceProfile::Ramp { .. }) && sim.reference.is_constant();
    if searchable {
        let results = compare_breaking_forces(&sim, &laws, config.ramp_search());
        let mut forces = Vec::new();
        println!();
        println!("{:<10} {:>20}", "law", "breaking force [N]");
        for (law, result) in results {
            let force = result.with_context(|| format!("breaking-force search for {law}"))?;
            let shown = match force {
                BreakingForce::Broke(f) => format!("{f:.2}"),
                BreakingForce::NoBreak { cap } => format!("> {cap:.2}"),
            };
            println!("{:<10} {:>20}", law.name(), shown);
            forces.push((law, force));
        }
        if let (Some(first), Some(last)) = (forces.first(), forces.last()) {
            let ratio = last.1.value() / first.1.value();
            let bound = if matches!(last.1, BreakingForce::NoBreak { .. }) { ">= " } else { "" };
            println!("ratio {}/{}: {bound}{ratio:.3}", last.0.name(), first.0.name());
        }
    }
    println!("output {}", dir.display());
    Ok(EXIT_OK)
}

fn cmd_selftest() -> u8 {
    let rep = run_selftest(&SelfTestSetup::default());
    print!("{}", rep.matrix());
    if rep.all_passed() {
        EXIT_OK
    } else {
        eprintln!("failed: {}", rep.failed().join(", "));
        EXIT_ERROR
    }
}

fn cmd_plot(trace: &Path, out_dir: Option<PathBuf>) -> Result<u8> {
    let table = TraceTable::load(trace).with_context(|| format!("reading {}", trace.display()))?;
    let dir = out_dir.unwrap_or_else(|| trace.parent().map(Path::to_path_buf).unwrap_or_default());
    for path in plot_trace(&table, &dir)? {
        println!("{}", path.display());
    }
    Ok(EXIT_OK)
}
