use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spinprobe::io::{emit_plot_data, execute, Experiment, Report, RunConfig, RunRequest, EXIT_INVALID, EXIT_OK};

#[derive(Parser)]
#[command(name = "spinprobe", version, about = "Spin-charge defect simulation and inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run whatever experiment the config names.
    Run(RunArgs),
    SimulateDeer(RunArgs),
    SimulateOdmr(RunArgs),
    SimulatePumpProbe(RunArgs),
    SimulateCharge(RunArgs),
    FitDeer(RunArgs),
    Reconstruct(RunArgs),
    FitSaturation(RunArgs),
    FitChargeRelaxation(RunArgs),
    ExtractNoise(RunArgs),
    /// Re-emit one plot table from an existing report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Measurement table (CSV); repeat for several.
    #[arg(long)]
    data: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides the config, defaults to all cores.
    #[arg(long, env = "SPINPROBE_THREADS")]
    threads: Option<usize>,
    /// Reconstruction checkpoint inside --out (default: checkpoint.json).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    resume: bool,
    /// Stop a reconstruction after this many candidates.
    #[arg(long)]
    stop_after: Option<u64>,
}

fn run(expected: Option<Experiment>, args: RunArgs) -> i32 {
    let config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return spinprobe::io::exit_code(&e);
        }
    };
    if let Some(exp) = expected {
        if config.experiment != exp {
            eprintln!(
                "error: {} configures `{}`, not `{exp}`",
                args.config.display(),
                config.experiment
            );
            return EXIT_INVALID;
        }
    }
    let request = RunRequest {
        config,
        data: args.data,
        out_dir: args.out,
        seed: args.seed,
        threads: args.threads,
        checkpoint: args.checkpoint,
        resume: args.resume,
        stop_after: args.stop_after,
    };
    let outcome = execute(&request);
    if let Some(report) = &outcome.report {
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        if report.converged == Some(false) {
            eprintln!("error: fit did not converge");
        }
    }
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    for path in &outcome.written {
        println!("{}", path.display());
    }
    outcome.exit_code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(a) => run(None, a),
        Command::SimulateDeer(a) => run(Some(Experiment::SimulateDeer), a),
        Command::SimulateOdmr(a) => run(Some(Experiment::SimulateOdmr), a),
        Command::SimulatePumpProbe(a) => run(Some(Experiment::SimulatePumpProbe), a),
        Command::SimulateCharge(a) => run(Some(Experiment::SimulateCharge), a),
        Command::FitDeer(a) => run(Some(Experiment::FitDeer), a),
        Command::Reconstruct(a) => run(Some(Experiment::Reconstruct), a),
        Command::FitSaturation(a) => run(Some(Experiment::FitSaturation), a),
        Command::FitChargeRelaxation(a) => run(Some(Experiment::FitChargeRelaxation), a),
        Command::ExtractNoise(a) => run(Some(Experiment::ExtractNoise), a),
        Command::Plot { report, kind, out } => {
            let result = Report::load(&report).and_then(|r| {
                std::fs::create_dir_all(&out).map_err(|e| spinprobe::Error::Io { path: out.clone(), source: e })?;
                emit_plot_data(&r, &kind, &out)
            });
            match result {
                Ok(path) => {
                    println!("{}", path.display());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    spinprobe::io::exit_code(&e)
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
