use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ustwind_cli::acceptance::{Runner, Suite, BASE_SEED};
use ustwind_cli::{CliError, Experiment, ExperimentConfig, Format};

#[derive(Parser)]
#[command(name = "ustwind", version, about = "Winding of UST branches in annuli: exact checks, samplers and SLE simulations")]
struct Cli {
    /// Experiment config (a single JSON document).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Results file; the manifest is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Determinant formula against spanning-tree enumeration.
    VerifyFomin,
    /// Monte Carlo and exact winding characteristic functions.
    WindingCf,
    /// Outer hitting angles of conditioned branches.
    HittingStats,
    /// Random-walk loop soups and the Campbell check.
    LoopSoup,
    /// Decay exponents of the continuum determinant.
    Exponents,
    /// Dyson Brownian motion paths.
    Dbm,
    /// Normalised winding of the driving functions.
    WindingVariance,
    /// Flow-line martingale check.
    GffCheck,
    /// Curve traces from one Dyson driver.
    Trace,
    /// Run the acceptance criteria.
    Acceptance {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
    },
}

fn experiment(cmd: &Command) -> Option<Experiment> {
    Some(match cmd {
        Command::VerifyFomin => Experiment::VerifyFomin,
        Command::WindingCf => Experiment::WindingCf,
        Command::HittingStats => Experiment::HittingStats,
        Command::LoopSoup => Experiment::LoopSoup,
        Command::Exponents => Experiment::Exponents,
        Command::Dbm => Experiment::Dbm,
        Command::WindingVariance => Experiment::WindingVariance,
        Command::GffCheck => Experiment::GffCheck,
        Command::Trace => Experiment::Trace,
        Command::Acceptance { .. } => return None,
    })
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.run.seed = cli.seed;
    }
    if cli.samples.is_some() {
        cfg.run.samples = cli.samples;
    }
    if cli.out.is_some() {
        cfg.output.path = cli.out.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    Ok(cfg)
}

fn acceptance(cli: &Cli, suite: Suite) -> Result<bool, CliError> {
    let runner = Runner::new(cli.seed.unwrap_or(BASE_SEED));
    let report = runner.run_suite(suite, |r| println!("{}", r.line()));
    let failed = report.results.iter().filter(|r| !r.pass).count();
    println!("{} of {} criteria passed", report.results.len() - failed, report.results.len());
    if let Some(out) = &cli.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report.all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match (&cli.command, experiment(&cli.command)) {
        (Command::Acceptance { suite }, _) => acceptance(&cli, *suite),
        (_, Some(e)) => load(&cli).and_then(|cfg| cfg.effective(e)).and_then(|eff| ustwind_cli::run(&eff)).map(|m| {
            println!("{} -> {} ({} rows, {:.2}s)", m.experiment, m.results.display(), m.rows, m.wall_time_seconds);
            true
        }),
        (_, None) => unreachable!("every other subcommand names an experiment"),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
