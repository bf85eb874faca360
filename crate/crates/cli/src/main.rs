//! `slsregret`: synthesise, simulate and compare regret-optimal controllers.

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RawConfig};
use run::RunError;

#[derive(Parser, Debug)]
#[command(name = "slsregret", version, about = "Regret-optimal controller synthesis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve every mode and write Φ, K and certificate files.
    Synth(Common),
    /// Synthesise, then write one trajectory CSV per scenario and controller.
    Simulate(Common),
    /// Synthesise, simulate and write the summary table and plot data.
    Compare(Common),
    /// Print the summary table of an earlier `compare` run.
    Table {
        /// Output directory of the run.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config value.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed for sampled scenarios.
    #[arg(long)]
    seed: Option<u64>,
    /// Relative solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Mode to run; repeat to select several. Replaces the config list.
    #[arg(long = "mode")]
    modes: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Stage {
    Synth,
    Simulate,
    Compare,
}

fn execute(c: &Common, stage: Stage) -> Result<(), RunError> {
    let raw = RawConfig::load(&c.config)?;
    let base = c.config.parent().unwrap_or(Path::new("."));
    let ov = Overrides { modes: c.modes.clone(), tol: c.tol, seed: c.seed };
    let exp = raw.build(base, &ov)?;
    let out = run::output_dir(&exp, c.out.clone());
    let ctx = run::context(&exp)?;
    let results = run::synthesize_all(&exp, &ctx)?;
    run::write_synth(&exp, &ctx, &results, &out)?;
    for s in &results {
        match s.gamma_star {
            Some(g) => println!("{:<28} gamma* = {g:.6e}", s.key.name()),
            None => println!("{:<28} done", s.key.name()),
        }
    }
    if stage == Stage::Synth {
        return Ok(());
    }
    let runs = run::simulate_all(&exp, &ctx, &results)?;
    match stage {
        Stage::Simulate => run::write_trajectories(&runs, &out),
        _ => {
            let table = run::write_compare(&runs, &out)?;
            print!("{table}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(c) => execute(c, Stage::Synth),
        Command::Simulate(c) => execute(c, Stage::Simulate),
        Command::Compare(c) => execute(c, Stage::Compare),
        Command::Table { out } => {
            let path = out.join("summary.txt");
            std::fs::read_to_string(&path)
                .map(|t| print!("{t}"))
                .map_err(|e| RunError::Other(format!("{}: {e}", path.display())))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
