use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use moisture_core::grid::read_ascii_grid;
use moisture_core::pipeline::{load_config, run_pipeline};
use moisture_core::render::{render_heatmap, Palette};
use moisture_core::synth::{make_scenario, write_scenario, ScenarioParams};
use moisture_core::Result;

/// Soil-moisture downscaling and gap-filling.
#[derive(Parser)]
#[command(name = "engine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render an ASCII grid as a PPM heatmap.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "sequential")]
        palette: Palette,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic scenario (truth, observation, covariates, regions, config).
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Fine grid rows.
        #[arg(long, default_value_t = 128)]
        rows: usize,
        /// Fine grid columns.
        #[arg(long, default_value_t = 128)]
        cols: usize,
        /// Fine cells per coarse cell side.
        #[arg(long, default_value_t = 8)]
        factor: usize,
        #[arg(long, default_value_t = 15)]
        covariates: usize,
        /// Observation noise stdev.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        /// Fraction of coarse cells masked out.
        #[arg(long, default_value_t = 0.2)]
        gaps: f64,
    },
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let out = run_pipeline(&cfg)?;
            println!("{}", out.metrics_line());
        }
        Command::Render { input, palette, out } => {
            let grid = read_ascii_grid(&input)?;
            render_heatmap(&grid, palette, &out)?;
        }
        Command::Synth { seed, out, rows, cols, factor, covariates, noise, gaps } => {
            let params = ScenarioParams {
                seed,
                fine_shape: (rows, cols),
                coarse_factor: factor,
                n_covariates: covariates,
                noise_stdev: noise,
                gap_fraction: gaps,
                ..ScenarioParams::default()
            };
            let scenario = make_scenario(&params)?;
            write_scenario(&scenario, &out)?;
            println!("{}", out.join("config.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
