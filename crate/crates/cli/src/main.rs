use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Axis;

use gfa_cli::{exit_code, DecomposeFlags, FlockFlags, Sizes, StationaryFlags};
use gfa_core::io;
use gfa_core::{GfaError, Result};

/// Generalized factor analysis: synthesis, decomposition, spectral lines and flocking.
#[derive(Parser)]
#[command(name = "gfa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate data from a TOML scenario; writes the CSV and a truth sidecar JSON.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config (default 0 when neither is set).
        #[arg(long)]
        seed: Option<u64>,
        /// Truth JSON path; defaults to `<out stem>.truth.json`.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        header: bool,
    },
    /// Factor-count detection and loadings from an N x M ensemble CSV.
    Decompose {
        input: PathBuf,
        #[arg(long)]
        grid: Option<Sizes>,
        #[arg(long, default_value_t = DecomposeFlags::default().gamma)]
        gamma: f64,
        #[arg(long, default_value_t = DecomposeFlags::default().tau)]
        tau: f64,
        #[arg(long, default_value_t = DecomposeFlags::default().top)]
        top: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        header: bool,
    },
    /// Spectral lines and PD/PND split of a single series.
    Stationary {
        input: PathBuf,
        #[arg(long, default_value_t = StationaryFlags::default().max_lines)]
        max_lines: usize,
        #[arg(long, default_value_t = StationaryFlags::default().threshold)]
        threshold: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        header: bool,
    },
    /// Flocking extraction from an N x T field CSV.
    Flock {
        input: PathBuf,
        #[arg(long)]
        grid: Option<Sizes>,
        #[arg(long, default_value_t = FlockFlags::default().gamma)]
        gamma: f64,
        #[arg(long, default_value_t = FlockFlags::default().tau)]
        tau: f64,
        #[arg(long, default_value_t = FlockFlags::default().top)]
        top: usize,
        /// Separability sub-block sides `space,time` (each at most 20).
        #[arg(long, default_value = "10,10")]
        sub_grid: Sizes,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        header: bool,
    },
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into());
    out.with_file_name(format!("{stem}.truth.json"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out, seed, truth, header } => {
            let cfg = io::read_config_file(&config)?;
            let seed = seed.or(cfg.seed).unwrap_or(0);
            let s = io::synthesize(&cfg, seed)?;
            io::write_matrix_file(&out, &s.data, header)?;
            io::write_json_file(&truth.unwrap_or_else(|| truth_path(&out)), &s.truth)?;
        }
        Command::Decompose { input, grid, gamma, tau, top, out, header } => {
            let flags = DecomposeFlags { grid: grid.map(|g| g.0), gamma, tau, top, header };
            let data = io::read_matrix_file(&input, header)?;
            let r = gfa_cli::run_decompose(data, &flags)?;
            std::fs::create_dir_all(&out)?;
            io::write_json_file(&out.join("report.json"), &r.report)?;
            let curves = std::fs::File::create(out.join("curves.csv"))?;
            io::write_profile_curves(std::io::BufWriter::new(curves), &r.profile, Some(&r.growth))?;
            io::write_matrix_file(&out.join("loadings.csv"), &r.loadings, header)?;
            if let Some(f) = &r.factors {
                io::write_matrix_file(&out.join("factors.csv"), f, header)?;
            }
        }
        Command::Stationary { input, max_lines, threshold, out, header } => {
            let flags = StationaryFlags { max_lines, threshold, header };
            let data = io::read_matrix_file(&input, header)?;
            let r = gfa_cli::run_stationary(data, &flags)?;
            std::fs::create_dir_all(&out)?;
            io::write_json_file(&out.join("lines.json"), &r.report)?;
            io::write_matrix_file(&out.join("pd.csv"), &r.pd.insert_axis(Axis(0)), header)?;
            io::write_matrix_file(&out.join("pnd.csv"), &r.pnd.insert_axis(Axis(0)), header)?;
        }
        Command::Flock { input, grid, gamma, tau, top, sub_grid, out, header } => {
            let [p, t] = sub_grid.0[..] else {
                return Err(GfaError::InvalidArgument(format!("--sub-grid needs two sizes, got {:?}", sub_grid.0)));
            };
            let flags = FlockFlags { grid: grid.map(|g| g.0), gamma, tau, top, sub_grid: (p, t), header };
            let data = io::read_matrix_file(&input, header)?;
            let r = gfa_cli::run_flock(data, &flags)?;
            std::fs::create_dir_all(&out)?;
            io::write_json_file(&out.join("report.json"), &r.report)?;
            io::write_matrix_file(&out.join("flock.csv"), &r.extraction.flock, header)?;
            io::write_matrix_file(&out.join("residual.csv"), &r.extraction.residual, header)?;
            io::write_matrix_file(&out.join("loadings.csv"), &r.extraction.loadings, header)?;
            io::write_matrix_file(&out.join("factors.csv"), &r.extraction.factors, header)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
