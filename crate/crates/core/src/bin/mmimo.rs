use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmimo_core::detequiv::FixedPointOptions;
use mmimo_core::harness::{self, Format, RunOptions, Sweep};
use mmimo_core::network::{NetworkConfig, ShadowParam};
use mmimo_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mmimo", version, about = "Multicell Massive MIMO uplink simulator with M-MMSE combining")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML network configuration; built-in defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Coherence blocks per drop.
    #[arg(long, global = true, default_value_t = 500)]
    blocks: usize,
    /// Network drops (default 1, or 10 for the figure sweeps).
    #[arg(long, global = true)]
    drops: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Read the config's shadowing parameter as a standard deviation in dB.
    #[arg(long, global = true)]
    shadow_std: bool,
    /// Fixed-point damping in [0, 1).
    #[arg(long, global = true, default_value_t = 0.0)]
    damping: f64,
    /// Fixed-point tolerance on the coefficient update.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// Fixed-point iteration cap.
    #[arg(long, global = true, default_value_t = 500)]
    max_iter: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Antenna-UE ratios M/K.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4])]
    ratios: Vec<usize>,
    /// UEs per cell.
    #[arg(long = "k-values", value_delimiter = ',', default_values_t = [4usize, 8, 12, 16])]
    k_values: Vec<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo SE.
    Mc,
    /// Deterministic-equivalent SE.
    Detequiv,
    /// Sum SE per cell versus K.
    Fig1(SweepArgs),
    /// Strength of the two SINR terms versus K.
    Fig2(SweepArgs),
    /// Uncorrelated-model closed form against the general solver.
    Closedform {
        /// Inter-cell gain alpha in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
    /// Internal consistency checks.
    Selftest,
}

fn load_config(g: &Global) -> Result<NetworkConfig> {
    let mut config = match &g.config {
        Some(path) => NetworkConfig::from_file(path)?,
        None => NetworkConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if g.shadow_std {
        config.shadow_interpretation = ShadowParam::StdDev;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    let format = Format::from(g.format);
    let out = g.out.as_deref();
    let config = load_config(g)?;
    let figure = matches!(cli.command, Command::Fig1(_) | Command::Fig2(_));
    let opts = RunOptions {
        blocks: g.blocks,
        drops: g.drops.unwrap_or(if figure { 10 } else { 1 }),
        threads: g.threads,
        retain_samples: false,
        fixed_point: FixedPointOptions {
            tol: g.tol,
            max_iter: g.max_iter,
            damping: g.damping,
        },
    };
    match cli.command {
        Command::Mc => {
            let r = harness::run_monte_carlo(&config, &opts)?;
            eprintln!(
                "sum SE per cell {:.4} bit/s/Hz, max relative std error {:.3}% ({:.1} s)",
                r.sum_se_mc.unwrap_or(f64::NAN),
                100.0 * r.max_rel_std_err.unwrap_or(f64::NAN),
                r.wall_time_s
            );
            harness::write_output(&r, out, format)?;
        }
        Command::Detequiv => {
            let r = harness::run_detequiv(&config, &opts)?;
            eprintln!("sum SE per cell {:.4} bit/s/Hz", r.sum_se_detequiv.unwrap_or(f64::NAN));
            harness::write_output(&r, out, format)?;
        }
        Command::Fig1(s) => {
            let sweep = Sweep {
                ratios: s.ratios,
                k_values: s.k_values,
            };
            harness::write_output(&harness::run_fig1(&config, &sweep, &opts)?, out, format)?;
        }
        Command::Fig2(s) => {
            let sweep = Sweep {
                ratios: s.ratios,
                k_values: s.k_values,
            };
            harness::write_output(&harness::run_fig2(&config, &sweep, &opts)?, out, format)?;
        }
        Command::Closedform { alpha } => {
            harness::write_output(&harness::run_closedform(&config, alpha, &opts)?, out, format)?;
        }
        Command::Selftest => {
            let checks = harness::selftest(config.seed)?;
            let ok = checks.iter().all(|c| c.passed);
            for c in &checks {
                eprintln!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            harness::write_output(&checks, out, format)?;
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NonConvergence { residual, iterations, cell } = &e {
                eprintln!("fixed point for cell {cell} stopped after {iterations} iterations at residual {residual:.3e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
