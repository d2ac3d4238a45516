mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "stix", version, about = "Stimulated two-photon excitation simulator and analysis toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct GlobalOpts {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeArg>,
    /// Parameter preset: table1 or experiment.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Fock cutoff per cavity mode.
    #[arg(long = "n-max", global = true)]
    n_max: Option<usize>,
    /// Full model with cavity modes, or the QD-only approximation.
    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SchemeArg {
    Rex,
    Stix,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelArg {
    Full,
    QdOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Single time evolution: trajectory CSV and JSON summary.
    Simulate {
        /// TPE area in units of the calibrated π.
        #[arg(long)]
        tpe_area_pi: Option<f64>,
        /// Use nominal pulse areas instead of calibrating.
        #[arg(long)]
        no_calibrate: bool,
    },
    /// Locate the TPE π, π/2 and 3π/2 areas.
    Calibrate,
    /// Scan the TPE area.
    SweepArea,
    /// Scan the stimulating-pulse delay at the configured TPE area.
    SweepDelay,
    /// Scan the stimulating-pulse area at the configured TPE area.
    SweepStim,
    /// Delay × TPE-area map.
    Map,
    /// Measurement analysis pipelines.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
}

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Interferometer visibility from a detector trace (t_s, counts1, counts2).
    Visibility {
        #[arg(long)]
        input: PathBuf,
    },
    /// Purity fraction λ from visibility against vacuum population.
    Lambda {
        /// CSV with columns v and rho00 or norm_counts.
        #[arg(long, conflicts_with = "bundled", required_unless_present = "bundled")]
        input: Option<PathBuf>,
        /// Use a bundled synthetic dataset.
        #[arg(long, value_parser = ["stix", "rex"])]
        bundled: Option<String>,
        /// Two-photon interference visibility (defaults to the bundled value).
        #[arg(long)]
        v_hom: Option<f64>,
        /// Normalized photon count ρ11 at which to evaluate PNC.
        #[arg(long, default_value_t = 0.5)]
        rho11: f64,
    },
    /// Blinking fit of a long-timescale g² histogram (delay_ms, g2).
    Blinking {
        #[arg(long)]
        input: PathBuf,
    },
    /// g²(0) from a coincidence histogram (delay_ns, counts); with
    /// --orthogonal also the two-photon interference visibility.
    G2 {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        orthogonal: Option<PathBuf>,
        #[arg(long, default_value_t = 12.5)]
        spacing_ns: f64,
        #[arg(long, default_value_t = 8.0)]
        window_ns: f64,
    },
    /// Jones matrix of the waveplate phase shifter.
    Jones {
        #[arg(long)]
        theta: f64,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<stix_core::Error>() {
            return if e.is_config() || matches!(e, stix_core::Error::Io(_)) { 2 } else { 3 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { tpe_area_pi, no_calibrate } => {
            commands::simulate(&cli.global, tpe_area_pi, no_calibrate)
        }
        Command::Calibrate => commands::calibrate(&cli.global),
        Command::SweepArea => commands::sweep_area(&cli.global),
        Command::SweepDelay => commands::sweep_delay(&cli.global),
        Command::SweepStim => commands::sweep_stim(&cli.global),
        Command::Map => commands::map(&cli.global),
        Command::Analyze { what } => commands::analyze(&cli.global, what),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
