//! `transducer`: efficiency sweeps, mode weights, critical points, field maps,
//! lobe widths and line-cut spectra of a driven atom-array transducer.

mod run;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use transducer_core::io::Command;

#[derive(Parser, Debug)]
#[command(
    name = "transducer",
    version,
    about = "Photon transduction by driven atom arrays"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON configuration file, or a manifest of an earlier run.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Figure preset (see `transducer presets`).
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    output: PathBuf,
    /// Worker threads for sweeps and solves.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Use the rotating-wave kernel K⁺.
    #[arg(long, global = true, conflicts_with = "no_rwa")]
    rwa: bool,
    /// Use the full Green's tensor.
    #[arg(long, global = true)]
    no_rwa: bool,
    /// Drop the real part of the inverse propagator.
    #[arg(long, global = true)]
    zero_real_part: bool,
    /// Imaginary part η of ρ (units 2π/d).
    #[arg(long, global = true, value_name = "VALUE")]
    eta: Option<f64>,
    /// Seed recorded in the manifest.
    #[arg(long, global = true, value_name = "VALUE")]
    seed: Option<u64>,
    /// Self-energy cache directory.
    #[arg(
        long,
        global = true,
        env = "TRANSDUCER_CACHE_DIR",
        value_name = "DIR",
        hide_env_values = true
    )]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Infinite-array efficiency along a parameter sweep.
    EfficiencySweep,
    /// Per-mode amplitudes and probabilities at the scenario frequency.
    Modeweights,
    /// Frequencies at which a b order turns critical.
    Criticality,
    /// Finite-array fields on grids.
    Fieldmap,
    /// Lobe FWHM and spread rate versus array size.
    Fwhm,
    /// Line-cut spectra of the b field.
    Spectrum,
    /// List figure presets.
    Presets,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::EfficiencySweep => Command::EfficiencySweep,
        Cmd::Modeweights => Command::Modeweights,
        Cmd::Criticality => Command::Criticality,
        Cmd::Fieldmap => Command::Fieldmap,
        Cmd::Fwhm => Command::Fwhm,
        Cmd::Spectrum => Command::Spectrum,
        Cmd::Presets => {
            let mut out = std::io::stdout().lock();
            for name in transducer_core::io::PRESETS {
                if let Ok(p) = transducer_core::io::preset(name)
                    && writeln!(out, "{name:14} {:17} {}", p.command.name(), p.description).is_err()
                {
                    break;
                }
            }
            return ExitCode::SUCCESS;
        }
    };
    let opts = run::Options {
        config: cli.config,
        preset: cli.preset,
        output: cli.output,
        threads: cli.threads.map(usize::from),
        rwa: if cli.rwa {
            Some(true)
        } else if cli.no_rwa {
            Some(false)
        } else {
            None
        },
        zero_real_part: cli.zero_real_part,
        eta: cli.eta,
        seed: cli.seed,
        cache_dir: cli.cache_dir,
    };
    match run::run(command, &opts) {
        Ok(out) if out.row_errors == 0 => ExitCode::SUCCESS,
        Ok(out) => {
            eprintln!(
                "error: {} rows failed; see the error column in the output",
                out.row_errors
            );
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(run::exit_code(&e))
        }
    }
}
