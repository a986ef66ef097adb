use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use irs_rsma::harness::{emit_plot_script, run_trials, sweep_preset, write_csv, ExperimentConfig, Scale};
use irs_rsma::Error;

#[derive(Parser)]
#[command(name = "irs-rsma", version, about = "Max-min rate optimization for IRS-aided uplink RSMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of an experiment config and write the results CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        parallel: usize,
        /// Fill the wall_time_ms column (makes the output run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Write one of the built-in sweep configs.
    Preset {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit a gnuplot script for a results CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) | Error::Json(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config, out, parallel, timing } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let records = run_trials(&cfg, parallel)?;
            write_csv(fs::File::create(&out)?, &records, timing)?;
            let failed = records.iter().filter(|r| !r.is_ok()).count();
            if failed > 0 {
                eprintln!("{failed} of {} trials failed; see the status column", records.len());
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name, scale, out } => {
            let cfg = sweep_preset(&name, scale.parse::<Scale>()?)?;
            fs::write(&out, cfg.to_json()? + "\n")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { csv, out } => {
            let text = fs::read_to_string(&csv)?;
            let image = out.with_extension("png");
            let image = image.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plot.png".into());
            fs::write(&out, emit_plot_script(&text, &image)?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
