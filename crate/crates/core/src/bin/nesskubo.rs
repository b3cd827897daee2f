//! Batch front end: parse a run configuration, execute the computation and
//! emit machine-readable results.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 numerical/assumption failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nesskubo::config::{parse_config, Command};
use nesskubo::run::{run, OutputFormat};
use nesskubo::Error;

#[derive(Parser)]
#[command(
    name = "nesskubo",
    about = "Steady states and conductivity of dissipative lattice fermions",
    version
)]
struct Cli {
    /// ness | current | conductivity | bands | bloch-conductivity |
    /// solvable | drude | sweep; must match the config's `command` key.
    command: String,

    /// Run configuration file (key = value sections).
    #[arg(long)]
    config: PathBuf,

    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format.
    #[arg(long, default_value = "csv")]
    format: String,

    /// Worker threads for sweeps and k-grids (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Io(_) | Error::InvalidParameter(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let format = match cli.format.as_str() {
        "csv" => OutputFormat::Csv,
        "json" => OutputFormat::Json,
        other => {
            eprintln!("error: unknown format '{other}' (expected csv|json)");
            return ExitCode::from(2);
        }
    };

    let command = match Command::parse(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not set thread count: {e}");
        }
    }

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cfg.command != command {
        eprintln!(
            "error: configuration error: command line says '{}' but config says '{}'",
            command.as_str(),
            cfg.command.as_str()
        );
        return ExitCode::from(2);
    }

    let result = match &cli.out {
        Some(path) => {
            let file = match File::create(path) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: cannot create {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            };
            let mut w = BufWriter::new(file);
            run(&cfg, format, &mut w).and_then(|()| w.flush().map_err(Error::from))
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            run(&cfg, format, &mut w).and_then(|()| w.flush().map_err(Error::from))
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
