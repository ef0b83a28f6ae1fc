use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use multitime::experiments::{catalog, catalog_table, execute};
use multitime::qcore::set_amplitude_cap;

/// Reproducible multitime-process experiments.
#[derive(Parser)]
#[command(name = "multitime", version)]
struct Cli {
    /// Worker threads for internal parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Hard cap on dense amplitudes per state or matrix.
    #[arg(long, global = true)]
    cap: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config; exit 0 iff all embedded assertions pass.
    Run { config: PathBuf },
    /// List the experiment kinds, their anchors and config fields.
    ListExperiments {
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    if let Some(cap) = cli.cap {
        set_amplitude_cap(cap);
    }
    match cli.command {
        Command::ListExperiments { json } => {
            let text = if json {
                serde_json::to_string_pretty(&catalog()).expect("catalog serializes") + "\n"
            } else {
                catalog_table()
            };
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let _ = std::io::stdout().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Command::Run { config } => {
            let ex = execute(&config);
            if ex.code == 0 {
                println!("{}", ex.message);
            } else {
                eprintln!("error: {}", ex.message);
            }
            ExitCode::from(ex.code as u8)
        }
    }
}
