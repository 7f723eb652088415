use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tiltgyre::cli_io::{self, RunConfig, RunOutcome};
use tiltgyre::Error;

#[derive(Parser)]
#[command(name = "tiltgyre", version, about = "Boundary currents above a tilted bottom")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output].dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the randomized root survey
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate the configuration and survey random root splits
    Check,
    /// Tabulate the four vertical roots per mode
    Roots,
    /// Tabulate the vertical Green kernel per mode
    Green,
    /// Tabulate the Ekman roots and eigenvectors per mode
    Ekman,
    /// Leading or first-corrected solution
    Solve {
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
        order: u8,
    },
    /// Higher orders with the residual ledger
    Cascade {
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
    },
    /// Separation figure from two completed solve runs
    Figure {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        sloped: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        x3: f64,
    },
}

fn run(cli: Cli) -> Result<bool, Error> {
    if let Cmd::Figure { reference, sloped, x3 } = &cli.cmd {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("figure"));
        let fig = cli_io::emit_separation_figure(reference, sloped, &out, *x3)?;
        println!("{}", serde_json::to_string_pretty(&fig).unwrap_or_default());
        return Ok(true);
    }
    let path = cli.config.clone().ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = RunConfig::load(&path)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let outcome: RunOutcome = match cli.cmd {
        Cmd::Check => cli_io::run_check(&cfg, &out, cli.seed)?,
        Cmd::Roots => cli_io::run_roots(&cfg, &out)?,
        Cmd::Green => cli_io::run_green(&cfg, &out)?,
        Cmd::Ekman => cli_io::run_ekman(&cfg, &out)?,
        Cmd::Solve { order } => cli_io::run_solve(&cfg, &out, order as usize, "solve")?.0,
        Cmd::Cascade { k } => {
            let o = cli_io::run_cascade(&cfg, &out, k)?;
            if let Ok(text) = std::fs::read_to_string(out.join("summary.txt")) {
                print!("{text}");
            }
            o
        }
        Cmd::Figure { .. } => unreachable!(),
    };
    for (gate, ok) in &outcome.gates {
        if !ok {
            eprintln!("gate failed: {gate}");
        }
    }
    println!("wrote {} files to {}", outcome.files.len(), out.display());
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", e.qualified());
            ExitCode::from(2)
        }
    }
}
