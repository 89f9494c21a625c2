use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use homsim::{configure_threads, parse_config, run, RunError, Scenario};

#[derive(Debug, Parser)]
#[command(name = "homsim", version, about = "Spectrally resolved Hong-Ou-Mandel interference simulator")]
struct Cli {
    scenario: Scenario,

    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Seed for event sampling, overriding `sample.seed`.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, env = "HOMSIM_THREADS")]
    threads: Option<usize>,
}

fn execute(cli: &Cli) -> Result<(), RunError> {
    configure_threads(cli.threads)?;
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| RunError::Io(format!("{}: {e}", cli.config.display())))?;
    let mut cfg = parse_config(&text, Some(cli.scenario))?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.sample.seed = seed;
    }
    let summary = run(&cfg, &text)?;
    for a in &summary.artifacts {
        println!("wrote {}", a.path.display());
    }
    println!("wrote {}", summary.metadata_path.display());
    for (k, v) in &summary.results {
        println!("{k} = {v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("homsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
