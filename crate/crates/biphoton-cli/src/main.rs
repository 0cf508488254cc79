//! Batch front end: JSON run configuration in, deterministic CSV tables and
//! a JSON metadata sidecar out.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 convergence failure. Errors are printed to stderr as one JSON object
//! with a machine-readable class.

mod config;
mod output;
mod run;

use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "biphoton",
    version,
    about = "Two-photon emission simulator: steady states, sweeps, analytics, quantum trajectories, spectra and three-level validation"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for tables and metadata.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (defaults to BIPHOTON_THREADS, then 1).
    #[arg(long)]
    threads: Option<usize>,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn fail(class: &str, code: i32, message: &str) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::json!({"error": {"class": class, "exit_code": code, "message": message}})
    );
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    // single-threaded BLAS keeps runs bitwise reproducible; parallelism lives
    // in the sweep/ensemble dispatch
    std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    let cli = Cli::parse();

    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("BIPHOTON_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
        .max(1);
    if rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_err()
    {
        // pool already initialized (only possible in tests); keep going
    }

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return fail("config", 2, &format!("cannot read {}: {e}", cli.config.display())),
    };
    let raw = match config::parse_config(&text) {
        Ok(c) => c,
        Err(e) => return fail("config", 2, &e),
    };
    let mut materialized = match config::materialize(&raw) {
        Ok(m) => m,
        Err(e) => return fail("config", 2, &e),
    };
    if let Some(seed) = cli.seed {
        materialized.seed = seed;
        materialized.config.seed = Some(seed);
    }

    let started = std::time::Instant::now();
    match run::run(&materialized, &cli.out) {
        Ok(outcome) => {
            let elapsed = started.elapsed().as_secs_f64();
            match run::write_metadata(&materialized, &outcome, &cli.out, threads, elapsed) {
                Ok(meta_path) => {
                    for p in &outcome.outputs {
                        println!("wrote {}", p.display());
                    }
                    println!("wrote {}", meta_path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    let (code, class) = e.classify();
                    fail(class, code, &e.message())
                }
            }
        }
        Err(e) => {
            let (code, class) = e.classify();
            fail(class, code, &e.message())
        }
    }
}
