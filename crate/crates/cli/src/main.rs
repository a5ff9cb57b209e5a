use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use sphdam_cli::{
    cmd_postprocess, cmd_run, cmd_scene, cmd_validate, exit_code, parse_override, RunManifest,
    CONFIRM_STEPS, EXIT_OK, EXIT_USAGE,
};

/// SPH fracture simulation of concrete gravity dams.
///
/// Exit codes: 0 success, 1 other error, 2 usage, 3 configuration, 4 I/O, 5 numerical failure.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SPHDAM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scene and report particle counts, mass and time-step limits.
    Validate {
        scene: PathBuf,
        /// Override a scene value, e.g. `--set dt_s=1e-5`.
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, String)>,
    },
    /// Run a scene: gravity preload, then the transient.
    Run {
        scene: PathBuf,
        /// Output directory.
        #[arg(short, long, default_value = "output")]
        out: PathBuf,
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, String)>,
        /// Write a checkpoint every N steps.
        #[arg(long)]
        checkpoint_every: Option<u64>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Seconds between progress lines on stderr (0 disables).
        #[arg(long, default_value_t = 10.0)]
        progress_secs: f64,
        /// Confirm long runs.
        #[arg(long)]
        yes: bool,
        /// Stop after N steps, leaving a checkpoint.
        #[arg(long, hide = true)]
        stop_after: Option<u64>,
    },
    /// Tabulate principal-stress extrema and crack metrics for a snapshot directory.
    Postprocess {
        dir: PathBuf,
        /// Connectivity-damage threshold for damaged particles.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Write the table here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write a shipped scene (koyna, koyna-coarse, bar-wave, plate-tension).
    Scene {
        name: String,
        #[arg(short, long, default_value = ".")]
        dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(sphdam::Error::Config("--threads must be positive".into()));
        }
        // The pool can only be configured once; a failure here means it already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Validate { scene, overrides } => {
            print!("{}", cmd_validate(&scene, &overrides)?);
        }
        Command::Run {
            scene,
            out,
            overrides,
            checkpoint_every,
            resume,
            progress_secs,
            yes,
            stop_after,
        } => {
            let report = cmd_validate(&scene, &overrides)?;
            eprint!("{report}");
            if report.steps > CONFIRM_STEPS && !yes {
                bail!(sphdam::Error::Config(format!(
                    "{} steps requested; this is a long run (likely hours). Pass --yes to proceed",
                    report.steps
                )));
            }
            let manifest = RunManifest {
                scene,
                output_dir: out,
                overrides,
                threads: None,
                checkpoint_every_steps: checkpoint_every,
                resume,
                progress_every: (progress_secs > 0.0).then(|| Duration::from_secs_f64(progress_secs)),
                stop_after_steps: stop_after,
            };
            let s = cmd_run(&manifest)?;
            println!(
                "{} steps, t = {:.4} s, {} failed bonds, {} snapshots",
                s.steps,
                s.time_s,
                s.crack_profile.failed_count(),
                s.snapshots.len()
            );
            if let Some(e) = &s.history.first_failure {
                println!("first bond failure at t = {:.4} s, {:?}", e.time_s, e.positions_m);
            }
            if let Some(x) = s.crack_profile.base_extent_m {
                println!("base crack extent {x:.2} m");
            }
            if let Some(y) = s.crack_profile.neck_elevation_m {
                println!("neck crack elevation {y:.2} m");
            }
            if s.interrupted {
                println!("stopped early; resume with --resume");
            }
        }
        Command::Postprocess { dir, threshold, out } => {
            let report = cmd_postprocess(&dir, threshold)?;
            let table = report.to_csv();
            match out {
                Some(p) => sphdam::output::write_file(&p, &table)?,
                None => print!("{table}"),
            }
        }
        Command::Scene { name, dir, force } => {
            let p = cmd_scene(&name, &dir, force)?;
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
