use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mfce::experiment::{
    build_pod, compare, compare_csv, run_experiment, write_outputs, ExperimentConfig,
    ExperimentReport, ProblemConfig,
};
use mfce::models::pde::write_pod_file;
use mfce::{MfceError, Result};

/// Rare-event probability estimation with cross-entropy importance sampling.
///
/// `MFCE_THREADS` caps the number of worker threads.
#[derive(Parser)]
#[command(name = "mfce", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the repetitions of one configuration; writes report.json and runs.csv.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configurations on one problem; writes compare.csv.
    Compare {
        #[arg(long, num_args = 2.., required = true)]
        configs: Vec<PathBuf>,
        /// Directory for compare.csv and the per-configuration outputs.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Precompute the POD hierarchy of a PDE configuration.
    Pod {
        #[command(subcommand)]
        command: PodCommand,
    },
}

#[derive(Subcommand)]
enum PodCommand {
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn summarize(name: &str, r: &ExperimentReport) {
    let e = &r.report;
    eprintln!(
        "{name}: {} runs, p_hat = {:.4e} ± {:.2e}, hf evals/run = {:.0}, {:.2} s/run",
        e.runs.len(),
        e.p_hat,
        e.p_hat_standard_error,
        e.per_level_evals.get("hifi").copied().unwrap_or(0.0),
        e.mean_wall_clock_s,
    );
    for f in &r.failures {
        eprintln!("  seed {} failed: {}", f.seed, f.error);
    }
}

fn config_stem(path: &Path, index: usize) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{index}_{stem}")
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Estimate { config, seed, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            let report = run_experiment(&cfg)?;
            write_outputs(&dir, &report)?;
            summarize(&config.display().to_string(), &report);
            Ok(report.succeeded())
        }
        Command::Compare { configs, out } => {
            let cfgs = configs
                .iter()
                .map(|p| ExperimentConfig::from_file(p))
                .collect::<Result<Vec<_>>>()?;
            let reports = compare(&cfgs)?;
            for (i, (path, r)) in configs.iter().zip(&reports).enumerate() {
                write_outputs(&out.join(config_stem(path, i)), r)?;
                summarize(&path.display().to_string(), r);
            }
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("compare.csv"), compare_csv(&reports)?)?;
            Ok(reports.iter().all(ExperimentReport::succeeded))
        }
        Command::Pod {
            command: PodCommand::Build { config, out },
        } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let ProblemConfig::Pde(pde) = &cfg.problem else {
                return Err(MfceError::config(
                    "problem.kind",
                    "pod build needs a pde problem",
                ));
            };
            let pde = pde.clone();
            let hierarchy = build_pod(
                &mfce::experiment::PdeConfig {
                    podfile: None,
                    ..pde
                },
                &cfg.reduced_levels(),
            )?;
            write_pod_file(&out, &hierarchy)?;
            eprintln!(
                "wrote {} (q = {}, dims = {:?}, stability floor = {:.4e})",
                out.display(),
                hierarchy.problem().dofs(),
                hierarchy.dims(),
                hierarchy.stability_floor()
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
