use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use msni::harness::config::{ExperimentConfig, FeatureFormat};
use msni::harness::{
    recompute_metrics, run_coverage, run_dump_stream, run_real_data, run_simulation,
};

#[derive(Parser)]
#[command(name = "msni", version, about = "Streaming M-estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated synthetic-stream study with error curves per estimator
    Simulate(CommonArgs),
    /// Confidence-interval coverage experiment
    Coverage(CommonArgs),
    /// Stream an external feature file task by task and score accuracies
    RealData(CommonArgs),
    /// Write the configured synthetic stream to a feature file
    DumpStream {
        #[command(flatten)]
        common: CommonArgs,
        /// File format of the dump
        #[arg(long, default_value = "f32le")]
        format: String,
    },
    /// Recompute transfer metrics from an accuracy file
    Metrics {
        /// Accuracy CSV produced by `real-data`
        #[arg(long)]
        accuracy: PathBuf,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> msni::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.sim.master_seed = seed;
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.run.output_dir));
    Ok((cfg, out))
}

fn install_pool(threads: Option<usize>) -> msni::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| msni::Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run() -> msni::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(common) => {
            install_pool(common.threads)?;
            let (cfg, out) = load_config(&common)?;
            let artifacts = run_simulation(&cfg, &out)?;
            for failure in &artifacts.failures {
                eprintln!("warning: {failure}");
            }
            println!("curves:   {}", artifacts.curves.display());
            println!("summary:  {}", artifacts.summary.display());
            println!("manifest: {}", artifacts.manifest.display());
        }
        Command::Coverage(common) => {
            install_pool(common.threads)?;
            let (cfg, out) = load_config(&common)?;
            let report = run_coverage(&cfg, &out)?;
            println!(
                "coverage {:.4} (nominal {:.2}), mean half-width {:.6e}, \
                 standardized stats: mean {:+.4}, variance {:.4}, failures {}",
                report.coverage,
                report.nominal_level,
                report.mean_half_width,
                report.stat_mean,
                report.stat_var,
                report.failures
            );
            println!("results:  {}", out.join("coverage.csv").display());
        }
        Command::RealData(common) => {
            install_pool(common.threads)?;
            let (cfg, out) = load_config(&common)?;
            let outcomes = run_real_data(&cfg, &out)?;
            for row in msni::harness::output::metrics_rows(&outcomes)? {
                let fmt_opt =
                    |v: Option<f64>| v.map(|x| format!("{x:+.4}")).unwrap_or_else(|| "-".into());
                println!(
                    "{:<16} step {:<5} AIA {:.4}  FWT {}  BWT {}",
                    row.estimator,
                    row.step,
                    row.aia,
                    fmt_opt(row.fwt),
                    fmt_opt(row.bwt)
                );
            }
            println!("results:  {}", out.join("accuracy.csv").display());
        }
        Command::DumpStream { common, format } => {
            let (cfg, out) = load_config(&common)?;
            let format: FeatureFormat = format.parse()?;
            let path = if common.out.is_some() && out.extension().is_some() {
                out
            } else {
                let ext = match format {
                    FeatureFormat::Csv => "csv",
                    FeatureFormat::F32le => "f32le",
                };
                out.join(format!("stream.{ext}"))
            };
            run_dump_stream(&cfg, format, &path)?;
            println!("stream:   {}", path.display());
        }
        Command::Metrics { accuracy, out } => {
            for row in recompute_metrics(&accuracy, &out)? {
                let fmt_opt =
                    |v: Option<f64>| v.map(|x| format!("{x:+.4}")).unwrap_or_else(|| "-".into());
                println!(
                    "{:<16} step {:<5} AIA {:.4}  FWT {}  BWT {}",
                    row.estimator,
                    row.step,
                    row.aia,
                    fmt_opt(row.fwt),
                    fmt_opt(row.bwt)
                );
            }
            println!("metrics:  {}", out.join("transfer_metrics.csv").display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
