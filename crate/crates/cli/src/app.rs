//! Command-line surface. Exit codes: 0 success, 1 usage, 2 data, 3 internal.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use periocular_core::metrics::Metric;

use crate::commands::{self, Context};
use crate::config::{ExtractorSpec, System};
use crate::error::{CliError, Result};
use crate::report;
use crate::synth::{generate_synthetic, MANIFEST_NAME};

#[derive(Debug, Parser)]
#[command(
    name = "periocular",
    version,
    about = "Periocular verification experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Annotated image list (CSV).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct Selection {
    /// lbp, hog, sift, neural or neural:<layer>.
    #[arg(long)]
    pub extractor: String,
    /// Network layer for the neural extractor.
    #[arg(long)]
    pub layer: Option<String>,
}

impl Selection {
    fn spec(&self) -> Result<ExtractorSpec> {
        match (self.extractor.as_str(), &self.layer) {
            ("neural", Some(layer)) => Ok(ExtractorSpec::Neural(layer.clone())),
            ("neural", None) => Err(CliError::Usage("--extractor neural needs --layer".into())),
            (_, Some(_)) => Err(CliError::Usage(
                "--layer only applies to the neural extractor".into(),
            )),
            (other, None) => other.parse(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        users: usize,
        #[arg(long, default_value_t = 4)]
        images: usize,
    },
    /// Normalise, crop, enhance and mask every image; writes roi/*.png.
    Preprocess {
        #[command(flatten)]
        common: Common,
    },
    /// Compute one extractor's features; writes features/<extractor>/.
    Extract {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
    },
    /// Score one system over the verification protocol.
    Score {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        selection: Selection,
        /// Required for every extractor except sift.
        #[arg(long)]
        metric: Option<Metric>,
    },
    /// EER of every layer of the configured network.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Repeatable; defaults to the config's sweep metrics.
        #[arg(long)]
        metric: Vec<Metric>,
    },
    /// Two-fold fusion of existing score files under --out.
    Fuse {
        #[command(flatten)]
        common: Common,
        /// Row ids to fuse (repeatable); defaults to the config's fusion list.
        #[arg(long)]
        system: Vec<String>,
    },
    /// Rebuild summary.csv and summary.md from the score files.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Every configured experiment, optional sweep and fusion, and the report.
    Run {
        #[command(flatten)]
        common: Common,
        /// Recorded in the run report.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::internal("setup", e))?;
    pool.install(f)
}

fn context(c: &Common) -> Result<Context> {
    Context::load(&c.manifest, c.config.as_deref(), c.out.as_deref())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            users,
            images,
        } => {
            let m = generate_synthetic(users, images, seed, &out)?;
            println!(
                "{} images in {}",
                m.records.len(),
                out.join(MANIFEST_NAME).display()
            );
        }
        Command::Preprocess { common } => {
            let ctx = context(&common)?;
            let pre = with_pool(common.workers, || commands::cmd_preprocess(&ctx))?;
            println!(
                "{} regions, {} failures",
                pre.items.len(),
                pre.failures.len()
            );
        }
        Command::Extract { common, selection } => {
            let spec = selection.spec()?;
            let ctx = context(&common)?;
            let n = with_pool(common.workers, || commands::cmd_extract(&ctx, &spec))?;
            println!("{n} feature sets for {spec}");
        }
        Command::Score {
            common,
            selection,
            metric,
        } => {
            let extractor = selection.spec()?;
            let metric = match (extractor.uses_metric(), metric) {
                (true, None) => {
                    return Err(CliError::Usage(format!(
                        "--metric is required for {extractor}"
                    )))
                }
                (false, Some(_)) => {
                    return Err(CliError::Usage(
                        "sift scores are match counts; drop --metric".into(),
                    ))
                }
                (_, m) => m,
            };
            let system = System { extractor, metric };
            let ctx = context(&common)?;
            let det = with_pool(common.workers, || commands::cmd_score(&ctx, &system))?;
            println!("{}: EER {:.2}%", system.id(), 100.0 * det.eer);
        }
        Command::Sweep { common, metric } => {
            let ctx = context(&common)?;
            let metrics = if metric.is_empty() {
                ctx.config
                    .neural
                    .as_ref()
                    .map(|n| n.sweep_metrics.clone())
                    .unwrap_or_else(|| Metric::ALL.to_vec())
            } else {
                metric
            };
            with_pool(common.workers, || commands::cmd_sweep(&ctx, &metrics))?;
            println!("{}", ctx.out.join("sweep.csv").display());
        }
        Command::Fuse { common, system } => {
            let ctx = context(&common)?;
            let (members, label) = if system.is_empty() {
                (ctx.config.fusion_members()?, ctx.config.fusion_label())
            } else {
                let label = format!("fusion:{}", system.join("+"));
                (system, label)
            };
            if members.len() < 2 {
                return Err(CliError::Usage("fusion needs at least two systems".into()));
            }
            let fused = with_pool(common.workers, || {
                commands::cmd_fuse(&ctx, &members, &label)
            })?;
            let row = report::summary_row(&fused)?;
            println!("{}: EER {:.2}%", row.system, row.eer_percent);
        }
        Command::Report { out } => {
            let rows = report::write_report(&out)?;
            print!("{}", report::summary_markdown(&rows));
        }
        Command::Run { common, seed } => {
            let ctx = context(&common)?;
            let rows = with_pool(common.workers, || commands::cmd_run(&ctx, seed))?;
            print!("{}", report::summary_markdown(&rows));
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
