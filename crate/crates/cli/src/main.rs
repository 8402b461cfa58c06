mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Half, RunConfig};
use vgs_core::retrieval::Aggregator;
use vgs_core::VgsError;

#[derive(Parser)]
#[command(
    name = "vgs",
    version,
    about = "Visually grounded speech: synthesis, training, retrieval and attention analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs serially.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bilingual corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Synthetic corpus spec (JSON); defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train a model on one manifest.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        val_manifest: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Train on the first or second half of the manifest's images.
        #[arg(long, value_enum)]
        half: Option<Half>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Speech→image retrieval metrics.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Attention peak statistics.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        peaks: PeakFlags,
        /// Manifest whose tokens give reference word frequencies (usually train).
        #[arg(long)]
        reference_manifest: Option<PathBuf>,
    },
    /// Cross-lingual speech→speech retrieval through pivot images.
    Xlingual {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        src_checkpoint: Option<PathBuf>,
        #[arg(long)]
        tgt_checkpoint: Option<PathBuf>,
        #[arg(long)]
        src_manifest: Option<PathBuf>,
        #[arg(long)]
        tgt_manifest: Option<PathBuf>,
        /// Manifest whose images serve as pivots.
        #[arg(long)]
        pivot_manifest: Option<PathBuf>,
        #[arg(long)]
        n_trials: Option<usize>,
        #[arg(long)]
        pool: Option<usize>,
        #[arg(long)]
        max_pivots: Option<usize>,
        #[arg(long, value_enum)]
        aggregator: Option<AggregatorArg>,
        /// Write each trial's score matrix as VGSF.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Per-utterance attention weights and peaks as JSON.
    ExportAttention {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        peaks: PeakFlags,
    },
}

#[derive(Args, Clone)]
struct PeakFlags {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    rel_threshold: Option<f64>,
    #[arg(long)]
    min_separation: Option<usize>,
    /// 1-based GRU layer of the attention head.
    #[arg(long)]
    layer: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AggregatorArg {
    Min,
    Mean,
    Sum,
}

impl From<AggregatorArg> for Aggregator {
    fn from(a: AggregatorArg) -> Self {
        match a {
            AggregatorArg::Min => Aggregator::Min,
            AggregatorArg::Mean => Aggregator::Mean,
            AggregatorArg::Sum => Aggregator::Sum,
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn base_config(common: &Common, command: &str) -> vgs_core::Result<RunConfig> {
    let mut c = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    c.command = Some(command.to_string());
    set(&mut c.seed, common.seed);
    if common.threads.is_some() {
        c.threads = common.threads;
    }
    set_path(&mut c.paths.out, common.out.clone());
    Ok(c)
}

fn apply_peaks(c: &mut RunConfig, p: PeakFlags) {
    set_path(&mut c.paths.checkpoint, p.checkpoint);
    set_path(&mut c.paths.manifest, p.manifest);
    set(&mut c.peaks.rel_threshold, p.rel_threshold);
    set(&mut c.peaks.min_separation, p.min_separation);
    if p.layer.is_some() {
        c.peaks.layer = p.layer;
    }
}

/// Merges flags over the config file into a fully resolved `RunConfig`.
fn resolve(command: Command) -> vgs_core::Result<RunConfig> {
    Ok(match command {
        Command::Synth { common, spec } => {
            let mut c = base_config(&common, "synth")?;
            set_path(&mut c.paths.spec, spec);
            // Without --seed or a config file, the spec's own seed is the run seed.
            if common.seed.is_none() && common.config.is_none() {
                if let Some(path) = &c.paths.spec {
                    c.seed = commands::read_spec(path)?.seed;
                }
            }
            c
        }
        Command::Train {
            common,
            manifest,
            val_manifest,
            epochs,
            batch_size,
            learning_rate,
            half,
            resume,
        } => {
            let mut c = base_config(&common, "train")?;
            set_path(&mut c.paths.manifest, manifest);
            set_path(&mut c.paths.val_manifest, val_manifest);
            set(&mut c.train.epochs, epochs);
            set(&mut c.train.batch_size, batch_size);
            set(&mut c.train.learning_rate, learning_rate);
            if half.is_some() {
                c.half = half;
            }
            c.resume |= resume;
            c
        }
        Command::Eval {
            common,
            checkpoint,
            manifest,
        } => {
            let mut c = base_config(&common, "eval")?;
            set_path(&mut c.paths.checkpoint, checkpoint);
            set_path(&mut c.paths.manifest, manifest);
            c
        }
        Command::Analyze {
            common,
            peaks,
            reference_manifest,
        } => {
            let mut c = base_config(&common, "analyze")?;
            apply_peaks(&mut c, peaks);
            set_path(&mut c.paths.reference_manifest, reference_manifest);
            c
        }
        Command::Xlingual {
            common,
            src_checkpoint,
            tgt_checkpoint,
            src_manifest,
            tgt_manifest,
            pivot_manifest,
            n_trials,
            pool,
            max_pivots,
            aggregator,
            dump_matrices,
        } => {
            let mut c = base_config(&common, "xlingual")?;
            set_path(&mut c.paths.src_checkpoint, src_checkpoint);
            set_path(&mut c.paths.tgt_checkpoint, tgt_checkpoint);
            set_path(&mut c.paths.src_manifest, src_manifest);
            set_path(&mut c.paths.tgt_manifest, tgt_manifest);
            set_path(&mut c.paths.pivot_manifest, pivot_manifest);
            set(&mut c.xlingual.n_trials, n_trials);
            set(&mut c.xlingual.pool, pool);
            set(&mut c.xlingual.max_pivots, max_pivots);
            set(&mut c.xlingual.aggregator, aggregator.map(Into::into));
            c.dump_matrices |= dump_matrices;
            c
        }
        Command::ExportAttention { common, peaks } => {
            let mut c = base_config(&common, "export-attention")?;
            apply_peaks(&mut c, peaks);
            c
        }
    })
}

fn run(cli: Cli) -> vgs_core::Result<()> {
    let mut config = resolve(cli.command)?;
    config.train.seed = config.seed;
    if let Some(n) = config.threads {
        if n == 0 {
            return Err(VgsError::config("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| VgsError::config("threads", e.to_string()))?;
    }
    commands::dispatch(&config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
