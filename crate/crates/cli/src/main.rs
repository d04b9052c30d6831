use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cogload::datafusion::AlignedDataset;
use cogload::error::{Error, ErrorKind, Result};
use cogload::evalmetrics::{render_report, render_table};
use cogload::nncore::checkpoint;
use cogload::pipeline::{
    compare_selectors, evaluate_reduced, fused_correlation, load_aligned, load_fused_dir, prepare, run_pipeline, select_features,
    train_reduced, write_fused, write_manifest, hash_file, DataSource, FileHash, RunConfig, Timer, CHECKPOINT_FILE,
};
use cogload::synthgen::{generate_dataset, write_dataset};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "COGLOAD_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "cogload_out";

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "cogload", version, about = "Cognitive-load classification from fused fNIRS, eye-tracking and driving streams")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set train.epochs=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory [default: config output_dir, then $COGLOAD_OUT_DIR, then ./cogload_out].
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic sessions as stream CSVs plus a manifest.
    Synth,
    /// Align sessions onto the fNIRS clock and export the fused tables and
    /// their correlation matrix.
    Fuse {
        /// Directory of session_XX/ folders; the configured source when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Rank features on the training split and export the ranking.
    Select {
        /// Directory of aligned_session_XX.csv files from `fuse`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Select features and train the classifier, writing a checkpoint.
    Train {
        /// Directory of aligned_session_XX.csv files from `fuse`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split of the same configuration.
    Eval {
        /// Directory of aligned_session_XX.csv files from `fuse`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run every stage end to end.
    Pipeline,
    /// Run the pipeline once per selector and write a comparison table.
    CompareSelectors,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Fuse { .. } => "fuse",
            Command::Select { .. } => "select",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Pipeline => "pipeline",
            Command::CompareSelectors => "compare-selectors",
        }
    }
}

fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Aligned sessions from `input`, or ingested and fused per the config.
fn aligned_sessions(cfg: &RunConfig, input: Option<&Path>, timer: &mut Timer) -> Result<(Vec<AlignedDataset>, Vec<FileHash>)> {
    match input {
        Some(dir) => timer.time("ingest", || load_fused_dir(dir)),
        None => load_aligned(cfg, timer),
    }
}

/// Writes machine-facing output to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = RunConfig::load(cli.common.config.as_deref(), &cli.common.overrides)?;
    let out = output_dir(cli.common.out, &cfg);
    let command = cli.command.name();
    let mut timer = Timer::default();
    match cli.command {
        Command::Synth => {
            create_dir(&out)?;
            let sessions = timer.time("synth", || generate_dataset(&cfg.synth))?;
            let written = timer.time("write", || write_dataset(&out, &cfg.synth, &sessions))?;
            write_manifest(&out, command, &cfg, Vec::new(), &written, timer.timings)?;
            eprintln!("wrote {} sessions to {}", sessions.len(), out.display());
        }
        Command::Fuse { input } => {
            create_dir(&out)?;
            let mut run_cfg = cfg.clone();
            if let Some(dir) = input {
                run_cfg.data.source = DataSource::Dir;
                run_cfg.data.input_dir = Some(dir);
            }
            let (datasets, hashes) = load_aligned(&run_cfg, &mut timer)?;
            let mut written = timer.time("write", || write_fused(&datasets, &out))?;
            timer.time("correlate", || {
                let corr = fused_correlation(&datasets)?;
                let (csv, svg) = (out.join("correlation.csv"), out.join("correlation.svg"));
                corr.save_csv(&csv)?;
                corr.save_svg(&svg)?;
                written.extend([csv, svg]);
                Ok(())
            })?;
            write_manifest(&out, command, &run_cfg, hashes, &written, timer.timings)?;
            eprintln!("fused {} sessions into {}", datasets.len(), out.display());
        }
        Command::Select { input } => {
            create_dir(&out)?;
            let (datasets, hashes) = aligned_sessions(&cfg, input.as_deref(), &mut timer)?;
            let prepared = timer.time("prepare", || prepare(&cfg, &datasets))?;
            let selection = timer.time("select", || select_features(&cfg.selector, &prepared))?;
            let ranking = out.join(format!("ranking_{}.csv", selection.kind.id()));
            selection.ranking.save_csv(&ranking)?;
            let selected = out.join("selected_features.txt");
            std::fs::write(&selected, selection.output_names().join("\n") + "\n").map_err(|e| Error::io(&selected, e))?;
            write_manifest(&out, command, &cfg, hashes, &[ranking, selected], timer.timings)?;
            emit(&(selection.output_names().join("\n") + "\n"));
        }
        Command::Train { input } => {
            create_dir(&out)?;
            let (datasets, hashes) = aligned_sessions(&cfg, input.as_deref(), &mut timer)?;
            let prepared = timer.time("prepare", || prepare(&cfg, &datasets))?;
            let selection = timer.time("select", || select_features(&cfg.selector, &prepared))?;
            let fit = timer.time("train", || train_reduced(&cfg, &prepared, &|rows| selection.apply(rows)))?;
            let ckpt = out.join(CHECKPOINT_FILE);
            checkpoint::save(&ckpt, &fit.params, cfg.train.seed)?;
            let ranking = out.join(format!("ranking_{}.csv", selection.kind.id()));
            selection.ranking.save_csv(&ranking)?;
            write_manifest(&out, command, &cfg, hashes, &[ckpt.clone(), ranking], timer.timings)?;
            eprintln!(
                "trained {} epochs, final loss {:.6}; checkpoint {}",
                fit.epoch_losses.len(),
                fit.epoch_losses.last().copied().unwrap_or(f64::NAN),
                ckpt.display()
            );
        }
        Command::Eval { input, checkpoint: ckpt_path } => {
            create_dir(&out)?;
            let ckpt = checkpoint::load(&ckpt_path)?;
            let (datasets, mut hashes) = aligned_sessions(&cfg, input.as_deref(), &mut timer)?;
            hashes.push(hash_file(&ckpt_path)?);
            let prepared = timer.time("prepare", || prepare(&cfg, &datasets))?;
            let selection = timer.time("select", || select_features(&cfg.selector, &prepared))?;
            let fingerprint = cfg.fingerprint(selection.kind.id(), selection.n_outputs());
            let report = timer.time("evaluate", || {
                evaluate_reduced(&cfg, &prepared, &|rows| selection.apply(rows), &ckpt.params, selection.kind.label(), fingerprint)
            })?;
            let written = timer.time("report", || render_report(std::slice::from_ref(&report), &[], &out))?;
            write_manifest(&out, command, &cfg, hashes, &written, timer.timings)?;
            emit(&render_table(&[report]));
        }
        Command::Pipeline => {
            let outcome = run_pipeline(&cfg, &out)?;
            emit(&render_table(&[outcome.report]));
            eprintln!("artifacts in {}", out.display());
        }
        Command::CompareSelectors => {
            let outcome = compare_selectors(&cfg, &out)?;
            emit(&render_table(&outcome.reports));
            for (label, msg) in &outcome.failures {
                eprintln!("{label} failed: {msg}");
            }
            if !outcome.failures.is_empty() {
                return Ok(EXIT_PARTIAL);
            }
        }
    }
    Ok(0)
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Divergence => EXIT_DIVERGENCE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            log::debug!("{e:?}");
            ExitCode::from(exit_code(&e))
        }
    }
}
