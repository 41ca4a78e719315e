//! `mera`: build retrieval stores, train, evaluate and inspect residue scorers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mera_core::metrics::{EvalOptions, FmaxMode, HitsMode};
use mera_core::pipeline::commands::{
    cmd_build_db, cmd_calibrate, cmd_eval, cmd_export_embeddings, cmd_predict, cmd_predict_single,
    cmd_synth, cmd_train, parse_experts, parse_modalities, Ablation, EmbeddingKind, InferArgs,
    SingleInput, TrainArgs,
};
use mera_core::pipeline::{Split, SynthConfig};
use mera_core::training::Config;
use mera_core::{MeraError, Result};

#[derive(Parser)]
#[command(
    name = "mera",
    version,
    about = "Residue-level active-site scoring with retrieval and evidential fusion"
)]
struct Cli {
    /// Log filter (error, warn, info, debug); RUST_LOG overrides it.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (manifest plus embedding files).
    Synth(SynthCmd),
    /// Build a retrieval store from one manifest split.
    BuildDb(BuildDbCmd),
    /// Train a model and write the best-validation checkpoint.
    Train(TrainCmd),
    /// Compute metrics on a manifest split.
    Eval(EvalCmd),
    /// Write per-residue scores and reliability indicators.
    Predict(PredictCmd),
    /// Tabulate error rate against reliability for confident residues.
    Calibrate(CalibrateCmd),
    /// Export per-residue representations with a label sidecar.
    ExportEmbeddings(ExportCmd),
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    proteins: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    text_dim: Option<usize>,
    #[arg(long)]
    families: Option<usize>,
    #[arg(long)]
    positive_rate: Option<f64>,
    #[arg(long)]
    difficulty: Option<f64>,
    /// Make text tokens uninformative.
    #[arg(long)]
    noise_text: bool,
    /// Omit cluster ids from the manifest.
    #[arg(long)]
    no_clusters: bool,
}

#[derive(Args)]
struct BuildDbCmd {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
}

#[derive(Args, Default)]
struct AblationFlags {
    /// Remove a modality (seq, rag, text); repeatable.
    #[arg(long = "disable-modality", num_args = 1..)]
    disable_modality: Vec<String>,
    /// Remove an expert (seq, chain, act or an extra block name); repeatable.
    #[arg(long = "disable-expert", num_args = 1..)]
    disable_expert: Vec<String>,
}

impl AblationFlags {
    fn parse(&self) -> Result<Ablation> {
        Ok(Ablation {
            disable_modalities: parse_modalities(&self.disable_modality)?,
            disable_experts: parse_experts(&self.disable_expert)?,
        })
    }
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// TOML configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON-lines epoch log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[command(flatten)]
    ablation: AblationFlags,
}

#[derive(Args)]
struct InferFlags {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    ablation: AblationFlags,
}

#[derive(Copy, Clone, ValueEnum)]
enum HitsArg {
    Any,
    Recall,
}

#[derive(Copy, Clone, ValueEnum)]
enum FmaxArg {
    Micro,
    Macro,
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    infer: InferFlags,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, value_enum, default_value = "any")]
    hits_mode: HitsArg,
    #[arg(long, value_enum, default_value = "micro")]
    fmax_mode: FmaxArg,
    /// MCC threshold; defaults to the F_max threshold.
    #[arg(long)]
    mcc_threshold: Option<f64>,
    /// Report path; a `.json` twin is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictCmd {
    #[command(flatten)]
    infer: InferFlags,
    /// Restrict to one manifest split.
    #[arg(long)]
    split: Option<String>,
    /// Score a single protein from this embedding file instead of a manifest.
    #[arg(long, conflicts_with = "manifest")]
    seq: Option<PathBuf>,
    #[arg(long, requires = "seq")]
    text: Option<PathBuf>,
    #[arg(long, default_value = "query", requires = "seq")]
    id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateCmd {
    #[command(flatten)]
    infer: InferFlags,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 0.8)]
    band: f64,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportCmd {
    #[command(flatten)]
    infer: InferFlags,
    /// seq, rag or text.
    #[arg(long)]
    which: String,
    /// Restrict to one manifest split.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| MeraError::Parameter(format!("--{flag} is required")))
}

fn split_arg(s: &Option<String>) -> Result<Option<Split>> {
    s.as_deref().map(str::parse).transpose()
}

fn infer_args<'a>(f: &'a InferFlags, split: Option<Split>) -> Result<InferArgs<'a>> {
    Ok(InferArgs {
        manifest: require(&f.manifest, "manifest")?,
        store: f.store.as_deref(),
        checkpoint: &f.checkpoint,
        ablation: f.ablation.parse()?,
        split,
    })
}

fn read_toml_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| MeraError::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let mut cfg = match &c.config {
                Some(p) => SynthConfig::from_toml(&read_toml_file(p)?)?,
                None => SynthConfig::default(),
            };
            macro_rules! set {
                ($($f:ident),*) => { $( if let Some(v) = c.$f { cfg.$f = v; } )* };
            }
            set!(
                seed,
                proteins,
                length,
                dim,
                text_dim,
                families,
                positive_rate,
                difficulty
            );
            cfg.noise_text |= c.noise_text;
            cfg.clusters &= !c.no_clusters;
            let path = cmd_synth(&cfg, &c.out)?;
            println!("{}", path.display());
        }
        Command::BuildDb(c) => {
            let store = cmd_build_db(&c.manifest, c.split.parse()?, &c.out)?;
            println!(
                "store with {} records written to {}",
                store.len(),
                c.out.display()
            );
        }
        Command::Train(c) => {
            let mut config = match &c.config {
                Some(p) => Config::from_toml(&read_toml_file(p)?)?,
                None => Config::default(),
            };
            if let Some(v) = c.seed {
                config.seed = v;
            }
            if let Some(v) = c.k {
                config.k = v;
            }
            if let Some(v) = c.epochs {
                config.epochs = v;
            }
            if let Some(v) = c.learning_rate {
                config.learning_rate = v;
            }
            let ablation = c.ablation.parse()?;
            config
                .modalities
                .retain(|m| !ablation.disable_modalities.contains(m));
            config
                .experts
                .retain(|e| !ablation.disable_experts.contains(e));
            config.validate()?;
            let outcome = cmd_train(TrainArgs {
                manifest: &c.manifest,
                store: c.store.as_deref(),
                config,
                checkpoint_out: &c.out,
                log_out: c.log.as_deref(),
            })?;
            println!(
                "best epoch {} with validation AUPRC {:.6}; checkpoint written to {}",
                outcome.best_epoch,
                outcome.best_auprc,
                c.out.display()
            );
        }
        Command::Eval(c) => {
            let args = infer_args(&c.infer, Some(c.split.parse()?))?;
            let options = EvalOptions {
                hits_mode: match c.hits_mode {
                    HitsArg::Any => HitsMode::Any,
                    HitsArg::Recall => HitsMode::Recall,
                },
                fmax_mode: match c.fmax_mode {
                    FmaxArg::Micro => FmaxMode::Micro,
                    FmaxArg::Macro => FmaxMode::Macro,
                },
                mcc_threshold: c.mcc_threshold,
            };
            let report = cmd_eval(&args, &options, c.out.as_deref())?;
            print!("{}", report.to_text());
        }
        Command::Predict(c) => {
            let rows = match &c.seq {
                Some(seq) => cmd_predict_single(
                    &SingleInput {
                        id: &c.id,
                        seq,
                        text: c.text.as_deref(),
                    },
                    c.infer.store.as_deref(),
                    &c.infer.checkpoint,
                    &c.infer.ablation.parse()?,
                    &c.out,
                )?,
                None => cmd_predict(&infer_args(&c.infer, split_arg(&c.split)?)?, &c.out)?,
            };
            println!("{rows} residues scored; written to {}", c.out.display());
        }
        Command::Calibrate(c) => {
            let args = infer_args(&c.infer, Some(c.split.parse()?))?;
            let report = cmd_calibrate(&args, c.band, c.bins, c.out.as_deref())?;
            print!("{}", report.to_text());
        }
        Command::ExportEmbeddings(c) => {
            let which: EmbeddingKind = c.which.parse()?;
            let args = infer_args(&c.infer, split_arg(&c.split)?)?;
            let rows = cmd_export_embeddings(&args, which, &c.out)?;
            println!("{rows} rows written to {}", c.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
