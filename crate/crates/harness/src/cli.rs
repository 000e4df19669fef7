//! The `signdpo` command line.
//!
//! Every failure prints one JSON line `{"error": <kind>, "message": ...}` to
//! stderr. Usage and configuration errors exit with 2, everything else
//! with 1.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use signdpo_core::perturb::PerturbConfig;
use signdpo_core::skeleton::save_sequences;
use signdpo_core::synth::generate_synthetic_corpus;
use signdpo_core::{LanguageMode, Vocabulary};
use signdpo_langprefs::{GeneratorClient, RuleBasedGenerator, SamplingMode};
use signdpo_policy::load_checkpoint;

use crate::config::TrainConfig;
use crate::data::load_corpus;
use crate::error::{HarnessError, Result};
use crate::eval::{evaluate, write_reports};
use crate::ops::{metric_config, perturb_corpus, read_lines, score_pairs, write_scores, KeySource};
use crate::prefs::{build_prefs, write_prefs, NegativeSource, PrefsConfig};
use crate::train::run_training;

#[derive(Debug, Parser)]
#[command(name = "signdpo", version, about = "Multi-level preference alignment for skeleton-to-text translation")]
struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a deterministic synthetic corpus.
    SynthData(SynthArgs),
    /// Train a policy (sft, dpo, signdpo or ablation:<component>).
    Train(TrainArgs),
    /// Decode a corpus with a checkpoint and write a metrics report.
    Eval(EvalArgs),
    /// Write the four input-level negatives of every sequence.
    Perturb(PerturbArgs),
    /// Score line-aligned predictions against references.
    Score(ScoreArgs),
    /// Score policy outputs, write SFT records, and generate language negatives.
    BuildPrefs(PrefsArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    /// Vocabulary size including the four reserved tokens.
    #[arg(long, default_value_t = 50)]
    vocab: usize,
    /// Number of sequences.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    min_frames: usize,
    #[arg(long, default_value_t = 16)]
    max_frames: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Language negatives file (from build-prefs).
    #[arg(long)]
    negatives: Option<PathBuf>,
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Report CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Defaults to vocab.txt next to the checkpoint.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Take key frames from this checkpoint's cross-attention.
    #[arg(long, conflicts_with = "key_frame")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Use a fixed key frame instead of model attention.
    #[arg(long)]
    key_frame: Option<usize>,
    #[arg(long)]
    window_ratio: Option<f64>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// One prediction per line.
    #[arg(long)]
    pred: PathBuf,
    /// One reference per line.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// word or char
    #[arg(long, default_value = "word")]
    language: String,
    /// detailed or summary
    #[arg(long, default_value = "detailed")]
    preset: String,
}

#[derive(Debug, Args)]
struct PrefsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Samples that receive a negative.
    #[arg(long)]
    corpus: PathBuf,
    /// Split whose decoded outputs give the score distribution; defaults to --corpus.
    #[arg(long)]
    score_corpus: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// empirical-resample or per-dimension
    #[arg(long, default_value = "empirical-resample")]
    sampling: String,
    /// Chat-completion endpoint; the rule-based generator is used without it.
    #[arg(long, requires = "generator_model")]
    endpoint: Option<String>,
    #[arg(long)]
    generator_model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    auth_env: Option<String>,
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            let msg = e.to_string();
            eprintln!("{}", error_line("usage", msg.lines().next().unwrap_or_default()));
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    let body = move || match cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train_cmd(a, threads),
        Command::Eval(a) => eval_cmd(a),
        Command::Perturb(a) => perturb_cmd(a),
        Command::Score(a) => score_cmd(a),
        Command::BuildPrefs(a) => prefs_cmd(a),
    };
    if threads == 0 {
        return body();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {threads} worker threads: {e}")))?
        .install(body)
}

fn synth_data(a: SynthArgs) -> Result<()> {
    if a.min_frames > a.max_frames {
        return Err(HarnessError::Config(format!(
            "--min-frames {} exceeds --max-frames {}",
            a.min_frames, a.max_frames
        )));
    }
    let corpus = generate_synthetic_corpus(a.seed, a.vocab, a.n, a.min_frames..=a.max_frames)?;
    save_sequences(&a.out, &corpus)?;
    println!("{}", serde_json::json!({ "written": a.out, "sequences": corpus.len() }));
    Ok(())
}

/// Builds the training config from the file, then flags, then `--set` pairs.
fn train_config(a: &TrainArgs, threads: usize) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = a.seed;
    if threads > 0 {
        cfg.threads = threads;
    }
    if let Some(m) = &a.mode {
        cfg.set("mode", m)?;
    }
    let paths = [
        ("train", &a.train),
        ("dev", &a.dev),
        ("negatives", &a.negatives),
        ("init_checkpoint", &a.init_checkpoint),
        ("checkpoint_dir", &a.checkpoint_dir),
    ];
    for (k, v) in paths {
        if let Some(p) = v {
            cfg.set(k, &p.to_string_lossy())?;
        }
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.optimizer.lr = lr;
    }
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("--set expects key=value, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn train_cmd(a: TrainArgs, threads: usize) -> Result<()> {
    let cfg = train_config(&a, threads)?;
    cfg.validate()?;
    let out = run_training(&cfg)?;
    let last = out.steps.last();
    println!(
        "{}",
        serde_json::json!({
            "mode": cfg.mode.to_string(),
            "epochs": cfg.epochs,
            "steps": out.steps.len(),
            "final_loss": last.map(|s| s.loss),
            "checkpoints": out.checkpoints,
            "best_checkpoint": out.best_checkpoint(),
        })
    );
    Ok(())
}

fn vocab_for(checkpoint: &Path, explicit: Option<&PathBuf>) -> Result<Vocabulary> {
    let path = match explicit {
        Some(p) => p.clone(),
        None => checkpoint
            .parent()
            .map(|d| d.join("vocab.txt"))
            .filter(|p| p.is_file())
            .ok_or_else(|| {
                HarnessError::Config(format!(
                    "no vocab.txt next to {}; pass --vocab",
                    checkpoint.display()
                ))
            })?,
    };
    Ok(Vocabulary::load(path)?)
}

fn load_model_and_vocab(checkpoint: &Path, vocab: Option<&PathBuf>) -> Result<(signdpo_policy::PolicyModel, Vocabulary)> {
    let vocab = vocab_for(checkpoint, vocab)?;
    let model = load_checkpoint(checkpoint, None)?;
    if model.config().vocab_size != vocab.len() {
        return Err(HarnessError::Config(format!(
            "checkpoint {} expects {} tokens but the vocabulary has {}",
            checkpoint.display(),
            model.config().vocab_size,
            vocab.len()
        )));
    }
    Ok((model, vocab))
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let (model, vocab) = load_model_and_vocab(&a.checkpoint, a.vocab.as_ref())?;
    let corpus = load_corpus(&a.corpus)?;
    let mut report = evaluate(&model, &vocab, &corpus, &a.split)?;
    report.checkpoint = Some(a.checkpoint.display().to_string());
    write_reports(&a.out, std::slice::from_ref(&report))?;
    println!("{}", serde_json::to_string(&report).map_err(|e| HarnessError::Input(e.to_string()))?);
    Ok(())
}

fn perturb_cmd(a: PerturbArgs) -> Result<()> {
    let corpus = load_corpus(&a.input)?;
    let mut cfg = PerturbConfig::default();
    if let Some(w) = a.window_ratio {
        cfg.window_ratio = w;
    }
    let loaded = match &a.checkpoint {
        Some(c) => Some(load_model_and_vocab(c, a.vocab.as_ref())?),
        None => None,
    };
    let key = match (&loaded, a.key_frame) {
        (Some((model, vocab)), _) => KeySource::Model { model, vocab },
        (None, Some(k)) => KeySource::Frame(k),
        (None, None) => {
            return Err(HarnessError::Config(
                "perturb needs --checkpoint (attention windows) or --key-frame".into(),
            ))
        }
    };
    let out = perturb_corpus(&corpus, key, a.seed, &cfg)?;
    save_sequences(&a.out, &out)?;
    println!("{}", serde_json::json!({ "written": a.out, "sequences": out.len() }));
    Ok(())
}

fn score_cmd(a: ScoreArgs) -> Result<()> {
    let mode: LanguageMode = a.language.parse()?;
    let cfg = metric_config(&a.preset, mode)?;
    let preds = read_lines(&a.pred)?;
    let refs = read_lines(&a.reference)?;
    let reports = score_pairs(&preds, &refs, &cfg)?;
    write_scores(&a.out, &reports)?;
    println!("{}", serde_json::json!({ "written": a.out, "pairs": reports.len() }));
    Ok(())
}

fn prefs_cmd(a: PrefsArgs) -> Result<()> {
    let sampling = match a.sampling.as_str() {
        "empirical-resample" => SamplingMode::EmpiricalResample,
        "per-dimension" => SamplingMode::PerDimension,
        other => {
            return Err(HarnessError::Config(format!(
                "unknown sampling mode '{other}', expected empirical-resample or per-dimension"
            )))
        }
    };
    let source = match (&a.endpoint, &a.generator_model) {
        (Some(url), Some(m)) => {
            let mut client = GeneratorClient::new(url.clone(), m.clone());
            client.auth_env = a.auth_env.clone();
            NegativeSource::Remote(client)
        }
        _ => NegativeSource::RuleBased(RuleBasedGenerator::default()),
    };
    let (model, vocab) = load_model_and_vocab(&a.checkpoint, a.vocab.as_ref())?;
    let targets = load_corpus(&a.corpus)?;
    let scored_split = match &a.score_corpus {
        Some(p) => load_corpus(p)?,
        None => targets.clone(),
    };
    let cfg = PrefsConfig {
        seed: a.seed,
        sampling,
        source,
    };
    let out = build_prefs(&model, &vocab, &scored_split, &targets, &cfg)?;
    let files = write_prefs(&a.out_dir, &out)?;
    println!(
        "{}",
        serde_json::json!({
            "scored": files.scored,
            "sft": files.sft,
            "negatives": files.negatives,
            "scored_samples": out.scored.len(),
            "negative_records": out.negatives.len(),
        })
    );
    Ok(())
}
