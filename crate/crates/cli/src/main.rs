//! `decoyforge`: ingest device records, build a vocabulary, train a
//! WGAN-GP, sample configurations, evaluate them and emit HoneyD decoys.

mod manifest;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use decoyforge::config::{
    build_vocabulary, coverage_fraction, default_prototypes, label_histogram, parse_corpus, separable_prototypes,
    synth_corpus, write_corpus, CorpusSpec, DeviceConfig, Vocabulary,
};
use decoyforge::emitter::{build_fleet, parse_pool, PersonalityMap};
use decoyforge::encoding::{read_matrices, write_matrices, ConfigMatrix};
use decoyforge::eval::{
    default_sizes, emit_report, generate_for_eval, prd_from_samples, uniqueness_table, DEFAULT_ANGLES,
};
use decoyforge::gan::{
    load_checkpoint, sample, save_checkpoint, train_with, training_set, ArchConfig, Condition, ConditionMode,
    ConditionSpec, Hyperparams,
};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "decoyforge", version, about = "GAN-generated HoneyD decoys from device scan records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus drawn from the bundled prototypes
    Synth(SynthArgs),
    /// Normalize a JSON Lines file of scan records into a corpus
    Ingest(IngestArgs),
    /// Build the encoding vocabulary of a corpus
    Vocab(VocabArgs),
    /// Train a GAN and save a checkpoint directory
    Train(TrainArgs),
    /// Draw configuration matrices from a checkpoint
    Sample(SampleArgs),
    /// Precision/recall curves and uniqueness table for a checkpoint
    Eval(EvalArgs),
    /// Compile sampled matrices into a HoneyD configuration file
    Emit(EmitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PrototypeSet {
    /// Twenty weighted prototypes, two per OS label
    Default,
    /// Labels with disjoint port sets
    Separable,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, value_enum, default_value_t = PrototypeSet::Default)]
    prototypes: PrototypeSet,
    /// Probability that a device gets one service module swapped
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, env = "DECOYFORGE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VocabArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Number of port columns to fill with the most frequent ports
    #[arg(long, env = "DECOYFORGE_PORTS", default_value_t = 30)]
    ports: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Uncond,
    Os,
    Dt,
}

impl From<ModeArg> for ConditionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Uncond => ConditionMode::Unconditional,
            ModeArg::Os => ConditionMode::Os,
            ModeArg::Dt => ConditionMode::DeviceType,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    /// Full-width layers
    Full,
    /// Narrow layers
    Compact,
    /// Narrowest layers, for single-core runs
    Desk,
}

impl ArchArg {
    fn config(self) -> ArchConfig {
        match self {
            ArchArg::Full => ArchConfig::default(),
            ArchArg::Compact => ArchConfig::compact(),
            ArchArg::Desk => ArchConfig::desk(),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Uncond)]
    mode: ModeArg,
    #[arg(long, env = "DECOYFORGE_STEPS", default_value_t = 11844)]
    steps: usize,
    #[arg(long, env = "DECOYFORGE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, env = "DECOYFORGE_ARCH", default_value_t = ArchArg::Full)]
    arch: ArchArg,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Print losses every this many steps (0 for never)
    #[arg(long, default_value_t = 100)]
    log_every: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    n: usize,
    /// OS label name, or comma-separated device types
    #[arg(long)]
    label: Option<String>,
    #[arg(long, env = "DECOYFORGE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = 20)]
    clusters: usize,
    /// Sample sizes for the uniqueness table
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, env = "DECOYFORGE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmitArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// JSON map from OS label to personality; the bundled map if omitted
    #[arg(long)]
    personalities: Option<PathBuf>,
    #[arg(long, env = "DECOYFORGE_POOL", default_value = "10.0.0.0/16")]
    pool: String,
    #[arg(long)]
    out: PathBuf,
}

fn read_corpus(path: &Path) -> Result<Vec<DeviceConfig>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_corpus(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?;
    Vocabulary::from_json(&text).with_context(|| format!("reading {}", path.display()))
}

fn read_samples(path: &Path) -> Result<Vec<ConfigMatrix>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_matrices(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut manifest = RunManifest::start();
    manifest.seed("seed", args.seed);
    let prototypes = match args.prototypes {
        PrototypeSet::Default => default_prototypes(),
        PrototypeSet::Separable => separable_prototypes(),
    };
    let spec = CorpusSpec {
        prototypes,
        noise_rate: args.noise,
        seed: args.seed,
    };
    let corpus = synth_corpus(&spec, args.n)?;
    write_corpus(create(&args.out)?, &corpus)?;
    manifest.finish(&args.out)?;
    eprintln!("wrote {} devices to {}", corpus.len(), args.out.display());
    Ok(())
}

fn ingest(args: IngestArgs) -> Result<()> {
    let mut manifest = RunManifest::start();
    manifest.input(&args.input)?;
    let corpus = read_corpus(&args.input)?;
    if corpus.is_empty() {
        bail!("{} holds no records", args.input.display());
    }
    write_corpus(create(&args.out)?, &corpus)?;
    manifest.finish(&args.out)?;
    eprintln!("ingested {} devices", corpus.len());
    for (label, count) in label_histogram(&corpus) {
        eprintln!("  {label}: {count}");
    }
    Ok(())
}

fn vocab(args: VocabArgs) -> Result<()> {
    let mut manifest = RunManifest::start();
    manifest.input(&args.corpus)?;
    let corpus = read_corpus(&args.corpus)?;
    let vocab = build_vocabulary(&corpus, args.ports)?;
    let mut out = create(&args.out)?;
    out.write_all(vocab.to_json().as_bytes())?;
    out.flush()?;
    drop(out);
    manifest.finish(&args.out)?;
    eprintln!(
        "{} active ports, coverage {:.3}",
        vocab.active().len(),
        coverage_fraction(&corpus, &vocab)
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::start();
    manifest.seed("seed", args.seed);
    manifest.input(&args.corpus)?;
    manifest.input(&args.vocab)?;
    let corpus = read_corpus(&args.corpus)?;
    let vocab = read_vocab(&args.vocab)?;
    let mode = ConditionMode::from(args.mode);
    let (matrices, labels) = training_set(&corpus, &vocab, mode);
    let defaults = Hyperparams::default();
    let hp = Hyperparams {
        total_steps: args.steps,
        seed: args.seed,
        learning_rate: args.learning_rate.unwrap_or(defaults.learning_rate),
        batch_size: args.batch_size.unwrap_or(defaults.batch_size),
        latent_dim: args.latent_dim.unwrap_or(defaults.latent_dim),
        ..defaults
    };
    let log_every = args.log_every;
    let (model, report) = train_with(
        &matrices,
        labels.as_deref(),
        ConditionSpec::new(mode),
        &hp,
        &args.arch.config(),
        |model, rec| {
            if log_every > 0 && model.step_count % log_every == 0 {
                eprintln!(
                    "step {} d_loss {:.4} g_loss {:.4} gp {:.4} ({:.0} ms)",
                    model.step_count, rec.d_loss, rec.g_loss, rec.gp, rec.wall_ms
                );
            }
            ControlFlow::Continue(())
        },
    )?;
    save_checkpoint(&model, &args.out)?;
    let mut csv = create(&args.out.join("losses.csv"))?;
    writeln!(csv, "step,d_loss,g_loss,gp")?;
    for (i, r) in report.steps.iter().enumerate() {
        writeln!(csv, "{},{},{},{}", i + 1, r.d_loss, r.g_loss, r.gp)?;
    }
    csv.flush()?;
    drop(csv);
    manifest.finish(&args.out)?;
    eprintln!("trained {} steps on {} devices", report.len(), matrices.len());
    Ok(())
}

fn sample_cmd(args: SampleArgs) -> Result<()> {
    let mut manifest = RunManifest::start();
    manifest.seed("seed", args.seed);
    manifest.input(&args.ckpt)?;
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let model = load_checkpoint(&args.ckpt)?;
    let condition = args
        .label
        .as_deref()
        .map(|text| match model.condition.mode {
            ConditionMode::Unconditional => Ok(None),
            mode => Condition::parse(mode, text).map(Some),
        })
        .transpose()
        .map_err(anyhow::Error::msg)?
        .flatten();
    if args.label.is_some() && condition.is_none() {
        bail!("model is unconditional; no label is allowed");
    }
    let matrices = sample(&model, args.n, condition.as_ref(), args.seed)?;
    write_matrices(create(&args.out)?, &matrices)?;
    manifest.finish(&args.out)?;
    eprintln!("wrote {} samples to {}", matrices.len(), args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut manifest = RunManifest::start();
    manifest.seed("seed", args.seed);
    manifest.input(&args.ckpt)?;
    manifest.input(&args.corpus)?;
    manifest.input(&args.vocab)?;
    let model = load_checkpoint(&args.ckpt)?;
    let corpus = read_corpus(&args.corpus)?;
    let vocab = read_vocab(&args.vocab)?;
    let (real, labels) = training_set(&corpus, &vocab, model.condition.mode);
    let sizes = args.sizes.unwrap_or_else(default_sizes);
    let n = sizes.iter().copied().max().unwrap_or(0).max(real.len().min(5000)).max(1);
    let generated = generate_for_eval(&model, labels.as_deref(), n, args.seed)?;
    let curve = prd_from_samples(&real, &generated, args.clusters, DEFAULT_ANGLES, args.seed)?;
    let table = uniqueness_table(&real, &generated, &vocab, &sizes, args.seed)?;
    let name = match model.condition.mode {
        ConditionMode::Unconditional => "uncond",
        ConditionMode::Os => "os",
        ConditionMode::DeviceType => "dt",
    };
    emit_report(&[(name.to_owned(), curve.clone())], &table, &args.out)?;
    manifest.finish(&args.out)?;
    eprintln!("PRD area {:.4}, max F-like point {:?}", curve.auc(), curve.max_alpha_beta());
    Ok(())
}

fn emit(args: EmitArgs) -> Result<()> {
    let mut manifest = RunManifest::start();
    manifest.input(&args.samples)?;
    manifest.input(&args.vocab)?;
    let pmap = match &args.personalities {
        Some(path) => {
            manifest.input(path)?;
            PersonalityMap::from_json(&fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?)?
        }
        None => PersonalityMap::default(),
    };
    let samples = read_samples(&args.samples)?;
    let vocab = read_vocab(&args.vocab)?;
    let pool = parse_pool(&args.pool)?;
    let (fleet, text) = build_fleet(&samples, &vocab, &pmap, pool)?;
    let mut out = create(&args.out)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    drop(out);
    manifest.finish(&args.out)?;
    eprintln!("wrote {} decoys to {}", fleet.decoys.len(), args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Vocab(a) => vocab(a),
        Command::Train(a) => train(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Emit(a) => emit(a),
    }
}

/// Collapses a multi-line message onto one line.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let message = rendered.split("\n\n").next().unwrap_or(&rendered);
            eprintln!("decoyforge: {}", one_line(message));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("decoyforge: error: {}", one_line(&format!("{e:#}")));
            ExitCode::from(1)
        }
    }
}
