mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use zslkit::harness::Setting;
use zslkit::NormMode;

#[derive(Debug, Parser)]
#[command(name = "zslkit", version, about = "Zero-shot classifier regression with residual GCNs")]
struct Cli {
    /// Increase log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Only print errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the semantic-enhanced graph from a class list, taxonomy and word vectors.
    BuildGraph(BuildGraphArgs),
    /// Train a model on a graph directory and seen-class classifiers.
    Train(TrainArgs),
    /// Score test features against predicted classifiers; prints JSON.
    Eval(EvalArgs),
    /// Finite-difference check of a registered model's gradients.
    Gradcheck(GradcheckArgs),
    /// Write a seeded synthetic task as plain-text inputs.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormArg {
    Sym,
    Rw,
}

impl From<NormArg> for NormMode {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Sym => NormMode::Sym,
            NormArg::Rw => NormMode::RandomWalk,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SettingArg {
    Conventional,
    Generalized,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Conventional => Setting::Conventional,
            SettingArg::Generalized => Setting::Generalized,
        }
    }
}

#[derive(Debug, Args)]
struct BuildGraphArgs {
    /// `class_id<TAB>name<TAB>seen|unseen` per line.
    #[arg(long)]
    classes: PathBuf,
    /// `parent_id<TAB>child_id` per line.
    #[arg(long)]
    taxonomy: PathBuf,
    /// GloVe-style `token v1 ... vd` lines.
    #[arg(long)]
    word_vectors: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "rw")]
    norm: NormArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory written by `build-graph`.
    #[arg(long)]
    graph: PathBuf,
    /// Ground-truth classifiers, `class_id<TAB>v1 ... vD`, one per seen class.
    #[arg(long)]
    gt: PathBuf,
    /// Class embeddings to use instead of the graph directory's.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Loss curve CSV (default: `<out>.loss.csv`).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// JSON training config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Debug, Args)]
struct TrainOverrides {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    model: Option<u8>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// L2 weight decay.
    #[arg(long)]
    wd: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// LeakyReLU negative slope.
    #[arg(long)]
    slope: Option<f64>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    #[arg(long, env = "ZSLKIT_SEED")]
    seed: Option<u64>,
    /// Divide the 1024/2048 hidden widths by this factor.
    #[arg(long)]
    width_divisor: Option<usize>,
    /// Apply LeakyReLU after the last layer too.
    #[arg(long)]
    final_activation: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    /// `sample_id<TAB>class_id<TAB>v1 ... vD` per line.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, required_unless_present = "classifiers", conflicts_with = "classifiers")]
    checkpoint: Option<PathBuf>,
    /// Score with these classifiers (one row per class) instead of a model.
    #[arg(long)]
    classifiers: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "conventional")]
    setting: SettingArg,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    model: u8,
    #[arg(long, env = "ZSLKIT_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, env = "ZSLKIT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    n_seen: usize,
    #[arg(long, default_value_t = 10)]
    n_unseen: usize,
    /// Word-embedding dimension.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Classifier dimension.
    #[arg(long, default_value_t = 32)]
    classifier_dim: usize,
    /// Standard deviation of the feature noise.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 20)]
    samples_per_class: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Exit codes: 0 success, 1 numeric failure, 2 usage or input error.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<commands::NumericFailure>().is_some() {
        return 1;
    }
    match err.downcast_ref::<zslkit::Error>() {
        Some(zslkit::Error::NonFinite(_) | zslkit::Error::Invariant(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, _) => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let result = match cli.command {
        Command::BuildGraph(a) => commands::build_graph(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
