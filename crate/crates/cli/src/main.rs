//! `amrgen`: preprocess AMR corpora, train and run graph-to-sequence
//! generators, and score their output.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use amrgen::config::{EncoderKind, GraphDirection, SeqDirection};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "amrgen", version, about = "AMR-to-text generation with a graph-state LSTM")]
pub struct Cli {
    /// Worker threads for node updates, batches and decoding (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write vocabularies, linearizations and graph tables for a corpus.
    Preprocess(PreprocessArgs),
    /// Diameter histogram or linearization distance report.
    Stats(StatsArgs),
    /// Train a model and save the best checkpoint.
    Train(TrainArgs),
    /// Generate one sentence per graph.
    Generate(GenerateArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients of every parameter group.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct CorpusArgs {
    /// AMR corpus: PENMAN blocks, optionally with `# ::snt` lines.
    pub corpus: PathBuf,
    /// Sentences aligned with the graphs, one per line; replaces `# ::snt`.
    #[arg(long)]
    pub sentences: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long, short)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Report {
    /// `diameter<TAB>cumulative_fraction`
    Diameter,
    /// Linearization gap between the ends of every edge, `distance<TAB>cumulative_fraction`.
    Distance,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Report::Diameter)]
    pub report: Report,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EncoderArg {
    Seq,
    Graph,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Seq => EncoderKind::Seq,
            EncoderArg::Graph => EncoderKind::Graph,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GraphDirectionArg {
    Both,
    Incoming,
    Outgoing,
}

impl From<GraphDirectionArg> for GraphDirection {
    fn from(d: GraphDirectionArg) -> Self {
        match d {
            GraphDirectionArg::Both => GraphDirection::Both,
            GraphDirectionArg::Incoming => GraphDirection::IncomingOnly,
            GraphDirectionArg::Outgoing => GraphDirection::OutgoingOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SeqDirectionArg {
    Both,
    Forward,
    Backward,
}

impl From<SeqDirectionArg> for SeqDirection {
    fn from(d: SeqDirectionArg) -> Self {
        match d {
            SeqDirectionArg::Both => SeqDirection::Both,
            SeqDirectionArg::Forward => SeqDirection::ForwardOnly,
            SeqDirectionArg::Backward => SeqDirection::BackwardOnly,
        }
    }
}

/// Architecture flags. Unset flags keep the built-in defaults.
#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
    /// Copy mechanism on or off (`--copy` alone means on).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub copy: Option<bool>,
    /// Character LSTM features on or off (`--char` alone means on).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub char: Option<bool>,
    /// Graph-state transition steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Hidden size; also every embedding width unless `--word-dim` is given.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Word, input and edge-label embedding width.
    #[arg(long)]
    pub word_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub graph_direction: Option<GraphDirectionArg>,
    #[arg(long, value_enum)]
    pub seq_direction: Option<SeqDirectionArg>,
    /// Update word embeddings during training.
    #[arg(long)]
    pub train_embeddings: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub dev_sentences: Option<PathBuf>,
    /// Extra corpus run before the main corpus in every epoch.
    #[arg(long)]
    pub pretrain: Option<PathBuf>,
    /// Pretrained vectors, `word v1 … vD` per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Checkpoint path for the best model.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the per-epoch log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Beam size for dev decoding.
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    pub corpus: PathBuf,
    /// Write sentences here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, conflicts_with = "greedy")]
    pub beam: Option<usize>,
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub hypotheses: PathBuf,
    pub references: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Graph and sentence to check on (first pair of the corpus); a small
    /// built-in example otherwise.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Networks to check; both when omitted.
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
    #[arg(long, default_value_t = 300)]
    pub hidden: usize,
    /// Entries per parameter group, largest analytic gradients first.
    #[arg(long, default_value_t = 5)]
    pub entries: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(2)
        }
    }
}

/// The error and its causes, skipping causes already spelled out above them.
fn message(e: &anyhow::Error) -> String {
    let mut text = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !text.contains(&c) {
            text = format!("{text}: {c}");
        }
    }
    text
}
