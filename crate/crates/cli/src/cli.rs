use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lexcase", version, about = "Structure-aware pre-training and retrieval for case documents")]
pub struct Cli {
    /// TOML file of flag defaults; a `[command-name]` table applies to that command only.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic structured-case corpus, optionally with queries and qrels.
    GenCorpus(GenCorpusArgs),
    /// Split raw case texts into five sections.
    Segment(SegmentArgs),
    /// Build the vocabulary and corpus statistics.
    BuildVocab(BuildVocabArgs),
    /// Pre-train the encoder and the two decoders.
    Pretrain(PretrainArgs),
    /// Contrastive fine-tuning of the encoder.
    Finetune(FinetuneArgs),
    /// Mine BM25 hard negatives into training triples.
    MineNegatives(MineArgs),
    /// Build a lexical or dense index.
    Index(IndexArgs),
    /// Rank documents for queries and write a TREC run file.
    Search(SearchArgs),
    /// Score a run file against qrels.
    Evaluate(EvaluateArgs),
    /// Train one model per setting and tabulate a probe metric.
    Sweep(SweepArgs),
    /// k-NN purity of fact embeddings against charge labels.
    ProbePurity(ProbeArgs),
    /// Write document embeddings as TSV.
    ExportEmbeddings(ExportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenCorpus(_) => "gen-corpus",
            Command::Segment(_) => "segment",
            Command::BuildVocab(_) => "build-vocab",
            Command::Pretrain(_) => "pretrain",
            Command::Finetune(_) => "finetune",
            Command::MineNegatives(_) => "mine-negatives",
            Command::Index(_) => "index",
            Command::Search(_) => "search",
            Command::Evaluate(_) => "evaluate",
            Command::Sweep(_) => "sweep",
            Command::ProbePurity(_) => "probe-purity",
            Command::ExportEmbeddings(_) => "export-embeddings",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Fact,
    Full,
}

impl From<Side> for lexcase_core::DocumentSide {
    fn from(s: Side) -> Self {
        match s {
            Side::Fact => lexcase_core::DocumentSide::Fact,
            Side::Full => lexcase_core::DocumentSide::Full,
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct GenCorpusArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub num_documents: usize,
    #[arg(long, default_value_t = 4)]
    pub num_charges: usize,
    #[arg(long, default_value_t = 3)]
    pub key_elements: usize,
    #[arg(long, default_value_t = 200)]
    pub shared_vocab: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise_rate: f64,
    /// Fraction of documents issued as confusable twin pairs.
    #[arg(long, default_value_t = 0.1)]
    pub pair_rate: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Also write up to this many queries (one per twin pair) with qrels.
    #[arg(long, default_value_t = 0)]
    pub queries: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SegmentArgs {
    /// JSONL of `{"id": ..., "text": ...}` raw documents.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON segmentation rules replacing the built-in markers.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Fail on documents without a fact marker instead of treating the whole text as fact.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub min_freq: usize,
    /// Maximum size including the five reserved tokens.
    #[arg(long, default_value_t = 30000)]
    pub max_size: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 128)]
    pub d_model: usize,
    #[arg(long, default_value_t = 4)]
    pub n_heads: usize,
    #[arg(long, default_value_t = 4)]
    pub encoder_layers: usize,
    #[arg(long, default_value_t = 1)]
    pub decoder_layers: usize,
    #[arg(long, default_value_t = 512)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 256)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.02)]
    pub init_std: f64,
    /// Use a separate output projection instead of the token embeddings.
    #[arg(long)]
    pub untied_head: bool,
    /// Round forward values to single precision.
    #[arg(long)]
    pub f32: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.15)]
    pub encoder_ratio: f64,
    #[arg(long, default_value_t = 0.45)]
    pub decoder_ratio: f64,
    /// `slots` or `tfidf`.
    #[arg(long, default_value = "slots")]
    pub decision_mode: String,
    /// TF-IDF decision ratio; defaults to the decoder ratio.
    #[arg(long)]
    pub decision_ratio: Option<f64>,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub warmup: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// full, no_rea, no_dec, no_both or shared_decoder.
    #[arg(long, default_value = "full")]
    pub ablation: String,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct PretrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Vocabulary from build-vocab; built from the corpus with min-freq 2 when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSONL of `{"id": ..., "text": ...}`.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub triples: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Queries per batch.
    #[arg(long, default_value_t = 4)]
    pub batch_queries: usize,
    /// Hard negatives per query.
    #[arg(long, default_value_t = 15)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub warmup: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, value_enum, default_value_t = Side::Full)]
    pub side: Side,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct MineArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Lexical index from `index lexical`; built from the corpus when absent.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub top_k: usize,
    #[arg(long, default_value_t = 15)]
    pub negatives: usize,
    #[arg(long, value_enum, default_value_t = Side::Full)]
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Lexical,
    Dense,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct IndexArgs {
    #[arg(value_enum)]
    pub kind: IndexKind,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Model checkpoint (dense only).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Side::Full)]
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LexicalScorer {
    Bm25,
    Ql,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SearchArgs {
    /// `lexical.json` or `dense.idx` from the index command.
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Model checkpoint for dense indexes.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LexicalScorer::Bm25)]
    pub scorer: LexicalScorer,
    #[arg(long, default_value_t = 0.9)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value = "lexcase")]
    pub tag: String,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "ndcg@10,ndcg@20,ndcg@30,mrr@10,p@5,r@5,f1@5,r@100")]
    pub metrics: Vec<String>,
    /// Second run for a paired randomization test per metric.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    EncoderRatio,
    DecoderRatio,
    DecoderLayers,
    MaskGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Purity,
    Ndcg,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Values for single-axis sweeps; defaults to 1..5 for decoder layers.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Encoder ratios of the mask grid.
    #[arg(long, value_delimiter = ',', default_value = "0,0.15,0.3")]
    pub grid_encoder: Vec<f64>,
    /// Decoder ratios of the mask grid.
    #[arg(long, value_delimiter = ',', default_value = "0.15,0.3,0.45,0.6")]
    pub grid_decoder: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ProbeKind::Purity)]
    pub probe: ProbeKind,
    /// k for purity or the NDCG cutoff.
    #[arg(long, default_value_t = 10)]
    pub probe_k: usize,
    /// Queries and qrels for the NDCG probe.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Side::Full)]
    pub side: Side,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Side::Fact)]
    pub side: Side,
}
