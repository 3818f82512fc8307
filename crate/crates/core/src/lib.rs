//! Structure-aware pre-training and retrieval for case documents.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: the five-section document model, marker segmentation and a
//!   synthetic structured-case generator.
//! - [`textproc`]: tokenizer, vocabulary, corpus statistics and TF-IDF.
//! - [`masking`]: random, slot and TF-IDF masking.
//! - [`numerics`]: a small reverse-mode autodiff engine, AdamW, the learning
//!   rate schedule and the checkpoint container.
//! - [`model`]: deep fact encoder with two shallow decoders fed through the
//!   fact vector, and the joint pre-training objective.
//! - [`pretrain`] / [`finetune`]: the training loops.
//! - [`retrieval`]: BM25, Dirichlet query likelihood and exhaustive dense search.
//! - [`evalkit`]: ranking metrics, randomization tests and the k-NN purity probe.

pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod finetune;
pub mod masking;
pub mod model;
pub mod numerics;
pub mod pretrain;
pub mod retrieval;
pub mod seed;
pub mod textproc;

pub use corpus::{CaseDocument, Section, SegmentationRules, SyntheticSpec};
pub use error::{Error, Result};
pub use evalkit::{Metric, MetricReport, QrelSet};
pub use finetune::{FinetuneConfig, TrainingTriple};
pub use masking::{MaskPolicy, MaskedExample};
pub use model::{Ablation, DocumentSide, LossBreakdown, ModelConfig, StructuredCaseModel};
pub use numerics::{Checkpoint, Graph, Precision, Tensor, Var};
pub use pretrain::{PretrainConfig, TrainLog};
pub use retrieval::{EmbeddingIndex, InvertedIndex, LexicalModel, Query, RankedList};
pub use textproc::{CorpusStats, Vocabulary};
