//! Case documents, marker segmentation and the synthetic structured-case
//! generator.

mod document;
mod io;
mod segment;
mod synthetic;

pub use document::{CaseDocument, Section, MIN_FACT_TOKENS};
pub use io::{load_corpus, read_corpus, save_corpus, CorpusReader};
pub use segment::{segment_document, Fallback, SegmentationRules};
pub use synthetic::{
    generate_synthetic, generate_synthetic_benchmark, generate_synthetic_corpus, ChargeSchema,
    SyntheticBenchmark, SyntheticCorpus, SyntheticQuery, SyntheticSpec,
};
