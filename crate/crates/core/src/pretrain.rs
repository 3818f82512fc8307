//! Pre-training loop: batch assembly, optimisation, checkpoints and the
//! mask-ratio / decoder-depth sweep driver.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CaseDocument, Section};
use crate::error::{Error, Result};
use crate::evalkit::{knn_purity, ndcg_at_k, QrelSet};
use crate::masking::{decision_slot_spans, example_rng, mask_count, mask_random, mask_slots, mask_tfidf, MaskedExample, TokenizedSection};
use crate::numerics::{adamw_step, lr_schedule, AdamW, OptimizerState};
use crate::retrieval::{build_dense_index, dense_run, Query};
use crate::seed::SeedHasher;
use crate::textproc::{tokenize, CorpusStats, TokenId, Vocabulary};

pub use crate::model::{Ablation, DocumentSide, LossBreakdown, ModelConfig, PretrainExample, StructuredCaseModel};

/// How decision tokens are chosen for masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMaskMode {
    /// Law article, charge and term spans; documents without labels fall
    /// back to TF-IDF selection.
    #[default]
    Slots,
    Tfidf,
}

impl FromStr for DecisionMaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slots" => Ok(DecisionMaskMode::Slots),
            "tfidf" => Ok(DecisionMaskMode::Tfidf),
            _ => Err(Error::InvalidConfig(format!("unknown decision mask mode {s:?} (slots, tfidf)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub encoder_mask_ratio: f64,
    pub decoder_mask_ratio: f64,
    pub decision_mask_mode: DecisionMaskMode,
    /// TF-IDF decision ratio; the reasoning ratio when unset.
    pub decision_mask_ratio: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after this many steps; the schedule spans `min(max_steps, epochs x batches)`.
    pub max_steps: Option<usize>,
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub seed: u64,
    pub ablation: Ablation,
    pub optimizer: AdamW,
    /// Writes `epoch{N}.ckpt` after every epoch when set.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            encoder_mask_ratio: 0.15,
            decoder_mask_ratio: 0.45,
            decision_mask_mode: DecisionMaskMode::Slots,
            decision_mask_ratio: None,
            batch_size: 16,
            epochs: 3,
            max_steps: None,
            base_lr: 3e-4,
            warmup_ratio: 0.1,
            seed: 42,
            ablation: Ablation::Full,
            optimizer: AdamW::default(),
            checkpoint_dir: None,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ratio_ok = |r: f64| (0.0..=1.0).contains(&r);
        for (name, r) in [
            ("encoder_mask_ratio", self.encoder_mask_ratio),
            ("decoder_mask_ratio", self.decoder_mask_ratio),
            ("decision_mask_ratio", self.decision_ratio()),
            ("warmup_ratio", self.warmup_ratio),
        ] {
            if !ratio_ok(r) {
                return Err(Error::InvalidConfig(format!("{name} {r} outside [0, 1]")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.base_lr >= 0.0) {
            return Err(Error::InvalidConfig("base_lr must be non-negative".into()));
        }
        Ok(())
    }

    pub fn decision_ratio(&self) -> f64 {
        self.decision_mask_ratio.unwrap_or(self.decoder_mask_ratio)
    }
}

/// A tokenized, truncated document ready for masking.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDoc {
    pub doc_id: String,
    pub fact: Vec<TokenId>,
    pub reasoning: Vec<TokenId>,
    pub decision: Vec<TokenId>,
    /// Slot spans inside `decision`; `None` when the document has no labels.
    pub decision_slots: Option<Vec<(usize, usize)>>,
}

/// Tokenized corpus plus the statistics used for TF-IDF decision masking.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub docs: Vec<PreparedDoc>,
    pub stats: CorpusStats,
    /// Documents dropped because their fact section is empty.
    pub skipped: usize,
}

impl PreparedCorpus {
    pub fn new(docs: &[CaseDocument], vocab: &Vocabulary, max_len: usize) -> Result<Self> {
        let limit = max_len.saturating_sub(1);
        let mut prepared = Vec::with_capacity(docs.len());
        let mut skipped = 0;
        for doc in docs {
            let mut fact = vocab.encode(&doc.fact);
            if fact.is_empty() {
                skipped += 1;
                continue;
            }
            fact.truncate(limit);
            let mut reasoning = vocab.encode(&doc.reasoning);
            reasoning.truncate(limit);
            let decision_tokens = tokenize(&doc.decision);
            let mut decision = vocab.encode_tokens(&decision_tokens);
            decision.truncate(limit);
            let has_labels = doc.charge_label.is_some() || doc.law_ids.is_some() || doc.term_months.is_some();
            let decision_slots = has_labels.then(|| {
                decision_slot_spans(&decision_tokens, doc)
                    .into_iter()
                    .filter(|(_, e)| *e <= decision.len())
                    .collect()
            });
            prepared.push(PreparedDoc {
                doc_id: doc.id.clone(),
                fact,
                reasoning,
                decision,
                decision_slots,
            });
        }
        if prepared.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let full: Vec<Vec<TokenId>> = docs.iter().map(|d| vocab.encode(&d.render())).collect();
        Ok(PreparedCorpus {
            docs: prepared,
            stats: CorpusStats::from_docs(&full),
            skipped,
        })
    }
}

fn mask_decision(doc: &PreparedDoc, config: &PretrainConfig, stats: &CorpusStats, tokens: &TokenizedSection) -> Result<MaskedExample> {
    match (config.decision_mask_mode, &doc.decision_slots) {
        (DecisionMaskMode::Slots, Some(spans)) => mask_slots(tokens, spans),
        _ => mask_tfidf(tokens, config.decision_ratio(), stats),
    }
}

/// Masked examples for `docs` at `epoch`. Each section draws from its own
/// stream keyed by (seed, epoch, doc id, section).
pub fn build_pretrain_batch(docs: &[&PreparedDoc], stats: &CorpusStats, config: &PretrainConfig, epoch: u64) -> Result<Vec<PretrainExample>> {
    docs.iter()
        .map(|doc| {
            let fact = TokenizedSection::new(doc.fact.clone(), Section::Fact, doc.doc_id.clone());
            let mut rng = example_rng(config.seed, epoch, &doc.doc_id, Section::Fact);
            let fact = mask_random(&fact, config.encoder_mask_ratio, &mut rng)?;
            let reasoning = if config.ablation.uses_reasoning() && !doc.reasoning.is_empty() {
                let t = TokenizedSection::new(doc.reasoning.clone(), Section::Reasoning, doc.doc_id.clone());
                let mut rng = example_rng(config.seed, epoch, &doc.doc_id, Section::Reasoning);
                Some(mask_random(&t, config.decoder_mask_ratio, &mut rng)?)
            } else {
                None
            };
            let decision = if config.ablation.uses_decision() && !doc.decision.is_empty() {
                let t = TokenizedSection::new(doc.decision.clone(), Section::Decision, doc.doc_id.clone());
                Some(mask_decision(doc, config, stats, &t)?)
            } else {
                None
            };
            Ok(PretrainExample {
                doc_id: doc.doc_id.clone(),
                fact,
                reasoning,
                decision,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: LossBreakdown,
    pub lr: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    pub epoch_checkpoints: Vec<PathBuf>,
    pub skipped_docs: usize,
}

impl TrainLog {
    /// `step,l_mlm,l_rea,l_dec,l_total,lr`; wall time is left out so the
    /// file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,l_mlm,l_rea,l_dec,l_total,lr\n");
        for r in &self.records {
            let l = &r.loss;
            let _ = writeln!(out, "{},{},{},{},{},{}", r.step, l.l_mlm, l.l_rea, l.l_dec, l.l_total, r.lr);
        }
        out
    }

    pub fn first(&self) -> Option<&LossBreakdown> {
        self.records.first().map(|r| &r.loss)
    }

    pub fn last(&self) -> Option<&LossBreakdown> {
        self.records.last().map(|r| &r.loss)
    }
}

/// Fresh model sized for `vocab` with the decoder layout the ablation needs.
pub fn init_model(mut model_config: ModelConfig, vocab: &Vocabulary, config: &PretrainConfig) -> Result<StructuredCaseModel> {
    model_config.vocab_size = vocab.len();
    model_config.shared_decoder = config.ablation == Ablation::SharedDecoder;
    StructuredCaseModel::new(model_config, config.seed)
}

pub fn total_steps(num_docs: usize, config: &PretrainConfig) -> usize {
    let per_epoch = num_docs.div_ceil(config.batch_size);
    let full = per_epoch.saturating_mul(config.epochs);
    config.max_steps.map_or(full, |m| m.min(full))
}

fn grads_finite(grads: &[Option<crate::numerics::Tensor>]) -> bool {
    grads.iter().flatten().all(|g| g.is_finite())
}

/// Trains `model` in place on `corpus`.
pub fn pretrain_model(model: &mut StructuredCaseModel, vocab: &Vocabulary, corpus: &PreparedCorpus, config: &PretrainConfig) -> Result<TrainLog> {
    config.validate()?;
    if config.ablation == Ablation::SharedDecoder && !model.config.shared_decoder {
        return Err(Error::InvalidConfig("shared_decoder ablation needs a model built with a shared decoder".into()));
    }
    let n = corpus.docs.len();
    let total = total_steps(n, config);
    let mut state = OptimizerState::new(&model.params);
    let mut log = TrainLog {
        skipped_docs: corpus.skipped,
        ..Default::default()
    };
    let dropout_seed = |step: usize| (model.config.dropout > 0.0).then(|| SeedHasher::new(config.seed).str("dropout").u64(step as u64).finish());
    let start = Instant::now();
    let mut step = 0;
    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut SeedHasher::new(config.seed).str("order").u64(epoch as u64).rng());
        for chunk in order.chunks(config.batch_size) {
            if step >= total {
                break 'epochs;
            }
            let docs: Vec<&PreparedDoc> = chunk.iter().map(|i| &corpus.docs[*i]).collect();
            let batch = build_pretrain_batch(&docs, &corpus.stats, config, epoch as u64)?;
            let (grads, loss) = model.batch_gradients(&batch, config.ablation, dropout_seed(step))?;
            if !loss.l_total.is_finite() || !grads_finite(&grads) {
                return Err(Error::NonFinite { step });
            }
            let lr = lr_schedule(step, total, config.warmup_ratio, config.base_lr);
            adamw_step(&mut model.params, &grads, &mut state, &config.optimizer, lr);
            log.records.push(TrainRecord {
                step,
                loss,
                lr,
                wall_secs: start.elapsed().as_secs_f64(),
            });
            log::debug!("step {step} l_total {:.5} lr {lr:.3e}", loss.l_total);
            step += 1;
        }
        if let Some(dir) = &config.checkpoint_dir {
            let path = dir.join(format!("epoch{}.ckpt", epoch + 1));
            checkpoint(model, vocab, config, step)?.save(&path)?;
            log.epoch_checkpoints.push(path);
        }
    }
    Ok(log)
}

/// Model checkpoint carrying the pre-training config and step count.
pub fn checkpoint(model: &StructuredCaseModel, vocab: &Vocabulary, config: &PretrainConfig, step: usize) -> Result<crate::numerics::Checkpoint> {
    let mut extra = serde_json::Map::new();
    // The output location is left out so checkpoints do not depend on where they are written.
    let config = PretrainConfig { checkpoint_dir: None, ..config.clone() };
    extra.insert("pretrain".into(), serde_json::to_value(&config)?);
    extra.insert("step".into(), step.into());
    model.to_checkpoint(vocab, extra)
}

/// Builds and trains a model on `docs`.
pub fn pretrain(docs: &[CaseDocument], vocab: &Vocabulary, model_config: ModelConfig, config: &PretrainConfig) -> Result<(StructuredCaseModel, TrainLog)> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut model = init_model(model_config, vocab, config)?;
    let corpus = PreparedCorpus::new(docs, vocab, model.config.max_len)?;
    let log = pretrain_model(&mut model, vocab, &corpus, config)?;
    Ok((model, log))
}

/// Downstream measurement applied to each sweep cell.
#[derive(Debug, Clone, Copy)]
pub enum Probe<'a> {
    /// k-NN purity of fact embeddings against charge labels.
    Purity { docs: &'a [CaseDocument], k: usize },
    /// Mean dense NDCG@k.
    Ndcg {
        docs: &'a [CaseDocument],
        queries: &'a [Query],
        qrels: &'a QrelSet,
        k: usize,
        side: DocumentSide,
    },
}

impl Probe<'_> {
    pub fn name(&self) -> String {
        match self {
            Probe::Purity { k, .. } => format!("purity@{k}"),
            Probe::Ndcg { k, .. } => format!("ndcg@{k}"),
        }
    }

    pub fn evaluate(&self, model: &StructuredCaseModel, vocab: &Vocabulary) -> Result<f64> {
        match *self {
            Probe::Purity { docs, k } => fact_purity(model, vocab, docs, k),
            Probe::Ndcg { docs, queries, qrels, k, side } => {
                let index = build_dense_index(model, vocab, docs, side, "")?;
                let run = dense_run(model, vocab, &index, queries, k)?;
                let vals: Vec<f64> = run
                    .iter()
                    .filter(|l| qrels.num_relevant(&l.query_id) > 0)
                    .map(|l| ndcg_at_k(&l.doc_ids(), qrels.for_query(&l.query_id), k))
                    .collect();
                if vals.is_empty() {
                    return Err(Error::InvalidConfig("no probe query has a relevant document".into()));
                }
                Ok(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        }
    }
}

/// k-NN purity of fact embeddings over the labelled documents.
pub fn fact_purity(model: &StructuredCaseModel, vocab: &Vocabulary, docs: &[CaseDocument], k: usize) -> Result<f64> {
    let labelled: Vec<&CaseDocument> = docs.iter().filter(|d| d.charge_label.is_some()).collect();
    let inputs: Vec<Vec<TokenId>> = labelled
        .iter()
        .map(|d| crate::model::retrieval_input(d, vocab, DocumentSide::Fact, model.config.max_len))
        .collect();
    let emb = model.embed_many(&inputs)?;
    let labels: Vec<&str> = labelled.iter().map(|d| d.charge_label.as_deref().unwrap_or_default()).collect();
    knn_purity(&emb, &labels, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    EncoderRatio,
    DecoderRatio,
    DecoderLayers,
    /// Encoder x decoder mask-ratio grid.
    MaskGrid,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder_ratio" => Ok(SweepAxis::EncoderRatio),
            "decoder_ratio" => Ok(SweepAxis::DecoderRatio),
            "decoder_layers" => Ok(SweepAxis::DecoderLayers),
            "mask_grid" => Ok(SweepAxis::MaskGrid),
            _ => Err(Error::InvalidConfig(format!(
                "unknown sweep axis {s:?} (encoder_ratio, decoder_ratio, decoder_layers, mask_grid)"
            ))),
        }
    }
}

/// Default grid: encoder {0, 0.15, 0.30} x decoder {0.15, 0.30, 0.45, 0.60}.
pub const MASK_GRID_ENCODER: [f64; 3] = [0.0, 0.15, 0.30];
pub const MASK_GRID_DECODER: [f64; 4] = [0.15, 0.30, 0.45, 0.60];
pub const DECODER_DEPTHS: [usize; 5] = [1, 2, 3, 4, 5];

/// One trained configuration of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub encoder_ratio: f64,
    pub decoder_ratio: f64,
    pub decoder_layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub metric: String,
    pub rows: Vec<(SweepCell, f64)>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let cols: &[&str] = match self.axis {
            SweepAxis::EncoderRatio => &["encoder_ratio"],
            SweepAxis::DecoderRatio => &["decoder_ratio"],
            SweepAxis::DecoderLayers => &["decoder_layers"],
            SweepAxis::MaskGrid => &["encoder_ratio", "decoder_ratio"],
        };
        let mut out = format!("{},{}\n", cols.join(","), self.metric);
        for (c, v) in &self.rows {
            let keys: Vec<String> = cols
                .iter()
                .map(|k| match *k {
                    "encoder_ratio" => c.encoder_ratio.to_string(),
                    "decoder_ratio" => c.decoder_ratio.to_string(),
                    _ => c.decoder_layers.to_string(),
                })
                .collect();
            let _ = writeln!(out, "{},{}", keys.join(","), v);
        }
        out
    }
}

/// Cells of a sweep. `values` holds ratios or depths for single axes and
/// is ignored for the grid, which uses `grid` (encoder values, decoder values).
pub fn sweep_cells(axis: SweepAxis, values: &[f64], grid: (&[f64], &[f64]), model: &ModelConfig, config: &PretrainConfig) -> Result<Vec<SweepCell>> {
    let base = SweepCell {
        encoder_ratio: config.encoder_mask_ratio,
        decoder_ratio: config.decoder_mask_ratio,
        decoder_layers: model.n_decoder_layers,
    };
    let cells: Vec<SweepCell> = match axis {
        SweepAxis::EncoderRatio => values.iter().map(|v| SweepCell { encoder_ratio: *v, ..base }).collect(),
        SweepAxis::DecoderRatio => values.iter().map(|v| SweepCell { decoder_ratio: *v, ..base }).collect(),
        SweepAxis::DecoderLayers => values
            .iter()
            .map(|v| {
                if *v < 1.0 || v.fract() != 0.0 {
                    Err(Error::InvalidConfig(format!("decoder depth {v} is not a positive integer")))
                } else {
                    Ok(SweepCell {
                        decoder_layers: *v as usize,
                        ..base
                    })
                }
            })
            .collect::<Result<_>>()?,
        SweepAxis::MaskGrid => grid
            .0
            .iter()
            .flat_map(|e| {
                grid.1.iter().map(move |d| SweepCell {
                    encoder_ratio: *e,
                    decoder_ratio: *d,
                    ..base
                })
            })
            .collect(),
    };
    if cells.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    Ok(cells)
}

/// Trains one model per cell with the shared seed and applies `probe`.
pub fn sweep(
    docs: &[CaseDocument],
    vocab: &Vocabulary,
    model_config: &ModelConfig,
    config: &PretrainConfig,
    axis: SweepAxis,
    cells: &[SweepCell],
    probe: Probe<'_>,
) -> Result<SweepTable> {
    let rows = cells
        .par_iter()
        .map(|cell| {
            let mut mc = model_config.clone();
            mc.n_decoder_layers = cell.decoder_layers;
            let pc = PretrainConfig {
                encoder_mask_ratio: cell.encoder_ratio,
                decoder_mask_ratio: cell.decoder_ratio,
                checkpoint_dir: None,
                ..config.clone()
            };
            let (model, _) = pretrain(docs, vocab, mc, &pc)?;
            Ok((*cell, probe.evaluate(&model, vocab)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        axis,
        metric: probe.name(),
        rows,
    })
}

/// Expected number of fact masks for a fact of `n` tokens.
pub fn expected_fact_masks(config: &PretrainConfig, n: usize) -> usize {
    mask_count(config.encoder_mask_ratio, n)
}

/// Loads a model checkpoint written by [`checkpoint`].
pub fn load_model(path: &Path) -> Result<(StructuredCaseModel, Vocabulary)> {
    let (m, v, _) = StructuredCaseModel::load(path)?;
    Ok((m, v))
}
