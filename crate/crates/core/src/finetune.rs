//! Contrastive fine-tuning of the encoder with BM25-mined hard negatives and
//! in-batch negatives.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CaseDocument;
use crate::error::{Error, Result};
use crate::evalkit::QrelSet;
use crate::model::{retrieval_input, DocumentSide, StructuredCaseModel};
use crate::numerics::{adamw_step, lr_schedule, AdamW, Checkpoint, Graph, OptimizerState, Tensor, Var};
use crate::retrieval::{dot, query_input, InvertedIndex, LexicalModel, Query};
use crate::seed::SeedHasher;
use crate::textproc::{tokenize, TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTriple {
    pub query_id: String,
    pub positive: String,
    pub negatives: Vec<String>,
}

/// Writes `query_id<TAB>positive_id<TAB>neg1,neg2,...` lines.
pub fn save_triples(triples: &[TrainingTriple], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for t in triples {
        writeln!(out, "{}\t{}\t{}", t.query_id, t.positive, t.negatives.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_triples(path: &Path) -> Result<Vec<TrainingTriple>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected `query_id<TAB>positive_id<TAB>negatives`".into(),
            });
        }
        out.push(TrainingTriple {
            query_id: fields[0].to_string(),
            positive: fields[1].to_string(),
            negatives: fields[2].split(',').filter(|s| !s.is_empty()).map(String::from).collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningOutcome {
    pub triples: Vec<TrainingTriple>,
    /// Queries without any judged-relevant document.
    pub skipped_no_positive: usize,
    /// Queries whose candidates were all relevant.
    pub skipped_no_negative: usize,
}

/// Hard negatives: the BM25 top `top_k` minus every judged-relevant
/// document, truncated to `n`. The positive is the highest-graded relevant
/// document (ties by doc id).
pub fn mine_hard_negatives(
    queries: &[Query],
    index: Option<&InvertedIndex>,
    qrels: &QrelSet,
    top_k: usize,
    n: usize,
) -> Result<MiningOutcome> {
    let index = index.ok_or(Error::MissingIndex)?;
    let mined: Vec<Option<Option<TrainingTriple>>> = queries
        .par_iter()
        .map(|q| {
            let relevant = qrels.relevant(&q.id);
            let (positive, _) = *relevant.first()?;
            let list = index.search(&q.id, &tokenize(&q.text), LexicalModel::bm25(), top_k);
            let negatives: Vec<String> = list
                .entries
                .into_iter()
                .map(|(d, _)| d)
                .filter(|d| qrels.grade(&q.id, d) == 0)
                .take(n)
                .collect();
            Some((!negatives.is_empty()).then(|| TrainingTriple {
                query_id: q.id.clone(),
                positive: positive.to_string(),
                negatives,
            }))
        })
        .collect();
    let mut out = MiningOutcome::default();
    for m in mined {
        match m {
            None => out.skipped_no_positive += 1,
            Some(None) => out.skipped_no_negative += 1,
            Some(Some(t)) => out.triples.push(t),
        }
    }
    if out.skipped_no_positive > 0 {
        log::warn!("{} queries without relevant documents skipped", out.skipped_no_positive);
    }
    Ok(out)
}

/// Column of each query's own positive when every query contributes
/// `[positive, n negatives]` in order.
pub fn standard_positive_cols(b: usize, n: usize) -> Vec<usize> {
    (0..b).map(|i| i * (n + 1)).collect()
}

/// Non-positive candidates each query is scored against: its own `n` hard
/// negatives plus `(b - 1)(n + 1)` in-batch candidates.
pub fn negatives_per_query(b: usize, n: usize) -> usize {
    b * (n + 1) - 1
}

/// Mean over queries of `-log softmax(row / temperature)[positive]`.
/// `scores` is `B x C`; row `i`'s positive sits at `positive_cols[i]`.
pub fn contrastive_loss(g: &mut Graph, scores: Var, positive_cols: &[usize], temperature: f64) -> Result<Var> {
    let t = g.value(scores);
    if t.rows() != positive_cols.len() {
        return Err(Error::ShapeMismatch {
            op: "contrastive_loss",
            left: t.shape().to_vec(),
            right: vec![positive_cols.len()],
        });
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig(format!("temperature {temperature} must be positive")));
    }
    let scaled = if temperature == 1.0 { scores } else { g.scale(scores, 1.0 / temperature) };
    g.cross_entropy(scaled, positive_cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    /// Queries per batch (B).
    pub queries_per_batch: usize,
    /// Hard negatives per query (N).
    pub negatives: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub seed: u64,
    pub temperature: f64,
    pub document_side: DocumentSide,
    pub optimizer: AdamW,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            queries_per_batch: 4,
            negatives: 15,
            epochs: 5,
            base_lr: 1e-4,
            warmup_ratio: 0.1,
            seed: 42,
            temperature: 1.0,
            document_side: DocumentSide::Full,
            optimizer: AdamW::default(),
            checkpoint_dir: None,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queries_per_batch == 0 {
            return Err(Error::InvalidConfig("queries_per_batch must be at least 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return Err(Error::InvalidConfig("warmup_ratio outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneLog {
    pub records: Vec<FinetuneRecord>,
    /// Documents appearing more than once within a batch, summed over batches.
    pub collisions: usize,
    pub epoch_checkpoints: Vec<PathBuf>,
}

impl FinetuneLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,lr\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.step, r.loss, r.lr));
        }
        out
    }
}

/// Token ids of queries and documents needed by the triples.
struct Inputs<'a> {
    queries: HashMap<&'a str, Vec<TokenId>>,
    docs: HashMap<&'a str, Vec<TokenId>>,
}

impl<'a> Inputs<'a> {
    fn new(
        model: &StructuredCaseModel,
        vocab: &Vocabulary,
        docs: &'a [CaseDocument],
        queries: &'a [Query],
        side: DocumentSide,
    ) -> Self {
        let max_len = model.config.max_len;
        Inputs {
            queries: queries.iter().map(|q| (q.id.as_str(), query_input(&q.text, vocab, max_len))).collect(),
            docs: docs.iter().map(|d| (d.id.as_str(), retrieval_input(d, vocab, side, max_len))).collect(),
        }
    }

    fn query(&self, id: &str) -> Result<&[TokenId]> {
        self.queries.get(id).map(Vec::as_slice).ok_or_else(|| Error::UnknownDoc(format!("query {id}")))
    }

    fn doc(&self, id: &str) -> Result<&[TokenId]> {
        self.docs.get(id).map(Vec::as_slice).ok_or_else(|| Error::UnknownDoc(id.to_string()))
    }
}

/// Encoder-only copy of `model`.
pub fn encoder_only(model: &StructuredCaseModel) -> StructuredCaseModel {
    let mut m = model.clone();
    m.drop_decoders();
    m
}

fn embed_with_grad(model: &StructuredCaseModel, ids: &[TokenId], upstream: &[f64]) -> Result<Vec<Option<Tensor>>> {
    let mut s = model.session();
    let states = model.encode(&mut s, ids, &mut None)?;
    let h = s.graph.slice_rows(states, 0, 1)?;
    let u = s.graph.constant(Tensor::row(upstream.to_vec()));
    let p = s.graph.mul(h, u)?;
    let loss = s.graph.sum(p);
    s.param_grads(loss)
}

/// Loss and exact parameter gradients of one batch. Embeddings are computed
/// per sequence in parallel, the loss gradient with respect to each
/// embedding is taken on a small score graph, and a second per-sequence pass
/// pulls those gradients back into the encoder.
pub fn batch_gradients(
    model: &StructuredCaseModel,
    query_ids: &[&[TokenId]],
    candidate_ids: &[&[TokenId]],
    positive_cols: &[usize],
    temperature: f64,
) -> Result<(f64, Vec<Option<Tensor>>)> {
    let all: Vec<&[TokenId]> = query_ids.iter().chain(candidate_ids).copied().collect();
    let emb = model.embed_many(&all)?;
    let (qe, de) = emb.split_at(query_ids.len());
    let mut g = Graph::new();
    let q = g.param(Tensor::from_rows(qe)?);
    let d = g.param(Tensor::from_rows(de)?);
    let scores = g.matmul_t(q, d)?;
    let loss = contrastive_loss(&mut g, scores, positive_cols, temperature)?;
    let value = g.scalar(loss);
    let mut grads = g.backward(loss)?;
    let gq = grads.take(q).unwrap_or_else(|| Tensor::zeros(&[qe.len(), model.config.d_model]));
    let gd = grads.take(d).unwrap_or_else(|| Tensor::zeros(&[de.len(), model.config.d_model]));
    let upstream: Vec<&[f64]> = (0..qe.len())
        .map(|i| gq.row_slice(i))
        .chain((0..de.len()).map(|i| gd.row_slice(i)))
        .collect();
    let per_seq: Vec<Vec<Option<Tensor>>> = all
        .par_iter()
        .zip(upstream.par_iter())
        .map(|(ids, u)| embed_with_grad(model, ids, u))
        .collect::<Result<_>>()?;
    let mut total: Vec<Option<Tensor>> = vec![None; model.params.len()];
    for grads in per_seq {
        for (acc, g) in total.iter_mut().zip(grads) {
            if let Some(g) = g {
                match acc {
                    None => *acc = Some(g),
                    Some(a) => {
                        for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                            *x += y;
                        }
                    }
                }
            }
        }
    }
    Ok((value, total))
}

/// Fine-tunes the encoder of `model` on `triples`. Decoders are dropped
/// first, so the result is encoder-only even when `epochs == 0`.
pub fn finetune(
    model: &StructuredCaseModel,
    vocab: &Vocabulary,
    docs: &[CaseDocument],
    queries: &[Query],
    triples: &[TrainingTriple],
    config: &FinetuneConfig,
) -> Result<(StructuredCaseModel, FinetuneLog)> {
    config.validate()?;
    if triples.is_empty() {
        return Err(Error::EmptyInput);
    }
    for t in triples {
        if t.negatives.contains(&t.positive) {
            return Err(Error::InvalidConfig(format!("query {}: positive {} listed as a negative", t.query_id, t.positive)));
        }
    }
    let mut model = encoder_only(model);
    let inputs = Inputs::new(&model, vocab, docs, queries, config.document_side);
    let batches_per_epoch = triples.len().div_ceil(config.queries_per_batch);
    let total = batches_per_epoch * config.epochs;
    let mut state = OptimizerState::new(&model.params);
    let mut log = FinetuneLog::default();
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..triples.len()).collect();
        order.shuffle(&mut SeedHasher::new(config.seed).str("finetune-order").u64(epoch as u64).rng());
        for chunk in order.chunks(config.queries_per_batch) {
            let mut qids = Vec::with_capacity(chunk.len());
            let mut cands = Vec::new();
            let mut cand_names: Vec<&str> = Vec::new();
            let mut positive_cols = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let t = &triples[i];
                qids.push(inputs.query(&t.query_id)?);
                positive_cols.push(cands.len());
                cands.push(inputs.doc(&t.positive)?);
                cand_names.push(&t.positive);
                for n in t.negatives.iter().take(config.negatives) {
                    cands.push(inputs.doc(n)?);
                    cand_names.push(n);
                }
            }
            let mut seen = std::collections::HashSet::new();
            log.collisions += cand_names.iter().filter(|n| !seen.insert(**n)).count();
            let (loss, grads) = batch_gradients(&model, &qids, &cands, &positive_cols, config.temperature)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { step });
            }
            let lr = lr_schedule(step, total, config.warmup_ratio, config.base_lr);
            adamw_step(&mut model.params, &grads, &mut state, &config.optimizer, lr);
            log.records.push(FinetuneRecord { step, loss, lr });
            step += 1;
        }
        if let Some(dir) = &config.checkpoint_dir {
            let path = dir.join(format!("epoch{}.ckpt", epoch + 1));
            checkpoint(&model, vocab, config)?.save(&path)?;
            log.epoch_checkpoints.push(path);
        }
    }
    Ok((model, log))
}

pub fn checkpoint(model: &StructuredCaseModel, vocab: &Vocabulary, config: &FinetuneConfig) -> Result<Checkpoint> {
    let mut extra = serde_json::Map::new();
    let config = FinetuneConfig { checkpoint_dir: None, ..config.clone() };
    extra.insert("finetune".into(), serde_json::to_value(&config)?);
    model.to_checkpoint(vocab, extra)
}

/// Mean over triples of `s(q, d+) - max s(q, d-)`.
pub fn mean_margin(
    model: &StructuredCaseModel,
    vocab: &Vocabulary,
    docs: &[CaseDocument],
    queries: &[Query],
    triples: &[TrainingTriple],
    side: DocumentSide,
) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let inputs = Inputs::new(model, vocab, docs, queries, side);
    let margins: Vec<f64> = triples
        .par_iter()
        .map(|t| {
            let q = model.embed(inputs.query(&t.query_id)?)?;
            let pos = dot(&q, &model.embed(inputs.doc(&t.positive)?)?);
            let mut best = f64::NEG_INFINITY;
            for n in &t.negatives {
                best = best.max(dot(&q, &model.embed(inputs.doc(n)?)?));
            }
            Ok(pos - best)
        })
        .collect::<Result<_>>()?;
    Ok(margins.iter().sum::<f64>() / margins.len() as f64)
}
