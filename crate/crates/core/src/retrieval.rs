//! Lexical (BM25, Dirichlet query likelihood) and exhaustive dense retrieval.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CaseDocument;
use crate::error::{Error, Result};
use crate::model::{retrieval_input, DocumentSide, StructuredCaseModel};
use crate::numerics::{Checkpoint, Tensor};
use crate::textproc::{tokenize, TokenId, Vocabulary};

pub const DEFAULT_K1: f64 = 0.9;
pub const DEFAULT_B: f64 = 0.4;
pub const DEFAULT_MU: f64 = 1000.0;

/// Sequential dot product; the fixed summation order keeps scores bitwise
/// reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ranking order: score descending, then doc id ascending.
fn rank_cmp(a: &(String, f64), b: &(String, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Keeps the top `k` entries under the ranking order.
pub fn top_k(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    if k < scored.len() {
        scored.select_nth_unstable_by(k, rank_cmp);
        scored.truncate(k);
    }
    scored.sort_by(rank_cmp);
    scored
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    /// Sorts `entries` into ranking order.
    pub fn new(query_id: impl Into<String>, mut entries: Vec<(String, f64)>) -> Self {
        entries.sort_by(rank_cmp);
        RankedList {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|(d, _)| d.as_str()).collect()
    }

    pub fn rank_of(&self, doc_id: &str) -> Option<usize> {
        self.entries.iter().position(|(d, _)| d == doc_id).map(|i| i + 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Writes `query_id Q0 doc_id rank score run_tag` lines.
pub fn write_run(lists: &[RankedList], tag: &str, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for list in lists {
        for (rank, (doc, score)) in list.entries.iter().enumerate() {
            writeln!(out, "{} Q0 {} {} {} {}", list.query_id, doc, rank + 1, score, tag)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a TREC run file; lists keep first-appearance query order.
pub fn read_run(path: &Path) -> Result<Vec<RankedList>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lists: IndexMap<String, Vec<(String, f64)>> = IndexMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let parse_err = |m: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: m.to_string(),
        };
        if fields.len() != 6 {
            return Err(parse_err("expected `query_id Q0 doc_id rank score run_tag`"));
        }
        let score: f64 = fields[4].parse().map_err(|_| parse_err("score is not a number"))?;
        lists
            .entry(fields[0].to_string())
            .or_default()
            .push((fields[2].to_string(), score));
    }
    Ok(lists
        .into_iter()
        .map(|(q, entries)| RankedList::new(q, entries))
        .collect())
}

/// A query record: `{"id": ..., "text": ...}` per JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

pub fn load_queries(path: &Path) -> Result<Vec<Query>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn save_queries(queries: &[Query], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for q in queries {
        serde_json::to_writer(&mut out, q)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LexicalModel {
    Bm25 { k1: f64, b: f64 },
    QueryLikelihood { mu: f64 },
}

impl LexicalModel {
    pub fn bm25() -> Self {
        LexicalModel::Bm25 {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }

    pub fn ql() -> Self {
        LexicalModel::QueryLikelihood { mu: DEFAULT_MU }
    }
}

/// Term-level inverted index over tokenized documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    /// Document ids in ascending order; postings refer to positions here.
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    /// term -> (doc position, tf), sorted by doc position.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    total_tokens: u64,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
}

impl InvertedIndex {
    /// Builds from `(doc_id, tokens)` pairs. Duplicate ids are rejected.
    pub fn build<I, S>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<S>)>,
        S: AsRef<str>,
    {
        let mut docs: Vec<(String, Vec<S>)> = docs.into_iter().collect();
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        docs.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = docs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidConfig(format!("duplicate document id {}", w[0].0)));
        }
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lens = Vec::with_capacity(docs.len());
        let mut total_tokens = 0u64;
        for (pos, (_, tokens)) in docs.iter().enumerate() {
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t.as_ref()).or_default() += 1;
            }
            for (t, c) in tf {
                postings.entry(t.to_string()).or_default().push((pos as u32, c));
            }
            doc_lens.push(tokens.len() as u32);
            total_tokens += tokens.len() as u64;
        }
        let mut index = InvertedIndex {
            doc_ids: docs.into_iter().map(|(id, _)| id).collect(),
            doc_lens,
            postings,
            total_tokens,
            lookup: HashMap::new(),
        };
        index.rebuild_lookup();
        Ok(index)
    }

    fn rebuild_lookup(&mut self) {
        self.lookup = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i as u32))
            .collect();
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn avgdl(&self) -> f64 {
        self.total_tokens as f64 / self.doc_ids.len() as f64
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn doc_len(&self, doc_id: &str) -> Result<u32> {
        Ok(self.doc_lens[self.position(doc_id)? as usize])
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn cf(&self, term: &str) -> u64 {
        self.postings(term).iter().map(|(_, tf)| *tf as u64).sum()
    }

    pub fn tf(&self, term: &str, doc_id: &str) -> Result<u32> {
        let pos = self.position(doc_id)?;
        Ok(self.tf_at(term, pos))
    }

    fn tf_at(&self, term: &str, pos: u32) -> u32 {
        let p = self.postings(term);
        p.binary_search_by_key(&pos, |(d, _)| *d).map_or(0, |i| p[i].1)
    }

    fn position(&self, doc_id: &str) -> Result<u32> {
        self.lookup
            .get(doc_id)
            .copied()
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`.
    pub fn bm25_idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn bm25_term(&self, idf: f64, tf: u32, dl: u32, k1: f64, b: f64) -> f64 {
        let tf = tf as f64;
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl as f64 / self.avgdl()))
    }

    /// Okapi BM25. Repeated query tokens contribute once per occurrence.
    pub fn bm25_score<S: AsRef<str>>(&self, query: &[S], doc_id: &str, k1: f64, b: f64) -> Result<f64> {
        let pos = self.position(doc_id)?;
        let dl = self.doc_lens[pos as usize];
        let mut score = 0.0;
        for t in query {
            let tf = self.tf_at(t.as_ref(), pos);
            if tf > 0 {
                score += self.bm25_term(self.bm25_idf(t.as_ref()), tf, dl, k1, b);
            }
        }
        Ok(score)
    }

    /// Dirichlet-smoothed query likelihood plus the number of query tokens
    /// skipped because they never occur in the collection.
    pub fn ql_score_detailed<S: AsRef<str>>(&self, query: &[S], doc_id: &str, mu: f64) -> Result<(f64, usize)> {
        let pos = self.position(doc_id)?;
        Ok(self.ql_at(query, pos, mu))
    }

    pub fn ql_score<S: AsRef<str>>(&self, query: &[S], doc_id: &str, mu: f64) -> Result<f64> {
        Ok(self.ql_score_detailed(query, doc_id, mu)?.0)
    }

    fn ql_at<S: AsRef<str>>(&self, query: &[S], pos: u32, mu: f64) -> (f64, usize) {
        let dl = self.doc_lens[pos as usize] as f64;
        let total = self.total_tokens as f64;
        let mut score = 0.0;
        let mut skipped = 0;
        for t in query {
            let cf = self.cf(t.as_ref());
            if cf == 0 {
                skipped += 1;
                continue;
            }
            let p_c = cf as f64 / total;
            let tf = self.tf_at(t.as_ref(), pos) as f64;
            score += ((tf + mu * p_c) / (dl + mu)).ln();
        }
        (score, skipped)
    }

    /// Top-`k` documents. BM25 scores documents containing at least one query
    /// term; QL scores every document.
    pub fn search<S: AsRef<str> + Sync>(&self, query_id: &str, query: &[S], model: LexicalModel, k: usize) -> RankedList {
        let scored: Vec<(String, f64)> = match model {
            LexicalModel::Bm25 { k1, b } => {
                let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
                for t in query {
                    let t = t.as_ref();
                    let idf = self.bm25_idf(t);
                    for (pos, tf) in self.postings(t) {
                        let s = self.bm25_term(idf, *tf, self.doc_lens[*pos as usize], k1, b);
                        *acc.entry(*pos).or_insert(0.0) += s;
                    }
                }
                acc.into_iter()
                    .map(|(pos, s)| (self.doc_ids[pos as usize].clone(), s))
                    .collect()
            }
            LexicalModel::QueryLikelihood { mu } => (0..self.doc_ids.len() as u32)
                .into_par_iter()
                .map(|pos| (self.doc_ids[pos as usize].clone(), self.ql_at(query, pos, mu).0))
                .collect(),
        };
        RankedList {
            query_id: query_id.to_string(),
            entries: top_k(scored, k),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut index: InvertedIndex = serde_json::from_slice(&fs::read(path)?)?;
        index.rebuild_lookup();
        Ok(index)
    }
}

/// Dense document vectors tagged with the fingerprint of the checkpoint
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    pub doc_ids: Vec<String>,
    /// `num_docs x dim`.
    pub matrix: Tensor,
    pub source_fingerprint: String,
}

impl EmbeddingIndex {
    pub fn new(doc_ids: Vec<String>, rows: &[Vec<f64>], source_fingerprint: impl Into<String>) -> Result<Self> {
        if doc_ids.len() != rows.len() {
            return Err(Error::LengthMismatch(doc_ids.len(), rows.len()));
        }
        if doc_ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let unique: std::collections::BTreeSet<&String> = doc_ids.iter().collect();
        if unique.len() != doc_ids.len() {
            return Err(Error::InvalidConfig("duplicate document id in embedding index".into()));
        }
        let matrix = Tensor::from_rows(rows)?;
        if !matrix.is_finite() {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok(EmbeddingIndex {
            doc_ids,
            matrix,
            source_fingerprint: source_fingerprint.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        self.matrix.row_slice(i)
    }

    pub fn scores(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.dim() {
            return Err(Error::DimMismatch {
                query: query.len(),
                index: self.dim(),
            });
        }
        Ok((0..self.len())
            .into_par_iter()
            .map(|i| dot(query, self.vector(i)))
            .collect())
    }

    /// Exhaustive dot-product search.
    pub fn search(&self, query_id: &str, query: &[f64], k: usize) -> Result<RankedList> {
        let scored = self
            .scores(query)?
            .into_iter()
            .enumerate()
            .map(|(i, s)| (self.doc_ids[i].clone(), s))
            .collect();
        Ok(RankedList {
            query_id: query_id.to_string(),
            entries: top_k(scored, k),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let header = serde_json::json!({
            "kind": "embedding_index",
            "doc_ids": self.doc_ids,
            "source_fingerprint": self.source_fingerprint,
        });
        let mut tensors = IndexMap::new();
        tensors.insert("embeddings".to_string(), self.matrix.clone());
        Checkpoint::new(header, tensors)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(format!("not an embedding index: {m}"));
        if ckpt.header.get("kind").and_then(|k| k.as_str()) != Some("embedding_index") {
            return Err(bad("missing kind"));
        }
        let doc_ids: Vec<String> = serde_json::from_value(ckpt.header.get("doc_ids").cloned().ok_or_else(|| bad("missing doc_ids"))?)?;
        let fp = ckpt
            .header
            .get("source_fingerprint")
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string();
        let matrix = ckpt.tensors.get("embeddings").ok_or_else(|| bad("missing embeddings"))?.clone();
        if matrix.rows() != doc_ids.len() {
            return Err(bad("row count does not match doc ids"));
        }
        Ok(EmbeddingIndex {
            doc_ids,
            matrix,
            source_fingerprint: fp,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Free-function form of [`EmbeddingIndex::search`].
pub fn dense_search(query_id: &str, query: &[f64], index: &EmbeddingIndex, k: usize) -> Result<RankedList> {
    index.search(query_id, query, k)
}

/// Free-function form of [`InvertedIndex::search`].
pub fn lexical_search<S: AsRef<str> + Sync>(query_id: &str, query: &[S], index: &InvertedIndex, model: LexicalModel, k: usize) -> RankedList {
    index.search(query_id, query, model, k)
}

/// Embeds every document's retrieval input with `model`.
pub fn build_dense_index(
    model: &StructuredCaseModel,
    vocab: &Vocabulary,
    docs: &[CaseDocument],
    side: DocumentSide,
    source_fingerprint: &str,
) -> Result<EmbeddingIndex> {
    let inputs: Vec<Vec<TokenId>> = docs
        .iter()
        .map(|d| retrieval_input(d, vocab, side, model.config.max_len))
        .collect();
    let rows = model.embed_many(&inputs)?;
    EmbeddingIndex::new(docs.iter().map(|d| d.id.clone()).collect(), &rows, source_fingerprint)
}

/// Query token ids, truncated to fit `[CLS]`.
pub fn query_input(text: &str, vocab: &Vocabulary, max_len: usize) -> Vec<TokenId> {
    let mut ids = vocab.encode(text);
    ids.truncate(max_len.saturating_sub(1));
    ids
}

/// Dense top-`k` lists for `queries`, in query order.
pub fn dense_run(model: &StructuredCaseModel, vocab: &Vocabulary, index: &EmbeddingIndex, queries: &[Query], k: usize) -> Result<Vec<RankedList>> {
    let inputs: Vec<Vec<TokenId>> = queries
        .iter()
        .map(|q| query_input(&q.text, vocab, model.config.max_len))
        .collect();
    let vectors = model.embed_many(&inputs)?;
    queries
        .iter()
        .zip(&vectors)
        .map(|(q, v)| index.search(&q.id, v, k))
        .collect()
}

/// BM25 or QL top-`k` lists for `queries`, in query order.
pub fn lexical_run(index: &InvertedIndex, queries: &[Query], model: LexicalModel, k: usize) -> Vec<RankedList> {
    queries
        .par_iter()
        .map(|q| index.search(&q.id, &tokenize(&q.text), model, k))
        .collect()
}

/// Inverted index over the chosen sections of `docs`.
pub fn build_lexical_index(docs: &[CaseDocument], side: DocumentSide) -> Result<InvertedIndex> {
    InvertedIndex::build(docs.iter().map(|d| {
        let text = match side {
            DocumentSide::Fact => d.fact.clone(),
            DocumentSide::Full => format!("{} {} {}", d.fact, d.reasoning, d.decision),
        };
        (d.id.clone(), tokenize(&text))
    }))
}
