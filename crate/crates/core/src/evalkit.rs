//! Graded-relevance ranking metrics, the paired randomization test and the
//! nearest-neighbour purity probe.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::RankedList;
use crate::seed::rng_from;

/// (query, document) -> non-negative grade. Unlisted pairs are grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelSet {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelSet {
    pub fn insert(&mut self, query: &str, doc: &str, grade: u32) {
        self.judgments
            .entry(query.to_string())
            .or_default()
            .insert(doc.to_string(), grade);
    }

    pub fn grade(&self, query: &str, doc: &str) -> u32 {
        self.judgments
            .get(query)
            .and_then(|j| j.get(doc))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn num_relevant(&self, query: &str) -> usize {
        self.for_query(query)
            .map_or(0, |j| j.values().filter(|g| **g >= 1).count())
    }

    /// Relevant documents of a query (grade >= 1), highest grade first.
    pub fn relevant(&self, query: &str) -> Vec<(&str, u32)> {
        let mut rel: Vec<(&str, u32)> = self
            .for_query(query)
            .into_iter()
            .flatten()
            .filter(|(_, g)| **g >= 1)
            .map(|(d, g)| (d.as_str(), *g))
            .collect();
        rel.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        rel
    }

    /// Tab-separated `query_id doc_id grade`; TREC four-column lines
    /// (`query_id iter doc_id grade`) are accepted too.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut q = QrelSet::default();
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |m: &str| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: m.to_string(),
            };
            let (query, doc, grade) = match fields.as_slice() {
                [] => continue,
                [q, d, g] | [q, _, d, g] => (*q, *d, *g),
                _ => return Err(parse_err("expected `query_id doc_id grade`")),
            };
            let grade: u32 = grade.parse().map_err(|_| parse_err("grade must be a non-negative integer"))?;
            q.insert(query, doc, grade);
        }
        Ok(q)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for (query, docs) in &self.judgments {
            for (doc, grade) in docs {
                writeln!(out, "{query}\t{doc}\t{grade}")?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// `sum_{i=1..k} (2^g_i - 1) / log2(i + 1)`.
pub fn dcg(grades: &[u32], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| (2f64.powi(*g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

fn ranked_grades<S: AsRef<str>>(ranked: &[S], judgments: Option<&BTreeMap<String, u32>>) -> Vec<u32> {
    ranked
        .iter()
        .map(|d| judgments.and_then(|j| j.get(d.as_ref())).copied().unwrap_or(0))
        .collect()
}

pub fn ndcg_at_k<S: AsRef<str>>(ranked: &[S], judgments: Option<&BTreeMap<String, u32>>, k: usize) -> f64 {
    let mut ideal: Vec<u32> = judgments.into_iter().flat_map(|j| j.values().copied()).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        return 0.0;
    }
    dcg(&ranked_grades(ranked, judgments), k) / idcg
}

pub fn mrr_at_k<S: AsRef<str>>(ranked: &[S], judgments: Option<&BTreeMap<String, u32>>, k: usize) -> f64 {
    ranked_grades(ranked, judgments)
        .iter()
        .take(k)
        .position(|g| *g >= 1)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// (precision, recall, F1) at cutoff `k`.
pub fn prf_at_k<S: AsRef<str>>(ranked: &[S], judgments: Option<&BTreeMap<String, u32>>, k: usize) -> (f64, f64, f64) {
    let hits = ranked_grades(ranked, judgments)
        .iter()
        .take(k)
        .filter(|g| **g >= 1)
        .count() as f64;
    let total = judgments.map_or(0, |j| j.values().filter(|g| **g >= 1).count()) as f64;
    let p = hits / k as f64;
    let r = if total > 0.0 { hits / total } else { 0.0 };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], judgments: Option<&BTreeMap<String, u32>>, k: usize) -> f64 {
    prf_at_k(ranked, judgments, k).1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Ndcg(usize),
    Mrr(usize),
    Precision(usize),
    Recall(usize),
    F1(usize),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Mrr(k) => write!(f, "mrr@{k}"),
            Metric::Precision(k) => write!(f, "p@{k}"),
            Metric::Recall(k) => write!(f, "r@{k}"),
            Metric::F1(k) => write!(f, "f1@{k}"),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown metric {s:?} (expected e.g. ndcg@10, mrr@10, p@5, r@100, f1@5)"));
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        Ok(match name.to_ascii_lowercase().as_str() {
            "ndcg" => Metric::Ndcg(k),
            "mrr" => Metric::Mrr(k),
            "p" | "precision" => Metric::Precision(k),
            "r" | "recall" => Metric::Recall(k),
            "f1" => Metric::F1(k),
            _ => return Err(bad()),
        })
    }
}

impl Metric {
    pub fn compute<S: AsRef<str>>(self, ranked: &[S], judgments: Option<&BTreeMap<String, u32>>) -> f64 {
        match self {
            Metric::Ndcg(k) => ndcg_at_k(ranked, judgments, k),
            Metric::Mrr(k) => mrr_at_k(ranked, judgments, k),
            Metric::Precision(k) => prf_at_k(ranked, judgments, k).0,
            Metric::Recall(k) => prf_at_k(ranked, judgments, k).1,
            Metric::F1(k) => prf_at_k(ranked, judgments, k).2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<Metric>,
    /// Per-query values, in `metrics` order.
    pub per_query: BTreeMap<String, Vec<f64>>,
    pub means: Vec<f64>,
    pub num_queries: usize,
    /// Queries in the run without any relevant judgment; left out of the means.
    pub no_relevant: usize,
    /// Judged queries absent from the run.
    pub missing: usize,
}

impl MetricReport {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.metrics.iter().position(|m| *m == metric).map(|i| self.means[i])
    }

    pub fn per_query_values(&self, metric: Metric) -> Vec<f64> {
        let Some(i) = self.metrics.iter().position(|m| *m == metric) else {
            return Vec::new();
        };
        self.per_query.values().map(|v| v[i]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_id");
        for m in &self.metrics {
            out.push_str(&format!(",{m}"));
        }
        out.push('\n');
        for (q, vals) in &self.per_query {
            out.push_str(q);
            for v in vals {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out.push_str("all");
        for v in &self.means {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
        out
    }
}

/// Macro-averaged metrics of a run.
pub fn evaluate(run: &[RankedList], qrels: &QrelSet, metrics: &[Metric]) -> MetricReport {
    let mut per_query = BTreeMap::new();
    let mut no_relevant = 0;
    for list in run {
        if qrels.num_relevant(&list.query_id) == 0 {
            no_relevant += 1;
            continue;
        }
        let ids = list.doc_ids();
        let judgments = qrels.for_query(&list.query_id);
        per_query.insert(
            list.query_id.clone(),
            metrics.iter().map(|m| m.compute(&ids, judgments)).collect::<Vec<_>>(),
        );
    }
    let n = per_query.len();
    let means = (0..metrics.len())
        .map(|i| {
            if n == 0 {
                0.0
            } else {
                per_query.values().map(|v: &Vec<f64>| v[i]).sum::<f64>() / n as f64
            }
        })
        .collect();
    let in_run: std::collections::BTreeSet<&str> = run.iter().map(|l| l.query_id.as_str()).collect();
    let missing = qrels.queries().filter(|q| !in_run.contains(q)).count();
    MetricReport {
        metrics: metrics.to_vec(),
        per_query,
        means,
        num_queries: n,
        no_relevant,
        missing,
    }
}

/// Queries up to this count are tested by exhaustive sign enumeration.
pub const EXACT_ENUMERATION_MAX: usize = 20;

/// Two-sided paired sign-flip randomization test on per-query differences.
///
/// Exact over all `2^n` sign assignments when `n <= 20`; otherwise Monte
/// Carlo with `iterations` draws and `(count + 1) / (iterations + 1)`.
pub fn fisher_randomization(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>().abs();
    let tol = 1e-12 * observed.max(1e-300);
    let at_least = |s: f64| s.abs() >= observed - tol;
    if n <= EXACT_ENUMERATION_MAX {
        let total = 1u64 << n;
        let count = (0..total)
            .into_par_iter()
            .filter(|mask| {
                let s: f64 = diffs
                    .iter()
                    .enumerate()
                    .map(|(i, d)| if mask >> i & 1 == 1 { -d } else { *d })
                    .sum();
                at_least(s)
            })
            .count();
        return Ok(count as f64 / total as f64);
    }
    let mut rng = rng_from(seed);
    let mut count = 0usize;
    for _ in 0..iterations {
        let s: f64 = diffs
            .iter()
            .map(|d| if rng.gen::<bool>() { -d } else { *d })
            .sum();
        if at_least(s) {
            count += 1;
        }
    }
    Ok((count + 1) as f64 / (iterations + 1) as f64)
}

/// Indices of the `k` nearest neighbours of `i` by dot product (excluding
/// `i`), ties broken by lower index.
pub fn nearest_neighbours(embeddings: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let q = &embeddings[i];
    let mut scored: Vec<(f64, usize)> = embeddings
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, e)| (crate::retrieval::dot(q, e), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|(_, j)| j).collect()
}

/// Mean fraction of each point's `k` nearest neighbours sharing its label.
pub fn knn_purity<L: PartialEq + Sync>(embeddings: &[Vec<f64>], labels: &[L], k: usize) -> Result<f64> {
    if embeddings.len() != labels.len() {
        return Err(Error::LengthMismatch(embeddings.len(), labels.len()));
    }
    if k == 0 || embeddings.len() < k + 1 {
        return Err(Error::TooFewPoints {
            needed: k.max(1) + 1,
            got: embeddings.len(),
        });
    }
    let per_point: Vec<f64> = (0..embeddings.len())
        .into_par_iter()
        .map(|i| {
            let same = nearest_neighbours(embeddings, i, k)
                .into_iter()
                .filter(|j| labels[*j] == labels[i])
                .count();
            same as f64 / k as f64
        })
        .collect();
    Ok(per_point.iter().sum::<f64>() / per_point.len() as f64)
}
