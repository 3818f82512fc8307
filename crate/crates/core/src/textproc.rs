//! Tokenization, vocabulary, corpus statistics and TF-IDF.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const CLS: TokenId = 2;
pub const SEP: TokenId = 3;
pub const MASK: TokenId = 4;
pub const NUM_RESERVED: usize = 5;
pub const RESERVED_TOKENS: [&str; NUM_RESERVED] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Default per-section truncation length.
pub const DEFAULT_MAX_LEN: usize = 256;

pub fn is_reserved(id: TokenId) -> bool {
    (id as usize) < NUM_RESERVED
}

/// Lowercased maximal alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds from non-reserved tokens in id order (first gets id 5).
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().map(Into::into));
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocabulary { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn non_reserved(&self) -> &[String] {
        &self.tokens[NUM_RESERVED..]
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.encode_tokens(&tokenize(text))
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter().map(|id| self.token(*id).unwrap_or("[UNK]")).collect()
    }

    /// One non-reserved token per line; line `i` holds id `i + 5`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for t in self.non_reserved() {
            writeln!(out, "{t}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string))
    }
}

/// Builds a vocabulary ordered by (frequency desc, token asc).
///
/// `max_size` bounds the total size including the five reserved entries.
/// Tokens seen fewer than `min_freq` times are left out and encode to `[UNK]`.
pub fn build_vocab<I, S>(texts: I, min_freq: usize, max_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if max_size < NUM_RESERVED {
        return Err(Error::InvalidConfig(format!(
            "max_size {max_size} cannot hold the {NUM_RESERVED} reserved tokens"
        )));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut seen_any = false;
    for text in texts {
        seen_any = true;
        for t in tokenize(text.as_ref()) {
            *counts.entry(t).or_default() += 1;
        }
    }
    if !seen_any || counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq.max(1) && !RESERVED_TOKENS.contains(&t.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - NUM_RESERVED);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t))
}

/// Document frequencies and per-document term frequencies over token ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_docs: usize,
    pub df: BTreeMap<TokenId, u32>,
    pub doc_tf: Vec<BTreeMap<TokenId, u32>>,
    pub doc_lens: Vec<usize>,
    pub avgdl: f64,
}

impl CorpusStats {
    pub fn from_docs<D: AsRef<[TokenId]>>(docs: &[D]) -> Self {
        let mut df = BTreeMap::new();
        let mut doc_tf = Vec::with_capacity(docs.len());
        let mut doc_lens = Vec::with_capacity(docs.len());
        for doc in docs {
            let tf = term_frequencies(doc.as_ref());
            for t in tf.keys() {
                *df.entry(*t).or_insert(0) += 1;
            }
            doc_tf.push(tf);
            doc_lens.push(doc.as_ref().len());
        }
        let total: usize = doc_lens.iter().sum();
        let avgdl = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        CorpusStats {
            num_docs: docs.len(),
            df,
            doc_tf,
            doc_lens,
            avgdl,
        }
    }

    pub fn df(&self, token: TokenId) -> u32 {
        self.df.get(&token).copied().unwrap_or(0)
    }

    /// Add-one smoothed inverse document frequency, `ln((N+1)/(df+1))`.
    pub fn idf(&self, token: TokenId) -> f64 {
        ((self.num_docs as f64 + 1.0) / (self.df(token) as f64 + 1.0)).ln()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

pub fn term_frequencies(doc: &[TokenId]) -> BTreeMap<TokenId, u32> {
    let mut tf = BTreeMap::new();
    for t in doc {
        *tf.entry(*t).or_insert(0) += 1;
    }
    tf
}

/// `tf(token, doc) * ln((N+1)/(df(token)+1))`; unseen tokens count as df = 0.
pub fn tf_idf(token: TokenId, doc: &[TokenId], stats: &CorpusStats) -> f64 {
    let tf = doc.iter().filter(|t| **t == token).count();
    if tf == 0 {
        return 0.0;
    }
    tf as f64 * stats.idf(token)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("The court held that"), vec!["the", "court", "held", "that"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Law 17, sentenced: 6-months."), vec!["law", "17", "sentenced", "6", "months"]);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(s in "\\PC{0,60}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }

        #[test]
        fn tf_idf_monotone(tf in 1usize..10, df in 1u32..20, extra_tf in 0usize..5, extra_df in 0u32..5) {
            let n = 40usize;
            let mut stats = CorpusStats::from_docs::<Vec<TokenId>>(&[]);
            stats.num_docs = n;
            stats.df.insert(7, df);
            let doc = vec![7; tf];
            let more = vec![7; tf + extra_tf];
            prop_assert!(tf_idf(7, &more, &stats) >= tf_idf(7, &doc, &stats));
            let base = tf_idf(7, &doc, &stats);
            stats.df.insert(7, df + extra_df);
            prop_assert!(tf_idf(7, &doc, &stats) <= base);
            prop_assert!(base >= 0.0);
        }
    }

    #[test]
    fn vocab_ordering_and_min_freq() {
        let v = build_vocab(["a a b"], 1, 100).unwrap();
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("b"), 6);
        assert_eq!(v.len(), 7);
        let v = build_vocab(["a a b"], 2, 100).unwrap();
        assert_eq!(v.get("b"), None);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.encode("a b"), vec![5, UNK]);
    }

    #[test]
    fn vocab_ties_break_lexicographically_and_truncate() {
        let v = build_vocab(["c b a c"], 1, 7).unwrap();
        assert_eq!(v.non_reserved(), &["c".to_string(), "a".to_string()]);
    }

    #[test]
    fn vocab_errors() {
        assert!(matches!(build_vocab(Vec::<&str>::new(), 1, 10), Err(Error::EmptyCorpus)));
        assert!(matches!(build_vocab(["..."], 1, 10), Err(Error::EmptyCorpus)));
        assert!(build_vocab(["a"], 1, 3).is_err());
    }

    #[test]
    fn vocab_round_trip_and_file_format() {
        let v = build_vocab(["the court held that the defendant stole", "the phone"], 1, 100).unwrap();
        for t in v.non_reserved() {
            assert_eq!(v.token(v.id(t)), Some(t.as_str()));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some("the"));
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
        // stable across runs
        let again = build_vocab(["the court held that the defendant stole", "the phone"], 1, 100).unwrap();
        let path2 = dir.path().join("vocab2.txt");
        again.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn tf_idf_values() {
        let docs = vec![vec![5u32, 6, 6], vec![5u32, 7]];
        let stats = CorpusStats::from_docs(&docs);
        assert_eq!(tf_idf(7, &docs[0], &stats), 0.0);
        assert_eq!(tf_idf(5, &docs[1], &stats), 0.0);
        // 2 * ln(3/2)
        assert!((tf_idf(6, &docs[0], &stats) - 0.810930).abs() < 1e-6);
        assert!((stats.avgdl - 2.5).abs() < 1e-12);
        assert!(stats.df.values().all(|d| *d as usize <= stats.num_docs));
        // unknown token counts as df = 0
        assert!((tf_idf(99, &[99], &stats) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn stats_json_round_trip() {
        let stats = CorpusStats::from_docs(&[vec![5u32, 6], vec![6u32]]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stats.json");
        stats.save(&p).unwrap();
        assert_eq!(CorpusStats::load(&p).unwrap(), stats);
    }
}
