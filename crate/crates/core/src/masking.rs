//! Random, slot and TF-IDF masking.
//!
//! Masked positions are always replaced by the `[MASK]` id; reserved ids are
//! never selected.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CaseDocument, Section};
use crate::error::{Error, Result};
use crate::seed::SeedHasher;
use crate::textproc::{is_reserved, tf_idf, tokenize, CorpusStats, TokenId, MASK};

/// Token ids of one section of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSection {
    pub ids: Vec<TokenId>,
    pub section: Section,
    pub doc_id: String,
}

impl TokenizedSection {
    pub fn new(ids: Vec<TokenId>, section: Section, doc_id: impl Into<String>) -> Self {
        TokenizedSection {
            ids,
            section,
            doc_id: doc_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedExample {
    pub input_ids: Vec<TokenId>,
    pub mask_positions: Vec<usize>,
    pub target_ids: Vec<TokenId>,
    pub section: Section,
    pub doc_id: String,
}

impl MaskedExample {
    fn from_positions(tokens: &TokenizedSection, positions: Vec<usize>) -> Self {
        let mut input_ids = tokens.ids.clone();
        let mut target_ids = Vec::with_capacity(positions.len());
        for &p in &positions {
            target_ids.push(input_ids[p]);
            input_ids[p] = MASK;
        }
        MaskedExample {
            input_ids,
            mask_positions: positions,
            target_ids,
            section: tokens.section,
            doc_id: tokens.doc_id.clone(),
        }
    }

    pub fn unmasked(tokens: &TokenizedSection) -> Self {
        Self::from_positions(tokens, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    pub fn num_masked(&self) -> usize {
        self.mask_positions.len()
    }

    /// Overlays the targets back onto the input.
    pub fn reconstruct(&self) -> Vec<TokenId> {
        let mut ids = self.input_ids.clone();
        for (p, t) in self.mask_positions.iter().zip(&self.target_ids) {
            ids[*p] = *t;
        }
        ids
    }

    pub fn check_invariants(&self) -> bool {
        self.mask_positions.len() == self.target_ids.len()
            && self.mask_positions.windows(2).all(|w| w[0] < w[1])
            && self.mask_positions.iter().all(|p| self.input_ids.get(*p) == Some(&MASK))
            && self.target_ids.iter().all(|t| !is_reserved(*t))
    }
}

/// `round_half_up(ratio * n)`, at least 1 when `ratio > 0` and `n >= 1`.
pub fn mask_count(ratio: f64, n: usize) -> usize {
    if ratio <= 0.0 || n == 0 {
        return 0;
    }
    let k = (ratio * n as f64 + 0.5).floor() as usize;
    k.clamp(1, n)
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!("mask ratio {ratio} outside [0, 1]")));
    }
    Ok(())
}

fn eligible(ids: &[TokenId]) -> Vec<usize> {
    (0..ids.len()).filter(|&i| !is_reserved(ids[i])).collect()
}

pub fn mask_random<R: Rng + ?Sized>(tokens: &TokenizedSection, ratio: f64, rng: &mut R) -> Result<MaskedExample> {
    if tokens.ids.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_ratio(ratio)?;
    let candidates = eligible(&tokens.ids);
    let k = mask_count(ratio, candidates.len());
    let mut positions: Vec<usize> = rand::seq::index::sample(rng, candidates.len(), k)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    positions.sort_unstable();
    Ok(MaskedExample::from_positions(tokens, positions))
}

/// Masks exactly the tokens inside the half-open `spans`.
pub fn mask_slots(tokens: &TokenizedSection, spans: &[(usize, usize)]) -> Result<MaskedExample> {
    let len = tokens.ids.len();
    let mut sorted = spans.to_vec();
    sorted.sort_unstable();
    for &(start, end) in &sorted {
        if start > end || end > len {
            return Err(Error::SpanOutOfBounds { start, end, len });
        }
    }
    if sorted.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(Error::InvalidConfig(format!("overlapping slot spans {sorted:?}")));
    }
    let positions = sorted
        .iter()
        .flat_map(|&(s, e)| s..e)
        .filter(|&p| !is_reserved(tokens.ids[p]))
        .collect();
    Ok(MaskedExample::from_positions(tokens, positions))
}

/// Masks the `round(ratio * n)` highest TF-IDF positions, lower index first on ties.
pub fn mask_tfidf(tokens: &TokenizedSection, ratio: f64, stats: &CorpusStats) -> Result<MaskedExample> {
    if tokens.ids.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_ratio(ratio)?;
    let mut scored: Vec<(f64, usize)> = eligible(&tokens.ids)
        .into_iter()
        .map(|i| (tf_idf(tokens.ids[i], &tokens.ids, stats), i))
        .collect();
    let k = mask_count(ratio, scored.len());
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut positions: Vec<usize> = scored[..k].iter().map(|(_, i)| *i).collect();
    positions.sort_unstable();
    Ok(MaskedExample::from_positions(tokens, positions))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MaskPolicy {
    Random { ratio: f64 },
    Slots { spans: Vec<(usize, usize)> },
    Tfidf { ratio: f64 },
}

impl MaskPolicy {
    pub fn apply<R: Rng + ?Sized>(
        &self,
        tokens: &TokenizedSection,
        stats: Option<&CorpusStats>,
        rng: &mut R,
    ) -> Result<MaskedExample> {
        match self {
            MaskPolicy::Random { ratio } => mask_random(tokens, *ratio, rng),
            MaskPolicy::Slots { spans } => mask_slots(tokens, spans),
            MaskPolicy::Tfidf { ratio } => {
                let stats = stats.ok_or_else(|| Error::InvalidConfig("tfidf masking needs corpus stats".into()))?;
                mask_tfidf(tokens, *ratio, stats)
            }
        }
    }
}

/// Random stream for one (seed, epoch, document, section), independent of
/// scheduling order.
pub fn example_rng(seed: u64, epoch: u64, doc_id: &str, section: Section) -> rand_chacha::ChaCha8Rng {
    SeedHasher::new(seed)
        .u64(epoch)
        .str(doc_id)
        .str(section.name())
        .rng()
}

/// Spans of the decision slots (law articles, charge, term) inside the
/// decision's token stream. All occurrences are covered; adjacent or
/// overlapping matches are merged.
pub fn decision_slot_spans(decision_tokens: &[String], doc: &CaseDocument) -> Vec<(usize, usize)> {
    let mut needles: Vec<Vec<String>> = Vec::new();
    if let Some(laws) = &doc.law_ids {
        needles.extend(laws.iter().map(|l| vec![l.to_string()]));
    }
    if let Some(charge) = &doc.charge_label {
        let t = tokenize(charge);
        if !t.is_empty() {
            needles.push(t);
        }
    }
    if let Some(term) = doc.term_months {
        needles.push(vec![term.to_string()]);
    }
    let mut spans = Vec::new();
    for needle in &needles {
        if needle.len() > decision_tokens.len() {
            continue;
        }
        for start in 0..=decision_tokens.len() - needle.len() {
            if decision_tokens[start..start + needle.len()] == needle[..] {
                spans.push((start, start + needle.len()));
            }
        }
    }
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}
