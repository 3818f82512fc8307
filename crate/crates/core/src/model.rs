//! Deep fact encoder with two shallow decoders that see the document only
//! through the encoder's `[CLS]` vector.
//!
//! Parameter names (all matrices are `rows x cols`, activations are rows):
//!
//! ```text
//! embeddings.token              V x d   shared by encoder, decoders and the tied head
//! embeddings.position           L x d
//! embeddings.ln.{gamma,beta}    1 x d
//! encoder.layer{i}.*            post-LN transformer block (see below)
//! decoder.position              L x d   decoder position table
//! decoder.ln.{gamma,beta}       1 x d   applied to decoder token rows
//! reasoning_decoder.layer{i}.*  or shared_decoder.layer{i}.* with
//! decision_decoder.layer{i}.*      section_embedding (2 x d)
//! head.bias                     1 x V   (head.weight V x d when untied)
//!
//! block: attn.{query,key,value,output}.{weight,bias}, attn.ln.{gamma,beta},
//!        ffn.up.{weight,bias} (d x f), ffn.down.{weight,bias} (f x d),
//!        ffn.ln.{gamma,beta}
//! ```

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CaseDocument, Section};
use crate::error::{Error, Result};
use crate::masking::MaskedExample;
use crate::numerics::{Checkpoint, ParamStore, Precision, Session, Tensor, Var};
use crate::seed::SeedHasher;
use crate::textproc::{TokenId, Vocabulary, CLS, SEP};

/// Which decoder losses take part in pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    NoRea,
    NoDec,
    NoBoth,
    /// One decoder stack for both sections, told apart by a section embedding.
    SharedDecoder,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoRea,
        Ablation::NoDec,
        Ablation::NoBoth,
        Ablation::SharedDecoder,
    ];

    pub fn uses_reasoning(self) -> bool {
        !matches!(self, Ablation::NoRea | Ablation::NoBoth)
    }

    pub fn uses_decision(self) -> bool {
        !matches!(self, Ablation::NoDec | Ablation::NoBoth)
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoRea => "no_rea",
            Ablation::NoDec => "no_dec",
            Ablation::NoBoth => "no_both",
            Ablation::SharedDecoder => "shared_decoder",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ablation {s:?} (full, no_rea, no_dec, no_both, shared_decoder)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub tie_output_embeddings: bool,
    pub shared_decoder: bool,
    pub init_std: f64,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            d_model: 128,
            n_heads: 4,
            n_encoder_layers: 4,
            n_decoder_layers: 1,
            d_ff: 512,
            max_len: crate::textproc::DEFAULT_MAX_LEN,
            dropout: 0.0,
            tie_output_embeddings: true,
            shared_decoder: false,
            init_std: 0.02,
            precision: Precision::F64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.vocab_size <= crate::textproc::NUM_RESERVED {
            return bad(format!("vocab_size {} leaves no room for real tokens", self.vocab_size));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} must be a positive multiple of n_heads {}", self.d_model, self.n_heads));
        }
        if self.n_decoder_layers < 1 {
            return bad("n_decoder_layers must be at least 1".into());
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2".into());
        }
        if self.d_ff == 0 {
            return bad("d_ff must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.init_std > 0.0) {
            return bad("init_std must be positive".into());
        }
        Ok(())
    }
}

/// Masked sections of one document for one pre-training step.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainExample {
    pub doc_id: String,
    pub fact: MaskedExample,
    pub reasoning: Option<MaskedExample>,
    pub decision: Option<MaskedExample>,
}

impl PretrainExample {
    fn has_mlm(&self) -> bool {
        self.fact.num_masked() > 0
    }

    fn has_rea(&self, a: Ablation) -> bool {
        a.uses_reasoning() && self.reasoning.as_ref().is_some_and(|r| r.num_masked() > 0)
    }

    fn has_dec(&self, a: Ablation) -> bool {
        a.uses_decision() && self.decision.as_ref().is_some_and(|r| r.num_masked() > 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_mlm: f64,
    pub l_rea: f64,
    pub l_dec: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    /// The joint objective is the unweighted sum of the components.
    pub fn new(l_mlm: f64, l_rea: f64, l_dec: f64) -> Self {
        LossBreakdown {
            l_mlm,
            l_rea,
            l_dec,
            l_total: l_mlm + l_rea + l_dec,
        }
    }
}

/// Loss nodes of one document; `None` when the component does not apply.
#[derive(Debug, Clone, Copy, Default)]
pub struct DocLosses {
    pub mlm: Option<Var>,
    pub rea: Option<Var>,
    pub dec: Option<Var>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Cut the gradient path from the decoders back into the encoder.
    pub detach_fact_vector: bool,
}

/// Number of documents contributing to each component; each document's
/// component loss is weighted by the inverse of its count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct ComponentCounts {
    mlm: usize,
    rea: usize,
    dec: usize,
}

impl ComponentCounts {
    fn of(batch: &[PretrainExample], a: Ablation) -> Self {
        ComponentCounts {
            mlm: batch.iter().filter(|e| e.has_mlm()).count(),
            rea: batch.iter().filter(|e| e.has_rea(a)).count(),
            dec: batch.iter().filter(|e| e.has_dec(a)).count(),
        }
    }

    fn weights(&self) -> [f64; 3] {
        let inv = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
        [inv(self.mlm), inv(self.rea), inv(self.dec)]
    }
}

/// Which sections form the document-side retrieval input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentSide {
    Fact,
    /// Fact, reasoning and decision joined by `[SEP]`.
    #[default]
    Full,
}

impl FromStr for DocumentSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fact" => Ok(DocumentSide::Fact),
            "full" => Ok(DocumentSide::Full),
            _ => Err(Error::InvalidConfig(format!("unknown document side {s:?} (fact, full)"))),
        }
    }
}

/// Token ids fed to the encoder for retrieval, truncated to fit `[CLS]`.
pub fn retrieval_input(doc: &CaseDocument, vocab: &Vocabulary, side: DocumentSide, max_len: usize) -> Vec<TokenId> {
    let mut ids = vocab.encode(&doc.fact);
    if side == DocumentSide::Full {
        for section in [&doc.reasoning, &doc.decision] {
            ids.push(SEP);
            ids.extend(vocab.encode(section));
        }
    }
    ids.truncate(max_len.saturating_sub(1));
    ids
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredCaseModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

const DECODER_PREFIXES: [&str; 5] = [
    "decoder.",
    "reasoning_decoder.",
    "decision_decoder.",
    "shared_decoder.",
    "section_embedding",
];

impl StructuredCaseModel {
    /// Normal(0, init_std) weights, unit LayerNorm gains, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut rng = SeedHasher::new(seed).str("init").rng();
        let mut randn = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
            Tensor::matrix(rows, cols, data).expect("shape")
        };
        let (v, d, f, l) = (config.vocab_size, config.d_model, config.d_ff, config.max_len);
        let mut p = ParamStore::new();
        let ln = |p: &mut ParamStore, prefix: &str| {
            p.insert(format!("{prefix}.gamma"), Tensor::full(&[1, d], 1.0));
            p.insert(format!("{prefix}.beta"), Tensor::zeros(&[1, d]));
        };
        p.insert("embeddings.token", randn(v, d));
        p.insert("embeddings.position", randn(l, d));
        ln(&mut p, "embeddings.ln");
        let mut block = |p: &mut ParamStore, prefix: &str| {
            for name in ["query", "key", "value", "output"] {
                p.insert(format!("{prefix}.attn.{name}.weight"), randn(d, d));
                p.insert(format!("{prefix}.attn.{name}.bias"), Tensor::zeros(&[1, d]));
            }
            ln(p, &format!("{prefix}.attn.ln"));
            p.insert(format!("{prefix}.ffn.up.weight"), randn(d, f));
            p.insert(format!("{prefix}.ffn.up.bias"), Tensor::zeros(&[1, f]));
            p.insert(format!("{prefix}.ffn.down.weight"), randn(f, d));
            p.insert(format!("{prefix}.ffn.down.bias"), Tensor::zeros(&[1, d]));
            ln(p, &format!("{prefix}.ffn.ln"));
        };
        for i in 0..config.n_encoder_layers {
            block(&mut p, &format!("encoder.layer{i}"));
        }
        let stacks: &[&str] = if config.shared_decoder {
            &["shared_decoder"]
        } else {
            &["reasoning_decoder", "decision_decoder"]
        };
        for stack in stacks {
            for i in 0..config.n_decoder_layers {
                block(&mut p, &format!("{stack}.layer{i}"));
            }
        }
        drop(block);
        p.insert("decoder.position", randn(l, d));
        ln(&mut p, "decoder.ln");
        if config.shared_decoder {
            p.insert("section_embedding", randn(2, d));
        }
        if !config.tie_output_embeddings {
            p.insert("head.weight", randn(v, d));
        }
        p.insert("head.bias", Tensor::zeros(&[1, v]));
        Ok(StructuredCaseModel { config, params: p })
    }

    pub fn has_decoders(&self) -> bool {
        self.params.contains("decoder.position")
    }

    /// Removes every decoder tensor, leaving the encoder and output head.
    pub fn drop_decoders(&mut self) {
        self.params
            .retain(|name| !DECODER_PREFIXES.iter().any(|p| name.starts_with(p)));
    }

    pub fn session(&self) -> Session<'_> {
        Session::new(&self.params, self.config.precision)
    }

    pub fn inference_session(&self) -> Session<'_> {
        Session::inference(&self.params, self.config.precision)
    }

    fn dropout(&self, s: &mut Session, x: Var, rng: &mut Option<ChaCha8Rng>) -> Var {
        match rng {
            Some(r) if self.config.dropout > 0.0 => s.graph.dropout(x, self.config.dropout, r),
            _ => x,
        }
    }

    fn block(&self, s: &mut Session, x: Var, prefix: &str, rng: &mut Option<ChaCha8Rng>) -> Result<Var> {
        let q = linear(s, x, &format!("{prefix}.attn.query"))?;
        let k = linear(s, x, &format!("{prefix}.attn.key"))?;
        let v = linear(s, x, &format!("{prefix}.attn.value"))?;
        let a = s.graph.multi_head_attention(q, k, v, self.config.n_heads)?;
        let a = linear(s, a, &format!("{prefix}.attn.output"))?;
        let a = self.dropout(s, a, rng);
        let x = s.graph.add(x, a)?;
        let x = layer_norm(s, x, &format!("{prefix}.attn.ln"))?;
        let h = linear(s, x, &format!("{prefix}.ffn.up"))?;
        let h = s.graph.gelu(h);
        let h = linear(s, h, &format!("{prefix}.ffn.down"))?;
        let h = self.dropout(s, h, rng);
        let x = s.graph.add(x, h)?;
        layer_norm(s, x, &format!("{prefix}.ffn.ln"))
    }

    /// Encoder states for `[CLS] ids`; row 0 is the fact vector.
    pub fn encode(&self, s: &mut Session, ids: &[TokenId], rng: &mut Option<ChaCha8Rng>) -> Result<Var> {
        let n = ids.len() + 1;
        if n > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: n,
                max_len: self.config.max_len,
            });
        }
        let rows: Vec<usize> = std::iter::once(CLS).chain(ids.iter().copied()).map(|t| t as usize).collect();
        let table = s.param("embeddings.token")?;
        let tok = s.graph.gather_rows(table, &rows)?;
        let pos_table = s.param("embeddings.position")?;
        let pos = s.graph.gather_rows(pos_table, &(0..n).collect::<Vec<_>>())?;
        let x = s.graph.add(tok, pos)?;
        let x = layer_norm(s, x, "embeddings.ln")?;
        let mut x = self.dropout(s, x, rng);
        for i in 0..self.config.n_encoder_layers {
            x = self.block(s, x, &format!("encoder.layer{i}"), rng)?;
        }
        Ok(x)
    }

    /// `(h_F, token_states)` for a masked fact.
    pub fn encode_fact(&self, s: &mut Session, fact: &MaskedExample, rng: &mut Option<ChaCha8Rng>) -> Result<(Var, Var)> {
        let states = self.encode(s, &fact.input_ids, rng)?;
        let h = s.graph.slice_rows(states, 0, 1)?;
        Ok((h, states))
    }

    /// Decoder states for `[h_F, e_1 + p_1, ..., e_n + p_n]`. Row 0 is the
    /// fact vector as given (plus the section embedding for a shared stack).
    pub fn decode(&self, s: &mut Session, h_f: Var, which: Section, ids: &[TokenId], rng: &mut Option<ChaCha8Rng>) -> Result<Var> {
        let n = ids.len() + 1;
        if n > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: n,
                max_len: self.config.max_len,
            });
        }
        let (prefix, section_row) = match (which, self.config.shared_decoder) {
            (Section::Reasoning, false) => ("reasoning_decoder", 0),
            (Section::Decision, false) => ("decision_decoder", 0),
            (Section::Reasoning, true) => ("shared_decoder", 0),
            (Section::Decision, true) => ("shared_decoder", 1),
            (other, _) => return Err(Error::InvalidConfig(format!("no decoder for the {other} section"))),
        };
        let mut head = h_f;
        if self.config.shared_decoder {
            let table = s.param("section_embedding")?;
            let e = s.graph.slice_rows(table, section_row, section_row + 1)?;
            head = s.graph.add(head, e)?;
        }
        let mut x = if ids.is_empty() {
            head
        } else {
            let table = s.param("embeddings.token")?;
            let rows: Vec<usize> = ids.iter().map(|t| *t as usize).collect();
            let tok = s.graph.gather_rows(table, &rows)?;
            let pos_table = s.param("decoder.position")?;
            let pos = s.graph.gather_rows(pos_table, &(1..n).collect::<Vec<_>>())?;
            let t = s.graph.add(tok, pos)?;
            let t = layer_norm(s, t, "decoder.ln")?;
            let t = self.dropout(s, t, rng);
            s.graph.concat_rows(&[head, t])?
        };
        for i in 0..self.config.n_decoder_layers {
            x = self.block(s, x, &format!("{prefix}.layer{i}"), rng)?;
        }
        Ok(x)
    }

    /// Vocabulary logits at `rows` of `states`: `H E^T + bias`.
    pub fn logits(&self, s: &mut Session, states: Var, rows: &[usize]) -> Result<Var> {
        let sel = s.graph.gather_rows(states, rows)?;
        let w = if self.config.tie_output_embeddings {
            s.param("embeddings.token")?
        } else {
            s.param("head.weight")?
        };
        let bias = s.param("head.bias")?;
        let l = s.graph.matmul_t(sel, w)?;
        s.graph.add_row(l, bias)
    }

    /// Mean cross-entropy at the masked positions of `ex`, whose row `i`
    /// sits at row `i + 1` of `states`.
    pub fn masked_loss(&self, s: &mut Session, states: Var, ex: &MaskedExample) -> Result<Var> {
        if ex.mask_positions.is_empty() {
            return Err(Error::NoMaskedPositions);
        }
        let rows: Vec<usize> = ex.mask_positions.iter().map(|p| p + 1).collect();
        let logits = self.logits(s, states, &rows)?;
        let targets: Vec<usize> = ex.target_ids.iter().map(|t| *t as usize).collect();
        s.graph.cross_entropy(logits, &targets)
    }

    pub fn loss_mlm(&self, s: &mut Session, states: Var, fact: &MaskedExample) -> Result<Var> {
        self.masked_loss(s, states, fact)
    }

    /// Logits at the masked positions of a decoded section.
    pub fn decode_section(&self, s: &mut Session, h_f: Var, ex: &MaskedExample, which: Section) -> Result<Var> {
        let states = self.decode(s, h_f, which, &ex.input_ids, &mut None)?;
        let rows: Vec<usize> = ex.mask_positions.iter().map(|p| p + 1).collect();
        self.logits(s, states, &rows)
    }

    pub fn loss_section(&self, s: &mut Session, h_f: Var, ex: &MaskedExample, which: Section, rng: &mut Option<ChaCha8Rng>) -> Result<Var> {
        if ex.mask_positions.is_empty() {
            return Err(Error::NoMaskedPositions);
        }
        let states = self.decode(s, h_f, which, &ex.input_ids, rng)?;
        self.masked_loss(s, states, ex)
    }

    /// Builds the applicable component losses of one document.
    pub fn doc_losses(
        &self,
        s: &mut Session,
        ex: &PretrainExample,
        ablation: Ablation,
        opts: ForwardOptions,
        rng: &mut Option<ChaCha8Rng>,
    ) -> Result<DocLosses> {
        let (h, states) = self.encode_fact(s, &ex.fact, rng)?;
        let mut out = DocLosses::default();
        if ex.has_mlm() {
            out.mlm = Some(self.loss_mlm(s, states, &ex.fact)?);
        }
        let need_decoders = ex.has_rea(ablation) || ex.has_dec(ablation);
        let h = if opts.detach_fact_vector && need_decoders {
            s.graph.detach(h)
        } else {
            h
        };
        if ex.has_rea(ablation) {
            let r = ex.reasoning.as_ref().expect("checked");
            out.rea = Some(self.loss_section(s, h, r, Section::Reasoning, rng)?);
        }
        if ex.has_dec(ablation) {
            let d = ex.decision.as_ref().expect("checked");
            out.dec = Some(self.loss_section(s, h, d, Section::Decision, rng)?);
        }
        Ok(out)
    }

    fn weighted_sum(s: &mut Session, losses: &DocLosses, w: [f64; 3]) -> Result<Option<Var>> {
        let mut total: Option<Var> = None;
        for (l, w) in [losses.mlm, losses.rea, losses.dec].into_iter().zip(w) {
            if let Some(l) = l {
                let l = s.graph.scale(l, w);
                total = Some(match total {
                    None => l,
                    Some(t) => s.graph.add(t, l)?,
                });
            }
        }
        Ok(total)
    }

    /// The joint objective of a batch in one graph. Each component is the
    /// mean over the documents it applies to.
    pub fn batch_loss(&self, s: &mut Session, batch: &[PretrainExample], ablation: Ablation, opts: ForwardOptions) -> Result<(Var, LossBreakdown)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        let w = ComponentCounts::of(batch, ablation).weights();
        let mut total: Option<Var> = None;
        let mut sums = [0.0; 3];
        for ex in batch {
            let losses = self.doc_losses(s, ex, ablation, opts, &mut None)?;
            for (i, l) in [losses.mlm, losses.rea, losses.dec].into_iter().enumerate() {
                if let Some(l) = l {
                    sums[i] += s.graph.scalar(l) * w[i];
                }
            }
            if let Some(l) = Self::weighted_sum(s, &losses, w)? {
                total = Some(match total {
                    None => l,
                    Some(t) => s.graph.add(t, l)?,
                });
            }
        }
        let total = match total {
            Some(t) => t,
            None => s.graph.constant(Tensor::scalar(0.0)),
        };
        Ok((total, LossBreakdown::new(sums[0], sums[1], sums[2])))
    }

    /// Gradients of the batch objective, computed one document graph at a
    /// time in parallel and summed in batch order. `dropout_seed` enables
    /// dropout with per-document streams.
    pub fn batch_gradients(
        &self,
        batch: &[PretrainExample],
        ablation: Ablation,
        dropout_seed: Option<u64>,
    ) -> Result<(Vec<Option<Tensor>>, LossBreakdown)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        let w = ComponentCounts::of(batch, ablation).weights();
        let per_doc: Vec<(Vec<Option<Tensor>>, [f64; 3])> = batch
            .par_iter()
            .map(|ex| {
                let mut rng = dropout_seed.map(|seed| SeedHasher::new(seed).str(&ex.doc_id).rng());
                let mut s = self.session();
                let losses = self.doc_losses(&mut s, ex, ablation, ForwardOptions::default(), &mut rng)?;
                let mut vals = [0.0; 3];
                for (i, l) in [losses.mlm, losses.rea, losses.dec].into_iter().enumerate() {
                    if let Some(l) = l {
                        vals[i] = s.graph.scalar(l) * w[i];
                    }
                }
                let grads = match Self::weighted_sum(&mut s, &losses, w)? {
                    Some(loss) => s.param_grads(loss)?,
                    None => vec![None; self.params.len()],
                };
                Ok((grads, vals))
            })
            .collect::<Result<_>>()?;
        let mut total: Vec<Option<Tensor>> = vec![None; self.params.len()];
        let mut sums = [0.0; 3];
        for (grads, vals) in per_doc {
            for i in 0..3 {
                sums[i] += vals[i];
            }
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
        Ok((total, LossBreakdown::new(sums[0], sums[1], sums[2])))
    }

    /// Joint loss of a batch without gradients.
    pub fn evaluate_batch(&self, batch: &[PretrainExample], ablation: Ablation) -> Result<LossBreakdown> {
        let mut s = self.inference_session();
        Ok(self.batch_loss(&mut s, batch, ablation, ForwardOptions::default())?.1)
    }

    /// Unmasked `[CLS]` state, not length-normalised. Input longer than
    /// `max_len - 1` is truncated.
    pub fn embed(&self, ids: &[TokenId]) -> Result<Vec<f64>> {
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        let ids = &ids[..ids.len().min(self.config.max_len - 1)];
        let mut s = self.inference_session();
        let states = self.encode(&mut s, ids, &mut None)?;
        Ok(s.graph.value(states).row_slice(0).to_vec())
    }

    /// [`embed`](Self::embed) over many inputs in parallel, order preserved.
    pub fn embed_many<S: AsRef<[TokenId]> + Sync>(&self, inputs: &[S]) -> Result<Vec<Vec<f64>>> {
        inputs.par_iter().map(|ids| self.embed(ids.as_ref())).collect()
    }

    /// Checkpoint with `{"kind": "model", "config": ..., "vocab": [...]}`
    /// plus any `extra` header fields.
    pub fn to_checkpoint(&self, vocab: &Vocabulary, extra: serde_json::Map<String, serde_json::Value>) -> Result<Checkpoint> {
        let mut header = serde_json::Map::new();
        header.insert("kind".into(), "model".into());
        header.insert("config".into(), serde_json::to_value(&self.config)?);
        header.insert("vocab".into(), serde_json::to_value(vocab.non_reserved())?);
        header.insert("has_decoders".into(), self.has_decoders().into());
        header.extend(extra);
        Ok(Checkpoint::new(serde_json::Value::Object(header), self.params.clone().into_inner()))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, Vocabulary)> {
        let bad = |m: &str| Error::Checkpoint(format!("not a model checkpoint: {m}"));
        if ckpt.header.get("kind").and_then(|k| k.as_str()) != Some("model") {
            return Err(bad("missing kind"));
        }
        let config: ModelConfig = serde_json::from_value(ckpt.header.get("config").cloned().ok_or_else(|| bad("missing config"))?)?;
        config.validate()?;
        let tokens: Vec<String> = serde_json::from_value(ckpt.header.get("vocab").cloned().ok_or_else(|| bad("missing vocab"))?)?;
        let vocab = Vocabulary::from_tokens(tokens)?;
        if vocab.len() != config.vocab_size {
            return Err(bad("vocabulary size differs from config"));
        }
        let params = ParamStore::from_map(ckpt.tensors.clone());
        let table = params.get("embeddings.token")?;
        if table.shape() != [config.vocab_size, config.d_model] {
            return Err(bad("token embedding shape differs from config"));
        }
        Ok((StructuredCaseModel { config, params }, vocab))
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, Vocabulary, Checkpoint)> {
        let ckpt = Checkpoint::load(path)?;
        let (m, v) = Self::from_checkpoint(&ckpt)?;
        Ok((m, v, ckpt))
    }
}

fn linear(s: &mut Session, x: Var, prefix: &str) -> Result<Var> {
    let w = s.param(&format!("{prefix}.weight"))?;
    let b = s.param(&format!("{prefix}.bias"))?;
    let y = s.graph.matmul(x, w)?;
    s.graph.add_row(y, b)
}

fn layer_norm(s: &mut Session, x: Var, prefix: &str) -> Result<Var> {
    let g = s.param(&format!("{prefix}.gamma"))?;
    let b = s.param(&format!("{prefix}.beta"))?;
    s.graph.layer_norm(x, g, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::{mask_random, mask_slots, TokenizedSection};
    use crate::numerics::{grad_check, GradCheck};
    use crate::seed::rng_from;
    use crate::textproc::MASK;
    use rand::Rng;

    pub(crate) fn toy_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 50,
            d_model: 16,
            n_heads: 2,
            n_encoder_layers: 2,
            n_decoder_layers: 1,
            d_ff: 32,
            max_len: 32,
            init_std: 0.2,
            ..Default::default()
        }
    }

    fn random_ids(rng: &mut impl Rng, n: usize) -> Vec<TokenId> {
        (0..n).map(|_| rng.gen_range(5..50)).collect()
    }

    pub(crate) fn toy_batch(seed: u64) -> Vec<PretrainExample> {
        let mut rng = rng_from(seed);
        (0..2)
            .map(|i| {
                let id = format!("d{i}");
                let f = TokenizedSection::new(random_ids(&mut rng, 9), Section::Fact, id.clone());
                let r = TokenizedSection::new(random_ids(&mut rng, 7), Section::Reasoning, id.clone());
                let d = TokenizedSection::new(random_ids(&mut rng, 6), Section::Decision, id.clone());
                PretrainExample {
                    doc_id: id,
                    fact: mask_random(&f, 0.3, &mut rng).unwrap(),
                    reasoning: Some(mask_random(&r, 0.45, &mut rng).unwrap()),
                    decision: Some(mask_slots(&d, &[(1, 2), (4, 5)]).unwrap()),
                }
            })
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(toy_config().validate().is_ok());
        for bad in [
            ModelConfig { n_heads: 3, ..toy_config() },
            ModelConfig { n_decoder_layers: 0, ..toy_config() },
            ModelConfig { max_len: 1, ..toy_config() },
            ModelConfig { vocab_size: 5, ..toy_config() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn parameter_layout() {
        let m = StructuredCaseModel::new(toy_config(), 1).unwrap();
        assert!(m.params.contains("reasoning_decoder.layer0.ffn.up.weight"));
        assert!(!m.params.contains("section_embedding"));
        let shared = StructuredCaseModel::new(ModelConfig { shared_decoder: true, ..toy_config() }, 1).unwrap();
        assert!(shared.params.contains("shared_decoder.layer0.attn.query.weight"));
        assert!(!shared.params.contains("reasoning_decoder.layer0.attn.query.weight"));
        let mut enc = m.clone();
        enc.drop_decoders();
        assert!(!enc.has_decoders());
        assert!(enc.params.names().all(|n| n.starts_with("embeddings.") || n.starts_with("encoder.") || n.starts_with("head.")));
    }

    #[test]
    fn joint_loss_passes_grad_check() {
        let mut m = StructuredCaseModel::new(toy_config(), 3).unwrap();
        let batch = toy_batch(4);
        let cfg = GradCheck { per_tensor: Some(6), ..Default::default() };
        let config = m.config.clone();
        let report = grad_check(&mut m.params, cfg, |s| {
            let model = StructuredCaseModel { config: config.clone(), params: s.store().clone() };
            Ok(model.batch_loss(s, &batch, Ablation::Full, ForwardOptions::default())?.0)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn parallel_gradients_match_single_graph() {
        let m = StructuredCaseModel::new(toy_config(), 5).unwrap();
        let batch = toy_batch(6);
        let mut s = m.session();
        let (loss, parts) = m.batch_loss(&mut s, &batch, Ablation::Full, ForwardOptions::default()).unwrap();
        let single = s.param_grads(loss).unwrap();
        let (par, parts2) = m.batch_gradients(&batch, Ablation::Full, None).unwrap();
        assert!((parts.l_total - parts2.l_total).abs() < 1e-12);
        assert!((s.graph.scalar(loss) - parts.l_total).abs() < 1e-12);
        for (a, b) in single.iter().zip(&par) {
            match (a, b) {
                (Some(a), Some(b)) => assert!(a.max_abs_diff(b) < 1e-12),
                (None, None) => {}
                _ => panic!("gradient presence differs"),
            }
        }
    }

    #[test]
    fn ablations_drop_components() {
        let m = StructuredCaseModel::new(toy_config(), 5).unwrap();
        let batch = toy_batch(7);
        let full = m.evaluate_batch(&batch, Ablation::Full).unwrap();
        let none = m.evaluate_batch(&batch, Ablation::NoBoth).unwrap();
        let no_rea = m.evaluate_batch(&batch, Ablation::NoRea).unwrap();
        assert_eq!(none.l_total, none.l_mlm);
        assert_eq!((none.l_rea, none.l_dec), (0.0, 0.0));
        assert_eq!(no_rea.l_rea, 0.0);
        assert!((no_rea.l_total - (full.l_mlm + full.l_dec)).abs() < 1e-12);
        assert!((full.l_total - (full.l_mlm + full.l_rea + full.l_dec)).abs() < 1e-12);
        assert_eq!(LossBreakdown::new(1.0, 2.0, 3.0).l_total, 6.0);
    }

    #[test]
    fn uniform_logits_give_ln_vocab() {
        let mut m = StructuredCaseModel::new(toy_config(), 8).unwrap();
        for name in ["embeddings.token", "head.bias"] {
            for v in m.params.get_mut(name).unwrap().data_mut() {
                *v = 0.0;
            }
        }
        let l = m.evaluate_batch(&toy_batch(9), Ablation::Full).unwrap();
        let ln_v = (50f64).ln();
        for c in [l.l_mlm, l.l_rea, l.l_dec] {
            assert!((c - ln_v).abs() < 1e-6);
        }
    }

    #[test]
    fn detached_fact_vector_blocks_encoder_gradient() {
        let m = StructuredCaseModel::new(toy_config(), 10).unwrap();
        let ex = &toy_batch(11)[0];
        let enc_grad = |detach: bool, which: Section| -> f64 {
            let mut s = m.session();
            let (h, _) = m.encode_fact(&mut s, &ex.fact, &mut None).unwrap();
            let h = if detach { s.graph.detach(h) } else { h };
            let sec = if which == Section::Reasoning { &ex.reasoning } else { &ex.decision };
            let loss = m.loss_section(&mut s, h, sec.as_ref().unwrap(), which, &mut None).unwrap();
            let grads = s.param_grads(loss).unwrap();
            m.params
                .names()
                .zip(&grads)
                .filter(|(n, _)| n.starts_with("encoder."))
                .flat_map(|(_, g)| g.iter().flat_map(|t| t.data().to_vec()))
                .fold(0.0, |a: f64, v| a.max(v.abs()))
        };
        for which in [Section::Reasoning, Section::Decision] {
            assert_eq!(enc_grad(true, which), 0.0);
            assert!(enc_grad(false, which) > 0.0);
        }
    }

    #[test]
    fn fully_masked_section_depends_only_on_fact_vector() {
        let m = StructuredCaseModel::new(toy_config(), 12).unwrap();
        let masked = MaskedExample {
            input_ids: vec![MASK; 3],
            mask_positions: vec![0, 1, 2],
            target_ids: vec![7, 8, 9],
            section: Section::Reasoning,
            doc_id: "x".into(),
        };
        let logits_for = |fact: &[TokenId], zero: bool| -> Tensor {
            let mut s = m.inference_session();
            let states = m.encode(&mut s, fact, &mut None).unwrap();
            let mut h = s.graph.slice_rows(states, 0, 1).unwrap();
            if zero {
                h = s.graph.scale(h, 0.0);
            }
            let l = m.decode_section(&mut s, h, &masked, Section::Reasoning).unwrap();
            s.graph.value(l).clone()
        };
        let a = logits_for(&[10, 11, 12], true);
        let b = logits_for(&[20, 21], true);
        assert_eq!(a.shape(), &[3, 50]);
        assert_eq!(a, b);
        assert_ne!(logits_for(&[10, 11, 12], false), logits_for(&[20, 21], false));
    }

    #[test]
    fn embedding_contracts() {
        let m = StructuredCaseModel::new(toy_config(), 13).unwrap();
        let a = m.embed(&[10, 11, 12, 13]).unwrap();
        assert_eq!(a, m.embed(&[10, 11, 12, 13]).unwrap());
        assert_ne!(a, m.embed(&[11, 10, 12, 13]).unwrap());
        assert!(crate::retrieval::dot(&a, &a) > 0.0);
        assert!(matches!(m.embed(&[]), Err(Error::EmptyInput)));
        let long: Vec<TokenId> = vec![9; 100];
        assert_eq!(m.embed(&long).unwrap(), m.embed(&long[..31]).unwrap());
        let mut s = m.inference_session();
        assert!(matches!(m.encode(&mut s, &long, &mut None), Err(Error::SequenceTooLong { len: 101, max_len: 32 })));
        let masked = MaskedExample {
            input_ids: vec![10, MASK, 12, 13],
            mask_positions: vec![1],
            target_ids: vec![11],
            section: Section::Fact,
            doc_id: "x".into(),
        };
        let mut s = m.inference_session();
        let (h, _) = m.encode_fact(&mut s, &masked, &mut None).unwrap();
        assert_ne!(s.graph.value(h).row_slice(0), &a[..]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = StructuredCaseModel::new(toy_config(), 14).unwrap();
        let vocab = Vocabulary::from_tokens((0..45).map(|i| format!("t{i}"))).unwrap();
        let ckpt = m.to_checkpoint(&vocab, Default::default()).unwrap();
        let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        let (m2, v2) = StructuredCaseModel::from_checkpoint(&back).unwrap();
        assert_eq!(m2, m);
        assert_eq!(v2, vocab);
        assert_eq!(m2.embed(&[5, 6, 7]).unwrap(), m.embed(&[5, 6, 7]).unwrap());
    }
}
