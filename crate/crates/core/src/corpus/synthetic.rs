//! Synthetic structured cases.
//!
//! Charges come in confusable groups (pairs, or a final triple when the
//! count is odd). Every charge in a group shares `k - 1` core key-element
//! tokens and owns one discriminating token, so two cases of different
//! charges in one group can differ in a single fact token. Facts embed the
//! key elements among shared filler, the reasoning restates them, and the
//! decision fills the law / charge / term template.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CaseDocument;
use crate::error::{Error, Result};
use crate::evalkit::QrelSet;
use crate::seed::SeedHasher;
use crate::textproc::tokenize;

const CHARGE_NAMES: [&str; 12] = [
    "theft",
    "robbery",
    "fraud",
    "embezzlement",
    "affray",
    "provocation",
    "injury",
    "bribery",
    "smuggling",
    "arson",
    "forgery",
    "extortion",
];

const FACT_PREFIX: &str = "after identification the defendant";
const FILLER_MIN: usize = 16;
const FILLER_MAX: usize = 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_documents: usize,
    pub num_charges: usize,
    pub key_elements_per_charge: usize,
    pub shared_vocab_size: usize,
    pub noise_token_rate: f64,
    pub seed: u64,
    pub confusable_pair_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_documents: 2000,
            num_charges: 4,
            key_elements_per_charge: 3,
            shared_vocab_size: 200,
            noise_token_rate: 0.05,
            seed: 7,
            confusable_pair_rate: 0.1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.num_charges < 2 {
            return bad("num_charges must be at least 2");
        }
        if self.key_elements_per_charge < 1 {
            return bad("key_elements_per_charge must be at least 1");
        }
        if self.shared_vocab_size < 1 {
            return bad("shared_vocab_size must be at least 1");
        }
        for (name, v) in [
            ("noise_token_rate", self.noise_token_rate),
            ("confusable_pair_rate", self.confusable_pair_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSpec(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Twin pairs produced: `round(rate * n)`, capped so that every pair fits
    /// inside `num_documents`.
    pub fn num_pairs(&self) -> usize {
        let wanted = (self.confusable_pair_rate * self.num_documents as f64 + 0.5).floor() as usize;
        wanted.min(self.num_documents / 2)
    }
}

/// Charge names, groups and key-element vocabularies implied by a spec.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeSchema {
    pub names: Vec<String>,
    pub group_of: Vec<usize>,
    /// Key-element tokens of each charge: group core tokens then the
    /// discriminating token.
    pub key_elements: Vec<Vec<String>>,
    pub law_ids: Vec<u32>,
}

impl ChargeSchema {
    pub fn new(spec: &SyntheticSpec) -> Self {
        let n = spec.num_charges;
        let k = spec.key_elements_per_charge;
        let num_groups = (n / 2).max(1);
        let names = (0..n)
            .map(|c| {
                CHARGE_NAMES
                    .get(c)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| format!("charge{c}"))
            })
            .collect();
        let group_of: Vec<usize> = (0..n).map(|c| (c / 2).min(num_groups - 1)).collect();
        let key_elements = (0..n)
            .map(|c| {
                let g = group_of[c];
                let mut keys: Vec<String> = (0..k - 1).map(|j| format!("g{g}elem{j}")).collect();
                keys.push(format!("act{c}"));
                keys
            })
            .collect();
        let law_ids = (0..n as u32).map(|c| 100 + 13 * c).collect();
        ChargeSchema {
            names,
            group_of,
            key_elements,
            law_ids,
        }
    }

    pub fn charge_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// The next charge in the same confusable group.
    pub fn partner(&self, charge: usize) -> usize {
        let group = self.group_of[charge];
        let members: Vec<usize> = (0..self.names.len())
            .filter(|c| self.group_of[*c] == group)
            .collect();
        let at = members.iter().position(|c| *c == charge).unwrap();
        members[(at + 1) % members.len()]
    }

    pub fn all_key_elements(&self) -> BTreeSet<&str> {
        self.key_elements
            .iter()
            .flatten()
            .map(String::as_str)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub docs: Vec<CaseDocument>,
    /// (original, twin) document ids.
    pub twins: Vec<(String, String)>,
    pub schema: ChargeSchema,
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    schema: &'a ChargeSchema,
}

impl Generator<'_> {
    fn filler(&self, rng: &mut ChaCha8Rng) -> String {
        if rng.gen_bool(self.spec.noise_token_rate) {
            format!("noise{}", rng.gen_range(0..4 * self.spec.shared_vocab_size))
        } else {
            format!("w{}", rng.gen_range(0..self.spec.shared_vocab_size))
        }
    }

    /// Fact body tokens: filler with the charge's key elements at random positions.
    fn fact_body(&self, charge: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        let len = rng.gen_range(FILLER_MIN..=FILLER_MAX);
        let mut body: Vec<String> = (0..len).map(|_| self.filler(rng)).collect();
        let mut keys = self.schema.key_elements[charge].clone();
        keys.shuffle(rng);
        for key in keys {
            let at = rng.gen_range(0..=body.len());
            body.insert(at, key);
        }
        body
    }

    fn document(&self, id: String, index: usize, charge: usize, body: &[String], rng: &mut ChaCha8Rng) -> CaseDocument {
        let keys = self.schema.key_elements[charge].join(" ");
        let law = self.schema.law_ids[charge];
        let term = 6 * (charge as u32 + 1) + rng.gen_range(0..3);
        let name = &self.schema.names[charge];
        CaseDocument {
            id,
            procedure: format!("The prosecutor filed case number {index} . "),
            fact: format!("{FACT_PREFIX} {} . ", body.join(" ")),
            reasoning: format!(
                "The court held that the defendant {keys} , the facts are clear and the evidence is sufficient . "
            ),
            decision: format!(
                "According to law {law} , the defendant committed {name} and was sentenced to {term} months . "
            ),
            tail: format!("Presiding judge j{} .", rng.gen_range(0..50)),
            charge_label: Some(name.clone()),
            law_ids: Some(vec![law]),
            term_months: Some(term),
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let schema = ChargeSchema::new(spec);
    let gen = Generator {
        spec,
        schema: &schema,
    };
    let pairs = spec.num_pairs();
    let originals = spec.num_documents - pairs;
    let mut docs = Vec::with_capacity(spec.num_documents);
    let mut twins = Vec::with_capacity(pairs);
    for i in 0..originals {
        let mut rng = SeedHasher::new(spec.seed).str("doc").u64(i as u64).rng();
        let charge = i % spec.num_charges;
        let body = gen.fact_body(charge, &mut rng);
        let id = format!("case{:05}", docs.len());
        docs.push(gen.document(id.clone(), docs.len(), charge, &body, &mut rng));
        if i < pairs {
            let other = schema.partner(charge);
            let from = schema.key_elements[charge].last().unwrap();
            let to = schema.key_elements[other].last().unwrap();
            let twin_body: Vec<String> = body
                .iter()
                .map(|t| if t == from { to.clone() } else { t.clone() })
                .collect();
            let twin_id = format!("case{:05}", docs.len());
            docs.push(gen.document(twin_id.clone(), docs.len(), other, &twin_body, &mut rng));
            twins.push((id, twin_id));
        }
    }
    Ok(SyntheticCorpus {
        docs,
        twins,
        schema,
    })
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<Vec<CaseDocument>> {
    generate_synthetic(spec).map(|c| c.docs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticQuery {
    pub id: String,
    pub text: String,
    /// Document whose fact the query was derived from (grade 2).
    pub source: String,
    /// Its confusable twin (not relevant).
    pub twin: String,
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub corpus: SyntheticCorpus,
    pub queries: Vec<SyntheticQuery>,
    pub qrels: QrelSet,
}

/// Corpus plus one query per twin pair (up to `max_queries`).
///
/// A query restates the source document's fact with about half of the filler
/// resampled; key elements are kept. The source is graded 2, every other
/// document with the same charge 1, and the twin is left unjudged (0).
pub fn generate_synthetic_benchmark(spec: &SyntheticSpec, max_queries: usize) -> Result<SyntheticBenchmark> {
    let corpus = generate_synthetic(spec)?;
    let keys = corpus.schema.all_key_elements();
    let prefix_len = tokenize(FACT_PREFIX).len();
    let gen = Generator {
        spec,
        schema: &corpus.schema,
    };
    let mut queries = Vec::new();
    let mut qrels = QrelSet::default();
    for (i, (source, twin)) in corpus.twins.iter().take(max_queries).enumerate() {
        let mut rng = SeedHasher::new(spec.seed).str("query").u64(i as u64).rng();
        let doc = corpus.docs.iter().find(|d| &d.id == source).unwrap();
        let tokens = tokenize(&doc.fact);
        let body: Vec<String> = tokens[prefix_len..]
            .iter()
            .map(|t| {
                if !keys.contains(t.as_str()) && rng.gen_bool(0.5) {
                    gen.filler(&mut rng)
                } else {
                    t.clone()
                }
            })
            .collect();
        let id = format!("q{i:04}");
        for other in &corpus.docs {
            if other.id == *source {
                qrels.insert(&id, &other.id, 2);
            } else if other.charge_label == doc.charge_label {
                qrels.insert(&id, &other.id, 1);
            }
        }
        queries.push(SyntheticQuery {
            id,
            text: format!("{FACT_PREFIX} {}", body.join(" ")),
            source: source.clone(),
            twin: twin.clone(),
        });
    }
    Ok(SyntheticBenchmark {
        corpus,
        queries,
        qrels,
    })
}
