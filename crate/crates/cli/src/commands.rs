use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use lexcase_core::corpus::{generate_synthetic, generate_synthetic_benchmark, load_corpus, save_corpus, segment_document, Fallback};
use lexcase_core::evalkit::{self, fisher_randomization, knn_purity};
use lexcase_core::finetune::{self, load_triples, mine_hard_negatives, save_triples};
use lexcase_core::model::retrieval_input;
use lexcase_core::numerics::{AdamW, CHECKPOINT_MAGIC};
use lexcase_core::pretrain::{self, sweep_cells, DecisionMaskMode, Probe, SweepAxis, DECODER_DEPTHS, MASK_GRID_DECODER, MASK_GRID_ENCODER};
use lexcase_core::retrieval::{build_dense_index, build_lexical_index, dense_run, lexical_run, load_queries, read_run, save_queries, write_run};
use lexcase_core::textproc::build_vocab;
use lexcase_core::{
    Ablation, CaseDocument, CorpusStats, DocumentSide, EmbeddingIndex, FinetuneConfig, InvertedIndex, LexicalModel, Metric, ModelConfig,
    PretrainConfig, Precision, QrelSet, Query, SegmentationRules, StructuredCaseModel, SyntheticSpec, Vocabulary,
};

use crate::cli::*;
use crate::output::RunDir;
use crate::UsageError;

const VOCAB_MIN_FREQ: usize = 2;
const VOCAB_MAX_SIZE: usize = 30000;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Fails before any work when a referenced input is missing.
fn require<'a>(paths: impl IntoIterator<Item = &'a Path>) -> anyhow::Result<()> {
    for p in paths {
        if !p.exists() {
            bail!(lexcase_core::Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("input {} does not exist", p.display()),
            )));
        }
    }
    Ok(())
}

fn opt(p: &Option<PathBuf>) -> Option<&Path> {
    p.as_deref()
}

pub fn run(cmd: &Command) -> anyhow::Result<PathBuf> {
    match cmd {
        Command::GenCorpus(a) => gen_corpus(cmd, a),
        Command::Segment(a) => segment(cmd, a),
        Command::BuildVocab(a) => vocab_cmd(cmd, a),
        Command::Pretrain(a) => pretrain_cmd(cmd, a),
        Command::Finetune(a) => finetune_cmd(cmd, a),
        Command::MineNegatives(a) => mine(cmd, a),
        Command::Index(a) => index(cmd, a),
        Command::Search(a) => search(cmd, a),
        Command::Evaluate(a) => evaluate(cmd, a),
        Command::Sweep(a) => sweep(cmd, a),
        Command::ProbePurity(a) => probe(cmd, a),
        Command::ExportEmbeddings(a) => export(cmd, a),
    }
}

/// Staging directory holding the resolved-config snapshot.
fn start(cmd: &Command, out: &Path) -> anyhow::Result<RunDir> {
    let run = RunDir::create(out)?;
    run.write_json("config.json", cmd)?;
    Ok(run)
}

fn gen_corpus(cmd: &Command, a: &GenCorpusArgs) -> anyhow::Result<PathBuf> {
    let spec = SyntheticSpec {
        num_documents: a.num_documents,
        num_charges: a.num_charges,
        key_elements_per_charge: a.key_elements,
        shared_vocab_size: a.shared_vocab,
        noise_token_rate: a.noise_rate,
        seed: a.seed,
        confusable_pair_rate: a.pair_rate,
    };
    spec.validate()?;
    let run = start(cmd, &a.out)?;
    let corpus = if a.queries > 0 {
        let bench = generate_synthetic_benchmark(&spec, a.queries)?;
        let queries: Vec<Query> = bench.queries.iter().map(|q| Query { id: q.id.clone(), text: q.text.clone() }).collect();
        save_queries(&queries, &run.path("queries.jsonl"))?;
        bench.qrels.save(&run.path("qrels.tsv"))?;
        bench.corpus
    } else {
        generate_synthetic(&spec)?
    };
    save_corpus(&corpus.docs, &run.path("corpus.jsonl"))?;
    let twins: String = corpus.twins.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect();
    run.write("twins.tsv", twins)?;
    run.commit()
}

#[derive(Deserialize)]
struct RawDoc {
    id: String,
    text: String,
}

fn segment(cmd: &Command, a: &SegmentArgs) -> anyhow::Result<PathBuf> {
    require([a.input.as_path()].into_iter().chain(opt(&a.rules)))?;
    let mut rules = match &a.rules {
        Some(p) => serde_json::from_str::<SegmentationRules>(&fs::read_to_string(p)?)
            .map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => SegmentationRules::default(),
    };
    if a.strict {
        rules.fallback = Fallback::Strict;
    }
    rules.validate()?;
    let reader = BufReader::new(fs::File::open(&a.input)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDoc = serde_json::from_str(&line).map_err(|e| lexcase_core::Error::Parse {
            path: a.input.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let mut doc = segment_document(&raw.text, &rules).with_context(|| format!("document {}", raw.id))?;
        doc.id = raw.id;
        docs.push(doc);
    }
    let run = start(cmd, &a.out)?;
    save_corpus(&docs, &run.path("corpus.jsonl"))?;
    run.commit()
}

fn make_vocab(docs: &[CaseDocument], min_freq: usize, max_size: usize) -> anyhow::Result<Vocabulary> {
    Ok(build_vocab(docs.iter().map(CaseDocument::render), min_freq, max_size)?)
}

fn vocab_cmd(cmd: &Command, a: &BuildVocabArgs) -> anyhow::Result<PathBuf> {
    require([a.corpus.as_path()])?;
    if a.min_freq == 0 {
        return Err(usage("min-freq must be at least 1"));
    }
    let docs = load_corpus(&a.corpus)?;
    let vocab = make_vocab(&docs, a.min_freq, a.max_size)?;
    let encoded: Vec<_> = docs.iter().map(|d| vocab.encode(&d.render())).collect();
    let stats = CorpusStats::from_docs(&encoded);
    let run = start(cmd, &a.out)?;
    vocab.save(&run.path("vocab.txt"))?;
    stats.save(&run.path("stats.json"))?;
    run.commit()
}

fn model_config(m: &ModelArgs) -> ModelConfig {
    ModelConfig {
        vocab_size: 0,
        d_model: m.d_model,
        n_heads: m.n_heads,
        n_encoder_layers: m.encoder_layers,
        n_decoder_layers: m.decoder_layers,
        d_ff: m.d_ff,
        max_len: m.max_len,
        dropout: m.dropout,
        tie_output_embeddings: !m.untied_head,
        shared_decoder: false,
        init_std: m.init_std,
        precision: if m.f32 { Precision::F32 } else { Precision::F64 },
    }
}

fn pretrain_config(t: &TrainArgs) -> anyhow::Result<PretrainConfig> {
    let cfg = PretrainConfig {
        encoder_mask_ratio: t.encoder_ratio,
        decoder_mask_ratio: t.decoder_ratio,
        decision_mask_mode: t.decision_mode.parse::<DecisionMaskMode>()?,
        decision_mask_ratio: t.decision_ratio,
        batch_size: t.batch_size,
        epochs: t.epochs,
        max_steps: t.max_steps,
        base_lr: t.lr,
        warmup_ratio: t.warmup,
        seed: t.seed,
        ablation: t.ablation.parse::<Ablation>()?,
        optimizer: AdamW {
            weight_decay: t.weight_decay,
            ..AdamW::default()
        },
        checkpoint_dir: None,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Model and training configs validated against a placeholder vocabulary size.
fn training_configs(m: &ModelArgs, t: &TrainArgs) -> anyhow::Result<(ModelConfig, PretrainConfig)> {
    let mc = model_config(m);
    ModelConfig { vocab_size: usize::MAX, ..mc.clone() }.validate()?;
    Ok((mc, pretrain_config(t)?))
}

fn corpus_and_vocab(corpus: &Path, vocab: &Option<PathBuf>) -> anyhow::Result<(Vec<CaseDocument>, Vocabulary)> {
    let docs = load_corpus(corpus)?;
    let vocab = match vocab {
        Some(p) => Vocabulary::load(p)?,
        None => make_vocab(&docs, VOCAB_MIN_FREQ, VOCAB_MAX_SIZE)?,
    };
    Ok((docs, vocab))
}

fn pretrain_cmd(cmd: &Command, a: &PretrainArgs) -> anyhow::Result<PathBuf> {
    require([a.corpus.as_path()].into_iter().chain(opt(&a.vocab)))?;
    let (mc, mut pc) = training_configs(&a.model, &a.train)?;
    let (docs, vocab) = corpus_and_vocab(&a.corpus, &a.vocab)?;
    if docs.is_empty() {
        bail!(lexcase_core::Error::EmptyCorpus);
    }
    let run = start(cmd, &a.out)?;
    fs::create_dir(run.path("epochs"))?;
    pc.checkpoint_dir = Some(run.path("epochs"));
    let (model, log) = pretrain::pretrain(&docs, &vocab, mc, &pc)?;
    pretrain::checkpoint(&model, &vocab, &pc, log.records.len())?.save(&run.path("model.ckpt"))?;
    run.write("train_log.csv", log.to_csv())?;
    if let (Some(f), Some(l)) = (log.first(), log.last()) {
        log::info!("{} steps, l_total {:.4} -> {:.4}", log.records.len(), f.l_total, l.l_total);
    }
    run.commit()
}

fn finetune_cmd(cmd: &Command, a: &FinetuneArgs) -> anyhow::Result<PathBuf> {
    require([&a.checkpoint, &a.corpus, &a.queries, &a.triples].map(PathBuf::as_path))?;
    let mut fc = FinetuneConfig {
        queries_per_batch: a.batch_queries,
        negatives: a.negatives,
        epochs: a.epochs,
        base_lr: a.lr,
        warmup_ratio: a.warmup,
        seed: a.seed,
        temperature: a.temperature,
        document_side: a.side.into(),
        optimizer: AdamW {
            weight_decay: a.weight_decay,
            ..AdamW::default()
        },
        checkpoint_dir: None,
    };
    fc.validate()?;
    let (model, vocab, _) = StructuredCaseModel::load(&a.checkpoint)?;
    let docs = load_corpus(&a.corpus)?;
    let queries = load_queries(&a.queries)?;
    let triples = load_triples(&a.triples)?;
    let run = start(cmd, &a.out)?;
    fs::create_dir(run.path("epochs"))?;
    fc.checkpoint_dir = Some(run.path("epochs"));
    let (tuned, log) = finetune::finetune(&model, &vocab, &docs, &queries, &triples, &fc)?;
    finetune::checkpoint(&tuned, &vocab, &fc)?.save(&run.path("model.ckpt"))?;
    run.write("finetune_log.csv", log.to_csv())?;
    run.commit()
}

fn mine(cmd: &Command, a: &MineArgs) -> anyhow::Result<PathBuf> {
    require([a.corpus.as_path(), &a.queries, &a.qrels].into_iter().chain(opt(&a.index)))?;
    if a.top_k == 0 || a.negatives == 0 {
        return Err(usage("top-k and negatives must be at least 1"));
    }
    let queries = load_queries(&a.queries)?;
    let qrels = QrelSet::load(&a.qrels)?;
    let index = match &a.index {
        Some(p) => InvertedIndex::load(p)?,
        None => build_lexical_index(&load_corpus(&a.corpus)?, a.side.into())?,
    };
    let outcome = mine_hard_negatives(&queries, Some(&index), &qrels, a.top_k, a.negatives)?;
    let run = start(cmd, &a.out)?;
    save_triples(&outcome.triples, &run.path("triples.tsv"))?;
    run.write_json(
        "mining.json",
        &serde_json::json!({
            "triples": outcome.triples.len(),
            "skipped_no_positive": outcome.skipped_no_positive,
            "skipped_no_negative": outcome.skipped_no_negative,
        }),
    )?;
    run.commit()
}

fn index(cmd: &Command, a: &IndexArgs) -> anyhow::Result<PathBuf> {
    require([a.corpus.as_path()].into_iter().chain(opt(&a.checkpoint)))?;
    match a.kind {
        IndexKind::Lexical => {
            let idx = build_lexical_index(&load_corpus(&a.corpus)?, a.side.into())?;
            let run = start(cmd, &a.out)?;
            idx.save(&run.path("lexical.json"))?;
            run.commit()
        }
        IndexKind::Dense => {
            let ckpt_path = a.checkpoint.as_ref().ok_or_else(|| usage("index dense needs --checkpoint"))?;
            let (model, vocab, ckpt) = StructuredCaseModel::load(ckpt_path)?;
            let docs = load_corpus(&a.corpus)?;
            let idx = build_dense_index(&model, &vocab, &docs, a.side.into(), &ckpt.fingerprint())?;
            let run = start(cmd, &a.out)?;
            idx.save(&run.path("dense.idx"))?;
            run.commit()
        }
    }
}

fn is_checkpoint_file(path: &Path) -> anyhow::Result<bool> {
    let mut magic = [0u8; 8];
    let mut f = fs::File::open(path)?;
    Ok(f.read(&mut magic)? == magic.len() && &magic == CHECKPOINT_MAGIC)
}

fn search(cmd: &Command, a: &SearchArgs) -> anyhow::Result<PathBuf> {
    require([a.index.as_path(), &a.queries].into_iter().chain(opt(&a.checkpoint)))?;
    if a.k == 0 {
        return Err(usage("k must be at least 1"));
    }
    let queries = load_queries(&a.queries)?;
    let lists = if is_checkpoint_file(&a.index)? {
        let ckpt_path = a.checkpoint.as_ref().ok_or_else(|| usage("dense search needs --checkpoint"))?;
        let index = EmbeddingIndex::load(&a.index)?;
        let (model, vocab, ckpt) = StructuredCaseModel::load(ckpt_path)?;
        if !index.source_fingerprint.is_empty() && index.source_fingerprint != ckpt.fingerprint() {
            return Err(usage(format!(
                "index {} was built with a different checkpoint than {}",
                a.index.display(),
                ckpt_path.display()
            )));
        }
        dense_run(&model, &vocab, &index, &queries, a.k)?
    } else {
        let model = match a.scorer {
            LexicalScorer::Bm25 => LexicalModel::Bm25 { k1: a.k1, b: a.b },
            LexicalScorer::Ql => LexicalModel::QueryLikelihood { mu: a.mu },
        };
        lexical_run(&InvertedIndex::load(&a.index)?, &queries, model, a.k)
    };
    let run = start(cmd, &a.out)?;
    write_run(&lists, &a.tag, &run.path("run.trec"))?;
    run.commit()
}

fn parse_metrics(names: &[String]) -> anyhow::Result<Vec<Metric>> {
    if names.is_empty() {
        return Err(usage("at least one metric is needed"));
    }
    names.iter().map(|n| n.trim().parse::<Metric>().map_err(Into::into)).collect()
}

#[derive(Serialize)]
struct Significance {
    metric: String,
    run: f64,
    baseline: f64,
    queries: usize,
    p_value: f64,
}

fn evaluate(cmd: &Command, a: &EvaluateArgs) -> anyhow::Result<PathBuf> {
    require([a.run.as_path(), &a.qrels].into_iter().chain(opt(&a.baseline)))?;
    let metrics = parse_metrics(&a.metrics)?;
    if a.baseline.is_some() && a.iterations == 0 {
        return Err(usage("iterations must be at least 1"));
    }
    let qrels = QrelSet::load(&a.qrels)?;
    let report = evalkit::evaluate(&read_run(&a.run)?, &qrels, &metrics);
    let mut tests = Vec::new();
    if let Some(base) = &a.baseline {
        let other = evalkit::evaluate(&read_run(base)?, &qrels, &metrics);
        let common: Vec<&String> = report.per_query.keys().filter(|q| other.per_query.contains_key(*q)).collect();
        for (i, m) in metrics.iter().enumerate() {
            let x: Vec<f64> = common.iter().map(|q| report.per_query[*q][i]).collect();
            let y: Vec<f64> = common.iter().map(|q| other.per_query[*q][i]).collect();
            let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
            tests.push(Significance {
                metric: m.to_string(),
                run: mean(&x),
                baseline: mean(&y),
                queries: common.len(),
                p_value: fisher_randomization(&x, &y, a.iterations, a.seed)?,
            });
        }
    }
    let means: BTreeMap<String, f64> = metrics.iter().zip(&report.means).map(|(m, v)| (m.to_string(), *v)).collect();
    let run = start(cmd, &a.out)?;
    run.write("report.csv", report.to_csv())?;
    run.write_json(
        "report.json",
        &serde_json::json!({
            "means": means,
            "num_queries": report.num_queries,
            "no_relevant": report.no_relevant,
            "missing": report.missing,
            "significance": tests,
        }),
    )?;
    run.commit()
}

fn sweep(cmd: &Command, a: &SweepArgs) -> anyhow::Result<PathBuf> {
    require(
        [a.corpus.as_path()]
            .into_iter()
            .chain(opt(&a.vocab))
            .chain(opt(&a.queries))
            .chain(opt(&a.qrels)),
    )?;
    let (mc, pc) = training_configs(&a.model, &a.train)?;
    let axis = match a.axis {
        Axis::EncoderRatio => SweepAxis::EncoderRatio,
        Axis::DecoderRatio => SweepAxis::DecoderRatio,
        Axis::DecoderLayers => SweepAxis::DecoderLayers,
        Axis::MaskGrid => SweepAxis::MaskGrid,
    };
    let values: Vec<f64> = match (a.values.is_empty(), axis) {
        (false, _) => a.values.clone(),
        (true, SweepAxis::EncoderRatio) => MASK_GRID_ENCODER.to_vec(),
        (true, SweepAxis::DecoderRatio) => MASK_GRID_DECODER.to_vec(),
        (true, SweepAxis::DecoderLayers) => DECODER_DEPTHS.iter().map(|d| *d as f64).collect(),
        (true, SweepAxis::MaskGrid) => Vec::new(),
    };
    let cells = sweep_cells(axis, &values, (&a.grid_encoder, &a.grid_decoder), &mc, &pc)?;
    for c in &cells {
        PretrainConfig {
            encoder_mask_ratio: c.encoder_ratio,
            decoder_mask_ratio: c.decoder_ratio,
            ..pc.clone()
        }
        .validate()?;
    }
    if a.probe_k == 0 {
        return Err(usage("probe-k must be at least 1"));
    }
    let (docs, vocab) = corpus_and_vocab(&a.corpus, &a.vocab)?;
    let (queries, qrels) = match a.probe {
        ProbeKind::Purity => (Vec::new(), QrelSet::default()),
        ProbeKind::Ndcg => {
            let (Some(q), Some(r)) = (&a.queries, &a.qrels) else {
                return Err(usage("the ndcg probe needs --queries and --qrels"));
            };
            (load_queries(q)?, QrelSet::load(r)?)
        }
    };
    let probe = match a.probe {
        ProbeKind::Purity => Probe::Purity { docs: &docs, k: a.probe_k },
        ProbeKind::Ndcg => Probe::Ndcg {
            docs: &docs,
            queries: &queries,
            qrels: &qrels,
            k: a.probe_k,
            side: a.side.into(),
        },
    };
    let table = pretrain::sweep(&docs, &vocab, &mc, &pc, axis, &cells, probe)?;
    let run = start(cmd, &a.out)?;
    run.write("sweep.csv", table.to_csv())?;
    run.commit()
}

fn labelled_embeddings(model: &StructuredCaseModel, vocab: &Vocabulary, docs: &[CaseDocument], side: DocumentSide) -> anyhow::Result<Vec<Vec<f64>>> {
    let inputs: Vec<_> = docs.iter().map(|d| retrieval_input(d, vocab, side, model.config.max_len)).collect();
    Ok(model.embed_many(&inputs)?)
}

fn probe(cmd: &Command, a: &ProbeArgs) -> anyhow::Result<PathBuf> {
    require([a.checkpoint.as_path(), &a.corpus])?;
    if a.k == 0 {
        return Err(usage("k must be at least 1"));
    }
    let (model, vocab, _) = StructuredCaseModel::load(&a.checkpoint)?;
    let docs: Vec<CaseDocument> = load_corpus(&a.corpus)?.into_iter().filter(|d| d.charge_label.is_some()).collect();
    let emb = labelled_embeddings(&model, &vocab, &docs, DocumentSide::Fact)?;
    let labels: Vec<&str> = docs.iter().filter_map(|d| d.charge_label.as_deref()).collect();
    let purity = knn_purity(&emb, &labels, a.k)?;
    let run = start(cmd, &a.out)?;
    run.write_json("purity.json", &serde_json::json!({ "k": a.k, "documents": docs.len(), "purity": purity }))?;
    run.commit()
}

fn export(cmd: &Command, a: &ExportArgs) -> anyhow::Result<PathBuf> {
    require([a.checkpoint.as_path(), &a.corpus])?;
    let (model, vocab, _) = StructuredCaseModel::load(&a.checkpoint)?;
    let docs = load_corpus(&a.corpus)?;
    let emb = labelled_embeddings(&model, &vocab, &docs, a.side.into())?;
    let mut out = String::new();
    for (d, v) in docs.iter().zip(&emb) {
        out.push_str(&d.id);
        for x in v {
            out.push('\t');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    let run = start(cmd, &a.out)?;
    run.write("embeddings.tsv", out)?;
    run.commit()
}
