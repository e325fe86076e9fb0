//! End-to-end runs and the stage helpers shared with the subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use zsl_core::baseline::{map_corpus_document_bigrams, select_top_unique_bigrams, BigramFeatureSet};
use zsl_core::embedding::{train_skipgram, EmbeddingMatrix};
use zsl_core::eval::{median_probability, roc_curve, threshold_sweep, triage_query, Metric, COMBINED};
use zsl_core::mlp::{predict, train, TrainConfig};
use zsl_core::space::{build_semantic_space, map_corpus_document, FeatureVector, SemanticSpace};
use zsl_core::text::{preprocess, tokenize, SplitLexicon};
use zsl_core::tfidf::{feature_words, FeatureSet, MeanOver};
use zsl_core::{Corpus, Label};

use crate::artifact::{read_json, write_json};
use crate::config::{EvalConfig, PipelineConfig};
use crate::error::{Error, Result};
use crate::formats::{
    load_corpus, load_labels, save_corpus, save_embeddings, save_model, save_probs, save_report, save_roc,
    save_vectors, stem, ModelArtifact, ProbRow, ReportArtifact, TriageArtifact,
};
use crate::manifest::{digest, display_path, unix_now, ArtifactDigest, RunManifest, StageRecord};

pub const LEXICON: &str = "zsl-lexicon";
pub const FEATURES: &str = "zsl-features";
pub const SPACE: &str = "zsl-space";
pub const BIGRAMS: &str = "zsl-bigrams";
pub const TRIAGE: &str = "zsl-triage";

/// The eight stages every run records, in order.
pub const STAGES: [&str; 8] = ["prep", "features", "embed", "space", "map", "train", "classify", "eval"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturesArtifact {
    pub pos_corpus: String,
    pub neg_corpus: String,
    pub averaging: MeanOver,
    pub pos_vocabulary: usize,
    pub neg_vocabulary: usize,
    pub features: FeatureSet,
}

pub fn save_lexicon(path: &Path, lexicon: &SplitLexicon) -> Result<()> {
    write_json(path, LEXICON, lexicon)
}

pub fn load_lexicon(path: &Path) -> Result<SplitLexicon> {
    read_json(path, LEXICON)
}

pub fn save_features(path: &Path, f: &FeaturesArtifact) -> Result<()> {
    write_json(path, FEATURES, f)
}

pub fn load_features(path: &Path) -> Result<FeaturesArtifact> {
    read_json(path, FEATURES)
}

pub fn save_space(path: &Path, space: &SemanticSpace) -> Result<()> {
    write_json(path, SPACE, space)
}

pub fn load_space(path: &Path) -> Result<SemanticSpace> {
    read_json(path, SPACE)
}

pub fn save_bigrams(path: &Path, set: &BigramFeatureSet) -> Result<()> {
    write_json(path, BIGRAMS, set)
}

pub fn load_bigrams(path: &Path) -> Result<BigramFeatureSet> {
    read_json(path, BIGRAMS)
}

/// Lexicon built from the raw vocabulary of `corpora`.
pub fn build_lexicon(corpora: &[&Corpus], min_len: usize) -> SplitLexicon {
    let vocab: BTreeSet<String> = corpora
        .iter()
        .flat_map(|c| c.documents())
        .collect::<Vec<_>>()
        .par_iter()
        .map(|d| tokenize(&d.text))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    SplitLexicon::from_vocabulary(vocab.iter().map(String::as_str), min_len)
}

pub fn preprocess_corpus(corpus: &mut Corpus, lexicon: &SplitLexicon) -> Result<()> {
    let tokens: Vec<Vec<String>> = corpus
        .documents()
        .par_iter()
        .map(|d| preprocess(&d.text, lexicon))
        .collect();
    corpus.set_tokens(tokens)?;
    Ok(())
}

/// Tokenizes (without concatenation splitting) when a loaded corpus carries
/// no tokens at all.
pub fn ensure_tokens(corpus: &mut Corpus) -> Result<()> {
    if corpus.documents().iter().all(|d| d.tokens.is_empty()) {
        warn!("corpus {} has no tokens; tokenizing raw text", corpus.name);
        preprocess_corpus(corpus, &SplitLexicon::empty())?;
    }
    Ok(())
}

/// Builds the space and records where its inputs came from.
pub fn build_space(
    features: &FeaturesArtifact,
    emb: &EmbeddingMatrix,
    m: usize,
    window: usize,
) -> Result<SemanticSpace> {
    let mut space = build_semantic_space(&features.features, emb, m, window)?;
    if !space.dropped().is_empty() {
        warn!(
            "{} features missing from the embedding vocabulary were dropped",
            space.dropped().len()
        );
    }
    space.set_provenance("n", features.features.n_requested.to_string());
    space.set_provenance("averaging", format!("{:?}", features.averaging));
    space.set_provenance("dim", emb.dim().to_string());
    space.set_provenance("embedding_seed", emb.config.seed.to_string());
    Ok(space)
}

pub fn map_corpus(corpus: &Corpus, space: &SemanticSpace) -> Vec<FeatureVector> {
    corpus
        .documents()
        .par_iter()
        .map(|d| map_corpus_document(d, space))
        .collect()
}

pub fn map_corpus_bigrams(corpus: &Corpus, set: &BigramFeatureSet) -> Vec<FeatureVector> {
    corpus
        .documents()
        .par_iter()
        .map(|d| map_corpus_document_bigrams(d, set))
        .collect()
}

pub fn space_feature_names(space: &SemanticSpace) -> Vec<String> {
    space.features().iter().map(|f| f.word.clone()).collect()
}

pub fn bigram_feature_names(set: &BigramFeatureSet) -> Vec<String> {
    set.bigrams
        .iter()
        .map(|b| format!("{} {}", b.first, b.second))
        .collect()
}

/// Ground truth for each probability row, from `labels` or else from the
/// document's own label.
pub fn align_labels(rows: &[ProbRow], labels: &BTreeMap<String, Label>) -> Result<Vec<Label>> {
    rows.iter()
        .map(|r| {
            labels.get(&r.id).copied().ok_or_else(|| Error::Format {
                path: PathBuf::from(&r.subset),
                message: format!("no ground-truth label for document {}", r.id),
            })
        })
        .collect()
}

/// Threshold sweep over the subsets in `rows` (in first-appearance order),
/// plus per-subset medians.
pub fn evaluate(model: &str, rows: &[ProbRow], labels: &[Label], eval: &EvalConfig) -> Result<ReportArtifact> {
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: BTreeMap<&str, (Vec<f64>, Vec<Label>)> = BTreeMap::new();
    for (r, l) in rows.iter().zip(labels) {
        if !grouped.contains_key(r.subset.as_str()) {
            order.push(&r.subset);
        }
        let g = grouped.entry(&r.subset).or_default();
        g.0.push(r.probability);
        g.1.push(*l);
    }
    let mut medians = BTreeMap::new();
    for (name, (p, _)) in &grouped {
        medians.insert(name.to_string(), median_probability(p)?);
    }
    let mut taus = eval.taus.clone();
    if let Some(s) = &eval.median_threshold_subset {
        let m = medians
            .get(s)
            .ok_or_else(|| Error::Config(format!("eval.median_threshold_subset {s:?} is not a test subset")))?;
        taus.push(*m);
    }
    let subsets: Vec<(&str, &[f64], &[Label])> = order
        .iter()
        .map(|n| {
            let g = &grouped[n];
            (*n, g.0.as_slice(), g.1.as_slice())
        })
        .collect();
    let report = threshold_sweep(&subsets, &taus)?;
    Ok(ReportArtifact {
        model: model.to_string(),
        report,
        medians,
    })
}

/// The pooled AUC of a report (the combined row when there are several subsets).
pub fn headline_auc(report: &ReportArtifact) -> Option<f64> {
    let rows = &report.report.auc;
    let row = rows.iter().find(|r| r.subset == COMBINED).or(rows.first())?;
    match row.auc {
        Metric::Value(v) => Some(v),
        Metric::Undefined => None,
    }
}

pub fn probability_rows(subsets: &[(&Corpus, Vec<f64>)]) -> Vec<ProbRow> {
    subsets
        .iter()
        .flat_map(|(c, p)| {
            c.documents().iter().zip(p).map(|(d, &probability)| ProbRow {
                id: d.id.clone(),
                subset: c.name.clone(),
                probability,
            })
        })
        .collect()
}

pub struct RunOutput {
    pub manifest: RunManifest,
    pub report: ReportArtifact,
    pub baseline: Option<ReportArtifact>,
    pub probs: Vec<ProbRow>,
    pub baseline_probs: Option<Vec<ProbRow>>,
    pub auc: Option<f64>,
    pub baseline_auc: Option<f64>,
}

struct StageCtx<'a> {
    config_dir: &'a Path,
    out_dir: &'a Path,
    inputs: Vec<ArtifactDigest>,
    outputs: Vec<ArtifactDigest>,
    notes: BTreeMap<String, Value>,
}

impl StageCtx<'_> {
    /// Resolves a path from the configuration and records its digest under
    /// the name it was given.
    fn config_input(&mut self, given: &Path) -> Result<PathBuf> {
        let path = if given.is_absolute() {
            given.to_path_buf()
        } else {
            self.config_dir.join(given)
        };
        self.inputs.push(digest(&path, display_path(given, Path::new("")))?);
        Ok(path)
    }

    fn input(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(rel);
        self.inputs.push(digest(&path, rel.to_string())?);
        Ok(path)
    }

    fn output_path(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(digest(path, display_path(path, self.out_dir))?);
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        self.notes
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }
}

struct Runner<'a> {
    config_dir: &'a Path,
    out_dir: &'a Path,
    manifest: RunManifest,
}

impl Runner<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut StageCtx) -> Result<T>) -> Result<T> {
        info!("stage {name}");
        let started = unix_now();
        let mut ctx = StageCtx {
            config_dir: self.config_dir,
            out_dir: self.out_dir,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: BTreeMap::new(),
        };
        let result = f(&mut ctx);
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            inputs: ctx.inputs,
            outputs: ctx.outputs,
            started_unix: started,
            finished_unix: unix_now(),
            notes: ctx.notes,
        });
        result.map_err(|e| {
            let e = e.in_stage(name);
            self.manifest.status = format!("failed: {e}");
            self.manifest.finished_unix = unix_now();
            if let Err(w) = self.manifest.save(&self.out_dir.join("manifest.json")) {
                warn!("could not write manifest for failed run: {w}");
            }
            e
        })
    }
}

struct Prepared {
    pos: Corpus,
    neg: Corpus,
    tests: Vec<Corpus>,
    labels: Option<BTreeMap<String, Label>>,
}

fn train_and_classify(
    ctx: &mut StageCtx,
    names: Vec<String>,
    pos: &[FeatureVector],
    neg: &[FeatureVector],
    config: &TrainConfig,
    seed: u64,
    model_rel: &str,
) -> Result<ModelArtifact> {
    let (model, run) = train(pos, neg, config, seed)?;
    ctx.note("epochs_run", run.history.len());
    ctx.note("best_epoch", run.best_epoch);
    ctx.note("test_partition_auc", run.test_auc);
    let artifact = ModelArtifact {
        features: names,
        model,
        adam: config.adam,
        run,
    };
    let path = ctx.output_path(model_rel);
    save_model(&path, &artifact)?;
    ctx.output(&path)?;
    Ok(artifact)
}

/// Runs every stage in order, writing artifacts and `manifest.json` under
/// `out_dir`. Relative corpus paths are resolved against `config_dir`.
pub fn run_pipeline(config: &PipelineConfig, config_dir: &Path, out_dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    config.require_corpora()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_stages(config, config_dir, out_dir))
}

fn run_stages(cfg: &PipelineConfig, config_dir: &Path, out_dir: &Path) -> Result<RunOutput> {
    let mut runner = Runner {
        config_dir,
        out_dir,
        manifest: RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            threads: cfg.threads,
            deterministic: true,
            config: serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?,
            started_unix: unix_now(),
            finished_unix: 0,
            status: "running".into(),
            stages: Vec::new(),
            summary: BTreeMap::new(),
        },
    };
    let seed = cfg.seed;

    let prepared = runner.stage("prep", |ctx| {
        let pos = load_corpus(&ctx.config_input(&cfg.corpora.pos)?, None, Some(Label::Positive))?;
        let neg = load_corpus(&ctx.config_input(&cfg.corpora.neg)?, None, Some(Label::Negative))?;
        let mut tests = Vec::new();
        for p in &cfg.corpora.test {
            tests.push(load_corpus(&ctx.config_input(p)?, None, None)?);
        }
        let mut names = BTreeSet::new();
        for c in [&pos, &neg].into_iter().chain(&tests) {
            if !names.insert(c.name.clone()) {
                return Err(Error::Config(format!("two corpora share the name {:?}", c.name)));
            }
        }
        let labels = match &cfg.corpora.labels {
            Some(p) => Some(load_labels(&ctx.config_input(p)?)?),
            None => None,
        };
        let lexicon = if cfg.prep.split_concatenations {
            build_lexicon(&[&pos, &neg], cfg.prep.lexicon_min_len)
        } else {
            SplitLexicon::empty()
        };
        ctx.note("lexicon_words", lexicon.len());
        let lex_path = ctx.output_path("prep/lexicon.json");
        save_lexicon(&lex_path, &lexicon)?;
        ctx.output(&lex_path)?;
        let mut all = vec![pos, neg];
        all.extend(tests);
        for c in all.iter_mut() {
            preprocess_corpus(c, &lexicon)?;
            let path = ctx.output_path(&format!("prep/{}.jsonl", c.name));
            save_corpus(&path, c)?;
            ctx.output(&path)?;
        }
        let mut it = all.into_iter();
        let (pos, neg) = (it.next().unwrap(), it.next().unwrap());
        Ok(Prepared {
            pos,
            neg,
            tests: it.collect(),
            labels,
        })
    })?;
    let pos_rel = format!("prep/{}.jsonl", prepared.pos.name);
    let neg_rel = format!("prep/{}.jsonl", prepared.neg.name);

    let features = runner.stage("features", |ctx| {
        ctx.input(&pos_rel)?;
        ctx.input(&neg_rel)?;
        let (set, pt, nt) = feature_words(&prepared.pos, &prepared.neg, cfg.features.n, cfg.features.averaging)?;
        ctx.note("features", set.len());
        let artifact = FeaturesArtifact {
            pos_corpus: prepared.pos.name.clone(),
            neg_corpus: prepared.neg.name.clone(),
            averaging: cfg.features.averaging,
            pos_vocabulary: pt.vocab_len(),
            neg_vocabulary: nt.vocab_len(),
            features: set,
        };
        let path = ctx.output_path("features.json");
        save_features(&path, &artifact)?;
        ctx.output(&path)?;
        Ok(artifact)
    })?;

    let embeddings = runner.stage("embed", |ctx| {
        ctx.input(&pos_rel)?;
        let emb = train_skipgram(&prepared.pos, &cfg.embed.skipgram(seed))?;
        ctx.note("vocabulary", emb.len());
        ctx.note("loss_history", &emb.loss_history);
        let path = ctx.output_path("embeddings.txt");
        save_embeddings(&path, &emb)?;
        ctx.output(&path)?;
        Ok(emb)
    })?;

    let space = runner.stage("space", |ctx| {
        ctx.input("features.json")?;
        ctx.input("embeddings.txt")?;
        let space = build_space(&features, &embeddings, cfg.space.m, cfg.space.window)?;
        ctx.note("features", space.dim());
        ctx.note("dropped", space.dropped());
        let path = ctx.output_path("space.json");
        save_space(&path, &space)?;
        ctx.output(&path)?;
        Ok(space)
    })?;

    let corpora: Vec<&Corpus> = [&prepared.pos, &prepared.neg]
        .into_iter()
        .chain(&prepared.tests)
        .collect();
    let names = space_feature_names(&space);
    let vectors = runner.stage("map", |ctx| {
        ctx.input("space.json")?;
        let mut out = Vec::new();
        for c in &corpora {
            ctx.input(&format!("prep/{}.jsonl", c.name))?;
            let v = map_corpus(c, &space);
            let path = ctx.output_path(&format!("vectors/{}.jsonl", c.name));
            save_vectors(&path, &names, &v)?;
            ctx.output(&path)?;
            out.push(v);
        }
        Ok(out)
    })?;

    let model = runner.stage("train", |ctx| {
        ctx.input(&format!("vectors/{}.jsonl", prepared.pos.name))?;
        ctx.input(&format!("vectors/{}.jsonl", prepared.neg.name))?;
        train_and_classify(
            ctx,
            names.clone(),
            &vectors[0],
            &vectors[1],
            &cfg.train,
            seed,
            "model.json",
        )
    })?;

    let probs = runner.stage("classify", |ctx| {
        ctx.input("model.json")?;
        let mut per = Vec::new();
        for (c, v) in prepared.tests.iter().zip(&vectors[2..]) {
            ctx.input(&format!("vectors/{}.jsonl", c.name))?;
            per.push((c, predict(&model.model, v)?));
        }
        let rows = probability_rows(&per);
        let path = ctx.output_path("probs.csv");
        save_probs(&path, &rows)?;
        ctx.output(&path)?;
        Ok(rows)
    })?;

    let truth = truth_map(&prepared);
    let triage_subset = cfg
        .eval
        .triage_subset
        .clone()
        .unwrap_or_else(|| prepared.tests.last().unwrap().name.clone());
    let report = runner.stage("eval", |ctx| {
        ctx.input("probs.csv")?;
        if let Some(p) = &cfg.corpora.labels {
            ctx.config_input(p)?;
        }
        let labels = align_labels(&probs, &truth)?;
        let report = evaluate("zsl", &probs, &labels, &cfg.eval)?;
        for p in save_report(out_dir, "report", &report)? {
            ctx.output(&p)?;
        }
        write_roc(ctx, &probs, &labels, "roc.csv")?;
        write_triage(ctx, &prepared.tests, &probs, &triage_subset, &cfg.eval, "triage.json")?;
        ctx.note("auc", headline_auc(&report));
        Ok(report)
    })?;

    let baseline = if cfg.baseline.enabled {
        Some(runner.stage("baseline", |ctx| {
            ctx.input(&pos_rel)?;
            ctx.input(&neg_rel)?;
            let set = select_top_unique_bigrams(&prepared.pos, &prepared.neg, cfg.baseline.k)?;
            if set.shortfall() > 0 {
                warn!("only {} unique bigrams available of {} requested", set.len(), set.k);
            }
            ctx.note("bigrams", set.len());
            let path = ctx.output_path("baseline/bigrams.json");
            save_bigrams(&path, &set)?;
            ctx.output(&path)?;
            let bnames = bigram_feature_names(&set);
            let vecs: Vec<Vec<FeatureVector>> = corpora.iter().map(|c| map_corpus_bigrams(c, &set)).collect();
            for (c, v) in corpora.iter().zip(&vecs) {
                let path = ctx.output_path(&format!("baseline/vectors/{}.jsonl", c.name));
                save_vectors(&path, &bnames, v)?;
                ctx.output(&path)?;
            }
            let model = train_and_classify(ctx, bnames, &vecs[0], &vecs[1], &cfg.train, seed, "baseline/model.json")?;
            let mut per = Vec::new();
            for (c, v) in prepared.tests.iter().zip(&vecs[2..]) {
                per.push((c, predict(&model.model, v)?));
            }
            let rows = probability_rows(&per);
            let path = ctx.output_path("baseline/probs.csv");
            save_probs(&path, &rows)?;
            ctx.output(&path)?;
            let labels = align_labels(&rows, &truth)?;
            let report = evaluate("baseline", &rows, &labels, &cfg.eval)?;
            for p in save_report(&out_dir.join("baseline"), "report", &report)? {
                ctx.output(&p)?;
            }
            write_roc(ctx, &rows, &labels, "baseline/roc.csv")?;
            ctx.note("auc", headline_auc(&report));
            Ok((report, rows))
        })?)
    } else {
        None
    };

    let auc = headline_auc(&report);
    let baseline_auc = baseline.as_ref().and_then(|b| headline_auc(&b.0));
    let m = &mut runner.manifest;
    m.summary.insert("features".into(), json!(space.dim()));
    m.summary.insert("auc".into(), json!(auc));
    if cfg.baseline.enabled {
        m.summary.insert("baseline_auc".into(), json!(baseline_auc));
    }
    m.status = "ok".into();
    m.finished_unix = unix_now();
    let manifest = runner.manifest;
    manifest.save(&out_dir.join("manifest.json"))?;
    let (baseline, baseline_probs) = match baseline {
        Some((r, p)) => (Some(r), Some(p)),
        None => (None, None),
    };
    Ok(RunOutput {
        manifest,
        report,
        baseline,
        probs,
        baseline_probs,
        auc,
        baseline_auc,
    })
}

fn truth_map(p: &Prepared) -> BTreeMap<String, Label> {
    let mut out: BTreeMap<String, Label> = p
        .tests
        .iter()
        .flat_map(|c| c.documents())
        .filter_map(|d| d.weak_label.map(|l| (d.id.clone(), l)))
        .collect();
    if let Some(l) = &p.labels {
        out.extend(l.iter().map(|(k, v)| (k.clone(), *v)));
    }
    out
}

fn write_roc(ctx: &mut StageCtx, rows: &[ProbRow], labels: &[Label], rel: &str) -> Result<()> {
    let probs: Vec<f64> = rows.iter().map(|r| r.probability).collect();
    match roc_curve(&probs, labels) {
        Ok(points) => {
            let path = ctx.output_path(rel);
            save_roc(&path, &points)?;
            ctx.output(&path)
        }
        Err(zsl_core::Error::SingleClass) => {
            warn!("ground truth has a single class; no ROC curve written");
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

fn write_triage(
    ctx: &mut StageCtx,
    tests: &[Corpus],
    rows: &[ProbRow],
    subset: &str,
    eval: &EvalConfig,
    rel: &str,
) -> Result<()> {
    let corpus = tests
        .iter()
        .find(|c| c.name == subset)
        .ok_or_else(|| Error::Config(format!("eval.triage_subset {subset:?} is not a test subset")))?;
    let probs: Vec<f64> = rows
        .iter()
        .filter(|r| r.subset == subset)
        .map(|r| r.probability)
        .collect();
    let hits = triage_query(corpus, &probs, &eval.base, eval.triage_tau)?;
    ctx.note("triage_hits", hits.len());
    let artifact = TriageArtifact {
        subset: subset.to_string(),
        base: eval.base.clone(),
        tau: eval.triage_tau,
        hits,
    };
    let path = ctx.output_path(rel);
    write_json(&path, TRIAGE, &artifact)?;
    ctx.output(&path)
}

/// Name used for a corpus file when none is configured.
pub fn corpus_name(path: &Path) -> String {
    stem(path)
}
