use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use zsl_core::baseline::select_top_unique_bigrams;
use zsl_core::embedding::train_skipgram;
use zsl_core::eval::{roc_curve, triage_query};
use zsl_core::mlp::{predict, train};
use zsl_core::synth::SynthConfig;
use zsl_core::text::SplitLexicon;
use zsl_core::tfidf::feature_words;
use zsl_core::{Corpus, Label};

use zsl::artifact::{read_text, write_json};
use zsl::config::PipelineConfig;
use zsl::formats::{
    load_corpus, load_embeddings, load_labels, load_model, load_probs, load_vectors, save_corpus, save_embeddings,
    save_model, save_probs, save_report, save_roc, save_vectors, stem, ModelArtifact, ProbRow, TriageArtifact,
};
use zsl::pipeline::{
    align_labels, bigram_feature_names, build_lexicon, build_space, ensure_tokens, evaluate, headline_auc,
    load_bigrams, load_features, load_lexicon, load_space, map_corpus, map_corpus_bigrams, preprocess_corpus,
    run_pipeline, save_bigrams, save_features, save_lexicon, save_space, space_feature_names, FeaturesArtifact, TRIAGE,
};
use zsl::synth::write_synth;
use zsl::{Error, Result};

#[derive(Parser)]
#[command(
    name = "zsl",
    version,
    about = "Zero-shot document classification through a contextual semantic space"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Pipeline TOML. Stage subcommands read their hyperparameters from it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Builds the split lexicon and preprocesses corpora.
    Prep {
        #[arg(long, required_unless_present = "lexicon")]
        pos: Option<PathBuf>,
        #[arg(long, required_unless_present = "lexicon")]
        neg: Option<PathBuf>,
        /// Further corpora to preprocess with the same lexicon.
        #[arg(long)]
        test: Vec<PathBuf>,
        /// Reuses a lexicon written by an earlier `prep`.
        #[arg(long, conflicts_with_all = ["pos", "neg"])]
        lexicon: Option<PathBuf>,
    },
    /// Selects feature words by mean TF-IDF.
    Features {
        #[arg(long)]
        pos: PathBuf,
        #[arg(long)]
        neg: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Trains skip-gram embeddings.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Pairs each feature with its nearest context words.
    Space {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Maps preprocessed corpora into a semantic space.
    Map {
        #[arg(long)]
        space: PathBuf,
        #[arg(required = true)]
        corpora: Vec<PathBuf>,
    },
    /// Trains the classifier on positive and negative vectors.
    Train {
        #[arg(long)]
        pos: PathBuf,
        #[arg(long)]
        neg: PathBuf,
        /// Output file name inside the output directory.
        #[arg(long, default_value = "model.json")]
        output: String,
    },
    /// Writes class probabilities for mapped corpora.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        vectors: Vec<PathBuf>,
        #[arg(long, default_value = "probs.csv")]
        output: String,
    },
    /// Threshold sweep and AUC for a probability file.
    Eval {
        #[arg(long)]
        probs: PathBuf,
        /// Ground truth as JSONL `{id, label}`.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Corpora whose record labels serve as ground truth.
        #[arg(long)]
        corpus: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        stem: String,
        #[arg(long, default_value = "zsl")]
        model_name: String,
    },
    /// Lists documents with the base string and probability at least tau.
    Triage {
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        base: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Generates a seeded synthetic benchmark.
    Synth {
        /// Generator settings (TOML); defaults otherwise.
        #[arg(long)]
        synth_config: Option<PathBuf>,
        /// No planted signal anywhere.
        #[arg(long)]
        null: bool,
    },
    /// Runs every stage from a pipeline config.
    Run,
    /// Selects the top unique bigrams of the positive corpus.
    BaselineFeatures {
        #[arg(long)]
        pos: PathBuf,
        #[arg(long)]
        neg: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Maps corpora onto bigram counts.
    BaselineMap {
        #[arg(long)]
        bigrams: PathBuf,
        #[arg(required = true)]
        corpora: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(g: &Global, need_corpora: bool) -> Result<(PipelineConfig, PathBuf)> {
    let (mut cfg, dir) = match &g.config {
        Some(p) => (
            PipelineConfig::load(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None if need_corpora => return Err(Error::Usage("run needs --config".into())),
        None => (PipelineConfig::from_toml("")?, PathBuf::new()),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok((cfg, dir))
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let (mut cfg, config_dir) = load_config(g, matches!(cli.command, Command::Run))?;
    let out = g.out_dir.as_path();
    if let Command::Run = cli.command {
        let run = run_pipeline(&cfg, &config_dir, out)?;
        info!("status {}", run.manifest.status);
        print_auc("zsl", run.auc);
        if cfg.baseline.enabled {
            print_auc("baseline", run.baseline_auc);
        }
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| stage_command(cli.command, &mut cfg, out))
}

fn print_auc(name: &str, auc: Option<f64>) {
    match auc {
        Some(a) => println!("{name} auc {a:.4}"),
        None => println!("{name} auc undefined"),
    }
}

fn prepared(path: &Path, label: Option<Label>) -> Result<Corpus> {
    let mut c = load_corpus(path, None, label)?;
    ensure_tokens(&mut c)?;
    Ok(c)
}

fn stage_command(command: Command, cfg: &mut PipelineConfig, out: &Path) -> Result<()> {
    let seed = cfg.seed;
    match command {
        Command::Run => unreachable!(),
        Command::Prep {
            pos,
            neg,
            test,
            lexicon: reuse,
        } => {
            let mut corpora = Vec::new();
            if let (Some(pos), Some(neg)) = (&pos, &neg) {
                corpora.push(load_corpus(pos, None, Some(Label::Positive))?);
                corpora.push(load_corpus(neg, None, Some(Label::Negative))?);
            }
            for t in &test {
                corpora.push(load_corpus(t, None, None)?);
            }
            let lexicon = match &reuse {
                Some(p) => load_lexicon(p)?,
                None if cfg.prep.split_concatenations => {
                    build_lexicon(&[&corpora[0], &corpora[1]], cfg.prep.lexicon_min_len)
                }
                None => SplitLexicon::empty(),
            };
            if reuse.is_none() {
                save_lexicon(&out.join("lexicon.json"), &lexicon)?;
            }
            for c in corpora.iter_mut() {
                preprocess_corpus(c, &lexicon)?;
                save_corpus(&out.join(format!("{}.jsonl", c.name)), c)?;
            }
            info!("lexicon of {} words; {} corpora written", lexicon.len(), corpora.len());
        }
        Command::Features { pos, neg, n } => {
            let n = n.unwrap_or(cfg.features.n);
            let p = prepared(&pos, Some(Label::Positive))?;
            let q = prepared(&neg, Some(Label::Negative))?;
            let (features, pt, nt) = feature_words(&p, &q, n, cfg.features.averaging)?;
            info!("{} feature words", features.len());
            save_features(
                &out.join("features.json"),
                &FeaturesArtifact {
                    pos_corpus: p.name,
                    neg_corpus: q.name,
                    averaging: cfg.features.averaging,
                    pos_vocabulary: pt.vocab_len(),
                    neg_vocabulary: nt.vocab_len(),
                    features,
                },
            )?;
        }
        Command::Embed { corpus, dim } => {
            if let Some(d) = dim {
                cfg.embed.dim = d;
            }
            let c = prepared(&corpus, None)?;
            let emb = train_skipgram(&c, &cfg.embed.skipgram(seed))?;
            info!("{} words embedded in {} dimensions", emb.len(), emb.dim());
            save_embeddings(&out.join("embeddings.txt"), &emb)?;
        }
        Command::Space {
            features,
            embeddings,
            m,
            window,
        } => {
            let f = load_features(&features)?;
            let emb = load_embeddings(&embeddings)?;
            let space = build_space(&f, &emb, m.unwrap_or(cfg.space.m), window.unwrap_or(cfg.space.window))?;
            save_space(&out.join("space.json"), &space)?;
        }
        Command::Map { space, corpora } => {
            let space = load_space(&space)?;
            let names = space_feature_names(&space);
            for p in &corpora {
                let c = prepared(p, None)?;
                save_vectors(&out.join(format!("{}.jsonl", c.name)), &names, &map_corpus(&c, &space))?;
            }
        }
        Command::Train { pos, neg, output } => {
            let (names, p) = load_vectors(&pos)?;
            let (names_n, n) = load_vectors(&neg)?;
            if names != names_n {
                return Err(Error::format(&neg, "feature names differ from the positive vectors"));
            }
            let (model, run) = train(&p, &n, &cfg.train, seed)?;
            info!(
                "best epoch {} of {}, validation loss {:.4}",
                run.best_epoch,
                run.history.len(),
                run.best_validation_loss
            );
            save_model(
                &out.join(output),
                &ModelArtifact {
                    features: names,
                    model,
                    adam: cfg.train.adam,
                    run,
                },
            )?;
        }
        Command::Classify { model, vectors, output } => {
            let m = load_model(&model)?;
            let mut rows = Vec::new();
            for p in &vectors {
                let (names, v) = load_vectors(p)?;
                if names != m.features {
                    return Err(Error::format(p, "feature names differ from the model's"));
                }
                let subset = stem(p);
                for (x, probability) in v.iter().zip(predict(&m.model, &v)?) {
                    rows.push(ProbRow {
                        id: x.doc_id.clone(),
                        subset: subset.clone(),
                        probability,
                    });
                }
            }
            save_probs(&out.join(output), &rows)?;
        }
        Command::Eval {
            probs,
            labels,
            corpus,
            stem,
            model_name,
        } => {
            let rows = load_probs(&probs)?;
            let mut truth = std::collections::BTreeMap::new();
            for p in &corpus {
                let c = load_corpus(p, None, None)?;
                truth.extend(
                    c.documents()
                        .iter()
                        .filter_map(|d| d.weak_label.map(|l| (d.id.clone(), l))),
                );
            }
            if let Some(p) = &labels {
                truth.extend(load_labels(p)?);
            }
            let y = align_labels(&rows, &truth)?;
            let report = evaluate(&model_name, &rows, &y, &cfg.eval)?;
            save_report(out, &stem, &report)?;
            let p: Vec<f64> = rows.iter().map(|r| r.probability).collect();
            if let Ok(points) = roc_curve(&p, &y) {
                save_roc(&out.join(format!("{stem}_roc.csv")), &points)?;
            }
            print_auc(&model_name, headline_auc(&report));
        }
        Command::Triage {
            probs,
            corpus,
            base,
            tau,
        } => {
            let c = load_corpus(&corpus, None, None)?;
            let rows = load_probs(&probs)?;
            let by_id: std::collections::BTreeMap<&str, f64> =
                rows.iter().map(|r| (r.id.as_str(), r.probability)).collect();
            let p = c
                .documents()
                .iter()
                .map(|d| {
                    by_id
                        .get(d.id.as_str())
                        .copied()
                        .ok_or_else(|| Error::format(&probs, format!("no probability for document {}", d.id)))
                })
                .collect::<Result<Vec<f64>>>()?;
            let base = base.unwrap_or_else(|| cfg.eval.base.clone());
            let tau = tau.unwrap_or(cfg.eval.triage_tau);
            let hits = triage_query(&c, &p, &base, tau)?;
            for h in &hits {
                println!("{}\t{:.4}", h.id, h.probability);
            }
            write_json(
                &out.join("triage.json"),
                TRIAGE,
                &TriageArtifact {
                    subset: c.name.clone(),
                    base,
                    tau,
                    hits,
                },
            )?;
        }
        Command::Synth { synth_config, null } => {
            let mut sc = match &synth_config {
                Some(p) => toml::from_str::<SynthConfig>(&read_text(p)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => SynthConfig::default(),
            };
            if null {
                sc = sc.null();
            }
            let files = write_synth(out, &sc, seed)?;
            for a in &files.audits {
                if !a.ok() {
                    warn!("audit of {} is outside 3 sigma on some checks", a.corpus);
                }
            }
            println!("{}", files.config.display());
        }
        Command::BaselineFeatures { pos, neg, k } => {
            let p = prepared(&pos, Some(Label::Positive))?;
            let q = prepared(&neg, Some(Label::Negative))?;
            let set = select_top_unique_bigrams(&p, &q, k.unwrap_or(cfg.baseline.k))?;
            if set.shortfall() > 0 {
                warn!("only {} unique bigrams available of {} requested", set.len(), set.k);
            }
            save_bigrams(&out.join("bigrams.json"), &set)?;
        }
        Command::BaselineMap { bigrams, corpora } => {
            let set = load_bigrams(&bigrams)?;
            let names = bigram_feature_names(&set);
            for p in &corpora {
                let c = prepared(p, None)?;
                save_vectors(
                    &out.join(format!("{}.jsonl", c.name)),
                    &names,
                    &map_corpus_bigrams(&c, &set),
                )?;
            }
        }
    }
    Ok(())
}
