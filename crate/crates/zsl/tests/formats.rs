use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use zsl::artifact::{read_json, write_json, FORMAT_VERSION};
use zsl::formats::*;
use zsl::manifest::{ArtifactDigest, RunManifest, StageRecord};
use zsl::pipeline::{load_lexicon, load_space, save_lexicon, save_space};
use zsl::Error;
use zsl_core::embedding::{EmbeddingMatrix, SkipGramConfig};
use zsl_core::eval::{roc_curve, threshold_sweep, TriageHit};
use zsl_core::mlp::{train, MlpModel, TrainConfig};
use zsl_core::space::{build_semantic_space, FeatureVector};
use zsl_core::text::SplitLexicon;
use zsl_core::tfidf::{Feature, FeatureSet};
use zsl_core::{Corpus, Document, Label};

fn embeddings() -> EmbeddingMatrix {
    EmbeddingMatrix::from_parts(
        3,
        vec!["alpha".into(), "beta".into(), "gamma".into()],
        vec![9, 7, 5],
        vec![0.1, -0.25, 1.0e-7, 0.5, 0.5, 0.5, -1.0, 0.0, 3.25],
        SkipGramConfig::default(),
        vec![0.7, 0.5],
    )
    .unwrap()
}

#[test]
fn corpus_round_trip_keeps_tokens_labels_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("notes.jsonl");
    let mut d = Document::new("n1", "Pt is süicidal\nand \"quoted\"").with_label(Label::Positive);
    d.tokens = vec!["pt".into(), "is".into(), "suicidal".into()];
    d.meta.insert("visit".into(), "3".into());
    let c = Corpus::new("notes", vec![d, Document::new("n2", "")], None).unwrap();
    save_corpus(&path, &c).unwrap();
    let back = load_corpus(&path, None, None).unwrap();
    assert_eq!(back.name, "notes");
    assert_eq!(back.documents(), c.documents());
}

#[test]
fn corpus_accepts_numeric_ids_and_checks_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    fs::write(
        &path,
        "{\"id\": 7, \"text\": \"a b\"}\n\n{\"id\": \"x\", \"text\": \"c\", \"label\": 1}\n",
    )
    .unwrap();
    let c = load_corpus(&path, Some("named"), None).unwrap();
    assert_eq!(c.name, "named");
    assert_eq!(c.documents()[0].id, "7");
    assert_eq!(c.documents()[1].weak_label, Some(Label::Positive));
    let err = load_corpus(&path, None, Some(Label::Negative)).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
}

#[test]
fn corpus_parse_error_reports_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let good = "{\"id\": \"a\", \"text\": \"ok\"}\n";
    fs::write(&path, format!("{good}{{\"id\": \"b\", \"text\": ")).unwrap();
    match load_corpus(&path, None, None).unwrap_err() {
        Error::Parse { offset, .. } => assert!(offset >= good.len(), "offset {offset}"),
        e => panic!("{e}"),
    }
    fs::write(&path, format!("{good}{good}")).unwrap();
    assert!(load_corpus(&path, None, None).is_err(), "duplicate ids");
}

#[test]
fn labels_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.jsonl");
    let labels = vec![("a".to_string(), Label::Positive), ("b".to_string(), Label::Negative)];
    save_labels(&path, &labels).unwrap();
    let back = load_labels(&path).unwrap();
    assert_eq!(back.into_iter().collect::<Vec<_>>(), labels);
}

#[test]
fn vectors_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.jsonl");
    let names = vec!["f1".to_string(), "f2".to_string()];
    let v = vec![
        FeatureVector::new("d1", vec![0.1 + 0.2, 1.0 / 3.0]),
        FeatureVector::new("d2", vec![f64::MIN_POSITIVE, -0.0]),
    ];
    save_vectors(&path, &names, &v).unwrap();
    let (n, back) = load_vectors(&path).unwrap();
    assert_eq!(n, names);
    for (a, b) in v.iter().zip(&back) {
        let bits = |x: &FeatureVector| x.values.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn vectors_with_wrong_width_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.jsonl");
    save_vectors(&path, &["f".to_string()], &[FeatureVector::new("d", vec![1.0])]).unwrap();
    let text = fs::read_to_string(&path).unwrap().replace("[1.0]", "[1.0,2.0]");
    fs::write(&path, text).unwrap();
    assert!(matches!(load_vectors(&path), Err(Error::Format { .. })));
}

#[test]
fn embeddings_round_trip_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.txt");
    let emb = embeddings();
    save_embeddings(&path, &emb).unwrap();
    assert_eq!(load_embeddings(&path).unwrap(), emb);

    let text = fs::read_to_string(&path).unwrap();
    let cut = text.trim_end().rfind('\n').unwrap() + 1;
    fs::write(&path, &text[..cut]).unwrap();
    match load_embeddings(&path).unwrap_err() {
        Error::Parse { offset, message, .. } => {
            assert_eq!(offset, cut);
            assert!(message.contains("truncated"), "{message}");
        }
        e => panic!("{e}"),
    }
    // a line cut mid-vector
    fs::write(&path, &text[..text.len() - " 3.25\n".len()]).unwrap();
    match load_embeddings(&path).unwrap_err() {
        Error::Parse { offset, .. } => assert_eq!(offset, cut),
        e => panic!("{e}"),
    }
}

#[test]
fn lexicon_and_space_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lex = SplitLexicon::new(["sleep", "pattern"]);
    save_lexicon(&dir.path().join("lex.json"), &lex).unwrap();
    assert_eq!(load_lexicon(&dir.path().join("lex.json")).unwrap(), lex);

    let fs_ = FeatureSet {
        features: vec![Feature {
            word: "alpha".into(),
            mean_tfidf: 0.3,
        }],
        n_requested: 10,
    };
    let mut space = build_semantic_space(&fs_, &embeddings(), 2, 5).unwrap();
    space.set_provenance("dim", "3");
    let path = dir.path().join("space.json");
    save_space(&path, &space).unwrap();
    assert_eq!(load_space(&path).unwrap(), space);
}

fn tiny_model() -> ModelArtifact {
    let pos: Vec<FeatureVector> = (0..20)
        .map(|i| FeatureVector::new(format!("p{i}"), vec![1.0, i as f64]))
        .collect();
    let neg: Vec<FeatureVector> = (0..20)
        .map(|i| FeatureVector::new(format!("n{i}"), vec![-1.0, i as f64]))
        .collect();
    let cfg = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let (model, run) = train(&pos, &neg, &cfg, 5).unwrap();
    ModelArtifact {
        features: vec!["a".into(), "b".into()],
        model,
        adam: cfg.adam,
        run,
    }
}

#[test]
fn model_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let m = tiny_model();
    save_model(&path, &m).unwrap();
    let back = load_model(&path).unwrap();
    let bits = |m: &MlpModel| m.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.model), bits(&m.model));
    assert_eq!(back, m);
}

#[test]
fn model_with_wrong_feature_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let mut m = tiny_model();
    m.features.push("extra".into());
    save_model(&path, &m).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Format { .. })));
}

#[test]
fn newer_version_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&path, &tiny_model()).unwrap();
    let text = fs::read_to_string(&path).unwrap().replacen(
        &format!("\"version\": {FORMAT_VERSION}"),
        &format!("\"version\": {}", FORMAT_VERSION + 1),
        1,
    );
    fs::write(&path, text).unwrap();
    match load_model(&path).unwrap_err() {
        Error::Version { found, supported, .. } => {
            assert_eq!(found, FORMAT_VERSION + 1);
            assert_eq!(supported, FORMAT_VERSION);
        }
        e => panic!("{e}"),
    }
    assert_eq!(peek_header(&path).unwrap().version, FORMAT_VERSION + 1);

    let vpath = dir.path().join("v.jsonl");
    save_vectors(&vpath, &["f".to_string()], &[]).unwrap();
    let text = fs::read_to_string(&vpath)
        .unwrap()
        .replace("\"version\":1", "\"version\":9");
    fs::write(&vpath, text).unwrap();
    assert!(matches!(load_vectors(&vpath), Err(Error::Version { found: 9, .. })));
}

#[test]
fn wrong_artifact_kind_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.json");
    write_json(&path, "zsl-space", &1u8).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Format { .. })));
}

#[test]
fn truncated_json_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&path, &tiny_model()).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let cut = text.len() / 2;
    fs::write(&path, &text[..cut]).unwrap();
    match load_model(&path).unwrap_err() {
        Error::Parse { offset, .. } => assert!(offset <= cut && offset + 64 >= cut, "offset {offset}, cut {cut}"),
        e => panic!("{e}"),
    }
}

#[test]
fn probs_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probs.csv");
    let rows = vec![
        ProbRow {
            id: "a,1".into(),
            subset: "s".into(),
            probability: 0.1 + 0.2,
        },
        ProbRow {
            id: "b".into(),
            subset: "t".into(),
            probability: 1e-12,
        },
    ];
    save_probs(&path, &rows).unwrap();
    let back = load_probs(&path).unwrap();
    assert_eq!(back, rows);
    assert_eq!(back[0].probability.to_bits(), (0.1f64 + 0.2).to_bits());
}

#[test]
fn malformed_probs_report_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probs.csv");
    let head = "id,subset,probability\na,s,0.5\n";
    fs::write(&path, format!("{head}b,s,notanumber\n")).unwrap();
    match load_probs(&path).unwrap_err() {
        Error::Parse { offset, .. } => assert_eq!(offset, head.len()),
        e => panic!("{e}"),
    }
}

#[test]
fn report_files_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let probs = [0.9, 0.2, 0.6, 0.1];
    let labels = [Label::Positive, Label::Negative, Label::Positive, Label::Positive];
    let report = threshold_sweep(&[("only", &probs[..], &labels[..])], &[0.5]).unwrap();
    let artifact = ReportArtifact {
        model: "zsl".into(),
        report,
        medians: BTreeMap::from([("only".to_string(), 0.4)]),
    };
    let written = save_report(dir.path(), "report", &artifact).unwrap();
    assert_eq!(written.len(), 3);
    assert_eq!(load_report(&written[0]).unwrap(), artifact);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.contains("only,0.5,2,0,1,1,0.6666666666666666,1,1"), "{csv}");
    let auc = fs::read_to_string(dir.path().join("report_auc.csv")).unwrap();
    assert!(auc.contains("only,3,1,0.6666666666666666"), "{auc}");
}

#[test]
fn undefined_metric_is_written_as_marker() {
    let dir = tempfile::tempdir().unwrap();
    let probs = [0.1, 0.2];
    let labels = [Label::Negative, Label::Negative];
    let report = threshold_sweep(&[("neg", &probs[..], &labels[..])], &[0.5]).unwrap();
    let artifact = ReportArtifact {
        model: "zsl".into(),
        report,
        medians: BTreeMap::new(),
    };
    save_report(dir.path(), "r", &artifact).unwrap();
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.contains("NaN/div by 0"), "{csv}");
    let json = fs::read_to_string(dir.path().join("r.json")).unwrap();
    assert!(json.contains("\"NaN/div by 0\""), "{json}");
    assert_eq!(load_report(&dir.path().join("r.json")).unwrap(), artifact);
}

#[test]
fn roc_csv_starts_at_origin() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("roc.csv");
    let points = roc_curve(&[0.9, 0.1], &[Label::Positive, Label::Negative]).unwrap();
    save_roc(&path, &points).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("threshold,fpr,tpr"));
    assert_eq!(lines.next(), Some("inf,0,0"));
    assert_eq!(text.lines().last(), Some("0.1,1,1"));
}

#[test]
fn triage_and_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = TriageArtifact {
        subset: "s".into(),
        base: "suicid".into(),
        tau: 0.9,
        hits: vec![TriageHit {
            id: "a".into(),
            probability: 0.95,
        }],
    };
    let path = dir.path().join("t.json");
    write_json(&path, "zsl-triage", &t).unwrap();
    assert_eq!(read_json::<TriageArtifact>(&path, "zsl-triage").unwrap(), t);

    let m = RunManifest {
        tool: "zsl".into(),
        tool_version: "0".into(),
        seed: 1,
        threads: 2,
        deterministic: true,
        config: serde_json::json!({"seed": 1}),
        started_unix: 5,
        finished_unix: 6,
        status: "ok".into(),
        stages: vec![StageRecord {
            name: "prep".into(),
            inputs: vec![ArtifactDigest {
                path: "a.jsonl".into(),
                sha256: "00".into(),
            }],
            outputs: vec![],
            started_unix: 5,
            finished_unix: 6,
            notes: BTreeMap::new(),
        }],
        summary: BTreeMap::new(),
    };
    let path = dir.path().join("manifest.json");
    m.save(&path).unwrap();
    assert_eq!(RunManifest::load(&path).unwrap(), m);
    assert_eq!(m.digests(), vec![("a.jsonl", "00")]);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_corpus(Path::new("/nonexistent/c.jsonl"), None, None).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert_eq!(err.exit_code(), 2);
}
