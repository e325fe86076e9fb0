//! File formats for corpora, labels, vectors, embeddings, probabilities and
//! reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use zsl_core::embedding::{EmbeddingMatrix, SkipGramConfig};
use zsl_core::eval::{MetricsReport, RocPoint, TriageHit};
use zsl_core::mlp::{AdamConfig, MlpModel, TrainRun};
use zsl_core::space::FeatureVector;
use zsl_core::{Corpus, Document, Label};

use crate::artifact::{
    check_header, create_parent, lines, parse_error, parse_line, read_json, read_text, write_bytes, write_json,
    write_jsonl, Header, FORMAT_VERSION,
};
use crate::error::{Error, Result};

pub const VECTORS: &str = "zsl-vectors";
pub const EMBEDDINGS: &str = "zsl-embeddings";
pub const MODEL: &str = "zsl-model";
pub const REPORT: &str = "zsl-report";

#[derive(Deserialize)]
struct RecordIn {
    id: Value,
    text: String,
    #[serde(default)]
    label: Option<Label>,
    #[serde(default)]
    tokens: Option<Vec<String>>,
    #[serde(flatten)]
    rest: BTreeMap<String, Value>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    tokens: &'a Vec<String>,
    #[serde(flatten)]
    meta: &'a BTreeMap<String, String>,
}

/// Corpus name used when none is given: the file stem.
pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into())
}

/// Reads a JSONL corpus: one object per line with `id` and `text`, an
/// optional `label` (0 or 1) and optional `tokens`. Other fields become
/// metadata. Records without a label take `expected_label`.
pub fn load_corpus(path: &Path, name: Option<&str>, expected_label: Option<Label>) -> Result<Corpus> {
    let text = read_text(path)?;
    let mut docs = Vec::new();
    for (line_no, start, line) in lines(&text) {
        let rec: RecordIn = parse_line(path, line, start)?;
        let id = match rec.id {
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            other => {
                return Err(Error::format(
                    path,
                    format!("line {line_no}: id must be a string or number, got {other}"),
                ))
            }
        };
        if let (Some(l), Some(e)) = (rec.label, expected_label) {
            if l != e {
                return Err(Error::format(
                    path,
                    format!("line {line_no}: label {l} in a corpus labeled {e}"),
                ));
            }
        }
        let mut doc = Document::new(id, rec.text);
        doc.weak_label = rec.label;
        doc.tokens = rec.tokens.unwrap_or_default();
        doc.meta = rec
            .rest
            .into_iter()
            .map(|(k, v)| {
                let v = match v {
                    Value::String(s) => s,
                    v => v.to_string(),
                };
                (k, v)
            })
            .collect();
        docs.push(doc);
    }
    let name = name.map(str::to_string).unwrap_or_else(|| stem(path));
    Corpus::new(name, docs, expected_label).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let records: Vec<RecordOut> = corpus
        .documents()
        .iter()
        .map(|d| RecordOut {
            id: &d.id,
            text: &d.text,
            label: d.weak_label,
            tokens: &d.tokens,
            meta: &d.meta,
        })
        .collect();
    write_jsonl(path, None, &records)
}

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    id: String,
    label: Label,
}

pub fn load_labels(path: &Path) -> Result<BTreeMap<String, Label>> {
    let text = read_text(path)?;
    let mut out = BTreeMap::new();
    for (line_no, start, line) in lines(&text) {
        let rec: LabelRecord = parse_line(path, line, start)?;
        if out.insert(rec.id.clone(), rec.label).is_some() {
            return Err(Error::format(path, format!("line {line_no}: duplicate id {}", rec.id)));
        }
    }
    Ok(out)
}

pub fn save_labels(path: &Path, labels: &[(String, Label)]) -> Result<()> {
    let records: Vec<LabelRecord> = labels
        .iter()
        .map(|(id, label)| LabelRecord {
            id: id.clone(),
            label: *label,
        })
        .collect();
    write_jsonl(path, None, &records)
}

#[derive(Serialize, Deserialize)]
struct VectorsHeader {
    format: String,
    version: u32,
    dim: usize,
    features: Vec<String>,
}

/// A header line naming the feature of each column, then one vector per line.
pub fn save_vectors(path: &Path, features: &[String], vectors: &[FeatureVector]) -> Result<()> {
    let header = serde_json::to_value(VectorsHeader {
        format: VECTORS.into(),
        version: FORMAT_VERSION,
        dim: features.len(),
        features: features.to_vec(),
    })
    .map_err(|e| Error::format(path, e.to_string()))?;
    write_jsonl(path, Some(&header), vectors)
}

pub fn load_vectors(path: &Path) -> Result<(Vec<String>, Vec<FeatureVector>)> {
    let text = read_text(path)?;
    let mut it = lines(&text);
    let (_, start, first) = it.next().ok_or_else(|| Error::format(path, "empty vectors file"))?;
    let header: VectorsHeader = parse_line(path, first, start)?;
    check_header(path, VECTORS, &header.format, header.version)?;
    let mut vectors = Vec::new();
    for (line_no, start, line) in it {
        let v: FeatureVector = parse_line(path, line, start)?;
        if v.values.len() != header.dim {
            return Err(Error::format(
                path,
                format!("line {line_no}: {} values, header says {}", v.values.len(), header.dim),
            ));
        }
        vectors.push(v);
    }
    Ok((header.features, vectors))
}

#[derive(Serialize, Deserialize)]
struct EmbeddingsHeader {
    format: String,
    version: u32,
    dim: usize,
    words: usize,
    config: SkipGramConfig,
    loss_history: Vec<f64>,
}

/// A JSON header line, then `word count v1 .. vdim` per vocabulary word in
/// row order.
pub fn save_embeddings(path: &Path, emb: &EmbeddingMatrix) -> Result<()> {
    let header = EmbeddingsHeader {
        format: EMBEDDINGS.into(),
        version: FORMAT_VERSION,
        dim: emb.dim(),
        words: emb.len(),
        config: emb.config.clone(),
        loss_history: emb.loss_history.clone(),
    };
    let mut out = serde_json::to_string(&header).map_err(|e| Error::format(path, e.to_string()))?;
    out.push('\n');
    for (i, w) in emb.words().iter().enumerate() {
        write!(out, "{w} {}", emb.counts()[i]).unwrap();
        for x in emb.row(i) {
            write!(out, " {x}").unwrap();
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let text = read_text(path)?;
    let mut it = lines(&text);
    let (_, start, first) = it.next().ok_or_else(|| Error::format(path, "empty embeddings file"))?;
    let header: EmbeddingsHeader = parse_line(path, first, start)?;
    check_header(path, EMBEDDINGS, &header.format, header.version)?;
    let mut words = Vec::with_capacity(header.words);
    let mut counts = Vec::with_capacity(header.words);
    let mut vectors = Vec::with_capacity(header.words * header.dim);
    for (line_no, start, line) in it {
        let mut parts = line.split(' ');
        let bad = |what: &str| Error::Parse {
            path: path.to_path_buf(),
            offset: start,
            message: format!("line {line_no}: {what}"),
        };
        let word = parts
            .next()
            .filter(|w| !w.is_empty())
            .ok_or_else(|| bad("missing word"))?;
        let count = parts
            .next()
            .and_then(|c| c.parse::<u64>().ok())
            .ok_or_else(|| bad("missing or invalid count"))?;
        let before = vectors.len();
        for p in parts {
            vectors.push(p.parse::<f32>().map_err(|_| bad("invalid number"))?);
        }
        if vectors.len() - before != header.dim {
            return Err(bad(&format!(
                "expected {} values, found {}",
                header.dim,
                vectors.len() - before
            )));
        }
        words.push(word.to_string());
        counts.push(count);
    }
    if words.len() != header.words {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: text.len(),
            message: format!("expected {} words, found {} (truncated?)", header.words, words.len()),
        });
    }
    EmbeddingMatrix::from_parts(header.dim, words, counts, vectors, header.config, header.loss_history)
        .map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    /// Input column names, in order.
    pub features: Vec<String>,
    pub model: MlpModel,
    pub adam: AdamConfig,
    pub run: TrainRun,
}

pub fn save_model(path: &Path, artifact: &ModelArtifact) -> Result<()> {
    write_json(path, MODEL, artifact)
}

pub fn load_model(path: &Path) -> Result<ModelArtifact> {
    let a: ModelArtifact = read_json(path, MODEL)?;
    a.model.validate().map_err(|e| Error::format(path, e.to_string()))?;
    if a.features.len() != a.model.input_dim() {
        return Err(Error::format(path, "feature list does not match the model input"));
    }
    Ok(a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbRow {
    pub id: String,
    pub subset: String,
    pub probability: f64,
}

pub fn save_probs(path: &Path, rows: &[ProbRow]) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_probs(path: &Path) -> Result<Vec<ProbRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map(|p| p.byte() as usize);
    match (e.kind(), offset) {
        (csv::ErrorKind::Io(_), _) => Error::format(path, e.to_string()),
        (_, Some(offset)) => Error::Parse {
            path: path.to_path_buf(),
            offset,
            message: e.to_string(),
        },
        _ => Error::format(path, e.to_string()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub model: String,
    pub report: MetricsReport,
    pub medians: BTreeMap<String, f64>,
}

/// Writes `<stem>.json`, `<stem>.csv` (one row per subset and threshold) and
/// `<stem>_auc.csv` next to each other.
pub fn save_report(dir: &Path, stem: &str, report: &ReportArtifact) -> Result<Vec<std::path::PathBuf>> {
    let json = dir.join(format!("{stem}.json"));
    write_json(&json, REPORT, report)?;
    let rows = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&rows).map_err(|e| csv_error(&rows, e))?;
    w.write_record([
        "subset",
        "tau",
        "tp",
        "fp",
        "tn",
        "fn",
        "sensitivity",
        "specificity",
        "ppv",
    ])
    .map_err(|e| csv_error(&rows, e))?;
    for r in &report.report.rows {
        let c = r.confusion.counts;
        w.write_record([
            r.subset.clone(),
            r.confusion.threshold.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            r.metrics.sensitivity.to_string(),
            r.metrics.specificity.to_string(),
            r.metrics.ppv.to_string(),
        ])
        .map_err(|e| csv_error(&rows, e))?;
    }
    w.flush().map_err(|e| Error::io(&rows, e))?;
    let auc = dir.join(format!("{stem}_auc.csv"));
    let mut w = csv::Writer::from_path(&auc).map_err(|e| csv_error(&auc, e))?;
    w.write_record(["subset", "positives", "negatives", "auc"])
        .map_err(|e| csv_error(&auc, e))?;
    for a in &report.report.auc {
        w.write_record([
            a.subset.clone(),
            a.positives.to_string(),
            a.negatives.to_string(),
            a.auc.to_string(),
        ])
        .map_err(|e| csv_error(&auc, e))?;
    }
    w.flush().map_err(|e| Error::io(&auc, e))?;
    Ok(vec![json, rows, auc])
}

pub fn load_report(path: &Path) -> Result<ReportArtifact> {
    read_json(path, REPORT)
}

pub fn save_roc(path: &Path, points: &[RocPoint]) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["threshold", "fpr", "tpr"])
        .map_err(|e| csv_error(path, e))?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriageArtifact {
    pub subset: String,
    pub base: String,
    pub tau: f64,
    pub hits: Vec<TriageHit>,
}

/// Reads only the envelope header of a JSON artifact.
pub fn peek_header(path: &Path) -> Result<Header> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, &text, e, 0))
}
