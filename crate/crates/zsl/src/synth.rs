//! Writes a synthetic benchmark to disk, ready for `zsl run`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zsl_core::synth::{audit_corpus, generate_labeled_corpora, AuditReport, SynthConfig, SynthCorpora};

use crate::artifact::{write_bytes, write_json};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::formats::{save_corpus, save_labels};

pub const SYNTH_VOCABULARY: &str = "zsl-synth-vocabulary";
pub const SYNTH_AUDIT: &str = "zsl-synth-audit";
/// Embedding width written into the generated pipeline config. The synthetic
/// vocabulary has well under a thousand words.
pub const SYNTH_EMBED_DIM: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalEntry {
    pub signal: String,
    pub contexts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabularyArtifact {
    pub config: SynthConfig,
    pub signals: Vec<SignalEntry>,
    pub shared: Vec<String>,
}

pub fn vocabulary_artifact(config: &SynthConfig, corpora: &SynthCorpora) -> VocabularyArtifact {
    let v = &corpora.vocabulary;
    VocabularyArtifact {
        config: config.clone(),
        signals: v
            .signals
            .iter()
            .enumerate()
            .map(|(i, s)| SignalEntry {
                signal: s.clone(),
                contexts: v.context_words(i).map(str::to_string).collect(),
            })
            .collect(),
        shared: v.shared.clone(),
    }
}

pub struct SynthFiles {
    pub corpora: [PathBuf; 4],
    pub labels: PathBuf,
    pub config: PathBuf,
    pub audits: Vec<AuditReport>,
}

/// Generates the corpora into `dir` together with `labels.jsonl`,
/// `vocabulary.json`, `audit.json` and a `pipeline.toml` that points at them.
pub fn write_synth(dir: &Path, config: &SynthConfig, seed: u64) -> Result<SynthFiles> {
    let corpora = generate_labeled_corpora(config)?;
    let mut paths = Vec::new();
    let mut audits = Vec::new();
    for c in corpora.corpora() {
        let path = dir.join(format!("{}.jsonl", c.name));
        save_corpus(&path, c)?;
        paths.push(path);
        audits.push(audit_corpus(c, config)?);
    }
    let labels = dir.join("labels.jsonl");
    save_labels(&labels, &corpora.truth)?;
    write_json(
        &dir.join("vocabulary.json"),
        SYNTH_VOCABULARY,
        &vocabulary_artifact(config, &corpora),
    )?;
    write_json(&dir.join("audit.json"), SYNTH_AUDIT, &audits)?;

    let file = |p: &PathBuf| PathBuf::from(p.file_name().unwrap());
    let mut pipeline = PipelineConfig::new(file(&paths[0]), file(&paths[1]), vec![file(&paths[2]), file(&paths[3])]);
    pipeline.seed = seed;
    pipeline.corpora.labels = Some(file(&labels));
    pipeline.embed.dim = SYNTH_EMBED_DIM;
    let config_path = dir.join("pipeline.toml");
    write_bytes(&config_path, pipeline.to_toml()?.as_bytes())?;

    let corpora: [PathBuf; 4] = paths
        .try_into()
        .map_err(|_| Error::Config("synthetic generator returned the wrong number of corpora".into()))?;
    Ok(SynthFiles {
        corpora,
        labels,
        config: config_path,
        audits,
    })
}
