//! Pipeline configuration (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zsl_core::baseline::DEFAULT_BIGRAMS;
use zsl_core::embedding::SkipGramConfig;
use zsl_core::eval::{DEFAULT_TAUS, DEFAULT_TRIAGE_TAU};
use zsl_core::mlp::TrainConfig;
use zsl_core::space::{DEFAULT_CONTEXT_WORDS, DEFAULT_WINDOW};
use zsl_core::text::DEFAULT_LEXICON_MIN_LEN;
use zsl_core::tfidf::MeanOver;

use crate::error::{Error, Result};

pub const DEFAULT_TOP_N: usize = 1000;
pub const DEFAULT_BASE: &str = "suicid";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub threads: usize,
    /// Only `run` needs corpora; stage subcommands read hyperparameters alone.
    #[serde(default)]
    pub corpora: CorporaConfig,
    #[serde(default)]
    pub prep: PrepConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default)]
    pub embed: EmbedConfig,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorporaConfig {
    /// Documents carrying the base string and a relevant code.
    pub pos: PathBuf,
    /// Documents carrying neither.
    pub neg: PathBuf,
    /// Unseen corpora to classify; each file stem names its subset.
    #[serde(default)]
    pub test: Vec<PathBuf>,
    /// Ground truth for the test documents (JSONL `{id, label}`). Falls back
    /// to the `label` field of the test records.
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepConfig {
    pub split_concatenations: bool,
    pub lexicon_min_len: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            split_concatenations: true,
            lexicon_min_len: DEFAULT_LEXICON_MIN_LEN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub n: usize,
    pub averaging: MeanOver,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            n: DEFAULT_TOP_N,
            averaging: MeanOver::default(),
        }
    }
}

/// Skip-gram settings; the seed comes from the top-level `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub min_count: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub noise_power: f64,
    pub subsample: Option<f64>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        let d = SkipGramConfig::default();
        EmbedConfig {
            dim: d.dim,
            window: d.window,
            epochs: d.epochs,
            negatives: d.negatives,
            min_count: d.min_count,
            lr_start: widen(d.lr_start),
            lr_end: widen(d.lr_end),
            noise_power: d.noise_power,
            subsample: d.subsample,
        }
    }
}

/// The f64 with the same shortest decimal form, so 0.025f32 reads back as 0.025.
fn widen(x: f32) -> f64 {
    x.to_string().parse().unwrap_or(x as f64)
}

impl EmbedConfig {
    pub fn skipgram(&self, seed: u64) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.dim,
            window: self.window,
            epochs: self.epochs,
            negatives: self.negatives,
            min_count: self.min_count,
            lr_start: self.lr_start as f32,
            lr_end: self.lr_end as f32,
            noise_power: self.noise_power,
            subsample: self.subsample,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceConfig {
    pub m: usize,
    pub window: usize,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            m: DEFAULT_CONTEXT_WORDS,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub taus: Vec<f64>,
    /// Adds the median probability of this subset as an extra threshold.
    pub median_threshold_subset: Option<String>,
    pub base: String,
    pub triage_tau: f64,
    /// Subset searched by the triage query; defaults to the last test corpus.
    pub triage_subset: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            taus: DEFAULT_TAUS.to_vec(),
            median_threshold_subset: None,
            base: DEFAULT_BASE.into(),
            triage_tau: DEFAULT_TRIAGE_TAU,
            triage_subset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub enabled: bool,
    pub k: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            enabled: true,
            k: DEFAULT_BIGRAMS,
        }
    }
}

impl PipelineConfig {
    /// Paper defaults with the given corpora.
    pub fn new(pos: impl Into<PathBuf>, neg: impl Into<PathBuf>, test: Vec<PathBuf>) -> Self {
        PipelineConfig {
            seed: 0,
            threads: 1,
            corpora: CorporaConfig {
                pos: pos.into(),
                neg: neg.into(),
                test,
                labels: None,
            },
            prep: PrepConfig::default(),
            features: FeaturesConfig::default(),
            embed: EmbedConfig::default(),
            space: SpaceConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    /// Checks that `run` has what it needs.
    pub fn require_corpora(&self) -> Result<()> {
        let c = &self.corpora;
        if c.pos.as_os_str().is_empty() {
            return Err(Error::Config("corpora.pos is required".into()));
        }
        if c.neg.as_os_str().is_empty() {
            return Err(Error::Config("corpora.neg is required".into()));
        }
        if c.test.is_empty() {
            return Err(Error::Config("corpora.test must name at least one corpus".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        if self.features.n == 0 {
            return bad("features.n must be >= 1");
        }
        if self.space.m == 0 {
            return bad("space.m must be >= 1");
        }
        if self.eval.taus.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("eval.taus must lie in [0, 1]");
        }
        if self.eval.base.is_empty() {
            return bad("eval.base must not be empty");
        }
        if self.baseline.k == 0 {
            return bad("baseline.k must be >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = PipelineConfig::from_toml("[corpora]\npos = \"p.jsonl\"\nneg = \"n.jsonl\"\n").unwrap();
        assert_eq!(cfg.features.n, 1000);
        assert_eq!(cfg.space.m, 50);
        assert_eq!(cfg.embed.dim, 300);
        assert_eq!(cfg.embed.window, 5);
        assert_eq!(cfg.embed.epochs, 10);
        assert_eq!(cfg.embed.lr_start, 0.025);
        assert_eq!(cfg.embed.skipgram(0).lr_start, 0.025f32);
        assert_eq!(cfg.eval.taus, vec![0.15, 0.5, 0.85]);
        assert_eq!(cfg.baseline.k, 163);
        assert_eq!(cfg.train.adam.lr, 0.0012);
    }

    #[test]
    fn missing_negative_corpus_is_named() {
        let err = PipelineConfig::from_toml("[corpora]\npos = \"p.jsonl\"\n").unwrap_err();
        assert!(err.to_string().contains("neg"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn corpora_optional_until_run() {
        let cfg = PipelineConfig::from_toml("seed = 4\n[space]\nm = 10\n").unwrap();
        assert_eq!(cfg.space.m, 10);
        let err = cfg.require_corpora().unwrap_err();
        assert!(err.to_string().contains("corpora.pos"), "{err}");
        let mut cfg = PipelineConfig::new("p", "n", vec![]);
        assert!(cfg.require_corpora().unwrap_err().to_string().contains("corpora.test"));
        cfg.corpora.test.push("t".into());
        cfg.require_corpora().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = PipelineConfig::from_toml("[corpora]\npos = \"p\"\nneg = \"n\"\n[embed]\ndimm = 3\n").unwrap_err();
        assert!(err.to_string().contains("dimm"), "{err}");
        assert!(PipelineConfig::from_toml("sed = 1\n[corpora]\npos = \"p\"\nneg = \"n\"\n").is_err());
        assert!(PipelineConfig::from_toml("[corpora]\npos = \"p\"\nneg = \"n\"\n[train.adam]\nlr2 = 1.0\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = PipelineConfig::new("a.jsonl", "b.jsonl", vec!["c.jsonl".into()]);
        cfg.embed.subsample = Some(1e-3);
        cfg.eval.triage_subset = Some("c".into());
        let back = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
