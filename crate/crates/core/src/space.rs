//! The semantic space and the document-to-vector mapping.
//!
//! For each feature word `x` the vector entry is the sum, over every
//! occurrence of `x` and every occurrence of one of its context words `y`
//! within `window` tokens on either side, of `cos(x, y) * tfidf(x)`.
//! Repeated context words count once per occurrence; a feature that never
//! occurs maps to zero.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedding::{top_context_words, ContextWord, EmbeddingMatrix};
use crate::tfidf::FeatureSet;
use crate::{Error, Result};

pub const DEFAULT_CONTEXT_WORDS: usize = 50;
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceFeature {
    pub word: String,
    pub mean_tfidf: f64,
    pub contexts: Vec<ContextWord>,
}

/// Plain-data form of a [`SemanticSpace`], used for (de)serialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceParts {
    pub features: Vec<SpaceFeature>,
    pub window: usize,
    pub m: usize,
    /// Features dropped because they were missing from the embedding vocabulary.
    #[serde(default)]
    pub dropped: Vec<String>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceParts", into = "SpaceParts")]
pub struct SemanticSpace {
    parts: SpaceParts,
    feature_index: BTreeMap<String, usize>,
    context_sims: Vec<BTreeMap<String, f64>>,
}

impl TryFrom<SpaceParts> for SemanticSpace {
    type Error = Error;

    fn try_from(parts: SpaceParts) -> Result<Self> {
        SemanticSpace::new(parts)
    }
}

impl From<SemanticSpace> for SpaceParts {
    fn from(space: SemanticSpace) -> Self {
        space.parts
    }
}

impl SemanticSpace {
    pub fn new(parts: SpaceParts) -> Result<Self> {
        if parts.features.is_empty() {
            return Err(Error::NoFeatures);
        }
        let mut feature_index = BTreeMap::new();
        let mut context_sims = Vec::with_capacity(parts.features.len());
        for (i, f) in parts.features.iter().enumerate() {
            if feature_index.insert(f.word.clone(), i).is_some() {
                return Err(Error::DuplicateId(f.word.clone()));
            }
            if f.contexts.is_empty() {
                return Err(Error::InvalidParameter(alloc::format!(
                    "feature {:?} has no context words",
                    f.word
                )));
            }
            let mut sims = BTreeMap::new();
            for c in &f.contexts {
                if c.word == f.word {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "feature {:?} lists itself as a context word",
                        f.word
                    )));
                }
                if sims.insert(c.word.clone(), c.similarity).is_some() {
                    return Err(Error::DuplicateId(c.word.clone()));
                }
            }
            context_sims.push(sims);
        }
        Ok(SemanticSpace {
            parts,
            feature_index,
            context_sims,
        })
    }

    pub fn features(&self) -> &[SpaceFeature] {
        &self.parts.features
    }

    pub fn dim(&self) -> usize {
        self.parts.features.len()
    }

    pub fn window(&self) -> usize {
        self.parts.window
    }

    pub fn m(&self) -> usize {
        self.parts.m
    }

    pub fn dropped(&self) -> &[String] {
        &self.parts.dropped
    }

    pub fn provenance(&self) -> &BTreeMap<String, String> {
        &self.parts.provenance
    }

    pub fn set_provenance(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.parts.provenance.insert(key.into(), value.into());
    }

    pub fn parts(&self) -> &SpaceParts {
        &self.parts
    }
}

/// Pairs each feature present in the embedding vocabulary with its top-`m`
/// context words. Missing features are dropped and listed in
/// [`SemanticSpace::dropped`].
pub fn build_semantic_space(
    features: &FeatureSet,
    emb: &EmbeddingMatrix,
    m: usize,
    window: usize,
) -> Result<SemanticSpace> {
    if features.is_empty() {
        return Err(Error::NoFeatures);
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for f in &features.features {
        if !emb.contains(&f.word) {
            dropped.push(f.word.clone());
            continue;
        }
        let ctx = top_context_words(&f.word, emb, m)?;
        if ctx.neighbors.is_empty() {
            dropped.push(f.word.clone());
            continue;
        }
        kept.push(SpaceFeature {
            word: f.word.clone(),
            mean_tfidf: f.mean_tfidf,
            contexts: ctx.neighbors,
        });
    }
    if kept.is_empty() {
        return Err(Error::AllFeaturesDropped(features.len()));
    }
    SemanticSpace::new(SpaceParts {
        features: kept,
        window,
        m,
        dropped,
        provenance: BTreeMap::new(),
    })
}

/// A document mapped into a space; `values[i]` belongs to feature `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub doc_id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(doc_id: impl Into<String>, values: Vec<f64>) -> Self {
        FeatureVector {
            doc_id: doc_id.into(),
            values,
        }
    }
}

/// Maps a token sequence into `space`.
pub fn map_document<S: AsRef<str>>(tokens: &[S], space: &SemanticSpace) -> Vec<f64> {
    let mut values = vec![0.0; space.dim()];
    let w = space.window();
    for (i, tok) in tokens.iter().enumerate() {
        let Some(&f) = space.feature_index.get(tok.as_ref()) else {
            continue;
        };
        let weight = space.parts.features[f].mean_tfidf;
        let sims = &space.context_sims[f];
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(tokens.len() - 1);
        for (j, other) in tokens.iter().enumerate().take(hi + 1).skip(lo) {
            if j == i {
                continue;
            }
            if let Some(&sim) = sims.get(other.as_ref()) {
                values[f] += sim * weight;
            }
        }
    }
    values
}

pub fn map_corpus_document(doc: &crate::Document, space: &SemanticSpace) -> FeatureVector {
    FeatureVector::new(doc.id.to_string(), map_document(&doc.tokens, space))
}
