//! Skip-gram word embeddings trained with negative sampling, and
//! nearest-neighbour context words by cosine similarity.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{score_desc_then_name, sigmoid_f32, sqrt};
use crate::text::Corpus;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Context tokens considered on each side of the center token.
    pub window: usize,
    pub epochs: usize,
    /// Noise words drawn per (center, context) pair.
    pub negatives: usize,
    pub min_count: usize,
    /// Learning rate decays linearly from `lr_start` to `lr_end` over all epochs.
    pub lr_start: f32,
    pub lr_end: f32,
    /// Exponent applied to unigram counts to build the noise distribution.
    pub noise_power: f64,
    /// Frequent-word subsampling threshold; disabled when `None`.
    pub subsample: Option<f64>,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 300,
            window: 5,
            epochs: 10,
            negatives: 5,
            min_count: 5,
            lr_start: 0.025,
            lr_end: 1e-4,
            noise_power: 0.75,
            subsample: None,
            seed: 0,
        }
    }
}

/// Input (center-word) vectors of a trained model, one row per word.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    words: Vec<String>,
    counts: Vec<u64>,
    vectors: Vec<f32>,
    index: BTreeMap<String, usize>,
    pub config: SkipGramConfig,
    /// Mean negative-sampling loss per (center, context) pair, per epoch.
    pub loss_history: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Assembles a matrix from stored parts (used when reading files).
    pub fn from_parts(
        dim: usize,
        words: Vec<String>,
        counts: Vec<u64>,
        vectors: Vec<f32>,
        config: SkipGramConfig,
        loss_history: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dim must be positive".into()));
        }
        if counts.len() != words.len() {
            return Err(Error::LengthMismatch {
                left: words.len(),
                right: counts.len(),
            });
        }
        if vectors.len() != words.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: words.len() * dim,
                actual: vectors.len(),
            });
        }
        let mut index = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateId(w.clone()));
            }
        }
        Ok(EmbeddingMatrix {
            dim,
            words,
            counts,
            vectors,
            index,
            config,
            loss_history,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.index_of(word).map(|i| self.row(i))
    }

    pub fn raw_vectors(&self) -> &[f32] {
        &self.vectors
    }

    /// Cosine similarity of two vocabulary words.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let va = self.vector(a).ok_or_else(|| Error::UnknownWord(a.to_string()))?;
        let vb = self.vector(b).ok_or_else(|| Error::UnknownWord(b.to_string()))?;
        cosine_similarity(va, vb)
    }
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (&a, &b) in u.iter().zip(v) {
        let (a, b): (f64, f64) = (a.into(), b.into());
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (sqrt(uu) * sqrt(vv))).clamp(-1.0, 1.0))
}

/// Noise distribution over vocabulary indices, sampled by inverting the
/// cumulative weights.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[u64], power: f64) -> Self {
        let mut total = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                total += libm::pow(c as f64, power);
                total
            })
            .collect();
        NoiseTable { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// -ln(sigmoid(x)), stable for large |x|.
#[inline]
fn neg_log_sigmoid(x: f32) -> f32 {
    if x > 0.0 {
        libm::log1pf(libm::expf(-x))
    } else {
        -x + libm::log1pf(libm::expf(x))
    }
}

/// Trains skip-gram embeddings over every document of `corpus`. Windows never
/// cross document boundaries; out-of-vocabulary tokens keep their position
/// (so distances are measured in the original text) but are never paired.
/// Single-threaded and bit-reproducible for a given seed.
pub fn train_skipgram(corpus: &Corpus, config: &SkipGramConfig) -> Result<EmbeddingMatrix> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(corpus.name.clone()));
    }
    if config.dim < 2 {
        return Err(Error::InvalidParameter(alloc::format!(
            "dim must be >= 2, got {}",
            config.dim
        )));
    }
    if config.epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be >= 1".into()));
    }

    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for doc in corpus.documents() {
        for t in &doc.tokens {
            *freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|&(_, c)| c as usize >= config.min_count.max(1))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary(config.min_count));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let words: Vec<String> = kept.iter().map(|(w, _)| w.to_string()).collect();
    let counts: Vec<u64> = kept.iter().map(|&(_, c)| c).collect();
    let index: BTreeMap<&str, usize> = kept.iter().enumerate().map(|(i, (w, _))| (*w, i)).collect();

    let sequences: Vec<Vec<Option<usize>>> = corpus
        .documents()
        .iter()
        .map(|d| d.tokens.iter().map(|t| index.get(t.as_str()).copied()).collect())
        .collect();
    let total_tokens: u64 = counts.iter().sum();

    let dim = config.dim;
    let vocab = words.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init_scale = 1.0 / dim as f32;
    let mut input: Vec<f32> = (0..vocab * dim)
        .map(|_| (rng.random::<f32>() - 0.5) * init_scale)
        .collect();
    let mut output = vec![0.0f32; vocab * dim];
    let noise = NoiseTable::new(&counts, config.noise_power);
    let keep_prob: Option<Vec<f64>> = config.subsample.map(|t| {
        counts
            .iter()
            .map(|&c| {
                let f = c as f64 / total_tokens as f64;
                (sqrt(t / f) + t / f).min(1.0)
            })
            .collect()
    });

    let planned = total_tokens * config.epochs as u64;
    let mut processed: u64 = 0;
    let mut grad = vec![0.0f32; dim];
    let mut loss_history = Vec::with_capacity(config.epochs);

    for _epoch in 0..config.epochs {
        let mut loss_sum = 0.0f64;
        let mut pairs: u64 = 0;
        for seq in &sequences {
            let active: Vec<Option<usize>> = match &keep_prob {
                None => seq.clone(),
                Some(keep) => seq
                    .iter()
                    .map(|t| t.filter(|&w| rng.random::<f64>() < keep[w]))
                    .collect(),
            };
            for (pos, center) in active.iter().enumerate() {
                let Some(center) = *center else { continue };
                let progress = processed as f32 / planned as f32;
                let lr = (config.lr_start + (config.lr_end - config.lr_start) * progress).max(config.lr_end);
                processed += 1;

                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window).min(active.len() - 1);
                for (ctx_pos, slot) in active.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    let Some(context) = *slot else { continue };
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let center_row = center * dim;
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0f32)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0f32)
                        };
                        let out_row = target * dim;
                        let mut f = 0.0f32;
                        for d in 0..dim {
                            f += input[center_row + d] * output[out_row + d];
                        }
                        loss_sum += if label > 0.5 {
                            neg_log_sigmoid(f)
                        } else {
                            neg_log_sigmoid(-f)
                        } as f64;
                        let g = (label - sigmoid_f32(f)) * lr;
                        for d in 0..dim {
                            grad[d] += g * output[out_row + d];
                            output[out_row + d] += g * input[center_row + d];
                        }
                    }
                    for d in 0..dim {
                        input[center_row + d] += grad[d];
                    }
                    pairs += 1;
                }
            }
        }
        loss_history.push(if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 });
    }

    EmbeddingMatrix::from_parts(dim, words, counts, input, config.clone(), loss_history)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextWord {
    pub word: String,
    pub similarity: f64,
}

/// A feature word and its nearest neighbours, most similar first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextSet {
    pub feature: String,
    pub neighbors: Vec<ContextWord>,
}

/// The `m` vocabulary words most similar to `feature` (itself excluded),
/// ties broken alphabetically.
pub fn top_context_words(feature: &str, emb: &EmbeddingMatrix, m: usize) -> Result<ContextSet> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be >= 1".into()));
    }
    let fi = emb
        .index_of(feature)
        .ok_or_else(|| Error::UnknownWord(feature.to_string()))?;
    let fv = emb.row(fi);
    let mut scored: Vec<(f64, &str)> = Vec::with_capacity(emb.len());
    for (i, w) in emb.words().iter().enumerate() {
        if i == fi {
            continue;
        }
        match cosine_similarity(fv, emb.row(i)) {
            Ok(s) => scored.push((s, w.as_str())),
            Err(Error::ZeroNorm) => continue,
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(|a, b| score_desc_then_name(*a, *b));
    scored.truncate(m);
    Ok(ContextSet {
        feature: feature.to_string(),
        neighbors: scored
            .into_iter()
            .map(|(similarity, w)| ContextWord {
                word: w.to_string(),
                similarity,
            })
            .collect(),
    })
}
