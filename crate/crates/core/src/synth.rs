//! Seeded synthetic corpora with planted contextual signal.
//!
//! Four corpora are produced: a positive and a negative training corpus and
//! two unlabeled test corpora with hidden ground truth. Filler tokens come
//! from a shared vocabulary with a power-law frequency profile. A signal
//! event puts a signal term near `contexts_per_event` of its designated
//! context terms, each between `context_offset[0]` and `context_offset[1]`
//! tokens away. Truly positive documents carry
//! events; every document in the positive training corpus and in the test
//! corpora may also carry isolated signal-term mentions (distractors). The
//! base token marks every positive training document and appears elsewhere
//! at `confounder_rate`, independently of the truth.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{powi, sqrt};
use crate::{Corpus, Document, Error, Label, Result};

pub const TRAIN_POS: &str = "train_pos";
pub const TRAIN_NEG: &str = "train_neg";
pub const TEST_POS_ROLE: &str = "test_pos_role";
pub const TEST_NEG_ROLE: &str = "test_neg_role";
const CORPUS_NAMES: [&str; 4] = [TRAIN_POS, TRAIN_NEG, TEST_POS_ROLE, TEST_NEG_ROLE];
const ID_PREFIX: [&str; 4] = ["tp", "tn", "ta", "tb"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Train-pos, train-neg, test-pos-role and test-neg-role sizes.
    pub sizes: [usize; 4],
    /// Inclusive token-count range.
    pub doc_length: [usize; 2],
    pub shared_vocab_size: usize,
    pub zipf_exponent: f64,
    /// Each document draws filler from one of this many rotations of the
    /// frequency ranking.
    pub topics: usize,
    pub signal_terms: usize,
    pub context_terms_per_signal: usize,
    /// Expected events per positive document.
    pub signal_density: f64,
    /// Events per document are binomial over this many slots.
    pub event_slots: usize,
    pub contexts_per_event: usize,
    /// Inclusive distance range between a signal term and its context terms.
    pub context_offset: [usize; 2],
    /// Probability that a document outside the positive training corpus
    /// contains the base token.
    pub confounder_rate: f64,
    /// Probability that a train-pos or test document gets one isolated
    /// signal-term mention.
    pub distractor_rate: f64,
    /// Fraction of truly positive documents in each test corpus.
    pub test_prevalence: [f64; 2],
    pub base_token: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 20_200_101,
            sizes: [2000, 2000, 500, 500],
            doc_length: [30, 60],
            shared_vocab_size: 800,
            zipf_exponent: 1.0,
            topics: 8,
            signal_terms: 20,
            context_terms_per_signal: 3,
            signal_density: 3.0,
            event_slots: 8,
            contexts_per_event: 2,
            context_offset: [2, 4],
            confounder_rate: 0.5,
            distractor_rate: 0.3,
            test_prevalence: [0.6, 0.1],
            base_token: "suicidal".into(),
        }
    }
}

impl SynthConfig {
    /// The exchangeable variant: no signal events anywhere.
    pub fn null(self) -> Self {
        SynthConfig {
            signal_density: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.sizes.contains(&0) {
            return bad(format!("corpus sizes must be >= 1, got {:?}", self.sizes));
        }
        let [lo, hi] = self.doc_length;
        let need = 2 * self.event_slots + 2;
        if lo > hi || lo < need.max(2 * self.context_offset[1] + 2) {
            return bad(format!(
                "doc_length {:?} must be ordered with minimum >= {need}",
                self.doc_length
            ));
        }
        if self.shared_vocab_size < 20 {
            return bad("shared_vocab_size must be >= 20".into());
        }
        if self.topics == 0 || self.topics > self.shared_vocab_size {
            return bad("topics must be between 1 and shared_vocab_size".into());
        }
        if self.signal_terms == 0 || self.context_terms_per_signal == 0 {
            return bad("signal_terms and context_terms_per_signal must be >= 1".into());
        }
        let pool = context_pool(self.shared_vocab_size);
        if self.signal_terms * self.context_terms_per_signal > pool.len() {
            return bad(format!(
                "{} context terms requested but only {} mid-frequency vocabulary words exist",
                self.signal_terms * self.context_terms_per_signal,
                pool.len()
            ));
        }
        if self.event_slots == 0 || !(0.0..=self.event_slots as f64).contains(&self.signal_density) {
            return bad(format!("signal_density must be in [0, {}]", self.event_slots));
        }
        let [near, far] = self.context_offset;
        if near == 0 || near > far {
            return bad(format!(
                "context_offset {:?} must satisfy 1 <= min <= max",
                self.context_offset
            ));
        }
        if self.contexts_per_event == 0
            || self.contexts_per_event > self.context_terms_per_signal
            || self.contexts_per_event > 2 * (far - near + 1)
        {
            return bad(format!(
                "contexts_per_event must be between 1 and min(context_terms_per_signal, {})",
                2 * (far - near + 1)
            ));
        }
        for (name, p) in [
            ("confounder_rate", self.confounder_rate),
            ("distractor_rate", self.distractor_rate),
            ("test_prevalence", self.test_prevalence[0]),
            ("test_prevalence", self.test_prevalence[1]),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return bad("zipf_exponent must be finite and >= 0".into());
        }
        let base = crate::text::tokenize(&self.base_token);
        if base.len() != 1 || base[0] != self.base_token || self.base_token.len() == WORD_LEN {
            return bad(format!(
                "base_token {:?} must be one lowercase word whose length is not {WORD_LEN}",
                self.base_token
            ));
        }
        Ok(())
    }
}

const WORD_LEN: usize = 6;
/// Distractor mentions have no designated context term this close.
const DISTRACTOR_CLEARANCE: usize = 5;
const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";

/// Ranks from which context terms are drawn.
fn context_pool(shared: usize) -> core::ops::Range<usize> {
    shared / 20..shared / 2
}

/// Generated word list: shared filler vocabulary (by frequency rank), signal
/// terms and each signal's context terms.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthVocabulary {
    pub shared: Vec<String>,
    pub signals: Vec<String>,
    /// Indices into `shared`, one list per signal term.
    pub contexts: Vec<Vec<usize>>,
    cumulative: Vec<f64>,
}

impl SynthVocabulary {
    pub fn new(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, u64::MAX);
        let n_words = config.shared_vocab_size + config.signal_terms;
        let space = (CONSONANTS.len() * VOWELS.len()).pow(3);
        let words: Vec<String> = sample(&mut rng, space, n_words)
            .into_iter()
            .map(|mut k| {
                let mut w = String::with_capacity(WORD_LEN);
                for _ in 0..3 {
                    let syl = k % (CONSONANTS.len() * VOWELS.len());
                    k /= CONSONANTS.len() * VOWELS.len();
                    w.push(CONSONANTS[syl / VOWELS.len()] as char);
                    w.push(VOWELS[syl % VOWELS.len()] as char);
                }
                w
            })
            .collect();
        let (shared, signals) = words.split_at(config.shared_vocab_size);
        let pool = context_pool(config.shared_vocab_size);
        let picks = sample(
            &mut rng,
            pool.len(),
            config.signal_terms * config.context_terms_per_signal,
        );
        let picks: Vec<usize> = picks.into_iter().map(|i| pool.start + i).collect();
        let contexts = picks
            .chunks(config.context_terms_per_signal)
            .map(|c| c.to_vec())
            .collect();
        let mut cumulative = Vec::with_capacity(shared.len());
        let mut acc = 0.0;
        for r in 0..shared.len() {
            acc += 1.0 / libm::pow(r as f64 + 1.0, config.zipf_exponent);
            cumulative.push(acc);
        }
        Ok(SynthVocabulary {
            shared: shared.to_vec(),
            signals: signals.to_vec(),
            contexts,
            cumulative,
        })
    }

    /// A power-law draw whose rank order is rotated by the document topic.
    fn filler(&self, rng: &mut ChaCha8Rng, topic: usize, topics: usize) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let rank = self.cumulative.partition_point(|&c| c <= u).min(self.shared.len() - 1);
        (rank + topic * self.shared.len() / topics) % self.shared.len()
    }

    pub fn context_words(&self, signal: usize) -> impl Iterator<Item = &str> {
        self.contexts[signal].iter().map(|&i| self.shared[i].as_str())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Tok {
    Shared(usize),
    Signal(usize),
    Base,
}

struct DocPlan {
    tokens: Vec<Tok>,
    used: Vec<bool>,
}

impl DocPlan {
    fn free_positions(&self) -> Vec<usize> {
        (0..self.tokens.len()).filter(|&i| !self.used[i]).collect()
    }

    /// True if signal `s` at `i` would have one of its context terms within reach.
    fn has_context_near(&self, vocab: &SynthVocabulary, s: usize, i: usize, reach: usize) -> bool {
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(self.tokens.len() - 1);
        (lo..=hi).any(|j| j != i && matches!(self.tokens[j], Tok::Shared(w) if vocab.contexts[s].contains(&w)))
    }
}

#[derive(Clone, Copy)]
struct DocSpec {
    events: bool,
    distractors: bool,
    base_rate: f64,
}

fn generate_document(
    config: &SynthConfig,
    vocab: &SynthVocabulary,
    spec: DocSpec,
    rng: &mut ChaCha8Rng,
) -> (Vec<Tok>, usize) {
    let topic = rng.random_range(0..config.topics);
    let len = rng.random_range(config.doc_length[0]..=config.doc_length[1]);
    let mut plan = DocPlan {
        tokens: (0..len)
            .map(|_| Tok::Shared(vocab.filler(rng, topic, config.topics)))
            .collect(),
        used: vec![false; len],
    };
    let [near, far] = config.context_offset;
    let mut events = 0;
    if spec.events {
        let p = config.signal_density / config.event_slots as f64;
        let n = (0..config.event_slots).filter(|_| rng.random::<f64>() < p).count();
        for _ in 0..n {
            for _ in 0..64 {
                let i = rng.random_range(0..len);
                let offsets: Vec<usize> = (near..=far)
                    .flat_map(|d| [i.checked_sub(d), Some(i + d).filter(|&j| j < len)])
                    .flatten()
                    .filter(|&j| !plan.used[j])
                    .collect();
                if plan.used[i] || offsets.len() < config.contexts_per_event {
                    continue;
                }
                let s = rng.random_range(0..vocab.signals.len());
                let slots = sample(rng, offsets.len(), config.contexts_per_event);
                let terms = sample(rng, vocab.contexts[s].len(), config.contexts_per_event);
                plan.tokens[i] = Tok::Signal(s);
                plan.used[i] = true;
                for (slot, term) in slots.into_iter().zip(terms) {
                    plan.tokens[offsets[slot]] = Tok::Shared(vocab.contexts[s][term]);
                    plan.used[offsets[slot]] = true;
                }
                events += 1;
                break;
            }
        }
    }
    if spec.distractors && rng.random::<f64>() < config.distractor_rate {
        let s = rng.random_range(0..vocab.signals.len());
        let free: Vec<usize> = plan
            .free_positions()
            .into_iter()
            .filter(|&i| !plan.has_context_near(vocab, s, i, far.max(DISTRACTOR_CLEARANCE)))
            .collect();
        if !free.is_empty() {
            let i = free[rng.random_range(0..free.len())];
            plan.tokens[i] = Tok::Signal(s);
            plan.used[i] = true;
        }
    }
    if spec.base_rate >= 1.0 || rng.random::<f64>() < spec.base_rate {
        let free = plan.free_positions();
        let i = free[rng.random_range(0..free.len())];
        plan.tokens[i] = Tok::Base;
        plan.used[i] = true;
    }
    (plan.tokens, events)
}

/// The generated corpora and the hidden test labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpora {
    pub train_pos: Corpus,
    pub train_neg: Corpus,
    pub test_pos_role: Corpus,
    pub test_neg_role: Corpus,
    /// Ground truth for every test document, in corpus order.
    pub truth: Vec<(String, Label)>,
    pub vocabulary: SynthVocabulary,
}

impl SynthCorpora {
    pub fn corpora(&self) -> [&Corpus; 4] {
        [
            &self.train_pos,
            &self.train_neg,
            &self.test_pos_role,
            &self.test_neg_role,
        ]
    }

    pub fn truth_map(&self) -> BTreeMap<&str, Label> {
        self.truth.iter().map(|(id, l)| (id.as_str(), *l)).collect()
    }
}

/// Generates all four corpora. Document `i` of corpus `k` draws from its
/// own ChaCha stream, so output does not depend on generation order.
pub fn generate_labeled_corpora(config: &SynthConfig) -> Result<SynthCorpora> {
    let vocab = SynthVocabulary::new(config)?;
    let mut truth = Vec::new();
    let mut corpora = Vec::with_capacity(4);
    for (k, &size) in config.sizes.iter().enumerate() {
        let mut docs = Vec::with_capacity(size);
        for i in 0..size {
            let mut rng = stream_rng(config.seed, ((k as u64) << 32) | i as u64);
            let (positive, spec) = match k {
                0 => (
                    true,
                    DocSpec {
                        events: true,
                        distractors: true,
                        base_rate: 1.0,
                    },
                ),
                1 => (
                    false,
                    DocSpec {
                        events: false,
                        distractors: false,
                        base_rate: config.confounder_rate,
                    },
                ),
                _ => {
                    let positive = rng.random::<f64>() < config.test_prevalence[k - 2];
                    (
                        positive,
                        DocSpec {
                            events: positive,
                            distractors: true,
                            base_rate: config.confounder_rate,
                        },
                    )
                }
            };
            let (tokens, events) = generate_document(config, &vocab, spec, &mut rng);
            let words: Vec<&str> = tokens
                .iter()
                .map(|t| match *t {
                    Tok::Shared(w) => vocab.shared[w].as_str(),
                    Tok::Signal(s) => vocab.signals[s].as_str(),
                    Tok::Base => config.base_token.as_str(),
                })
                .collect();
            let id = format!("{}{:05}", ID_PREFIX[k], i);
            let mut doc = Document::new(id.clone(), words.join(" "));
            doc.meta.insert("planted_events".into(), format!("{events}"));
            if k >= 2 {
                truth.push((id, Label::from(positive)));
            }
            docs.push(doc);
        }
        let label = match k {
            0 => Some(Label::Positive),
            1 => Some(Label::Negative),
            _ => None,
        };
        corpora.push(Corpus::new(CORPUS_NAMES[k], docs, label)?);
    }
    let mut it = corpora.into_iter();
    Ok(SynthCorpora {
        train_pos: it.next().unwrap(),
        train_neg: it.next().unwrap(),
        test_pos_role: it.next().unwrap(),
        test_neg_role: it.next().unwrap(),
        truth,
        vocabulary: vocab,
    })
}

/// One realized rate compared with its configured expectation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    /// Standard error of `observed` under the configuration.
    pub sigma: f64,
    pub within_3_sigma: bool,
}

impl AuditCheck {
    fn new(name: &str, observed: f64, expected: f64, sigma: f64) -> Self {
        AuditCheck {
            name: name.into(),
            observed,
            expected,
            sigma,
            within_3_sigma: (observed - expected).abs() <= 3.0 * sigma + 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub corpus: String,
    pub documents: usize,
    pub signal_events: usize,
    pub signal_events_per_doc: f64,
    pub base_token_rate: f64,
    pub signal_mention_rate: f64,
    pub shared_vocab_covered: usize,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.within_3_sigma)
    }
}

/// Counts signal events (signal-term occurrences with a designated context
/// term within `context_offset[1]`), base-token and signal-mention document
/// rates, and vocabulary coverage directly from the tokens. Checks apply
/// when the corpus name is one of the generator's.
pub fn audit_corpus(corpus: &Corpus, config: &SynthConfig) -> Result<AuditReport> {
    let vocab = SynthVocabulary::new(config)?;
    let signal_index: BTreeMap<&str, usize> = vocab.signals.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let shared_set: BTreeSet<&str> = vocab.shared.iter().map(String::as_str).collect();
    let reach = config.context_offset[1];
    let (mut events, mut with_base, mut with_signal, mut covered) = (0usize, 0usize, 0usize, BTreeSet::new());
    for doc in corpus.documents() {
        let toks: Vec<String> = if doc.tokens.is_empty() {
            crate::text::tokenize(&doc.text)
        } else {
            doc.tokens.clone()
        };
        let mut has_signal = false;
        for (i, t) in toks.iter().enumerate() {
            if let Some(&s) = signal_index.get(t.as_str()) {
                has_signal = true;
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(toks.len() - 1);
                if (lo..=hi).any(|j| j != i && vocab.context_words(s).any(|c| c == toks[j])) {
                    events += 1;
                }
            } else if let Some(w) = shared_set.get(t.as_str()) {
                covered.insert(*w);
            }
        }
        with_base += toks.contains(&config.base_token) as usize;
        with_signal += has_signal as usize;
    }
    let n = corpus.len() as f64;
    let per_doc = events as f64 / n;
    let slots = config.event_slots as f64;
    let q = config.signal_density / slots;
    let event_var = slots * q * (1.0 - q);
    let event_mean = slots * q;
    let binom = |p: f64| sqrt(p * (1.0 - p) / n);
    let mut checks = Vec::new();
    let rate = |c: usize| c as f64 / n;
    match corpus.name.as_str() {
        TRAIN_POS => {
            checks.push(AuditCheck::new(
                "signal_events_per_doc",
                per_doc,
                event_mean,
                sqrt(event_var / n),
            ));
            checks.push(AuditCheck::new("base_token_rate", rate(with_base), 1.0, 0.0));
        }
        TRAIN_NEG => {
            checks.push(AuditCheck::new("signal_events_per_doc", per_doc, 0.0, 0.0));
            checks.push(AuditCheck::new("signal_mention_rate", rate(with_signal), 0.0, 0.0));
            checks.push(AuditCheck::new(
                "base_token_rate",
                rate(with_base),
                config.confounder_rate,
                binom(config.confounder_rate),
            ));
        }
        TEST_POS_ROLE | TEST_NEG_ROLE => {
            let p = config.test_prevalence[if corpus.name == TEST_POS_ROLE { 0 } else { 1 }];
            let var = p * event_var + p * (1.0 - p) * powi(event_mean, 2);
            checks.push(AuditCheck::new(
                "signal_events_per_doc",
                per_doc,
                p * event_mean,
                sqrt(var / n),
            ));
            checks.push(AuditCheck::new(
                "base_token_rate",
                rate(with_base),
                config.confounder_rate,
                binom(config.confounder_rate),
            ));
        }
        _ => {}
    }
    Ok(AuditReport {
        corpus: corpus.name.clone(),
        documents: corpus.len(),
        signal_events: events,
        signal_events_per_doc: per_doc,
        base_token_rate: rate(with_base),
        signal_mention_rate: rate(with_signal),
        shared_vocab_covered: covered.len(),
        checks,
    })
}
