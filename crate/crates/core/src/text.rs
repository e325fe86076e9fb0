//! Documents, corpora and text normalization.
//!
//! Normalization folds text to ASCII, lowercases it, splits on every
//! character that is neither a letter nor a digit, drops any piece that still
//! contains a digit, and finally splits known concatenations against a
//! lexicon (`"suicidalhomicidal"` becomes `"suicidal" "homicidal"`).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Weak (or ground-truth) binary label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Negative => 0.0,
            Label::Positive => 1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl From<bool> for Label {
    fn from(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(Error::InvalidParameter(alloc::format!(
                "label must be 0 or 1, got {other}"
            ))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// Filled by [`Corpus::preprocess`] or [`preprocess`].
    #[serde(default)]
    pub tokens: Vec<String>,
    #[serde(default)]
    pub weak_label: Option<Label>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            tokens: Vec::new(),
            weak_label: None,
            meta: BTreeMap::new(),
        }
    }

    /// A document whose tokens are already known (text is their join).
    pub fn from_tokens<S: AsRef<str>>(id: impl Into<String>, tokens: &[S]) -> Self {
        let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        Document {
            id: id.into(),
            text: tokens.join(" "),
            tokens,
            weak_label: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.weak_label = Some(label);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    documents: Vec<Document>,
    pub label: Option<Label>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids and empty document lists.
    /// Documents without a label inherit the corpus label.
    pub fn new(name: impl Into<String>, documents: Vec<Document>, label: Option<Label>) -> Result<Self> {
        let name = name.into();
        if documents.is_empty() {
            return Err(Error::EmptyCorpus(name));
        }
        let mut seen = BTreeSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        let mut documents = documents;
        if let Some(label) = label {
            for doc in &mut documents {
                doc.weak_label.get_or_insert(label);
            }
        }
        Ok(Corpus { name, documents, label })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    /// Tokenizes every document in place.
    pub fn preprocess(&mut self, lexicon: &SplitLexicon) {
        for doc in &mut self.documents {
            doc.tokens = preprocess(&doc.text, lexicon);
        }
    }

    /// Applies a token sequence per document, in corpus order.
    pub fn set_tokens(&mut self, tokens: Vec<Vec<String>>) -> Result<()> {
        if tokens.len() != self.documents.len() {
            return Err(Error::LengthMismatch {
                left: self.documents.len(),
                right: tokens.len(),
            });
        }
        for (doc, t) in self.documents.iter_mut().zip(tokens) {
            doc.tokens = t;
        }
        Ok(())
    }

    /// Set of distinct tokens across all documents.
    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.documents
            .iter()
            .flat_map(|d| d.tokens.iter().map(String::as_str))
            .collect()
    }
}

/// Words that a concatenated token may be split into.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitLexicon {
    words: BTreeSet<String>,
}

/// Minimum word length for the default, vocabulary-derived lexicon.
pub const DEFAULT_LEXICON_MIN_LEN: usize = 4;

impl SplitLexicon {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Uses exactly the given words.
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SplitLexicon {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    /// Default lexicon: vocabulary tokens of at least `min_len` letters,
    /// minus those that themselves decompose into two or more other such
    /// tokens (otherwise every concatenation seen in the corpus would protect
    /// itself from being split).
    pub fn from_vocabulary<'a, I>(vocabulary: I, min_len: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let candidates: BTreeSet<&str> = vocabulary
            .into_iter()
            .filter(|w| w.len() >= min_len && w.bytes().all(|b| b.is_ascii_lowercase()))
            .collect();
        let words = candidates
            .iter()
            .filter(|w| greedy_decompose(w, |p| candidates.contains(p), false).is_none())
            .map(|w| w.to_string())
            .collect();
        SplitLexicon { words }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// Splits `token` into lexicon words by greedy longest-prefix matching.
    /// Lexicon words and tokens that do not fully decompose come back whole.
    pub fn split<'t>(&self, token: &'t str) -> Vec<&'t str> {
        if self.words.is_empty() || self.words.contains(token) {
            return alloc::vec![token];
        }
        greedy_decompose(token, |p| self.words.contains(p), false).unwrap_or_else(|| alloc::vec![token])
    }
}

/// Greedy longest-prefix decomposition into at least two pieces. With
/// `allow_whole` false the whole token is never taken as its own prefix.
fn greedy_decompose(token: &str, contains: impl Fn(&str) -> bool, allow_whole: bool) -> Option<Vec<&str>> {
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < token.len() {
        let max_end = if start == 0 && !allow_whole {
            token.len() - 1
        } else {
            token.len()
        };
        let end = (start + 1..=max_end).rev().find(|&end| contains(&token[start..end]))?;
        pieces.push(&token[start..end]);
        start = end;
    }
    (pieces.len() >= 2).then_some(pieces)
}

/// Normalizes raw text into lowercase, letters-only tokens.
pub fn preprocess(raw: &str, lexicon: &SplitLexicon) -> Vec<String> {
    let mut out = Vec::new();
    for piece in ascii_pieces(raw) {
        if piece.bytes().any(|b| b.is_ascii_digit()) {
            continue;
        }
        for part in lexicon.split(&piece) {
            out.push(part.to_string());
        }
    }
    out
}

/// First tokenization pass without concatenation splitting; used to build
/// the default lexicon.
pub fn tokenize(raw: &str) -> Vec<String> {
    preprocess(raw, &SplitLexicon::empty())
}

/// Folds to ASCII, lowercases and splits on anything that is not `[a-z0-9]`.
/// Characters without an ASCII transliteration act as separators.
fn ascii_pieces(raw: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut current = String::new();
    let push_ascii = |c: char, current: &mut String, pieces: &mut Vec<String>| {
        let c = c.to_ascii_lowercase();
        if c.is_ascii_lowercase() || c.is_ascii_digit() {
            current.push(c);
        } else if !current.is_empty() {
            pieces.push(core::mem::take(current));
        }
    };
    for c in raw.chars() {
        if c.is_ascii() {
            push_ascii(c, &mut current, &mut pieces);
        } else {
            match deunicode::deunicode_char(c) {
                Some(folded) if !folded.is_empty() => {
                    for fc in folded.chars() {
                        push_ascii(fc, &mut current, &mut pieces);
                    }
                }
                _ => push_ascii(' ', &mut current, &mut pieces),
            }
        }
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces
}

/// True iff any token contains `base` as a substring.
pub fn contains_base_string<S: AsRef<str>>(tokens: &[S], base: &str) -> Result<bool> {
    if base.is_empty() {
        return Err(Error::EmptyBaseString);
    }
    Ok(tokens.iter().any(|t| t.as_ref().contains(base)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn pp(raw: &str) -> Vec<String> {
        preprocess(raw, &SplitLexicon::empty())
    }

    #[test]
    fn lowercases_and_strips_punctuation() {
        assert_eq!(pp("Suicide RISK: high!!"), vec!["suicide", "risk", "high"]);
    }

    #[test]
    fn digits_kill_tokens_and_slashes_split() {
        assert_eq!(pp("denies SI/HI 2x daily"), vec!["denies", "si", "hi", "daily"]);
    }

    #[test]
    fn splits_known_concatenation() {
        let lex = SplitLexicon::new(["suicidal", "homicidal"]);
        assert_eq!(preprocess("suicidalhomicidal", &lex), vec!["suicidal", "homicidal"]);
    }

    #[test]
    fn partial_decomposition_keeps_token_whole() {
        let lex = SplitLexicon::new(["suicidal"]);
        assert_eq!(preprocess("suicidalxyz", &lex), vec!["suicidalxyz"]);
    }

    #[test]
    fn greedy_takes_longest_prefix() {
        let lex = SplitLexicon::new(["over", "overdose", "dose", "plan"]);
        assert_eq!(lex.split("overdoseplan"), vec!["overdose", "plan"]);
    }

    #[test]
    fn default_lexicon_drops_concatenations() {
        let vocab = ["suicidal", "homicidal", "suicidalhomicidal", "pain", "si"];
        let lex = SplitLexicon::from_vocabulary(vocab.iter().copied(), DEFAULT_LEXICON_MIN_LEN);
        assert!(lex.contains("suicidal"));
        assert!(lex.contains("homicidal"));
        assert!(!lex.contains("suicidalhomicidal"));
        assert!(!lex.contains("si"));
        assert_eq!(lex.split("suicidalhomicidal"), vec!["suicidal", "homicidal"]);
    }

    #[test]
    fn unicode_is_folded() {
        assert_eq!(pp("Café naïve"), vec!["cafe", "naive"]);
        // no transliteration: acts as a separator
        assert_eq!(pp("ab\u{E000}cd"), vec!["ab", "cd"]);
    }

    #[test]
    fn empty_text_is_empty() {
        assert!(pp("").is_empty());
        assert!(pp("123 !!! 4x4").is_empty());
    }

    #[test]
    fn base_string_substring_match() {
        assert!(contains_base_string(&["denies", "suicidal"], "suicid").unwrap());
        assert!(!contains_base_string(&["depression", "anxiety"], "suicid").unwrap());
        assert!(!contains_base_string(&["sui"], "suicid").unwrap());
        assert_eq!(contains_base_string(&["x"], ""), Err(Error::EmptyBaseString));
    }

    #[test]
    fn corpus_rejects_duplicates_and_empty() {
        let docs = vec![Document::new("n1", "a"), Document::new("n1", "b")];
        assert_eq!(Corpus::new("c", docs, None), Err(Error::DuplicateId("n1".into())));
        assert!(matches!(Corpus::new("c", vec![], None), Err(Error::EmptyCorpus(_))));
    }

    #[test]
    fn corpus_label_fills_missing_document_labels() {
        let docs = vec![
            Document::new("a", "x").with_label(Label::Negative),
            Document::new("b", "y"),
        ];
        let c = Corpus::new("c", docs, Some(Label::Positive)).unwrap();
        assert_eq!(c.documents()[0].weak_label, Some(Label::Negative));
        assert_eq!(c.documents()[1].weak_label, Some(Label::Positive));
    }

    fn letter_runs(s: &str) -> usize {
        let mut runs = 0;
        let mut in_run = false;
        for c in s.chars() {
            let letter = c.is_ascii_alphabetic();
            if letter && !in_run {
                runs += 1;
            }
            in_run = letter;
        }
        runs
    }

    proptest! {
        #[test]
        fn tokens_are_lowercase_letters(raw in "\\PC{0,80}") {
            for t in pp(&raw) {
                prop_assert!(!t.is_empty());
                prop_assert!(t.bytes().all(|b| b.is_ascii_lowercase()), "{t:?}");
            }
        }

        #[test]
        fn preprocess_is_idempotent(raw in "[a-zA-Z0-9 ,./:!?-]{0,80}", words in proptest::collection::vec("[a-z]{4,7}", 0..6)) {
            let lex = SplitLexicon::new(words);
            let once = preprocess(&raw, &lex);
            let twice = preprocess(&once.join(" "), &lex);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn token_count_bounded_by_runs_plus_splits(raw in "[a-zA-Z0-9 ,./:!?-]{0,80}", words in proptest::collection::vec("[a-z]{2,4}", 0..8)) {
            let lex = SplitLexicon::new(words);
            let plain = pp(&raw);
            let split = preprocess(&raw, &lex);
            let splits_applied = split.len() - plain.len();
            prop_assert!(plain.len() <= letter_runs(&raw));
            prop_assert!(split.len() <= letter_runs(&raw) + splits_applied);
        }

        #[test]
        fn order_is_preserved(words in proptest::collection::vec("[a-z]{1,8}", 0..20)) {
            let raw = words.join(", ");
            prop_assert_eq!(pp(&raw), words);
        }
    }
}
