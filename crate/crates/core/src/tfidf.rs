//! Per-corpus TF-IDF statistics and feature-word selection.
//!
//! For term `i` in document `j`, `t = tf * ln(n / df)` where `tf` is the
//! term's relative frequency in the document, `n` the number of documents in
//! the corpus and `df` the number of documents containing the term. Each
//! term is then summarized by its mean `t` in the corpus.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{ln, score_desc_then_name};
use crate::text::{Corpus, Document};
use crate::{Error, Result};

/// Which documents a term's TF-IDF values are averaged over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanOver {
    /// Only the documents that contain the term.
    #[default]
    ContainingDocuments,
    /// Every document in the corpus (absent terms contribute zero).
    AllDocuments,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfTable {
    pub corpus_name: String,
    pub n_docs: usize,
    pub averaging: MeanOver,
    df: BTreeMap<String, usize>,
    mean_tfidf: BTreeMap<String, f64>,
}

impl TfidfTable {
    pub fn df(&self, term: &str) -> Option<usize> {
        self.df.get(term).copied()
    }

    pub fn mean_tfidf(&self, term: &str) -> Option<f64> {
        self.mean_tfidf.get(term).copied()
    }

    /// `ln(n / df)`; `None` for terms outside the vocabulary.
    pub fn idf(&self, term: &str) -> Option<f64> {
        self.df(term).map(|df| ln(self.n_docs as f64 / df as f64))
    }

    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.df.keys().map(String::as_str)
    }

    pub fn vocab_len(&self) -> usize {
        self.df.len()
    }

    /// `(term, mean_tfidf)` in lexicographic term order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.mean_tfidf.iter().map(|(t, &v)| (t.as_str(), v))
    }
}

fn term_counts(tokens: &[String]) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

/// TF-IDF of `term` in `doc`, using the corpus statistics in `table`.
/// Terms outside the table's vocabulary weigh zero.
pub fn tfidf_weight(term: &str, doc: &Document, table: &TfidfTable) -> Result<f64> {
    if doc.tokens.is_empty() {
        return Err(Error::EmptyDocument(doc.id.clone()));
    }
    let count = doc.tokens.iter().filter(|t| t.as_str() == term).count();
    if count == 0 {
        return Ok(0.0);
    }
    let idf = table.idf(term).unwrap_or(0.0);
    Ok(count as f64 / doc.tokens.len() as f64 * idf)
}

pub fn build_tfidf_table(corpus: &Corpus, averaging: MeanOver) -> Result<TfidfTable> {
    let empty: Vec<String> = corpus
        .documents()
        .iter()
        .filter(|d| d.tokens.is_empty())
        .map(|d| d.id.clone())
        .collect();
    if !empty.is_empty() {
        return Err(Error::EmptyDocuments {
            corpus: corpus.name.clone(),
            ids: empty,
        });
    }
    let n_docs = corpus.len();
    let counts: Vec<BTreeMap<&str, usize>> = corpus.documents().iter().map(|d| term_counts(&d.tokens)).collect();

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc_counts in &counts {
        for &term in doc_counts.keys() {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let idf: BTreeMap<&str, f64> = df.iter().map(|(&t, &d)| (t, ln(n_docs as f64 / d as f64))).collect();

    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for (doc, doc_counts) in corpus.documents().iter().zip(&counts) {
        let len = doc.tokens.len() as f64;
        for (&term, &c) in doc_counts {
            *sums.entry(term).or_insert(0.0) += c as f64 / len * idf[term];
        }
    }

    let mean_tfidf = sums
        .into_iter()
        .map(|(term, sum)| {
            let denom = match averaging {
                MeanOver::ContainingDocuments => df[term],
                MeanOver::AllDocuments => n_docs,
            };
            (term.to_string(), sum / denom as f64)
        })
        .collect();
    Ok(TfidfTable {
        corpus_name: corpus.name.clone(),
        n_docs,
        averaging,
        df: df.into_iter().map(|(t, d)| (t.to_string(), d)).collect(),
        mean_tfidf,
    })
}

/// The `n` terms with the highest mean TF-IDF, ties broken alphabetically.
pub fn top_n_terms(table: &TfidfTable, n: usize) -> Vec<String> {
    let mut ranked: Vec<(&str, f64)> = table.iter().collect();
    ranked.sort_by(|a, b| score_desc_then_name((a.1, a.0), (b.1, b.0)));
    ranked.into_iter().take(n).map(|(t, _)| t.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub word: String,
    pub mean_tfidf: f64,
}

/// Feature words in vector-layout order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub features: Vec<Feature>,
    pub n_requested: usize,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.word.as_str())
    }
}

/// Top positive terms that are not top negative terms, ordered by the
/// positive corpus's mean TF-IDF.
pub fn select_features(pos_table: &TfidfTable, top_pos: &[String], top_neg: &[String]) -> Result<FeatureSet> {
    let excluded: BTreeSet<&str> = top_neg.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    let mut features: Vec<Feature> = top_pos
        .iter()
        .filter(|w| !excluded.contains(w.as_str()) && seen.insert(w.as_str()))
        .map(|w| Feature {
            word: w.clone(),
            mean_tfidf: pos_table.mean_tfidf(w).unwrap_or(0.0),
        })
        .collect();
    if features.is_empty() {
        return Err(Error::NoFeatures);
    }
    features.sort_by(|a, b| score_desc_then_name((a.mean_tfidf, &a.word), (b.mean_tfidf, &b.word)));
    Ok(FeatureSet {
        features,
        n_requested: top_pos.len().max(top_neg.len()),
    })
}

/// Runs the whole selection: both tables, both top-`n` lists, set difference.
pub fn feature_words(
    pos: &Corpus,
    neg: &Corpus,
    n: usize,
    averaging: MeanOver,
) -> Result<(FeatureSet, TfidfTable, TfidfTable)> {
    let pos_table = build_tfidf_table(pos, averaging)?;
    let neg_table = build_tfidf_table(neg, averaging)?;
    let mut set = select_features(&pos_table, &top_n_terms(&pos_table, n), &top_n_terms(&neg_table, n))?;
    set.n_requested = n;
    Ok((set, pos_table, neg_table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Label;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn corpus(docs: &[&[&str]]) -> Corpus {
        let docs = docs
            .iter()
            .enumerate()
            .map(|(i, toks)| Document::from_tokens(alloc::format!("d{i}"), toks))
            .collect();
        Corpus::new("c", docs, Some(Label::Positive)).unwrap()
    }

    fn strings(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn weight_hand_oracle() {
        // n = 4, doc of 10 tokens containing "x" twice, df(x) = 1
        let c = corpus(&[
            &["x", "x", "a", "a", "a", "a", "a", "a", "a", "a"],
            &["a"],
            &["a"],
            &["a"],
        ]);
        let t = build_tfidf_table(&c, MeanOver::ContainingDocuments).unwrap();
        let w = tfidf_weight("x", &c.documents()[0], &t).unwrap();
        assert!((w - 0.2 * 4f64.ln()).abs() < 1e-15);
        assert!((w - 0.277259).abs() < 1e-6);
        assert_eq!(tfidf_weight("a", &c.documents()[0], &t).unwrap(), 0.0);
        assert_eq!(tfidf_weight("x", &c.documents()[1], &t).unwrap(), 0.0);
    }

    #[test]
    fn weight_of_empty_document_is_an_error() {
        let c = corpus(&[&["a"]]);
        let t = build_tfidf_table(&c, MeanOver::default()).unwrap();
        let empty = Document::new("e", "");
        assert_eq!(tfidf_weight("a", &empty, &t), Err(Error::EmptyDocument("e".into())));
    }

    #[test]
    fn single_document_corpus_is_all_zero() {
        let c = corpus(&[&["a", "b", "b"]]);
        let t = build_tfidf_table(&c, MeanOver::ContainingDocuments).unwrap();
        assert!(t.iter().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn mean_over_containing_documents() {
        // "t" is in 2 of 4 documents; its mean is taken over those 2 only
        let c = corpus(&[&["t", "a"], &["t", "b", "b", "b"], &["a"], &["b"]]);
        let t = build_tfidf_table(&c, MeanOver::ContainingDocuments).unwrap();
        let w0 = tfidf_weight("t", &c.documents()[0], &t).unwrap();
        let w1 = tfidf_weight("t", &c.documents()[1], &t).unwrap();
        assert!((t.mean_tfidf("t").unwrap() - (w0 + w1) / 2.0).abs() < 1e-15);
        let all = build_tfidf_table(&c, MeanOver::AllDocuments).unwrap();
        assert!((all.mean_tfidf("t").unwrap() - (w0 + w1) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn vocabulary_is_union_of_tokens() {
        let c = corpus(&[&["a", "b"], &["b", "c"]]);
        let t = build_tfidf_table(&c, MeanOver::default()).unwrap();
        assert_eq!(t.vocab().collect::<Vec<_>>(), vec!["a", "b", "c"]);
        assert_eq!(t.df("b"), Some(2));
    }

    #[test]
    fn empty_documents_are_reported() {
        let docs = vec![Document::from_tokens("ok", &["a"]), Document::new("bad", "")];
        let c = Corpus::new("c", docs, None).unwrap();
        assert_eq!(
            build_tfidf_table(&c, MeanOver::default()),
            Err(Error::EmptyDocuments {
                corpus: "c".into(),
                ids: vec!["bad".into()]
            })
        );
    }

    fn table_with(means: &[(&str, f64)]) -> TfidfTable {
        TfidfTable {
            corpus_name: "t".into(),
            n_docs: 10,
            averaging: MeanOver::default(),
            df: means.iter().map(|(w, _)| (w.to_string(), 1)).collect(),
            mean_tfidf: means.iter().map(|(w, v)| (w.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn top_n_ordering_and_ties() {
        let t = table_with(&[("a", 0.5), ("b", 0.3), ("c", 0.1)]);
        assert_eq!(top_n_terms(&t, 2), strings(&["a", "b"]));
        assert_eq!(top_n_terms(&t, 10), strings(&["a", "b", "c"]));
        let tie = table_with(&[("y", 0.4), ("x", 0.4)]);
        assert_eq!(top_n_terms(&tie, 1), strings(&["x"]));
    }

    #[test]
    fn feature_set_difference() {
        let t = table_with(&[("flag", 0.9), ("overdose", 0.8), ("pain", 0.7)]);
        let f = select_features(
            &t,
            &strings(&["flag", "overdose", "pain"]),
            &strings(&["pain", "visit"]),
        )
        .unwrap();
        assert_eq!(f.words().collect::<Vec<_>>(), vec!["flag", "overdose"]);
        let all = select_features(&t, &strings(&["flag", "overdose"]), &strings(&["visit"])).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(
            select_features(&t, &strings(&["pain"]), &strings(&["pain"])),
            Err(Error::NoFeatures)
        );
    }

    proptest! {
        #[test]
        fn selected_features_avoid_negative_list(
            pos in proptest::collection::vec("[a-e]{1,2}", 1..15),
            neg in proptest::collection::vec("[a-e]{1,2}", 0..15),
        ) {
            let t = table_with(&[]);
            if let Ok(f) = select_features(&t, &pos, &neg) {
                for w in f.words() {
                    prop_assert!(!neg.iter().any(|n| n == w));
                    prop_assert!(pos.iter().any(|p| p == w));
                }
            }
        }

        #[test]
        fn table_invariants(docs in proptest::collection::vec(proptest::collection::vec("[a-f]", 1..12), 1..12)) {
            let refs: Vec<Vec<&str>> = docs.iter().map(|d| d.iter().map(String::as_str).collect()).collect();
            let slices: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
            let c = corpus(&slices);
            let t = build_tfidf_table(&c, MeanOver::ContainingDocuments).unwrap();
            for (term, mean) in t.iter() {
                let df = t.df(term).unwrap();
                prop_assert!(df >= 1 && df <= t.n_docs);
                prop_assert!(mean >= 0.0);
                prop_assert_eq!(mean == 0.0, df == t.n_docs);
            }
        }

        #[test]
        fn adding_a_covering_document_bounds_idf_growth(docs in proptest::collection::vec(proptest::collection::vec("[a-f]", 1..12), 1..12)) {
            let refs: Vec<Vec<&str>> = docs.iter().map(|d| d.iter().map(String::as_str).collect()).collect();
            let slices: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
            let before = build_tfidf_table(&corpus(&slices), MeanOver::default()).unwrap();
            let cover: Vec<&str> = before.vocab().collect();
            let mut more = slices.clone();
            more.push(&cover);
            let after = build_tfidf_table(&corpus(&more), MeanOver::default()).unwrap();
            let n = before.n_docs as f64;
            for term in before.vocab() {
                prop_assert!(after.idf(term).unwrap() <= before.idf(term).unwrap() + ((n + 1.0) / n).ln() + 1e-12);
            }
        }
    }
}
