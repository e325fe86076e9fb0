//! Bag-of-bigrams comparator: the most frequent positive-corpus bigrams that
//! never occur in the negative corpus, counted per document.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::space::FeatureVector;
use crate::{Corpus, Document, Error, Result};

pub const DEFAULT_BIGRAMS: usize = 163;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BigramFeature {
    pub first: String,
    pub second: String,
    /// Occurrences in the positive corpus.
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BigramFeatureSet {
    pub bigrams: Vec<BigramFeature>,
    /// Requested size; `bigrams` is shorter when too few candidates exist.
    pub k: usize,
}

impl BigramFeatureSet {
    pub fn len(&self) -> usize {
        self.bigrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bigrams.is_empty()
    }

    pub fn shortfall(&self) -> usize {
        self.k.saturating_sub(self.bigrams.len())
    }

    fn index(&self) -> BTreeMap<(&str, &str), usize> {
        self.bigrams
            .iter()
            .enumerate()
            .map(|(i, b)| ((b.first.as_str(), b.second.as_str()), i))
            .collect()
    }
}

/// Adjacent token pairs with their multiplicities.
pub fn extract_bigrams<S: AsRef<str>>(tokens: &[S]) -> BTreeMap<(&str, &str), u64> {
    let mut out = BTreeMap::new();
    for w in tokens.windows(2) {
        *out.entry((w[0].as_ref(), w[1].as_ref())).or_insert(0) += 1;
    }
    out
}

fn corpus_bigrams(corpus: &Corpus) -> BTreeMap<(&str, &str), u64> {
    let mut out = BTreeMap::new();
    for doc in corpus.documents() {
        for (k, v) in extract_bigrams(&doc.tokens) {
            *out.entry(k).or_insert(0) += v;
        }
    }
    out
}

/// Top `k` bigrams by positive-corpus count (ties by pair) among those with
/// zero negative-corpus occurrences.
pub fn select_top_unique_bigrams(pos: &Corpus, neg: &Corpus, k: usize) -> Result<BigramFeatureSet> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let neg_counts = corpus_bigrams(neg);
    let mut candidates: Vec<((&str, &str), u64)> = corpus_bigrams(pos)
        .into_iter()
        .filter(|(b, _)| !neg_counts.contains_key(b))
        .collect();
    candidates.sort_by(|a, b| match b.1.cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    candidates.truncate(k);
    Ok(BigramFeatureSet {
        bigrams: candidates
            .into_iter()
            .map(|((a, b), count)| BigramFeature {
                first: a.to_string(),
                second: b.to_string(),
                count,
            })
            .collect(),
        k,
    })
}

/// Raw occurrence counts of each feature bigram, in feature order.
pub fn map_document_bigram_counts<S: AsRef<str>>(tokens: &[S], set: &BigramFeatureSet) -> Vec<f64> {
    let index = set.index();
    let mut v = vec![0.0; set.len()];
    for w in tokens.windows(2) {
        if let Some(&i) = index.get(&(w[0].as_ref(), w[1].as_ref())) {
            v[i] += 1.0;
        }
    }
    v
}

pub fn map_corpus_document_bigrams(doc: &Document, set: &BigramFeatureSet) -> FeatureVector {
    FeatureVector::new(doc.id.clone(), map_document_bigram_counts(&doc.tokens, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(name: &str, docs: &[&[&str]]) -> Corpus {
        let docs = docs
            .iter()
            .enumerate()
            .map(|(i, t)| Document::from_tokens(alloc::format!("{name}{i}"), t))
            .collect();
        Corpus::new(name, docs, None).unwrap()
    }

    #[test]
    fn extraction_examples() {
        let b = extract_bigrams(&["a", "b", "c"]);
        assert_eq!(
            b.into_iter().collect::<Vec<_>>(),
            vec![(("a", "b"), 1), (("b", "c"), 1)]
        );
        assert!(extract_bigrams(&["a"]).is_empty());
        assert_eq!(extract_bigrams(&["x", "x", "x"]).get(&("x", "x")), Some(&2));
    }

    #[test]
    fn selection_excludes_negative_bigrams_and_orders() {
        let pos = corpus("p", &[&["a", "b", "a", "b", "c"], &["z", "y", "a", "b"], &["c", "d"]]);
        let neg = corpus("n", &[&["q", "a", "b"], &["b", "a"]]);
        let set = select_top_unique_bigrams(&pos, &neg, DEFAULT_BIGRAMS).unwrap();
        let pairs: Vec<(&str, &str, u64)> = set
            .bigrams
            .iter()
            .map(|b| (b.first.as_str(), b.second.as_str(), b.count))
            .collect();
        assert_eq!(pairs, vec![("b", "c", 1), ("c", "d", 1), ("y", "a", 1), ("z", "y", 1)]);
        assert_eq!(set.k, 163);
        assert_eq!(set.shortfall(), 159);
        let top1 = select_top_unique_bigrams(&pos, &neg, 1).unwrap();
        assert_eq!(top1.len(), 1);
        assert_eq!(top1.bigrams[0].first, "b");
    }

    #[test]
    fn identical_corpora_give_nothing() {
        let pos = corpus("p", &[&["a", "b", "c"]]);
        let neg = corpus("n", &[&["a", "b", "c"]]);
        let set = select_top_unique_bigrams(&pos, &neg, 163).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.shortfall(), 163);
        assert!(select_top_unique_bigrams(&pos, &neg, 0).is_err());
    }

    #[test]
    fn counting() {
        let pos = corpus("p", &[&["a", "b", "a", "b"], &["c", "d"]]);
        let neg = corpus("n", &[&["x"]]);
        let set = select_top_unique_bigrams(&pos, &neg, 3).unwrap();
        assert_eq!(set.bigrams[0].first, "a");
        assert_eq!(
            map_document_bigram_counts(&["a", "b", "q", "a", "b"], &set),
            vec![2.0, 0.0, 0.0]
        );
        assert_eq!(map_document_bigram_counts(&["q", "r"], &set), vec![0.0; 3]);
        assert_eq!(map_document_bigram_counts::<&str>(&[], &set).len(), 3);
    }

    fn arb_docs() -> impl Strategy<Value = Vec<Vec<String>>> {
        prop::collection::vec(
            prop::collection::vec(
                prop::sample::select(vec!["a", "b", "c", "d", "e"]).prop_map(String::from),
                0..12,
            ),
            1..8,
        )
    }

    proptest! {
        #[test]
        fn selected_bigrams_never_in_negative(p in arb_docs(), n in arb_docs(), k in 1usize..20) {
            let pc = Corpus::new("p", p.iter().enumerate().map(|(i, t)| Document::from_tokens(alloc::format!("p{i}"), t)).collect(), None).unwrap();
            let nc = Corpus::new("n", n.iter().enumerate().map(|(i, t)| Document::from_tokens(alloc::format!("n{i}"), t)).collect(), None).unwrap();
            let set = select_top_unique_bigrams(&pc, &nc, k).unwrap();
            prop_assert!(set.len() <= k);
            for b in &set.bigrams {
                let in_neg = n.iter().any(|d| d.windows(2).any(|w| w[0] == b.first && w[1] == b.second));
                prop_assert!(!in_neg);
                prop_assert!(b.count >= 1);
            }
            for w in set.bigrams.windows(2) {
                prop_assert!(w[0].count > w[1].count || (w[0].count == w[1].count && (&w[0].first, &w[0].second) < (&w[1].first, &w[1].second)));
            }
            for d in &p {
                let v = map_document_bigram_counts(d, &set);
                prop_assert_eq!(v.len(), set.len());
                let s: f64 = v.iter().sum();
                prop_assert!(v.iter().all(|x| *x >= 0.0 && x.fract() == 0.0));
                prop_assert!(s <= d.len().saturating_sub(1) as f64);
            }
        }
    }
}
