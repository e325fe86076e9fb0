//! Confusion matrices, threshold metrics, ROC AUC and the triage query.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::text::{contains_base_string, tokenize};
use crate::{Corpus, Error, Label, Result};

/// Printed in place of a metric whose denominator is zero.
pub const UNDEFINED_MARKER: &str = "NaN/div by 0";
pub const DEFAULT_TAUS: [f64; 3] = [0.15, 0.5, 0.85];
pub const DEFAULT_TRIAGE_TAU: f64 = 0.90;
pub const COMBINED: &str = "Combined";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(flatten)]
    pub counts: Counts,
    pub threshold: f64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64, threshold: f64) -> Self {
        ConfusionMatrix {
            counts: Counts { tp, fp, tn, fn_ },
            threshold,
        }
    }

    pub fn total(&self) -> u64 {
        let c = self.counts;
        c.tp + c.fp + c.tn + c.fn_
    }
}

/// A ratio, or the undefined marker when its denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    pub fn ratio(num: u64, den: u64) -> Metric {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Value(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }

    pub fn is_undefined(self) -> bool {
        self == Metric::Undefined
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => match f.precision() {
                Some(p) => write!(f, "{v:.p$}"),
                None => write!(f, "{v}"),
            },
            Metric::Undefined => f.write_str(UNDEFINED_MARKER),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Undefined => s.serialize_str(UNDEFINED_MARKER),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Metric::Value(v)),
            Raw::Str(s) if s == UNDEFINED_MARKER => Ok(Metric::Undefined),
            Raw::Str(s) => Err(serde::de::Error::custom(alloc::format!("unexpected metric {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sensitivity: Metric,
    pub specificity: Metric,
    pub ppv: Metric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub subset: String,
    pub confusion: ConfusionMatrix,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub subset: String,
    pub positives: u64,
    pub negatives: u64,
    pub auc: Metric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub taus: Vec<f64>,
    pub rows: Vec<MetricsRow>,
    pub auc: Vec<AucRow>,
}

fn check_aligned(probs: &[f64], labels: &[Label]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput("probabilities"));
    }
    if let Some(i) = probs.iter().position(|p| p.is_nan()) {
        return Err(Error::NonFiniteScore(i));
    }
    Ok(())
}

/// A prediction is positive when `prob >= tau`.
pub fn confusion_at_threshold(probs: &[f64], labels: &[Label], tau: f64) -> Result<ConfusionMatrix> {
    check_aligned(probs, labels)?;
    let mut c = Counts::default();
    for (&p, &l) in probs.iter().zip(labels) {
        match (p >= tau, l.is_positive()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(ConfusionMatrix {
        counts: c,
        threshold: tau,
    })
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Metrics {
    let Counts { tp, fp, tn, fn_ } = cm.counts;
    Metrics {
        sensitivity: Metric::ratio(tp, tp + fn_),
        specificity: Metric::ratio(tn, tn + fp),
        ppv: Metric::ratio(tp, tp + fp),
    }
}

/// Twice the Mann-Whitney U statistic (ties count one half), with the
/// positive and negative counts.
fn twice_u(probs: &[f64], labels: &[Label]) -> (u128, u64, u64) {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let (mut two_u, mut neg_below, mut pos_total) = (0u128, 0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            if labels[order[j]].is_positive() {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        two_u += 2 * pos as u128 * neg_below as u128 + pos as u128 * neg as u128;
        neg_below += neg;
        pos_total += pos;
        i = j;
    }
    (two_u, pos_total, neg_below)
}

/// Probability that a random positive outscores a random negative.
pub fn roc_auc(probs: &[f64], labels: &[Label]) -> Result<f64> {
    check_aligned(probs, labels)?;
    let (two_u, pos, neg) = twice_u(probs, labels);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok(two_u as f64 / (2 * pos as u128 * neg as u128) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// One point per distinct score (descending), preceded by the origin at an
/// infinite threshold.
pub fn roc_curve(probs: &[f64], labels: &[Label]) -> Result<Vec<RocPoint>> {
    check_aligned(probs, labels)?;
    let pos = labels.iter().filter(|l| l.is_positive()).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut points = Vec::with_capacity(order.len() + 1);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let score = probs[order[i]];
        while i < order.len() && probs[order[i]] == score {
            if labels[order[i]].is_positive() {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: score,
            fpr: fp / neg,
            tpr: tp / pos,
        });
    }
    Ok(points)
}

fn row(subset: &str, cm: ConfusionMatrix) -> MetricsRow {
    MetricsRow {
        subset: subset.to_string(),
        metrics: classification_metrics(&cm),
        confusion: cm,
    }
}

fn auc_row(subset: &str, probs: &[f64], labels: &[Label]) -> AucRow {
    let (two_u, pos, neg) = twice_u(probs, labels);
    let auc = if pos == 0 || neg == 0 {
        Metric::Undefined
    } else {
        Metric::Value(two_u as f64 / (2 * pos as u128 * neg as u128) as f64)
    };
    AucRow {
        subset: subset.to_string(),
        positives: pos,
        negatives: neg,
        auc,
    }
}

/// Metrics at each threshold for every named subset. With more than one
/// subset a combined row is added per threshold whose counts are the sums of
/// the subset counts, and a combined AUC over the pooled scores.
pub fn threshold_sweep(subsets: &[(&str, &[f64], &[Label])], taus: &[f64]) -> Result<MetricsReport> {
    if subsets.is_empty() {
        return Err(Error::EmptyInput("subsets"));
    }
    if taus.is_empty() {
        return Err(Error::EmptyInput("taus"));
    }
    for (_, p, l) in subsets {
        check_aligned(p, l)?;
    }
    let mut rows = Vec::new();
    for &tau in taus {
        let mut sum = Counts::default();
        for (name, p, l) in subsets {
            let cm = confusion_at_threshold(p, l, tau)?;
            sum.tp += cm.counts.tp;
            sum.fp += cm.counts.fp;
            sum.tn += cm.counts.tn;
            sum.fn_ += cm.counts.fn_;
            rows.push(row(name, cm));
        }
        if subsets.len() > 1 {
            rows.push(row(
                COMBINED,
                ConfusionMatrix {
                    counts: sum,
                    threshold: tau,
                },
            ));
        }
    }
    let mut auc: Vec<AucRow> = subsets.iter().map(|(n, p, l)| auc_row(n, p, l)).collect();
    if subsets.len() > 1 {
        let probs: Vec<f64> = subsets.iter().flat_map(|s| s.1.iter().copied()).collect();
        let labels: Vec<Label> = subsets.iter().flat_map(|s| s.2.iter().copied()).collect();
        auc.push(auc_row(COMBINED, &probs, &labels));
    }
    Ok(MetricsReport {
        taus: taus.to_vec(),
        rows,
        auc,
    })
}

pub fn median_probability(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::EmptyInput("probabilities"));
    }
    if let Some(i) = probs.iter().position(|p| p.is_nan()) {
        return Err(Error::NonFiniteScore(i));
    }
    let mut v = probs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriageHit {
    pub id: String,
    pub probability: f64,
}

/// Documents that contain `base` and score at least `tau`, highest first
/// (ties by id). Documents without tokens are matched on their raw text.
pub fn triage_query(corpus: &Corpus, probs: &[f64], base: &str, tau: f64) -> Result<Vec<TriageHit>> {
    if probs.len() != corpus.len() {
        return Err(Error::LengthMismatch {
            left: corpus.len(),
            right: probs.len(),
        });
    }
    if base.is_empty() {
        return Err(Error::EmptyBaseString);
    }
    let mut hits = Vec::new();
    for (doc, &p) in corpus.documents().iter().zip(probs) {
        if p.is_nan() || p < tau {
            continue;
        }
        let has = if doc.tokens.is_empty() {
            contains_base_string(&tokenize(&doc.text), base)?
        } else {
            contains_base_string(&doc.tokens, base)?
        };
        if has {
            hits.push(TriageHit {
                id: doc.id.clone(),
                probability: p,
            });
        }
    }
    hits.sort_by(|a, b| b.probability.total_cmp(&a.probability).then_with(|| a.id.cmp(&b.id)));
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Document;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn labels(xs: &[u8]) -> Vec<Label> {
        xs.iter().map(|&x| Label::from(x == 1)).collect()
    }

    fn brute_auc(p: &[f64], l: &[Label]) -> f64 {
        let (mut s, mut n) = (0.0, 0.0);
        for i in 0..p.len() {
            for j in 0..p.len() {
                if l[i].is_positive() && !l[j].is_positive() {
                    n += 1.0;
                    if p[i] > p[j] {
                        s += 1.0;
                    } else if p[i] == p[j] {
                        s += 0.5;
                    }
                }
            }
        }
        s / n
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion_at_threshold(&[0.9, 0.4], &labels(&[1, 0]), 0.5).unwrap();
        assert_eq!(
            cm.counts,
            Counts {
                tp: 1,
                fp: 0,
                tn: 1,
                fn_: 0
            }
        );
        let cm = confusion_at_threshold(&[0.9, 0.4, 0.1], &labels(&[1, 0, 1]), 0.0).unwrap();
        assert_eq!((cm.counts.fn_, cm.counts.tn), (0, 0));
        let cm = confusion_at_threshold(&[0.9, 0.4, 0.1], &labels(&[1, 0, 1]), 0.95).unwrap();
        assert_eq!((cm.counts.tp, cm.counts.fp), (0, 0));
        let cm = confusion_at_threshold(&[0.5], &labels(&[1]), 0.5).unwrap();
        assert_eq!(cm.counts.tp, 1);
        assert!(confusion_at_threshold(&[0.5], &labels(&[1, 0]), 0.5).is_err());
        assert!(confusion_at_threshold(&[], &[], 0.5).is_err());
    }

    #[test]
    fn hand_derived_metrics() {
        let m = classification_metrics(&ConfusionMatrix::new(8, 2, 5, 1, 0.5));
        assert_eq!(format!("{:.3}", m.sensitivity), "0.889");
        assert_eq!(format!("{:.3}", m.specificity), "0.714");
        assert_eq!(format!("{:.3}", m.ppv), "0.800");
        let m = classification_metrics(&ConfusionMatrix::new(0, 0, 5, 3, 0.9));
        assert_eq!(m.ppv, Metric::Undefined);
        assert_eq!(format!("{}", m.ppv), "NaN/div by 0");
        assert_eq!(m.sensitivity, Metric::Value(0.0));
        let m = classification_metrics(&ConfusionMatrix::new(4, 0, 0, 1, 0.5));
        assert!(m.specificity.is_undefined());
    }

    #[test]
    fn metric_serde() {
        let json = serde_json::to_string(&[Metric::Value(0.25), Metric::Undefined]).unwrap();
        assert_eq!(json, r#"[0.25,"NaN/div by 0"]"#);
        let back: Vec<Metric> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Metric::Value(0.25), Metric::Undefined]);
        assert!(serde_json::from_str::<Metric>(r#""nan""#).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.6, 0.3, 0.2], &labels(&[1, 0, 1, 0])).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1], &labels(&[1, 1, 0])).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4; 6], &labels(&[1, 0, 1, 0, 0, 1])).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.2], &labels(&[1, 1])), Err(Error::SingleClass));
    }

    #[test]
    fn roc_curve_area_matches_auc() {
        let p = [0.9, 0.6, 0.6, 0.3, 0.2, 0.2];
        let l = labels(&[1, 0, 1, 1, 0, 0]);
        let pts = roc_curve(&p, &l).unwrap();
        assert_eq!(pts.first().unwrap().tpr, 0.0);
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        let area: f64 = pts
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum();
        assert!((area - roc_auc(&p, &l).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sweep_layout() {
        let (p1, l1) = (vec![0.9, 0.2, 0.6], labels(&[1, 0, 0]));
        let (p2, l2) = (vec![0.1, 0.95], labels(&[0, 0]));
        let r = threshold_sweep(&[("testSet1", &p1, &l1), ("testSet2", &p2, &l2)], &DEFAULT_TAUS).unwrap();
        assert_eq!(r.taus, vec![0.15, 0.5, 0.85]);
        assert_eq!(r.rows.len(), 9);
        assert_eq!(r.rows[2].subset, COMBINED);
        assert_eq!(
            r.rows[2].confusion.counts,
            Counts {
                tp: 1,
                fp: 3,
                tn: 1,
                fn_: 0
            }
        );
        assert_eq!(r.auc[1].auc, Metric::Undefined);
        assert_eq!(r.auc[0].auc, Metric::Value(1.0));
        assert_eq!(r.auc[2].subset, COMBINED);
        let single = threshold_sweep(&[("only", &p1, &l1)], &[0.5]).unwrap();
        assert_eq!(single.rows.len(), 1);
    }

    #[test]
    fn medians() {
        assert_eq!(median_probability(&[0.3, 0.1, 0.2]).unwrap(), 0.2);
        assert_eq!(median_probability(&[0.5, 0.1, 0.3, 0.2]).unwrap(), 0.25);
        assert!(median_probability(&[]).is_err());
    }

    #[test]
    fn triage_rules() {
        let docs = vec![
            Document::from_tokens("a", &["patient", "suicidal", "today"]),
            Document::from_tokens("b", &["no", "ideation"]),
            Document::from_tokens("c", &["suicide", "risk"]),
            Document::new("d", "Suicidality screen"),
        ];
        let corpus = Corpus::new("t", docs, None).unwrap();
        let hits = triage_query(&corpus, &[0.91, 0.99, 0.95, 0.90], "suicid", 0.90).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "d"]);
        assert!(triage_query(&corpus, &[0.91, 0.99, 0.95, 0.999], "suicid", 1.0)
            .unwrap()
            .is_empty());
        assert!(triage_query(&corpus, &[0.9], "suicid", 0.9).is_err());
        assert!(triage_query(&corpus, &[0.9; 4], "", 0.9).is_err());
    }

    fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
        (2usize..200).prop_flat_map(|n| {
            (
                prop::collection::vec(prop_oneof![(0u8..10).prop_map(|k| k as f64 / 10.0), 0.0f64..1.0], n),
                prop::collection::vec(any::<bool>().prop_map(Label::from), n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_equals_pairwise_count((p, l) in scores_and_labels()) {
            let pos = l.iter().filter(|x| x.is_positive()).count();
            prop_assume!(pos > 0 && pos < l.len());
            prop_assert_eq!(roc_auc(&p, &l).unwrap(), brute_auc(&p, &l));
        }

        #[test]
        fn auc_invariant_under_monotone_transform((p, l) in scores_and_labels()) {
            let pos = l.iter().filter(|x| x.is_positive()).count();
            prop_assume!(pos > 0 && pos < l.len());
            let q: Vec<f64> = p.iter().map(|x| libm::exp(3.0 * x) - 7.0).collect();
            prop_assert_eq!(roc_auc(&p, &l).unwrap(), roc_auc(&q, &l).unwrap());
        }

        #[test]
        fn raising_tau_is_monotone((p, l) in scores_and_labels(), mut taus in prop::collection::vec(0.0f64..1.0, 2..8)) {
            taus.sort_by(f64::total_cmp);
            let r = threshold_sweep(&[("s", &p, &l)], &taus).unwrap();
            for w in r.rows.windows(2) {
                let (a, b) = (w[0].metrics, w[1].metrics);
                if let (Some(x), Some(y)) = (a.sensitivity.value(), b.sensitivity.value()) {
                    prop_assert!(y <= x);
                }
                if let (Some(x), Some(y)) = (a.specificity.value(), b.specificity.value()) {
                    prop_assert!(y >= x);
                }
            }
        }

        #[test]
        fn undefined_exactly_on_zero_denominator(tp in 0u64..5, fp in 0u64..5, tn in 0u64..5, fn_ in 0u64..5) {
            let m = classification_metrics(&ConfusionMatrix::new(tp, fp, tn, fn_, 0.5));
            prop_assert_eq!(m.sensitivity.is_undefined(), tp + fn_ == 0);
            prop_assert_eq!(m.specificity.is_undefined(), tn + fp == 0);
            prop_assert_eq!(m.ppv.is_undefined(), tp + fp == 0);
            for v in [m.sensitivity, m.specificity, m.ppv].iter().filter_map(|x| x.value()) {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
