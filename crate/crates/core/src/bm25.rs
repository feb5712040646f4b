//! Okapi BM25 scoring over an [`InvertedIndex`].
//!
//! A document's score is a sum over query terms of
//!
//! ```text
//! w(t) · (k1+1)·tf_td / (k1·((1−b) + b·L_d/L_ave) + tf_td) · (k3+1)·tf_tq / (k3 + tf_tq)
//! ```
//!
//! where `w(t)` is either the plain `ln(N/df_t)` or, when relevance judgments
//! are available, the smoothed Robertson/Spärck Jones log-odds weight.
//! Logarithms are natural.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{Analyzer, Token};
use crate::index::{DocId, InvertedIndex};

#[derive(Debug, Error, PartialEq)]
pub enum Bm25Error {
    #[error("document {0} is not in the index")]
    UnknownDoc(DocId),
    #[error("judged document {0} is not in the index")]
    InvalidJudgment(DocId),
    #[error("query expansion needs at least one relevant document")]
    EmptyJudgments,
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub k3: f64,
    pub clamp_negative_idf: bool,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.5,
            b: 0.75,
            k3: 1.5,
            clamp_negative_idf: true,
        }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64, k3: f64) -> Result<Self, Bm25Error> {
        let p = Bm25Params {
            k1,
            b,
            k3,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), Bm25Error> {
        let bad = |m: String| Err(Bm25Error::InvalidParams(m));
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return bad(format!("k1 must be a finite value >= 0, got {}", self.k1));
        }
        if !(self.k3.is_finite() && self.k3 >= 0.0) {
            return bad(format!("k3 must be a finite value >= 0, got {}", self.k3));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return bad(format!("b must lie in [0, 1], got {}", self.b));
        }
        Ok(())
    }
}

/// Query term frequencies. Iteration order is lexicographic by term, which
/// fixes the floating-point summation order of every score.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryVector {
    terms: BTreeMap<String, u32>,
}

impl QueryVector {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut q = QueryVector::default();
        for t in terms {
            *q.terms.entry(t.as_ref().to_string()).or_default() += 1;
        }
        q
    }

    pub fn from_tokens(tokens: &[Token]) -> Self {
        Self::from_terms(tokens.iter().map(Token::as_str))
    }

    pub fn analyze(analyzer: &Analyzer, text: &str) -> Self {
        Self::from_tokens(&analyzer.tokenize(text))
    }

    pub fn tf(&self, term: &str) -> u32 {
        self.terms.get(term).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, u32)> {
        self.terms.iter().map(|(t, &f)| (t.as_str(), f))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Documents judged relevant for a query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JudgmentSet {
    relevant: BTreeSet<DocId>,
}

impl JudgmentSet {
    pub fn new<I: IntoIterator<Item = DocId>>(docs: I) -> Self {
        JudgmentSet {
            relevant: docs.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.relevant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }

    pub fn docs(&self) -> impl Iterator<Item = DocId> + '_ {
        self.relevant.iter().copied()
    }

    /// Relevant documents containing `term`.
    pub fn relevant_with(&self, term: &str, index: &InvertedIndex) -> usize {
        index
            .postings(term)
            .iter()
            .filter(|p| self.relevant.contains(&p.doc))
            .count()
    }

    fn validate(&self, index: &InvertedIndex) -> Result<(), Bm25Error> {
        match self.relevant.iter().find(|&&d| d >= index.n_docs()) {
            Some(&d) => Err(Bm25Error::InvalidJudgment(d)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    /// Number of terms added to the query.
    pub m: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig { m: 15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub doc: DocId,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rerank: Option<f64>,
}

/// One query term's share of a document score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermContribution {
    pub term: String,
    pub weight: f64,
    pub tf_doc: u32,
    pub tf_query: u32,
    pub summand: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    index: &'a InvertedIndex,
    params: Bm25Params,
}

impl<'a> Scorer<'a> {
    pub fn new(index: &'a InvertedIndex, params: Bm25Params) -> Self {
        Scorer { index, params }
    }

    pub fn index(&self) -> &'a InvertedIndex {
        self.index
    }

    pub fn params(&self) -> &Bm25Params {
        &self.params
    }

    /// `ln(N/df_t)`; zero for unseen terms, floored at zero when clamping.
    pub fn idf_basic(&self, term: &str) -> f64 {
        let df = self.index.df(term);
        if df == 0 {
            return 0.0;
        }
        let w = (self.index.n_docs() as f64 / df as f64).ln();
        if self.params.clamp_negative_idf {
            w.max(0.0)
        } else {
            w
        }
    }

    /// Smoothed relevance weight; never clamped.
    pub fn rsj_weight(&self, term: &str, judgments: &JudgmentSet) -> f64 {
        let n = self.index.n_docs() as f64;
        let df = self.index.df(term) as f64;
        let vr = judgments.len() as f64;
        let vr_t = judgments.relevant_with(term, self.index) as f64;
        let vnr_t = vr - vr_t;
        let relevant_odds = (vr_t + 0.5) / (vnr_t + 0.5);
        let rest_odds = (df - vr_t + 0.5) / (n - df - vr + vr_t + 0.5);
        (relevant_odds / rest_odds).ln()
    }

    /// Saturating document term-frequency factor with length normalization.
    pub fn tf_factor(&self, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b, .. } = self.params;
        let avg = self.index.avg_len();
        let ratio = if avg > 0.0 { doc_len as f64 / avg } else { 1.0 };
        let tf = tf as f64;
        (k1 + 1.0) * tf / (k1 * ((1.0 - b) + b * ratio) + tf)
    }

    pub fn query_factor(&self, tf_query: u32) -> f64 {
        let k3 = self.params.k3;
        let tf = tf_query as f64;
        (k3 + 1.0) * tf / (k3 + tf)
    }

    fn check_doc(&self, doc: DocId) -> Result<u32, Bm25Error> {
        self.index.doc_len(doc).ok_or(Bm25Error::UnknownDoc(doc))
    }

    fn summand(&self, weight: f64, tf_doc: u32, doc_len: u32, tf_query: u32) -> f64 {
        weight * self.tf_factor(tf_doc, doc_len) * self.query_factor(tf_query)
    }

    pub fn score_doc(&self, query: &QueryVector, doc: DocId) -> Result<f64, Bm25Error> {
        self.score_with(query, doc, |t| self.idf_basic(t))
    }

    pub fn score_doc_feedback(
        &self,
        query: &QueryVector,
        doc: DocId,
        judgments: &JudgmentSet,
    ) -> Result<f64, Bm25Error> {
        judgments.validate(self.index)?;
        self.score_with(query, doc, |t| self.rsj_weight(t, judgments))
    }

    fn score_with(
        &self,
        query: &QueryVector,
        doc: DocId,
        weight: impl Fn(&str) -> f64,
    ) -> Result<f64, Bm25Error> {
        let len = self.check_doc(doc)?;
        let mut score = 0.0;
        for (term, tf_q) in query.terms() {
            let tf_d = self.index.tf(term, doc);
            if tf_d > 0 {
                score += self.summand(weight(term), tf_d, len, tf_q);
            }
        }
        Ok(score)
    }

    /// Per-term breakdown of [`Scorer::score_doc`]; summands add up to the
    /// score in the listed order.
    pub fn explain(
        &self,
        query: &QueryVector,
        doc: DocId,
    ) -> Result<Vec<TermContribution>, Bm25Error> {
        let len = self.check_doc(doc)?;
        Ok(query
            .terms()
            .filter_map(|(term, tf_q)| {
                let tf_d = self.index.tf(term, doc);
                (tf_d > 0).then(|| {
                    let weight = self.idf_basic(term);
                    TermContribution {
                        term: term.to_string(),
                        weight,
                        tf_doc: tf_d,
                        tf_query: tf_q,
                        summand: self.summand(weight, tf_d, len, tf_q),
                    }
                })
            })
            .collect())
    }

    /// Highest-scoring documents, score descending then doc id ascending.
    /// Documents scoring zero are left out.
    pub fn top_k(&self, query: &QueryVector, k: usize) -> Vec<ScoredCandidate> {
        let mut acc: HashMap<DocId, f64> = HashMap::new();
        for (term, tf_q) in query.terms() {
            let weight = self.idf_basic(term);
            for p in self.index.postings(term) {
                let len = self.index.doc_len(p.doc).unwrap_or(0);
                *acc.entry(p.doc).or_insert(0.0) += self.summand(weight, p.tf, len, tf_q);
            }
        }
        let mut hits: Vec<ScoredCandidate> = acc
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(doc, score)| ScoredCandidate {
                doc,
                score,
                rerank: None,
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.doc.cmp(&b.doc)));
        hits.truncate(k);
        hits
    }

    /// Adds the `m` most important terms of the relevant documents, where
    /// importance is the term's total frequency in those documents times its
    /// idf. Ties go to the lexicographically smaller term.
    pub fn expand_query(
        &self,
        query: &QueryVector,
        judgments: &JudgmentSet,
        cfg: &ExpansionConfig,
    ) -> Result<QueryVector, Bm25Error> {
        if judgments.is_empty() {
            return Err(Bm25Error::EmptyJudgments);
        }
        judgments.validate(self.index)?;
        let mut ranked: Vec<(f64, &str)> = self
            .index
            .terms()
            .filter(|(term, _)| query.tf(term) == 0)
            .filter_map(|(term, postings)| {
                let rel_tf: u64 = postings
                    .iter()
                    .filter(|p| judgments.relevant.contains(&p.doc))
                    .map(|p| p.tf as u64)
                    .sum();
                let importance = rel_tf as f64 * self.idf_basic(term);
                (importance > 0.0).then_some((importance, term))
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let mut expanded = query.clone();
        for (_, term) in ranked.into_iter().take(cfg.m) {
            expanded.terms.insert(term.to_string(), 1);
        }
        Ok(expanded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_docs() -> InvertedIndex {
        InvertedIndex::from_documents(
            vec![
                vec!["red", "road"],
                vec!["blue", "road"],
                vec!["red", "street"],
            ],
            String::new(),
        )
        .unwrap()
    }

    fn uniform(n: u32, df: u32) -> InvertedIndex {
        // `n` docs; the first `df` contain "t", all contain "x".
        let docs = (0..n).map(|i| if i < df { vec!["t", "x"] } else { vec!["x"] });
        InvertedIndex::from_documents(docs, String::new()).unwrap()
    }

    #[test]
    fn idf_by_hand() {
        let idx = three_docs();
        let s = Scorer::new(&idx, Bm25Params::default());
        let all =
            InvertedIndex::from_documents(vec![vec!["a"], vec!["a"], vec!["a"]], String::new())
                .unwrap();
        assert_eq!(Scorer::new(&all, Bm25Params::default()).idf_basic("a"), 0.0);
        assert!((s.idf_basic("red") - 1.5f64.ln()).abs() < 1e-12);
        assert!((s.idf_basic("red") - 0.4055).abs() < 1e-4);
        assert_eq!(s.idf_basic("purple"), 0.0);
    }

    #[test]
    fn single_term_score_by_hand() {
        let idx = three_docs();
        let s = Scorer::new(&idx, Bm25Params::new(1.2, 0.75, 1.5).unwrap());
        let q = QueryVector::from_terms(["red"]);
        let got = s.score_doc(&q, 0).unwrap();
        assert!((got - 1.5f64.ln()).abs() < 1e-12, "{got}");
        assert_eq!(s.score_doc(&q, 1).unwrap(), 0.0);
        assert_eq!(s.score_doc(&q, 9), Err(Bm25Error::UnknownDoc(9)));
    }

    #[test]
    fn zero_k1_is_binary() {
        let idx = three_docs();
        let s = Scorer::new(&idx, Bm25Params::new(0.0, 0.75, 1.5).unwrap());
        for tf in 1..20 {
            assert_eq!(s.tf_factor(tf, 7), 1.0);
        }
    }

    #[test]
    fn zero_b_ignores_length() {
        let idx = three_docs();
        let s = Scorer::new(&idx, Bm25Params::new(1.2, 0.0, 1.5).unwrap());
        assert_eq!(s.tf_factor(2, 1), s.tf_factor(2, 40));
    }

    #[test]
    fn feedback_reduces_to_rsj_without_judgments() {
        let idx = uniform(10, 5);
        let s = Scorer::new(&idx, Bm25Params::default());
        let w = s.rsj_weight("t", &JudgmentSet::default());
        assert!((w - (5.5f64 / 5.5).ln()).abs() < 1e-15);
        let idx = uniform(10, 3);
        let s = Scorer::new(&idx, Bm25Params::default());
        let w = s.rsj_weight("t", &JudgmentSet::default());
        assert!((w - (7.5f64 / 3.5).ln()).abs() < 1e-15);
    }

    #[test]
    fn feedback_weight_by_hand() {
        // N=10, df=5, |VR|=2 with one relevant doc containing t.
        let idx = uniform(10, 5);
        let s = Scorer::new(&idx, Bm25Params::default());
        let j = JudgmentSet::new([0, 7]);
        assert_eq!(j.relevant_with("t", &idx), 1);
        assert!(s.rsj_weight("t", &j).abs() < 1e-15);
    }

    #[test]
    fn feedback_weight_term_everywhere_all_relevant() {
        let n = 6;
        let idx = uniform(n, n);
        let s = Scorer::new(&idx, Bm25Params::default());
        let j = JudgmentSet::new(0..n);
        let expected = (((n as f64 + 0.5) / 0.5) / (0.5 / 0.5)).ln();
        let w = s.rsj_weight("t", &j);
        assert!((w - expected).abs() < 1e-12);
        assert!(w > 0.0);
    }

    #[test]
    fn feedback_rejects_unknown_judgment() {
        let idx = three_docs();
        let s = Scorer::new(&idx, Bm25Params::default());
        let q = QueryVector::from_terms(["red"]);
        assert_eq!(
            s.score_doc_feedback(&q, 0, &JudgmentSet::new([5])),
            Err(Bm25Error::InvalidJudgment(5))
        );
    }

    #[test]
    fn expansion() {
        let idx = three_docs();
        let s = Scorer::new(&idx, Bm25Params::default());
        let q = QueryVector::from_terms(["blue"]);
        let j = JudgmentSet::new([0]);
        let same = s.expand_query(&q, &j, &ExpansionConfig { m: 0 }).unwrap();
        assert_eq!(same, q);
        let two = s.expand_query(&q, &j, &ExpansionConfig { m: 2 }).unwrap();
        assert_eq!(two, QueryVector::from_terms(["blue", "red", "road"]));
        let many = s.expand_query(&q, &j, &ExpansionConfig { m: 50 }).unwrap();
        assert_eq!(many, two);
        assert_eq!(
            s.expand_query(&q, &JudgmentSet::default(), &ExpansionConfig::default()),
            Err(Bm25Error::EmptyJudgments)
        );
    }

    #[test]
    fn expansion_ties_are_lexicographic() {
        let idx = three_docs();
        let s = Scorer::new(&idx, Bm25Params::default());
        let q = QueryVector::from_terms(["blue"]);
        let one = s
            .expand_query(&q, &JudgmentSet::new([0]), &ExpansionConfig { m: 1 })
            .unwrap();
        assert_eq!(one, QueryVector::from_terms(["blue", "red"]));
    }

    #[test]
    fn top_k_orders_and_drops_zero() {
        let idx = three_docs();
        let s = Scorer::new(&idx, Bm25Params::default());
        let top = s.top_k(&QueryVector::from_terms(["red", "street"]), 1);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].doc, 2);
        assert!(s.top_k(&QueryVector::from_terms(["zzz"]), 10).is_empty());
        let all = s.top_k(&QueryVector::from_terms(["road"]), 10);
        assert_eq!(all.iter().map(|c| c.doc).collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn explain_sums_to_score() {
        let idx = three_docs();
        let s = Scorer::new(&idx, Bm25Params::default());
        let q = QueryVector::from_terms(["red", "road", "road"]);
        let parts = s.explain(&q, 0).unwrap();
        let total: f64 = parts.iter().map(|p| p.summand).sum();
        assert_eq!(total, s.score_doc(&q, 0).unwrap());
    }

    #[test]
    fn params_validated() {
        assert!(Bm25Params::new(-1.0, 0.5, 1.0).is_err());
        assert!(Bm25Params::new(1.0, 1.5, 1.0).is_err());
        assert!(Bm25Params::new(1.0, 0.5, f64::NAN).is_err());
    }
}
