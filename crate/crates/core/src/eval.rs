//! Precision, recall and F1 over labeled query/record pairs, plus a grid
//! search over BM25 parameters.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bm25::Bm25Params;
use crate::matcher::{MatchError, MatchResult, Matcher};
use crate::reranker::Category;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no labeled pairs to evaluate")]
    EmptyPairs,
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// A query and the id of the record it should match, or `None` when the
/// corpus holds no correct answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub query: String,
    pub gold: Option<String>,
}

impl LabeledPair {
    pub fn is_matchable(&self) -> bool {
        self.gold.is_some()
    }
}

/// JSONL, one `{"query": .., "gold": ..|null}` per line. Blank lines are skipped.
pub fn read_pairs(text: &str) -> Result<Vec<LabeledPair>, EvalError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        query: String,
        gold: Option<serde_json::Value>,
        #[serde(default)]
        #[allow(dead_code)]
        id: Option<serde_json::Value>,
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |reason: String| EvalError::BadLine {
                line: i + 1,
                reason,
            };
            let raw: Raw = serde_json::from_str(l).map_err(|e| bad(e.to_string()))?;
            let gold = match raw.gold {
                None | Some(serde_json::Value::Null) => None,
                Some(serde_json::Value::String(s)) => Some(s),
                Some(serde_json::Value::Number(n)) => Some(n.to_string()),
                Some(other) => {
                    return Err(bad(format!("gold must be a string or null, got {other}")))
                }
            };
            Ok(LabeledPair {
                query: raw.query,
                gold,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

/// What the pipeline returned for one query: `None` when it produced no
/// match at all, otherwise the record id and its category.
pub type Prediction<'a> = Option<(&'a str, Category)>;

/// A `Low` category counts as a rejection, the same as returning nothing.
pub fn classify(gold: Option<&str>, prediction: Prediction<'_>) -> Outcome {
    let accepted = prediction.filter(|&(_, c)| c != Category::Low);
    match (gold, accepted) {
        (Some(g), Some((id, _))) if id == g => Outcome::TruePositive,
        (_, Some(_)) => Outcome::FalsePositive,
        (Some(_), None) => Outcome::FalseNegative,
        (None, None) => Outcome::TrueNegative,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::TruePositive => self.tp += 1,
            Outcome::FalsePositive => self.fp += 1,
            Outcome::FalseNegative => self.fn_ += 1,
            Outcome::TrueNegative => self.tn += 1,
        }
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            precision,
            recall,
            f1,
            confusion: *self,
        }
    }
}

impl FromIterator<Outcome> for Confusion {
    fn from_iter<I: IntoIterator<Item = Outcome>>(iter: I) -> Self {
        let mut c = Confusion::default();
        iter.into_iter().for_each(|o| c.add(o));
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

/// Outcome of one pair given the pipeline's answer. Only "nothing matched"
/// errors count as predictions; anything else is passed back.
pub fn outcome_of(
    pair: &LabeledPair,
    result: Result<MatchResult, MatchError>,
) -> Result<Outcome, EvalError> {
    let prediction = match &result {
        Ok(r) => Some((r.record_id.as_str(), r.category)),
        Err(MatchError::NoCandidates(_) | MatchError::Unparsable(_)) => None,
        Err(_) => return Err(EvalError::Match(result.unwrap_err())),
    };
    Ok(classify(pair.gold.as_deref(), prediction))
}

pub fn evaluate(matcher: &Matcher<'_>, pairs: &[LabeledPair]) -> Result<Metrics, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let queries: Vec<&str> = pairs.iter().map(|p| p.query.as_str()).collect();
    let results = matcher.match_batch(&queries);
    let confusion = pairs
        .iter()
        .zip(results)
        .map(|(p, r)| outcome_of(p, r))
        .collect::<Result<Confusion, _>>()?;
    Ok(confusion.metrics())
}

/// Candidate values for each BM25 parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub k1: Vec<f64>,
    pub b: Vec<f64>,
    pub k3: Vec<f64>,
}

impl ParamGrid {
    /// Every combination, sorted by `(k1, b, k3)` with duplicates removed.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (k1s, bs, k3s) = (sorted(&self.k1), sorted(&self.b), sorted(&self.k3));
        let mut out = Vec::with_capacity(k1s.len() * bs.len() * k3s.len());
        for &k1 in &k1s {
            for &b in &bs {
                for &k3 in &k3s {
                    out.push((k1, b, k3));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub k1: f64,
    pub b: f64,
    pub k3: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Bm25Params,
    pub best_metrics: Metrics,
    /// One row per grid point in `(k1, b, k3)` order.
    pub table: Vec<GridRow>,
}

/// Evaluates every grid point and picks the highest F1. Ties go to the
/// smaller k1, then the smaller b, then the smaller k3.
pub fn grid_search(
    matcher: &Matcher<'_>,
    pairs: &[LabeledPair],
    grid: &ParamGrid,
) -> Result<GridResult, EvalError> {
    let points = grid.points();
    if points.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let base = matcher.config().bm25;
    let table = points
        .par_iter()
        .map(|&(k1, b, k3)| {
            let params = Bm25Params { k1, b, k3, ..base };
            let metrics = evaluate(&matcher.with_bm25(params)?, pairs)?;
            Ok(GridRow { k1, b, k3, metrics })
        })
        .collect::<Result<Vec<GridRow>, EvalError>>()?;
    // Rows are already in ascending (k1, b, k3) order, so the first maximum wins.
    let best_row = table
        .iter()
        .fold(None::<&GridRow>, |acc, row| match acc {
            Some(a) if a.metrics.f1 >= row.metrics.f1 => Some(a),
            _ => Some(row),
        })
        .expect("grid is non-empty");
    Ok(GridResult {
        best: Bm25Params {
            k1: best_row.k1,
            b: best_row.b,
            k3: best_row.k3,
            ..base
        },
        best_metrics: best_row.metrics,
        table,
    })
}

pub fn metrics_table(m: &Metrics) -> String {
    let c = &m.confusion;
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>8}", "METRIC", "VALUE");
    let _ = writeln!(s, "{:<10} {:>8.4}", "precision", m.precision);
    let _ = writeln!(s, "{:<10} {:>8.4}", "recall", m.recall);
    let _ = writeln!(s, "{:<10} {:>8.4}", "f1", m.f1);
    let _ = writeln!(s, "{:<10} {:>8}", "tp", c.tp);
    let _ = writeln!(s, "{:<10} {:>8}", "fp", c.fp);
    let _ = writeln!(s, "{:<10} {:>8}", "fn", c.fn_);
    let _ = writeln!(s, "{:<10} {:>8}", "tn", c.tn);
    s
}

pub fn grid_table(g: &GridResult) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6} {:>6} {:>6} {:>9} {:>9} {:>9}",
        "K1", "B", "K3", "PRECISION", "RECALL", "F1"
    );
    for r in &g.table {
        let mark = if (r.k1, r.b, r.k3) == (g.best.k1, g.best.b, g.best.k3) {
            " *"
        } else {
            ""
        };
        let _ = writeln!(
            s,
            "{:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}{mark}",
            r.k1, r.b, r.k3, r.metrics.precision, r.metrics.recall, r.metrics.f1
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conf(tp: usize, fp: usize, fn_: usize) -> Confusion {
        Confusion { tp, fp, fn_, tn: 0 }
    }

    #[test]
    fn hand_counted() {
        let m = conf(2, 1, 1).metrics();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        let all = conf(5, 0, 0).metrics();
        assert_eq!((all.precision, all.recall, all.f1), (1.0, 1.0, 1.0));
        let none = conf(0, 3, 0).metrics();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn classification_rules() {
        use Category::*;
        use Outcome::*;
        assert_eq!(classify(Some("a"), Some(("a", High))), TruePositive);
        assert_eq!(classify(Some("a"), Some(("b", High))), FalsePositive);
        assert_eq!(classify(Some("a"), Some(("a", Low))), FalseNegative);
        assert_eq!(classify(Some("a"), None), FalseNegative);
        assert_eq!(classify(None, Some(("b", Medium))), FalsePositive);
        assert_eq!(classify(None, Some(("b", Low))), TrueNegative);
        assert_eq!(classify(None, None), TrueNegative);
    }

    #[test]
    fn pairs_parse() {
        let p =
            read_pairs("{\"query\":\"x\",\"gold\":\"A1\"}\n\n{\"query\":\"y\",\"gold\":null}\n")
                .unwrap();
        assert_eq!(p.len(), 2);
        assert!(p[0].is_matchable());
        assert!(!p[1].is_matchable());
        assert!(matches!(
            read_pairs("{\"gold\":\"A\"}"),
            Err(EvalError::BadLine { line: 1, .. })
        ));
    }

    #[test]
    fn grid_points_are_sorted_and_unique() {
        let g = ParamGrid {
            k1: vec![2.0, 1.2, 2.0],
            b: vec![0.75, 0.0],
            k3: vec![1.5],
        };
        assert_eq!(
            g.points(),
            [
                (1.2, 0.0, 1.5),
                (1.2, 0.75, 1.5),
                (2.0, 0.0, 1.5),
                (2.0, 0.75, 1.5)
            ]
        );
    }
}
