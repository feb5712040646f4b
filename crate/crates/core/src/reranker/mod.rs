//! Second-stage decision: accept the BM25 winner outright when it leads by a
//! clear margin, otherwise re-rank the close candidates by component-weighted
//! string similarity and grade the result.

mod similarity;
mod threshold;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{Component, ParsedAddress};
use crate::bm25::ScoredCandidate;
use crate::index::DocId;

pub use similarity::{EditDistanceSimilarity, FieldSimilarity};
pub use threshold::{estimate_threshold, threshold_or_default, DEFAULT_THRESHOLD};

#[derive(Debug, Error, PartialEq)]
pub enum RerankError {
    #[error("no candidates to decide between")]
    EmptyCandidates,
    #[error("gap values are all equal; no threshold can be estimated")]
    DegenerateGaps,
    #[error("similarity {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Per-component weights of the similarity combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComponentWeights {
    pub name: f64,
    pub street_name: f64,
    pub city: f64,
    pub state: f64,
    pub zip_code: f64,
    pub extn_zip: f64,
    pub country: f64,
}

impl Default for ComponentWeights {
    fn default() -> Self {
        ComponentWeights {
            name: 0.21,
            street_name: 0.23,
            city: 0.19,
            state: 0.16,
            zip_code: 0.11,
            extn_zip: 0.0,
            country: 0.1,
        }
    }
}

impl ComponentWeights {
    pub fn get(&self, c: Component) -> f64 {
        match c {
            Component::Name => self.name,
            Component::StreetName => self.street_name,
            Component::City => self.city,
            Component::State => self.state,
            Component::ZipCode => self.zip_code,
            Component::ExtnZip => self.extn_zip,
            Component::Country => self.country,
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ComponentWeights {
            name: f(self.name),
            street_name: f(self.street_name),
            city: f(self.city),
            state: f(self.state),
            zip_code: f(self.zip_code),
            extn_zip: f(self.extn_zip),
            country: f(self.country),
        }
    }

    pub fn sum(&self) -> f64 {
        Component::ALL.iter().map(|&c| self.get(c)).sum()
    }

    /// Rescales so the weights sum to one.
    pub fn normalized(&self) -> Self {
        let total = self.sum();
        self.map(|w| w / total)
    }

    pub fn validate(&self) -> Result<(), RerankError> {
        if let Some(c) = Component::ALL
            .iter()
            .find(|&&c| !(self.get(c).is_finite() && self.get(c) >= 0.0))
        {
            return Err(RerankError::InvalidConfig(format!(
                "weight for {} must be a finite value >= 0",
                c.as_str()
            )));
        }
        if (self.sum() - 1.0).abs() > 1e-9 {
            return Err(RerankError::InvalidConfig(format!(
                "component weights sum to {}, expected 1",
                self.sum()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Rank-1 lead over rank 2 above which rank 1 is accepted directly.
    pub threshold: f64,
    /// Candidates within this distance of rank 1 enter re-ranking.
    pub rerank_pool_margin: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            threshold: DEFAULT_THRESHOLD,
            rerank_pool_margin: 3.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), RerankError> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(RerankError::InvalidConfig(format!(
                "gate threshold must be > 0, got {}",
                self.threshold
            )));
        }
        if !(self.rerank_pool_margin.is_finite() && self.rerank_pool_margin >= 0.0) {
            return Err(RerankError::InvalidConfig(format!(
                "re-rank pool margin must be >= 0, got {}",
                self.rerank_pool_margin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateDecision {
    DirectAccept(ScoredCandidate),
    ReRank(Vec<ScoredCandidate>),
}

/// `candidates` must be sorted by score, best first.
pub fn gate(candidates: &[ScoredCandidate], cfg: &GateConfig) -> Result<GateDecision, RerankError> {
    let (first, rest) = candidates
        .split_first()
        .ok_or(RerankError::EmptyCandidates)?;
    match rest.first() {
        None => Ok(GateDecision::DirectAccept(*first)),
        Some(second) if first.score - second.score > cfg.threshold => {
            Ok(GateDecision::DirectAccept(*first))
        }
        Some(_) => Ok(GateDecision::ReRank(
            candidates
                .iter()
                .take_while(|c| first.score - c.score <= cfg.rerank_pool_margin)
                .copied()
                .collect(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentContribution {
    pub component: Component,
    pub weight: f64,
    pub similarity: f64,
    pub contribution: f64,
}

pub fn component_breakdown(
    a: &ParsedAddress,
    b: &ParsedAddress,
    weights: &ComponentWeights,
    sim: &dyn FieldSimilarity,
) -> Vec<ComponentContribution> {
    Component::ALL
        .iter()
        .map(|&c| {
            let weight = weights.get(c);
            let similarity = sim.similarity(c, a.get(c), b.get(c));
            ComponentContribution {
                component: c,
                weight,
                similarity,
                contribution: weight * similarity,
            }
        })
        .collect()
}

/// Weighted sum of per-component similarities, in `[0, 1]`.
pub fn component_similarity(
    a: &ParsedAddress,
    b: &ParsedAddress,
    weights: &ComponentWeights,
    sim: &dyn FieldSimilarity,
) -> f64 {
    let total: f64 = component_breakdown(a, b, weights, sim)
        .iter()
        .map(|c| c.contribution)
        .sum();
    total.clamp(0.0, 1.0)
}

/// Scores every pool member against `query` and orders them: similarity
/// descending, then BM25 score descending, then doc id ascending.
pub fn rerank(
    pool: &[ScoredCandidate],
    query: &ParsedAddress,
    record: impl Fn(DocId) -> ParsedAddress,
    weights: &ComponentWeights,
    sim: &dyn FieldSimilarity,
) -> Vec<ScoredCandidate> {
    let mut scored: Vec<ScoredCandidate> = pool
        .iter()
        .map(|c| ScoredCandidate {
            rerank: Some(component_similarity(query, &record(c.doc), weights, sim)),
            ..*c
        })
        .collect();
    scored.sort_by(|x, y| {
        let (rx, ry) = (x.rerank.unwrap_or(0.0), y.rerank.unwrap_or(0.0));
        ry.total_cmp(&rx)
            .then_with(|| y.score.total_cmp(&x.score))
            .then(x.doc.cmp(&y.doc))
    });
    scored
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Low,
    Medium,
    High,
    VeryHigh,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::VeryHigh => "Very High",
            Category::High => "High",
            Category::Medium => "Medium",
            Category::Low => "Low",
        }
    }
}

/// Lower bounds of each band; anything below `medium` is `Low`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CategoryBands {
    pub very_high: f64,
    pub high: f64,
    pub medium: f64,
}

impl Default for CategoryBands {
    fn default() -> Self {
        CategoryBands {
            very_high: 0.89,
            high: 0.75,
            medium: 0.60,
        }
    }
}

impl CategoryBands {
    pub fn validate(&self) -> Result<(), RerankError> {
        let ok = 1.0 >= self.very_high
            && self.very_high > self.high
            && self.high > self.medium
            && self.medium > 0.0;
        if ok {
            Ok(())
        } else {
            Err(RerankError::InvalidConfig(format!(
                "bands must satisfy 1 >= very_high > high > medium > 0, got {self:?}"
            )))
        }
    }
}

/// Band lookup; each band includes its lower bound.
pub fn categorize(similarity: f64, bands: &CategoryBands) -> Result<Category, RerankError> {
    if !(0.0..=1.0).contains(&similarity) {
        return Err(RerankError::OutOfRange(similarity));
    }
    let cat = if similarity >= bands.very_high {
        Category::VeryHigh
    } else if similarity >= bands.high {
        Category::High
    } else if similarity >= bands.medium {
        Category::Medium
    } else {
        Category::Low
    };
    Ok(cat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(scores: &[f64]) -> Vec<ScoredCandidate> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &score)| ScoredCandidate {
                doc: i as DocId,
                score,
                rerank: None,
            })
            .collect()
    }

    fn addr(fields: [&str; 7]) -> ParsedAddress {
        ParsedAddress {
            name: fields[0].into(),
            street_name: fields[1].into(),
            city: fields[2].into(),
            state: fields[3].into(),
            zip_code: fields[4].into(),
            extn_zip: fields[5].into(),
            country: fields[6].into(),
        }
    }

    #[test]
    fn default_weights_are_valid() {
        ComponentWeights::default().validate().unwrap();
        for name in [0.5, -0.01] {
            let w = ComponentWeights {
                name,
                ..Default::default()
            };
            assert!(w.validate().is_err());
        }
    }

    #[test]
    fn wide_lead_is_accepted() {
        let c = cands(&[22.4298, 9.2274, 7.5772]);
        assert_eq!(
            gate(&c, &GateConfig::default()),
            Ok(GateDecision::DirectAccept(c[0]))
        );
    }

    #[test]
    fn close_scores_go_to_rerank() {
        let c = cands(&[
            13.774420750916285,
            12.889157018210865,
            11.996978844561882,
            11.783313402792523,
            11.591774097246052,
            10.836622386647267,
            10.388212705043992,
            8.256204999008487,
        ]);
        match gate(&c, &GateConfig::default()).unwrap() {
            // Leads of 0.89, 1.78, 1.99, 2.18 and 2.94 are all within 3.
            GateDecision::ReRank(pool) => assert_eq!(pool, c[..6].to_vec()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_candidate_accepted() {
        let c = cands(&[0.3]);
        assert_eq!(
            gate(&c, &GateConfig::default()),
            Ok(GateDecision::DirectAccept(c[0]))
        );
        assert_eq!(
            gate(&[], &GateConfig::default()),
            Err(RerankError::EmptyCandidates)
        );
    }

    #[test]
    fn gap_equal_to_threshold_is_not_enough() {
        let c = cands(&[5.0, 2.0]);
        assert!(
            matches!(gate(&c, &GateConfig::default()), Ok(GateDecision::ReRank(p)) if p.len() == 2)
        );
    }

    #[test]
    fn similarity_extremes() {
        let w = ComponentWeights::default();
        let sim = EditDistanceSimilarity;
        let a = addr([
            "acme",
            "1 main street",
            "omaha",
            "ne",
            "68117",
            "1234",
            "usa",
        ]);
        assert_eq!(component_similarity(&a, &a, &w, &sim), 1.0);
        let b = addr(["zzzz", "99zz", "kyiv", "oh", "99999", "9999", "xxx"]);
        assert_eq!(component_similarity(&a, &b, &w, &sim), 0.0);
        let mut c = a.clone();
        c.extn_zip = "0000".into();
        assert_eq!(component_similarity(&a, &c, &w, &sim), 1.0);
    }

    #[test]
    fn rerank_ties_prefer_bm25_then_doc() {
        let pool = cands(&[5.0, 6.0, 6.0]);
        let q = addr(["a", "", "", "", "", "", ""]);
        let out = rerank(
            &pool,
            &q,
            |_| q.clone(),
            &ComponentWeights::default(),
            &EditDistanceSimilarity,
        );
        assert_eq!(out.iter().map(|c| c.doc).collect::<Vec<_>>(), [1, 2, 0]);
        assert!(out.iter().all(|c| c.rerank == Some(1.0)));
    }

    #[test]
    fn bands_by_hand() {
        let bands = CategoryBands {
            very_high: 0.95,
            high: 0.85,
            medium: 0.70,
        };
        assert_eq!(categorize(1.0, &bands), Ok(Category::VeryHigh));
        assert_eq!(categorize(0.85, &bands), Ok(Category::High));
        assert_eq!(categorize(0.70, &bands), Ok(Category::Medium));
        assert_eq!(categorize(0.69, &bands), Ok(Category::Low));
        assert_eq!(categorize(0.0, &bands), Ok(Category::Low));
        assert_eq!(categorize(1.01, &bands), Err(RerankError::OutOfRange(1.01)));
        assert!(categorize(f64::NAN, &bands).is_err());
    }

    #[test]
    fn default_bands_boundaries() {
        let bands = CategoryBands::default();
        bands.validate().unwrap();
        assert_eq!(categorize(0.89, &bands), Ok(Category::VeryHigh));
        assert_eq!(categorize(0.8899, &bands), Ok(Category::High));
        assert_eq!(categorize(0.75, &bands), Ok(Category::High));
        assert_eq!(categorize(0.6, &bands), Ok(Category::Medium));
        assert_eq!(categorize(0.5999, &bands), Ok(Category::Low));
        let bad = CategoryBands {
            very_high: 0.8,
            high: 0.8,
            medium: 0.1,
        };
        assert!(bad.validate().is_err());
    }
}
