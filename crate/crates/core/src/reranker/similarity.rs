use crate::analyzer::tables::{has_digit, is_legal_suffix, is_unit};
use crate::analyzer::Component;

/// Similarity of one address component, in `[0, 1]`.
///
/// Implementations must be symmetric in `a` and `b`. The default is
/// [`EditDistanceSimilarity`]; an embedding model can be plugged in instead.
pub trait FieldSimilarity: Send + Sync {
    fn similarity(&self, component: Component, a: &str, b: &str) -> f64;
}

impl<F> FieldSimilarity for F
where
    F: Fn(Component, &str, &str) -> f64 + Send + Sync,
{
    fn similarity(&self, component: Component, a: &str, b: &str) -> f64 {
        self(component, a, b)
    }
}

/// `1 − levenshtein / max_len` over a comparison key of each value.
///
/// The key drops legal-entity suffixes (`inc`, `llc`, …) from names and unit
/// designators with their numbers (`suite 100`) from streets, then sorts the
/// tokens so word order does not count. Two empty keys score 1, one empty
/// key scores 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct EditDistanceSimilarity;

impl EditDistanceSimilarity {
    pub fn comparison_key(component: Component, value: &str) -> String {
        let mut tokens: Vec<&str> = match component {
            Component::Name => value
                .split_whitespace()
                .filter(|t| !is_legal_suffix(t))
                .collect(),
            Component::StreetName => without_units(value.split_whitespace()),
            _ => value.split_whitespace().collect(),
        };
        tokens.sort_unstable();
        tokens.join(" ")
    }
}

fn without_units<'a>(tokens: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut after_unit = false;
    for t in tokens {
        if after_unit && has_digit(t) {
            after_unit = false;
            continue;
        }
        after_unit = is_unit(t);
        if !after_unit {
            out.push(t);
        }
    }
    out
}

impl FieldSimilarity for EditDistanceSimilarity {
    fn similarity(&self, component: Component, a: &str, b: &str) -> f64 {
        let a = Self::comparison_key(component, a);
        let b = Self::comparison_key(component, b);
        match (a.is_empty(), b.is_empty()) {
            (true, true) => 1.0,
            (true, false) | (false, true) => 0.0,
            _ => {
                let longest = a.chars().count().max(b.chars().count());
                1.0 - strsim::levenshtein(&a, &b) as f64 / longest as f64
            }
        }
    }
}
