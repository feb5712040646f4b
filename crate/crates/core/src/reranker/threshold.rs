use super::RerankError;

/// Gate threshold used when none can be estimated.
pub const DEFAULT_THRESHOLD: f64 = 3.0;

/// Splits rank-1/rank-2 score gaps into two clusters with 1-D k-means and
/// returns the midpoint of the two centroids.
///
/// Centroids start at the minimum and maximum gap, which makes the result
/// deterministic; Lloyd iterations run until assignments stop changing.
pub fn estimate_threshold(gaps: &[f64]) -> Result<f64, RerankError> {
    let finite = gaps.iter().copied().filter(|g| g.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| {
        (lo.min(g), hi.max(g))
    });
    if lo >= hi {
        return Err(RerankError::DegenerateGaps);
    }
    let values: Vec<f64> = gaps.iter().copied().filter(|g| g.is_finite()).collect();
    let mut centroids = [lo, hi];
    let mut assignment: Vec<usize> = Vec::new();
    loop {
        // Ties go to the lower cluster.
        let next: Vec<usize> = values
            .iter()
            .map(|&g| usize::from((g - centroids[1]).abs() < (g - centroids[0]).abs()))
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
        for (k, c) in centroids.iter_mut().enumerate() {
            let members: Vec<f64> = values
                .iter()
                .zip(&assignment)
                .filter(|&(_, &a)| a == k)
                .map(|(&g, _)| g)
                .collect();
            // The min and max never change cluster, so neither side empties.
            *c = members.iter().sum::<f64>() / members.len() as f64;
        }
    }
    Ok((centroids[0] + centroids[1]) / 2.0)
}

/// [`estimate_threshold`], falling back to [`DEFAULT_THRESHOLD`].
pub fn threshold_or_default(gaps: &[f64]) -> f64 {
    estimate_threshold(gaps).unwrap_or(DEFAULT_THRESHOLD)
}
