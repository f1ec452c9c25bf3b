//! Multinomial resampling.
//!
//! The only scheme used by the filters in this crate: `count` independent
//! categorical draws from a probability vector, implemented by walking the
//! cumulative distribution once with sorted uniforms (generated as normalized
//! exponential spacings), for `O(n + count)` expected cost. Indices come out
//! in draw order — ascending for this implementation — and carry no
//! information beyond their multiset; consumers must not rely on ordering.

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Outcome of one multinomial resampling pass.
#[derive(Clone, Debug)]
pub struct ResampleResult {
    /// Selected ancestor index per draw, in draw order (`count` entries).
    pub indices: Vec<usize>,
    /// Number of times each category was selected (`probs.len()` entries).
    pub counts: Vec<usize>,
}

/// Draw `count` indices i.i.d. from `probs`.
///
/// `probs` must be finite, nonnegative, and sum to one within `1e-9`;
/// zero-probability categories are never selected (they are skipped by
/// construction of the cumulative walk).
pub fn multinomial_resample(
    probs: &[f64],
    count: usize,
    stream: &mut RandomStream,
) -> Result<ResampleResult> {
    if probs.is_empty() {
        return Err(Error::InvalidProbabilities { reason: "empty probability vector".into() });
    }
    if count == 0 {
        return Err(Error::InvalidArgument("resample count must be positive".into()));
    }
    let mut sum = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidProbabilities {
                reason: format!("probability {p:e} at index {j} is not a finite nonnegative number"),
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidProbabilities {
            reason: format!("probabilities sum to {sum} (must be 1 within 1e-9)"),
        });
    }

    // Positive-probability categories and their cumulative masses; walking
    // this compacted list makes zero-probability categories unselectable.
    let mut cat_index = Vec::new();
    let mut cat_cum = Vec::new();
    let mut acc = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            cat_index.push(j);
            cat_cum.push(acc);
        }
    }
    let total = acc;

    // Sorted uniforms via exponential spacings: with E_1..E_{m+1} i.i.d.
    // exponential, the partial sums normalized by the full sum are the order
    // statistics of m uniforms.
    let m = count;
    let mut spacing_sum = 0.0;
    let mut points = Vec::with_capacity(m + 1);
    for _ in 0..=m {
        // -ln(1 - U) with U in [0,1) is a well-defined exponential draw.
        spacing_sum += -(1.0 - stream.uniform()).ln();
        points.push(spacing_sum);
    }
    let denom = points[m];

    let mut indices = Vec::with_capacity(m);
    let mut counts = vec![0usize; probs.len()];
    let mut k = 0usize;
    for point in points.iter().take(m) {
        let t = (point / denom) * total;
        while k + 1 < cat_cum.len() && t >= cat_cum[k] {
            k += 1;
        }
        indices.push(cat_index[k]);
        counts[cat_index[k]] += 1;
    }
    Ok(ResampleResult { indices, counts })
}
