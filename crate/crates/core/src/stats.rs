//! Wilcoxon signed-rank test for paired per-image scores.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest number of non-zero differences handled by the exact null distribution.
pub const EXACT_MAX_N: usize = 20;
/// Fewest non-zero differences the test accepts.
pub const MIN_N: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("samples must be non-empty")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("only {0} non-zero differences, need at least {MIN_N}")]
    TooFewDifferences(usize),
}

/// Two equal-length score sequences, one entry per image.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PairedSample {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, StatsError> {
        if xs.len() != ys.len() {
            return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
        }
        if xs.is_empty() {
            return Err(StatsError::Empty);
        }
        if let Some(i) = xs.iter().zip(&ys).position(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(StatsError::NonFinite(i));
        }
        Ok(Self { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Non-zero differences `x − y`.
    pub fn differences(&self) -> Vec<f64> {
        self.xs.iter().zip(&self.ys).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W⁺, W⁻)`.
    pub w_statistic: f64,
    /// Number of non-zero differences.
    pub n: usize,
    pub p_two_sided: f64,
    pub method: PMethod,
}

/// Ranks of `|d|` with tied values receiving their average rank, returned
/// doubled so that half-ranks stay integral.
pub fn doubled_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0u64; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1, average (i+j+2)/2
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided p-value: the fraction of the `2ⁿ` equally likely sign
/// assignments whose positive-rank sum is at most `w_doubled`, doubled and
/// capped at 1.
///
/// The count runs over a subset-sum table of the doubled ranks, which tallies
/// every sign assignment without visiting them one by one.
pub fn exact_p(ranks_doubled: &[u64], w_doubled: u64) -> f64 {
    let total: u64 = ranks_doubled.iter().sum();
    let mut ways = vec![0u64; total as usize + 1];
    ways[0] = 1;
    let mut reach = 0usize;
    for &r in ranks_doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if ways[s] != 0 {
                ways[s + r] += ways[s];
            }
        }
        reach += r;
    }
    let at_most: u64 = ways[..=(w_doubled as usize).min(total as usize)].iter().sum();
    let patterns = 2f64.powi(ranks_doubled.len() as i32);
    (2.0 * at_most as f64 / patterns).min(1.0)
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn normal_approx_p(ranks_doubled: &[u64], w_plus: f64) -> f64 {
    let n = ranks_doubled.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks_doubled.to_vec();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

/// Two-sided Wilcoxon signed-rank test on `x − y`.
///
/// Zero differences are discarded; the exact null distribution is used for
/// up to [`EXACT_MAX_N`] remaining pairs, the normal approximation beyond.
pub fn wilcoxon_signed_rank(s: &PairedSample) -> Result<WilcoxonResult, StatsError> {
    let diffs = s.differences();
    let n = diffs.len();
    if n < MIN_N {
        return Err(StatsError::TooFewDifferences(n));
    }
    let ranks = doubled_ranks(&diffs);
    let w_plus2: u64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total2: u64 = ranks.iter().sum();
    let w2 = w_plus2.min(total2 - w_plus2);
    let (p, method) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, w2), PMethod::Exact)
    } else {
        (normal_approx_p(&ranks, w_plus2 as f64 / 2.0), PMethod::NormalApprox)
    };
    Ok(WilcoxonResult { w_statistic: w2 as f64 / 2.0, n, p_two_sided: p, method })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_validation() {
        assert_eq!(PairedSample::new(vec![1.0], vec![]), Err(StatsError::LengthMismatch(1, 0)));
        assert_eq!(PairedSample::new(vec![], vec![]), Err(StatsError::Empty));
        assert_eq!(PairedSample::new(vec![1.0, f64::NAN], vec![0.0, 0.0]), Err(StatsError::NonFinite(1)));
    }

    #[test]
    fn all_zero_differences_rejected() {
        let s = PairedSample::new(vec![1.0; 8], vec![1.0; 8]).unwrap();
        assert_eq!(wilcoxon_signed_rank(&s), Err(StatsError::TooFewDifferences(0)));
    }

    #[test]
    fn five_positive_differences() {
        let s = PairedSample::new(vec![2.0, 3.0, 4.0, 5.0, 6.0], vec![1.0, 1.5, 1.0, 0.0, 2.5]).unwrap();
        let r = wilcoxon_signed_rank(&s).unwrap();
        assert_eq!(r.w_statistic, 0.0);
        assert_eq!(r.p_two_sided, 0.0625);
        assert_eq!(r.method, PMethod::Exact);
    }

    #[test]
    fn tied_ranks_are_averaged() {
        assert_eq!(doubled_ranks(&[1.0, -1.0, 3.0, 2.0]), vec![3, 3, 8, 6]);
    }

    #[test]
    fn large_n_uses_normal_branch() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.1 + 1.0).collect();
        let ys: Vec<f64> = (0..30).map(|i| i as f64 * 0.1 + if i % 3 == 0 { 1.5 } else { 0.2 }).collect();
        let r = wilcoxon_signed_rank(&PairedSample::new(xs, ys).unwrap()).unwrap();
        assert_eq!(r.method, PMethod::NormalApprox);
        assert!((0.0..=1.0).contains(&r.p_two_sided));
    }
}
