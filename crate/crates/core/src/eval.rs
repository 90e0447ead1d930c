//! Ranking metrics over target ranks and the Wilcoxon signed-rank test.
//!
//! Metrics consume ranks only, so they are invariant to any strictly
//! monotone transform of the underlying scores. Fractional (tie-averaged)
//! ranks are used as-is in every formula.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math;

/// Ranks of the relevant item(s) of one query.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingResult {
    pub ranks: Vec<f64>,
}

impl RankingResult {
    pub fn single(rank: f64) -> Self {
        Self { ranks: vec![rank] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub k: usize,
    pub hit_at_k: f64,
    pub ndcg_at_k: f64,
    pub mrr_at_k: f64,
    /// Reciprocal rank without a cutoff.
    pub mrr: f64,
    /// Mean rank over all items (no cutoff).
    pub mean_rank: f64,
    pub n_queries: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryMetrics {
    pub hit: f64,
    pub ndcg: f64,
    pub rr_at_k: f64,
    pub rr: f64,
    pub rank: f64,
}

/// `1/log2(p + 1)`.
#[inline]
pub fn discount(position: f64) -> f64 {
    1.0 / math::log2(position + 1.0)
}

/// Per-query metrics. A single relevant item at rank ρ gives the closed
/// forms `1[ρ≤K]`, `1/log2(ρ+1)` and `1/ρ`; several relevant items use
/// binary DCG/IDCG, the best rank for hit and reciprocal rank, and the best
/// rank as the query's rank.
pub fn query_metrics(result: &RankingResult, k: usize) -> Result<QueryMetrics> {
    if result.ranks.is_empty() {
        return Err(invalid("query without relevant items"));
    }
    if k == 0 {
        return Err(invalid("cutoff K must be at least 1"));
    }
    if let Some(bad) = result.ranks.iter().find(|r| !r.is_finite() || **r < 1.0) {
        return Err(Error::Invalid(format!("rank {bad} is below 1")));
    }
    let kf = k as f64;
    let best = result.ranks.iter().copied().fold(f64::INFINITY, f64::min);
    let dcg = result.ranks.iter().filter(|&&r| r <= kf).fold(0.0, |acc, &r| acc + discount(r));
    let idcg: f64 = (1..=k.min(result.ranks.len())).map(|p| discount(p as f64)).sum();
    let within = best <= kf;
    Ok(QueryMetrics {
        hit: if within { 1.0 } else { 0.0 },
        ndcg: dcg / idcg,
        rr_at_k: if within { 1.0 / best } else { 0.0 },
        rr: 1.0 / best,
        rank: best,
    })
}

/// Arithmetic means of per-query metrics, summed pairwise in query order.
pub fn aggregate_metrics(results: &[RankingResult], k: usize) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(invalid("no queries to aggregate"));
    }
    let per = results
        .iter()
        .map(|r| query_metrics(r, k))
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&QueryMetrics) -> f64| math::mean(&per.iter().map(f).collect::<Vec<_>>());
    Ok(MetricsReport {
        k,
        hit_at_k: col(|q| q.hit),
        ndcg_at_k: col(|q| q.ndcg),
        mrr_at_k: col(|q| q.rr_at_k),
        mrr: col(|q| q.rr),
        mean_rank: col(|q| q.rank),
        n_queries: results.len(),
    })
}

/// Convenience for single-relevant (leave-one-out style) queries.
pub fn metrics_from_ranks(ranks: &[f64], k: usize) -> Result<MetricsReport> {
    let results: Vec<RankingResult> = ranks.iter().map(|&r| RankingResult::single(r)).collect();
    aggregate_metrics(&results, k)
}

/// Binary-relevance nDCG@K of an ordered list against a relevant set.
pub fn multi_relevant_ndcg<T: Ord>(ranking: &[T], relevant: &BTreeSet<T>, k: usize) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| relevant.contains(item))
        .map(|(i, _)| discount((i + 1) as f64))
        .sum();
    let idcg: f64 = (1..=k.min(relevant.len())).map(|p| discount(p as f64)).sum();
    dcg / idcg
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W⁺, W⁻)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_value: f64,
    pub method: PValueMethod,
}

/// Significance thresholds reported alongside p-values.
pub const SIGNIFICANCE_LEVELS: [f64; 4] = [0.05, 0.01, 0.005, 0.001];

impl WilcoxonResult {
    pub fn significant_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }

    /// Flags `p<0.05`, `p<0.01`, ... that hold for this result.
    pub fn flags(&self) -> Vec<&'static str> {
        const LABELS: [&str; 4] = ["p<0.05", "p<0.01", "p<0.005", "p<0.001"];
        SIGNIFICANCE_LEVELS
            .iter()
            .zip(LABELS)
            .filter(|(a, _)| self.p_value < **a)
            .map(|(_, l)| l)
            .collect()
    }
}

/// Largest sample size that gets an exact p-value.
pub const EXACT_LIMIT: usize = 20;

/// Non-zero paired differences and their tie-averaged ranks by magnitude.
pub fn signed_ranks(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            found: b.len(),
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let neg_abs: Vec<f64> = diffs.iter().map(|d| -d.abs()).collect();
    // ascending magnitude == descending negated magnitude
    let ranks = math::tied_ranks_desc(&neg_abs);
    Ok((diffs, ranks))
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Exact for up to [`EXACT_LIMIT`] non-zero pairs (the null distribution of
/// W⁺ is counted over all 2ⁿ sign assignments); otherwise a normal
/// approximation with tie and continuity corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    let (diffs, ranks) = signed_ranks(a, b)?;
    let n = diffs.len();
    if n == 0 {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    if n < 5 {
        return Err(Error::Invalid(format!("need at least 5 non-zero differences, got {n}")));
    }
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).fold(0.0, |acc, (_, r)| acc + r);
    let w_minus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d < 0.0).fold(0.0, |acc, (_, r)| acc + r);
    let statistic = w_plus.min(w_minus);
    let (p_value, method) = if n <= EXACT_LIMIT {
        (exact_p_value(&ranks, statistic), PValueMethod::Exact)
    } else {
        (normal_p_value(&ranks, statistic), PValueMethod::Normal)
    };
    Ok(WilcoxonResult {
        statistic,
        w_plus,
        w_minus,
        n,
        p_value,
        method,
    })
}

/// Exact two-sided p: `min(1, 2·P(W⁺ ≤ w))` under the sign-flip null.
///
/// Ranks are halves at worst, so doubling makes them integers and the null
/// distribution is counted by dynamic programming over subset sums.
pub fn exact_p_value(ranks: &[f64], statistic: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| libm::round(2.0 * r) as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let limit = libm::round(2.0 * statistic) as usize;
    let at_most: u64 = counts[..=limit.min(total)].iter().sum();
    let p = 2.0 * at_most as f64 / libm::pow(2.0, ranks.len() as f64);
    p.min(1.0)
}

/// Normal-approximation two-sided p with tie and continuity corrections.
pub fn normal_p_value(ranks: &[f64], statistic: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let diff = statistic - mean;
    let corrected = if diff < 0.0 { (diff + 0.5).min(0.0) } else { (diff - 0.5).max(0.0) };
    let z = corrected / math::sqrt(var);
    (2.0 * math::normal_cdf(-z.abs())).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_rank_and_outside_cutoff() {
        let q = query_metrics(&RankingResult::single(1.0), 10).unwrap();
        assert_eq!((q.hit, q.ndcg, q.rr_at_k), (1.0, 1.0, 1.0));
        let q = query_metrics(&RankingResult::single(11.0), 10).unwrap();
        assert_eq!((q.hit, q.ndcg, q.rr_at_k, q.rank), (0.0, 0.0, 0.0, 11.0));
    }

    #[test]
    fn ndcg_at_rank_two() {
        let q = query_metrics(&RankingResult::single(2.0), 10).unwrap();
        assert!((q.ndcg - 0.630930).abs() < 1e-6);
    }

    #[test]
    fn rank_below_one_rejected() {
        assert!(query_metrics(&RankingResult::single(0.5), 10).is_err());
        assert!(aggregate_metrics(&[], 10).is_err());
    }

    #[test]
    fn multi_relevant_cases() {
        let relevant: BTreeSet<u32> = [1, 3].into_iter().collect();
        let v = multi_relevant_ndcg(&[1, 2, 3, 4], &relevant, 10);
        assert!((v - 0.919721).abs() < 1e-6);
        assert_eq!(multi_relevant_ndcg(&[3, 1, 2], &relevant, 10), 1.0);
        assert_eq!(multi_relevant_ndcg(&[5, 6, 1], &relevant, 2), 0.0);
    }

    #[test]
    fn wilcoxon_all_positive_five() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        let w = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(w.statistic, 0.0);
        assert_eq!(w.p_value, 0.0625);
        assert_eq!(w.method, PValueMethod::Exact);
        assert_eq!(w.flags(), Vec::<&str>::new());
    }

    #[test]
    fn wilcoxon_degenerate() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(wilcoxon_signed_rank(&a, &a), Err(Error::Degenerate(_))));
        assert!(wilcoxon_signed_rank(&a[..3], &[0.0; 3]).is_err());
    }
}
