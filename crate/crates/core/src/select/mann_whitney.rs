//! Two-sided Mann–Whitney U test.
//!
//! Small untied samples (`|a| + |b| <= 20`) use the exact null distribution
//! of U; everything else uses the normal approximation with tie and
//! continuity corrections.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::SelectError;

/// Largest combined sample size handled by the exact path.
pub const EXACT_MAX_TOTAL: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample: pairs with `a > b`, ties counted half.
    pub u: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

/// Average ranks (1-based) of the pooled sample, plus the tie-group sizes.
fn pooled_ranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = a.iter().chain(b).copied().zip(0..).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // Positions i..j share the average of ranks i+1..=j.
        let avg = (i + 1 + j) as f64 / 2.0;
        for item in &pooled[i..j] {
            ranks[item.1] = avg;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, SelectError> {
    if a.is_empty() || b.is_empty() {
        return Err(SelectError::EmptySample);
    }
    let (na, nb) = (a.len(), b.len());
    let (ranks, ties) = pooled_ranks(a, b);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;

    if ties.is_empty() && na + nb <= EXACT_MAX_TOTAL {
        let u_int = u.round() as usize;
        return Ok(MannWhitney {
            u,
            p_value: exact_p_value(na, nb, u_int),
            exact: true,
        });
    }
    Ok(MannWhitney {
        u,
        p_value: normal_p_value(na, nb, u, &ties),
        exact: false,
    })
}

/// Number of arrangements of `m` and `n` observations for each U value,
/// `counts[u]` for `u` in `0..=m*n`.
pub fn u_distribution(m: usize, n: usize) -> Vec<u64> {
    // table[j][u] holds counts for the current i (first-sample size) and j.
    // Recurrence: c(i, j, u) = c(i-1, j, u-j) + c(i, j-1, u).
    let width = m * n + 1;
    let mut prev: Vec<Vec<u64>> = (0..=n)
        .map(|_| {
            let mut row = vec![0u64; width];
            row[0] = 1;
            row
        })
        .collect();
    for _ in 1..=m {
        let mut cur: Vec<Vec<u64>> = vec![vec![0u64; width]; n + 1];
        cur[0][0] = 1;
        for j in 1..=n {
            for u in 0..width {
                let from_a = if u >= j { prev[j][u - j] } else { 0 };
                cur[j][u] = from_a + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

/// Exact two-sided p-value: twice the smaller tail, capped at 1.
pub fn exact_p_value(m: usize, n: usize, u: usize) -> f64 {
    let dist = u_distribution(m, n);
    let total: u64 = dist.iter().sum();
    let lower: u64 = dist[..=u.min(m * n)].iter().sum();
    let upper: u64 = dist[u.min(m * n)..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

fn normal_p_value(na: usize, nb: usize, u: f64, ties: &[usize]) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    let n = na + nb;
    let mean = na * nb / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let std_normal = Normal::standard();
    (2.0 * std_normal.sf(z)).min(1.0)
}

/// Normal-approximation p-value regardless of sample size; exposed for
/// cross-checking the exact path.
pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> Result<MannWhitney, SelectError> {
    if a.is_empty() || b.is_empty() {
        return Err(SelectError::EmptySample);
    }
    let (ranks, ties) = pooled_ranks(a, b);
    let na = a.len();
    let u = ranks[..na].iter().sum::<f64>() - (na * (na + 1)) as f64 / 2.0;
    Ok(MannWhitney {
        u,
        p_value: normal_p_value(na, b.len(), u, &ties),
        exact: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_vs_two() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn three_vs_three() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p_value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn identical_samples() {
        let a = [0.3, 0.1, 0.7, 0.2];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = mann_whitney_u(&[5.0; 3], &[5.0; 4]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(mann_whitney_u(&[], &[1.0]), Err(SelectError::EmptySample)));
    }

    #[test]
    fn distribution_sums_to_binomial() {
        let d = u_distribution(4, 6);
        assert_eq!(d.iter().sum::<u64>(), 210);
        assert_eq!(d.len(), 25);
        // Symmetric around m*n/2.
        assert!(d.iter().eq(d.iter().rev()));
    }

    #[test]
    fn u_counts_ties_half() {
        let r = mann_whitney_u(&[1.0, 2.0], &[2.0, 3.0]).unwrap();
        assert_eq!(r.u, 0.5);
        assert!(!r.exact);
    }
}
