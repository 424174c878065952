//! Effect-size and rank-test statistics used by the influence analytics.

use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("each group needs at least {min} values, got {got}")]
    TooFew { min: usize, got: usize },
    #[error("pooled variance is zero")]
    Degenerate,
}

/// Standardized mean difference (mean A − mean B over the pooled standard
/// deviation, n−1 denominators).
pub fn cohens_d(group_a: &[f64], group_b: &[f64]) -> Result<f64, StatsError> {
    let min_len = group_a.len().min(group_b.len());
    if min_len < 2 {
        return Err(StatsError::TooFew {
            min: 2,
            got: min_len,
        });
    }
    let mean = |g: &[f64]| g.iter().sum::<f64>() / g.len() as f64;
    let mean_a = mean(group_a);
    let mean_b = mean(group_b);
    let ss = |g: &[f64], m: f64| g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    let n_a = group_a.len() as f64;
    let n_b = group_b.len() as f64;
    let pooled_var = (ss(group_a, mean_a) + ss(group_b, mean_b)) / (n_a + n_b - 2.0);
    if pooled_var == 0.0 {
        return Err(StatsError::Degenerate);
    }
    Ok((mean_a - mean_b) / pooled_var.sqrt())
}

/// Midranks of the pooled sample: ties share the average of the ranks they
/// span (1-based).
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]).then(i.cmp(&j)));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

/// U statistic of group A from pooled midranks.
fn u_statistic(ranks: &[f64], n_a: usize) -> f64 {
    let r_a: f64 = ranks[..n_a].iter().sum();
    r_a - (n_a * (n_a + 1)) as f64 / 2.0
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

const ENUMERATION_CAP: u128 = 2_000_000;

/// Exact two-sided p by enumerating every split of the pooled sample into
/// groups of the observed sizes, with midranks (handles ties).
fn exact_p_enumeration(ranks: &[f64], n_a: usize, u_observed: f64) -> f64 {
    let n = ranks.len();
    let mu = (n_a * (n - n_a)) as f64 / 2.0;
    let observed_dev = (u_observed - mu).abs();
    let mut extreme: u64 = 0;
    let mut total: u64 = 0;
    // Iterate combinations of indices in lexicographic order.
    let mut comb: Vec<usize> = (0..n_a).collect();
    loop {
        let r: f64 = comb.iter().map(|&i| ranks[i]).sum();
        let u = r - (n_a * (n_a + 1)) as f64 / 2.0;
        if (u - mu).abs() >= observed_dev - 1e-9 {
            extreme += 1;
        }
        total += 1;
        // Advance.
        let mut i = n_a;
        loop {
            if i == 0 {
                return extreme as f64 / total as f64;
            }
            i -= 1;
            if comb[i] != i + n - n_a {
                break;
            }
        }
        comb[i] += 1;
        for j in i + 1..n_a {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

/// Exact two-sided p from the tie-free null distribution of U, computed with
/// the standard counting recurrence.
#[allow(clippy::needless_range_loop)]
fn exact_p_distribution(n_a: usize, n_b: usize, u_observed: f64) -> f64 {
    let u_max = n_a * n_b;
    // count[i][u] after processing group sizes; recurrence
    // f(i, j, u) = f(i−1, j, u−j) + f(i, j−1, u).
    let mut table = vec![vec![vec![0.0f64; u_max + 1]; n_b + 1]; n_a + 1];
    for j in 0..=n_b {
        table[0][j][0] = 1.0;
    }
    for i in 1..=n_a {
        table[i][0][0] = 1.0;
        for j in 1..=n_b {
            for u in 0..=u_max {
                let a = if u >= j { table[i - 1][j][u - j] } else { 0.0 };
                let b = table[i][j - 1][u];
                table[i][j][u] = a + b;
            }
        }
    }
    let counts = &table[n_a][n_b];
    let total: f64 = counts.iter().sum();
    let mu = u_max as f64 / 2.0;
    let observed_dev = (u_observed - mu).abs();
    let extreme: f64 = counts
        .iter()
        .enumerate()
        .filter(|(u, _)| (*u as f64 - mu).abs() >= observed_dev - 1e-9)
        .map(|(_, c)| c)
        .sum();
    extreme / total
}

/// Tie-corrected normal approximation with continuity correction.
fn normal_approx_p(ranks: &[f64], n_a: usize, u_observed: f64) -> f64 {
    let n = ranks.len();
    let n_b = n - n_a;
    let mu = (n_a * n_b) as f64 / 2.0;
    // Tie correction from run lengths of equal ranks.
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let nf = n as f64;
    let variance = (n_a * n_b) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let diff = u_observed - mu;
    let corrected = if diff > 0.0 {
        diff - 0.5
    } else if diff < 0.0 {
        diff + 0.5
    } else {
        0.0
    };
    let z = corrected / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = 2.0 * (1.0 - normal.cdf(z.abs()));
    p.clamp(0.0, 1.0)
}

/// Two-sided Mann-Whitney U test with midrank tie handling.
///
/// Small samples (`nA·nB ≤ 400`) use an exact null distribution: the
/// counting recurrence when the pooled sample is tie-free, or full split
/// enumeration when ties are present and the split count is tractable.
/// Everything else uses the tie-corrected normal approximation with
/// continuity correction.
pub fn mann_whitney_u(group_a: &[f64], group_b: &[f64]) -> Result<(f64, f64), StatsError> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(StatsError::TooFew { min: 1, got: 0 });
    }
    let n_a = group_a.len();
    let n_b = group_b.len();
    let mut pooled = Vec::with_capacity(n_a + n_b);
    pooled.extend_from_slice(group_a);
    pooled.extend_from_slice(group_b);
    let ranks = midranks(&pooled);
    let u = u_statistic(&ranks, n_a);

    let has_ties = {
        let mut sorted = pooled.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.windows(2).any(|w| w[0] == w[1])
    };

    let p = if n_a * n_b <= 400 {
        if !has_ties {
            exact_p_distribution(n_a, n_b, u)
        } else if binomial(n_a + n_b, n_a) <= ENUMERATION_CAP {
            exact_p_enumeration(&ranks, n_a, u)
        } else {
            normal_approx_p(&ranks, n_a, u)
        }
    } else {
        normal_approx_p(&ranks, n_a, u)
    };
    Ok((u, p))
}

/// Median of a sample; even lengths average the two middle values.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}
