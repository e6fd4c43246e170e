//! Paired-sample statistics: Wilcoxon signed-rank test, rank-biserial
//! correlation, Cohen's d and significance labels.
//!
//! Conventions: zero differences are dropped; tied |d| receive average ranks;
//! for `n_eff <= 25` the p-value comes from the exact null distribution of
//! `W+` over the realized rank multiset, otherwise from the normal
//! approximation with continuity and tie correction. The two-sided p-value is
//! `2 P(W+ <= T)` capped at 1.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};

/// Largest effective sample size for which the exact null is enumerated.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "***")]
    P001,
    #[serde(rename = "**")]
    P01,
    #[serde(rename = "*")]
    P05,
    #[serde(rename = "n.s.")]
    NotSignificant,
}

impl Significance {
    pub fn as_str(self) -> &'static str {
        match self {
            Significance::P001 => "***",
            Significance::P01 => "**",
            Significance::P05 => "*",
            Significance::NotSignificant => "n.s.",
        }
    }

    pub fn is_significant(self) -> bool {
        self != Significance::NotSignificant
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `***` for p < 0.001, `**` for p < 0.01, `*` for p < 0.05, otherwise `n.s.`.
pub fn significance_label(p: f64) -> Significance {
    if p < 0.001 {
        Significance::P001
    } else if p < 0.01 {
        Significance::P01
    } else if p < 0.05 {
        Significance::P05
    } else {
        Significance::NotSignificant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    #[serde(rename = "T")]
    pub t_stat: f64,
    #[serde(rename = "n")]
    pub n_eff: usize,
    #[serde(rename = "p")]
    pub p_two_sided: f64,
    #[serde(rename = "r")]
    pub r_rank_biserial: f64,
    pub label: Significance,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    pub exact: bool,
}

/// Average ranks of `values` (1-based), doubled so ties stay integral.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end+1 share the doubled average rank (start+1)+(end+1).
        let doubled = (start + 1 + end + 1) as u64;
        for &k in &order[start..=end] {
            ranks[k] = doubled;
        }
        start = end + 1;
    }
    ranks
}

/// Number of sign assignments giving each doubled `W+` value.
fn null_counts(doubled: &[u64]) -> Vec<f64> {
    let total: u64 = doubled.iter().sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Two-sided Wilcoxon signed-rank test on paired samples `xs[i] - ys[i]`.
pub fn wilcoxon(xs: &[f64], ys: &[f64]) -> Result<WilcoxonResult> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid(format!(
            "wilcoxon needs paired samples of length >= 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(invalid("wilcoxon samples must be finite"));
    }
    let diffs: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let total: u64 = ranks.iter().sum();
    let w_plus2: u64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let t2 = w_plus2.min(total - w_plus2);
    let t_stat = t2 as f64 / 2.0;

    let exact = n <= EXACT_MAX_N;
    let lower = if exact {
        let counts = null_counts(&ranks);
        let hits: f64 = counts[..=t2 as usize].iter().sum();
        hits / 2f64.powi(n as i32)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        for group in sorted.chunk_by(|a, b| a == b) {
            let t = group.len() as f64;
            tie_term += t * t * t - t;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if !(var > 0.0) {
            return Err(Error::Degenerate("zero null variance".into()));
        }
        let z = (t_stat - mean + 0.5) / var.sqrt();
        Normal::new(0.0, 1.0).expect("standard normal").cdf(z)
    };
    let p = (2.0 * lower).min(1.0);
    Ok(WilcoxonResult {
        t_stat,
        n_eff: n,
        p_two_sided: p,
        r_rank_biserial: rank_biserial(t_stat, n),
        label: significance_label(p),
        w_plus: w_plus2 as f64 / 2.0,
        exact,
    })
}

/// `1 - 2T / (n(n+1)/2)`.
pub fn rank_biserial(t_stat: f64, n_eff: usize) -> f64 {
    let n = n_eff as f64;
    1.0 - 2.0 * t_stat / (n * (n + 1.0) / 2.0)
}

/// Mean paired difference over its sample standard deviation.
pub fn cohens_d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("cohen's d needs paired samples of length >= 2"));
    }
    let diffs: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_std(&diffs);
    if !(sd > 0.0) {
        return Err(Error::Degenerate(
            "paired differences have zero variance".into(),
        ));
    }
    Ok(mean / sd)
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;
    use rand::Rng;

    /// Exhaustive two-sided p over all 2^n sign assignments of the realized ranks.
    fn brute_force_p(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let diffs: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| x - y)
            .filter(|d| *d != 0.0)
            .collect();
        let n = diffs.len();
        let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        // Average ranks computed by counting, independent of the sort-based routine.
        let ranks: Vec<f64> = abs
            .iter()
            .map(|a| {
                let less = abs.iter().filter(|b| *b < a).count() as f64;
                let equal = abs.iter().filter(|b| *b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect();
        let total: f64 = ranks.iter().sum();
        let w_plus: f64 = ranks
            .iter()
            .zip(&diffs)
            .filter(|(_, d)| **d > 0.0)
            .map(|(r, _)| r)
            .sum();
        let t = w_plus.min(total - w_plus);
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n)
                .filter(|k| mask >> k & 1 == 1)
                .map(|k| ranks[k])
                .sum();
            if w <= t + 1e-9 {
                hits += 1;
            }
        }
        (t, (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0))
    }

    #[test]
    fn all_positive_sixteen() {
        let xs: Vec<f64> = (0..16).map(|i| 1.0 + i as f64).collect();
        let ys = vec![0.0; 16];
        let r = wilcoxon(&xs, &ys).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert_eq!(r.n_eff, 16);
        assert!((r.p_two_sided - 2.0 / 65536.0).abs() < 1e-15);
        assert!((r.p_two_sided - 3.05e-5).abs() < 1e-7);
        assert_eq!(r.label, Significance::P001);
        assert_eq!(r.r_rank_biserial, 1.0);
    }

    #[test]
    fn single_nonzero_difference() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 2.0, 3.5, 4.0];
        let r = wilcoxon(&xs, &ys).unwrap();
        assert_eq!(r.n_eff, 1);
        assert_eq!(r.p_two_sided, 1.0);
        assert!(matches!(wilcoxon(&xs, &xs), Err(Error::Degenerate(_))));
        assert!(wilcoxon(&[1.0], &[2.0]).is_err());
        assert!(wilcoxon(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn exact_p_matches_enumeration() {
        let mut rng = RngStream::new(31, 0);
        for n in [5usize, 8, 10, 12] {
            for _ in 0..100 {
                let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                let r = wilcoxon(&xs, &ys).unwrap();
                let (t, p) = brute_force_p(&xs, &ys);
                assert_eq!(r.t_stat, t);
                assert!((r.p_two_sided - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tied_ranks_match_enumeration() {
        let mut rng = RngStream::new(32, 0);
        for _ in 0..100 {
            let n = rng.random_range(3..=12);
            // Coarse grid forces ties and zeros.
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            match wilcoxon(&xs, &ys) {
                Ok(r) => {
                    let (t, p) = brute_force_p(&xs, &ys);
                    assert_eq!(r.t_stat, t);
                    assert!((r.p_two_sided - p).abs() < 1e-12);
                }
                Err(Error::Degenerate(_)) => assert_eq!(xs, ys),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn normal_approximation_for_large_n() {
        let mut rng = RngStream::new(33, 0);
        let xs: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
        let ys: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0) + 0.2).collect();
        let r = wilcoxon(&xs, &ys).unwrap();
        assert!(!r.exact);
        assert!(r.p_two_sided > 0.0 && r.p_two_sided <= 1.0);
        // Close to the exact value computed by the DP on the same ranks.
        let diffs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).collect();
        let ranks = doubled_ranks(&diffs);
        let counts = null_counts(&ranks);
        let t2 = (2.0 * r.t_stat) as usize;
        let exact = (2.0 * counts[..=t2].iter().sum::<f64>() / 2f64.powi(40)).min(1.0);
        assert!((r.p_two_sided - exact).abs() < 0.01);
    }

    #[test]
    fn rank_biserial_examples() {
        assert_eq!(rank_biserial(0.0, 16), 1.0);
        let n = 16.0;
        assert!(rank_biserial(n * (n + 1.0) / 4.0, 16).abs() < 1e-15);
        assert!((rank_biserial(13.6, 16) - 0.8).abs() < 1e-12);
        assert!((rank_biserial(27.2, 16) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn cohens_d_examples() {
        let ys = [0.1, 0.5, 0.9];
        let xs: Vec<f64> = ys.iter().map(|y| y + 2.0).collect();
        assert!(matches!(cohens_d(&xs, &ys), Err(Error::Degenerate(_))));
        let xs = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(cohens_d(&xs, &[0.0; 4]).unwrap(), 0.0);

        let mut rng = RngStream::new(34, 0);
        let xs: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
        let ys: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
        let d: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a - b).collect();
        let m = d.iter().sum::<f64>() / 16.0;
        let s = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 15.0).sqrt();
        assert!((cohens_d(&xs, &ys).unwrap() - m / s).abs() < 1e-12);
    }

    #[test]
    fn labels() {
        assert_eq!(significance_label(0.0005), Significance::P001);
        assert_eq!(significance_label(0.001), Significance::P01);
        assert_eq!(significance_label(0.009), Significance::P01);
        assert_eq!(significance_label(0.02), Significance::P05);
        assert_eq!(significance_label(0.05), Significance::NotSignificant);
        assert_eq!(serde_json::to_string(&Significance::P05).unwrap(), "\"*\"");
        assert_eq!(Significance::NotSignificant.to_string(), "n.s.");
    }

    proptest! {
        #[test]
        fn swap_symmetry_and_scale_invariance(
            pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..20),
            scale in 0.01f64..100.0,
        ) {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(xs.iter().zip(&ys).any(|(a, b)| a != b));
            let a = wilcoxon(&xs, &ys).unwrap();
            let b = wilcoxon(&ys, &xs).unwrap();
            prop_assert_eq!(a.p_two_sided, b.p_two_sided);
            prop_assert_eq!(a.t_stat, b.t_stat);

            let sx: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (x - y) * scale).collect();
            let zeros = vec![0.0; sx.len()];
            let c = wilcoxon(&sx, &zeros).unwrap();
            prop_assume!(c.n_eff == a.n_eff);
            prop_assert_eq!(c.t_stat, a.t_stat);
            prop_assert_eq!(c.p_two_sided, a.p_two_sided);
            prop_assert_eq!(c.r_rank_biserial, a.r_rank_biserial);
            prop_assert!((0.0..=1.0).contains(&a.p_two_sided));
        }
    }
}
