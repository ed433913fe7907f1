//! Exhaustive threshold search over empirical statistics.

use serde::{Deserialize, Serialize};

use super::TrialStatistics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    /// `P_MD + P_FA` at the chosen threshold (no 1/2 prior factor).
    pub dep: f64,
    pub p_md: f64,
    pub p_fa: f64,
}

/// Picks the threshold minimizing `P_MD + P_FA` for the rule
/// "decide H1 when statistic > threshold".
///
/// Candidates are one point below all statistics, every midpoint between
/// consecutive distinct pooled values, and one point above all of them, i.e.
/// one representative per threshold interval. Ties go to the smaller threshold.
pub fn optimize_threshold(stats: &TrialStatistics) -> ThresholdChoice {
    let h0 = &stats.h0;
    let h1 = &stats.h1;
    let n0 = h0.len().max(1) as f64;
    let n1 = h1.len().max(1) as f64;

    let mut pooled: Vec<f64> = h0.iter().chain(h1.iter()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    if pooled.is_empty() {
        return ThresholdChoice { threshold: 0.0, dep: 1.0, p_md: 0.0, p_fa: 1.0 };
    }

    let first = pooled[0];
    let last = pooled[pooled.len() - 1];
    // below every value: always decide H1
    let mut best = ThresholdChoice { threshold: first - (1.0 + first.abs()), dep: 1.0, p_md: 0.0, p_fa: 1.0 };

    // counts of statistics <= the lower end of the current interval
    let (mut i0, mut i1) = (0usize, 0usize);
    for (k, &v) in pooled.iter().enumerate() {
        while i0 < h0.len() && h0[i0] <= v {
            i0 += 1;
        }
        while i1 < h1.len() && h1[i1] <= v {
            i1 += 1;
        }
        let p_fa = (h0.len() - i0) as f64 / n0;
        let p_md = i1 as f64 / n1;
        let dep = (p_fa + p_md).min(1.0);
        if dep < best.dep {
            let threshold = match pooled.get(k + 1) {
                Some(&next) => 0.5 * (v + next),
                None => last + (1.0 + last.abs()),
            };
            best = ThresholdChoice { threshold, dep, p_md, p_fa };
        }
    }
    best
}

/// Normal-approximation 95% half-width of an empirical `P_MD + P_FA`.
pub fn dep_ci_halfwidth(choice: &ThresholdChoice, n0: usize, n1: usize) -> f64 {
    let var = choice.p_md * (1.0 - choice.p_md) / n1.max(1) as f64
        + choice.p_fa * (1.0 - choice.p_fa) / n0.max(1) as f64;
    1.96 * var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(h0: &[f64], h1: &[f64]) -> TrialStatistics {
        let mut h0 = h0.to_vec();
        let mut h1 = h1.to_vec();
        h0.sort_by(f64::total_cmp);
        h1.sort_by(f64::total_cmp);
        TrialStatistics { trials: h0.len(), h0, h1, snr_w: 1.0, obs_bits: 8 }
    }

    /// Evaluates every threshold interval directly.
    fn brute_force(s: &TrialStatistics) -> f64 {
        let mut pooled: Vec<f64> = s.h0.iter().chain(&s.h1).copied().collect();
        pooled.sort_by(f64::total_cmp);
        let mut candidates = vec![pooled[0] - 1.0, pooled[pooled.len() - 1] + 1.0];
        for w in pooled.windows(2) {
            candidates.push(0.5 * (w[0] + w[1]));
        }
        candidates.extend(pooled.iter().copied());
        candidates
            .into_iter()
            .map(|t| {
                let fa = s.h0.iter().filter(|&&x| x > t).count() as f64 / s.h0.len() as f64;
                let md = s.h1.iter().filter(|&&x| x <= t).count() as f64 / s.h1.len() as f64;
                fa + md
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn separated_samples_give_zero() {
        let c = optimize_threshold(&stats(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]));
        assert_eq!(c.dep, 0.0);
        assert_eq!(c.threshold, 3.5);
    }

    #[test]
    fn identical_samples_give_one() {
        let c = optimize_threshold(&stats(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]));
        assert_eq!(c.dep, 1.0);
    }

    #[test]
    fn overlapping_example_matches_enumeration() {
        let s = stats(&[1.0, 2.0, 3.0], &[2.5, 3.5, 4.5]);
        let c = optimize_threshold(&s);
        assert!((c.dep - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.dep, brute_force(&s));
        // three intervals reach 1/3; the smallest threshold wins
        assert_eq!(c.threshold, 2.25);
    }

    proptest! {
        #[test]
        fn equals_brute_force(
            h0 in prop::collection::vec(0i32..20, 1..25),
            h1 in prop::collection::vec(0i32..20, 1..25),
        ) {
            let s = stats(
                &h0.iter().map(|&v| v as f64).collect::<Vec<_>>(),
                &h1.iter().map(|&v| v as f64).collect::<Vec<_>>(),
            );
            let c = optimize_threshold(&s);
            prop_assert!((c.dep - brute_force(&s)).abs() < 1e-12);
            prop_assert!(c.dep <= 1.0 && c.dep >= 0.0);
        }
    }
}
