//! Goodness-of-fit of the waiting-room composition against the binomial law.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

use super::des::SscSample;

/// Fewer samples at positive queue length than this make the report inconclusive.
pub const MIN_TOTAL_SAMPLES: usize = 10_000;
/// Bins are merged until each expects at least this many counts.
const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SscStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct StratumTest {
    pub queue_len: u32,
    pub phase: usize,
    pub samples: usize,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SscReport {
    pub status: SscStatus,
    /// Family-wise significance level.
    pub level: f64,
    /// Per-stratum threshold, `level` divided by the number of strata.
    pub threshold: f64,
    pub samples: usize,
    pub strata: Vec<StratumTest>,
    /// Per phase, `E[(delta Q_i - p_i delta l)^2] / (delta E[delta l])`.
    pub scaled_second_moment: Vec<f64>,
}

/// Chi-square statistic and degrees of freedom for counts against binomial(l, p).
fn binomial_chi2(counts: &[usize], ell: u32, p: f64) -> (f64, usize) {
    let total: usize = counts.iter().sum();
    let law = Binomial::new(p, ell as u64).expect("valid binomial");
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for q in 0..=ell as usize {
        obs += counts.get(q).copied().unwrap_or(0) as f64;
        exp += total as f64 * law.pmf(q as u64);
        if exp >= MIN_EXPECTED {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        match bins.last_mut() {
            Some(b) => {
                b.0 += obs;
                b.1 += exp;
            }
            None => bins.push((obs, exp)),
        }
    }
    let chi2 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    (chi2, bins.len().saturating_sub(1))
}

/// For each queue length with at least `min_per_stratum` samples, test each
/// phase count against binomial(l, p_i). Strata are combined by Bonferroni so
/// that `level` is the family-wise error rate.
pub fn ssc_binomial_test(samples: &[SscSample], p: &[f64], delta: f64, level: f64, min_per_stratum: usize) -> SscReport {
    let d = p.len();
    let positive: Vec<&SscSample> = samples.iter().filter(|s| s.queue_len > 0).collect();
    let mut by_len: BTreeMap<u32, Vec<&SscSample>> = BTreeMap::new();
    for s in &positive {
        by_len.entry(s.queue_len).or_default().push(s);
    }
    let mut strata = Vec::new();
    // With two phases the second count is determined by the first.
    let phases = if d == 2 { 1 } else { d };
    for (&ell, group) in &by_len {
        if group.len() < min_per_stratum {
            continue;
        }
        for (i, &pi) in p.iter().enumerate().take(phases) {
            let mut counts = vec![0usize; ell as usize + 1];
            for s in group {
                counts[s.composition[i] as usize] += 1;
            }
            let (chi2, dof, p_value) = if pi == 0.0 || pi == 1.0 {
                let want = if pi == 0.0 { 0 } else { ell as usize };
                let ok = counts[want] == group.len();
                (if ok { 0.0 } else { f64::INFINITY }, 0, if ok { 1.0 } else { 0.0 })
            } else {
                let (chi2, dof) = binomial_chi2(&counts, ell, pi);
                let pv = if dof == 0 {
                    1.0
                } else {
                    1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(chi2)
                };
                (chi2, dof, pv)
            };
            strata.push(StratumTest {
                queue_len: ell,
                phase: i,
                samples: group.len(),
                chi2,
                dof,
                p_value,
                passed: false,
            });
        }
    }
    let threshold = level / strata.len().max(1) as f64;
    for s in &mut strata {
        s.passed = s.p_value >= threshold;
    }
    let mean_ell = positive.iter().map(|s| delta * s.queue_len as f64).sum::<f64>() / samples.len().max(1) as f64;
    let scaled_second_moment = (0..d)
        .map(|i| {
            let m2 = samples
                .iter()
                .map(|s| {
                    let v = delta * s.composition[i] as f64 - p[i] * delta * s.queue_len as f64;
                    v * v
                })
                .sum::<f64>()
                / samples.len().max(1) as f64;
            m2 / (delta * mean_ell)
        })
        .collect();
    let status = if positive.len() < MIN_TOTAL_SAMPLES || strata.is_empty() {
        SscStatus::Inconclusive
    } else if strata.iter().all(|s| s.passed) {
        SscStatus::Pass
    } else {
        SscStatus::Fail
    };
    SscReport { status, level, threshold, samples: positive.len(), strata, scaled_second_moment }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(p1: f64, n: usize, seed: u64) -> Vec<SscSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let ell = rng.random_range(0..6u32);
                let q1 = (0..ell).filter(|_| rng.random::<f64>() < p1).count() as u32;
                SscSample { queue_len: ell, composition: vec![q1, ell - q1] }
            })
            .collect()
    }

    #[test]
    fn binomial_samples_pass() {
        let r = ssc_binomial_test(&synthetic(0.3, 60_000, 1), &[0.3, 0.7], 0.1, 0.01, 500);
        assert_eq!(r.status, SscStatus::Pass, "{r:?}");
        assert!(r.strata.iter().all(|s| s.queue_len > 0));
        // Binomial variance: E v^2 = delta^2 E[l] p (1 - p), so the ratio is p (1 - p).
        assert!((r.scaled_second_moment[0] - 0.21).abs() < 0.01, "{:?}", r.scaled_second_moment);
    }

    #[test]
    fn wrong_proportion_fails() {
        let r = ssc_binomial_test(&synthetic(0.4, 60_000, 2), &[0.3, 0.7], 0.1, 0.01, 500);
        assert_eq!(r.status, SscStatus::Fail);
    }

    #[test]
    fn degenerate_and_sparse() {
        let s: Vec<SscSample> = (0..20_000).map(|k| SscSample { queue_len: (k % 3) as u32, composition: vec![(k % 3) as u32, 0] }).collect();
        let r = ssc_binomial_test(&s, &[1.0, 0.0], 0.1, 0.01, 500);
        assert_eq!(r.status, SscStatus::Pass);
        let r = ssc_binomial_test(&s[..100], &[1.0, 0.0], 0.1, 0.01, 500);
        assert_eq!(r.status, SscStatus::Inconclusive);
    }
}
