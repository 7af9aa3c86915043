use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairwise summation in index order; the result depends only on the input order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(v) / v.len() as f64
}

/// Mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    let m = mean(v);
    if n < 2 {
        return (m, f64::NAN);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Summary {
    pub fn of(v: &[f64]) -> Self {
        let (mean, se) = mean_se(v);
        let mut sorted = v.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            n: v.len(),
            mean,
            se,
            median: quantile_sorted(&sorted, 0.5),
            q25: quantile_sorted(&sorted, 0.25),
            q75: quantile_sorted(&sorted, 0.75),
        }
    }

    /// `|mean - target| < k se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() < k * self.se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub const KS_MIN_SAMPLES: usize = 20;

/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn scaled_p(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// Two-sided one-sample test against a continuous distribution function.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: KS_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult {
        statistic: d,
        p_value: scaled_p(d, n),
    })
}

/// Two-sided two-sample test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let short = a.len().min(b.len());
    if short < KS_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: KS_MIN_SAMPLES,
            got: short,
        });
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: scaled_p(d, n * m / (n + m)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn pairwise_sum_matches_plain_sum() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), 249_750.0);
    }

    #[test]
    fn summary_quantiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((s.median, s.q25, s.q75, s.mean), (3.0, 2.0, 4.0, 3.0));
    }

    #[test]
    fn kolmogorov_tail_values() {
        // P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn ks_zero_statistic_for_exact_fit() {
        // Points at the midpoints of n equal cells give D = 1/(2n).
        let n = 50;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let r = ks_test(&s, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-12);
        assert!(ks_test(&s[..10], |x| x).is_err());
    }

    #[test]
    fn ks_uniform_acceptance_rate() {
        let mut accepted = 0;
        for seed in 0..40 {
            let mut rng = stream(61, seed);
            let s: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
            if ks_test(&s, |x| x.clamp(0.0, 1.0)).unwrap().p_value > 0.01 {
                accepted += 1;
            }
        }
        assert!(accepted >= 38);
    }

    #[test]
    fn ks_detects_shift() {
        let mut rng = stream(62, 0);
        let s: Vec<f64> = (0..10_000).map(|_| 0.1 + rng.random::<f64>()).collect();
        let r = ks_test(&s, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.statistic >= 0.09);
        assert!(r.p_value < 1e-10);
        let t: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let two = ks_two_sample(&s, &t).unwrap();
        assert!(two.statistic >= 0.08 && two.p_value < 1e-10);
    }
}
