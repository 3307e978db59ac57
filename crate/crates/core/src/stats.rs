//! Goodness-of-fit tests and moment helpers used by the harnesses.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::measure::poisson_pmf;

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// z-score of `diff` given its standard error. A zero SE with a zero difference
/// is scored 0; a zero SE with a nonzero difference is infinite.
pub fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// `(first k, last k or None for the open tail, observed, expected)` per merged bin.
    pub bins: Vec<(u64, Option<u64>, u64, f64)>,
}

/// Pearson chi-square test of integer counts against `Pois(lambda)`.
///
/// Adjacent values are merged until each bin expects at least 5 samples; the
/// final bin is the open upper tail. With fewer than two bins the test is
/// vacuous and reports `p = 1`.
pub fn chi_square_poisson(counts: &[u64], lambda: f64) -> ChiSquareResult {
    let n = counts.len() as f64;
    let max_obs = counts.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0u64; max_obs as usize + 1];
    for &c in counts {
        hist[c as usize] += 1;
    }
    let observed_at = |k: u64| hist.get(k as usize).copied().unwrap_or(0);

    let mut bins = Vec::new();
    if lambda <= 0.0 {
        bins.push((0, None, counts.len() as u64, n));
    } else {
        let mut k = 0u64;
        let mut start = 0u64;
        let mut cdf_before_start: f64 = 0.0;
        let mut cdf: f64 = 0.0;
        let mut exp_acc = 0.0;
        let mut obs_acc = 0u64;
        loop {
            let p = poisson_pmf(k, lambda).unwrap_or(0.0);
            exp_acc += n * p;
            obs_acc += observed_at(k);
            cdf += p;
            let tail = (1.0 - cdf).max(0.0) * n;
            if tail < 5.0 {
                let obs_tail = counts.iter().filter(|&&c| c >= start).count() as u64;
                bins.push((start, None, obs_tail, n * (1.0 - cdf_before_start).max(0.0)));
                break;
            }
            if exp_acc >= 5.0 {
                bins.push((start, Some(k), obs_acc, exp_acc));
                start = k + 1;
                cdf_before_start = cdf;
                exp_acc = 0.0;
                obs_acc = 0;
            }
            k += 1;
        }
    }
    // fold a too-small tail bin into its neighbour
    if bins.len() >= 2 && bins[bins.len() - 1].3 < 5.0 {
        let last = bins.pop().unwrap();
        let prev = bins.last_mut().unwrap();
        prev.1 = None;
        prev.2 += last.2;
        prev.3 += last.3;
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(_, _, o, e)| if e > 0.0 { (o as f64 - e).powi(2) / e } else { 0.0 })
        .sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN)
    };
    ChiSquareResult { statistic, dof, p_value, bins }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let sq = effective_n.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult { statistic: d, p_value: ks_p_value(d, n) }
}

/// Two-sample Kolmogorov–Smirnov test. Ties are handled by comparing the
/// empirical CDFs only at distinct values, which makes the test conservative
/// for discrete data.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len(), ys.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let v = xs[i].min(ys[j]);
        while i < na && xs[i] <= v {
            i += 1;
        }
        while j < nb && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    KsResult { statistic: d, p_value: ks_p_value(d, ne) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_se_of_constant() {
        assert_eq!(mean_se(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }

    #[test]
    fn z_score_conventions() {
        assert_eq!(z_score(0.0, 0.0), 0.0);
        assert!(z_score(1.0, 0.0).is_infinite());
        assert_eq!(z_score(1.0, 0.5), 2.0);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Q(1.36) ≈ 0.05, Q(1.63) ≈ 0.01 (classical critical values)
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn ks_accepts_uniform_and_rejects_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        assert!(ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).p_value > 0.01);
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.9).collect();
        assert!(ks_one_sample(&shifted, |x| x.clamp(0.0, 1.0)).p_value < 1e-6);
        let ys: Vec<f64> = (0..4000).map(|_| rng.random()).collect();
        assert!(ks_two_sample(&xs, &ys).p_value > 0.01);
        assert!(ks_two_sample(&shifted, &ys).p_value < 1e-6);
    }

    #[test]
    fn chi_square_bins_cover_everything() {
        let counts: Vec<u64> = (0..1000).map(|i| (i % 9) as u64).collect();
        let r = chi_square_poisson(&counts, 4.0);
        let total: u64 = r.bins.iter().map(|b| b.2).sum();
        assert_eq!(total, 1000);
        let exp: f64 = r.bins.iter().map(|b| b.3).sum();
        assert!((exp - 1000.0).abs() < 1e-6);
        assert!(r.bins.iter().all(|b| b.3 >= 5.0));
        // uniform on 0..9 is far from Pois(4)
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn chi_square_degenerate_lambda_is_vacuous() {
        let r = chi_square_poisson(&[0, 0, 0], 0.0);
        assert_eq!(r.dof, 0);
        assert_eq!(r.p_value, 1.0);
    }
}
