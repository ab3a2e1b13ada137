//! Sample statistics used by the ensemble checks: Kolmogorov-Smirnov against
//! a centered normal, jackknife errors for covariance entries, and bootstrap
//! errors for quantiles.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Smallest sample accepted by [`ks_normal`].
pub const KS_MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided one-sample KS test of `samples` against `N(0, variance)`, with
/// the asymptotic Kolmogorov p-value (Stephens' small-sample correction).
pub fn ks_normal(samples: &[f64], variance: f64) -> Result<KsResult> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::ZeroPredictedVariance(variance));
    }
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::InsufficientReplications {
            needed: KS_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("positive sd");
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let statistic = xs.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let f = normal.cdf(x);
        acc.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    });
    let sqrt_n = n.sqrt();
    let p_value = kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic);
    Ok(KsResult { statistic, p_value })
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Jacobi theta form of the CDF converges fast for small x.
        let pi2 = std::f64::consts::PI.powi(2);
        let cdf: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-(m * m) * pi2 / (8.0 * x * x)).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / x;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * x * x).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn chi_square_quantile(dof: usize, q: f64) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive dof")
        .inverse_cdf(q)
}

pub fn normal_quantile(q: f64) -> f64 {
    Normal::standard().inverse_cdf(q)
}

/// Bootstrap standard error of the `q`-quantile.
pub fn bootstrap_quantile_se(data: &[f64], q: f64, reps: usize, rng: &mut SimRng) -> f64 {
    let n = data.len();
    let mut buf = vec![0.0; n];
    let est: Vec<f64> = (0..reps)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = data[rng.random_range(0..n)];
            }
            buf.sort_by(f64::total_cmp);
            quantile_sorted(&buf, q)
        })
        .collect();
    sample_sd(&est)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Unbiased sample covariance of row vectors (`rows[r][c]`), row-major `d x d`.
pub fn sample_covariance(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let m = column_means(rows);
    let mut s = vec![0.0; d * d];
    for x in rows {
        for a in 0..d {
            for b in 0..d {
                s[a * d + b] += (x[a] - m[a]) * (x[b] - m[b]);
            }
        }
    }
    s.iter_mut().for_each(|v| *v /= n - 1.0);
    s
}

pub fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut m = vec![0.0; d];
    for x in rows {
        for (acc, v) in m.iter_mut().zip(x) {
            *acc += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= rows.len() as f64);
    m
}

/// Delete-one jackknife standard errors of every sample covariance entry.
/// Requires at least three rows.
pub fn jackknife_covariance_se(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    assert!(n >= 3, "jackknife needs at least three rows");
    let d = rows[0].len();
    let m = column_means(rows);
    // Scatter about the full mean.
    let mut scatter = vec![0.0; d * d];
    for x in rows {
        for a in 0..d {
            for b in 0..d {
                scatter[a * d + b] += (x[a] - m[a]) * (x[b] - m[b]);
            }
        }
    }
    let nf = n as f64;
    let mut loo = vec![vec![0.0; d * d]; n];
    for (k, x) in rows.iter().enumerate() {
        // Leave-one-out mean shift and scatter update.
        let dev: Vec<f64> = (0..d).map(|a| x[a] - m[a]).collect();
        for a in 0..d {
            for b in 0..d {
                let s = scatter[a * d + b] - dev[a] * dev[b] * nf / (nf - 1.0);
                loo[k][a * d + b] = s / (nf - 2.0);
            }
        }
    }
    let mut se = vec![0.0; d * d];
    for e in 0..d * d {
        let avg = loo.iter().map(|c| c[e]).sum::<f64>() / nf;
        let ss = loo.iter().map(|c| (c[e] - avg).powi(2)).sum::<f64>();
        se[e] = ((nf - 1.0) / nf * ss).sqrt();
    }
    se
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn kolmogorov_tail_values() {
        // Standard table values of the Kolmogorov distribution.
        assert_relative_eq!(kolmogorov_survival(1.3581), 0.05, epsilon = 2e-4);
        assert_relative_eq!(kolmogorov_survival(1.6276), 0.01, epsilon = 1e-4);
        assert_relative_eq!(kolmogorov_survival(1.2238), 0.10, epsilon = 2e-4);
        assert_relative_eq!(kolmogorov_survival(0.5), 0.9639, epsilon = 1e-3);
        // Both series agree at the switch point.
        let x = 1.18;
        let pi2 = std::f64::consts::PI.powi(2);
        let theta: f64 = 1.0
            - (1..=20)
                .map(|k| (-((2 * k - 1) as f64).powi(2) * pi2 / (8.0 * x * x)).exp())
                .sum::<f64>()
                * (2.0 * std::f64::consts::PI).sqrt()
                / x;
        assert_relative_eq!(theta, kolmogorov_survival(x), epsilon = 1e-10);
    }

    #[test]
    fn ks_calibration() {
        let mut rng = rng::stream(77, 0);
        let reps = 200;
        let mut rejections = 0;
        for _ in 0..reps {
            let xs: Vec<f64> = (0..500)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    1.5 * x
                })
                .collect();
            if ks_normal(&xs, 2.25).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let frac = rejections as f64 / reps as f64;
        assert!((0.02..=0.10).contains(&frac), "rejection rate {frac}");
    }

    #[test]
    fn ks_degenerate_inputs() {
        let far = vec![50.0; 200];
        let r = ks_normal(&far, 1.0).unwrap();
        assert!(r.statistic > 0.999);
        assert!(r.p_value < 1e-10);
        let centered = vec![0.0; 200];
        let r = ks_normal(&centered, 1.0).unwrap();
        assert_relative_eq!(r.statistic, 0.5, epsilon = 1e-12);
        assert!(r.p_value < 1e-10);
        assert!(matches!(
            ks_normal(&centered, 0.0),
            Err(Error::ZeroPredictedVariance(_))
        ));
        assert!(matches!(
            ks_normal(&[0.0; 10], 1.0),
            Err(Error::InsufficientReplications { .. })
        ));
    }

    /// Closed-form jackknife against brute-force recomputation.
    #[test]
    fn jackknife_matches_brute_force() {
        let mut rng = rng::stream(3, 0);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let fast = jackknife_covariance_se(&rows);
        let n = rows.len();
        let loo: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let sub: Vec<Vec<f64>> = rows
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != k)
                    .map(|(_, r)| r.clone())
                    .collect();
                sample_covariance(&sub)
            })
            .collect();
        for e in 0..9 {
            let avg = loo.iter().map(|c| c[e]).sum::<f64>() / n as f64;
            let se = ((n as f64 - 1.0) / n as f64
                * loo.iter().map(|c| (c[e] - avg).powi(2)).sum::<f64>())
            .sqrt();
            assert_relative_eq!(fast[e], se, max_relative = 1e-9);
        }
    }

    #[test]
    fn quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
        assert_eq!(quantile_sorted(&xs, 0.9), 4.6);
        assert_relative_eq!(
            chi_square_quantile(8, 0.9),
            13.361_566_136_511_36,
            epsilon = 1e-8
        );
        assert_relative_eq!(
            normal_quantile(0.975),
            1.959_963_984_540_054,
            epsilon = 1e-9
        );
    }

    #[test]
    fn bootstrap_se_is_reasonable() {
        let mut rng = rng::stream(9, 0);
        let xs: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let se = bootstrap_quantile_se(&xs, 0.5, 400, &mut rng);
        // Asymptotic SE of the median of N(0,1): sqrt(pi/2)/sqrt(n).
        let theory = (std::f64::consts::PI / 2.0).sqrt() / (2000f64).sqrt();
        assert!((se / theory - 1.0).abs() < 0.3, "{se} vs {theory}");
    }
}
