//! Monte Carlo ensembles of independent graphs and the checks that compare
//! them against the predicted Gaussian limit.

use serde::{Deserialize, Serialize};

use crate::covariance::{final_covariance, BOptions, BVariant, TailMode};
use crate::error::{Error, Result};
use crate::exact::NuRecursion;
use crate::limits::{concentration_envelope, p_grid};
use crate::linalg;
use crate::params::{IndexWindow, ModelParams};
use crate::rng;
use crate::sim::{grow_stream, GrowOptions};
use crate::stats::{self, KsResult};

/// Probabilities at which Mahalanobis quantiles are compared.
pub const MAHALANOBIS_LEVELS: [f64; 3] = [0.5, 0.9, 0.99];
/// Mismatch (in standard errors) below which a covariance prediction matches.
pub const MATCH_THRESHOLD_SE: f64 = 5.0;
/// Replications required by the variance-floor check.
pub const FLOOR_MIN_RUNS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n: u64,
    pub runs: usize,
    pub base_seed: u64,
    pub window: IndexWindow,
    /// Extra sizes at which counts are recorded; `n` is always recorded.
    pub checkpoints: Vec<u64>,
    /// Worker threads; 0 picks the pool default, 1 runs sequentially.
    pub workers: usize,
}

impl EnsembleConfig {
    /// Configuration with a midpoint checkpoint at `n / 2`.
    pub fn new(n: u64, runs: usize, base_seed: u64, window: IndexWindow) -> Self {
        let checkpoints = if n >= 2 { vec![n / 2] } else { Vec::new() };
        EnsembleConfig {
            n,
            runs,
            base_seed,
            window,
            checkpoints,
            workers: 0,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

/// Windowed counts of every run at every checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub window: IndexWindow,
    /// Ascending; the last entry is the target size.
    pub sizes: Vec<u64>,
    /// `counts[checkpoint][run][coord]`.
    pub counts: Vec<Vec<Vec<u64>>>,
}

impl Ensemble {
    pub fn runs(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn checkpoint(&self, n: u64) -> Option<usize> {
        self.sizes.iter().position(|&s| s == n)
    }
}

/// Grows `cfg.runs` independent graphs, run `r` on RNG stream `r`.
pub fn simulate_ensemble(params: &ModelParams, cfg: &EnsembleConfig) -> Result<Ensemble> {
    if cfg.n == 0 {
        return Err(Error::InvalidArgument(
            "target size must be at least 1".into(),
        ));
    }
    let mut sizes: Vec<u64> = cfg
        .checkpoints
        .iter()
        .copied()
        .filter(|&c| c >= 1 && c < cfg.n)
        .collect();
    sizes.push(cfg.n);
    sizes.sort_unstable();
    sizes.dedup();
    let opts = GrowOptions {
        checkpoints: sizes.clone(),
        window: Some(cfg.window.clone()),
        ..GrowOptions::default()
    };
    let run_one = |r: usize| -> Result<Vec<Vec<u64>>> {
        let out = grow_stream(params, cfg.n, cfg.base_seed, r as u64, &opts)?;
        Ok(out.checkpoints.into_iter().map(|c| c.counts).collect())
    };
    let per_run = run_all(cfg, run_one)?;
    let mut counts = vec![Vec::with_capacity(cfg.runs); sizes.len()];
    for run in per_run {
        for (slot, c) in counts.iter_mut().zip(run) {
            slot.push(c);
        }
    }
    Ok(Ensemble {
        window: cfg.window.clone(),
        sizes,
        counts,
    })
}

#[cfg(feature = "parallel")]
fn run_all<T, F>(cfg: &EnsembleConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    if cfg.workers == 1 {
        return (0..cfg.runs).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| (0..cfg.runs).into_par_iter().map(f).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_all<T, F>(cfg: &EnsembleConfig, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..cfg.runs).map(f).collect()
}

/// `Z = (N_n - n p) / sqrt(n)` for every run at checkpoint `k`.
pub fn z_scores(ens: &Ensemble, p: &[f64], k: usize) -> Vec<Vec<f64>> {
    let n = ens.sizes[k] as f64;
    let scale = n.sqrt();
    ens.counts[k]
        .iter()
        .map(|run| {
            run.iter()
                .zip(p)
                .map(|(&c, &pv)| (c as f64 - n * pv) / scale)
                .collect()
        })
        .collect()
}

/// Limit values `p_ij` over the window coordinates.
pub fn window_p(params: &ModelParams, window: &IndexWindow) -> Vec<f64> {
    let grid = p_grid(params, window.imax().max(1), window.jmax().max(1));
    window
        .coords()
        .iter()
        .map(|&(i, j)| grid.get(i, j))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub n: u64,
    pub c: f64,
    pub envelope: f64,
    pub rate: f64,
}

/// Fraction of runs whose worst window deviation `|N_n/n - p|` reaches the
/// envelope `c * sqrt(ln n / n)`, at every recorded size.
pub fn concentration_check(ens: &Ensemble, p: &[f64], c: f64) -> Vec<ConcentrationRow> {
    ens.sizes
        .iter()
        .zip(&ens.counts)
        .map(|(&n, runs)| {
            let nf = n as f64;
            let envelope = concentration_envelope(nf, c);
            let violations = runs
                .iter()
                .filter(|run| {
                    let worst = run
                        .iter()
                        .zip(p)
                        .map(|(&k, &pv)| (k as f64 / nf - pv).abs())
                        .fold(0.0, f64::max);
                    worst >= envelope
                })
                .count();
            ConcentrationRow {
                n,
                c,
                envelope,
                rate: if runs.is_empty() {
                    0.0
                } else {
                    violations as f64 / runs.len() as f64
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceFloorRow {
    pub n: u64,
    pub values: Vec<f64>,
}

/// Sample variance of the raw counts divided by `n`, per coordinate and size.
pub fn variance_floor_check(ens: &Ensemble) -> Result<Vec<VarianceFloorRow>> {
    if ens.runs() < FLOOR_MIN_RUNS {
        return Err(Error::InsufficientReplications {
            needed: FLOOR_MIN_RUNS,
            got: ens.runs(),
        });
    }
    Ok(ens
        .sizes
        .iter()
        .zip(&ens.counts)
        .map(|(&n, runs)| {
            let values = (0..ens.window.len())
                .map(|c| {
                    let xs: Vec<f64> = runs.iter().map(|r| r[c] as f64).collect();
                    stats::sample_variance(&xs) / n as f64
                })
                .collect();
            VarianceFloorRow { n, values }
        })
        .collect())
}

/// Per-coordinate KS test of Z against `N(0, FinalCov_cc)`.
pub fn ks_normality(samples: &[f64], variance: f64) -> Result<KsResult> {
    stats::ks_normal(samples, variance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantPrediction {
    pub variant: BVariant,
    pub final_cov: Vec<f64>,
    pub min_eigenvalue: f64,
    /// Largest `|empirical - predicted| / se` over the covariance entries.
    pub max_mismatch_se: Option<f64>,
    pub matches: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Adjudication {
    /// Exactly one variant agrees with the ensemble.
    Match {
        variant: BVariant,
    },
    /// More than one variant agrees.
    Inconclusive {
        variants: Vec<BVariant>,
    },
    NoMatch,
    /// Too few runs to estimate a covariance.
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileCheck {
    pub level: f64,
    pub empirical: f64,
    pub reference: f64,
    pub bootstrap_se: f64,
}

impl QuantileCheck {
    pub fn deviation_se(&self) -> f64 {
        (self.empirical - self.reference).abs() / self.bootstrap_se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuBias {
    /// `max |nu_n - n p|` over the window at the recorded sizes.
    pub max_abs: f64,
    /// The same divided by `sqrt(n)`.
    pub max_scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub params: ModelParams,
    pub window: Vec<(u32, u32)>,
    pub n: u64,
    pub runs: usize,
    pub base_seed: u64,
    pub sizes: Vec<u64>,
    pub p: Vec<f64>,
    pub insufficient_replications: bool,
    pub z_mean: Option<Vec<f64>>,
    pub z_variance: Option<Vec<f64>>,
    /// Largest `|mean Z| / (sd / sqrt(R))` over coordinates.
    pub z_mean_max_se: Option<f64>,
    pub empirical_covariance: Option<Vec<f64>>,
    pub jackknife_se: Option<Vec<f64>>,
    pub primary_variant: BVariant,
    pub predictions: Vec<VariantPrediction>,
    pub adjudication: Adjudication,
    pub ks: Option<Vec<KsResult>>,
    pub ks_critical_1pct: f64,
    pub mahalanobis: Option<Vec<QuantileCheck>>,
    pub concentration: Vec<ConcentrationRow>,
    pub variance_floor: Option<Vec<VarianceFloorRow>>,
    pub nu_bias: NuBias,
}

impl EnsembleReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn prediction(&self, variant: BVariant) -> Option<&VariantPrediction> {
        self.predictions.iter().find(|v| v.variant == variant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub primary: BVariant,
    pub concentration_c: f64,
    pub bootstrap_reps: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            primary: BVariant::Corrected,
            concentration_c: 5.0,
            bootstrap_reps: 1000,
        }
    }
}

/// A finished ensemble with its report.
#[derive(Debug, Clone)]
pub struct VerifyRun {
    pub report: EnsembleReport,
    pub ensemble: Ensemble,
    /// Z vectors at the target size, one row per run.
    pub z: Vec<Vec<f64>>,
}

/// Simulates the ensemble and evaluates every check against the predicted law.
pub fn run_ensemble(
    params: &ModelParams,
    cfg: &EnsembleConfig,
    opts: &VerifyOptions,
) -> Result<VerifyRun> {
    let window = &cfg.window;
    let d = window.len();
    // The jump terms read p at (0,1) and (1,0) whatever the window.
    let pgrid = p_grid(params, window.imax().max(1), window.jmax().max(1));
    let p: Vec<f64> = window
        .coords()
        .iter()
        .map(|&(i, j)| pgrid.get(i, j))
        .collect();
    let models = BVariant::ALL
        .iter()
        .map(|&v| {
            let bopts = BOptions {
                tail: TailMode::Analytic,
                ..BOptions::with_variant(v)
            };
            final_covariance(params, window, &pgrid, &bopts)
        })
        .collect::<Result<Vec<_>>>()?;

    let ensemble = simulate_ensemble(params, cfg)?;
    let last = ensemble.sizes.len() - 1;
    let z = z_scores(&ensemble, &p, last);
    let runs = cfg.runs;
    let enough = runs >= 2;

    let (z_mean, z_variance, z_mean_max_se, emp, se) = if enough {
        let means = stats::column_means(&z);
        let vars: Vec<f64> = (0..d)
            .map(|c| stats::sample_variance(&z.iter().map(|r| r[c]).collect::<Vec<_>>()))
            .collect();
        let worst = means
            .iter()
            .zip(&vars)
            .map(|(m, v)| m.abs() / (v / runs as f64).sqrt())
            .fold(0.0, f64::max);
        let emp = stats::sample_covariance(&z);
        let se = (runs >= 3).then(|| stats::jackknife_covariance_se(&z));
        (Some(means), Some(vars), Some(worst), Some(emp), se)
    } else {
        (None, None, None, None, None)
    };

    let predictions: Vec<VariantPrediction> = models
        .iter()
        .map(|m| {
            let max_mismatch_se = match (&emp, &se) {
                (Some(e), Some(s)) => Some(max_mismatch(e, &m.final_cov, s, d)),
                _ => None,
            };
            VariantPrediction {
                variant: m.options.variant,
                final_cov: m.final_cov.clone(),
                min_eigenvalue: m.diagnostics.min_eigenvalue,
                max_mismatch_se,
                matches: max_mismatch_se.map(|x| x <= MATCH_THRESHOLD_SE),
            }
        })
        .collect();
    let adjudication = adjudicate(&predictions);

    let primary = models
        .iter()
        .find(|m| m.options.variant == opts.primary)
        .expect("all variants evaluated");
    let predicted_var = primary.predicted_variances();

    let ks = if runs >= stats::KS_MIN_SAMPLES {
        Some(
            (0..d)
                .map(|c| {
                    ks_normality(
                        &z.iter().map(|r| r[c]).collect::<Vec<_>>(),
                        predicted_var[c],
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let mahalanobis = if runs >= 2 {
        linalg::cholesky(&primary.final_cov, d).map(|l| {
            let mut d2: Vec<f64> = z
                .iter()
                .map(|row| linalg::solve_lower(&l, d, row).iter().map(|w| w * w).sum())
                .collect();
            d2.sort_by(f64::total_cmp);
            let mut brng = rng::stream(cfg.base_seed, u64::MAX);
            MAHALANOBIS_LEVELS
                .iter()
                .map(|&q| QuantileCheck {
                    level: q,
                    empirical: stats::quantile_sorted(&d2, q),
                    reference: stats::chi_square_quantile(d, q),
                    bootstrap_se: stats::bootstrap_quantile_se(
                        &d2,
                        q,
                        opts.bootstrap_reps,
                        &mut brng,
                    ),
                })
                .collect()
        })
    } else {
        None
    };

    let concentration = concentration_check(&ensemble, &p, opts.concentration_c);
    let variance_floor = variance_floor_check(&ensemble).ok();
    let nu_bias = nu_bias(params, window, &p, &ensemble.sizes)?;

    let report = EnsembleReport {
        params: *params,
        window: window.coords().to_vec(),
        n: cfg.n,
        runs,
        base_seed: cfg.base_seed,
        sizes: ensemble.sizes.clone(),
        p,
        insufficient_replications: !enough,
        z_mean,
        z_variance,
        z_mean_max_se,
        empirical_covariance: emp,
        jackknife_se: se,
        primary_variant: opts.primary,
        predictions,
        adjudication,
        ks,
        ks_critical_1pct: 1.63 / (runs as f64).sqrt(),
        mahalanobis,
        concentration,
        variance_floor,
        nu_bias,
    };
    Ok(VerifyRun {
        report,
        ensemble,
        z,
    })
}

fn max_mismatch(emp: &[f64], pred: &[f64], se: &[f64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in a..d {
            let k = a * d + b;
            let diff = (emp[k] - pred[k]).abs();
            let z = if se[k] > 0.0 {
                diff / se[k]
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
    }
    worst
}

fn adjudicate(predictions: &[VariantPrediction]) -> Adjudication {
    if predictions.iter().any(|p| p.matches.is_none()) {
        return Adjudication::Unavailable;
    }
    let hits: Vec<BVariant> = predictions
        .iter()
        .filter(|p| p.matches == Some(true))
        .map(|p| p.variant)
        .collect();
    match hits.len() {
        0 => Adjudication::NoMatch,
        1 => Adjudication::Match { variant: hits[0] },
        _ => Adjudication::Inconclusive { variants: hits },
    }
}

fn nu_bias(params: &ModelParams, window: &IndexWindow, p: &[f64], sizes: &[u64]) -> Result<NuBias> {
    let mut rec = NuRecursion::new(params, window.imax(), window.jmax())?;
    let mut out = NuBias {
        max_abs: 0.0,
        max_scaled: 0.0,
    };
    let target = *sizes.last().expect("at least one size");
    let mut n = 0;
    while n < target {
        let grid = rec.advance();
        n = grid.n();
        if sizes.contains(&n) {
            let nf = n as f64;
            let worst = window
                .coords()
                .iter()
                .zip(p)
                .map(|(&(i, j), &pv)| (grid.get(i, j) - nf * pv).abs())
                .fold(0.0, f64::max);
            out.max_abs = out.max_abs.max(worst);
            out.max_scaled = out.max_scaled.max(worst / nf.sqrt());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqRow {
    pub i: u32,
    pub j: u32,
    pub rank: usize,
    pub standardized: f64,
    pub normal_quantile: f64,
}

/// Sorted standardized samples per coordinate against normal quantiles at
/// plotting positions `(k + 0.5) / R`.
pub fn qq_table(z: &[Vec<f64>], window: &IndexWindow, variances: &[f64]) -> Vec<QqRow> {
    let r = z.len();
    let mut rows = Vec::with_capacity(r * window.len());
    for (c, &(i, j)) in window.coords().iter().enumerate() {
        let sd = variances[c].sqrt();
        let mut xs: Vec<f64> = z.iter().map(|row| row[c] / sd).collect();
        xs.sort_by(f64::total_cmp);
        for (k, x) in xs.into_iter().enumerate() {
            rows.push(QqRow {
                i,
                j,
                rank: k,
                standardized: x,
                normal_quantile: stats::normal_quantile((k as f64 + 0.5) / r as f64),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_run_flags_insufficient_replications() {
        let cfg = EnsembleConfig::new(500, 1, 4, IndexWindow::new(1, 1));
        let run = run_ensemble(&ModelParams::reference(), &cfg, &VerifyOptions::default()).unwrap();
        assert!(run.report.insufficient_replications);
        assert!(run.report.empirical_covariance.is_none());
        assert_eq!(run.report.adjudication, Adjudication::Unavailable);
        assert!(run.report.ks.is_none());
    }

    #[test]
    fn ensemble_layout() {
        let cfg = EnsembleConfig::new(1000, 7, 11, IndexWindow::new(2, 2));
        let ens = simulate_ensemble(&ModelParams::reference(), &cfg).unwrap();
        assert_eq!(ens.sizes, vec![500, 1000]);
        assert_eq!(ens.runs(), 7);
        assert!(ens.counts.iter().all(|c| c.iter().all(|r| r.len() == 8)));
        // Counts never exceed the node count.
        for (k, &n) in ens.sizes.iter().enumerate() {
            assert!(ens.counts[k].iter().all(|r| r.iter().sum::<u64>() <= n));
        }
    }

    #[test]
    fn worker_count_does_not_change_report() {
        let p = ModelParams::reference();
        let base = EnsembleConfig::new(2000, 120, 99, IndexWindow::new(1, 1));
        let a = run_ensemble(&p, &base.clone().with_workers(1), &VerifyOptions::default()).unwrap();
        let b = run_ensemble(&p, &base.clone().with_workers(3), &VerifyOptions::default()).unwrap();
        let c = run_ensemble(&p, &base.with_workers(0), &VerifyOptions::default()).unwrap();
        assert_eq!(a.report.to_json(), b.report.to_json());
        assert_eq!(a.report.to_json(), c.report.to_json());
    }

    #[test]
    fn concentration_rate_monotone_in_c() {
        let p = ModelParams::reference();
        let cfg = EnsembleConfig::new(3000, 50, 5, IndexWindow::new(2, 2));
        let ens = simulate_ensemble(&p, &cfg).unwrap();
        let pv = window_p(&p, &cfg.window);
        let mut prev = f64::INFINITY;
        for c in [0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 5.0, 1e9] {
            let rate = concentration_check(&ens, &pv, c).last().unwrap().rate;
            assert!(rate <= prev);
            prev = rate;
        }
        assert_eq!(prev, 0.0);
        assert_eq!(
            concentration_check(&ens, &pv, 0.0).last().unwrap().rate,
            1.0
        );
    }

    #[test]
    fn floor_needs_runs() {
        let cfg = EnsembleConfig::new(100, 10, 5, IndexWindow::new(1, 1));
        let ens = simulate_ensemble(&ModelParams::reference(), &cfg).unwrap();
        assert!(matches!(
            variance_floor_check(&ens),
            Err(Error::InsufficientReplications { .. })
        ));
    }

    #[test]
    fn qq_table_shape() {
        let w = IndexWindow::new(0, 1);
        let z = vec![vec![1.0], vec![-1.0], vec![0.0], vec![2.0]];
        let rows = qq_table(&z, &w, &[4.0]);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].standardized, -0.5);
        assert_eq!(rows[3].standardized, 1.0);
        assert!(rows[0].normal_quantile < 0.0 && rows[3].normal_quantile > 0.0);
        assert_eq!(rows[1].normal_quantile, -rows[2].normal_quantile);
    }
}
