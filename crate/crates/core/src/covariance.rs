//! Asymptotic covariance of the scaled count vector
//! `sqrt(n) (N_n(i,j)/n - p_ij)` over an index window.
//!
//! For each target pair the normalized martingale increment converges to
//! `sum xi_kl Delta(k,l)` minus its drift. The conditional covariance of two
//! such increments is `C = A + B`, where `A` collects the drift products and
//! `B` is the limit of `E[(xi^a . Delta)(xi^b . Delta)]`. Integrating over
//! time divides by `1 + delta_a + delta_b`, and mapping back from martingale
//! coordinates to counts gives `Xi^{-1} C~ Xi^{-T}`. The per-target
//! normalizing constants cancel in that product and are never formed.
//!
//! # Jump-covariance variants
//!
//! Every step is exactly one attachment event. An in-event at an `(r,q)`-node
//! (rate `c1 (r+lambda) p_rq`) moves mass `(r,q) -> (r+1,q)` and creates a
//! `(0,1)`-node; an out-event (rate `c2 (q+mu) p_rq`) moves `(r,q) -> (r,q+1)`
//! and creates a `(1,0)`-node. [`BVariant::Corrected`] sums these two event
//! families once each.
//!
//! [`BVariant::Verbatim`] evaluates the four-family display with its two
//! compensation terms and the `(0,1)` birth coefficient in every family.
//! Families indexed by the post-event degree (`r-1 -> r`) enumerate the same
//! events as those indexed by the pre-event degree, so this form counts each
//! event twice. [`BVariant::BirthSwap`] is the same display with only the
//! out-event birth coefficient changed to `xi_10`. Both are kept so that a
//! Monte Carlo ensemble can adjudicate between readings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::PGrid;
use crate::linalg;
use crate::martingale::{xi_matrix, xi_table, XiTable};
use crate::params::{IndexWindow, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BVariant {
    Corrected,
    Verbatim,
    BirthSwap,
}

impl BVariant {
    pub const ALL: [BVariant; 3] = [BVariant::Corrected, BVariant::Verbatim, BVariant::BirthSwap];

    pub fn name(self) -> &'static str {
        match self {
            BVariant::Corrected => "corrected",
            BVariant::Verbatim => "verbatim",
            BVariant::BirthSwap => "birth-swap",
        }
    }
}

impl fmt::Display for BVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant '{s}' (expected corrected, verbatim or birth-swap)"
                ))
            })
    }
}

/// How the infinite event sums in `B` are closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum TailMode {
    /// Sum the cells where `xi` varies, and add the constant-factor tail as
    /// `alpha - c1 sum (r+lambda) p_rq` (and the out-side analog). Exact
    /// given `sum p = sum i p = sum j p = 1`.
    Analytic,
    /// Sum directly over source cells `0..=rmax` x `0..=qmax`; the omitted
    /// tail weight is reported as a remainder.
    Direct { rmax: u32, qmax: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BOptions {
    pub variant: BVariant,
    pub tail: TailMode,
    /// Largest acceptable remainder in [`TailMode::Direct`].
    pub tolerance: f64,
}

impl Default for BOptions {
    fn default() -> Self {
        BOptions {
            variant: BVariant::Corrected,
            tail: TailMode::Analytic,
            tolerance: 1e-6,
        }
    }
}

impl BOptions {
    pub fn with_variant(variant: BVariant) -> Self {
        BOptions {
            variant,
            ..Default::default()
        }
    }
}

/// Drift sums for one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftTerms {
    pub target: (u32, u32),
    /// `P = sum xi_kl p_kl`.
    pub p_sum: f64,
    /// `a = alpha xi_01 + gamma xi_10`.
    pub birth: f64,
    /// `S = sum p_kl (delta_kl xi_kl - c1 (k+lambda) xi_{k+1,l} - c2 (l+mu) xi_{k,l+1})`.
    pub s: f64,
}

impl DriftTerms {
    /// `S - a + P`, zero when the increments have mean zero.
    pub fn mean_defect(&self) -> f64 {
        self.s - self.birth + self.p_sum
    }
}

fn require_cover(pgrid: &PGrid, r: u32, q: u32) -> Result<()> {
    if pgrid.covers(r, q) {
        Ok(())
    } else {
        Err(Error::PGridTooSmall {
            rmax: pgrid.rmax(),
            qmax: pgrid.qmax(),
            need_r: r,
            need_q: q,
        })
    }
}

pub fn drift_terms(params: &ModelParams, pgrid: &PGrid, xi: &XiTable) -> Result<DriftTerms> {
    let (i, j) = xi.target();
    require_cover(pgrid, i, j)?;
    let mut p_sum = 0.0;
    let mut s = 0.0;
    for k in 0..=i {
        for l in 0..=j {
            let p = pgrid.get(k, l);
            p_sum += xi.get(k, l) * p;
            s += p
                * (params.delta(k, l) * xi.get(k, l)
                    - params.in_rate(k) * xi.get(k + 1, l)
                    - params.out_rate(l) * xi.get(k, l + 1));
        }
    }
    Ok(DriftTerms {
        target: (i, j),
        p_sum,
        birth: params.alpha() * xi.get(0, 1) + params.gamma() * xi.get(1, 0),
        s,
    })
}

/// `A = (S_a - a_a)(S_b - a_b) + (S_a - a_a) P_b + (S_b - a_b) P_a`.
pub fn a_term(a: &DriftTerms, b: &DriftTerms) -> f64 {
    let ga = a.s - a.birth;
    let gb = b.s - b.birth;
    ga * gb + ga * b.p_sum + gb * a.p_sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BTerm {
    pub value: f64,
    /// Upper bound on the contribution of source cells outside the direct
    /// summation box; zero in analytic mode.
    pub remainder: f64,
}

/// Sums of one event family over a box of source cells.
struct FamilySum {
    /// Weighted sum of factor products over the box.
    inside: f64,
    /// Total rate of the family inside the box.
    rate: f64,
}

fn in_family(
    params: &ModelParams,
    pgrid: &PGrid,
    xa: &XiTable,
    xb: &XiTable,
    (ba, bb): (f64, f64),
    (rmax, qmax): (u32, u32),
) -> FamilySum {
    let mut inside = 0.0;
    let mut rate = 0.0;
    for r in 0..=rmax {
        for q in 0..=qmax {
            let w = params.in_rate(r) * pgrid.get(r, q);
            rate += w;
            let fa = xa.get(r + 1, q) + ba - xa.get(r, q);
            let fb = xb.get(r + 1, q) + bb - xb.get(r, q);
            inside += w * fa * fb;
        }
    }
    FamilySum { inside, rate }
}

fn out_family(
    params: &ModelParams,
    pgrid: &PGrid,
    xa: &XiTable,
    xb: &XiTable,
    (ba, bb): (f64, f64),
    (rmax, qmax): (u32, u32),
) -> FamilySum {
    let mut inside = 0.0;
    let mut rate = 0.0;
    for r in 0..=rmax {
        for q in 0..=qmax {
            let w = params.out_rate(q) * pgrid.get(r, q);
            rate += w;
            let fa = xa.get(r, q + 1) + ba - xa.get(r, q);
            let fb = xb.get(r, q + 1) + bb - xb.get(r, q);
            inside += w * fa * fb;
        }
    }
    FamilySum { inside, rate }
}

/// `B(a, b)`, the limit of `E[(xi^a . Delta)(xi^b . Delta) | F_n]` under the chosen variant.
pub fn b_term(
    params: &ModelParams,
    pgrid: &PGrid,
    xa: &XiTable,
    xb: &XiTable,
    opts: &BOptions,
) -> Result<BTerm> {
    let (i, j) = xa.target();
    let (s, t) = xb.target();
    // Outside this box every factor is its birth coefficient.
    let support = (i.max(s), j.max(t));
    let (rmax, qmax) = match opts.tail {
        TailMode::Analytic => support,
        TailMode::Direct { rmax, qmax } => {
            if rmax < support.0 || qmax < support.1 {
                return Err(Error::InvalidArgument(format!(
                    "summation box {rmax}x{qmax} is smaller than the coefficient support {}x{}",
                    support.0, support.1
                )));
            }
            (rmax, qmax)
        }
    };
    require_cover(pgrid, rmax.max(1), qmax.max(1))?;

    let in_birth = (xa.get(0, 1), xb.get(0, 1));
    let out_birth = match opts.variant {
        BVariant::Corrected | BVariant::BirthSwap => (xa.get(1, 0), xb.get(1, 0)),
        BVariant::Verbatim => (xa.get(0, 1), xb.get(0, 1)),
    };
    let fin = in_family(params, pgrid, xa, xb, in_birth, (rmax, qmax));
    let fout = out_family(params, pgrid, xa, xb, out_birth, (rmax, qmax));
    let in_tail = (params.alpha() - fin.rate).max(0.0);
    let out_tail = (params.gamma() - fout.rate).max(0.0);
    let in_tail_factor = in_birth.0 * in_birth.1;
    let out_tail_factor = out_birth.0 * out_birth.1;

    let (mut events, remainder) = match opts.tail {
        TailMode::Analytic => (
            fin.inside + fout.inside + in_tail * in_tail_factor + out_tail * out_tail_factor,
            0.0,
        ),
        TailMode::Direct { .. } => (
            fin.inside + fout.inside,
            in_tail * in_tail_factor.abs() + out_tail * out_tail_factor.abs(),
        ),
    };
    let mut remainder = remainder;
    let value = match opts.variant {
        BVariant::Corrected => events,
        BVariant::Verbatim | BVariant::BirthSwap => {
            events *= 2.0;
            remainder *= 2.0;
            let comp01 = (params.alpha() + params.c1() * params.lambda() * pgrid.get(0, 1))
                * xa.get(0, 1)
                * xb.get(0, 1);
            let comp10 = (params.gamma() + params.c2() * params.mu() * pgrid.get(1, 0))
                * xa.get(1, 0)
                * xb.get(1, 0);
            comp01 + comp10 + events
        }
    };
    if remainder > opts.tolerance {
        return Err(Error::BoxTooSmall {
            remainder,
            tolerance: opts.tolerance,
        });
    }
    Ok(BTerm { value, remainder })
}

/// All covariance ingredients for one window. Matrices are row-major over
/// the window coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub params: ModelParams,
    pub window: IndexWindow,
    pub options: BOptions,
    pub xi: Vec<f64>,
    pub drift: Vec<DriftTerms>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub c_tilde: Vec<f64>,
    pub final_cov: Vec<f64>,
    pub diagnostics: CovarianceDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceDiagnostics {
    pub max_mean_defect: f64,
    pub max_b_remainder: f64,
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub min_eigenvalue_c_tilde: f64,
    /// The martingale normalizers cancel in `Xi^{-1} C~ Xi^{-T}`.
    pub note: String,
}

impl CovarianceModel {
    pub fn dim(&self) -> usize {
        self.window.len()
    }

    pub fn final_entry(&self, r: usize, c: usize) -> f64 {
        self.final_cov[r * self.dim() + c]
    }

    pub fn predicted_variances(&self) -> Vec<f64> {
        (0..self.dim()).map(|r| self.final_entry(r, r)).collect()
    }
}

pub fn final_covariance(
    params: &ModelParams,
    window: &IndexWindow,
    pgrid: &PGrid,
    opts: &BOptions,
) -> Result<CovarianceModel> {
    let d = window.len();
    if d == 0 {
        return Err(Error::InvalidArgument("window has no coordinates".into()));
    }
    let tables: Vec<XiTable> = window
        .coords()
        .iter()
        .map(|&(i, j)| xi_table(params, i, j))
        .collect();
    let drift = tables
        .iter()
        .map(|t| drift_terms(params, pgrid, t))
        .collect::<Result<Vec<_>>>()?;
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d * d];
    let mut c = vec![0.0; d * d];
    let mut c_tilde = vec![0.0; d * d];
    let mut max_b_remainder = 0.0f64;
    for r in 0..d {
        for s in 0..=r {
            let av = a_term(&drift[r], &drift[s]);
            let bt = b_term(params, pgrid, &tables[r], &tables[s], opts)?;
            max_b_remainder = max_b_remainder.max(bt.remainder);
            let (i, j) = window.coords()[r];
            let (k, l) = window.coords()[s];
            let cv = av + bt.value;
            let ct = cv / (1.0 + params.delta(i, j) + params.delta(k, l));
            for (m, v) in [
                (&mut a, av),
                (&mut b, bt.value),
                (&mut c, cv),
                (&mut c_tilde, ct),
            ] {
                m[r * d + s] = v;
                m[s * d + r] = v;
            }
        }
    }
    let xi = xi_matrix(params, window);
    let final_cov = linalg::unit_lower_congruence(xi.data(), &c_tilde, d);
    let diagnostics = CovarianceDiagnostics {
        max_mean_defect: drift
            .iter()
            .map(|t| t.mean_defect().abs())
            .fold(0.0, f64::max),
        max_b_remainder,
        max_asymmetry: linalg::max_asymmetry(&final_cov, d),
        min_eigenvalue: linalg::min_eigenvalue(&final_cov, d),
        min_eigenvalue_c_tilde: linalg::min_eigenvalue(&c_tilde, d),
        note:
            "final covariance computed as Xi^-1 C~ Xi^-T; per-target normalizing constants cancel"
                .into(),
    };
    Ok(CovarianceModel {
        params: *params,
        window: window.clone(),
        options: *opts,
        xi: xi.data().to_vec(),
        drift,
        a,
        b,
        c,
        c_tilde,
        final_cov,
        diagnostics,
    })
}
