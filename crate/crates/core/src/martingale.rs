//! Martingale coefficients `b^{(i,j)}_{k,l,n}`, their ratio limits `xi`, and
//! the window matrix built from those limits.
//!
//! For a target `(i,j)` the weighted sum
//! `M_n = sum_{k<=i, l<=j} b_{k,l,n} (N_n(k,l) - nu_n(k,l))` is a martingale
//! when the coefficients satisfy a triangular backward recursion in `n`. The
//! ratios `b_{k,l,n} / b_{i,j,n}` converge to `xi_kl`, the left eigenvector of
//! the mean-count dynamics for eigenvalue `delta_ij`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{IndexWindow, ModelParams};

/// Closed form of `xi_kj` on the row `l = j`:
/// `(-1)^(i-k) prod_{d=k}^{i-1} (lambda + d) / (i - d)`.
pub fn xi_boundary_row(params: &ModelParams, i: u32, _j: u32, k: u32) -> f64 {
    assert!(k <= i, "k = {k} exceeds i = {i}");
    (k..i).fold(1.0, |acc, d| {
        -acc * (params.lambda() + f64::from(d)) / f64::from(i - d)
    })
}

/// Closed form of `xi_il` on the column `k = i`:
/// `(-1)^(j-l) prod_{r=l}^{j-1} (mu + r) / (j - r)`.
pub fn xi_boundary_col(params: &ModelParams, _i: u32, j: u32, l: u32) -> f64 {
    assert!(l <= j, "l = {l} exceeds j = {j}");
    (l..j).fold(1.0, |acc, r| {
        -acc * (params.mu() + f64::from(r)) / f64::from(j - r)
    })
}

/// `xi^{(i,j)}_{kl}` for `0 <= k <= i`, `0 <= l <= j`; zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiTable {
    i: u32,
    j: u32,
    values: Vec<f64>,
    /// Value the interior recursion gives at `(0,0)` before it is zeroed.
    unforced_origin: f64,
}

impl XiTable {
    pub fn target(&self) -> (u32, u32) {
        (self.i, self.j)
    }

    #[inline]
    pub fn get(&self, k: u32, l: u32) -> f64 {
        if k > self.i || l > self.j {
            0.0
        } else {
            self.values[(k * (self.j + 1) + l) as usize]
        }
    }

    /// Like [`get`](Self::get) but returns the unforced value at `(0,0)`.
    pub fn get_unforced(&self, k: u32, l: u32) -> f64 {
        if (k, l) == (0, 0) {
            self.unforced_origin
        } else {
            self.get(k, l)
        }
    }

    /// Cells `(k, l, xi)` in lexicographic order.
    pub fn cells(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..=self.i).flat_map(move |k| (0..=self.j).map(move |l| (k, l, self.get(k, l))))
    }
}

/// Interior step: `xi_kl = -[c1 (k+lambda) xi_{k+1,l} + c2 (l+mu) xi_{k,l+1}] / (delta_ij - delta_kl)`.
fn interior(params: &ModelParams, i: u32, j: u32, k: u32, l: u32, right: f64, up: f64) -> f64 {
    let gap = params.c1() * f64::from(i - k) + params.c2() * f64::from(j - l);
    -(params.in_rate(k) * right + params.out_rate(l) * up) / gap
}

pub fn xi_table(params: &ModelParams, i: u32, j: u32) -> XiTable {
    assert!((i, j) != (0, 0), "(0,0) is not a target");
    let w = (j + 1) as usize;
    let at = |k: u32, l: u32| k as usize * w + l as usize;
    let mut values = vec![0.0; (i as usize + 1) * w];
    for k in 0..=i {
        values[at(k, j)] = xi_boundary_row(params, i, j, k);
    }
    for l in 0..=j {
        values[at(i, l)] = xi_boundary_col(params, i, j, l);
    }
    for k in (0..i).rev() {
        for l in (0..j).rev() {
            values[at(k, l)] = interior(
                params,
                i,
                j,
                k,
                l,
                values[at(k + 1, l)],
                values[at(k, l + 1)],
            );
        }
    }
    let unforced_origin = values[0];
    values[0] = 0.0;
    XiTable {
        i,
        j,
        values,
        unforced_origin,
    }
}

/// First step of the coefficient recursion: `floor(delta_ij) + 1`, the
/// smallest `n` past every vanishing factor `1 - delta_kl / n`.
pub fn start_index(params: &ModelParams, i: u32, j: u32) -> u64 {
    params.delta(i, j).floor() as u64 + 1
}

/// Forward runner for `b^{(i,j)}_{k,l,n}`.
#[derive(Debug, Clone)]
pub struct BRecursion {
    params: ModelParams,
    i: u32,
    j: u32,
    n: u64,
    values: Vec<f64>,
}

impl BRecursion {
    /// Starts at `n0 = start_index` with all coefficients equal to one.
    pub fn new(params: &ModelParams, i: u32, j: u32) -> Self {
        let len = ((i + 1) * (j + 1)) as usize;
        Self::with_start(params, i, j, vec![1.0; len])
    }

    /// Starts at `n0` with the given coefficients (row-major over `k`, `l`).
    pub fn with_start(params: &ModelParams, i: u32, j: u32, start: Vec<f64>) -> Self {
        assert_eq!(start.len(), ((i + 1) * (j + 1)) as usize);
        BRecursion {
            params: *params,
            i,
            j,
            n: start_index(params, i, j),
            values: start,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    #[inline]
    pub fn get(&self, k: u32, l: u32) -> f64 {
        if k > self.i || l > self.j {
            0.0
        } else {
            self.values[(k * (self.j + 1) + l) as usize]
        }
    }

    /// `b_{k,l,n} / b_{i,j,n}`.
    pub fn ratio(&self, k: u32, l: u32) -> f64 {
        self.get(k, l) / self.get(self.i, self.j)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Solves the recursion for the `n + 1` coefficients given the `n` ones.
    pub fn step(&mut self) -> Result<()> {
        let p = &self.params;
        let n = self.n as f64;
        let w = (self.j + 1) as usize;
        for k in (0..=self.i).rev() {
            for l in (0..=self.j).rev() {
                let factor = 1.0 - p.delta(k, l) / n;
                if factor == 0.0 {
                    return Err(Error::SingularStep { n: self.n, k, l });
                }
                let right = if k < self.i {
                    self.values[(k as usize + 1) * w + l as usize]
                } else {
                    0.0
                };
                let up = if l < self.j {
                    self.values[k as usize * w + l as usize + 1]
                } else {
                    0.0
                };
                // Cells above and to the right already hold their n+1 values.
                let old = self.values[k as usize * w + l as usize];
                let v = (old - p.in_rate(k) / n * right - p.out_rate(l) / n * up) / factor;
                self.values[k as usize * w + l as usize] = v;
            }
        }
        self.n += 1;
        Ok(())
    }

    /// Rescales all coefficients; ratios and the martingale property are unaffected.
    pub fn rescale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }
}

/// Coefficients retained at selected steps.
#[derive(Debug, Clone)]
pub struct BCoefficientTable {
    pub target: (u32, u32),
    pub n0: u64,
    /// `(n, coefficients row-major over k, l)`.
    pub snapshots: Vec<(u64, Vec<f64>)>,
}

impl BCoefficientTable {
    pub fn at(&self, n: u64) -> Option<&[f64]> {
        self.snapshots
            .iter()
            .find(|s| s.0 == n)
            .map(|s| s.1.as_slice())
    }

    /// `b_{k,l,n} / b_{i,j,n}` at a retained step.
    pub fn ratio(&self, n: u64, k: u32, l: u32) -> Option<f64> {
        let (i, j) = self.target;
        let w = (j + 1) as usize;
        self.at(n)
            .map(|b| b[k as usize * w + l as usize] / b[i as usize * w + j as usize])
    }
}

/// Runs the recursion from `n0` to `n_max`, keeping the steps in `keep`
/// (plus `n_max`). Coefficients are periodically renormalized by a common
/// factor to stay in floating-point range; every retained snapshot is a
/// positive multiple of the unnormalized coefficients.
pub fn b_table(
    params: &ModelParams,
    i: u32,
    j: u32,
    n_max: u64,
    keep: &[u64],
) -> Result<BCoefficientTable> {
    let mut rec = BRecursion::new(params, i, j);
    let n0 = rec.n();
    if n_max < n0 {
        return Err(Error::InvalidArgument(format!(
            "n_max = {n_max} is below the start index {n0}"
        )));
    }
    let mut snapshots = Vec::new();
    let wanted = |n: u64| n == n_max || keep.contains(&n);
    loop {
        if wanted(rec.n()) {
            snapshots.push((rec.n(), rec.values().to_vec()));
        }
        if rec.n() >= n_max {
            break;
        }
        rec.step()?;
        let lead = rec.get(i, j).abs();
        if lead > 1e100 {
            rec.rescale(1.0 / lead);
        }
    }
    Ok(BCoefficientTable {
        target: (i, j),
        n0,
        snapshots,
    })
}

/// Window matrix with rows indexed by target pairs and columns by `(k,l)`,
/// entry `xi^{(i,j)}_{kl}`. Unit lower triangular in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiMatrix {
    window: IndexWindow,
    data: Vec<f64>,
}

impl XiMatrix {
    pub fn window(&self) -> &IndexWindow {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.len()
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim() + c]
    }

    pub fn is_unit_lower_triangular(&self) -> bool {
        let d = self.dim();
        (0..d).all(|r| self.get(r, r) == 1.0 && (r + 1..d).all(|c| self.get(r, c) == 0.0))
    }

    /// Product of the diagonal; the determinant for a triangular matrix.
    pub fn determinant(&self) -> f64 {
        debug_assert!(self.is_unit_lower_triangular());
        (0..self.dim()).map(|r| self.get(r, r)).product()
    }
}

pub fn xi_matrix(params: &ModelParams, window: &IndexWindow) -> XiMatrix {
    let d = window.len();
    let mut data = vec![0.0; d * d];
    for (r, &(i, j)) in window.coords().iter().enumerate() {
        let xi = xi_table(params, i, j);
        for (c, &(k, l)) in window.coords().iter().enumerate() {
            data[r * d + c] = xi.get(k, l);
        }
    }
    let m = XiMatrix {
        window: window.clone(),
        data,
    };
    assert!(
        m.is_unit_lower_triangular(),
        "xi matrix lost its triangular structure"
    );
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn boundary_examples() {
        let p = ModelParams::reference();
        assert_eq!(xi_boundary_row(&p, 1, 1, 0), -1.0);
        assert_eq!(xi_boundary_row(&p, 2, 1, 0), 1.0);
        assert_eq!(xi_boundary_row(&p, 5, 3, 5), 1.0);
        assert_eq!(xi_boundary_col(&p, 1, 1, 0), -1.0);
        assert_eq!(xi_boundary_col(&p, 1, 2, 0), 1.0);
        assert_eq!(xi_boundary_col(&p, 2, 4, 4), 1.0);

        let q = ModelParams::new(0.3, 0.7, 0.6, 2.5).unwrap();
        assert_relative_eq!(xi_boundary_row(&q, 1, 0, 0), -0.6);
        assert_relative_eq!(xi_boundary_col(&q, 0, 1, 0), -2.5);
        // Mirror symmetry between the two closed forms.
        let r = ModelParams::new(0.3, 0.7, 2.5, 0.6).unwrap();
        for k in 0..=4 {
            assert_relative_eq!(
                xi_boundary_row(&q, 4, 2, k),
                xi_boundary_col(&r, 2, 4, k),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn table_examples() {
        let p = ModelParams::reference();
        let t = xi_table(&p, 1, 1);
        assert_eq!(t.get(1, 1), 1.0);
        assert_eq!(t.get(0, 1), -1.0);
        assert_eq!(t.get(1, 0), -1.0);
        assert_eq!(t.get(0, 0), 0.0);
        assert_eq!(t.get_unforced(0, 0), 1.0);
        assert_eq!(t.get(2, 0), 0.0);

        let t = xi_table(&p, 2, 1);
        assert_eq!(t.get(2, 1), 1.0);
        assert_eq!(t.get(1, 1), -2.0);
        assert_eq!(t.get(0, 1), 1.0);

        let t = xi_table(&p, 0, 1);
        assert_eq!(t.get(0, 1), 1.0);
        assert_eq!(t.get(0, 0), 0.0);
    }

    /// The interior recursion with zero extension reproduces the closed forms
    /// on the boundary row and column.
    #[test]
    fn interior_agrees_with_boundary() {
        for p in [
            ModelParams::reference(),
            ModelParams::new(0.27, 0.73, 0.45, 3.1).unwrap(),
        ] {
            for (i, j) in [(1, 1), (3, 2), (4, 4), (0, 3), (5, 0)] {
                let t = xi_table(&p, i, j);
                for k in 0..=i {
                    for l in 0..=j {
                        if (k, l) == (i, j) {
                            continue;
                        }
                        let via = interior(&p, i, j, k, l, t.get(k + 1, l), t.get(k, l + 1));
                        assert_relative_eq!(
                            via,
                            t.get_unforced(k, l),
                            epsilon = 1e-12,
                            max_relative = 1e-12
                        );
                    }
                }
            }
        }
    }

    /// `xi` is a left eigenvector of the mean dynamics with eigenvalue `delta_ij`.
    #[test]
    fn eigenvector_relation() {
        let p = ModelParams::new(0.6, 0.4, 1.3, 0.2).unwrap();
        let (i, j) = (3, 3);
        let t = xi_table(&p, i, j);
        for k in 0..=i {
            for l in 0..=j {
                let lhs = p.delta(k, l) * t.get_unforced(k, l)
                    - p.in_rate(k) * t.get(k + 1, l)
                    - p.out_rate(l) * t.get(k, l + 1);
                assert_relative_eq!(lhs, p.delta(i, j) * t.get_unforced(k, l), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn start_index_skips_singular_factor() {
        let p = ModelParams::reference();
        assert_eq!(start_index(&p, 0, 1), 1);
        assert_eq!(start_index(&p, 1, 1), 2);
        assert_eq!(start_index(&p, 2, 1), 2);
    }

    #[test]
    fn lead_coefficient_is_product() {
        let p = ModelParams::reference();
        let t = b_table(&p, 0, 1, 200, &[50]).unwrap();
        assert_eq!(t.n0, 1);
        // b_{0,1,n+1} = prod_{m=1}^{n} (1 - 0.75/m)^{-1}
        let mut prod = 1.0;
        for m in 1..50u64 {
            prod /= 1.0 - 0.75 / m as f64;
        }
        let b = t.at(50).unwrap();
        assert_relative_eq!(b[1], prod, max_relative = 1e-12);
        assert!(t.at(200).unwrap()[1].is_finite() && t.at(200).unwrap()[1] > 0.0);
    }

    #[test]
    fn recursions_hold_between_steps() {
        let p = ModelParams::new(0.45, 0.55, 0.9, 1.4).unwrap();
        let (i, j) = (2, 2);
        let mut rec = BRecursion::new(&p, i, j);
        for _ in 0..30 {
            let before = rec.clone();
            rec.step().unwrap();
            let n = before.n() as f64;
            for k in 0..=i {
                for l in 0..=j {
                    let lhs = rec.get(k, l) * (1.0 - p.delta(k, l) / n)
                        + rec.get(k + 1, l) * p.in_rate(k) / n
                        + rec.get(k, l + 1) * p.out_rate(l) / n;
                    assert_relative_eq!(
                        lhs,
                        before.get(k, l),
                        max_relative = 1e-12,
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn ratio_approaches_xi() {
        let p = ModelParams::reference();
        let cps = [1_000, 10_000, 100_000];
        let t = b_table(&p, 1, 1, 100_000, &cps).unwrap();
        let errs: Vec<f64> = cps
            .iter()
            .map(|&n| (t.ratio(n, 0, 1).unwrap() + 1.0).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    /// Two positive start vectors lead to the same limit; the gap closes at
    /// the slow rate `n^-min(c1,c2)`, so only shrinkage is asserted.
    #[test]
    fn ratio_limit_independent_of_start() {
        let p = ModelParams::reference();
        let (i, j) = (2, 1);
        let starts = [vec![1.0; 6], vec![0.7, 1.9, 1.2, 0.5, 1.6, 0.9]];
        let mut recs: Vec<BRecursion> = starts
            .iter()
            .map(|s| BRecursion::with_start(&p, i, j, s.clone()))
            .collect();
        let mut gaps = Vec::new();
        for target in [1_000u64, 10_000, 100_000] {
            for r in &mut recs {
                while r.n() < target {
                    r.step().unwrap();
                }
            }
            let gap = (0..=i)
                .flat_map(|k| (0..=j).map(move |l| (k, l)))
                .map(|(k, l)| (recs[0].ratio(k, l) - recs[1].ratio(k, l)).abs())
                .fold(0.0, f64::max);
            gaps.push(gap);
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        // n^-1/4 decay: each decade shrinks the gap by about 10^-1/4.
        assert!(gaps[2] / gaps[1] < 0.7);
    }

    #[test]
    fn matrix_reference_window() {
        let p = ModelParams::reference();
        let m = xi_matrix(&p, &IndexWindow::new(1, 1));
        assert_eq!(m.dim(), 3);
        assert_eq!(m.data(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, -1.0, 1.0]);
        assert_eq!(m.determinant(), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matrix_is_unit_lower(alpha in 0.05f64..0.95, lambda in 0.05f64..5.0, mu in 0.05f64..5.0,
                                imax in 0u32..4, jmax in 0u32..4) {
            prop_assume!(imax + jmax > 0);
            let p = ModelParams::new(alpha, 1.0 - alpha, lambda, mu).unwrap();
            let m = xi_matrix(&p, &IndexWindow::new(imax, jmax));
            prop_assert!(m.is_unit_lower_triangular());
            prop_assert_eq!(m.determinant(), 1.0);
        }
    }
}
