//! The limiting joint degree distribution `p_ij` and the concentration envelope.

use serde::{Deserialize, Serialize};

use crate::params::ModelParams;

/// Dense table of `p_ij` for `0 <= i <= rmax`, `0 <= j <= qmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PGrid {
    rmax: u32,
    qmax: u32,
    values: Vec<f64>,
    mass: f64,
    mean_in: f64,
    mean_out: f64,
}

impl PGrid {
    pub fn rmax(&self) -> u32 {
        self.rmax
    }

    pub fn qmax(&self) -> u32 {
        self.qmax
    }

    /// `p_ij`; zero for any index past the grid is *not* implied, so this
    /// panics outside the rectangle.
    #[inline]
    pub fn get(&self, i: u32, j: u32) -> f64 {
        assert!(i <= self.rmax && j <= self.qmax, "({i},{j}) outside p grid");
        self.values[(i * (self.qmax + 1) + j) as usize]
    }

    pub fn covers(&self, i: u32, j: u32) -> bool {
        i <= self.rmax && j <= self.qmax
    }

    /// Total mass on the grid.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `sum i p_ij` over the grid.
    pub fn mean_in(&self) -> f64 {
        self.mean_in
    }

    /// `sum j p_ij` over the grid.
    pub fn mean_out(&self) -> f64 {
        self.mean_out
    }

    /// Cells `(i, j, p_ij)` in lexicographic order.
    pub fn cells(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        let q = self.qmax + 1;
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| (k as u32 / q, k as u32 % q, v))
    }
}

/// Fills `p_ij` from
/// `(1 + delta_ij) p_ij = alpha 1{(0,1)} + gamma 1{(1,0)} + c1 (i-1+lambda) p_{i-1,j} + c2 (j-1+mu) p_{i,j-1}`
/// sweeping anti-diagonals of increasing `i + j`.
pub fn p_grid(params: &ModelParams, rmax: u32, qmax: u32) -> PGrid {
    let width = (qmax + 1) as usize;
    let mut values = vec![0.0; (rmax as usize + 1) * width];
    let at = |i: u32, j: u32| i as usize * width + j as usize;
    for s in 1..=(rmax + qmax) {
        let lo = s.saturating_sub(qmax);
        let hi = s.min(rmax);
        for i in lo..=hi {
            let j = s - i;
            let mut num = 0.0;
            if (i, j) == (0, 1) {
                num += params.alpha();
            }
            if (i, j) == (1, 0) {
                num += params.gamma();
            }
            if i >= 1 {
                num += params.in_rate(i - 1) * values[at(i - 1, j)];
            }
            if j >= 1 {
                num += params.out_rate(j - 1) * values[at(i, j - 1)];
            }
            values[at(i, j)] = num / (1.0 + params.delta(i, j));
        }
    }

    let mut mass = Neumaier::default();
    let mut mean_in = Neumaier::default();
    let mut mean_out = Neumaier::default();
    for i in 0..=rmax {
        for j in 0..=qmax {
            let v = values[at(i, j)];
            mass.add(v);
            mean_in.add(f64::from(i) * v);
            mean_out.add(f64::from(j) * v);
        }
    }
    PGrid {
        rmax,
        qmax,
        values,
        mass: mass.sum(),
        mean_in: mean_in.sum(),
        mean_out: mean_out.sum(),
    }
}

/// `c * sqrt(ln n / n)`.
pub fn concentration_envelope(n: f64, c: f64) -> f64 {
    c * (n.ln() / n).sqrt()
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}
