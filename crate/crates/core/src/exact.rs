//! Exact finite-`n` quantities: the expected-count recursion `nu_n(i,j)` and
//! exhaustive enumeration of the count-grid Markov chain for tiny `n`.
//!
//! The one-step law of the count grid depends only on the current counts, so
//! the count process is itself a Markov chain and states can be merged by
//! their nonzero cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Largest `n` accepted by [`enumerate_exact`].
pub const ENUMERATION_CAP: u64 = 6;

/// `nu_n(i,j) = E N_n(i,j)` on the rectangle `0..=imax` x `0..=jmax`.
///
/// The recursion for a cell reads only cells with smaller indices, so any
/// rectangle anchored at the origin evolves exactly on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct NuGrid {
    n: u64,
    imax: u32,
    jmax: u32,
    values: Vec<f64>,
}

impl NuGrid {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn imax(&self) -> u32 {
        self.imax
    }

    pub fn jmax(&self) -> u32 {
        self.jmax
    }

    /// Zero outside the rectangle's lower edge; panics above it.
    #[inline]
    pub fn get(&self, i: u32, j: u32) -> f64 {
        assert!(
            i <= self.imax && j <= self.jmax,
            "({i},{j}) outside nu grid"
        );
        self.values[(i * (self.jmax + 1) + j) as usize]
    }

    #[inline]
    fn get_below(&self, i: i64, j: i64) -> f64 {
        if i < 0 || j < 0 {
            0.0
        } else {
            self.get(i as u32, j as u32)
        }
    }

    /// Sum over the rectangle. Equals `n` once the rectangle covers
    /// `0..=n` x `0..=n`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn covers_support(&self) -> bool {
        u64::from(self.imax) >= self.n && u64::from(self.jmax) >= self.n
    }
}

/// Iterator over `nu_1, nu_2, ...` on a fixed rectangle.
#[derive(Debug, Clone)]
pub struct NuRecursion {
    params: ModelParams,
    current: NuGrid,
    started: bool,
}

impl NuRecursion {
    pub fn new(params: &ModelParams, imax: u32, jmax: u32) -> Result<Self> {
        if imax == 0 && jmax == 0 {
            return Err(Error::GridTooSmall { imax, jmax });
        }
        let mut values = vec![0.0; ((imax + 1) * (jmax + 1)) as usize];
        if imax >= 1 && jmax >= 1 {
            values[(jmax + 1 + 1) as usize] = 1.0;
        }
        Ok(NuRecursion {
            params: *params,
            current: NuGrid {
                n: 1,
                imax,
                jmax,
                values,
            },
            started: false,
        })
    }

    /// Advances one step in place and returns the new grid.
    pub fn advance(&mut self) -> &NuGrid {
        if !self.started {
            self.started = true;
            return &self.current;
        }
        let p = &self.params;
        let prev = &self.current;
        let n = prev.n as f64;
        let (imax, jmax) = (prev.imax, prev.jmax);
        let mut next = vec![0.0; prev.values.len()];
        for i in 0..=imax {
            for j in 0..=jmax {
                if (i, j) == (0, 0) {
                    continue;
                }
                let mut v = (1.0 - p.delta(i, j) / n) * prev.get(i, j);
                if i >= 1 {
                    v += p.in_rate(i - 1) / n * prev.get_below(i as i64 - 1, j as i64);
                }
                if j >= 1 {
                    v += p.out_rate(j - 1) / n * prev.get_below(i as i64, j as i64 - 1);
                }
                if (i, j) == (0, 1) {
                    v += p.alpha();
                }
                if (i, j) == (1, 0) {
                    v += p.gamma();
                }
                next[(i * (jmax + 1) + j) as usize] = v;
            }
        }
        self.current = NuGrid {
            n: prev.n + 1,
            imax,
            jmax,
            values: next,
        };
        &self.current
    }

    pub fn current(&self) -> &NuGrid {
        &self.current
    }
}

/// `nu_1 ..= nu_{n_max}` on the rectangle `0..=imax` x `0..=jmax`.
pub fn nu_recursion(params: &ModelParams, n_max: u64, imax: u32, jmax: u32) -> Result<Vec<NuGrid>> {
    let mut rec = NuRecursion::new(params, imax, jmax)?;
    Ok((0..n_max).map(|_| rec.advance().clone()).collect())
}

/// A count-grid state: nonzero cells `(i, j, count)` in lexicographic order.
pub type CountState = Vec<(u32, u32, u64)>;

/// Exact law of the count grid after `n` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub n: u64,
    pub states: BTreeMap<CountState, f64>,
}

impl ExactDistribution {
    pub fn initial() -> Self {
        ExactDistribution {
            n: 1,
            states: BTreeMap::from([(vec![(1, 1, 1)], 1.0)]),
        }
    }

    pub fn total_probability(&self) -> f64 {
        self.states.values().sum()
    }

    /// `E N_n(i,j)` under this law.
    pub fn mean(&self, i: u32, j: u32) -> f64 {
        self.states
            .iter()
            .map(|(s, &p)| p * count_in(s, i, j) as f64)
            .sum()
    }
}

pub fn count_in(state: &CountState, i: u32, j: u32) -> u64 {
    state
        .binary_search_by(|&(a, b, _)| (a, b).cmp(&(i, j)))
        .map(|k| state[k].2)
        .unwrap_or(0)
}

fn apply(state: &CountState, deltas: [((u32, u32), i64); 3]) -> CountState {
    let mut map: BTreeMap<(u32, u32), i64> =
        state.iter().map(|&(i, j, c)| ((i, j), c as i64)).collect();
    for (cell, d) in deltas {
        *map.entry(cell).or_insert(0) += d;
    }
    map.into_iter()
        .filter(|&(_, c)| c != 0)
        .map(|((i, j), c)| {
            debug_assert!(c > 0);
            (i, j, c as u64)
        })
        .collect()
}

/// All one-step successors of `state` (a grid with `n` nodes) with their
/// probabilities. An in-event hits some `(r,q)`-node with probability
/// `c1 (r + lambda) N(r,q) / n`; an out-event with `c2 (q + mu) N(r,q) / n`.
pub fn transitions(params: &ModelParams, state: &CountState) -> Vec<(CountState, f64)> {
    let n: u64 = state.iter().map(|c| c.2).sum();
    let n = n as f64;
    let mut out = Vec::with_capacity(2 * state.len());
    for &(r, q, count) in state {
        let c = count as f64;
        let p_in = params.in_rate(r) * c / n;
        out.push((
            apply(state, [((r, q), -1), ((r + 1, q), 1), ((0, 1), 1)]),
            p_in,
        ));
        let p_out = params.out_rate(q) * c / n;
        out.push((
            apply(state, [((r, q), -1), ((r, q + 1), 1), ((1, 0), 1)]),
            p_out,
        ));
    }
    out
}

/// Exact count-grid laws for `n = 1 ..= n_max`.
pub fn enumerate_exact(params: &ModelParams, n_max: u64) -> Result<Vec<ExactDistribution>> {
    if n_max > ENUMERATION_CAP {
        return Err(Error::StateSpaceExplosion {
            requested: n_max,
            cap: ENUMERATION_CAP,
        });
    }
    if n_max == 0 {
        return Ok(Vec::new());
    }
    let mut laws = vec![ExactDistribution::initial()];
    for n in 1..n_max {
        let prev = laws.last().expect("nonempty");
        let mut next: BTreeMap<CountState, f64> = BTreeMap::new();
        for (state, &p) in &prev.states {
            for (succ, q) in transitions(params, state) {
                if q > 0.0 {
                    *next.entry(succ).or_insert(0.0) += p * q;
                }
            }
        }
        laws.push(ExactDistribution {
            n: n + 1,
            states: next,
        });
    }
    Ok(laws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sim::GraphState;
    use proptest::prelude::*;

    #[test]
    fn nu_first_steps() {
        let p = ModelParams::reference();
        let nus = nu_recursion(&p, 2, 3, 3).unwrap();
        assert_eq!(nus[0].get(1, 1), 1.0);
        assert_eq!(nus[1].get(0, 1), 0.5);
        assert_eq!(nus[1].get(1, 0), 0.5);
        assert_eq!(nus[1].get(1, 1), 0.0);
        assert_eq!(nus[1].get(2, 1), 0.5);
        assert_eq!(nus[1].get(1, 2), 0.5);
    }

    #[test]
    fn nu_total_is_n() {
        for p in [
            ModelParams::reference(),
            ModelParams::new(0.2, 0.8, 0.3, 4.0).unwrap(),
        ] {
            let nus = nu_recursion(&p, 100, 100, 100).unwrap();
            for g in &nus {
                assert!(g.covers_support());
                assert!(
                    (g.total() - g.n() as f64).abs() < 1e-9,
                    "n={} total={}",
                    g.n(),
                    g.total()
                );
                assert_eq!(g.get(0, 0), 0.0);
            }
            let last = nus.last().unwrap();
            assert_eq!(last.get(100, 0), 0.0);
        }
    }

    #[test]
    fn nu_rectangle_is_closed() {
        let p = ModelParams::new(0.35, 0.65, 0.8, 1.7).unwrap();
        let big = nu_recursion(&p, 60, 60, 60).unwrap();
        let small = nu_recursion(&p, 60, 2, 3).unwrap();
        for (b, s) in big.iter().zip(&small) {
            for i in 0..=2 {
                for j in 0..=3 {
                    assert_eq!(b.get(i, j), s.get(i, j));
                }
            }
        }
    }

    #[test]
    fn nu_rejects_empty_grid() {
        assert!(matches!(
            NuRecursion::new(&ModelParams::reference(), 0, 0),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn enumeration_at_two() {
        let p = ModelParams::reference();
        let laws = enumerate_exact(&p, 2).unwrap();
        let two = &laws[1];
        assert_eq!(two.states.len(), 2);
        assert_eq!(two.states[&vec![(0, 1, 1), (2, 1, 1)]], 0.5);
        assert_eq!(two.states[&vec![(1, 0, 1), (1, 2, 1)]], 0.5);
        assert_eq!(two.mean(0, 1), 0.5);
    }

    #[test]
    fn enumeration_cap() {
        assert!(matches!(
            enumerate_exact(&ModelParams::reference(), 7),
            Err(Error::StateSpaceExplosion {
                requested: 7,
                cap: 6
            })
        ));
    }

    #[test]
    fn enumeration_matches_nu() {
        for p in [
            ModelParams::reference(),
            ModelParams::new(0.15, 0.85, 2.2, 0.4).unwrap(),
        ] {
            let laws = enumerate_exact(&p, 6).unwrap();
            let nus = nu_recursion(&p, 6, 6, 6).unwrap();
            for (law, nu) in laws.iter().zip(&nus) {
                assert!((law.total_probability() - 1.0).abs() < 1e-12);
                for s in law.states.keys() {
                    assert_eq!(s.iter().map(|c| c.2).sum::<u64>(), law.n);
                }
                for i in 0..=6 {
                    for j in 0..=6 {
                        assert!((law.mean(i, j) - nu.get(i, j)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    /// Empirical state frequencies at n = 4 against the exact law.
    #[test]
    fn simulator_matches_enumeration() {
        let p = ModelParams::new(0.4, 0.6, 0.7, 1.5).unwrap();
        let law = enumerate_exact(&p, 4).unwrap().pop().unwrap();
        let runs = 1_000_000u64;
        let mut freq: BTreeMap<CountState, u64> = BTreeMap::new();
        let mut rng = rng::stream(2024, 0);
        for _ in 0..runs {
            let mut s = GraphState::init();
            for _ in 0..3 {
                s.step(&p, &mut rng);
            }
            *freq.entry(s.counts().nonzero()).or_insert(0) += 1;
        }
        for k in freq.keys() {
            assert!(law.states.contains_key(k), "unreachable state {k:?}");
        }
        for (state, &prob) in &law.states {
            let hat = freq.get(state).copied().unwrap_or(0) as f64 / runs as f64;
            let se = (prob * (1.0 - prob) / runs as f64).sqrt();
            assert!((hat - prob).abs() <= 4.0 * se, "{state:?}: {hat} vs {prob}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn enumeration_normalized(alpha in 0.05f64..0.95, lambda in 0.05f64..5.0, mu in 0.05f64..5.0) {
            let p = ModelParams::new(alpha, 1.0 - alpha, lambda, mu).unwrap();
            for law in enumerate_exact(&p, 6).unwrap() {
                prop_assert!((law.total_probability() - 1.0).abs() < 1e-12);
                for s in law.states.keys() {
                    prop_assert_eq!(count_in(s, 0, 0), 0);
                }
            }
        }
    }
}
