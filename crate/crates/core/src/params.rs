//! Model parameters, derived rate constants, and index windows over degree pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-12;

/// Validated parameters of the directed preferential attachment model.
///
/// With probability `alpha` a new node attaches an out-edge to an existing
/// node chosen by in-degree plus `lambda`; with probability `gamma` an existing
/// node chosen by out-degree plus `mu` sends an edge to the new node.
/// `gamma` is stored as `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    alpha: f64,
    gamma: f64,
    lambda: f64,
    mu: f64,
    c1: f64,
    c2: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawParams {
    alpha: f64,
    gamma: f64,
    lambda: f64,
    mu: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.alpha, raw.gamma, raw.lambda, raw.mu)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            alpha: p.alpha,
            gamma: p.gamma,
            lambda: p.lambda,
            mu: p.mu,
        }
    }
}

impl ModelParams {
    pub fn new(alpha: f64, gamma: f64, lambda: f64, mu: f64) -> Result<Self> {
        for (name, value) in [("alpha", alpha), ("gamma", gamma)] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        for (name, value) in [("lambda", lambda), ("mu", mu)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        if alpha == 0.0 || gamma == 0.0 || alpha >= 1.0 || gamma >= 1.0 {
            return Err(Error::DegenerateCase { alpha, gamma });
        }
        let sum = alpha + gamma;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::AlphaGammaSumNotOne { sum });
        }
        let gamma = 1.0 - alpha;
        Ok(ModelParams {
            alpha,
            gamma,
            lambda,
            mu,
            c1: alpha / (1.0 + lambda),
            c2: gamma / (1.0 + mu),
        })
    }

    /// The symmetric reference set `alpha = gamma = 1/2`, `lambda = mu = 1`.
    pub fn reference() -> Self {
        ModelParams::new(0.5, 0.5, 1.0, 1.0).expect("reference parameters are valid")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// In-attachment rate `alpha / (1 + lambda)`.
    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// Out-attachment rate `gamma / (1 + mu)`.
    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// Depletion rate of `(i,j)`-nodes: `c1 (i + lambda) + c2 (j + mu)`.
    #[inline]
    pub fn delta(&self, i: u32, j: u32) -> f64 {
        self.c1 * (f64::from(i) + self.lambda) + self.c2 * (f64::from(j) + self.mu)
    }

    /// Rate at which an `(i,j)`-node gains in-degree: `c1 (i + lambda)`.
    #[inline]
    pub fn in_rate(&self, i: u32) -> f64 {
        self.c1 * (f64::from(i) + self.lambda)
    }

    /// Rate at which an `(i,j)`-node gains out-degree: `c2 (j + mu)`.
    #[inline]
    pub fn out_rate(&self, j: u32) -> f64 {
        self.c2 * (f64::from(j) + self.mu)
    }
}

/// Degree pairs `(i,j)` with `i <= imax`, `j <= jmax`, excluding `(0,0)`,
/// in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexWindow {
    imax: u32,
    jmax: u32,
    coords: Vec<(u32, u32)>,
}

impl IndexWindow {
    pub fn new(imax: u32, jmax: u32) -> Self {
        let coords = (0..=imax)
            .flat_map(|i| (0..=jmax).map(move |j| (i, j)))
            .filter(|&c| c != (0, 0))
            .collect();
        IndexWindow { imax, jmax, coords }
    }

    pub fn imax(&self) -> u32 {
        self.imax
    }

    pub fn jmax(&self) -> u32 {
        self.jmax
    }

    pub fn coords(&self) -> &[(u32, u32)] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn contains(&self, i: u32, j: u32) -> bool {
        i <= self.imax && j <= self.jmax && (i, j) != (0, 0)
    }

    /// Position of `(i,j)` in [`coords`](Self::coords).
    pub fn index_of(&self, i: u32, j: u32) -> Option<usize> {
        if !self.contains(i, j) {
            return None;
        }
        Some((i * (self.jmax + 1) + j) as usize - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_constants() {
        let p = ModelParams::new(0.5, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(p.c1(), 0.25);
        assert_eq!(p.c2(), 0.25);
        assert_eq!(p.delta(0, 1), 0.75);
        assert_eq!(p.delta(1, 1), 1.0);
        assert_eq!(p.delta(0, 0), 0.5);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            ModelParams::new(0.3, 0.7, 0.0, 1.0),
            Err(Error::NonPositiveParameter { name: "lambda", .. })
        ));
        assert!(matches!(
            ModelParams::new(1.0, 0.0, 1.0, 1.0),
            Err(Error::DegenerateCase { .. })
        ));
        assert!(matches!(
            ModelParams::new(0.4, 0.4, 1.0, 1.0),
            Err(Error::AlphaGammaSumNotOne { .. })
        ));
        assert!(matches!(
            ModelParams::new(-0.1, 1.1, 1.0, 1.0),
            Err(Error::NonPositiveParameter { name: "alpha", .. })
        ));
        assert!(ModelParams::new(0.3, 0.7, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn gamma_is_normalized() {
        let p = ModelParams::new(0.1, 0.9 + 1e-13, 2.0, 3.0).unwrap();
        assert_eq!(p.alpha() + p.gamma(), 1.0);
    }

    #[test]
    fn serde_validates() {
        let p: ModelParams =
            serde_json::from_str(r#"{"alpha":0.5,"gamma":0.5,"lambda":1.0,"mu":1.0}"#).unwrap();
        assert_eq!(p, ModelParams::reference());
        assert!(serde_json::from_str::<ModelParams>(
            r#"{"alpha":0.5,"gamma":0.6,"lambda":1.0,"mu":1.0}"#
        )
        .is_err());
    }

    #[test]
    fn window_layout() {
        let w = IndexWindow::new(1, 1);
        assert_eq!(w.coords(), &[(0, 1), (1, 0), (1, 1)]);
        let w = IndexWindow::new(3, 2);
        assert_eq!(w.len(), 4 * 3 - 1);
        for (idx, &(i, j)) in w.coords().iter().enumerate() {
            assert_eq!(w.index_of(i, j), Some(idx));
        }
        assert_eq!(w.index_of(0, 0), None);
        assert_eq!(w.index_of(4, 0), None);
        assert!(IndexWindow::new(0, 0).is_empty());
    }

    proptest! {
        #[test]
        fn delta_identities(alpha in 0.01f64..0.99, lambda in 0.01f64..20.0, mu in 0.01f64..20.0,
                            i in 0u32..50, j in 0u32..50) {
            let p = ModelParams::new(alpha, 1.0 - alpha, lambda, mu).unwrap();
            prop_assert!((p.delta(1, 1) - 1.0).abs() < 1e-12);
            prop_assert!((p.delta(i + 1, j) - p.delta(i, j) - p.c1()).abs() < 1e-9);
            prop_assert!((p.delta(i, j + 1) - p.delta(i, j) - p.c2()).abs() < 1e-9);
            prop_assert!(p.c1() > 0.0 && p.c1() < 1.0 && p.c2() > 0.0 && p.c2() < 1.0);
            prop_assert!(p.c1() + p.c2() <= 1.0);
        }
    }
}
