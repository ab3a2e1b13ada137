use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter {name} must be strictly positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("alpha + gamma must equal 1, got {sum}")]
    AlphaGammaSumNotOne { sum: f64 },

    #[error(
        "alpha and gamma must lie strictly between 0 and 1 (alpha = {alpha}, gamma = {gamma})"
    )]
    DegenerateCase { alpha: f64, gamma: f64 },

    #[error("requested {requested} nodes exceeds the capacity limit of {limit}")]
    CapacityExceeded { requested: u64, limit: u64 },

    #[error("grid bounds {imax}x{jmax} cannot hold any nonzero degree pair")]
    GridTooSmall { imax: u32, jmax: u32 },

    #[error("exact enumeration is capped at n = {cap}, requested {requested}")]
    StateSpaceExplosion { requested: u64, cap: u64 },

    #[error("coefficient recursion is singular at n = {n}, cell ({k},{l})")]
    SingularStep { n: u64, k: u32, l: u32 },

    #[error("summation box leaves a remainder of {remainder:e}, above tolerance {tolerance:e}")]
    BoxTooSmall { remainder: f64, tolerance: f64 },

    #[error("limit grid {rmax}x{qmax} does not cover the required box {need_r}x{need_q}")]
    PGridTooSmall {
        rmax: u32,
        qmax: u32,
        need_r: u32,
        need_q: u32,
    },

    #[error("predicted variance must be positive, got {0}")]
    ZeroPredictedVariance(f64),

    #[error("need at least {needed} replications, got {got}")]
    InsufficientReplications { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
