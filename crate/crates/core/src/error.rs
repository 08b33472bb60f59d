//! Error types. Each module has its own enum; `Error` aggregates them for
//! callers that mix layers (the CLI, the Python bindings).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("gamma must be finite and < 1, got {0}")]
    InvalidGamma(f64),
    #[error("tau must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("xi must be positive, got {0}")]
    NonPositiveXi(f64),
    #[error("grid spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("boundary values suggest mass leakage: weighted left {left:.3e}, right {right:.3e}, tolerance {tol:.3e}")]
    BoundaryLeak { left: f64, right: f64, tol: f64 },
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no root of the decay-exponent equation in (0, {0}]")]
    NoSigmaRoot(f64),
    #[error("1/dx must be an even positive integer, got dx = {0}")]
    InvalidDx(f64),
    #[error("seed amplitude a must be positive, got {0}")]
    InvalidAmplitude(f64),
    #[error("tail floor must lie in (0, 1), got {0}")]
    InvalidFloor(f64),
    #[error("profile left the admissible band at x = {x:.6}: value {value:.6e} (plateau {plateau:.6e}); step too coarse or bad seed")]
    Unstable { x: f64, value: f64, plateau: f64 },
    #[error("profile did not decay to the tail floor within the span cap ({0} units)")]
    NoDecay(u32),
    #[error("raw profile mass must be positive and finite, got {0}")]
    InvalidMass(f64),
    #[error("profile import: {0}")]
    Import(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum FibreError {
    #[error("theta must lie in [0, 1), got {0}")]
    InvalidTheta(f64),
    #[error("initial data must be nonnegative and finite; offending value {value:.6e} at lattice point {x:.6}")]
    InvalidInitialData { x: f64, value: f64 },
    #[error("window cap {cap} reached while extending {side}; data tail does not fit")]
    WindowCap { side: &'static str, cap: i64 },
    #[error("jump would drop weighted value {weighted:.3e} > threshold {threshold:.3e} at k_min = {k_min}")]
    JumpMassLoss { k_min: i64, weighted: f64, threshold: f64 },
    #[error("state left the stability band: |phi[{k}]| = {value:.6e} > 2 c0 = {bound:.6e} at t = {t:.6}")]
    Unstable { k: i64, value: f64, bound: f64, t: f64 },
    #[error("dt must satisfy 0 < dt <= {max:.6e}, got {dt:.6e}")]
    InvalidDt { dt: f64, max: f64 },
    #[error("jump applied away from a jump time: t = {t:.9}, next jump at {next:.9}")]
    NotAtJump { t: f64, next: f64 },
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("1/dx must be a positive integer, got dx = {0}")]
    InvalidDx(f64),
    #[error("CFL violated: dt = {dt:.6e} > dx = {dx:.6e}")]
    Cfl { dt: f64, dx: f64 },
    #[error("initial data must be nonnegative and finite; offending value {value:.6e} at index {index}")]
    InvalidInitialData { index: usize, value: f64 },
    #[error("negative overshoot beyond -1e-12: min h = {min:.3e} at t = {t:.6}")]
    NegativeOvershoot { min: f64, t: f64 },
    #[error("grid comparison: fibre lattice point {x:.9} does not land on the grid (offset {offset:.3e})")]
    Misaligned { x: f64, offset: f64 },
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Fibre(#[from] FibreError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide aggregate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Fibre(#[from] FibreError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}
