//! Phase-space density, tunneling probability and decay rate of a Gaussian
//! moment state.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::MomentState;
use crate::special::erfc;

/// Probabilities below this are treated as underflow for the decay rate.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("covariance matrix is not positive definite (det = {det:e})")]
    DegenerateCovariance { det: f64 },
    #[error("decay rate undefined: tunneling probability {p:e} below the underflow floor")]
    RateUndefined { p: f64 },
}

/// Normalization of the decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateNormalization {
    /// Probability current `∫dp (p/m) W(q_b, p)` divided by `P(q_b)` (1/T).
    #[default]
    Flux,
    /// The literal expression `(σ_qq σ_p + σ_pq (q_b - σ_q)) / √(2π σ_qq³) · e^{…}/erfc(…)`,
    /// without the `2/m` factor that turns it into flux over probability.
    Verbatim,
}

impl RateNormalization {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateNormalization::Flux => "flux",
            RateNormalization::Verbatim => "verbatim",
        }
    }
}

/// Bivariate normal density with mean `(σ_q, σ_p)` and the state's covariance.
pub fn wigner_density(s: &MomentState, q: f64, p: f64) -> Result<f64, ObservableError> {
    let det = s.uncertainty_product();
    if !(det > 0.0) || !(s.qq > 0.0) {
        return Err(ObservableError::DegenerateCovariance { det });
    }
    let dq = q - s.q;
    let dp = p - s.p;
    // Inverse covariance: [[pp, -pq], [-pq, qq]] / det
    let quad = (s.pp * dq * dq - 2.0 * s.pq * dq * dp + s.qq * dp * dp) / det;
    Ok((-0.5 * quad).exp() / (2.0 * PI * det.sqrt()))
}

/// Gaussian probability mass to the right of `q_b`:
/// `½ erfc((q_b - σ_q) / √(2σ_qq))`.
pub fn tunneling_probability(s: &MomentState, q_b: f64) -> f64 {
    0.5 * erfc((q_b - s.q) / (SQRT_2 * s.qq.sqrt()))
}

/// Decay rate `J(q_b)/P(q_b)` of the Gaussian state.
pub fn decay_rate(
    s: &MomentState,
    q_b: f64,
    mass: f64,
    norm: RateNormalization,
) -> Result<f64, ObservableError> {
    let x = (q_b - s.q) / (SQRT_2 * s.qq.sqrt());
    let tail = erfc(x);
    if !(0.5 * tail > PROBABILITY_FLOOR) {
        return Err(ObservableError::RateUndefined { p: 0.5 * tail });
    }
    let expression = (s.qq * s.p + s.pq * (q_b - s.q)) / (2.0 * PI * s.qq.powi(3)).sqrt()
        * (-x * x).exp()
        / tail;
    Ok(match norm {
        RateNormalization::Flux => 2.0 * expression / mass,
        RateNormalization::Verbatim => expression,
    })
}
