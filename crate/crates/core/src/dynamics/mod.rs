//! Equations of motion for the five Gaussian moments under Lindblad
//! dissipation, plus integrators and the exact single-segment propagator.

mod exact;
mod integrate;
mod series;

pub use exact::{segment_propagator_exact, AffineMap};
pub use integrate::{
    integrate, step_dopri, step_rk4, AdaptiveControls, IntegrationControls, IntegrationError,
};
pub use series::TimeSeries;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::PiecewisePotential;

/// Averages and covariances of a Gaussian state at time `t`.
///
/// Units: `t` in T, `q` in fm, `p` in MeV·T/fm, `qq` in fm², `pp` in
/// (MeV·T/fm)², `pq` in MeV·T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub t: f64,
    pub q: f64,
    pub p: f64,
    pub qq: f64,
    pub pp: f64,
    pub pq: f64,
}

impl MomentState {
    pub fn to_array(&self) -> [f64; 5] {
        [self.q, self.p, self.qq, self.pp, self.pq]
    }

    pub fn from_array(t: f64, y: [f64; 5]) -> Self {
        Self {
            t,
            q: y[0],
            p: y[1],
            qq: y[2],
            pp: y[3],
            pq: y[4],
        }
    }

    /// `σ_qq σ_pp - σ_pq²`, evaluated with a fused multiply-add to limit
    /// cancellation.
    pub fn uncertainty_product(&self) -> f64 {
        let w = self.pq * self.pq;
        let err = self.pq.mul_add(self.pq, -w);
        self.qq.mul_add(self.pp, -w) - err
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite()) && self.t.is_finite()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("invalid Lindblad parameters: {0}")]
    Invalid(&'static str),
}

/// Friction, diffusion coefficients, mass and ħ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladParams {
    /// Friction constant λ (1/T).
    pub friction: f64,
    pub d_qq: f64,
    pub d_pp: f64,
    pub d_pq: f64,
    pub mass: f64,
    pub hbar: f64,
}

impl LindbladParams {
    /// Dissipation-free dynamics.
    pub fn conservative(mass: f64, hbar: f64) -> Self {
        Self {
            friction: 0.0,
            d_qq: 0.0,
            d_pp: 0.0,
            d_pq: 0.0,
            mass,
            hbar,
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if !(self.friction >= 0.0) {
            return Err(ParamsError::Invalid("friction must be >= 0"));
        }
        if !(self.mass > 0.0) {
            return Err(ParamsError::Invalid("mass must be > 0"));
        }
        if !(self.hbar > 0.0) {
            return Err(ParamsError::Invalid("hbar must be > 0"));
        }
        if !(self.d_qq >= 0.0 && self.d_pp >= 0.0) || !self.d_pq.is_finite() {
            return Err(ParamsError::Invalid("diffusion coefficients D_qq, D_pp must be >= 0"));
        }
        if self.lindblad_margin() < -1e-12 * (self.d_qq * self.d_pp).max(f64::MIN_POSITIVE) {
            log::warn!(
                "diffusion coefficients violate D_qq*D_pp - D_pq^2 >= (lambda*hbar/2)^2 (margin {:e})",
                self.lindblad_margin()
            );
        }
        Ok(())
    }

    /// `D_qq D_pp - D_pq² - λ²ħ²/4`; non-negative for a completely positive
    /// evolution.
    pub fn lindblad_margin(&self) -> f64 {
        let half = 0.5 * self.friction * self.hbar;
        self.d_qq * self.d_pp - self.d_pq * self.d_pq - half * half
    }
}

/// How the force traces are closed for a piecewise potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureMode {
    /// `V'` and `V''` evaluated at the centroid.
    #[default]
    Centroid,
    /// Exact Gaussian expectations of `V'` and `V''`.
    GaussianSmeared,
}

impl ClosureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClosureMode::Centroid => "centroid",
            ClosureMode::GaussianSmeared => "gaussian_smeared",
        }
    }
}

/// Mean force `F` and effective curvature `K` entering the moment equations.
pub fn closure_terms(s: &MomentState, v: &PiecewisePotential, mode: ClosureMode) -> (f64, f64) {
    match mode {
        ClosureMode::Centroid => {
            let seg = v.segment(s.q);
            (seg.slope(s.q), seg.curvature())
        }
        ClosureMode::GaussianSmeared => match v.gaussian_force_moments(s.q, s.qq) {
            Ok(g) => (g.mean_slope, g.mean_curvature),
            // σ_qq <= 0 is outside the valid state space; fall back to the
            // point values so the integrator can report the failure downstream.
            Err(_) => (v.derivative(s.q), v.curvature(s.q)),
        },
    }
}

/// Time derivatives `(q, p, qq, pp, pq)` of the moment state.
pub fn rhs(s: &MomentState, v: &PiecewisePotential, p: &LindbladParams, mode: ClosureMode) -> [f64; 5] {
    let (force, k) = closure_terms(s, v, mode);
    rhs_with_force(s, force, k, p)
}

/// Moment derivatives for a given mean force and curvature.
pub(crate) fn rhs_with_force(s: &MomentState, force: f64, k: f64, p: &LindbladParams) -> [f64; 5] {
    let lam = p.friction;
    let inv_m = 1.0 / p.mass;
    [
        -lam * s.q + s.p * inv_m,
        -force - lam * s.p,
        -2.0 * lam * s.qq + 2.0 * s.pq * inv_m + 2.0 * p.d_qq,
        -2.0 * lam * s.pp - 2.0 * k * s.pq + 2.0 * p.d_pp,
        -2.0 * lam * s.pq + s.pp * inv_m - k * s.qq + 2.0 * p.d_pq,
    ]
}

/// `d/dt (σ_qq σ_pp - σ_pq²)` assembled from [`rhs`].
pub fn uncertainty_rate(s: &MomentState, d: &[f64; 5]) -> f64 {
    d[2] * s.pp + s.qq * d[3] - 2.0 * s.pq * d[4]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::HBAR;

    fn state(q: f64, p: f64, qq: f64, pp: f64, pq: f64) -> MomentState {
        MomentState { t: 0.0, q, p, qq, pp, pq }
    }

    #[test]
    fn centroid_at_rest_in_well_minimum() {
        let v = PiecewisePotential::single(10.0, 4.0, 0.0);
        let p = LindbladParams::conservative(13.57, HBAR);
        let d = rhs(&state(10.0, 0.0, 0.5, 2.0, 0.0), &v, &p, ClosureMode::Centroid);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn conservative_flow_preserves_uncertainty_product() {
        let v = PiecewisePotential::single(10.0, 4.0, 0.0);
        let p = LindbladParams::conservative(13.57, HBAR);
        for s in [state(11.0, 3.0, 0.7, 20.0, 1.3), state(9.0, -5.0, 2.0, 3.0, -0.4)] {
            let d = rhs(&s, &v, &p, ClosureMode::Centroid);
            let rate = uncertainty_rate(&s, &d);
            let scale = s.qq * s.pp;
            assert!(rate.abs() < 1e-14 * scale, "rate {rate}");
        }
    }

    #[test]
    fn uncertainty_rate_depends_only_on_diffusion_and_friction() {
        // d/dt det = -4 λ det + 2 D_qq σ_pp + 2 D_pp σ_qq - 4 D_pq σ_pq
        let v = PiecewisePotential::single(13.0, -5.0, 10.0);
        let p = LindbladParams {
            friction: 0.3,
            d_qq: 0.02,
            d_pp: 1.1,
            d_pq: 0.05,
            mass: 13.57,
            hbar: HBAR,
        };
        let s = state(12.0, 7.0, 0.9, 30.0, 2.0);
        let d = rhs(&s, &v, &p, ClosureMode::Centroid);
        let det = s.uncertainty_product();
        let want = -4.0 * p.friction * det + 2.0 * p.d_qq * s.pp + 2.0 * p.d_pp * s.qq
            - 4.0 * p.d_pq * s.pq;
        assert!((uncertainty_rate(&s, &d) - want).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        let ok = LindbladParams::conservative(1.0, HBAR);
        assert!(ok.validate().is_ok());
        assert!(LindbladParams { mass: 0.0, ..ok }.validate().is_err());
        assert!(LindbladParams { friction: -1.0, ..ok }.validate().is_err());
        assert!(LindbladParams { d_pp: -1.0, ..ok }.validate().is_err());
        assert!(LindbladParams { hbar: f64::NAN, ..ok }.validate().is_err());
    }

    #[test]
    fn fma_uncertainty_product_is_accurate() {
        let s = state(0.0, 0.0, 1e8 + 1.0, 1e8, 1e8);
        assert_eq!(s.uncertainty_product(), 1e8);
    }
}
