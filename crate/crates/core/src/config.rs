//! Scenario description shared by the experiment drivers and the CLI.
//!
//! The on-disk form is TOML with the sections `[potential]`, `[dynamics]`,
//! `[initial]`, `[sweep]` and `[output]`. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::dynamics::{AdaptiveControls, ClosureMode, IntegrationControls};
use crate::observables::RateNormalization;
use crate::potential::{PiecewisePotential, PotentialError, TwoParabolaInputs};

/// Reduced mass of the reference scenario (MeV·T²/fm²).
pub const REFERENCE_MASS: f64 = 13.57;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub potential: PotentialSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    /// Well minimum (fm).
    pub q_a: f64,
    /// Barrier top (fm).
    pub q_b: f64,
    /// Barrier height above the well bottom (MeV).
    pub barrier_height: f64,
    /// Barrier stiffness magnitude (MeV/fm²).
    pub barrier_stiffness: f64,
    #[serde(default)]
    pub v_a: f64,
    /// Second well minimum (fm); presence selects the three-parabola shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_c: Option<f64>,
    /// Second well bottom (MeV); defaults to `v_a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    /// MeV·T²/fm²
    pub mass: f64,
    /// Friction constant (1/T).
    pub friction: f64,
    pub mode: ClosureMode,
    pub rate: RateNormalization,
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    /// Relative tolerance; enables adaptive stepping when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    pub atol: f64,
    pub min_step: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        let adaptive = AdaptiveControls::default();
        Self {
            mass: REFERENCE_MASS,
            friction: 0.0,
            mode: ClosureMode::Centroid,
            rate: RateNormalization::Flux,
            dt: 1e-3,
            t_end: 100.0,
            stride: 10,
            rtol: None,
            atol: adaptive.atol,
            min_step: adaptive.min_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Initial average momentum in MeV/c.
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Friction grid (1/T); empty means fractions of the critical friction.
    pub lambdas: Vec<f64>,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Bisection tolerance on the critical friction (1/T).
    pub tol: f64,
    /// Trailing window (T) over which the tunneling probability must be flat.
    pub window: f64,
    pub asymptote_tol: f64,
    /// Second-well placements used by the three-parabola figures (fm).
    pub q_c_values: Vec<f64>,
    /// Second-well bottoms (MeV); empty means `{v_a, 0}`.
    pub v_c_values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            lambdas: Vec::new(),
            lambda_lo: 0.0,
            lambda_hi: 5.0,
            tol: 1e-4,
            window: 20.0,
            asymptote_tol: 1e-4,
            q_c_values: vec![16.5, 18.0, 20.0, 22.0],
            v_c_values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".to_string() }
    }
}

impl ScenarioConfig {
    /// Reference two-parabola scenario: `q_a = 10 fm`, `q_b = 13 fm`,
    /// `B = 10 MeV`, `C_b = 5 MeV/fm²`, `m = 13.57`, `σ_p(0) = 1200 MeV/c`.
    pub fn reference() -> Self {
        Self {
            potential: PotentialSection {
                q_a: 10.0,
                q_b: 13.0,
                barrier_height: 10.0,
                barrier_stiffness: 5.0,
                v_a: 0.0,
                q_c: None,
                v_c: None,
            },
            dynamics: DynamicsSection::default(),
            initial: InitialSection { momentum: 1200.0 },
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }

    /// Reference scenario with a second well at `q_c`.
    pub fn reference_three(q_c: f64, v_c: f64) -> Self {
        let mut cfg = Self::reference();
        cfg.potential.q_c = Some(q_c);
        cfg.potential.v_c = Some(v_c);
        cfg
    }

    pub fn two_parabola_inputs(&self) -> TwoParabolaInputs {
        TwoParabolaInputs {
            q_a: self.potential.q_a,
            q_b: self.potential.q_b,
            barrier_height: self.potential.barrier_height,
            barrier_stiffness: self.potential.barrier_stiffness,
            v_a: self.potential.v_a,
        }
    }

    pub fn build_potential(&self) -> Result<PiecewisePotential, PotentialError> {
        let base = PiecewisePotential::two_parabola(&self.two_parabola_inputs())?;
        match self.potential.q_c {
            Some(q_c) => base.with_second_well(q_c, self.potential.v_c.unwrap_or(self.potential.v_a)),
            None => Ok(base),
        }
    }

    pub fn controls(&self) -> IntegrationControls {
        let d = &self.dynamics;
        IntegrationControls {
            dt: d.dt,
            t_end: d.t_end,
            stride: d.stride,
            adaptive: d.rtol.map(|rtol| AdaptiveControls {
                rtol,
                atol: d.atol,
                min_step: d.min_step,
            }),
        }
    }

    /// Second-well bottoms for the three-parabola figures.
    pub fn v_c_values(&self) -> Vec<f64> {
        if self.sweep.v_c_values.is_empty() {
            let mut v = vec![self.potential.v_a];
            if self.potential.v_a != 0.0 {
                v.push(0.0);
            }
            v
        } else {
            self.sweep.v_c_values.clone()
        }
    }

    /// Checks every precondition; the message names the violated one.
    pub fn validate(&self) -> Result<(), String> {
        self.build_potential().map_err(|e| e.to_string())?;
        let d = &self.dynamics;
        if !(d.mass > 0.0 && d.mass.is_finite()) {
            return Err("mass > 0 required".into());
        }
        if !(d.friction >= 0.0 && d.friction.is_finite()) {
            return Err("friction >= 0 required".into());
        }
        self.controls().validate().map_err(|e| e.to_string())?;
        if !self.initial.momentum.is_finite() {
            return Err("initial momentum must be finite".into());
        }
        let s = &self.sweep;
        if s.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err("sweep lambdas must be finite and >= 0".into());
        }
        if s.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err("sweep lambdas must be strictly increasing".into());
        }
        if !(s.lambda_lo >= 0.0 && s.lambda_lo < s.lambda_hi && s.lambda_hi.is_finite()) {
            return Err("0 <= lambda_lo < lambda_hi required".into());
        }
        if !(s.tol > 0.0) {
            return Err("sweep tol > 0 required".into());
        }
        if !(s.window > 0.0 && s.asymptote_tol > 0.0) {
            return Err("window > 0 and asymptote_tol > 0 required".into());
        }
        let base = PiecewisePotential::two_parabola(&self.two_parabola_inputs()).map_err(|e| e.to_string())?;
        for &q_c in &s.q_c_values {
            for v_c in self.v_c_values() {
                base.with_second_well(q_c, v_c)
                    .map_err(|e| format!("sweep second well q_c={q_c}, v_c={v_c}: {e}"))?;
            }
        }
        Ok(())
    }
}
