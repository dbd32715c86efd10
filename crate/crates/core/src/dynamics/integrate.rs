use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{rhs, rhs_with_force, ClosureMode, LindbladParams, MomentState, TimeSeries};
use crate::potential::PiecewisePotential;

/// Join crossings are located to this accuracy in position (fm).
const JOIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("adaptive step fell below {min_step:e} T at t = {t} without meeting the tolerance")]
    StepFailure { t: f64, min_step: f64 },
    #[error("moments became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid integration controls: {0}")]
    InvalidControls(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveControls {
    pub rtol: f64,
    pub atol: f64,
    pub min_step: f64,
}

impl Default for AdaptiveControls {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            min_step: 1e-8,
        }
    }
}

/// Step size, horizon and output cadence.
///
/// With `adaptive` unset the classical RK4 scheme runs at fixed `dt`;
/// otherwise a Dormand–Prince 5(4) pair picks steps no larger than `dt`.
/// States are recorded every `stride` nominal steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationControls {
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    pub adaptive: Option<AdaptiveControls>,
}

impl Default for IntegrationControls {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 100.0,
            stride: 10,
            adaptive: None,
        }
    }
}

impl IntegrationControls {
    pub fn validate(&self) -> Result<(), IntegrationError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegrationError::InvalidControls("dt must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(IntegrationError::InvalidControls("t_end must be non-negative"));
        }
        if self.stride == 0 {
            return Err(IntegrationError::InvalidControls("stride must be >= 1"));
        }
        if let Some(a) = self.adaptive {
            if !(a.rtol > 0.0 && a.atol >= 0.0 && a.min_step > 0.0) {
                return Err(IntegrationError::InvalidControls(
                    "adaptive tolerances must be positive",
                ));
            }
        }
        Ok(())
    }

    /// Number of nominal steps needed to reach `t_end`.
    pub fn steps(&self) -> u64 {
        let n = self.t_end / self.dt;
        let rounded = n.round();
        if (n - rounded).abs() < 1e-9 * n.max(1.0) {
            rounded as u64
        } else {
            n.ceil() as u64
        }
    }
}

fn axpy(y: &[f64; 5], h: f64, k: &[f64; 5]) -> [f64; 5] {
    std::array::from_fn(|i| y[i] + h * k[i])
}

#[derive(Clone, Copy)]
struct System<'a> {
    v: &'a PiecewisePotential,
    p: &'a LindbladParams,
    mode: ClosureMode,
    /// Centroid mode: segment whose force law is used for every stage.
    frozen: Option<usize>,
}

impl System<'_> {
    fn eval(&self, t: f64, y: &[f64; 5]) -> [f64; 5] {
        let s = MomentState::from_array(t, *y);
        match self.frozen {
            Some(i) => {
                let seg = &self.v.segments()[i];
                rhs_with_force(&s, seg.slope(s.q), seg.curvature(), self.p)
            }
            None => rhs(&s, self.v, self.p, self.mode),
        }
    }

    fn rk4(&self, s: &MomentState, h: f64) -> MomentState {
        let y = s.to_array();
        let k1 = self.eval(s.t, &y);
        let k2 = self.eval(s.t + 0.5 * h, &axpy(&y, 0.5 * h, &k1));
        let k3 = self.eval(s.t + 0.5 * h, &axpy(&y, 0.5 * h, &k2));
        let k4 = self.eval(s.t + h, &axpy(&y, h, &k3));
        let out = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        MomentState::from_array(s.t + h, out)
    }

    /// One Dormand–Prince step; returns the 5th-order solution and the
    /// embedded error estimate.
    fn dopri(&self, s: &MomentState, h: f64) -> (MomentState, [f64; 5]) {
        const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        const B4: [f64; 7] = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        let y = s.to_array();
        let mut k = [[0.0; 5]; 7];
        for stage in 0..7 {
            let yi: [f64; 5] = std::array::from_fn(|i| {
                y[i] + h * (0..stage).map(|j| A[stage][j] * k[j][i]).sum::<f64>()
            });
            k[stage] = self.eval(s.t + C[stage] * h, &yi);
        }
        let y5: [f64; 5] = std::array::from_fn(|i| y[i] + h * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>());
        let err: [f64; 5] = std::array::from_fn(|i| h * (0..7).map(|j| (B5[j] - B4[j]) * k[j][i]).sum::<f64>());
        (MomentState::from_array(s.t + h, y5), err)
    }
}

/// One classical fourth-order Runge–Kutta step of size `dt`.
pub fn step_rk4(
    s: &MomentState,
    v: &PiecewisePotential,
    p: &LindbladParams,
    mode: ClosureMode,
    dt: f64,
) -> MomentState {
    System { v, p, mode, frozen: None }.rk4(s, dt)
}

/// One Dormand–Prince 5(4) step, returning the new state and the embedded
/// error estimate.
pub fn step_dopri(
    s: &MomentState,
    v: &PiecewisePotential,
    p: &LindbladParams,
    mode: ClosureMode,
    dt: f64,
) -> (MomentState, [f64; 5]) {
    System { v, p, mode, frozen: None }.dopri(s, dt)
}

/// Moves `s` forward by `h` with `step`, shortening steps so that the centroid
/// lands within [`JOIN_TOLERANCE`] just past every join it crosses. In
/// centroid mode each sub-step uses the force law of the segment it starts
/// in, so no stage mixes two curvatures.
fn advance_with_joins<F>(
    sys: &System,
    s: &MomentState,
    h: f64,
    mut step: F,
) -> Result<MomentState, IntegrationError>
where
    F: FnMut(&System, &MomentState, f64) -> Result<MomentState, IntegrationError>,
{
    let mut cur = *s;
    let mut remaining = h;
    let segments = sys.v.segments();
    // A state landing on the far side of a join is always a genuine crossing,
    // so the loop is bounded by the number of crossings within `h`.
    for _ in 0..10_000 {
        if remaining <= 0.0 {
            break;
        }
        if sys.mode != ClosureMode::Centroid || segments.len() == 1 {
            return step(sys, &cur, remaining);
        }
        let from = sys.v.segment_at(cur.q);
        let local = System { frozen: Some(from), ..*sys };
        let trial = step(&local, &cur, remaining)?;
        let to = sys.v.segment_at(trial.q);
        if from == to || !trial.q.is_finite() {
            cur = trial;
            break;
        }
        let join = if to > from { segments[from].hi } else { segments[from].lo };
        let past = |q: f64| if to > from { q > join } else { q <= join };

        let (mut lo, mut hi) = (0.0, remaining);
        let mut landed = trial;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let probe = step(&local, &cur, mid)?;
            if past(probe.q) {
                hi = mid;
                landed = probe;
                if (probe.q - join).abs() <= JOIN_TOLERANCE {
                    break;
                }
            } else {
                lo = mid;
            }
        }
        cur = landed;
        remaining -= hi;
    }
    // Pin the time to the nominal end to avoid drift from the split steps.
    cur.t = s.t + h;
    Ok(cur)
}

fn dopri_step_adaptive(
    sys: &System,
    s: &MomentState,
    h: f64,
    ctl: &AdaptiveControls,
    h_guess: &mut f64,
) -> Result<MomentState, IntegrationError> {
    let mut cur = *s;
    let target = s.t + h;
    let mut h_try = h_guess.min(h);
    while cur.t < target {
        let left = target - cur.t;
        let last = h_try >= left;
        let h_now = if last { left } else { h_try };
        let (next, err) = sys.dopri(&cur, h_now);
        let y0 = cur.to_array();
        let y1 = next.to_array();
        let norm = (0..5)
            .map(|i| {
                let sc = ctl.atol + ctl.rtol * y0[i].abs().max(y1[i].abs());
                (err[i] / sc).abs()
            })
            .fold(0.0, f64::max);
        if norm <= 1.0 {
            cur = next;
            if last {
                cur.t = target;
            } else {
                let grow = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                h_try = h_now * grow;
                *h_guess = h_try;
            }
        } else if h_now <= ctl.min_step {
            return Err(if norm.is_finite() {
                IntegrationError::StepFailure { t: cur.t, min_step: ctl.min_step }
            } else {
                IntegrationError::NonFinite { t: cur.t }
            });
        } else {
            let shrink = if norm.is_finite() { (0.9 * norm.powf(-0.25)).clamp(0.1, 0.9) } else { 0.1 };
            h_try = (h_now * shrink).max(ctl.min_step);
        }
    }
    Ok(cur)
}

/// Integrates from `s0` to `controls.t_end`, recording every `stride` steps.
///
/// In centroid mode the step is split at every join so that no single step
/// mixes the curvatures of two segments.
pub fn integrate(
    s0: &MomentState,
    v: &PiecewisePotential,
    p: &LindbladParams,
    mode: ClosureMode,
    controls: &IntegrationControls,
) -> Result<TimeSeries, IntegrationError> {
    controls.validate()?;
    let sys = System { v, p, mode, frozen: None };
    let n = controls.steps();
    let mut states = Vec::with_capacity((n as usize) / controls.stride + 2);
    states.push(*s0);
    let mut cur = *s0;
    let mut h_guess = controls.dt;
    for k in 1..=n {
        let t_next = (s0.t + k as f64 * controls.dt).min(s0.t + controls.t_end);
        let h = t_next - cur.t;
        cur = match controls.adaptive {
            None => advance_with_joins(&sys, &cur, h, |sys, s, dt| Ok(sys.rk4(s, dt)))?,
            Some(ctl) => advance_with_joins(&sys, &cur, h, |sys, s, dt| {
                let mut guess = h_guess;
                let out = dopri_step_adaptive(sys, s, dt, &ctl, &mut guess);
                h_guess = guess;
                out
            })?,
        };
        cur.t = t_next;
        if !cur.is_finite() {
            return Err(IntegrationError::NonFinite { t: cur.t });
        }
        if k % controls.stride as u64 == 0 || k == n {
            states.push(cur);
        }
    }
    Ok(TimeSeries::new(states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::segment_propagator_exact;
    use crate::units::HBAR;

    const M: f64 = 13.57;

    #[test]
    fn rk4_is_exact_for_free_particle() {
        let v = PiecewisePotential::single(0.0, 0.0, 0.0);
        let p = LindbladParams::conservative(M, HBAR);
        let s0 = MomentState { t: 0.0, q: 1.0, p: 40.0, qq: 0.5, pp: 20.0, pq: 0.0 };
        let ctl = IntegrationControls { dt: 0.01, t_end: 10.0, stride: 100, adaptive: None };
        let ts = integrate(&s0, &v, &p, ClosureMode::Centroid, &ctl).unwrap();
        let last = ts.last();
        let want = 1.0 + 40.0 * 10.0 / M;
        assert!(((last.q - want) / want).abs() < 1e-12);
        assert_eq!(last.t, 10.0);
        assert_eq!(ts.len(), 11);
    }

    #[test]
    fn conservative_well_energy_drift() {
        let c = 4.0;
        let v = PiecewisePotential::single(10.0, c, 0.0);
        let p = LindbladParams::conservative(M, HBAR);
        let s0 = MomentState { t: 0.0, q: 10.0, p: 40.0, qq: 0.45, pp: 24.0, pq: 0.0 };
        let energy = |s: &MomentState| {
            s.p * s.p / (2.0 * M) + v.evaluate(s.q) + s.pp / (2.0 * M) + c * s.qq / 2.0
        };
        let ctl = IntegrationControls { dt: 0.01, t_end: 100.0, stride: 50, adaptive: None };
        let ts = integrate(&s0, &v, &p, ClosureMode::Centroid, &ctl).unwrap();
        let e0 = energy(&s0);
        for s in ts.states() {
            assert!(((energy(s) - e0) / e0).abs() < 1e-8);
        }
    }

    #[test]
    fn join_crossings_are_located() {
        let v = PiecewisePotential::two_parabola(&crate::potential::TwoParabolaInputs {
            q_a: 10.0,
            q_b: 13.0,
            barrier_height: 10.0,
            barrier_stiffness: 5.0,
            v_a: 0.0,
        })
        .unwrap();
        let p = LindbladParams::conservative(M, HBAR);
        let sys = System { v: &v, p: &p, mode: ClosureMode::Centroid, frozen: None };
        let q_t = v.segments()[0].hi;
        let s0 = MomentState { t: 0.0, q: q_t - 0.01, p: 40.0, qq: 0.45, pp: 24.0, pq: 0.0 };
        let mut seen = Vec::new();
        let end = advance_with_joins(&sys, &s0, 0.1, |sys, s, h| {
            let n = sys.rk4(s, h);
            seen.push(n.q);
            Ok(n)
        })
        .unwrap();
        assert!(end.q > q_t);
        assert!(seen.iter().any(|q| *q > q_t && q - q_t <= JOIN_TOLERANCE));
    }

    #[test]
    fn adaptive_matches_exact_propagator() {
        let seg = crate::potential::ParabolicSegment::unbounded(13.0, -5.0, 10.0);
        let v = PiecewisePotential::from_segments(vec![seg]).unwrap();
        let p = LindbladParams { friction: 0.2, d_qq: 0.01, d_pp: 0.5, d_pq: 0.0, mass: M, hbar: HBAR };
        let s0 = MomentState { t: 0.0, q: 12.0, p: 20.0, qq: 0.45, pp: 24.0, pq: 0.0 };
        let ctl = IntegrationControls {
            dt: 0.5,
            t_end: 5.0,
            stride: 1,
            adaptive: Some(AdaptiveControls::default()),
        };
        let ts = integrate(&s0, &v, &p, ClosureMode::Centroid, &ctl).unwrap();
        let exact = segment_propagator_exact(&seg, &p, 5.0).apply(&s0);
        for (a, b) in ts.last().to_array().iter().zip(exact.to_array()) {
            assert!(((a - b) / b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn adaptive_reports_step_failure() {
        let v = PiecewisePotential::single(10.0, 4.0, 0.0);
        let p = LindbladParams::conservative(M, HBAR);
        let s0 = MomentState { t: 0.0, q: 10.0, p: 40.0, qq: 0.45, pp: 24.0, pq: 0.0 };
        let ctl = IntegrationControls {
            dt: 0.1,
            t_end: 1.0,
            stride: 1,
            adaptive: Some(AdaptiveControls { rtol: 1e-300, atol: 0.0, min_step: 1e-2 }),
        };
        let err = integrate(&s0, &v, &p, ClosureMode::Centroid, &ctl).unwrap_err();
        assert!(matches!(err, IntegrationError::StepFailure { .. }));
    }

    #[test]
    fn rejects_bad_controls() {
        let v = PiecewisePotential::single(0.0, 1.0, 0.0);
        let p = LindbladParams::conservative(M, HBAR);
        let s0 = MomentState { t: 0.0, q: 0.0, p: 0.0, qq: 1.0, pp: 1.0, pq: 0.0 };
        for ctl in [
            IntegrationControls { dt: 0.0, ..Default::default() },
            IntegrationControls { stride: 0, ..Default::default() },
            IntegrationControls { t_end: f64::NAN, ..Default::default() },
        ] {
            assert!(integrate(&s0, &v, &p, ClosureMode::Centroid, &ctl).is_err());
        }
    }

    #[test]
    fn overflow_is_reported() {
        let v = PiecewisePotential::single(0.0, -50.0, 0.0);
        let p = LindbladParams::conservative(0.01, HBAR);
        let s0 = MomentState { t: 0.0, q: 1.0, p: 0.0, qq: 1.0, pp: 1.0, pq: 0.0 };
        let ctl = IntegrationControls { dt: 0.01, t_end: 100.0, stride: 1, adaptive: None };
        let err = integrate(&s0, &v, &p, ClosureMode::Centroid, &ctl).unwrap_err();
        assert!(matches!(err, IntegrationError::NonFinite { .. }));
    }
}
