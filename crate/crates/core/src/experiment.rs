//! Initial conditions, friction sweeps, trajectory classification and the
//! critical-friction search.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::dynamics::{
    integrate, rhs, ClosureMode, IntegrationControls, IntegrationError, LindbladParams, MomentState,
    TimeSeries,
};
use crate::observables::{decay_rate, tunneling_probability, RateNormalization};
use crate::potential::{fmt17, PiecewisePotential, PotentialError};
use crate::units::{momentum_from_mev_per_c, HBAR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("invalid input: {0}")]
    Domain(String),
    #[error("bracket [{lo}, {hi}] does not straddle the critical friction (both ends {class})")]
    Bracket { lo: f64, hi: f64, class: Classification },
}

/// Diffusion coefficients `(D_qq, D_pp, D_pq)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diffusion {
    pub d_qq: f64,
    pub d_pp: f64,
    pub d_pq: f64,
}

/// Zero-temperature rotating-wave coefficients for friction `lambda` and a
/// well of stiffness `well_stiffness` (= m ω²):
/// `D_qq = λħ / (2√(m C))`, `D_pp = m C · D_qq`, `D_pq = 0`.
pub fn rwa_diffusion(lambda: f64, mass: f64, well_stiffness: f64, hbar: f64) -> Result<Diffusion, ExperimentError> {
    if !(mass > 0.0) {
        return Err(ExperimentError::Domain("mass must be > 0".into()));
    }
    if !(well_stiffness > 0.0) {
        return Err(ExperimentError::Domain("well stiffness must be > 0".into()));
    }
    if !(lambda >= 0.0) {
        return Err(ExperimentError::Domain("friction must be >= 0".into()));
    }
    let mc = mass * well_stiffness;
    let d_qq = lambda * hbar / (2.0 * mc.sqrt());
    Ok(Diffusion {
        d_qq,
        d_pp: mc * d_qq,
        d_pq: 0.0,
    })
}

/// Fate of a trajectory at the end of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Past the barrier top and still moving outwards (well + barrier).
    Escaped,
    /// Confined to the first well.
    Trapped,
    /// Came to rest on the far side of the barrier (two wells).
    SettledRight,
    /// Still crossing the barrier back and forth (two wells).
    Oscillating,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Escaped => "escaped",
            Classification::Trapped => "trapped",
            Classification::SettledRight => "settled_right",
            Classification::Oscillating => "oscillating",
        }
    }

    /// Whether the packet ended up beyond the barrier.
    pub fn crossed(&self) -> bool {
        matches!(self, Classification::Escaped | Classification::SettledRight)
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Validated scenario ready to run at any friction.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub potential: PiecewisePotential,
    pub mass: f64,
    pub hbar: f64,
    /// Initial average momentum (MeV·T/fm).
    pub momentum: f64,
    pub mode: ClosureMode,
    pub rate: RateNormalization,
    pub controls: IntegrationControls,
    /// Trailing window (T) and flatness tolerance for asymptote detection.
    pub window: f64,
    pub asymptote_tol: f64,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self, ExperimentError> {
        cfg.validate().map_err(ExperimentError::Domain)?;
        Ok(Self {
            potential: cfg.build_potential()?,
            mass: cfg.dynamics.mass,
            hbar: HBAR,
            momentum: momentum_from_mev_per_c(cfg.initial.momentum),
            mode: cfg.dynamics.mode,
            rate: cfg.dynamics.rate,
            controls: cfg.controls(),
            window: cfg.sweep.window,
            asymptote_tol: cfg.sweep.asymptote_tol,
        })
    }

    pub fn well_center(&self) -> f64 {
        self.potential.well().center
    }

    pub fn well_stiffness(&self) -> f64 {
        self.potential.well().stiffness
    }

    pub fn barrier_top(&self) -> f64 {
        self.potential
            .barrier_top()
            .expect("scenario potentials always contain a barrier")
    }

    pub fn has_second_well(&self) -> bool {
        self.potential.second_well().is_some()
    }

    pub fn diffusion(&self, lambda: f64) -> Result<Diffusion, ExperimentError> {
        rwa_diffusion(lambda, self.mass, self.well_stiffness(), self.hbar)
    }

    pub fn params(&self, lambda: f64) -> Result<LindbladParams, ExperimentError> {
        let d = self.diffusion(lambda)?;
        Ok(LindbladParams {
            friction: lambda,
            d_qq: d.d_qq,
            d_pp: d.d_pp,
            d_pq: d.d_pq,
            mass: self.mass,
            hbar: self.hbar,
        })
    }

    /// Gaussian centred at the well minimum whose width makes `dσ_qq/dt`
    /// vanish, with the uncertainty product saturated.
    pub fn initial_state(&self, lambda: f64, d: &Diffusion) -> MomentState {
        let qq = if lambda > 0.0 {
            d.d_qq / lambda
        } else {
            // λ → 0 limit of D_qq/λ for rotating-wave coefficients.
            self.hbar / (2.0 * (self.mass * self.well_stiffness()).sqrt())
        };
        MomentState {
            t: 0.0,
            q: self.well_center(),
            p: self.momentum,
            qq,
            pp: self.hbar * self.hbar / (4.0 * qq),
            pq: 0.0,
        }
    }

    /// Integrates at friction `lambda` and attaches `P` and `Γ_f`.
    pub fn run(&self, lambda: f64) -> Result<ScenarioRun, ExperimentError> {
        let params = self.params(lambda)?;
        let d = self.diffusion(lambda)?;
        let s0 = self.initial_state(lambda, &d);
        let series = integrate(&s0, &self.potential, &params, self.mode, &self.controls)?;
        let q_b = self.barrier_top();
        let probability = series.states().iter().map(|s| tunneling_probability(s, q_b)).collect();
        let rates = series
            .states()
            .iter()
            .map(|s| decay_rate(s, q_b, self.mass, self.rate).unwrap_or(f64::NAN))
            .collect();
        let series = series.with_observables(probability, rates);
        let classification = self.classify(lambda, &series, &params);
        Ok(ScenarioRun {
            lambda,
            series,
            classification,
        })
    }

    fn classify(&self, lambda: f64, series: &TimeSeries, params: &LindbladParams) -> Classification {
        let q_b = self.barrier_top();
        let last = series.last();
        if !self.has_second_well() {
            let velocity = rhs(last, &self.potential, params, self.mode)[0];
            return if last.q > q_b && velocity > 0.0 {
                Classification::Escaped
            } else {
                Classification::Trapped
            };
        }
        if lambda == 0.0 {
            return Classification::Oscillating;
        }
        let t_from = last.t - self.window;
        let recent: Vec<_> = series.states().iter().filter(|s| s.t >= t_from).collect();
        let crossing = recent.windows(2).any(|w| (w[0].q > q_b) != (w[1].q > q_b));
        if crossing {
            Classification::Oscillating
        } else if last.q > q_b {
            Classification::SettledRight
        } else {
            Classification::Trapped
        }
    }
}

/// One integrated trajectory with observables and its classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub lambda: f64,
    pub series: TimeSeries,
    pub classification: Classification,
}

impl ScenarioRun {
    pub fn tunneling(&self) -> &[f64] {
        self.series.tunneling().expect("scenario runs carry observables")
    }

    pub fn final_probability(&self) -> f64 {
        *self.tunneling().last().expect("non-empty")
    }
}

/// Asymptotic tunneling probability and the time to get within 10 % of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptote {
    pub p_inf: f64,
    pub t90: f64,
}

/// Declares `P_∞` when `P` varies by at most `tol` over the trailing window
/// `window`; `t90` is the first time `|P - P_∞| <= 0.1 |P_∞ - P(0)|`.
/// Returns `None` for series shorter than `2 window` or still varying.
pub fn asymptote(series: &TimeSeries, window: f64, tol: f64) -> Option<Asymptote> {
    let p = series.tunneling()?;
    let t0 = series.first().t;
    let t_end = series.last().t;
    if t_end - t0 <= 2.0 * window {
        return None;
    }
    let (lo, hi) = series
        .states()
        .iter()
        .zip(p)
        .filter(|(s, _)| s.t >= t_end - window)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &x)| (lo.min(x), hi.max(x)));
    if !(hi - lo <= tol) {
        return None;
    }
    let p_inf = *p.last()?;
    let band = 0.1 * (p_inf - p[0]).abs();
    let t90 = series
        .states()
        .iter()
        .zip(p)
        .find(|(_, &x)| (x - p_inf).abs() <= band)
        .map(|(s, _)| s.t - t0)?;
    Some(Asymptote { p_inf, t90 })
}

/// Running mean of `P` over the trailing `period`.
pub fn trailing_mean_probability(series: &TimeSeries, period: f64) -> Option<f64> {
    let p = series.tunneling()?;
    let t_end = series.last().t;
    let (sum, n) = series
        .states()
        .iter()
        .zip(p)
        .filter(|(s, _)| s.t >= t_end - period)
        .fold((0.0, 0usize), |(sum, n), (_, &x)| (sum + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Times at which the centroid crosses `q` moving rightwards, located by
/// linear interpolation between recorded samples.
pub fn upward_crossings(series: &TimeSeries, q: f64) -> Vec<f64> {
    series
        .states()
        .windows(2)
        .filter(|w| w[0].q < q && w[1].q >= q)
        .map(|w| w[0].t + (q - w[0].q) / (w[1].q - w[0].q) * (w[1].t - w[0].t))
        .collect()
}

/// Result of the critical-friction bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLambda {
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    /// Classification on the low-friction side of the threshold.
    pub below: Classification,
    pub above: Classification,
    pub evaluations: usize,
    /// Non-monotone classifications seen at the interior probes.
    pub warnings: Vec<String>,
}

/// Bisects on "trapped or not" between `lo` and `hi` until the bracket is
/// narrower than `tol`. Five evenly spaced interior probes check that the
/// classification switches only once.
pub fn critical_lambda(
    scenario: &Scenario,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<CriticalLambda, ExperimentError> {
    if !(lo >= 0.0 && lo < hi && tol > 0.0) {
        return Err(ExperimentError::Domain("0 <= lambda_lo < lambda_hi and tol > 0 required".into()));
    }
    let mut evaluations = 0;
    let mut classify = |lambda: f64| -> Result<Classification, ExperimentError> {
        evaluations += 1;
        Ok(scenario.run(lambda)?.classification)
    };
    let class_lo = classify(lo)?;
    let class_hi = classify(hi)?;
    let trapped_lo = class_lo == Classification::Trapped;
    if trapped_lo == (class_hi == Classification::Trapped) {
        return Err(ExperimentError::Bracket { lo, hi, class: class_lo });
    }

    let probes: Vec<f64> = (1..=5).map(|i| lo + (hi - lo) * f64::from(i) / 6.0).collect();
    let mut grid = vec![(lo, class_lo)];
    for &l in &probes {
        grid.push((l, classify(l)?));
    }
    grid.push((hi, class_hi));

    let mut warnings = Vec::new();
    let switches = grid
        .windows(2)
        .filter(|w| (w[0].1 == Classification::Trapped) != (w[1].1 == Classification::Trapped))
        .count();
    if switches > 1 {
        let msg = format!(
            "classification is not monotone in friction: {}",
            grid.iter()
                .map(|(l, c)| format!("{l:.6}={c}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    // Start from the first switch on the probe grid.
    let first = grid
        .windows(2)
        .find(|w| (w[0].1 == Classification::Trapped) != (w[1].1 == Classification::Trapped))
        .expect("endpoints differ");
    let (mut a, mut class_a) = first[0];
    let (mut b, mut class_b) = first[1];
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let c = classify(mid)?;
        if (c == Classification::Trapped) == (class_a == Classification::Trapped) {
            a = mid;
            class_a = c;
        } else {
            b = mid;
            class_b = c;
        }
    }
    Ok(CriticalLambda {
        lambda: 0.5 * (a + b),
        lower: a,
        upper: b,
        below: class_a,
        above: class_b,
        evaluations,
        warnings,
    })
}

/// One friction value of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub lambda: f64,
    pub p_inf: Option<f64>,
    /// The moments overflowed before `t_end`.
    pub diverged: bool,
    pub classification: Option<Classification>,
    pub t90: Option<f64>,
    pub p_final: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
}

impl SweepResult {
    /// `lambda,P_inf,classification,t90`; absent values are written as `nan`
    /// or `error`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "lambda,P_inf,classification,t90")?;
        let opt = |x: Option<f64>| x.map(fmt17).unwrap_or_else(|| "nan".into());
        for e in &self.entries {
            let class = match (e.classification, e.diverged) {
                (Some(c), _) => c.as_str(),
                (None, true) => "diverged",
                (None, false) => "error",
            };
            writeln!(w, "{},{},{},{}", fmt17(e.lambda), opt(e.p_inf), class, opt(e.t90))?;
        }
        Ok(())
    }
}

/// Runs every friction value independently (in parallel) and reports the
/// asymptotics in grid order. Failures are recorded per entry.
pub fn friction_sweep(scenario: &Scenario, lambdas: &[f64]) -> Result<SweepResult, ExperimentError> {
    if lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ExperimentError::Domain("sweep lambdas must be strictly increasing".into()));
    }
    let entries = lambdas
        .par_iter()
        .map(|&lambda| match scenario.run(lambda) {
            Ok(run) => {
                let asym = asymptote(&run.series, scenario.window, scenario.asymptote_tol);
                SweepEntry {
                    lambda,
                    p_inf: asym.map(|a| a.p_inf),
                    diverged: false,
                    classification: Some(run.classification),
                    t90: asym.map(|a| a.t90),
                    p_final: Some(run.final_probability()),
                    error: None,
                }
            }
            Err(e) => SweepEntry {
                lambda,
                p_inf: None,
                diverged: matches!(e, ExperimentError::Integration(IntegrationError::NonFinite { .. })),
                classification: None,
                t90: None,
                p_final: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(SweepResult { entries })
}

/// Friction values used as stand-ins for the figure curves.
pub fn figure_lambdas(lambda_cr: f64) -> Vec<f64> {
    [0.0, 0.25, 0.75, 1.25].iter().map(|f| f * lambda_cr).collect()
}
