//! Independent oracles: adaptive quadrature of Gaussian expectations and
//! flux, closed-form centroid orbits, and a classical Langevin ensemble.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::dynamics::{
    closure_terms, integrate, rhs, segment_propagator_exact, ClosureMode, IntegrationControls, LindbladParams,
    MomentState,
};
use crate::experiment::{upward_crossings, ExperimentError, Scenario};
use crate::observables::{decay_rate, tunneling_probability, wigner_density, RateNormalization};
use crate::potential::{ParabolicSegment, PiecewisePotential};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    QuadratureFailure { a: f64, b: f64, estimate: f64 },
    #[error("invalid input: {0}")]
    Domain(String),
    #[error("no crossing found within {0} segment transits")]
    NoOrbit(usize),
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature with the hybrid tolerance
/// `err <= max(abs_tol, rel_tol |I|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, ValidationError> {
    if a == b {
        return Ok(0.0);
    }
    let mut pending = vec![(a, b, kronrod15(&f, a, b))];
    let mut total = 0.0;
    let mut err = 0.0;
    let mut intervals = 0usize;
    // Global bisection of the worst interval.
    let (mut value, mut estimate) = (pending[0].2 .0, pending[0].2 .1);
    loop {
        if !(value.is_finite() && estimate.is_finite()) {
            return Err(ValidationError::QuadratureFailure { a, b, estimate });
        }
        if estimate <= abs_tol.max(rel_tol * value.abs()) {
            break;
        }
        intervals += 1;
        if intervals > 20_000 {
            return Err(ValidationError::QuadratureFailure { a, b, estimate });
        }
        let (worst, _) = pending
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("non-empty");
        let (lo, hi, _) = pending.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            // Interval no longer divisible: accept its contribution.
            let r = kronrod15(&f, lo, hi);
            total += r.0;
            err += r.1;
        } else {
            pending.push((lo, mid, kronrod15(&f, lo, mid)));
            pending.push((mid, hi, kronrod15(&f, mid, hi)));
        }
        value = total + pending.iter().map(|p| p.2 .0).sum::<f64>();
        estimate = err + pending.iter().map(|p| p.2 .1).sum::<f64>();
    }
    Ok(value)
}

const ABS_TOL: f64 = 1e-13;
const REL_TOL: f64 = 1e-13;
/// Gaussian integrals are truncated this many standard deviations out.
const SPAN: f64 = 40.0;

/// Functions of `q` whose Gaussian expectation can be requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expectation {
    Potential,
    Slope,
    Curvature,
    /// `a + b q`
    Linear { a: f64, b: f64 },
}

/// `E[f(q)]` for `q ~ N(mean, var)` by quadrature, split at the joins.
pub fn quadrature_expectation(
    f: Expectation,
    v: &PiecewisePotential,
    mean: f64,
    var: f64,
) -> Result<f64, ValidationError> {
    if !(var > 0.0) {
        return Err(ValidationError::Domain("variance must be positive".into()));
    }
    let sd = var.sqrt();
    let (lo, hi) = (mean - SPAN * sd, mean + SPAN * sd);
    let mut cuts = vec![lo];
    cuts.extend(v.joins().filter(|&j| j > lo && j < hi));
    cuts.push(hi);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let seg = v.segment(0.5 * (w[0] + w[1]));
        let g = |q: f64| {
            let z = (q - mean) / sd;
            let density = (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt());
            let value = match f {
                Expectation::Potential => seg.value(q),
                Expectation::Slope => seg.slope(q),
                Expectation::Curvature => seg.curvature(),
                Expectation::Linear { a, b } => a + b * q,
            };
            value * density
        };
        total += integrate_adaptive(g, w[0], w[1], ABS_TOL, REL_TOL)?;
    }
    Ok(total)
}

/// `∫_{q_b}^{∞} dq ∫dp W(q, p)` with the inner integral done analytically.
pub fn tail_quadrature(s: &MomentState, q_b: f64) -> Result<f64, ValidationError> {
    if !(s.qq > 0.0) {
        return Err(ValidationError::Domain("sigma_qq must be positive".into()));
    }
    let sd = s.qq.sqrt();
    let density = |q: f64| {
        let z = (q - s.q) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
    };
    let hi = s.q + SPAN * sd;
    if q_b >= hi {
        return Ok(0.0);
    }
    let lo = q_b.max(s.q - SPAN * sd);
    let mut cuts = vec![lo];
    if s.q > lo {
        cuts.push(s.q);
    }
    cuts.push(hi);
    cuts.windows(2)
        .map(|w| integrate_adaptive(density, w[0], w[1], 0.0, REL_TOL))
        .sum()
}

/// Probability current through `q_b`: `∫dp (p/m) W(q_b, p)`.
pub fn flux_quadrature(s: &MomentState, q_b: f64, mass: f64) -> Result<f64, ValidationError> {
    let det = s.uncertainty_product();
    if !(det > 0.0 && s.qq > 0.0) {
        return Err(ValidationError::Domain("covariance must be positive definite".into()));
    }
    // Conditional distribution of p at q = q_b fixes the integration window.
    let centre = s.p + s.pq / s.qq * (q_b - s.q);
    let width = (det / s.qq).sqrt();
    let (lo, hi) = (centre - SPAN * width, centre + SPAN * width);
    let g = |p: f64| p / mass * wigner_density(s, q_b, p).unwrap_or(0.0);
    let mut cuts = vec![lo];
    if lo < 0.0 && hi > 0.0 {
        cuts.push(0.0);
    }
    if centre > lo && centre < hi && centre != 0.0 {
        cuts.push(centre);
        cuts.sort_by(f64::total_cmp);
    }
    cuts.push(hi);
    cuts.windows(2)
        .map(|w| integrate_adaptive(g, w[0], w[1], 0.0, REL_TOL))
        .sum()
}

/// Written independently of `dynamics::rhs`: `d/dt` of the mean vector and of
/// the covariance matrix `Σ` as `A Σ + Σ Aᵀ + 2D`, with the linearized drift
/// `A = [[-λ, 1/m], [-K, -λ]]`.
pub fn matrix_rhs(s: &MomentState, force: f64, curvature: f64, p: &LindbladParams) -> [f64; 5] {
    let a = [[-p.friction, 1.0 / p.mass], [-curvature, -p.friction]];
    let sigma = [[s.qq, s.pq], [s.pq, s.pp]];
    let d = [[p.d_qq, p.d_pq], [p.d_pq, p.d_pp]];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 2.0 * d[i][j];
            for k in 0..2 {
                acc += a[i][k] * sigma[k][j] + sigma[i][k] * a[j][k];
            }
            out[i][j] = acc;
        }
    }
    [
        s.p / p.mass - p.friction * s.q,
        -force - p.friction * s.p,
        out[0][0],
        out[1][1],
        out[0][1],
    ]
}

/// Time for the frictionless centroid to travel one full orbit starting from
/// `(q0, p0)`, assembled segment by segment from the closed-form harmonic and
/// inverted-harmonic solutions.
pub fn centroid_period(v: &PiecewisePotential, mass: f64, q0: f64, p0: f64) -> Result<f64, ValidationError> {
    if !(mass > 0.0) || p0 == 0.0 {
        return Err(ValidationError::Domain("mass > 0 and p0 != 0 required".into()));
    }
    let mut q = q0;
    let mut vel = p0 / mass;
    let mut t = 0.0;
    for _ in 0..1000 {
        // Segment ahead of the current point in the direction of motion.
        let probe = q + vel.signum() * 1e-9 * (1.0 + q.abs());
        let seg = v.segment(probe);
        let mut targets = vec![seg.lo, seg.hi];
        if q0 > seg.lo && q0 < seg.hi {
            targets.push(q0);
        }
        let (dt, q_hit, v_hit) = first_hit(seg, mass, q, vel, &targets)?;
        t += dt;
        if q_hit == q0 && v_hit.signum() == p0.signum() {
            return Ok(t);
        }
        q = q_hit;
        vel = v_hit;
    }
    Err(ValidationError::NoOrbit(1000))
}

/// Earliest positive time at which `q(t)` reaches one of `targets` inside
/// `seg`; returns the time, the position and the velocity there.
fn first_hit(
    seg: &ParabolicSegment,
    mass: f64,
    q: f64,
    vel: f64,
    targets: &[f64],
) -> Result<(f64, f64, f64), ValidationError> {
    let u0 = q - seg.center;
    let c = seg.stiffness;
    let min_t = 1e-12;
    let mut best: Option<(f64, f64)> = None;
    for &target in targets.iter().filter(|x| x.is_finite()) {
        let ue = target - seg.center;
        let times: Vec<f64> = if c > 0.0 {
            let w = (c / mass).sqrt();
            let r = u0.hypot(vel / w);
            if ue.abs() > r {
                vec![]
            } else {
                let phi = (vel / w).atan2(u0);
                let acos = (ue / r).clamp(-1.0, 1.0).acos();
                let mut out = Vec::new();
                for base in [phi + acos, phi - acos] {
                    let mut x = base.rem_euclid(2.0 * PI);
                    if x / w <= min_t {
                        x += 2.0 * PI;
                    }
                    out.push(x / w);
                }
                out
            }
        } else if c < 0.0 {
            let k = (-c / mass).sqrt();
            let a = 0.5 * (u0 + vel / k);
            let b = 0.5 * (u0 - vel / k);
            // a x² - ue x + b = 0 with x = e^{kt}
            let mut roots = Vec::new();
            if a == 0.0 {
                if ue != 0.0 {
                    roots.push(b / ue);
                }
            } else {
                let disc = ue * ue - 4.0 * a * b;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    let qv = -0.5 * (-ue + ue.signum() * sq);
                    let qv = if qv == 0.0 { -0.5 * (-ue - sq) } else { qv };
                    roots.push(qv / a);
                    if qv != 0.0 {
                        roots.push(b / qv);
                    }
                }
            }
            roots.into_iter().filter(|x| *x > 0.0).map(|x| x.ln() / k).collect()
        } else if vel == 0.0 {
            vec![]
        } else {
            vec![(target - q) / vel]
        };
        for tt in times {
            if tt > min_t && best.is_none_or(|(b, _)| tt < b) {
                best = Some((tt, target));
            }
        }
    }
    let (tt, target) = best.ok_or(ValidationError::NoOrbit(1))?;
    let vel_hit = if c > 0.0 {
        let w = (c / mass).sqrt();
        -u0 * w * (w * tt).sin() + vel * (w * tt).cos()
    } else if c < 0.0 {
        let k = (-c / mass).sqrt();
        u0 * k * (k * tt).sinh() + vel * (k * tt).cosh()
    } else {
        vel
    };
    Ok((tt, target, vel_hit))
}

/// Ensemble statistics at one output time, with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledMoments {
    pub t: f64,
    pub moments: [f64; 5],
    pub std_errors: [f64; 5],
}

impl SampledMoments {
    /// Largest `|sample - reference| / standard error` over the five moments.
    pub fn max_z(&self, reference: &MomentState) -> f64 {
        let r = reference.to_array();
        (0..5)
            .map(|i| (self.moments[i] - r[i]).abs() / self.std_errors[i])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangevinRun {
    pub n: usize,
    pub seed: u64,
    pub dt: f64,
    pub samples: Vec<SampledMoments>,
}

/// Classical Langevin ensemble on one parabolic segment,
/// `dq = (p/m - λq) dt + dW_q`, `dp = (-V'(q) - λp) dt + dW_p`, with noise
/// covariance `2D dt`. The drift is applied with a Heun predictor-corrector
/// (weak order two for additive noise). Initial points are drawn from the
/// Gaussian described by `s0`.
///
/// Trajectory `i` uses its own ChaCha8 stream `i` under `seed`, and the
/// reduction runs in trajectory order, so the result does not depend on the
/// number of worker threads.
pub fn langevin_sample(
    seg: &ParabolicSegment,
    p: &LindbladParams,
    s0: &MomentState,
    dt: f64,
    times: &[f64],
    n: usize,
    seed: u64,
) -> Result<LangevinRun, ValidationError> {
    if n < 2 {
        return Err(ValidationError::Domain("at least two trajectories required".into()));
    }
    if !(dt > 0.0) || times.iter().any(|&t| !(t >= s0.t)) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ValidationError::Domain("dt > 0 and increasing output times >= t0 required".into()));
    }
    let chol = |a: f64, b: f64, c: f64| -> Result<(f64, f64, f64), ValidationError> {
        // [[a, b], [b, c]] = L Lᵀ; a zero block gives a zero factor.
        if a < 0.0 || c < 0.0 || a * c - b * b < -1e-12 * (a * c).abs() {
            return Err(ValidationError::Domain("covariance is not positive semidefinite".into()));
        }
        let l11 = a.sqrt();
        let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
        let l22 = (c - l21 * l21).max(0.0).sqrt();
        Ok((l11, l21, l22))
    };
    let init = chol(s0.qq, s0.pq, s0.pp)?;
    let noise = chol(2.0 * p.d_qq * dt, 2.0 * p.d_pq * dt, 2.0 * p.d_pp * dt)?;
    let steps: Vec<u64> = times.iter().map(|&t| ((t - s0.t) / dt).round() as u64).collect();
    let inv_m = 1.0 / p.mass;
    let lam = p.friction;
    let drift = |q: f64, mom: f64| (mom * inv_m - lam * q, -seg.slope(q) - lam * mom);

    let paths: Vec<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
            let (z1, z2) = (normal(), normal());
            let mut q = s0.q + init.0 * z1;
            let mut mom = s0.p + init.1 * z1 + init.2 * z2;
            let mut out = Vec::with_capacity(steps.len());
            let mut k = 0u64;
            for &target in &steps {
                while k < target {
                    let (z1, z2) = (normal(), normal());
                    let (wq, wp) = (noise.0 * z1, noise.1 * z1 + noise.2 * z2);
                    let (a_q, a_p) = drift(q, mom);
                    let (q1, p1) = (q + a_q * dt + wq, mom + a_p * dt + wp);
                    let (b_q, b_p) = drift(q1, p1);
                    q += 0.5 * (a_q + b_q) * dt + wq;
                    mom += 0.5 * (a_p + b_p) * dt + wp;
                    k += 1;
                }
                out.push((q, mom));
            }
            out
        })
        .collect();

    let nf = n as f64;
    let samples = times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let (mut sq, mut sp) = (0.0, 0.0);
            for path in &paths {
                sq += path[j].0;
                sp += path[j].1;
            }
            let (mq, mp) = (sq / nf, sp / nf);
            let (mut cqq, mut cpp, mut cpq) = (0.0, 0.0, 0.0);
            for path in &paths {
                let (dq, dp) = (path[j].0 - mq, path[j].1 - mp);
                cqq += dq * dq;
                cpp += dp * dp;
                cpq += dq * dp;
            }
            let (cqq, cpp, cpq) = (cqq / (nf - 1.0), cpp / (nf - 1.0), cpq / (nf - 1.0));
            let std_errors = [
                (cqq / nf).sqrt(),
                (cpp / nf).sqrt(),
                cqq * (2.0 / (nf - 1.0)).sqrt(),
                cpp * (2.0 / (nf - 1.0)).sqrt(),
                ((cqq * cpp + cpq * cpq) / (nf - 1.0)).sqrt(),
            ];
            SampledMoments {
                t,
                moments: [mq, mp, cqq, cpp, cpq],
                std_errors,
            }
        })
        .collect();
    Ok(LangevinRun { n, seed, dt, samples })
}

/// One entry of the oracle report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub friction: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Largest component difference, each scaled by its natural size: means by
/// `max(|mean|, width)`, variances by themselves, the covariance by
/// `√(σ_qq σ_pp)`.
pub fn moment_error(a: &MomentState, reference: &MomentState) -> f64 {
    let r = reference;
    let scale = [
        r.q.abs().max(r.qq.sqrt()),
        r.p.abs().max(r.pp.sqrt()),
        r.qq,
        r.pp,
        (r.qq * r.pp).sqrt(),
    ];
    let (x, y) = (a.to_array(), r.to_array());
    (0..5).map(|i| (x[i] - y[i]).abs() / scale[i]).fold(0.0, f64::max)
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Runs every oracle against the configured scenario at its friction.
pub fn run_suite(cfg: &ScenarioConfig, opts: &SuiteOptions) -> Result<ValidationReport, SuiteError> {
    let scenario = Scenario::from_config(cfg)?;
    let lambda = cfg.dynamics.friction;
    let params = scenario.params(lambda)?;
    let q_b = scenario.barrier_top();
    let run = scenario.run(lambda)?;
    let states: Vec<MomentState> = run.series.states().iter().step_by((run.series.len() / 50).max(1)).copied().collect();
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for s in &states {
        let p = tunneling_probability(s, q_b);
        if p > 1e-280 {
            worst = worst.max(rel(p, tail_quadrature(s, q_b)?, 0.0));
        }
    }
    checks.push(Check::new("tunneling probability vs tail quadrature (relative)", worst, 1e-10));

    let mut worst = 0.0f64;
    for s in &states {
        let Ok(rate) = decay_rate(s, q_b, scenario.mass, RateNormalization::Flux) else { continue };
        let p = tail_quadrature(s, q_b)?;
        if p < 1e-200 {
            continue;
        }
        let oracle = flux_quadrature(s, q_b, scenario.mass)? / p;
        worst = worst.max(rel(rate, oracle, 1e-12 * (s.p.abs() + 1.0) / scenario.mass));
    }
    checks.push(Check::new("decay rate vs flux quadrature (relative)", worst, 1e-8));

    let mut worst = 0.0f64;
    for s in &states {
        let g = scenario.potential.gaussian_force_moments(s.q, s.qq).map_err(ExperimentError::from)?;
        let slope = quadrature_expectation(Expectation::Slope, &scenario.potential, s.q, s.qq)?;
        let curv = quadrature_expectation(Expectation::Curvature, &scenario.potential, s.q, s.qq)?;
        worst = worst.max(rel(g.mean_slope, slope, 1.0)).max(rel(g.mean_curvature, curv, 1.0));
    }
    checks.push(Check::new("Gaussian force moments vs quadrature", worst, 1e-10));

    let mut worst = 0.0f64;
    for s in &states {
        let (force, k) = closure_terms(s, &scenario.potential, scenario.mode);
        let a = rhs(s, &scenario.potential, &params, scenario.mode);
        let b = matrix_rhs(s, force, k, &params);
        for i in 0..5 {
            worst = worst.max(rel(a[i], b[i], 1.0));
        }
    }
    checks.push(Check::new("moment equations vs matrix form", worst, 1e-12));

    // Single-well runs: RK4 against the exact propagator, and the semigroup.
    let well = *scenario.potential.well();
    let single = PiecewisePotential::single(well.center, well.stiffness, well.offset);
    let s0 = scenario.initial_state(lambda, &scenario.diffusion(lambda)?);
    let controls = IntegrationControls {
        dt: 1e-3,
        t_end: 10.0,
        stride: 1000,
        adaptive: None,
    };
    let series = integrate(&s0, &single, &params, ClosureMode::Centroid, &controls).map_err(ExperimentError::from)?;
    let step = segment_propagator_exact(&well, &params, 1.0);
    let mut exact = s0;
    let mut worst = 0.0f64;
    for s in series.states().iter().skip(1) {
        exact = step.apply(&exact);
        worst = worst.max(moment_error(s, &exact));
    }
    checks.push(Check::new("RK4 vs exact propagator over 10 T (relative)", worst, 1e-8));

    let whole = segment_propagator_exact(&well, &params, 10.0).apply(&s0);
    let mut worst = 0.0f64;
    for k in [10u64, 100, 1000] {
        let composed = segment_propagator_exact(&well, &params, 10.0 / k as f64).power(k).apply(&s0);
        worst = worst.max(moment_error(&composed, &whole));
    }
    checks.push(Check::new("propagator semigroup over k sub-steps", worst, 1e-12));

    let times = [1.0, 5.0, 10.0];
    let mc = langevin_sample(&well, &params, &s0, 2e-3, &times, opts.samples, opts.seed)?;
    let mut worst = 0.0f64;
    for smp in &mc.samples {
        worst = worst.max(smp.max_z(&segment_propagator_exact(&well, &params, smp.t).apply(&s0)));
    }
    checks.push(Check::new("Langevin ensemble vs moments (standard errors)", worst, 3.0));

    if scenario.has_second_well() && scenario.mode == ClosureMode::Centroid {
        let period = centroid_period(&scenario.potential, scenario.mass, s0.q, s0.p)?;
        let free = scenario.params(0.0)?;
        let controls = IntegrationControls {
            dt: 1e-3,
            t_end: 1.5 * period,
            stride: 1,
            adaptive: None,
        };
        let series = integrate(&s0, &scenario.potential, &free, ClosureMode::Centroid, &controls)
            .map_err(ExperimentError::from)?;
        let measured = upward_crossings(&series, s0.q)
            .into_iter()
            .find(|&t| t > 0.5 * period)
            .map_or(f64::INFINITY, |t| rel(t, period, 0.0));
        checks.push(Check::new("frictionless centroid period vs exact orbit (relative)", measured, 1e-6));
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { friction: lambda, checks, passed })
}
