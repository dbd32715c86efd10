//! Property and invariant checks that cut across modules.

use proptest::prelude::*;

use lindblad_tunnel::config::ScenarioConfig;
use lindblad_tunnel::dynamics::{
    integrate, rhs, segment_propagator_exact, uncertainty_rate, ClosureMode, IntegrationControls, LindbladParams,
    MomentState,
};
use lindblad_tunnel::experiment::{rwa_diffusion, upward_crossings, Scenario};
use lindblad_tunnel::observables::{tunneling_probability, wigner_density};
use lindblad_tunnel::potential::{PiecewisePotential, TwoParabolaInputs};
use lindblad_tunnel::units::HBAR;
use lindblad_tunnel::validation::{
    centroid_period, integrate_adaptive, langevin_sample, moment_error, quadrature_expectation, Expectation,
};

const M: f64 = 13.57;

fn controls(dt: f64, t_end: f64, stride: usize) -> IntegrationControls {
    IntegrationControls {
        dt,
        t_end,
        stride,
        adaptive: None,
    }
}

fn rwa_params(lambda: f64, mass: f64, stiffness: f64) -> LindbladParams {
    let d = rwa_diffusion(lambda, mass, stiffness, HBAR).unwrap();
    LindbladParams {
        friction: lambda,
        d_qq: d.d_qq,
        d_pp: d.d_pp,
        d_pq: d.d_pq,
        mass,
        hbar: HBAR,
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-12)
}

/// Two- or three-parabola potentials with valid joins.
fn potentials() -> impl Strategy<Value = PiecewisePotential> {
    (-5.0..5.0f64, 1.0..6.0f64, 2.0..30.0f64, 0.5..8.0f64, 0.0..1.0f64, prop::option::of(1.5..4.0f64))
        .prop_filter_map("invalid join", |(q_a, gap, b, c_b, frac, right)| {
            // Keep C_b gap² > 2B so the left join exists.
            let c_b = c_b.max(2.0 * b / (gap * gap) * 1.05);
            let v = PiecewisePotential::two_parabola(&TwoParabolaInputs {
                q_a,
                q_b: q_a + gap,
                barrier_height: b,
                barrier_stiffness: c_b,
                v_a: 0.0,
            })
            .ok()?;
            match right {
                None => Some(v),
                Some(r) => v.with_second_well(q_a + gap + r * gap, frac * b).ok(),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gaussian_force_matches_quadrature(v in potentials(), at in -0.5..1.5f64, var in 0.01..10.0f64) {
        let joins: Vec<f64> = v.joins().collect();
        let mean = joins[0] + at * (joins[joins.len() - 1] - joins[0] + 2.0);
        let g = v.gaussian_force_moments(mean, var).unwrap();
        let slope = quadrature_expectation(Expectation::Slope, &v, mean, var).unwrap();
        let curv = quadrature_expectation(Expectation::Curvature, &v, mean, var).unwrap();
        // Slopes can pass through zero, so compare against the force scale.
        let scale = v.segments().iter().map(|s| s.curvature().abs()).fold(0.0, f64::max) * var.sqrt();
        prop_assert!((g.mean_slope - slope).abs() <= 1e-9 * slope.abs().max(scale), "{} vs {}", g.mean_slope, slope);
        prop_assert!((g.mean_curvature - curv).abs() <= 1e-9 * curv.abs().max(scale), "{} vs {}", g.mean_curvature, curv);
    }

    #[test]
    fn stein_identity(v in potentials(), at in -0.5..1.5f64, var in 0.01..10.0f64) {
        let joins: Vec<f64> = v.joins().collect();
        let mean = joins[0] + at * (joins[joins.len() - 1] - joins[0] + 2.0);
        let sd = var.sqrt();
        let (lo, hi) = (mean - 40.0 * sd, mean + 40.0 * sd);
        let mut cuts = vec![lo];
        cuts.extend(joins.iter().copied().filter(|&j| j > lo && j < hi));
        cuts.push(hi);
        let mut lhs = 0.0;
        for w in cuts.windows(2) {
            let seg = *v.segment(0.5 * (w[0] + w[1]));
            let f = |q: f64| {
                let z = (q - mean) / sd;
                seg.slope(q) * (q - mean) * (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            };
            lhs += integrate_adaptive(f, w[0], w[1], 1e-15, 1e-13).unwrap();
        }
        let rhs = var * quadrature_expectation(Expectation::Curvature, &v, mean, var).unwrap();
        let scale = v.segments().iter().map(|s| s.curvature().abs()).fold(0.0, f64::max) * var;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(scale), "{lhs} vs {rhs}");
    }

    #[test]
    fn wigner_marginal_is_the_probability_gaussian(
        q in -5.0..5.0f64, p in -50.0..50.0f64, qq in 0.05..4.0f64, pp in 1.0..400.0f64, r in -0.9..0.9f64, x in -3.0..3.0f64,
    ) {
        let s = MomentState { t: 0.0, q, p, qq, pp, pq: r * (qq * pp).sqrt() };
        let at = q + x * qq.sqrt();
        let sp = pp.sqrt();
        let marginal = integrate_adaptive(|y| wigner_density(&s, at, y).unwrap(), p - 40.0 * sp, p + 40.0 * sp, 0.0, 1e-13).unwrap();
        // Density of the Gaussian inside P: -dP/dq_b.
        let h = 1e-4 * qq.sqrt();
        let fd = (tunneling_probability(&s, at - h) - tunneling_probability(&s, at + h)) / (2.0 * h);
        let exact = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI * qq).sqrt();
        prop_assert!(close(marginal, exact, 1e-9), "{marginal} vs {exact}");
        prop_assert!(close(fd, exact, 1e-6), "{fd} vs {exact}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn integration_matches_exact_composition(
        c in 0.5..6.0f64, lambda in 0.0..0.5f64, p0 in -20.0..20.0f64, dq in -1.0..1.0f64,
    ) {
        let v = PiecewisePotential::single(10.0, c, 0.0);
        let p = rwa_params(lambda, M, c);
        let qq = HBAR / (2.0 * (M * c).sqrt());
        let s0 = MomentState { t: 0.0, q: 10.0 + dq, p: p0, qq, pp: HBAR * HBAR / (4.0 * qq), pq: 0.0 };
        let series = integrate(&s0, &v, &p, ClosureMode::Centroid, &controls(1e-3, 10.0, 1000)).unwrap();
        let step = segment_propagator_exact(v.well(), &p, 1.0);
        let mut exact = s0;
        for s in &series.states()[1..] {
            exact = step.apply(&exact);
            let err = moment_error(s, &exact);
            prop_assert!(err <= 1e-8, "t = {}: {err:e}", s.t);
        }
    }

    #[test]
    fn uncertainty_is_preserved(frac in 0.0..5.0f64, smeared in any::<bool>()) {
        let sc = Scenario::from_config(&ScenarioConfig::reference()).unwrap();
        // λ_cr of the reference two-parabola potential.
        let lambda = frac * 0.101191;
        let p = sc.params(lambda).unwrap();
        let s0 = sc.initial_state(lambda, &sc.diffusion(lambda).unwrap());
        let mode = if smeared { ClosureMode::GaussianSmeared } else { ClosureMode::Centroid };
        let series = integrate(&s0, &sc.potential, &p, mode, &controls(1e-3, 5.0, 10)).unwrap();
        let floor = HBAR * HBAR / 4.0 * (1.0 - 1e-9);
        for s in series.states() {
            prop_assert!(s.uncertainty_product() >= floor, "t = {}: {}", s.t, s.uncertainty_product());
        }
    }

    #[test]
    fn damped_well_reaches_a_fixed_point(c in 1.0..6.0f64, lambda in 0.3..1.0f64, p0 in -20.0..20.0f64) {
        let v = PiecewisePotential::single(10.0, c, 0.0);
        let p = rwa_params(lambda, M, c);
        let s0 = MomentState { t: 0.0, q: 10.0, p: p0, qq: 0.5, pp: HBAR * HBAR / 2.0, pq: 0.0 };
        let t_end = 40.0 / lambda;
        let series = integrate(&s0, &v, &p, ClosureMode::Centroid, &controls(1e-3, t_end, 100_000)).unwrap();
        let last = series.last();
        let d = rhs(last, &v, &p, ClosureMode::Centroid);
        prop_assert!(d.iter().all(|x| x.abs() < 1e-8), "{d:?}");
        // The stationary width is D_qq/λ up to corrections of order λ/ω.
        let omega = (c / M).sqrt();
        prop_assert!(((last.qq - p.d_qq / lambda) / (p.d_qq / lambda)).abs() <= 2.0 * lambda / omega);
        // Friction on the coordinate pulls the centroid toward the origin.
        let q_star = c * 10.0 / (c + M * lambda * lambda);
        prop_assert!((last.q - q_star).abs() < 1e-6, "{} vs {q_star}", last.q);
    }

    #[test]
    fn covariance_ignores_the_means(c in 0.5..6.0f64, lambda in 0.0..0.5f64, a in -30.0..30.0f64, b in -30.0..30.0f64) {
        let v = PiecewisePotential::single(10.0, c, 0.0);
        let p = rwa_params(lambda, M, c);
        let base = MomentState { t: 0.0, q: 9.0, p: a, qq: 0.4, pp: 30.0, pq: 0.7 };
        let moved = MomentState { q: 11.0, p: b, ..base };
        let ctl = controls(1e-3, 5.0, 100);
        let x = integrate(&base, &v, &p, ClosureMode::Centroid, &ctl).unwrap();
        let y = integrate(&moved, &v, &p, ClosureMode::Centroid, &ctl).unwrap();
        for (s, r) in x.states().iter().zip(y.states()) {
            for (u, w) in [(s.qq, r.qq), (s.pp, r.pp), (s.pq, r.pq)] {
                prop_assert!((u - w).abs() <= 1e-12 * u.abs().max(1.0), "{u} vs {w}");
            }
        }
    }

    #[test]
    fn initial_state_is_stationary_and_minimal(lambda in 0.0..2.0f64, mass in 0.5..50.0f64, c in 0.5..20.0f64) {
        let mut cfg = ScenarioConfig::reference();
        cfg.dynamics.mass = mass;
        let mut sc = Scenario::from_config(&cfg).unwrap();
        sc.potential = PiecewisePotential::single(10.0, c, 0.0);
        let s0 = sc.initial_state(lambda, &sc.diffusion(lambda).unwrap());
        let p = sc.params(lambda).unwrap();
        prop_assert!(close(s0.uncertainty_product(), HBAR * HBAR / 4.0, 1e-12));
        let d = rhs(&s0, &sc.potential, &p, ClosureMode::Centroid);
        prop_assert!(d[2].abs() <= 1e-12 * s0.qq.max(1.0), "{}", d[2]);
        prop_assert!(uncertainty_rate(&s0, &d).abs() <= 1e-9 * HBAR * HBAR, "{}", uncertainty_rate(&s0, &d));
    }
}

#[test]
fn symmetric_double_well_period_matches_exact_orbit() {
    let mut cfg = ScenarioConfig::reference();
    cfg.potential.q_c = Some(16.0);
    cfg.dynamics.t_end = 40.0;
    cfg.dynamics.stride = 1;
    let sc = Scenario::from_config(&cfg).unwrap();
    let run = sc.run(0.0).unwrap();
    let s0 = run.series.first();
    let exact = centroid_period(&sc.potential, sc.mass, s0.q, s0.p).unwrap();
    let ups = upward_crossings(&run.series, sc.barrier_top());
    assert!(ups.len() >= 3, "{ups:?}");
    for w in ups.windows(2) {
        let measured = w[1] - w[0];
        assert!(close(measured, exact, 1e-6), "{measured} vs {exact}");
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    let mut cfg = ScenarioConfig::reference();
    cfg.potential.q_c = Some(16.5);
    cfg.dynamics.t_end = 20.0;
    let sc = Scenario::from_config(&cfg).unwrap();
    for lambda in [0.0, 0.05] {
        let a = sc.run(lambda).unwrap();
        let b = sc.run(lambda).unwrap();
        assert_eq!(a.series.states(), b.series.states());
        // Γ is NaN where undefined, so compare bit patterns.
        let bits = |x: Option<&[f64]>| x.unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.series.tunneling()), bits(b.series.tunneling()));
        assert_eq!(bits(a.series.decay_rate()), bits(b.series.decay_rate()));
        assert_eq!(a.classification, b.classification);
    }
}

#[test]
fn langevin_error_falls_as_inverse_sqrt_n() {
    let sc = Scenario::from_config(&ScenarioConfig::reference()).unwrap();
    let lambda = 0.1;
    let p = sc.params(lambda).unwrap();
    let s0 = sc.initial_state(lambda, &sc.diffusion(lambda).unwrap());
    let well = *sc.potential.well();
    let t = 0.5;
    let exact = segment_propagator_exact(&well, &p, t).apply(&s0).to_array();
    let scale = [s0.qq.sqrt(), s0.pp.sqrt(), s0.qq, s0.pp, (s0.qq * s0.pp).sqrt()];
    // Root-mean-square error over independent seeds, averaged over moments.
    let rms = |n: usize| {
        let reps = 16;
        let mut acc = 0.0;
        for seed in 0..reps {
            let run = langevin_sample(&well, &p, &s0, 2e-3, &[t], n, 1000 + seed).unwrap();
            let m = run.samples[0].moments;
            acc += (0..5).map(|i| ((m[i] - exact[i]) / scale[i]).powi(2)).sum::<f64>() / 5.0;
        }
        (acc / reps as f64).sqrt()
    };
    let ns = [1_000usize, 10_000, 100_000];
    let pts: Vec<(f64, f64)> = ns.iter().map(|&n| ((n as f64).ln(), rms(n).ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
}
