//! Closed-form propagator for the moment equations inside one segment.
//!
//! With `V'' = C` constant the means obey `x' = A x + b` with
//! `A = [[-λ, 1/m], [-C, -λ]]`, `b = (0, C q0)`, and the covariance matrix
//! obeys `Σ' = A Σ + Σ Aᵀ + 2D`. Writing `A = -λ I + N` with `N² = -(C/m) I`
//! gives `e^{At} = e^{-λt} (cosh(zt) I + sinh(zt)/z N)` where `z² = -C/m`.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

use super::{LindbladParams, MomentState};
use crate::potential::ParabolicSegment;

type Mat5 = SMatrix<f64, 5, 5>;
type Vec5 = SVector<f64, 5>;

/// Affine update `y -> linear * y + offset` of the moment vector
/// `(q, p, qq, pp, pq)` over a time span `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub linear: Mat5,
    pub offset: Vec5,
    pub dt: f64,
}

impl AffineMap {
    pub fn identity() -> Self {
        Self {
            linear: Mat5::identity(),
            offset: Vec5::zeros(),
            dt: 0.0,
        }
    }

    pub fn apply(&self, s: &MomentState) -> MomentState {
        let y = self.linear * Vec5::from(s.to_array()) + self.offset;
        MomentState::from_array(s.t + self.dt, y.into())
    }

    /// Map equivalent to applying `self` first and then `next`.
    pub fn then(&self, next: &AffineMap) -> AffineMap {
        AffineMap {
            linear: next.linear * self.linear,
            offset: next.linear * self.offset + next.offset,
            dt: self.dt + next.dt,
        }
    }

    /// `self` applied `n` times, by repeated squaring.
    pub fn power(&self, mut n: u64) -> AffineMap {
        let mut result = AffineMap::identity();
        let mut base = *self;
        while n > 0 {
            if n & 1 == 1 {
                result = result.then(&base);
            }
            base = base.then(&base);
            n >>= 1;
        }
        result
    }
}

/// `(e^x - 1)` for complex `x` without cancellation near zero.
fn expm1c(x: Complex64) -> Complex64 {
    let (s, c) = x.im.sin_cos();
    let half = (0.5 * x.im).sin();
    Complex64::new(
        libm::expm1(x.re) * c - 2.0 * half * half,
        x.re.exp() * s,
    )
}

/// `∫_0^t e^{r u} du`.
fn exp_integral(r: Complex64, t: f64) -> Complex64 {
    let x = r * t;
    if x == Complex64::new(0.0, 0.0) {
        Complex64::new(t, 0.0)
    } else {
        expm1c(x) / r
    }
}

/// `∫_0^t u^n e^{-a u} du` for `a >= 0`.
fn moment_integral(n: u32, a: f64, t: f64) -> f64 {
    let x = a * t;
    if x < 2.0 {
        // Σ_k (-a)^k t^{k+n+1} / (k! (k+n+1))
        let mut term = t.powi(n as i32 + 1);
        let mut sum = 0.0;
        for k in 0..40u32 {
            let add = term / f64::from(k + n + 1);
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
            term *= -x / f64::from(k + 1);
        }
        sum
    } else {
        // n!/a^{n+1} (1 - e^{-x} Σ_{k<=n} x^k/k!)
        let mut partial = 0.0;
        let mut pow = 1.0;
        let mut fact = 1.0;
        for k in 0..=n {
            if k > 0 {
                pow *= x;
                fact *= f64::from(k);
            }
            partial += pow / fact;
        }
        let n_fact: f64 = (1..=n).map(f64::from).product();
        n_fact / a.powi(n as i32 + 1) * (-(-x).exp() * partial).mul_add(1.0, 1.0)
    }
}

/// Scalar building blocks of the propagator over `dt`.
struct Kernels {
    /// `e^{-λt} cosh(zt)`, `e^{-λt} sinh(zt)/z`
    c: f64,
    s: f64,
    /// Integrals of the two functions above.
    int_c: f64,
    int_s: f64,
    /// `∫ e^{-2λu} c(u)^2`, `∫ e^{-2λu} c(u) s(u)`, `∫ e^{-2λu} s(u)^2`
    int_cc: f64,
    int_cs: f64,
    int_ss: f64,
}

fn kernels(nu: f64, lam: f64, t: f64) -> Kernels {
    if nu == 0.0 {
        let decay = (-lam * t).exp();
        return Kernels {
            c: decay,
            s: decay * t,
            int_c: moment_integral(0, lam, t),
            int_s: moment_integral(1, lam, t),
            int_cc: moment_integral(0, 2.0 * lam, t),
            int_cs: moment_integral(1, 2.0 * lam, t),
            int_ss: moment_integral(2, 2.0 * lam, t),
        };
    }
    let z = Complex64::new(-nu, 0.0).sqrt();
    let l = Complex64::new(lam, 0.0);
    let zt = z * t;
    let decay = (-lam * t).exp();
    let c = decay * zt.cosh().re;
    let s = decay * (zt.sinh() / z).re;

    let e_plus = exp_integral(z - l, t);
    let e_minus = exp_integral(-z - l, t);
    let int_c = (0.5 * (e_plus + e_minus)).re;
    let int_s = ((e_plus - e_minus) / (2.0 * z)).re;

    let two = Complex64::new(2.0, 0.0);
    let f_plus = exp_integral(two * (z - l), t);
    let f_minus = exp_integral(-two * (z + l), t);
    let j_c = 0.5 * (f_plus + f_minus);
    let j_s = 0.5 * (f_plus - f_minus);
    let j_0 = moment_integral(0, 2.0 * lam, t);
    let int_cc = 0.5 * (j_c.re + j_0);
    let int_cs = (j_s / (2.0 * z)).re;
    let int_ss = ((j_c - j_0) / (2.0 * z * z)).re;
    Kernels {
        c,
        s,
        int_c,
        int_s,
        int_cc,
        int_cs,
        int_ss,
    }
}

/// Exact affine propagator over `dt` for dynamics confined to `seg`.
///
/// Valid as long as the centroid stays inside the segment (centroid closure);
/// on an unbounded single segment it is exact for either closure mode.
pub fn segment_propagator_exact(seg: &ParabolicSegment, p: &LindbladParams, dt: f64) -> AffineMap {
    let m = p.mass;
    let c_k = seg.stiffness;
    let lam = p.friction;
    let k = kernels(c_k / m, lam, dt);

    // M = c I + s N with N = [[0, 1/m], [-C, 0]]
    let (a11, a12, a21, a22) = (k.c, k.s / m, -c_k * k.s, k.c);

    let mut linear = Mat5::zeros();
    linear[(0, 0)] = a11;
    linear[(0, 1)] = a12;
    linear[(1, 0)] = a21;
    linear[(1, 1)] = a22;
    // Σ -> M Σ Mᵀ on (qq, pp, pq)
    linear[(2, 2)] = a11 * a11;
    linear[(2, 3)] = a12 * a12;
    linear[(2, 4)] = 2.0 * a11 * a12;
    linear[(3, 2)] = a21 * a21;
    linear[(3, 3)] = a22 * a22;
    linear[(3, 4)] = 2.0 * a21 * a22;
    linear[(4, 2)] = a11 * a21;
    linear[(4, 3)] = a12 * a22;
    linear[(4, 4)] = a11 * a22 + a12 * a21;

    // Mean inhomogeneity b = (0, C q0) integrated through (I_c I + I_s N).
    let b = c_k * seg.center;
    let mean_q = k.int_s / m * b;
    let mean_p = k.int_c * b;

    // ∫ M(u) 2D M(u)ᵀ du with M(u) = c I + s N (decay folded into the integrals).
    let d = [[2.0 * p.d_qq, 2.0 * p.d_pq], [2.0 * p.d_pq, 2.0 * p.d_pp]];
    let n = [[0.0, 1.0 / m], [-c_k, 0.0]];
    let nd = mat2_mul(&n, &d);
    let dn_t = mat2_mul(&d, &transpose2(&n));
    let ndn_t = mat2_mul(&nd, &transpose2(&n));
    let entry = |i: usize, j: usize| {
        k.int_cc * d[i][j] + k.int_cs * (nd[i][j] + dn_t[i][j]) + k.int_ss * ndn_t[i][j]
    };

    let offset = Vec5::from([mean_q, mean_p, entry(0, 0), entry(1, 1), entry(0, 1)]);
    AffineMap { linear, offset, dt }
}

fn mat2_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn transpose2(a: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rhs, ClosureMode};
    use crate::potential::PiecewisePotential;
    use crate::units::HBAR;
    use std::f64::consts::PI;

    fn params(lam: f64) -> LindbladParams {
        LindbladParams {
            friction: lam,
            d_qq: 0.03 * lam,
            d_pp: 1.7 * lam,
            d_pq: 0.01 * lam,
            mass: 13.57,
            hbar: HBAR,
        }
    }

    fn start() -> MomentState {
        MomentState { t: 0.0, q: 10.5, p: 12.0, qq: 0.44, pp: 24.0, pq: 0.3 }
    }

    #[test]
    fn moment_integral_branches_agree() {
        for n in 0..3 {
            for &(a, t) in &[(0.0, 2.0), (0.1, 3.0), (1.0, 1.999), (1.0, 2.001), (5.0, 3.0)] {
                // Simpson reference
                let steps = 20_000;
                let h = t / steps as f64;
                let f = |u: f64| u.powi(n as i32) * (-a * u).exp();
                let mut sum = f(0.0) + f(t);
                for i in 1..steps {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    sum += w * f(i as f64 * h);
                }
                let want = sum * h / 3.0;
                let got = moment_integral(n, a, t);
                assert!((got - want).abs() < 1e-12 * want.abs().max(1e-300), "n={n} a={a} t={t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn zero_step_is_identity() {
        for c in [4.0, -5.0, 0.0] {
            let seg = ParabolicSegment::unbounded(10.0, c, 0.0);
            let map = segment_propagator_exact(&seg, &params(0.2), 0.0);
            let s = map.apply(&start());
            assert_eq!(s.to_array(), start().to_array());
        }
    }

    #[test]
    fn harmonic_period_returns_means() {
        let seg = ParabolicSegment::unbounded(10.0, 4.0, 0.0);
        let p = LindbladParams::conservative(13.57, HBAR);
        let period = 2.0 * PI / (4.0f64 / 13.57).sqrt();
        let map = segment_propagator_exact(&seg, &p, period);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((map.linear[(i, j)] - want).abs() < 1e-12);
            }
        }
        assert!(map.offset[0].abs() < 1e-12 && map.offset[1].abs() < 1e-12);
    }

    #[test]
    fn barrier_grows_exponentially() {
        let seg = ParabolicSegment::unbounded(13.0, -5.0, 10.0);
        let p = LindbladParams::conservative(13.57, HBAR);
        let kappa = (5.0f64 / 13.57).sqrt();
        // Start on the unstable manifold: p = m κ (q - q_b).
        let s0 = MomentState { t: 0.0, q: 13.1, p: 13.57 * kappa * 0.1, qq: 0.4, pp: 30.0, pq: 0.0 };
        for t in [1.0, 5.0, 10.0] {
            let s = segment_propagator_exact(&seg, &p, t).apply(&s0);
            let want = 0.1 * (kappa * t).exp();
            assert!(((s.q - 13.0) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn semigroup_property() {
        for c in [4.0, -5.0, 0.0] {
            let seg = ParabolicSegment::unbounded(10.0, c, 1.0);
            let p = params(0.15);
            let whole = segment_propagator_exact(&seg, &p, 3.0).apply(&start());
            for k in [2u64, 7, 64] {
                let piece = segment_propagator_exact(&seg, &p, 3.0 / k as f64);
                let composed = piece.power(k).apply(&start());
                for (a, b) in whole.to_array().iter().zip(composed.to_array()) {
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "C={c} k={k}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn derivative_at_zero_matches_rhs() {
        for c in [4.0, -5.0, 0.0] {
            let v = PiecewisePotential::single(10.0, c, 0.0);
            let seg = v.segments()[0];
            let p = params(0.4);
            let s0 = start();
            let h = 1e-5;
            let plus = segment_propagator_exact(&seg, &p, h).apply(&s0).to_array();
            let minus_map = segment_propagator_exact(&seg, &p, 2.0 * h).apply(&s0).to_array();
            let d = rhs(&s0, &v, &p, ClosureMode::Centroid);
            let y0 = s0.to_array();
            for i in 0..5 {
                // second-order one-sided difference
                let fd = (-3.0 * y0[i] + 4.0 * plus[i] - minus_map[i]) / (2.0 * h);
                assert!((fd - d[i]).abs() < 1e-6 * d[i].abs().max(1.0), "C={c} i={i}: {fd} vs {}", d[i]);
            }
        }
    }
}
