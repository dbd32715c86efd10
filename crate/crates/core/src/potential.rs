//! Piecewise-quadratic potentials built from smoothly joined parabolas.
//!
//! Every piece is stored with a signed stiffness, so wells (`C > 0`) and the
//! inverted barrier (`C < 0`) share one quadratic form
//! `V(q) = V0 + C (q - q0)^2 / 2`. Stiffnesses are mass-weighted (`C = m ω²`,
//! MeV/fm²).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{normal_interval, normal_pdf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("invalid potential: {0}")]
    Domain(String),
}

fn domain<T>(msg: impl Into<String>) -> Result<T, PotentialError> {
    Err(PotentialError::Domain(msg.into()))
}

/// One quadratic piece `V0 + C (q - q0)^2 / 2` on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicSegment {
    pub center: f64,
    pub stiffness: f64,
    pub offset: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ParabolicSegment {
    /// Segment covering the whole real line.
    pub fn unbounded(center: f64, stiffness: f64, offset: f64) -> Self {
        Self {
            center,
            stiffness,
            offset,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn value(&self, q: f64) -> f64 {
        let d = q - self.center;
        self.offset + 0.5 * self.stiffness * d * d
    }

    pub fn slope(&self, q: f64) -> f64 {
        self.stiffness * (q - self.center)
    }

    pub fn curvature(&self) -> f64 {
        self.stiffness
    }

    pub fn is_barrier(&self) -> bool {
        self.stiffness < 0.0
    }
}

/// Physical inputs for the well + barrier construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoParabolaInputs {
    /// Well minimum (fm).
    pub q_a: f64,
    /// Barrier top (fm).
    pub q_b: f64,
    /// Barrier height `V(q_b) - V(q_a)` (MeV).
    pub barrier_height: f64,
    /// Barrier stiffness magnitude (MeV/fm²).
    pub barrier_stiffness: f64,
    /// Well bottom energy (MeV).
    pub v_a: f64,
}

/// A potential made of 1 to 3 quadratic segments tiling the real line with
/// `V` and `V'` continuous at every join.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePotential {
    segments: Vec<ParabolicSegment>,
}

/// Gaussian expectations `E[V'(q)]` and `E[V''(q)]` for `q ~ N(mean, var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianForce {
    pub mean_slope: f64,
    pub mean_curvature: f64,
}

/// Stiffness and join point of a well attached to a barrier of stiffness
/// `c_b` whose top lies `distance` away and `drop` above the well bottom.
fn smooth_join(c_b: f64, distance: f64, drop: f64) -> Option<f64> {
    let denom = c_b * distance * distance - 2.0 * drop;
    if denom > 0.0 {
        Some(2.0 * c_b * drop / denom)
    } else {
        None
    }
}

impl PiecewisePotential {
    /// Single segment over the whole line (harmonic well, inverted barrier, or
    /// free motion when the stiffness is zero).
    pub fn single(center: f64, stiffness: f64, offset: f64) -> Self {
        Self {
            segments: vec![ParabolicSegment::unbounded(center, stiffness, offset)],
        }
    }

    /// Harmonic well at `q_a` smoothly joined to an inverted parabola with its
    /// top at `q_b`.
    pub fn two_parabola(inp: &TwoParabolaInputs) -> Result<Self, PotentialError> {
        let TwoParabolaInputs {
            q_a,
            q_b,
            barrier_height: b,
            barrier_stiffness: c_b,
            v_a,
        } = *inp;
        if ![q_a, q_b, b, c_b, v_a].iter().all(|x| x.is_finite()) {
            return domain("all potential inputs must be finite");
        }
        if q_a >= q_b {
            return domain("q_a < q_b required");
        }
        if b <= 0.0 {
            return domain("barrier height B > 0 required");
        }
        if c_b <= 0.0 {
            return domain("barrier stiffness C_b > 0 required");
        }
        let Some(c_a) = smooth_join(c_b, q_b - q_a, b) else {
            return domain("C_b*(q_b-q_a)^2 <= 2B: no smooth join (well stiffness would be non-positive)");
        };
        let q_t = (q_a * c_a + q_b * c_b) / (c_a + c_b);
        Ok(Self {
            segments: vec![
                ParabolicSegment {
                    center: q_a,
                    stiffness: c_a,
                    offset: v_a,
                    lo: f64::NEG_INFINITY,
                    hi: q_t,
                },
                ParabolicSegment {
                    center: q_b,
                    stiffness: -c_b,
                    offset: v_a + b,
                    lo: q_t,
                    hi: f64::INFINITY,
                },
            ],
        })
    }

    /// Attaches a second well at `q_c` with bottom energy `v_c` to the right
    /// of the barrier of a two-parabola potential.
    pub fn with_second_well(&self, q_c: f64, v_c: f64) -> Result<Self, PotentialError> {
        if self.segments.len() != 2 || !self.segments[1].is_barrier() {
            return domain("second well requires a two-parabola base potential");
        }
        if !q_c.is_finite() || !v_c.is_finite() {
            return domain("q_c and V_c must be finite");
        }
        let barrier = self.segments[1];
        let q_b = barrier.center;
        let c_b = -barrier.stiffness;
        if q_c <= q_b {
            return domain("q_c > q_b required");
        }
        let dv = barrier.offset - v_c;
        if dv <= 0.0 {
            return domain("V(q_b) - V_c > 0 required");
        }
        let Some(c_c) = smooth_join(c_b, q_c - q_b, dv) else {
            return domain("C_b*(q_c-q_b)^2 <= 2*(V(q_b)-V_c): no smooth join for the second well");
        };
        let q_t2 = (q_c * c_c + q_b * c_b) / (c_c + c_b);
        let mut segments = self.segments.clone();
        segments[1].hi = q_t2;
        segments.push(ParabolicSegment {
            center: q_c,
            stiffness: c_c,
            offset: v_c,
            lo: q_t2,
            hi: f64::INFINITY,
        });
        Ok(Self { segments })
    }

    /// Builds a potential from explicit segments, checking the tiling.
    pub fn from_segments(segments: Vec<ParabolicSegment>) -> Result<Self, PotentialError> {
        let (Some(first), Some(last)) = (segments.first(), segments.last()) else {
            return domain("at least one segment required");
        };
        if first.lo != f64::NEG_INFINITY || last.hi != f64::INFINITY {
            return domain("segments must extend to ±infinity");
        }
        for s in &segments {
            if !(s.lo < s.hi) {
                return domain("every segment needs lo < hi");
            }
        }
        for w in segments.windows(2) {
            if w[0].hi != w[1].lo {
                return domain("segments must tile the line without gaps or overlaps");
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[ParabolicSegment] {
        &self.segments
    }

    /// Interior join points in increasing order.
    pub fn joins(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments[..self.segments.len() - 1].iter().map(|s| s.hi)
    }

    /// Index of the segment owning `q`; a join point belongs to the left piece.
    pub fn segment_at(&self, q: f64) -> usize {
        self.segments
            .iter()
            .position(|s| q <= s.hi)
            .unwrap_or(self.segments.len() - 1)
    }

    pub fn segment(&self, q: f64) -> &ParabolicSegment {
        &self.segments[self.segment_at(q)]
    }

    pub fn evaluate(&self, q: f64) -> f64 {
        self.segment(q).value(q)
    }

    pub fn derivative(&self, q: f64) -> f64 {
        self.segment(q).slope(q)
    }

    pub fn curvature(&self, q: f64) -> f64 {
        self.segment(q).curvature()
    }

    /// First well (minimum position of the leftmost segment).
    pub fn well(&self) -> &ParabolicSegment {
        &self.segments[0]
    }

    pub fn barrier(&self) -> Option<&ParabolicSegment> {
        self.segments.iter().find(|s| s.is_barrier())
    }

    /// Barrier top `q_b`, if the potential has a barrier.
    pub fn barrier_top(&self) -> Option<f64> {
        self.barrier().map(|s| s.center)
    }

    /// `B = V(q_b) - V(q_a)`.
    pub fn barrier_height(&self) -> Option<f64> {
        self.barrier().map(|s| s.offset - self.segments[0].offset)
    }

    /// Second well, present only for three-segment potentials.
    pub fn second_well(&self) -> Option<&ParabolicSegment> {
        (self.segments.len() == 3).then(|| &self.segments[2])
    }

    /// Closed-form `E[V'(q)]` and `E[V''(q)]` for `q ~ N(mean, var)`.
    ///
    /// Each segment contributes
    /// `C [(μ - q0) ΔΦ + s (φ(a) - φ(b))]` to the mean slope and `C ΔΦ` to the
    /// mean curvature, where `a`, `b` are the standardized segment bounds.
    pub fn gaussian_force_moments(&self, mean: f64, var: f64) -> Result<GaussianForce, PotentialError> {
        if !(var > 0.0) {
            return domain("Gaussian variance must be positive");
        }
        let s = var.sqrt();
        let mut slope = 0.0;
        let mut curvature = 0.0;
        for seg in &self.segments {
            let a = (seg.lo - mean) / s;
            let b = (seg.hi - mean) / s;
            let weight = normal_interval(a, b);
            let edge = pdf_or_zero(a) - pdf_or_zero(b);
            slope += seg.stiffness * ((mean - seg.center) * weight + s * edge);
            curvature += seg.stiffness * weight;
        }
        Ok(GaussianForce {
            mean_slope: slope,
            mean_curvature: curvature,
        })
    }

    /// Plain-text listing of the segments and joins, 17 significant digits.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "segments {}", self.segments.len());
        for (i, s) in self.segments.iter().enumerate() {
            let _ = writeln!(
                out,
                "segment {i} center={} stiffness={} offset={} lo={} hi={}",
                fmt17(s.center),
                fmt17(s.stiffness),
                fmt17(s.offset),
                fmt17(s.lo),
                fmt17(s.hi)
            );
        }
        for (i, q) in self.joins().enumerate() {
            let _ = writeln!(out, "join {i} q={}", fmt17(q));
        }
        if let (Some(q_b), Some(b)) = (self.barrier_top(), self.barrier_height()) {
            let _ = writeln!(out, "barrier q_b={} B={}", fmt17(q_b), fmt17(b));
        }
        out
    }
}

fn pdf_or_zero(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        normal_pdf(z)
    }
}

/// Formats a float with 17 significant digits (infinities as `inf`/`-inf`).
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}
