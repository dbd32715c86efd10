use std::io::{self, Write};

use super::MomentState;
use crate::potential::fmt17;

/// Recorded trajectory plus optional per-sample observables.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    states: Vec<MomentState>,
    tunneling: Option<Vec<f64>>,
    decay_rate: Option<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(states: Vec<MomentState>) -> Self {
        assert!(!states.is_empty(), "a time series holds at least the initial state");
        Self {
            states,
            tunneling: None,
            decay_rate: None,
        }
    }

    pub fn states(&self) -> &[MomentState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &MomentState {
        &self.states[0]
    }

    pub fn last(&self) -> &MomentState {
        self.states.last().expect("non-empty")
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.t)
    }

    pub fn tunneling(&self) -> Option<&[f64]> {
        self.tunneling.as_deref()
    }

    pub fn decay_rate(&self) -> Option<&[f64]> {
        self.decay_rate.as_deref()
    }

    /// Attaches the `P` and `Gamma_f` columns; both must match the state count.
    pub fn with_observables(mut self, tunneling: Vec<f64>, decay_rate: Vec<f64>) -> Self {
        assert_eq!(tunneling.len(), self.states.len());
        assert_eq!(decay_rate.len(), self.states.len());
        self.tunneling = Some(tunneling);
        self.decay_rate = Some(decay_rate);
        self
    }

    /// Writes `t,sigma_q,sigma_p,sigma_qq,sigma_pp,sigma_pq[,P,Gamma_f]` with
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let with_obs = self.tunneling.is_some();
        write!(w, "t,sigma_q,sigma_p,sigma_qq,sigma_pp,sigma_pq")?;
        if with_obs {
            write!(w, ",P,Gamma_f")?;
        }
        writeln!(w)?;
        for (i, s) in self.states.iter().enumerate() {
            write!(
                w,
                "{},{},{},{},{},{}",
                fmt17(s.t),
                fmt17(s.q),
                fmt17(s.p),
                fmt17(s.qq),
                fmt17(s.pp),
                fmt17(s.pq)
            )?;
            if let (Some(p), Some(g)) = (&self.tunneling, &self.decay_rate) {
                write!(w, ",{},{}", fmt17(p[i]), fmt17(g[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
