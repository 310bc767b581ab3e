//! Sweep parameters shared by every level of description.
//!
//! Units: ħ = 1 and energies in the same unit as `j`; the offset between the
//! modes is ε(t) = α·t and the per-particle interaction is U = g/N.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which mode holds all particles before the sweep.
///
/// With α > 0 the mode-1 level starts as the upper level and the mode-2 level
/// as the lower one. Serialized as the integer 1 or 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Mode {
    One,
    Two,
}

impl Mode {
    pub fn index(self) -> usize {
        match self {
            Mode::One => 1,
            Mode::Two => 2,
        }
    }

    pub fn other(self) -> Mode {
        match self {
            Mode::One => Mode::Two,
            Mode::Two => Mode::One,
        }
    }

    /// Fock index (mode-2 occupation) of the state with all `n` particles in this mode.
    pub fn fock_index(self, n: usize) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => n,
        }
    }
}

impl TryFrom<i64> for Mode {
    type Error = Error;

    fn try_from(value: i64) -> Result<Self> {
        match value {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            other => Err(Error::InvalidMode(other)),
        }
    }
}

impl From<Mode> for i64 {
    fn from(mode: Mode) -> i64 {
        mode.index() as i64
    }
}

pub const DEFAULT_TOL: f64 = 3e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepProtocol {
    /// Tunneling energy.
    #[serde(rename = "J")]
    pub j: f64,
    /// Macroscopic interaction g = U·N.
    pub g: f64,
    /// Particle number.
    #[serde(rename = "N")]
    pub n: usize,
    /// Sweep rate, ε(t) = α·t.
    pub alpha: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub initial_mode: Mode,
    /// Relative tolerance handed to the adaptive integrators.
    pub tol: f64,
}

impl SweepProtocol {
    /// Protocol with the default symmetric window, initial mode 1 and default tolerance.
    pub fn new(j: f64, g: f64, n: usize, alpha: f64) -> Self {
        let half = default_half_width(j, g, alpha);
        SweepProtocol {
            j,
            g,
            n,
            alpha,
            t_start: -half,
            t_end: half,
            initial_mode: Mode::One,
            tol: DEFAULT_TOL,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.initial_mode = mode;
        self
    }

    pub fn with_window(mut self, t_start: f64, t_end: f64) -> Self {
        self.t_start = t_start;
        self.t_end = t_end;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    /// Per-particle interaction U = g/N.
    pub fn u(&self) -> f64 {
        self.g / self.n as f64
    }

    /// Energy offset ε(t).
    pub fn offset(&self, t: f64) -> f64 {
        self.alpha * t
    }

    /// Same protocol with both window ends scaled by `factor`.
    pub fn scaled_window(&self, factor: f64) -> Self {
        let mut p = self.clone();
        p.t_start *= factor;
        p.t_end *= factor;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProtocol(msg));
        if self.n < 1 {
            return bad("N must be at least 1".into());
        }
        if !(self.j.is_finite() && self.j >= 0.0) {
            return bad(format!("J must be finite and non-negative, got {}", self.j));
        }
        if !self.g.is_finite() || !self.alpha.is_finite() {
            return bad("g and alpha must be finite".into());
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_start < self.t_end) {
            return bad(format!(
                "window must satisfy t_start < t_end, got [{}, {}]",
                self.t_start, self.t_end
            ));
        }
        if !(self.tol > 0.0 && self.tol < 1e-2) {
            return bad(format!("tol must lie in (0, 1e-2), got {}", self.tol));
        }
        Ok(())
    }
}

/// Default half-width T of the window [−T, T]: max(10J, 4|g|, 10)/|α|.
pub fn default_half_width(j: f64, g: f64, alpha: f64) -> f64 {
    (10.0 * j).max(4.0 * g.abs()).max(10.0) / alpha.abs()
}
