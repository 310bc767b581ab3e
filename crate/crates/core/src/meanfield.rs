//! Single-trajectory mean-field dynamics: the two-mode Gross-Pitaevskii
//! equation and the (optionally dephased) Bloch equations.
//!
//! Sign convention matches the many-body Hamiltonian: mode 1 carries −ε(t).
//!
//!   i dψ₁/dt = (−ε + g|ψ₁|²) ψ₁ − J ψ₂
//!   i dψ₂/dt = (+ε + g|ψ₂|²) ψ₂ − J ψ₁
//!
//! Bloch vector: s_x = Re ψ₁*ψ₂, s_y = −Im ψ₁*ψ₂, s_z = (|ψ₂|² − |ψ₁|²)/2.
//! Without dephasing ds/dt = ∇E × s with E(s) = 2εs_z − 2Js_x + g s_z².

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{certify_window, PlzEstimate, Sampling, WindowPolicy};
use crate::ode::{Dopri5, FixedDopri5, StepStats};
use crate::protocol::{Mode, SweepProtocol};
use crate::spectra::{mean_field_energy, stationary_points, Stability, BLOCH_RADIUS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub psi: [Complex64; 2],
}

impl MeanFieldState {
    pub fn new(psi1: Complex64, psi2: Complex64) -> Self {
        MeanFieldState { psi: [psi1, psi2] }
    }

    /// Everything in `mode`.
    pub fn pole(mode: Mode) -> Self {
        let (one, zero) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        match mode {
            Mode::One => MeanFieldState::new(one, zero),
            Mode::Two => MeanFieldState::new(zero, one),
        }
    }

    /// ψ = (cos θ/2, sin θ/2 · e^{−iφ}).
    pub fn coherent(theta: f64, phi: f64) -> Self {
        MeanFieldState::new(
            Complex64::new((theta / 2.0).cos(), 0.0),
            Complex64::from_polar((theta / 2.0).sin(), -phi),
        )
    }

    /// Pure state with Bloch vector `s` (‖s‖ is normalized to 1/2).
    pub fn from_bloch(s: [f64; 3]) -> Self {
        let r = norm3(s);
        let cos_theta = (-s[2] / r).clamp(-1.0, 1.0);
        MeanFieldState::coherent(cos_theta.acos(), s[1].atan2(s[0]))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi[0].norm_sqr() + self.psi[1].norm_sqr()
    }

    pub fn bloch(&self) -> [f64; 3] {
        let c = self.psi[0].conj() * self.psi[1];
        [c.re, -c.im, 0.5 * (self.psi[1].norm_sqr() - self.psi[0].norm_sqr())]
    }

    /// (|ψ₁|², |ψ₂|²).
    pub fn populations(&self) -> (f64, f64) {
        (self.psi[0].norm_sqr(), self.psi[1].norm_sqr())
    }
}

pub(crate) fn norm3(s: [f64; 3]) -> f64 {
    (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
}

/// GPE right-hand side on the flat layout [ψ₁, ψ₂].
#[inline]
pub fn gpe_rhs(eps: f64, j: f64, g: f64, psi: &[Complex64], dpsi: &mut [Complex64]) {
    let minus_i = Complex64::new(0.0, -1.0);
    let (p1, p2) = (psi[0], psi[1]);
    dpsi[0] = minus_i * ((-eps + g * p1.norm_sqr()) * p1 - j * p2);
    dpsi[1] = minus_i * ((eps + g * p2.norm_sqr()) * p2 - j * p1);
}

/// Damped Bloch right-hand side.
#[inline]
pub fn bloch_rhs(eps: f64, j: f64, g: f64, gamma: f64, s: &[f64], ds: &mut [f64]) {
    ds[0] = -2.0 * eps * s[1] - 2.0 * g * s[1] * s[2] - gamma * s[0];
    ds[1] = 2.0 * j * s[2] + 2.0 * eps * s[0] + 2.0 * g * s[0] * s[2] - gamma * s[1];
    ds[2] = -2.0 * j * s[1];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSample {
    pub t: f64,
    pub s: [f64; 3],
    /// |ψ₁|² + |ψ₂|² − 1 (GPE) or 2‖s‖ − 1 (Bloch).
    pub norm_drift: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldTrajectory {
    pub samples: Vec<MeanFieldSample>,
}

/// Integrate the GPE over the protocol window.
pub fn propagate_gpe(
    state: &MeanFieldState,
    protocol: &SweepProtocol,
    sampling: &Sampling,
) -> Result<(MeanFieldTrajectory, MeanFieldState)> {
    let mut traj = MeanFieldTrajectory::default();
    let times = sampling.times(protocol.t_start, protocol.t_end);
    let (fin, _) = propagate_gpe_with(state, protocol, &times, |t, st| {
        traj.samples.push(MeanFieldSample { t, s: st.bloch(), norm_drift: st.norm_sqr() - 1.0 });
    })?;
    Ok((traj, fin))
}

pub(crate) fn propagate_gpe_with<F>(
    state: &MeanFieldState,
    protocol: &SweepProtocol,
    times: &[f64],
    mut visit: F,
) -> Result<(MeanFieldState, StepStats)>
where
    F: FnMut(f64, &MeanFieldState),
{
    protocol.validate()?;
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized { norm_sqr: norm, tol: 1e-6 });
    }
    let (alpha, j, g) = (protocol.alpha, protocol.j, protocol.g);
    let mut rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| gpe_rhs(alpha * t, j, g, y, dy);
    let mut solver = Dopri5::new(protocol.tol, protocol.tol);
    let mut y = state.psi.to_vec();
    let mut t = protocol.t_start;
    for &ts in times {
        if ts < t {
            continue;
        }
        solver.integrate(&mut rhs, t, ts, &mut y)?;
        t = ts;
        visit(t, &MeanFieldState::new(y[0], y[1]));
    }
    solver.integrate(&mut rhs, t, protocol.t_end, &mut y)?;
    Ok((MeanFieldState::new(y[0], y[1]), solver.stats()))
}

/// Integrate the damped Bloch equations over the protocol window.
pub fn propagate_bloch_noisy(
    s0: [f64; 3],
    protocol: &SweepProtocol,
    gamma: f64,
    sampling: &Sampling,
) -> Result<(MeanFieldTrajectory, [f64; 3])> {
    protocol.validate()?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be finite and non-negative, got {gamma}")));
    }
    if norm3(s0) > BLOCH_RADIUS + 1e-9 {
        return Err(Error::InvalidArgument("Bloch vector longer than 1/2".into()));
    }
    let (alpha, j, g) = (protocol.alpha, protocol.j, protocol.g);
    let mut rhs = |t: f64, y: &[f64; 3]| {
        let mut dy = [0.0; 3];
        bloch_rhs(alpha * t, j, g, gamma, y, &mut dy);
        dy
    };
    let mut solver = FixedDopri5::<3>::new(protocol.tol, protocol.tol);
    let mut y = s0;
    let mut traj = MeanFieldTrajectory::default();
    let mut t = protocol.t_start;
    for ts in sampling.times(protocol.t_start, protocol.t_end) {
        if ts < t {
            continue;
        }
        solver.integrate(&mut rhs, t, ts, &mut y)?;
        t = ts;
        traj.samples.push(MeanFieldSample { t, s: y, norm_drift: 2.0 * norm3(y) - 1.0 });
    }
    solver.integrate(&mut rhs, t, protocol.t_end, &mut y)?;
    Ok((traj, y))
}

/// Elliptic fixed point on the sphere of radius 1/2 that is continuously
/// connected to the pole of the initial mode, at the protocol start.
pub fn dressed_initial_bloch(protocol: &SweepProtocol) -> Result<[f64; 3]> {
    protocol.validate()?;
    let pole_z = match protocol.initial_mode {
        Mode::One => -BLOCH_RADIUS,
        Mode::Two => BLOCH_RADIUS,
    };
    let pole = [0.0, 0.0, pole_z];
    if protocol.j == 0.0 {
        return Ok(pole);
    }
    let eps = protocol.offset(protocol.t_start);
    let points = stationary_points(eps, protocol.j, protocol.g, BLOCH_RADIUS)?;
    points
        .iter()
        .filter(|p| p.stability == Stability::Elliptic)
        .min_by(|a, b| dist(a.s, pole).total_cmp(&dist(b.s, pole)))
        .map(|p| p.s)
        .ok_or(Error::InvalidArgument("no elliptic fixed point at the window start".into()))
}

pub fn dressed_initial_state(protocol: &SweepProtocol) -> Result<MeanFieldState> {
    Ok(MeanFieldState::from_bloch(dressed_initial_bloch(protocol)?))
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

/// s_z the state would reach as |ε| → ∞.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReadout {
    pub s_z: f64,
    /// False when the action construction failed and the raw s_z was used.
    pub asymptotic: bool,
}

const ORBIT_NODES: usize = 256;

/// Adiabatic-invariant readout of the final s_z.
///
/// At fixed ε the state moves on a level set of E on the sphere of radius
/// r = ‖s‖, around the nearest elliptic fixed point. The area A of the cap
/// enclosed by that orbit is an adiabatic invariant, and as |ε| → ∞ the orbit
/// becomes a circle of latitude around the pole the fixed point tends to, so
/// s_z(∞) = ±(r − A/(2πr)).
pub fn asymptotic_sz(s: [f64; 3], eps: f64, j: f64, g: f64) -> AsymptoticReadout {
    let raw = AsymptoticReadout { s_z: s[2], asymptotic: false };
    let r = norm3(s);
    if j == 0.0 || eps == 0.0 || r < 1e-12 {
        return raw;
    }
    let Ok(points) = stationary_points(eps, j, g, r) else {
        return raw;
    };
    let Some(fp) = points
        .iter()
        .filter(|p| p.stability == Stability::Elliptic)
        .min_by(|a, b| dist(a.s, s).total_cmp(&dist(b.s, s)))
    else {
        return raw;
    };
    // the fixed point must sit clearly in one hemisphere to name its pole
    if fp.s[2].abs() < 0.5 * r {
        return raw;
    }
    let pole = fp.s[2].signum();
    let n = [fp.s[0] / r, fp.s[1] / r, fp.s[2] / r];
    let cos_chi0 = ((s[0] * n[0] + s[1] * n[1] + s[2] * n[2]) / r).clamp(-1.0, 1.0);
    let chi0 = cos_chi0.acos();
    if chi0 < 1e-9 {
        let area = std::f64::consts::PI * r * r * chi0 * chi0;
        return AsymptoticReadout { s_z: pole * (r - area / (2.0 * std::f64::consts::PI * r)), asymptotic: true };
    }
    match cap_area(s, r, n, eps, j, g) {
        Some(area) => AsymptoticReadout {
            s_z: pole * (r - area / (2.0 * std::f64::consts::PI * r)),
            asymptotic: true,
        },
        None => raw,
    }
}

/// Area of the cap around axis `n` bounded by the energy level set through `s`.
fn cap_area(s: [f64; 3], r: f64, n: [f64; 3], eps: f64, j: f64, g: f64) -> Option<f64> {
    // orthonormal frame (e1, e2) perpendicular to n
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = normalize(cross(helper, n));
    let e2 = cross(n, e1);
    let point = |chi: f64, phi: f64| -> [f64; 3] {
        let (sc, cc) = chi.sin_cos();
        let (sp, cp) = phi.sin_cos();
        std::array::from_fn(|k| r * (cc * n[k] + sc * (cp * e1[k] + sp * e2[k])))
    };
    let energy = |p: [f64; 3]| mean_field_energy(p, eps, j, g);
    let e0 = energy(s);
    let proj = |v: [f64; 3], e: [f64; 3]| v[0] * e[0] + v[1] * e[1] + v[2] * e[2];
    let phi0 = proj(s, e2).atan2(proj(s, e1));
    let mut chi = (proj(s, n) / r).clamp(-1.0, 1.0).acos();
    let mut total = 0.0;
    let dphi = 2.0 * std::f64::consts::PI / ORBIT_NODES as f64;
    for k in 0..ORBIT_NODES {
        let phi = phi0 + k as f64 * dphi;
        let mut converged = false;
        for _ in 0..50 {
            let p = point(chi, phi);
            let f = energy(p) - e0;
            let grad = [-2.0 * j, 0.0, 2.0 * eps + 2.0 * g * p[2]];
            let (sc, cc) = chi.sin_cos();
            let (sp, cp) = phi.sin_cos();
            let dp: [f64; 3] = std::array::from_fn(|m| r * (-sc * n[m] + cc * (cp * e1[m] + sp * e2[m])));
            let df = proj(grad, dp);
            if df.abs() < 1e-300 {
                return None;
            }
            // energies are only known to a few ulps of |E|, which bounds how
            // well χ can be resolved on small orbits
            if f.abs() <= 8.0 * f64::EPSILON * (e0.abs() + 1.0) {
                converged = true;
                break;
            }
            let step = f / df;
            chi -= step;
            if !(0.0..std::f64::consts::PI).contains(&chi) {
                return None;
            }
            if step.abs() < 1e-13 + 1e-10 * chi {
                converged = true;
                break;
            }
        }
        if !converged {
            return None;
        }
        total += r * r * (1.0 - chi.cos()) * dphi;
    }
    Some(total)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let l = norm3(v);
    [v[0] / l, v[1] / l, v[2] / l]
}

/// Survival probability of `mode` from a final s_z (populations 1/2 ∓ s_z).
pub fn survival_from_sz(s_z: f64, mode: Mode) -> f64 {
    match mode {
        Mode::One => 0.5 - s_z,
        Mode::Two => 0.5 + s_z,
    }
}

/// P on the protocol's own window: dressed start, adiabatic-invariant readout.
pub fn plz_mean_field_window(protocol: &SweepProtocol, gamma: f64) -> Result<f64> {
    let s0 = dressed_initial_bloch(protocol)?;
    // The Bloch form is the same flow as the GPE for γ = 0 but keeps the
    // radius better under the integrator.
    let s_end = propagate_bloch_noisy(s0, protocol, gamma, &Sampling::Endpoints)?.1;
    let readout = asymptotic_sz(s_end, protocol.offset(protocol.t_end), protocol.j, protocol.g);
    Ok(survival_from_sz(readout.s_z, protocol.initial_mode).clamp(0.0, 1.0))
}

/// Mean-field LZ probability of the initial mode, window certified by doubling.
pub fn plz_mean_field(protocol: &SweepProtocol, gamma: f64) -> Result<PlzEstimate> {
    plz_mean_field_with(protocol, gamma, WindowPolicy::default())
}

pub fn plz_mean_field_with(protocol: &SweepProtocol, gamma: f64, policy: WindowPolicy) -> Result<PlzEstimate> {
    protocol.validate()?;
    certify_window(protocol, policy, |p| plz_mean_field_window(p, gamma))
}

/// exp(−πJ²/α).
pub fn analytic_plz_linear(j: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    Ok((-std::f64::consts::PI * j * j / alpha).exp())
}
