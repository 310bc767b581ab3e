//! Schrödinger propagation through a sweep and the observables read from it.
//!
//! Propagation runs in the interaction picture of the diagonal part of H(t):
//! ψ̃_n = e^{iΘ_n(t)} ψ_n with Θ_n = αt²·m + U·m²·t and m = n − N/2. Only the
//! hopping survives, with couplings −J c_n e^{iΔ_n(t)} where
//! Δ_n = αt² + U·t·(2n − 1 − N). The right-hand side then oscillates at
//! roughly 2ε + |g| instead of N·ε, which is what makes long windows affordable.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, moments_unchecked, LMoments, ManyBodyState};
use crate::ode::{Dopri5, StepStats};
use crate::protocol::{Mode, SweepProtocol};

/// When to record observables along a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub enum Sampling {
    /// Only the window endpoints.
    Endpoints,
    /// A uniform grid with the given spacing, always including both endpoints.
    Every(f64),
    /// Exactly these times (those outside the window are dropped).
    At(Vec<f64>),
}

impl Sampling {
    pub fn times(&self, t0: f64, t1: f64) -> Vec<f64> {
        match self {
            Sampling::Endpoints => vec![t0, t1],
            Sampling::Every(dt) => {
                let steps = ((t1 - t0) / dt).ceil().max(1.0) as usize;
                let mut out: Vec<f64> = (0..steps).map(|k| t0 + k as f64 * dt).collect();
                out.push(t1);
                out
            }
            Sampling::At(ts) => {
                let mut out: Vec<f64> = ts.iter().copied().filter(|&t| t >= t0 && t <= t1).collect();
                out.sort_by(f64::total_cmp);
                out.dedup();
                out
            }
        }
    }
}

/// Observables recorded at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub mean: [f64; 3],
    pub variance: [f64; 3],
    /// SPDM eigenvalues, largest first.
    pub spdm_eigenvalues: [f64; 2],
    pub n1: f64,
    pub n2: f64,
    /// ‖ψ‖² − 1, or Tr ρ − 1 for density matrices.
    pub norm_drift: f64,
}

impl Sample {
    pub fn from_moments(t: f64, m: &LMoments, norm_drift: f64) -> Self {
        let (n1, n2) = m.populations();
        Sample {
            t,
            mean: m.mean,
            variance: m.variance(),
            spdm_eigenvalues: m.spdm().eigenvalues(),
            n1,
            n2,
            norm_drift,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn max_abs_norm_drift(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_drift.abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct Propagation {
    pub record: TrajectoryRecord,
    pub final_state: ManyBodyState,
    pub stats: StepStats,
}

/// Interaction-picture data for the closed and open propagators.
#[derive(Clone, Debug)]
pub(crate) struct RotatingFrame {
    pub n: usize,
    pub j: f64,
    pub alpha: f64,
    pub u: f64,
    pub ladder: Vec<f64>,
}

impl RotatingFrame {
    pub fn new(protocol: &SweepProtocol) -> Self {
        RotatingFrame {
            n: protocol.n,
            j: protocol.j,
            alpha: protocol.alpha,
            u: protocol.u(),
            ladder: fock::ladder_coefficients(protocol.n),
        }
    }

    pub fn theta(&self, n: usize, t: f64) -> f64 {
        let m = n as f64 - self.n as f64 / 2.0;
        self.alpha * t * t * m + self.u * m * m * t
    }

    /// Couplings w_n = −J c_n e^{iΔ_n(t)} for n = 1..N, stored at n−1.
    pub fn couplings(&self, t: f64, w: &mut [Complex64]) {
        let base = self.alpha * t * t + self.u * t * (1.0 - self.n as f64);
        let mut phase = Complex64::from_polar(1.0, base);
        let step = Complex64::from_polar(1.0, 2.0 * self.u * t);
        for (k, wk) in w.iter_mut().enumerate() {
            *wk = phase * (-self.j * self.ladder[k]);
            phase *= step;
        }
    }

    pub fn to_lab(&self, t: f64, y: &[Complex64]) -> Vec<Complex64> {
        y.iter()
            .enumerate()
            .map(|(n, c)| c * Complex64::from_polar(1.0, -self.theta(n, t)))
            .collect()
    }

    pub fn to_rotating(&self, t: f64, psi: &[Complex64]) -> Vec<Complex64> {
        psi.iter()
            .enumerate()
            .map(|(n, c)| c * Complex64::from_polar(1.0, self.theta(n, t)))
            .collect()
    }
}

/// Absolute tolerance paired with a relative tolerance for amplitude vectors.
/// Amplitudes live on the unit sphere, so an absolute floor equal to the
/// relative tolerance keeps tiny far-detuned components from setting the step.
pub(crate) fn amplitude_atol(rtol: f64) -> f64 {
    rtol
}

/// Propagate `state` from `protocol.t_start` to `protocol.t_end`, handing the
/// lab-frame state to `visit` at every time of `times` (sorted, inside the window).
pub fn propagate_with<F>(
    state: &ManyBodyState,
    protocol: &SweepProtocol,
    times: &[f64],
    mut visit: F,
) -> Result<(ManyBodyState, StepStats)>
where
    F: FnMut(f64, &ManyBodyState) -> Result<()>,
{
    protocol.validate()?;
    if state.amplitudes.len() != protocol.n + 1 {
        return Err(Error::InvalidArgument(format!(
            "state has dimension {} but N = {}",
            state.amplitudes.len(),
            protocol.n
        )));
    }
    state.check_normalized(fock::NORM_TOL)?;
    let frame = RotatingFrame::new(protocol);
    let mut w = vec![Complex64::new(0.0, 0.0); protocol.n];
    let i = Complex64::new(0.0, 1.0);
    let mut rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        frame.couplings(t, &mut w);
        let d = y.len();
        for n in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            if n > 0 {
                acc += w[n - 1] * y[n - 1];
            }
            if n + 1 < d {
                acc += w[n].conj() * y[n + 1];
            }
            dy[n] = -i * acc;
        }
    };
    let mut solver = Dopri5::new(protocol.tol, amplitude_atol(protocol.tol));
    let mut t = protocol.t_start;
    let mut y = frame.to_rotating(t, &state.amplitudes);
    for &ts in times {
        if ts < t {
            continue;
        }
        solver.integrate(&mut rhs, t, ts, &mut y)?;
        t = ts;
        visit(t, &ManyBodyState { amplitudes: frame.to_lab(t, &y) })?;
    }
    solver.integrate(&mut rhs, t, protocol.t_end, &mut y)?;
    let final_state = ManyBodyState { amplitudes: frame.to_lab(protocol.t_end, &y) };
    Ok((final_state, solver.stats()))
}

/// Solve i dΨ/dt = H(t)Ψ over the protocol window, recording observables.
pub fn propagate_schrodinger(
    state: &ManyBodyState,
    protocol: &SweepProtocol,
    sampling: &Sampling,
) -> Result<Propagation> {
    let times = sampling.times(protocol.t_start, protocol.t_end);
    let mut record = TrajectoryRecord::default();
    let (final_state, stats) = propagate_with(state, protocol, &times, |t, s| {
        let m = moments_unchecked(&s.amplitudes);
        record.samples.push(Sample::from_moments(t, &m, s.norm_sqr() - 1.0));
        Ok(())
    })?;
    Ok(Propagation { record, final_state, stats })
}

/// Eigenvectors of H at offset `eps` (as columns, ascending energy) and the
/// Fock index each one becomes when the sweep continues adiabatically to
/// |ε| → ∞ with the same sign. Eigenvalues of an irreducible tridiagonal
/// matrix never cross, so the k-th level ends in n = k for ε > 0 and in
/// n = N − k for ε < 0.
pub(crate) fn asymptotic_labels(n: usize, j: f64, g: f64, eps: f64) -> Option<(DMatrix<f64>, Vec<usize>)> {
    if j == 0.0 || eps == 0.0 {
        return None;
    }
    let (_, vectors) = fock::hamiltonian_at_offset(n, j, g, eps).eigen();
    let labels = (0..=n).map(|k| if eps > 0.0 { k } else { n - k }).collect();
    Some((vectors, labels))
}

/// Eigenstate of H(t_start) that continues to the Fock state of the initial
/// mode as ε → −∞ (or +∞), i.e. the initial state "dressed" by the coupling.
pub fn dressed_initial_state(protocol: &SweepProtocol) -> Result<ManyBodyState> {
    protocol.validate()?;
    let n0 = protocol.initial_mode.fock_index(protocol.n);
    let eps = protocol.offset(protocol.t_start);
    let Some((vectors, labels)) = asymptotic_labels(protocol.n, protocol.j, protocol.g, eps) else {
        return Ok(ManyBodyState::fock(protocol.n, protocol.initial_mode));
    };
    let k = labels.iter().position(|&l| l == n0).expect("labels are a permutation");
    let col = vectors.column(k);
    let sign = if col[n0] < 0.0 { -1.0 } else { 1.0 };
    Ok(ManyBodyState {
        amplitudes: col.iter().map(|&v| Complex64::from(sign * v)).collect(),
    })
}

/// (⟨n₁⟩, ⟨n₂⟩) the state would reach if the sweep continued from `t` to
/// |ε| → ∞. Falls back to the instantaneous populations for J = 0 or ε(t) = 0.
pub fn asymptotic_populations(state: &ManyBodyState, protocol: &SweepProtocol, t: f64) -> (f64, f64) {
    let n = protocol.n;
    match asymptotic_labels(n, protocol.j, protocol.g, protocol.offset(t)) {
        None => moments_unchecked(&state.amplitudes).populations(),
        Some((vectors, labels)) => {
            let mut n2 = 0.0;
            let mut total = 0.0;
            for k in 0..=n {
                let amp: Complex64 = vectors.column(k).iter().zip(&state.amplitudes).map(|(v, c)| c * *v).sum();
                let p = amp.norm_sqr();
                total += p;
                n2 += p * labels[k] as f64;
            }
            (total * n as f64 - n2, n2)
        }
    }
}

/// Survival fraction of the initially occupied mode.
pub(crate) fn survival(populations: (f64, f64), mode: Mode, n: usize) -> f64 {
    let occ = match mode {
        Mode::One => populations.0,
        Mode::Two => populations.1,
    };
    occ / n as f64
}

/// How the finite window is certified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    /// Largest accepted change of P under one doubling.
    pub threshold: f64,
    pub max_doublings: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy { threshold: 1e-3, max_doublings: 4 }
    }
}

/// A transition probability certified by window doubling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlzEstimate {
    /// Value on the larger of the last two windows.
    pub p: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// |P(2T) − P(T)| for the accepted pair.
    pub change: f64,
    pub doublings: usize,
}

/// The window doubled until both ends satisfy |ε| ≥ 2J + |g|, outside the
/// region where the levels mix. Only there do the dressed start and the
/// asymptotic readout refer to the diabatic states.
pub fn clear_of_crossing(protocol: &SweepProtocol) -> Result<SweepProtocol> {
    if protocol.alpha == 0.0 {
        return Err(Error::InvalidProtocol("a transition probability needs alpha ≠ 0".into()));
    }
    if !(protocol.t_start < 0.0 && protocol.t_end > 0.0) {
        return Err(Error::InvalidProtocol(format!(
            "the window [{}, {}] must contain the crossing at t = 0",
            protocol.t_start, protocol.t_end
        )));
    }
    let reach = 2.0 * protocol.j + protocol.g.abs();
    let mut p = protocol.clone();
    while p.offset(p.t_start).abs().min(p.offset(p.t_end).abs()) < reach {
        p = p.scaled_window(2.0);
    }
    Ok(p)
}

/// Apply the doubling policy to a single-window estimator, starting from the
/// protocol window or from its extension clear of the crossing.
pub fn certify_window<F>(protocol: &SweepProtocol, policy: WindowPolicy, mut estimate: F) -> Result<PlzEstimate>
where
    F: FnMut(&SweepProtocol) -> Result<f64>,
{
    let mut current = clear_of_crossing(protocol)?;
    let mut p = estimate(&current)?;
    let mut change = f64::INFINITY;
    for doubling in 1..=policy.max_doublings {
        let next = current.scaled_window(2.0);
        let q = estimate(&next)?;
        change = (q - p).abs();
        current = next;
        p = q;
        if change < policy.threshold {
            return Ok(PlzEstimate {
                p,
                t_start: current.t_start,
                t_end: current.t_end,
                change,
                doublings: doubling,
            });
        }
    }
    Err(Error::WindowNotConverged {
        half_width: current.t_end.abs().max(current.t_start.abs()),
        change,
    })
}

/// P on the protocol's own window: dressed start, asymptotic readout.
pub fn plz_many_particle_window(protocol: &SweepProtocol) -> Result<f64> {
    let psi0 = dressed_initial_state(protocol)?;
    let (psi, _) = propagate_with(&psi0, protocol, &[], |_, _| Ok(()))?;
    let pops = asymptotic_populations(&psi, protocol, protocol.t_end);
    Ok(survival(pops, protocol.initial_mode, protocol.n).clamp(0.0, 1.0))
}

/// Many-particle LZ probability ⟨n_j(+∞)⟩/⟨n_j(−∞)⟩ for the initial mode j.
pub fn plz_many_particle(protocol: &SweepProtocol) -> Result<PlzEstimate> {
    plz_many_particle_with(protocol, WindowPolicy::default())
}

pub fn plz_many_particle_with(protocol: &SweepProtocol, policy: WindowPolicy) -> Result<PlzEstimate> {
    protocol.validate()?;
    certify_window(protocol, policy, plz_many_particle_window)
}

/// Relative size below which a squeezing denominator counts as zero.
const DENOM_FLOOR: f64 = 1e-12;

/// ξ_N² = ΔL_z² / (⟨n₁⟩⟨n₂⟩/N).
pub fn xi_number(m: &LMoments) -> Result<f64> {
    let (n1, n2) = m.populations();
    let nf = m.n_particles as f64;
    let reference = n1 * n2 / nf;
    if reference <= DENOM_FLOOR * nf {
        return Err(Error::Undefined {
            quantity: "number squeezing",
            reason: "all particles occupy one mode",
        });
    }
    Ok(m.variance()[2] / reference)
}

/// ξ_S² = N ΔL_z² / (⟨L_x⟩² + ⟨L_y⟩²).
pub fn xi_spectroscopic(m: &LMoments) -> Result<f64> {
    let nf = m.n_particles as f64;
    let coherence = m.mean[0] * m.mean[0] + m.mean[1] * m.mean[1];
    if coherence <= DENOM_FLOOR * nf * nf {
        return Err(Error::Undefined {
            quantity: "spectroscopic squeezing",
            reason: "the phase coherence ⟨L_x⟩² + ⟨L_y⟩² vanishes",
        });
    }
    Ok(nf * m.variance()[2] / coherence)
}

pub fn squeezing_number(state: &ManyBodyState) -> Result<f64> {
    xi_number(&fock::moments(state)?)
}

pub fn squeezing_spectroscopic(state: &ManyBodyState) -> Result<f64> {
    xi_spectroscopic(&fock::moments(state)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevivalOptions {
    /// Last time scanned.
    pub horizon: f64,
    /// Spacing of the ξ_S² samples.
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevivalAnalysis {
    /// Interval between the first two spectroscopic-squeezing episodes after
    /// the crossing; `f64::INFINITY` if fewer than two occur before the
    /// horizon, `t_end` when the dynamics is degenerate.
    pub revival_time: f64,
    /// Onset times of the squeezing episodes found.
    pub onsets: Vec<f64>,
    /// ξ_S² never departed from 1 (e.g. g = 0).
    pub degenerate: bool,
}

/// Recurrence time of spectroscopic squeezing after the crossing at t = 0.
///
/// The sweep keeps running (ε = αt) up to the horizon. Sub-threshold windows
/// closer than a quarter of the expected beat period πN/|g| are merged into one
/// episode so that fast ripples do not count as separate revivals.
pub fn revival_time(protocol: &SweepProtocol, options: RevivalOptions) -> Result<RevivalAnalysis> {
    protocol.validate()?;
    if !(options.dt > 0.0) || !(options.horizon > 0.0) {
        return Err(Error::InvalidArgument("revival scan needs dt > 0 and horizon > 0".into()));
    }
    let scan_start = protocol.t_start.max(0.0).min(options.horizon);
    let run = protocol.clone().with_window(protocol.t_start, options.horizon.max(protocol.t_start + options.dt));
    let psi0 = dressed_initial_state(protocol)?;
    let times = Sampling::Every(options.dt).times(scan_start, options.horizon);
    let mut xi: Vec<(f64, Option<f64>)> = Vec::with_capacity(times.len());
    propagate_with(&psi0, &run, &times, |t, s| {
        xi.push((t, xi_spectroscopic(&moments_unchecked(&s.amplitudes)).ok()));
        Ok(())
    })?;

    let degenerate = protocol.g == 0.0 || xi.iter().all(|(_, v)| v.map_or(false, |x| (x - 1.0).abs() < 1e-6));
    if degenerate {
        return Ok(RevivalAnalysis { revival_time: protocol.t_end, onsets: vec![], degenerate: true });
    }

    let merge_gap = 0.25 * std::f64::consts::PI * protocol.n as f64 / protocol.g.abs();
    let mut onsets: Vec<f64> = Vec::new();
    let mut last_squeezed: Option<f64> = None;
    for &(t, v) in &xi {
        if v.map_or(false, |x| x < 1.0) {
            let new_episode = match last_squeezed {
                None => true,
                Some(prev) => t - prev > merge_gap,
            };
            if new_episode {
                onsets.push(t);
            }
            last_squeezed = Some(t);
        }
    }
    let revival_time = if onsets.len() >= 2 { onsets[1] - onsets[0] } else { f64::INFINITY };
    Ok(RevivalAnalysis { revival_time, onsets, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::AngularMomentumOps;

    #[test]
    fn sampling_grids() {
        assert_eq!(Sampling::Endpoints.times(-1.0, 2.0), vec![-1.0, 2.0]);
        let g = Sampling::Every(0.5).times(0.0, 1.2);
        assert_eq!(g, vec![0.0, 0.5, 1.0, 1.2]);
        let a = Sampling::At(vec![3.0, -5.0, 0.5, 0.5]).times(0.0, 4.0);
        assert_eq!(a, vec![0.5, 3.0]);
        assert!(Sampling::At(vec![]).times(0.0, 1.0).is_empty());
    }

    #[test]
    fn rotating_frame_round_trip() {
        let p = SweepProtocol::new(1.0, 2.0, 6, 0.3);
        let f = RotatingFrame::new(&p);
        let psi = ManyBodyState::coherent(6, 1.0, 0.3).amplitudes;
        let back = f.to_lab(7.5, &f.to_rotating(7.5, &psi));
        for (a, b) in psi.iter().zip(&back) {
            assert!((a - b).norm() < 1e-13);
        }
        // Δ_n matches Θ_n − Θ_{n−1}
        let mut w = vec![Complex64::new(0.0, 0.0); 6];
        f.couplings(2.2, &mut w);
        for n in 1..=6 {
            let delta = f.theta(n, 2.2) - f.theta(n - 1, 2.2);
            let expect = Complex64::from_polar(f.ladder[n - 1], delta) * -1.0;
            assert!((w[n - 1] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn no_tunneling_keeps_populations() {
        let p = SweepProtocol::new(0.0, 3.0, 8, 1.0);
        let prop = propagate_schrodinger(&fock::initial_state(&p), &p, &Sampling::Every(1.0)).unwrap();
        for s in &prop.record.samples {
            assert!((s.n1 - 8.0).abs() < 1e-12);
        }
        assert_eq!(plz_many_particle(&p).unwrap().p, 1.0);
    }

    #[test]
    fn dressed_state_is_an_eigenvector() {
        let p = SweepProtocol::new(1.0, -2.0, 7, 0.5).with_mode(Mode::Two);
        let s = dressed_initial_state(&p).unwrap();
        let h = fock::build_hamiltonian(&p, p.t_start);
        let mut hs = vec![Complex64::new(0.0, 0.0); 8];
        h.matvec(&s.amplitudes, &mut hs);
        let e = s.inner(&ManyBodyState { amplitudes: hs.clone() }).re;
        for k in 0..8 {
            assert!((hs[k] - s.amplitudes[k] * e).norm() < 1e-10);
        }
        assert!(s.amplitudes[7].re > 0.99);
        let pops = asymptotic_populations(&s, &p, p.t_start);
        assert!((pops.1 - 7.0).abs() < 1e-10);
    }

    #[test]
    fn squeezing_limits() {
        let coherent = ManyBodyState::coherent(20, 1.1, 0.4);
        assert!((squeezing_number(&coherent).unwrap() - 1.0).abs() < 1e-10);
        let equator = ManyBodyState::coherent(20, std::f64::consts::FRAC_PI_2, 0.0);
        assert!((squeezing_spectroscopic(&equator).unwrap() - 1.0).abs() < 1e-10);
        let mut twin = ManyBodyState::fock(10, Mode::One);
        twin.amplitudes.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        twin.amplitudes[5] = Complex64::new(1.0, 0.0);
        assert_eq!(squeezing_number(&twin).unwrap(), 0.0);
        assert!(matches!(squeezing_spectroscopic(&twin), Err(Error::Undefined { .. })));
        let pole = ManyBodyState::fock(10, Mode::Two);
        assert!(matches!(squeezing_number(&pole), Err(Error::Undefined { .. })));
        // zero variance with coherence
        let mut cat = ManyBodyState::fock(2, Mode::One);
        cat.amplitudes = vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!(matches!(squeezing_spectroscopic(&cat), Err(Error::Undefined { .. })));
    }

    #[test]
    fn norm_conserved() {
        let p = SweepProtocol::new(1.0, 4.0, 12, 0.5).with_window(-10.0, 10.0);
        let prop = propagate_schrodinger(&fock::initial_state(&p), &p, &Sampling::Every(2.0)).unwrap();
        let span = p.t_end - p.t_start;
        assert!(prop.record.max_abs_norm_drift() < 1e-8 * span);
        let ops = AngularMomentumOps::new(12);
        let m = fock::moments(&prop.final_state).unwrap();
        let total: f64 = (0..3).map(|k| m.second[k]).sum();
        assert!((total - ops.casimir()).abs() < 1e-9);
    }

    #[test]
    fn certify_window_reports_non_convergence() {
        let p = SweepProtocol::new(1.0, 0.0, 1, 1.0);
        let mut calls = 0;
        let err = certify_window(&p, WindowPolicy { threshold: 1e-3, max_doublings: 2 }, |_| {
            calls += 1;
            Ok(calls as f64)
        })
        .unwrap_err();
        assert!(matches!(err, Error::WindowNotConverged { .. }));
        let ok = certify_window(&p, WindowPolicy::default(), |q| Ok(1.0 / q.t_end)).unwrap_err();
        assert!(matches!(ok, Error::WindowNotConverged { .. }));
        let est = certify_window(&p, WindowPolicy::default(), |q| Ok(1e-4 / q.t_end)).unwrap();
        assert_eq!(est.doublings, 1);
        assert_eq!(est.t_end, 2.0 * p.t_end);
    }
}
