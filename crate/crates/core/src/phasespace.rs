//! SU(2) Husimi function and the truncated phase-space flow, realized as an
//! ensemble of mean-field trajectories sampled from the initial Husimi
//! density.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{clear_of_crossing, Sampling, WindowPolicy};
use crate::fock::{ln_binomial, LMoments, ManyBodyState, Spdm, NORM_TOL};
use crate::meanfield::{
    asymptotic_sz, dressed_initial_bloch, norm3, propagate_bloch_noisy, MeanFieldState,
};
use crate::protocol::{Mode, SweepProtocol};
use crate::spectra::BLOCH_RADIUS;
use crate::stats::mean_and_stderr;

/// Relative residual of ∫Q dΩ accepted by the moment reconstruction.
pub const HUSIMI_NORM_TOL: f64 = 1e-6;

/// Looser per-member tolerance for ensembles; the Monte-Carlo error is
/// orders of magnitude larger than the integration error at this setting.
pub const ENSEMBLE_MEMBER_TOL: f64 = 1e-8;

/// Members used to certify the ensemble window.
pub const PILOT_MEMBERS: usize = 50;

/// Row of |⟨θ,φ|n⟩| weights times the state amplitudes, as polynomial
/// coefficients in e^{iφ}.
fn row_coefficients(theta: f64, state: &ManyBodyState) -> Vec<Complex64> {
    let n_total = state.n_particles();
    let (c, s) = ((theta / 2.0).cos().abs(), (theta / 2.0).sin().abs());
    let (lc, ls) = (c.ln(), s.ln());
    let pow = |k: usize, l: f64| if k == 0 { 0.0 } else { k as f64 * l };
    state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(n, a)| {
            let ln_mag = 0.5 * ln_binomial(n_total, n) + pow(n_total - n, lc) + pow(n, ls);
            a * ln_mag.exp()
        })
        .collect()
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

/// ⟨θ,φ|Ψ⟩ for the coherent state (cos θ/2, sin θ/2 · e^{−iφ})^N.
pub fn coherent_overlap(theta: f64, phi: f64, state: &ManyBodyState) -> Complex64 {
    horner(&row_coefficients(theta, state), Complex64::from_polar(1.0, phi))
}

/// Q(θ,φ) = |⟨θ,φ|Ψ⟩|².
pub fn husimi_q(theta: f64, phi: f64, state: &ManyBodyState) -> f64 {
    coherent_overlap(theta, phi, state).norm_sqr()
}

/// Gauss-Legendre nodes and weights on [−1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n <= 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HusimiGridSpec {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl HusimiGridSpec {
    /// 4N points per axis (at least 16).
    pub fn for_particles(n_particles: usize) -> Self {
        let n = (4 * n_particles).max(16);
        HusimiGridSpec { n_theta: n, n_phi: n }
    }
}

/// Q sampled on Gauss-Legendre nodes in cos θ and uniform nodes in φ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HusimiGrid {
    pub n_particles: usize,
    pub spec: HusimiGridSpec,
    /// θ nodes in (0, π), ascending.
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Quadrature weights in cos θ for each θ node.
    pub theta_weights: Vec<f64>,
    /// Row-major, θ index × φ index.
    pub q: Vec<f64>,
    /// |∫Q dΩ · (N+1)/(4π) − 1|.
    pub normalization_residual: f64,
}

impl HusimiGrid {
    pub fn value(&self, i_theta: usize, i_phi: usize) -> f64 {
        self.q[i_theta * self.spec.n_phi + i_phi]
    }

    /// ∫ f(θ,φ) Q dΩ by the grid quadrature.
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        let dphi = 2.0 * PI / self.spec.n_phi as f64;
        let mut total = 0.0;
        for (i, (&th, &w)) in self.theta.iter().zip(&self.theta_weights).enumerate() {
            let row: f64 = self.phi.iter().enumerate().map(|(k, &ph)| f(th, ph) * self.value(i, k)).sum();
            total += w * dphi * row;
        }
        total
    }

    pub fn normalization(&self) -> f64 {
        self.integrate(|_, _| 1.0)
    }
}

/// Q on a quadrature grid. The normalization residual is recorded rather
/// than enforced; too coarse a grid shows up there.
pub fn husimi(state: &ManyBodyState, spec: HusimiGridSpec) -> Result<HusimiGrid> {
    state.check_normalized(NORM_TOL)?;
    if spec.n_theta == 0 || spec.n_phi == 0 {
        return Err(Error::InvalidArgument("Husimi grid needs at least one node per axis".into()));
    }
    let n_particles = state.n_particles();
    // Ascending θ is descending cos θ.
    let (x, w) = gauss_legendre(spec.n_theta);
    let theta: Vec<f64> = x.iter().rev().map(|xi| xi.acos()).collect();
    let theta_weights: Vec<f64> = w.into_iter().rev().collect();
    let phi: Vec<f64> = (0..spec.n_phi).map(|k| 2.0 * PI * k as f64 / spec.n_phi as f64).collect();
    let q: Vec<f64> = theta
        .par_iter()
        .flat_map_iter(|&th| {
            let coeffs = row_coefficients(th, state);
            phi.iter()
                .map(|&ph| horner(&coeffs, Complex64::from_polar(1.0, ph)).norm_sqr())
                .collect::<Vec<_>>()
        })
        .collect();
    let mut grid = HusimiGrid { n_particles, spec, theta, phi, theta_weights, q, normalization_residual: 0.0 };
    grid.normalization_residual = (grid.normalization() * (n_particles as f64 + 1.0) / (4.0 * PI) - 1.0).abs();
    Ok(grid)
}

/// Point on the sphere of radius 1/2 for the coherent state (θ, φ).
pub fn bloch_point(theta: f64, phi: f64) -> [f64; 3] {
    [
        BLOCH_RADIUS * theta.sin() * phi.cos(),
        BLOCH_RADIUS * theta.sin() * phi.sin(),
        -BLOCH_RADIUS * theta.cos(),
    ]
}

/// ⟨L⟩ = (N+1)(N+2)/(4π) ∫ s(θ,φ) Q dΩ.
pub fn reconstruct_bloch_from_husimi(grid: &HusimiGrid) -> Result<[f64; 3]> {
    if !(grid.normalization_residual <= HUSIMI_NORM_TOL) {
        return Err(Error::InvalidArgument(format!(
            "Husimi grid normalization residual {:e} exceeds {:e}; refine the grid",
            grid.normalization_residual, HUSIMI_NORM_TOL
        )));
    }
    let nf = grid.n_particles as f64;
    let prefactor = (nf + 1.0) * (nf + 2.0) / (4.0 * PI);
    Ok(std::array::from_fn(|k| prefactor * grid.integrate(|th, ph| bloch_point(th, ph)[k])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub n_particles: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub members: Vec<MeanFieldState>,
}

fn sample_member(n_particles: usize, seed: u64, mode: Mode) -> MeanFieldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = 2.0 * PI * rng.random::<f64>();
    let v = 1.0 - rng.random::<f64>();
    let c2 = v.powf(1.0 / (n_particles as f64 + 1.0));
    let theta = 2.0 * c2.sqrt().clamp(0.0, 1.0).acos();
    let theta = match mode {
        Mode::One => theta,
        Mode::Two => PI - theta,
    };
    MeanFieldState::coherent(theta, phi)
}

/// Samples of the Husimi density of the Fock state with all N particles in
/// `mode`: φ uniform, cos²(θ/2) = v^{1/(N+1)} for mode 1 (mirrored for mode 2).
pub fn sample_initial_ensemble(n_particles: usize, members: usize, seed: u64, mode: Mode) -> Result<Ensemble> {
    if n_particles == 0 || members == 0 {
        return Err(Error::InvalidArgument("ensemble needs N ≥ 1 and M ≥ 1".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..members).map(|_| master.next_u64()).collect();
    let members = seeds.iter().map(|&s| sample_member(n_particles, s, mode)).collect();
    Ok(Ensemble { n_particles, master_seed: seed, seeds, members })
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn moments(&self) -> LMoments {
        let blochs: Vec<[f64; 3]> = self.members.iter().map(|m| m.bloch()).collect();
        bloch_moments(&blochs, self.n_particles)
    }

    pub fn spdm(&self) -> Spdm {
        self.moments().spdm()
    }

    /// Rigidly rotates the ensemble so that the pole of the protocol's
    /// initial mode lands on the dressed fixed point at the window start.
    pub fn dressed(&self, protocol: &SweepProtocol) -> Result<Ensemble> {
        let rotate = dressing_rotation(protocol)?;
        let members = self.members.iter().map(|m| MeanFieldState::from_bloch(rotate(m.bloch()))).collect();
        Ok(Ensemble { members, ..self.clone() })
    }
}

fn dressing_rotation(protocol: &SweepProtocol) -> Result<impl Fn([f64; 3]) -> [f64; 3]> {
    let pole = match protocol.initial_mode {
        Mode::One => [0.0, 0.0, -1.0],
        Mode::Two => [0.0, 0.0, 1.0],
    };
    let fp = dressed_initial_bloch(protocol)?;
    let r = norm3(fp);
    let target = [fp[0] / r, fp[1] / r, fp[2] / r];
    // Rodrigues rotation about pole × target.
    let axis = [
        pole[1] * target[2] - pole[2] * target[1],
        pole[2] * target[0] - pole[0] * target[2],
        pole[0] * target[1] - pole[1] * target[0],
    ];
    let sin = norm3(axis);
    let cos = pole[2] * target[2];
    let k = if sin > 0.0 { [axis[0] / sin, axis[1] / sin, axis[2] / sin] } else { [0.0; 3] };
    Ok(move |v: [f64; 3]| {
        let kv = [k[1] * v[2] - k[2] * v[1], k[2] * v[0] - k[0] * v[2], k[0] * v[1] - k[1] * v[0]];
        let kdot = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
        std::array::from_fn(|i| v[i] * cos + kv[i] * sin + k[i] * kdot * (1.0 - cos))
    })
}

/// Ensemble moments as N⟨s_k⟩ and N²⟨s_k²⟩, summed in member order.
pub fn bloch_moments(blochs: &[[f64; 3]], n_particles: usize) -> LMoments {
    let nf = n_particles as f64;
    let m = blochs.len() as f64;
    let mut mean = [0.0; 3];
    let mut second = [0.0; 3];
    for s in blochs {
        for k in 0..3 {
            mean[k] += s[k];
            second[k] += s[k] * s[k];
        }
    }
    LMoments {
        n_particles,
        mean: mean.map(|v| nf * v / m),
        second: second.map(|v| nf * nf * v / m),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSample {
    pub t: f64,
    pub moments: LMoments,
    /// N·Δs_k.
    pub deviation: [f64; 3],
    pub spdm_eigenvalues: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    /// Surviving members at the window end.
    pub ensemble: Ensemble,
    /// Indices (into the input ensemble) of members whose integration failed.
    pub failed: Vec<usize>,
    pub samples: Vec<EnsembleSample>,
}

fn member_tolerance(protocol: &SweepProtocol) -> SweepProtocol {
    let mut p = protocol.clone();
    p.tol = p.tol.max(ENSEMBLE_MEMBER_TOL);
    p
}

/// Evolves every member over the protocol window and records ensemble
/// moments at the sampling times. Members run in parallel; reductions are
/// in member order, so results do not depend on the worker count.
pub fn propagate_ensemble(ensemble: &Ensemble, protocol: &SweepProtocol, sampling: &Sampling) -> Result<EnsembleRun> {
    protocol.validate()?;
    let member_protocol = member_tolerance(protocol);
    let results: Vec<Result<(Vec<[f64; 3]>, [f64; 3])>> = ensemble
        .members
        .par_iter()
        .map(|m| {
            let (traj, fin) = propagate_bloch_noisy(m.bloch(), &member_protocol, 0.0, sampling)?;
            Ok((traj.samples.iter().map(|s| s.s).collect(), fin))
        })
        .collect();
    let mut failed = Vec::new();
    let mut ok = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push((i, v)),
            Err(_) => failed.push(i),
        }
    }
    if ok.is_empty() {
        return Err(Error::EnsembleFailed(failed.len()));
    }
    let times = sampling.times(protocol.t_start, protocol.t_end);
    let n_samples = ok[0].1 .0.len();
    let samples = (0..n_samples)
        .map(|k| {
            let blochs: Vec<[f64; 3]> = ok.iter().map(|(_, (traj, _))| traj[k]).collect();
            ensemble_sample(times[k], &blochs, ensemble.n_particles)
        })
        .collect();
    let evolved = Ensemble {
        n_particles: ensemble.n_particles,
        master_seed: ensemble.master_seed,
        seeds: ok.iter().map(|(i, _)| ensemble.seeds[*i]).collect(),
        members: ok.iter().map(|(_, (_, fin))| MeanFieldState::from_bloch(*fin)).collect(),
    };
    Ok(EnsembleRun { ensemble: evolved, failed, samples })
}

fn ensemble_sample(t: f64, blochs: &[[f64; 3]], n_particles: usize) -> EnsembleSample {
    let moments = bloch_moments(blochs, n_particles);
    let deviation = moments.variance().map(f64::sqrt);
    let spdm_eigenvalues = moments.spdm().eigenvalues();
    EnsembleSample { t, moments, deviation, spdm_eigenvalues }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub p: f64,
    pub stderr: f64,
    pub members: usize,
    pub failed: usize,
    /// Window of the full-ensemble run.
    pub t_start: f64,
    pub t_end: f64,
    /// Pilot change of P under the certifying window doubling.
    pub pilot_change: f64,
    /// Standard error of that change from member-wise differences.
    pub pilot_noise: f64,
}

/// Final s_z per member, read out at |ε| → ∞; `None` for failed members.
fn asymptotic_members(members: &[MeanFieldState], protocol: &SweepProtocol) -> Vec<Option<f64>> {
    let eps = protocol.offset(protocol.t_end);
    members
        .par_iter()
        .map(|m| {
            propagate_bloch_noisy(m.bloch(), protocol, 0.0, &Sampling::Endpoints)
                .ok()
                .map(|(_, s)| asymptotic_sz(s, eps, protocol.j, protocol.g).s_z)
        })
        .collect()
}

/// Survival of the initial mode from the Husimi reconstruction
/// ⟨L_z⟩ = (N+2)·⟨s_z⟩, i.e. P = 1/2 ± (N+2)/N·⟨s_z⟩.
fn survival_estimate(sz: &[f64], n_particles: usize, mode: Mode) -> (f64, f64) {
    let (mean, se) = mean_and_stderr(sz);
    let scale = (n_particles as f64 + 2.0) / n_particles as f64;
    let sign = match mode {
        Mode::One => -1.0,
        Mode::Two => 1.0,
    };
    (0.5 + sign * scale * mean, scale * se)
}

/// Semiclassical ensemble LZ probability of the initial mode with its
/// standard error.
///
/// A pilot sub-ensemble certifies the window by doubling. Single members
/// need not converge with the window (their outcome depends on the phase at
/// the crossing), so a doubling is accepted once the change of the pilot
/// mean is below the policy threshold or below three standard errors of the
/// member-wise differences, whichever is larger. The full ensemble then runs
/// on the smaller of the two certified windows.
pub fn plz_ensemble(protocol: &SweepProtocol, members: usize, seed: u64) -> Result<EnsembleEstimate> {
    plz_ensemble_with(protocol, members, seed, WindowPolicy::default())
}

pub fn plz_ensemble_with(
    protocol: &SweepProtocol,
    members: usize,
    seed: u64,
    policy: WindowPolicy,
) -> Result<EnsembleEstimate> {
    protocol.validate()?;
    let base = member_tolerance(protocol);
    let n = protocol.n;
    let mode = protocol.initial_mode;
    let scale = (n as f64 + 2.0) / n as f64;
    let sampled = sample_initial_ensemble(n, members, seed, mode)?;
    let pilot_len = members.min(PILOT_MEMBERS);
    let pilot = Ensemble { members: sampled.members[..pilot_len].to_vec(), ..sampled.clone() };
    let pilot_run = |p: &SweepProtocol| -> Result<Vec<Option<f64>>> {
        let run = asymptotic_members(&pilot.dressed(p)?.members, p);
        if run.iter().all(Option::is_none) {
            return Err(Error::EnsembleFailed(run.len()));
        }
        Ok(run)
    };

    let mut window = clear_of_crossing(&base)?;
    let mut current = pilot_run(&window)?;
    let mut accepted = None;
    let mut last_change = f64::INFINITY;
    for _ in 0..policy.max_doublings {
        let next_window = window.scaled_window(2.0);
        let next = pilot_run(&next_window)?;
        let diffs: Vec<f64> = current
            .iter()
            .zip(&next)
            .filter_map(|(a, b)| Some(b.as_ref()? - a.as_ref()?))
            .collect();
        let (mean, se) = mean_and_stderr(&diffs);
        let (change, noise) = ((scale * mean).abs(), scale * se);
        if change < policy.threshold.max(3.0 * noise) {
            accepted = Some((change, noise));
            break;
        }
        last_change = change;
        window = next_window;
        current = next;
    }
    let Some((pilot_change, pilot_noise)) = accepted else {
        return Err(Error::WindowNotConverged {
            half_width: window.t_end.abs().max(window.t_start.abs()),
            change: last_change,
        });
    };
    let rest = Ensemble { members: sampled.members[pilot_len..].to_vec(), ..sampled.clone() };
    let mut run = current;
    run.extend(asymptotic_members(&rest.dressed(&window)?.members, &window));
    let sz: Vec<f64> = run.iter().flatten().copied().collect();
    let failed = run.len() - sz.len();
    if sz.is_empty() {
        return Err(Error::EnsembleFailed(failed));
    }
    let (p, stderr) = survival_estimate(&sz, n, mode);
    Ok(EnsembleEstimate {
        p,
        stderr,
        members: sz.len(),
        failed,
        t_start: window.t_start,
        t_end: window.t_end,
        pilot_change,
        pilot_noise,
    })
}
