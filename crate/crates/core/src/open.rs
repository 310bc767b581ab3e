//! Lindblad master equation with phase noise in the occupations.
//!
//!   dρ/dt = −i[H(t), ρ] − γ/2 Σ_j (n_j²ρ + ρn_j² − 2n_jρn_j)
//!
//! With n₂ = N − n₁ both channels are diagonal, and the dissipator reduces
//! to (Dρ)_{mn} = −γ(m−n)²ρ_{mn} in the Fock basis.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{asymptotic_labels, certify_window, dressed_initial_state, PlzEstimate, RotatingFrame, Sampling, WindowPolicy};
use crate::fock::{self, moments_from_ladder_sums, LMoments, ManyBodyState, Spdm};
use crate::ode::{Dopri5, StepStats};
use crate::protocol::{Mode, SweepProtocol};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
/// Smallest eigenvalue tolerated by the type invariant.
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Below this the propagation is aborted as too loose.
pub const POSITIVITY_ABORT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub n_particles: usize,
    pub rho: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(rho: DMatrix<Complex64>) -> Result<Self> {
        if rho.nrows() != rho.ncols() || rho.nrows() == 0 {
            return Err(Error::InvalidDensityMatrix(format!("shape {}×{}", rho.nrows(), rho.ncols())));
        }
        let dm = DensityMatrix { n_particles: rho.nrows() - 1, rho };
        dm.validate()?;
        Ok(dm)
    }

    pub fn pure(state: &ManyBodyState) -> Self {
        let v = DMatrix::from_column_slice(state.amplitudes.len(), 1, &state.amplitudes);
        DensityMatrix { n_particles: state.n_particles(), rho: &v * v.adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.n_particles + 1
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_mn|² for Hermitian ρ.
        self.rho.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::from(0.5);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checks the type invariants: Hermitian, unit trace, positive.
    pub fn validate(&self) -> Result<()> {
        let h = self.hermiticity_error();
        if !(h <= HERMITIAN_TOL) {
            return Err(Error::InvalidDensityMatrix(format!("not Hermitian (max deviation {h:e})")));
        }
        let tr = self.trace();
        if !((tr - 1.0).abs() <= TRACE_TOL) {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let lmin = self.min_eigenvalue();
        if lmin < -POSITIVITY_TOL {
            return Err(Error::InvalidDensityMatrix(format!("eigenvalue {lmin:e}")));
        }
        Ok(())
    }
}

/// (Dρ)_{mn} = −γ(m−n)²ρ_{mn}.
pub fn dissipator_apply(rho: &DensityMatrix, gamma: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(rho.dim(), rho.dim(), |m, n| {
        let d = m as f64 - n as f64;
        rho.rho[(m, n)] * (-gamma * d * d)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoObservables {
    pub moments: LMoments,
    pub variance: [f64; 3],
    pub spdm: Spdm,
    pub purity: f64,
    pub n1: f64,
    pub n2: f64,
}

fn moments_of(rho: &DMatrix<Complex64>) -> LMoments {
    let d = rho.nrows();
    let n = d - 1;
    let c = fock::ladder_coefficients(n);
    let half = n as f64 / 2.0;
    let (mut lz, mut lz2) = (0.0, 0.0);
    for k in 0..d {
        let m = k as f64 - half;
        let p = rho[(k, k)].re;
        lz += m * p;
        lz2 += m * m * p;
    }
    // c[k] couples k+1 and k.
    let lp: Complex64 = (1..d).map(|k| rho[(k - 1, k)] * c[k - 1]).sum();
    let lp2: Complex64 = (2..d).map(|k| rho[(k - 2, k)] * (c[k - 1] * c[k - 2])).sum();
    moments_from_ladder_sums(n, lp, lp2, lz, lz2)
}

pub fn observables_from_rho(rho: &DensityMatrix) -> Result<RhoObservables> {
    rho.validate()?;
    let moments = moments_of(&rho.rho);
    let (n1, n2) = moments.populations();
    Ok(RhoObservables {
        variance: moments.variance(),
        spdm: moments.spdm(),
        purity: rho.purity(),
        moments,
        n1,
        n2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterSample {
    pub t: f64,
    pub mean: [f64; 3],
    pub variance: [f64; 3],
    pub spdm_eigenvalues: [f64; 2],
    pub purity: f64,
    pub n1: f64,
    pub n2: f64,
    pub trace_drift: f64,
    pub min_eigenvalue: f64,
}

impl MasterSample {
    fn from_rho(t: f64, rho: &DensityMatrix) -> Self {
        let m = moments_of(&rho.rho);
        let (n1, n2) = m.populations();
        MasterSample {
            t,
            mean: m.mean,
            variance: m.variance(),
            spdm_eigenvalues: m.spdm().eigenvalues(),
            purity: rho.purity(),
            n1,
            n2,
            trace_drift: rho.trace() - 1.0,
            min_eigenvalue: rho.min_eigenvalue(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MasterTrajectory {
    pub samples: Vec<MasterSample>,
}

fn packed_index(d: usize, m: usize, n: usize) -> usize {
    m * d - m * (m.saturating_sub(1)) / 2 - m + n
}

fn pack(rho: &DMatrix<Complex64>, frame: &RotatingFrame, t: f64) -> Vec<Complex64> {
    let d = rho.nrows();
    let theta: Vec<f64> = (0..d).map(|k| frame.theta(k, t)).collect();
    let mut y = Vec::with_capacity(d * (d + 1) / 2);
    for m in 0..d {
        for n in m..d {
            y.push(rho[(m, n)] * Complex64::from_polar(1.0, theta[m] - theta[n]));
        }
    }
    y
}

fn unpack(y: &[Complex64], frame: &RotatingFrame, t: f64, d: usize) -> DensityMatrix {
    let theta: Vec<f64> = (0..d).map(|k| frame.theta(k, t)).collect();
    let mut rho = DMatrix::zeros(d, d);
    for m in 0..d {
        for n in m..d {
            let v = y[packed_index(d, m, n)] * Complex64::from_polar(1.0, theta[n] - theta[m]);
            rho[(m, n)] = v;
            rho[(n, m)] = v.conj();
        }
    }
    DensityMatrix { n_particles: d - 1, rho }
}

fn record(traj: &mut MasterTrajectory, t: f64, rho: &DensityMatrix) -> Result<()> {
    let sample = MasterSample::from_rho(t, rho);
    if sample.min_eigenvalue < -POSITIVITY_ABORT {
        return Err(Error::PositivityViolation { t, min_eigenvalue: sample.min_eigenvalue });
    }
    traj.samples.push(sample);
    Ok(())
}

/// Integrates the master equation over the protocol window in the same
/// rotating frame as the closed propagator (the dissipator commutes with
/// it). Only the upper triangle is propagated.
pub fn propagate_master(
    rho0: &DensityMatrix,
    protocol: &SweepProtocol,
    gamma: f64,
    sampling: &Sampling,
) -> Result<(MasterTrajectory, DensityMatrix, StepStats)> {
    protocol.validate()?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be finite and non-negative, got {gamma}")));
    }
    if rho0.n_particles != protocol.n {
        return Err(Error::InvalidArgument(format!(
            "density matrix has N = {} but protocol has N = {}",
            rho0.n_particles, protocol.n
        )));
    }
    rho0.validate()?;
    let d = protocol.n + 1;
    let frame = RotatingFrame::new(protocol);
    let mut w = vec![Complex64::new(0.0, 0.0); protocol.n];
    let mut full = vec![Complex64::new(0.0, 0.0); d * d];
    let i = Complex64::new(0.0, 1.0);
    let mut rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        frame.couplings(t, &mut w);
        let mut idx = 0;
        for m in 0..d {
            for n in m..d {
                full[m * d + n] = y[idx];
                full[n * d + m] = y[idx].conj();
                idx += 1;
            }
        }
        let r = |a: usize, b: usize| full[a * d + b];
        let mut idx = 0;
        for m in 0..d {
            for n in m..d {
                let mut hr = Complex64::new(0.0, 0.0);
                if m > 0 {
                    hr += w[m - 1] * r(m - 1, n);
                }
                if m + 1 < d {
                    hr += w[m].conj() * r(m + 1, n);
                }
                let mut rh = Complex64::new(0.0, 0.0);
                if n > 0 {
                    rh += r(m, n - 1) * w[n - 1].conj();
                }
                if n + 1 < d {
                    rh += r(m, n + 1) * w[n];
                }
                let dd = (n - m) as f64;
                dy[idx] = -i * (hr - rh) - y[idx] * (gamma * dd * dd);
                idx += 1;
            }
        }
    };
    let mut solver = Dopri5::new(protocol.tol, protocol.tol);
    let mut t = protocol.t_start;
    let mut y = pack(&rho0.rho, &frame, t);
    let mut traj = MasterTrajectory::default();
    for ts in sampling.times(protocol.t_start, protocol.t_end) {
        if ts < t {
            continue;
        }
        solver.integrate(&mut rhs, t, ts, &mut y)?;
        t = ts;
        record(&mut traj, t, &unpack(&y, &frame, t, d))?;
    }
    solver.integrate(&mut rhs, t, protocol.t_end, &mut y)?;
    let fin = unpack(&y, &frame, protocol.t_end, d);
    let lmin = fin.min_eigenvalue();
    if lmin < -POSITIVITY_ABORT {
        return Err(Error::PositivityViolation { t: protocol.t_end, min_eigenvalue: lmin });
    }
    Ok((traj, fin, solver.stats()))
}

/// (⟨n₁⟩, ⟨n₂⟩) after continuing the sweep to |ε| → ∞ without further
/// noise: each instantaneous eigenstate carries its weight ⟨v|ρ|v⟩ to its
/// asymptotic Fock label.
pub fn asymptotic_populations_rho(rho: &DensityMatrix, protocol: &SweepProtocol, t: f64) -> (f64, f64) {
    let n = protocol.n;
    match asymptotic_labels(n, protocol.j, protocol.g, protocol.offset(t)) {
        None => moments_of(&rho.rho).populations(),
        Some((vectors, labels)) => {
            let (mut total, mut n2) = (0.0, 0.0);
            for k in 0..=n {
                let v = vectors.column(k);
                let mut p = 0.0;
                for a in 0..=n {
                    for b in 0..=n {
                        p += v[a] * v[b] * rho.rho[(a, b)].re;
                    }
                }
                total += p;
                n2 += p * labels[k] as f64;
            }
            (total * n as f64 - n2, n2)
        }
    }
}

/// P on the protocol's own window from the dressed pure start.
pub fn plz_master_window(protocol: &SweepProtocol, gamma: f64) -> Result<f64> {
    let rho0 = DensityMatrix::pure(&dressed_initial_state(protocol)?);
    let (_, fin, _) = propagate_master(&rho0, protocol, gamma, &Sampling::Endpoints)?;
    let (n1, n2) = asymptotic_populations_rho(&fin, protocol, protocol.t_end);
    let occ = match protocol.initial_mode {
        Mode::One => n1,
        Mode::Two => n2,
    };
    Ok((occ / protocol.n as f64).clamp(0.0, 1.0))
}

pub fn plz_master(protocol: &SweepProtocol, gamma: f64) -> Result<PlzEstimate> {
    plz_master_with(protocol, gamma, WindowPolicy::default())
}

pub fn plz_master_with(protocol: &SweepProtocol, gamma: f64, policy: WindowPolicy) -> Result<PlzEstimate> {
    protocol.validate()?;
    certify_window(protocol, policy, |p| plz_master_window(p, gamma))
}
