//! Fock-basis representation of the two-mode system.
//!
//! Basis index `n` is the mode-2 occupation, so `n₁ = N − n`, `n₂ = n` and
//! `L_z = diag(n − N/2)`. With `L₊ = a₂†a₁` the only nonzero ladder elements
//! are `⟨n|L₊|n−1⟩ = c_n = √(n(N−n+1))`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{Mode, SweepProtocol};

/// Tolerance on |‖Ψ‖² − 1| accepted by the observable functions.
pub const NORM_TOL: f64 = 1e-6;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Ladder coefficients c_1..c_N (stored at index n−1).
pub fn ladder_coefficients(n_particles: usize) -> Vec<f64> {
    let nf = n_particles as f64;
    (1..=n_particles)
        .map(|n| {
            let n = n as f64;
            (n * (nf - n + 1.0)).sqrt()
        })
        .collect()
}

/// Real symmetric tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// `off[k]` couples rows k and k+1.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        let d = self.dim();
        for k in 0..d {
            let mut acc = x[k] * self.diag[k];
            if k > 0 {
                acc += x[k - 1] * self.off[k - 1];
            }
            if k + 1 < d {
                acc += x[k + 1] * self.off[k];
            }
            y[k] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for k in 0..d {
            m[(k, k)] = self.diag[k];
            if k + 1 < d {
                m[(k, k + 1)] = self.off[k];
                m[(k + 1, k)] = self.off[k];
            }
        }
        m
    }

    /// Eigenvalues ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_dense()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Eigenvalues ascending with eigenvectors as the matching columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.to_dense());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }
}

/// Tridiagonal data of L_x, L_y, L_z for N particles.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularMomentumOps {
    n_particles: usize,
    /// Diagonal of L_z.
    pub lz: Vec<f64>,
    /// Ladder coefficients c_1..c_N.
    pub ladder: Vec<f64>,
}

impl AngularMomentumOps {
    pub fn new(n_particles: usize) -> Self {
        let half = n_particles as f64 / 2.0;
        AngularMomentumOps {
            n_particles,
            lz: (0..=n_particles).map(|n| n as f64 - half).collect(),
            ladder: ladder_coefficients(n_particles),
        }
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.n_particles + 1
    }

    /// Casimir eigenvalue (N/2)(N/2 + 1).
    pub fn casimir(&self) -> f64 {
        let l = self.n_particles as f64 / 2.0;
        l * (l + 1.0)
    }

    pub fn lx(&self) -> SymTridiagonal {
        SymTridiagonal {
            diag: vec![0.0; self.dim()],
            off: self.ladder.iter().map(|c| c / 2.0).collect(),
        }
    }

    pub fn apply_lx(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.lx().matvec(x, y);
    }

    pub fn apply_ly(&self, x: &[Complex64], y: &mut [Complex64]) {
        let d = self.dim();
        for k in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            if k > 0 {
                acc -= I * (self.ladder[k - 1] / 2.0) * x[k - 1];
            }
            if k + 1 < d {
                acc += I * (self.ladder[k] / 2.0) * x[k + 1];
            }
            y[k] = acc;
        }
    }

    pub fn apply_lz(&self, x: &[Complex64], y: &mut [Complex64]) {
        for k in 0..self.dim() {
            y[k] = x[k] * self.lz[k];
        }
    }

    /// Dense matrices (L_x, L_y, L_z), for oracle checks.
    pub fn dense(&self) -> [DMatrix<Complex64>; 3] {
        let d = self.dim();
        let mut lx = DMatrix::zeros(d, d);
        let mut ly = DMatrix::zeros(d, d);
        let mut lz = DMatrix::zeros(d, d);
        for n in 0..d {
            lz[(n, n)] = Complex64::from(self.lz[n]);
            if n > 0 {
                let c = self.ladder[n - 1] / 2.0;
                lx[(n, n - 1)] = Complex64::from(c);
                lx[(n - 1, n)] = Complex64::from(c);
                ly[(n, n - 1)] = -I * c;
                ly[(n - 1, n)] = I * c;
            }
        }
        [lx, ly, lz]
    }
}

/// H(t) = 2ε(t)L_z − 2J L_x + U L_z², the L-form used for all dynamics.
pub fn build_hamiltonian(protocol: &SweepProtocol, t: f64) -> SymTridiagonal {
    hamiltonian_at_offset(protocol.n, protocol.j, protocol.g, protocol.offset(t))
}

pub fn hamiltonian_at_offset(n_particles: usize, j: f64, g: f64, eps: f64) -> SymTridiagonal {
    let ops = AngularMomentumOps::new(n_particles);
    let u = g / n_particles as f64;
    SymTridiagonal {
        diag: ops.lz.iter().map(|&m| 2.0 * eps * m + u * m * m).collect(),
        off: ops.ladder.iter().map(|c| -j * c).collect(),
    }
}

/// Constant separating the number-operator Hamiltonian from the L-form:
/// H_number = H_L + U·N(N−2)/4.
pub fn number_form_shift(n_particles: usize, g: f64) -> f64 {
    let nf = n_particles as f64;
    g / nf * nf * (nf - 2.0) / 4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManyBodyState {
    pub amplitudes: Vec<Complex64>,
}

impl ManyBodyState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidArgument("state needs at least one amplitude".into()));
        }
        Ok(ManyBodyState { amplitudes })
    }

    /// All `n_particles` in `mode`.
    pub fn fock(n_particles: usize, mode: Mode) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); n_particles + 1];
        amplitudes[mode.fock_index(n_particles)] = Complex64::new(1.0, 0.0);
        ManyBodyState { amplitudes }
    }

    /// SU(2)-coherent state ⟨n|θ,φ⟩ = √C(N,n) cos^{N−n}(θ/2) sin^n(θ/2) e^{−inφ}.
    pub fn coherent(n_particles: usize, theta: f64, phi: f64) -> Self {
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let amplitudes = (0..=n_particles)
            .map(|n| {
                let mag = binomial_sqrt(n_particles, n) * c.powi((n_particles - n) as i32) * s.powi(n as i32);
                Complex64::from_polar(mag, -(n as f64) * phi)
            })
            .collect();
        ManyBodyState { amplitudes }
    }

    pub fn n_particles(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let norm_sqr = self.norm_sqr();
        if (norm_sqr - 1.0).abs() > tol || !norm_sqr.is_finite() {
            return Err(Error::NotNormalized { norm_sqr, tol });
        }
        Ok(())
    }

    pub fn normalize(&mut self) {
        let s = self.norm_sqr().sqrt();
        for c in self.amplitudes.iter_mut() {
            *c /= s;
        }
    }

    pub fn inner(&self, other: &ManyBodyState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// √C(N, n) computed in log space to stay finite for large N.
pub fn binomial_sqrt(n_total: usize, n: usize) -> f64 {
    (0.5 * ln_binomial(n_total, n)).exp()
}

pub fn ln_binomial(n_total: usize, n: usize) -> f64 {
    let k = n.min(n_total - n);
    (1..=k)
        .map(|i| ((n_total - k + i) as f64).ln() - (i as f64).ln())
        .sum()
}

pub fn initial_state(protocol: &SweepProtocol) -> ManyBodyState {
    ManyBodyState::fock(protocol.n, protocol.initial_mode)
}

/// First and second moments of the angular-momentum components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LMoments {
    pub n_particles: usize,
    /// ⟨L_x⟩, ⟨L_y⟩, ⟨L_z⟩.
    pub mean: [f64; 3],
    /// ⟨L_x²⟩, ⟨L_y²⟩, ⟨L_z²⟩.
    pub second: [f64; 3],
}

impl LMoments {
    pub fn variance(&self) -> [f64; 3] {
        std::array::from_fn(|k| (self.second[k] - self.mean[k] * self.mean[k]).max(0.0))
    }

    /// (⟨n₁⟩, ⟨n₂⟩).
    pub fn populations(&self) -> (f64, f64) {
        let half = self.n_particles as f64 / 2.0;
        (half - self.mean[2], half + self.mean[2])
    }

    pub fn spdm(&self) -> Spdm {
        Spdm::from_bloch(self.mean, self.n_particles)
    }
}

/// Moments from the raw sums ⟨L₊⟩, ⟨L₊²⟩, ⟨L_z⟩, ⟨L_z²⟩.
pub(crate) fn moments_from_ladder_sums(
    n_particles: usize,
    l_plus: Complex64,
    l_plus_sq: Complex64,
    lz: f64,
    lz_sq: f64,
) -> LMoments {
    let casimir = {
        let l = n_particles as f64 / 2.0;
        l * (l + 1.0)
    };
    let transverse = casimir - lz_sq;
    LMoments {
        n_particles,
        mean: [l_plus.re, l_plus.im, lz],
        second: [
            0.5 * (l_plus_sq.re + transverse),
            0.5 * (-l_plus_sq.re + transverse),
            lz_sq,
        ],
    }
}

/// Moments of an amplitude vector without the normalization check.
pub fn moments_unchecked(amplitudes: &[Complex64]) -> LMoments {
    let n_particles = amplitudes.len() - 1;
    let ladder = ladder_coefficients(n_particles);
    let half = n_particles as f64 / 2.0;
    let (mut lp, mut lp2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let (mut lz, mut lz2) = (0.0, 0.0);
    for n in 0..=n_particles {
        let p = amplitudes[n].norm_sqr();
        let m = n as f64 - half;
        lz += p * m;
        lz2 += p * m * m;
        if n >= 1 {
            lp += amplitudes[n].conj() * amplitudes[n - 1] * ladder[n - 1];
        }
        if n >= 2 {
            lp2 += amplitudes[n].conj() * amplitudes[n - 2] * (ladder[n - 1] * ladder[n - 2]);
        }
    }
    moments_from_ladder_sums(n_particles, lp, lp2, lz, lz2)
}

pub fn moments(state: &ManyBodyState) -> Result<LMoments> {
    state.check_normalized(NORM_TOL)?;
    Ok(moments_unchecked(&state.amplitudes))
}

pub fn expectation_l(state: &ManyBodyState) -> Result<[f64; 3]> {
    Ok(moments(state)?.mean)
}

pub fn variance_l(state: &ManyBodyState) -> Result<[f64; 3]> {
    Ok(moments(state)?.variance())
}

/// Reduced single-particle density matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spdm {
    pub rho: [[Complex64; 2]; 2],
}

impl Spdm {
    /// From ⟨L⟩: ρ₁₁ = 1/2 − ⟨L_z⟩/N, ρ₂₂ = 1/2 + ⟨L_z⟩/N, ρ₁₂ = (⟨L_x⟩ − i⟨L_y⟩)/N.
    pub fn from_bloch(l: [f64; 3], n_particles: usize) -> Self {
        let nf = n_particles as f64;
        let r12 = Complex64::new(l[0], -l[1]) / nf;
        Spdm {
            rho: [
                [Complex64::from(0.5 - l[2] / nf), r12],
                [r12.conj(), Complex64::from(0.5 + l[2] / nf)],
            ],
        }
    }

    pub fn trace(&self) -> f64 {
        self.rho[0][0].re + self.rho[1][1].re
    }

    /// Eigenvalues, largest first.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.rho[0][0].re;
        let d = self.rho[1][1].re;
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + self.rho[0][1].norm_sqr()).sqrt();
        [mean + rad, mean - rad]
    }

    pub fn condensate_fraction(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

pub fn spdm(state: &ManyBodyState) -> Result<Spdm> {
    Ok(moments(state)?.spdm())
}

/// (⟨n₁⟩, ⟨n₂⟩).
pub fn populations(state: &ManyBodyState) -> Result<(f64, f64)> {
    Ok(moments(state)?.populations())
}
