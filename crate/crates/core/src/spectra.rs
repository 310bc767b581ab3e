//! Static analysis: many-body spectra, mean-field stationary states, the
//! swallow-tail region and the scaling of the quasi-degenerate gaps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{hamiltonian_at_offset, number_form_shift};
use crate::stats::{linear_fit, LinearFit};

/// Radius of the Bloch sphere for a normalized mean-field state.
pub const BLOCH_RADIUS: f64 = 0.5;

/// All N+1 eigenvalues of H(ε), ascending, in the number-operator convention.
pub fn many_body_spectrum(n: usize, j: f64, g: f64, eps_grid: &[f64]) -> Vec<Vec<f64>> {
    let shift = number_form_shift(n, g);
    eps_grid
        .iter()
        .map(|&eps| {
            hamiltonian_at_offset(n, j, g, eps)
                .eigenvalues()
                .into_iter()
                .map(|e| e + shift)
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Elliptic,
    Hyperbolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    /// Bloch vector (s_x, s_y, s_z).
    pub s: [f64; 3],
    pub energy: f64,
    pub stability: Stability,
    /// Linearization was within 1e-8 of marginal and was tagged elliptic.
    pub marginal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryStateSet {
    pub eps: f64,
    pub points: Vec<StationaryPoint>,
}

/// Mean-field energy per particle E = 2εs_z − 2Js_x + g s_z² + g/4.
pub fn mean_field_energy(s: [f64; 3], eps: f64, j: f64, g: f64) -> f64 {
    2.0 * eps * s[2] - 2.0 * j * s[0] + g * s[2] * s[2] + g / 4.0
}

/// Coefficients (highest degree first) of the quartic in s_z whose real roots
/// give the fixed points on the sphere of radius `r`.
fn fixed_point_quartic(eps: f64, j: f64, g: f64, r: f64) -> [f64; 5] {
    let r2 = r * r;
    [
        g * g,
        2.0 * eps * g,
        eps * eps + j * j - r2 * g * g,
        -2.0 * r2 * eps * g,
        -r2 * eps * eps,
    ]
}

fn horner(c: &[f64], x: f64) -> (f64, f64) {
    let (mut p, mut dp) = (0.0, 0.0);
    for &a in c {
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp)
}

/// Real roots of a polynomial (highest degree first). Exact leading and
/// trailing zeros are deflated; the rest goes through the companion matrix and
/// a Newton polish.
pub fn real_polynomial_roots(coeffs: &[f64]) -> Result<Vec<f64>> {
    let first = coeffs.iter().position(|&c| c != 0.0);
    let Some(first) = first else {
        return Err(Error::InvalidArgument("zero polynomial has no isolated roots".into()));
    };
    let mut c: Vec<f64> = coeffs[first..].to_vec();
    let mut roots = Vec::new();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
        roots.push(0.0);
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Ok(roots);
    }
    let lead = c[0];
    let mut companion = DMatrix::<f64>::zeros(deg, deg);
    for k in 0..deg {
        companion[(0, k)] = -c[k + 1] / lead;
        if k + 1 < deg {
            companion[(k + 1, k)] = 1.0;
        }
    }
    let scale = 1.0 + c[1..].iter().map(|a| (a / lead).abs()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for z in companion.complex_eigenvalues().iter() {
        if z.im.abs() > 1e-7 * scale {
            continue;
        }
        // Newton polish, keeping the iterate with the smallest residual:
        // near a double root the derivative vanishes and steps can overshoot.
        let mut x = z.re;
        let mut best = (horner(&c, x).0.abs(), x);
        for _ in 0..8 {
            let (p, dp) = horner(&c, x);
            if dp.abs() < 1e-300 {
                break;
            }
            x -= p / dp;
            let r = horner(&c, x).0.abs();
            if r < best.0 {
                best = (r, x);
            } else {
                break;
            }
        }
        let x = best.1;
        let p = best.0;
        let mag: f64 = c.iter().enumerate().map(|(k, a)| a.abs() * x.abs().powi((deg - k) as i32)).sum();
        worst = worst.max(p / mag.max(1e-300));
        roots.push(x);
    }
    if worst > 1e-6 {
        return Err(Error::RootFinder { residual: worst });
    }
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// Tangent-plane linearization of the Bloch flow at a fixed point (x, 0, z).
/// Returns λ² for the 2×2 block [[0, a], [b, 0]].
fn linearization_lambda_sq(x: f64, z: f64, eps: f64, j: f64, g: f64, r: f64) -> f64 {
    let a = (2.0 * z * (eps + g * z) - 2.0 * j * x - 2.0 * g * x * x) / r;
    let b = (2.0 * j * x - 2.0 * z * (eps + g * z)) / r;
    a * b
}

/// Fixed points of the γ = 0 Bloch flow at offset ε on the sphere of radius `r`.
pub fn stationary_points(eps: f64, j: f64, g: f64, r: f64) -> Result<Vec<StationaryPoint>> {
    if !(eps.is_finite() && j.is_finite() && g.is_finite() && r > 0.0 && j >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "stationary states need finite ε, g, J ≥ 0 and r > 0 (ε={eps}, J={j}, g={g}, r={r})"
        )));
    }
    let roots = real_polynomial_roots(&fixed_point_quartic(eps, j, g, r))?;
    let mut raw: Vec<[f64; 2]> = Vec::new();
    for z in roots {
        if z.abs() > r * (1.0 + 1e-9) {
            continue;
        }
        let z = z.clamp(-r, r);
        let denom = eps + g * z;
        if denom.abs() <= 1e-14 * (eps.abs() + g.abs() + j).max(1.0) {
            // ε + g z = 0 forces J z = 0; any x on the circle solves the system.
            if (j * z).abs() > 1e-12 {
                continue;
            }
            let x = (r * r - z * z).max(0.0).sqrt();
            raw.push([x, z]);
            raw.push([-x, z]);
        } else {
            raw.push([-j * z / denom, z]);
        }
    }
    let mut points: Vec<StationaryPoint> = Vec::new();
    for [x, z] in raw {
        let resid_sphere = (x * x + z * z - r * r).abs();
        let resid_flow = (2.0 * j * z + (2.0 * eps + 2.0 * g * z) * x).abs();
        if resid_sphere > 1e-9 || resid_flow > 1e-9 * (1.0 + eps.abs() + g.abs() + j) {
            continue;
        }
        if points.iter().any(|p| (p.s[0] - x).abs() < 1e-9 && (p.s[2] - z).abs() < 1e-9) {
            continue;
        }
        let lam2 = linearization_lambda_sq(x, z, eps, j, g, r);
        let marginal = lam2 > 0.0 && lam2.sqrt() < 1e-8;
        let stability = if lam2 <= 0.0 || marginal { Stability::Elliptic } else { Stability::Hyperbolic };
        let s = [x, 0.0, z];
        points.push(StationaryPoint { s, energy: mean_field_energy(s, eps, j, g), stability, marginal });
    }
    points.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(points)
}

/// Stationary mean-field states at offset ε for a normalized condensate.
pub fn mean_field_stationary_states(eps: f64, j: f64, g: f64) -> Result<StationaryStateSet> {
    Ok(StationaryStateSet { eps, points: stationary_points(eps, j, g, BLOCH_RADIUS)? })
}

fn stationary_count(eps: f64, j: f64, g: f64) -> Result<usize> {
    Ok(stationary_points(eps, j, g, BLOCH_RADIUS)?.len())
}

/// Half-width ε_c of the offset interval carrying four stationary states.
pub fn swallow_tail_boundary(j: f64, g: f64) -> Result<f64> {
    if !(j > 0.0) {
        return Err(Error::InvalidArgument(format!("J must be positive, got {j}")));
    }
    if stationary_count(0.0, j, g)? < 4 {
        return Err(Error::NoSwallowTail { g, two_j: 2.0 * j });
    }
    let (mut lo, mut hi) = (0.0, g.abs() + j);
    while hi - lo > 1e-12 * j {
        let mid = 0.5 * (lo + hi);
        if stationary_count(mid, j, g)? >= 4 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Candidate closed form ((|g|)^{2/3} − (2J)^{2/3})^{3/2}/2 for the tail edge.
pub fn swallow_tail_closed_form(j: f64, g: f64) -> f64 {
    let d = g.abs().powf(2.0 / 3.0) - (2.0 * j).powf(2.0 / 3.0);
    if d <= 0.0 {
        0.0
    } else {
        0.5 * d.powf(1.5)
    }
}

/// Interaction strength at which the tail appears, found by bisection on the
/// existence of the tail over g ∈ [0, g_max].
pub fn bifurcation_threshold(j: f64, g_max: f64, tol: f64) -> Result<f64> {
    let exists = |g: f64| swallow_tail_boundary(j, g).is_ok();
    if exists(0.0) || !exists(g_max) {
        return Err(Error::InvalidArgument(format!("no tail transition inside [0, {g_max}]")));
    }
    let (mut lo, mut hi) = (0.0, g_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if exists(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Minimal splitting met by the level continuing the initial diabatic state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinGap {
    pub n: usize,
    pub gap: f64,
    /// Offset where the minimum occurs.
    pub eps: f64,
    /// Lower index of the level pair (ascending order).
    pub lower_level: usize,
    /// Gap below 1e-13: indistinguishable from rounding.
    pub degenerate: bool,
}

fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimal gap along the diabatic path of the extremal level that carries the
/// swallow tail (top level for g > 0, bottom level for g < 0).
///
/// The level is followed over ε ∈ [−w, w], w = 1.5ε_c + 0.5J, by maximal
/// eigenvector overlap on a grid of `grid_points`. Candidate crossings are the
/// steps where the followed index changes (narrow crossings, passed
/// diabatically) and the local minima of the splitting to its neighbours
/// (wide crossings, followed adiabatically). Each candidate is refined by a
/// golden-section search on the splitting of the two levels involved.
pub fn min_gap(n: usize, j: f64, g: f64, grid_points: usize) -> Result<MinGap> {
    if n < 1 || grid_points < 8 {
        return Err(Error::InvalidArgument("min_gap needs N ≥ 1 and at least 8 grid points".into()));
    }
    let eps_c = swallow_tail_boundary(j, g)?;
    let w = 1.5 * eps_c + 0.5 * j;
    let grid: Vec<f64> = (0..grid_points)
        .map(|k| -w + 2.0 * w * k as f64 / (grid_points - 1) as f64)
        .collect();
    let dim = n + 1;
    let splitting = |eps: f64, lower: usize| {
        let ev = hamiltonian_at_offset(n, j, g, eps).eigenvalues();
        ev[lower + 1] - ev[lower]
    };

    let mut index = if g > 0.0 { dim - 1 } else { 0 };
    let (mut values, mut vectors) = hamiltonian_at_offset(n, j, g, grid[0]).eigen();
    // (grid position, lower level of the pair)
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    let mut prev_gaps: Vec<[f64; 2]> = Vec::new();
    let mut followed: Vec<usize> = vec![index];
    let neighbour_gaps = |vals: &[f64], k: usize| {
        [
            if k > 0 { vals[k] - vals[k - 1] } else { f64::INFINITY },
            if k + 1 < vals.len() { vals[k + 1] - vals[k] } else { f64::INFINITY },
        ]
    };
    prev_gaps.push(neighbour_gaps(&values, index));
    for (i, &eps) in grid.iter().enumerate().skip(1) {
        let (next_values, next_vectors) = hamiltonian_at_offset(n, j, g, eps).eigen();
        let current = vectors.column(index);
        let new_index = (0..dim)
            .max_by(|&a, &b| {
                let oa = next_vectors.column(a).dot(&current).abs();
                let ob = next_vectors.column(b).dot(&current).abs();
                oa.total_cmp(&ob)
            })
            .unwrap();
        if new_index != index {
            candidates.push((i, index.min(new_index)));
        }
        index = new_index;
        values = next_values;
        vectors = next_vectors;
        prev_gaps.push(neighbour_gaps(&values, index));
        followed.push(index);
        // local minimum of the splitting to a neighbour at the previous node
        if i >= 2 && followed[i - 2] == index && followed[i - 1] == index {
            for side in 0..2 {
                let (a, b, c) = (prev_gaps[i - 2][side], prev_gaps[i - 1][side], prev_gaps[i][side]);
                if b.is_finite() && b < a && b <= c {
                    let lower = if side == 0 { index - 1 } else { index };
                    candidates.push((i - 1, lower));
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no level crossing found along the diabatic path".into()));
    }

    let mut best = MinGap { n, gap: f64::INFINITY, eps: 0.0, lower_level: 0, degenerate: false };
    for (i, lower) in candidates {
        if lower + 1 >= dim {
            continue;
        }
        let a = grid[i.saturating_sub(1)];
        let b = grid[(i + 1).min(grid.len() - 1)];
        let (eps, gap) = golden_min(|e| splitting(e, lower), a, b, 1e-15 * w.max(1.0));
        if gap < best.gap {
            best = MinGap { n, gap, eps, lower_level: lower, degenerate: gap < 1e-13 };
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapScalingFit {
    pub gaps: Vec<MinGap>,
    /// Decay constant in Δ ≈ A·N·exp(−ηN).
    pub eta: f64,
    pub prefactor: f64,
    pub fit: LinearFit,
}

/// Fit ln(Δ_N/N) = ln A − ηN over the non-degenerate gaps.
pub fn min_gap_scaling(j: f64, g: f64, ns: &[usize], grid_points: usize) -> Result<GapScalingFit> {
    if ns.len() < 3 {
        return Err(Error::InvalidArgument("gap scaling needs at least three particle numbers".into()));
    }
    let gaps = ns.iter().map(|&n| min_gap(n, j, g, grid_points)).collect::<Result<Vec<_>>>()?;
    let usable: Vec<&MinGap> = gaps.iter().filter(|m| !m.degenerate).collect();
    let x: Vec<f64> = usable.iter().map(|m| m.n as f64).collect();
    let y: Vec<f64> = usable.iter().map(|m| (m.gap / m.n as f64).ln()).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(GapScalingFit { eta: -fit.slope, prefactor: fit.intercept.exp(), fit, gaps })
}
