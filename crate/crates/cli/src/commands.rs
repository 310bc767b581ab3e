use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use lz2mode::exact::{self, propagate_schrodinger, propagate_with, revival_time, xi_number, xi_spectroscopic, RevivalOptions};
use lz2mode::fock::{moments_unchecked, LMoments, Spdm};
use lz2mode::meanfield::{self, plz_mean_field, propagate_bloch_noisy};
use lz2mode::open::{plz_master, propagate_master, DensityMatrix, MasterSample};
use lz2mode::phasespace::{husimi, plz_ensemble, propagate_ensemble, sample_initial_ensemble, EnsembleSample, HusimiGridSpec};
use lz2mode::spectra::{many_body_spectrum, mean_field_stationary_states, swallow_tail_boundary};
use lz2mode::{Error, Sampling};

use crate::config::{EpsGrid, Method, RunConfig};
use crate::output::{columns, ensure_dir, write_csv, write_json, Cell};

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numerical(Error),
    Io(std::io::Error),
    AllFailed(usize),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Io(_) => 1,
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::AllFailed(_) => 4,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
            RunError::AllFailed(n) => write!(f, "all {n} scan points failed"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidProtocol(m) => RunError::Config(m),
            Error::InvalidMode(m) => RunError::Config(format!("invalid initial mode {m}")),
            other => RunError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// Writes `error.json` next to the other outputs for numerical failures.
pub fn write_diagnostic(config: &RunConfig, command: &str, err: &RunError) {
    if let RunError::Numerical(e) = err {
        let body = json!({ "command": command, "status": "numerical_failure", "error": e.to_string(), "detail": format!("{e:?}") });
        if ensure_dir(&config.out).is_ok() {
            let _ = write_json(&config.out.join("error.json"), config, body);
        }
    }
}

/// A time series with named columns.
struct Series {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

const MOMENT_COLUMNS: [&str; 11] = ["t", "lx", "ly", "lz", "var_lx", "var_ly", "var_lz", "spdm_0", "spdm_1", "n1", "n2"];

fn moment_row(t: f64, mean: [f64; 3], variance: [f64; 3], spdm: [f64; 2], n1: f64, n2: f64) -> Vec<Cell> {
    let mut row = vec![Cell::F(t)];
    row.extend(mean.iter().chain(&variance).chain(&spdm).map(|&v| Cell::F(v)));
    row.push(Cell::F(n1));
    row.push(Cell::F(n2));
    row
}

fn series_columns(extra: &[&str]) -> Vec<String> {
    columns(&MOMENT_COLUMNS.iter().chain(extra).copied().collect::<Vec<_>>())
}

fn master_row(s: &MasterSample) -> Vec<Cell> {
    let mut row = moment_row(s.t, s.mean, s.variance, s.spdm_eigenvalues, s.n1, s.n2);
    row.extend([Cell::F(s.trace_drift), Cell::F(s.purity), Cell::F(s.min_eigenvalue)]);
    row
}

fn ensemble_row(s: &EnsembleSample) -> Vec<Cell> {
    let (n1, n2) = s.moments.populations();
    moment_row(s.t, s.moments.mean, s.moments.variance(), s.spdm_eigenvalues, n1, n2)
}

fn bloch_row(t: f64, s: [f64; 3], n: usize, drift: f64) -> Vec<Cell> {
    let nf = n as f64;
    let mean = s.map(|v| nf * v);
    let spdm = Spdm::from_bloch(mean, n).eigenvalues();
    let mut row = moment_row(t, mean, [0.0; 3], spdm, nf / 2.0 - mean[2], nf / 2.0 + mean[2]);
    row.push(Cell::F(drift));
    row
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.map(f64::abs).fold(0.0, f64::max)
}

pub fn sweep(config: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let p = config.protocol();
    let sampling = Sampling::Every(config.sample_dt());
    let duration = p.t_end - p.t_start;
    let gamma = config.gamma_or_zero();
    let (estimate, series, residuals) = match config.method {
        Method::Exact => {
            let est = exact::plz_many_particle(&p)?;
            let prop = propagate_schrodinger(&exact::dressed_initial_state(&p)?, &p, &sampling)?;
            let drift = prop.record.max_abs_norm_drift();
            let rows = prop
                .record
                .samples
                .iter()
                .map(|s| {
                    let mut r = moment_row(s.t, s.mean, s.variance, s.spdm_eigenvalues, s.n1, s.n2);
                    r.push(Cell::F(s.norm_drift));
                    r
                })
                .collect();
            let est = serde_json::to_value(est).expect("serializes");
            let residuals = json!({ "max_norm_drift": drift, "norm_drift_per_time": drift / duration });
            (est, Series { columns: series_columns(&["norm_drift"]), rows }, residuals)
        }
        Method::Meanfield => {
            let est = plz_mean_field(&p, gamma)?;
            let (traj, _) = propagate_bloch_noisy(meanfield::dressed_initial_bloch(&p)?, &p, gamma, &sampling)?;
            let rows = traj.samples.iter().map(|s| bloch_row(s.t, s.s, p.n, s.norm_drift)).collect();
            let drift = if gamma == 0.0 { max_abs(traj.samples.iter().map(|s| s.norm_drift)) } else { f64::NAN };
            let est = serde_json::to_value(est).expect("serializes");
            let residuals = json!({ "max_radius_drift": if drift.is_nan() { Value::Null } else { json!(drift) } });
            (est, Series { columns: series_columns(&["radius_drift"]), rows }, residuals)
        }
        Method::Ensemble => {
            let members = config.members.expect("validated");
            let est = plz_ensemble(&p, members, config.seed)?;
            let ens = sample_initial_ensemble(p.n, members, config.seed, p.initial_mode)?.dressed(&p)?;
            let run = propagate_ensemble(&ens, &p, &sampling)?;
            let rows = run.samples.iter().map(ensemble_row).collect();
            let max_mean = run
                .samples
                .iter()
                .map(|s| s.moments.mean.iter().map(|v| v * v).sum::<f64>().sqrt() / p.n as f64)
                .fold(0.0, f64::max);
            let est = serde_json::to_value(est).expect("serializes");
            let residuals = json!({ "failed_members": run.failed.len(), "max_mean_bloch_length": max_mean });
            (est, Series { columns: series_columns(&[]), rows }, residuals)
        }
        Method::Master => {
            let est = plz_master(&p, gamma)?;
            let rho0 = DensityMatrix::pure(&exact::dressed_initial_state(&p)?);
            let (traj, rho, _) = propagate_master(&rho0, &p, gamma, &sampling)?;
            let rows = traj.samples.iter().map(master_row).collect();
            let trace = max_abs(traj.samples.iter().map(|s| s.trace_drift));
            let min_eig = traj.samples.iter().map(|s| s.min_eigenvalue).fold(f64::INFINITY, f64::min);
            let est = serde_json::to_value(est).expect("serializes");
            let residuals = json!({
                "max_trace_drift": trace,
                "trace_drift_per_time": trace / duration,
                "min_eigenvalue": min_eig,
                "final_hermiticity_error": rho.hermiticity_error(),
            });
            (est, Series { columns: series_columns(&["trace_drift", "purity", "min_eigenvalue"]), rows }, residuals)
        }
    };
    ensure_dir(&config.out)?;
    write_csv(&config.out.join("trajectory.csv"), config, &series.columns, &series.rows)?;
    let final_row: Value = series
        .rows
        .last()
        .map(|r| {
            let map: serde_json::Map<String, Value> = series
                .columns
                .iter()
                .zip(r)
                .filter_map(|(c, v)| match v {
                    Cell::F(x) => Some((c.clone(), json!(x))),
                    _ => None,
                })
                .collect();
            Value::Object(map)
        })
        .unwrap_or(Value::Null);
    let body = json!({
        "command": "sweep",
        "p_lz": estimate,
        "final": final_row,
        "residuals": residuals,
        "seed": config.seed,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_json(&config.out.join("summary.json"), config, body)?;
    Ok(())
}

/// Values reported per scan point.
struct PointResult {
    p: f64,
    stderr: Option<f64>,
    spdm: [f64; 2],
    xi_n2: Option<f64>,
    window: (f64, f64),
}

fn scan_point(config: &RunConfig) -> Result<PointResult> {
    if config.alpha == 0.0 && (config.t_start.is_none() || config.t_end.is_none()) {
        return Err(RunError::Config("alpha = 0 needs an explicit t_start and t_end".into()));
    }
    let p = config.protocol();
    p.validate()?;
    let gamma = config.gamma_or_zero();
    let at = |t0: f64, t1: f64| p.clone().with_window(t0, t1);
    match config.method {
        Method::Exact => {
            let est = exact::plz_many_particle(&p)?;
            let w = at(est.t_start, est.t_end);
            let (psi, _) = propagate_with(&exact::dressed_initial_state(&w)?, &w, &[], |_, _| Ok(()))?;
            let m = moments_unchecked(&psi.amplitudes);
            Ok(PointResult { p: est.p, stderr: None, spdm: m.spdm().eigenvalues(), xi_n2: xi_number(&m).ok(), window: (est.t_start, est.t_end) })
        }
        Method::Meanfield => {
            let est = plz_mean_field(&p, gamma)?;
            let w = at(est.t_start, est.t_end);
            let (_, s) = propagate_bloch_noisy(meanfield::dressed_initial_bloch(&w)?, &w, gamma, &Sampling::Endpoints)?;
            let spdm = Spdm::from_bloch(s.map(|v| v * p.n as f64), p.n).eigenvalues();
            Ok(PointResult { p: est.p, stderr: None, spdm, xi_n2: None, window: (est.t_start, est.t_end) })
        }
        Method::Ensemble => {
            let members = config.members.expect("validated");
            let est = plz_ensemble(&p, members, config.seed)?;
            let w = at(est.t_start, est.t_end);
            let ens = sample_initial_ensemble(p.n, members, config.seed, p.initial_mode)?.dressed(&w)?;
            let run = propagate_ensemble(&ens, &w, &Sampling::Endpoints)?;
            let last = run.samples.last().expect("endpoint sample");
            Ok(PointResult {
                p: est.p,
                stderr: Some(est.stderr),
                spdm: last.spdm_eigenvalues,
                xi_n2: xi_number(&last.moments).ok(),
                window: (est.t_start, est.t_end),
            })
        }
        Method::Master => {
            let est = plz_master(&p, gamma)?;
            let w = at(est.t_start, est.t_end);
            let rho0 = DensityMatrix::pure(&exact::dressed_initial_state(&w)?);
            let (traj, _, _) = propagate_master(&rho0, &w, gamma, &Sampling::Endpoints)?;
            let last = traj.samples.last().expect("endpoint sample");
            Ok(PointResult {
                p: est.p,
                stderr: None,
                spdm: last.spdm_eigenvalues,
                xi_n2: xi_number(&master_moments(last, p.n)).ok(),
                window: (est.t_start, est.t_end),
            })
        }
    }
}

fn master_moments(s: &MasterSample, n: usize) -> LMoments {
    LMoments { n_particles: n, mean: s.mean, second: std::array::from_fn(|k| s.variance[k] + s.mean[k] * s.mean[k]) }
}

/// Returns the number of successful rows.
pub fn scan(config: &RunConfig) -> Result<usize> {
    if config.scan.is_empty() {
        return Err(RunError::Config("scan needs at least one axis under \"scan\"".into()));
    }
    let started = Instant::now();
    let points = config.scan_points();
    let results: Vec<Result<PointResult>> = points.par_iter().map(scan_point).collect();
    let header = columns(&[
        "alpha", "g", "N", "initial_mode", "gamma", "status", "p_lz", "stderr", "spdm_0", "spdm_1", "xi_n2", "t_start", "t_end",
    ]);
    let mut ok = 0;
    let rows: Vec<Vec<Cell>> = points
        .iter()
        .zip(&results)
        .map(|(c, r)| {
            let mut row = vec![
                Cell::F(c.alpha),
                Cell::F(c.g),
                Cell::I(c.n as i64),
                Cell::I(c.initial_mode.index() as i64),
                Cell::from(c.gamma),
            ];
            match r {
                Ok(v) => {
                    ok += 1;
                    row.push(Cell::S("ok".into()));
                    row.extend([
                        Cell::F(v.p),
                        Cell::from(v.stderr),
                        Cell::F(v.spdm[0]),
                        Cell::F(v.spdm[1]),
                        Cell::from(v.xi_n2),
                        Cell::F(v.window.0),
                        Cell::F(v.window.1),
                    ]);
                }
                Err(e) => {
                    row.push(Cell::S(e.to_string()));
                    row.extend(std::iter::repeat_n(Cell::Empty, 7));
                }
            }
            row
        })
        .collect();
    ensure_dir(&config.out)?;
    write_csv(&config.out.join("scan.csv"), config, &header, &rows)?;
    let body = json!({
        "command": "scan",
        "points": points.len(),
        "succeeded": ok,
        "seed": config.seed,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_json(&config.out.join("scan.json"), config, body)?;
    if ok == 0 {
        return Err(RunError::AllFailed(points.len()));
    }
    Ok(ok)
}

/// Many-body levels per particle with the mean-field stationary energies
/// alongside, one row per ε.
pub fn spectrum(config: &RunConfig) -> Result<()> {
    let grid = config.eps_grid.unwrap_or(EpsGrid { min: -10.0, max: 10.0, points: 201 });
    let eps = grid.values();
    let (n, j, g) = (config.n, config.j, config.g);
    let levels = many_body_spectrum(n, j, g, &eps);
    let stationary: Vec<_> = eps
        .par_iter()
        .map(|&e| mean_field_stationary_states(e, j, g))
        .collect::<std::result::Result<_, _>>()?;
    let mut names: Vec<String> = vec!["eps".into()];
    names.extend((0..=n).map(|k| format!("e_{k}")));
    names.push("mf_count".into());
    names.extend((0..4).map(|k| format!("mf_{k}")));
    let rows: Vec<Vec<Cell>> = eps
        .iter()
        .zip(&levels)
        .zip(&stationary)
        .map(|((&e, lv), st)| {
            let mut row = vec![Cell::F(e)];
            row.extend(lv.iter().map(|&x| Cell::F(x / n as f64)));
            let mut energies: Vec<f64> = st.points.iter().map(|p| p.energy).collect();
            energies.sort_by(f64::total_cmp);
            row.push(Cell::I(energies.len() as i64));
            row.extend((0..4).map(|k| Cell::from(energies.get(k).copied())));
            row
        })
        .collect();
    ensure_dir(&config.out)?;
    write_csv(&config.out.join("spectrum.csv"), config, &names, &rows)?;
    let tail = swallow_tail_boundary(j, g).ok();
    let body = json!({ "command": "spectrum", "energy_unit": "per particle", "swallow_tail_eps": tail });
    write_json(&config.out.join("spectrum.json"), config, body)?;
    Ok(())
}

/// Husimi frames of the exact state at the configured times. Returns the
/// number of frames written.
pub fn husimi_frames(config: &RunConfig) -> Result<usize> {
    if config.method != Method::Exact {
        return Err(RunError::Config(format!("husimi frames come from the many-body state; method {} is not supported", config.method)));
    }
    if config.husimi_times.is_empty() {
        return Ok(0);
    }
    let p = config.protocol();
    if let Some(&t) = config.husimi_times.iter().find(|&&t| !(t >= p.t_start && t <= p.t_end)) {
        return Err(RunError::Config(format!("husimi time {t} lies outside the window [{}, {}]", p.t_start, p.t_end)));
    }
    let times = Sampling::At(config.husimi_times.clone()).times(p.t_start, p.t_end);
    let spec = HusimiGridSpec::for_particles(p.n);
    let mut frames = Vec::with_capacity(times.len());
    propagate_with(&exact::dressed_initial_state(&p)?, &p, &times, |t, s| {
        frames.push((t, husimi(s, spec)?));
        Ok(())
    })?;
    ensure_dir(&config.out)?;
    for (k, (t, grid)) in frames.iter().enumerate() {
        let mut names = vec!["theta".to_string()];
        names.extend((0..spec.n_phi).map(|i| format!("q_{i}")));
        let rows: Vec<Vec<Cell>> = (0..spec.n_theta)
            .map(|i| {
                let mut row = vec![Cell::F(grid.theta[i])];
                row.extend((0..spec.n_phi).map(|l| Cell::F(grid.value(i, l))));
                row
            })
            .collect();
        let stem = format!("husimi_{k:03}");
        write_csv(&config.out.join(format!("{stem}.csv")), config, &names, &rows)?;
        let body = json!({
            "command": "husimi",
            "t": t,
            "N": grid.n_particles,
            "grid": spec,
            "theta": grid.theta,
            "theta_weights": grid.theta_weights,
            "phi": grid.phi,
            "normalization_residual": grid.normalization_residual,
            "data": format!("{stem}.csv"),
        });
        write_json(&config.out.join(format!("{stem}.json")), config, body)?;
    }
    Ok(frames.len())
}

/// ξ_N² and ξ_S² along the sweep, plus the revival time when a horizon is set.
pub fn squeezing(config: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let p = config.protocol();
    let sampling = Sampling::Every(config.sample_dt());
    if config.revival_horizon.is_some() && config.method != Method::Exact {
        return Err(RunError::Config("revival_horizon is only available for method exact".into()));
    }
    let moments: Vec<(f64, LMoments)> = match config.method {
        Method::Exact => {
            let mut out = Vec::new();
            let times = sampling.times(p.t_start, p.t_end);
            propagate_with(&exact::dressed_initial_state(&p)?, &p, &times, |t, s| {
                out.push((t, moments_unchecked(&s.amplitudes)));
                Ok(())
            })?;
            out
        }
        Method::Ensemble => {
            let members = config.members.expect("validated");
            let ens = sample_initial_ensemble(p.n, members, config.seed, p.initial_mode)?.dressed(&p)?;
            propagate_ensemble(&ens, &p, &sampling)?.samples.into_iter().map(|s| (s.t, s.moments)).collect()
        }
        Method::Master => {
            let rho0 = DensityMatrix::pure(&exact::dressed_initial_state(&p)?);
            let (traj, _, _) = propagate_master(&rho0, &p, config.gamma_or_zero(), &sampling)?;
            traj.samples.iter().map(|s| (s.t, master_moments(s, p.n))).collect()
        }
        Method::Meanfield => {
            return Err(RunError::Config("a single mean-field trajectory has no fluctuations; use exact, ensemble or master".into()));
        }
    };
    let rows: Vec<Vec<Cell>> = moments
        .iter()
        .map(|(t, m)| vec![Cell::F(*t), Cell::from(xi_number(m).ok()), Cell::from(xi_spectroscopic(m).ok())])
        .collect();
    ensure_dir(&config.out)?;
    write_csv(&config.out.join("squeezing.csv"), config, &columns(&["t", "xi_n2", "xi_s2"]), &rows)?;
    let revival = match config.revival_horizon {
        Some(horizon) => Some(revival_time(&p, RevivalOptions { horizon, dt: config.sample_dt() })?),
        None => None,
    };
    let last = moments.last().map(|(_, m)| m);
    let body = json!({
        "command": "squeezing",
        "final_xi_n2": last.and_then(|m| xi_number(m).ok()),
        "final_xi_s2": last.and_then(|m| xi_spectroscopic(m).ok()),
        "revival": revival,
        "seed": config.seed,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_json(&config.out.join("squeezing.json"), config, body)?;
    Ok(())
}
