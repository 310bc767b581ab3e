use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use lz2mode::protocol::{default_half_width, DEFAULT_TOL};
use lz2mode::{Mode, SweepProtocol};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Meanfield,
    Ensemble,
    Master,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Exact => "exact",
            Method::Meanfield => "meanfield",
            Method::Ensemble => "ensemble",
            Method::Master => "master",
        };
        f.write_str(s)
    }
}

/// Axes of a scan; an empty axis means "use the base value".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanAxes {
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub g: Vec<f64>,
    #[serde(default, rename = "N")]
    pub n: Vec<usize>,
    #[serde(default)]
    pub initial_mode: Vec<Mode>,
    #[serde(default)]
    pub gamma: Vec<f64>,
}

impl ScanAxes {
    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty() && self.g.is_empty() && self.n.is_empty() && self.initial_mode.is_empty() && self.gamma.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl EpsGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.min + k as f64 * step).collect()
    }
}

/// Everything a run needs. Missing window ends take the default symmetric window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(rename = "J", default = "one")]
    pub j: f64,
    #[serde(default)]
    pub g: f64,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub t_start: Option<f64>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default = "default_mode")]
    pub initial_mode: Mode,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Phase-noise rate; master and meanfield only.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Ensemble size; ensemble only.
    #[serde(default)]
    pub members: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Spacing of time-series samples; default is 1/200 of the window.
    #[serde(default)]
    pub sample_dt: Option<f64>,
    #[serde(default)]
    pub scan: ScanAxes,
    #[serde(default)]
    pub eps_grid: Option<EpsGrid>,
    #[serde(default)]
    pub husimi_times: Vec<f64>,
    /// Last time of the squeezing scan; the sweep keeps running past t_end.
    #[serde(default)]
    pub revival_horizon: Option<f64>,
    /// Not echoed: neither affects any emitted value.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default = "default_out", skip_serializing)]
    pub out: PathBuf,
}

fn default_method() -> Method {
    Method::Exact
}
fn one() -> f64 {
    1.0
}
fn default_n() -> usize {
    20
}
fn default_mode() -> Mode {
    Mode::One
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Command-line values that override the config document.
#[derive(Debug, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub set: Vec<String>,
}

/// Reads the JSON document (a file, `-` for stdin, or nothing), applies
/// `--set key=value` and the dedicated flags, and validates the result.
/// A summary file written by a previous run is accepted as well: its
/// embedded `config` is used.
pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<RunConfig, ConfigError> {
    let text = match path {
        None => "{}".to_string(),
        Some(p) if p == Path::new("-") => std::io::read_to_string(std::io::stdin())
            .map_err(|e| ConfigError(format!("reading config from stdin: {e}")))?,
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError(format!("reading {}: {e}", p.display())))?,
    };
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| ConfigError(format!("config is not valid JSON: {e}")))?;
    if let Some(inner) = doc.get("config").filter(|_| doc.get("schema_version").is_some()) {
        doc = inner.clone();
    }
    let Value::Object(ref mut map) = doc else {
        return Err(ConfigError("config must be a JSON object".into()));
    };
    for kv in &overrides.set {
        let (key, raw) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("--set expects key=value, got {kv:?}")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(map, key, value)?;
    }
    let mut config: RunConfig =
        serde_json::from_value(doc).map_err(|e| ConfigError(format!("invalid config: {e}")))?;
    if let Some(m) = overrides.method {
        config.method = m;
    }
    if overrides.workers.is_some() {
        config.workers = overrides.workers;
    }
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if let Some(o) = overrides.out {
        config.out = o;
    }
    config.validate()?;
    Ok(config)
}

fn set_path(map: &mut serde_json::Map<String, Value>, key: &str, value: Value) -> Result<(), ConfigError> {
    match key.split_once('.') {
        None => {
            map.insert(key.to_string(), value);
            Ok(())
        }
        Some((head, rest)) => {
            let entry = map.entry(head.to_string()).or_insert_with(|| Value::Object(Default::default()));
            match entry {
                Value::Object(inner) => set_path(inner, rest, value),
                _ => Err(ConfigError(format!("--set {key}: {head} is not an object"))),
            }
        }
    }
}

impl RunConfig {
    /// The sweep protocol; a missing window end takes the default
    /// symmetric window (undefined for alpha = 0, which validation rejects).
    pub fn protocol(&self) -> SweepProtocol {
        let half = if self.alpha != 0.0 { default_half_width(self.j, self.g, self.alpha) } else { f64::NAN };
        SweepProtocol::new(self.j, self.g, self.n, self.alpha)
            .with_window(self.t_start.unwrap_or(-half), self.t_end.unwrap_or(half))
            .with_mode(self.initial_mode)
            .with_tol(self.tol)
    }

    pub fn gamma_or_zero(&self) -> f64 {
        self.gamma.unwrap_or(0.0)
    }

    pub fn sample_dt(&self) -> f64 {
        let p = self.protocol();
        self.sample_dt.unwrap_or((p.t_end - p.t_start) / 200.0)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError(msg));
        if self.alpha == 0.0 && (self.t_start.is_none() || self.t_end.is_none()) {
            return bad("alpha = 0 needs an explicit t_start and t_end".into());
        }
        self.protocol().validate().map_err(|e| ConfigError(e.to_string()))?;
        match self.method {
            Method::Ensemble => {
                if !self.members.is_some_and(|m| m > 0) {
                    return bad("method ensemble needs members ≥ 1".into());
                }
            }
            _ if self.members.is_some() => return bad(format!("members only applies to method ensemble, not {}", self.method)),
            _ => {}
        }
        match self.method {
            Method::Exact | Method::Ensemble if self.gamma.is_some() || !self.scan.gamma.is_empty() => {
                return bad(format!("gamma only applies to methods master and meanfield, not {}", self.method));
            }
            Method::Master if self.gamma.is_none() && self.scan.gamma.is_empty() => {
                return bad("method master needs gamma (0 for a closed system)".into());
            }
            _ => {}
        }
        let gammas = self.gamma.iter().chain(&self.scan.gamma);
        if gammas.clone().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return bad("gamma must be finite and non-negative".into());
        }
        if let Some(dt) = self.sample_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("sample_dt must be positive, got {dt}"));
            }
        }
        if let Some(grid) = self.eps_grid {
            if grid.points == 0 || !(grid.min.is_finite() && grid.max.is_finite() && grid.min <= grid.max) {
                return bad("eps_grid needs points ≥ 1 and min ≤ max".into());
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    /// One config per scan point, in row-major order of (alpha, g, N,
    /// initial_mode, gamma). Points are validated when they run, so a bad
    /// axis value fails its own rows only.
    pub fn scan_points(&self) -> Vec<RunConfig> {
        let or = |axis: &[f64], base: f64| if axis.is_empty() { vec![base] } else { axis.to_vec() };
        let alphas = or(&self.scan.alpha, self.alpha);
        let gs = or(&self.scan.g, self.g);
        let ns = if self.scan.n.is_empty() { vec![self.n] } else { self.scan.n.clone() };
        let modes = if self.scan.initial_mode.is_empty() { vec![self.initial_mode] } else { self.scan.initial_mode.clone() };
        let gammas: Vec<Option<f64>> = if self.scan.gamma.is_empty() { vec![self.gamma] } else { self.scan.gamma.iter().map(|&g| Some(g)).collect() };
        let mut points = Vec::new();
        for &alpha in &alphas {
            for &g in &gs {
                for &n in &ns {
                    for &mode in &modes {
                        for &gamma in &gammas {
                            let mut c = self.clone();
                            c.alpha = alpha;
                            c.g = g;
                            c.n = n;
                            c.initial_mode = mode;
                            c.gamma = gamma;
                            c.scan = ScanAxes::default();
                            points.push(c);
                        }
                    }
                }
            }
        }
        points
    }
}

/// Key-sorted JSON value of the config, used for every embedded echo.
pub fn echo(config: &RunConfig) -> Value {
    let v = serde_json::to_value(config).expect("config serializes");
    let sorted: BTreeMap<String, Value> = serde_json::from_value(v).expect("object");
    serde_json::to_value(sorted).expect("map serializes")
}
