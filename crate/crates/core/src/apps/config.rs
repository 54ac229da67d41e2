//! Scenario files: a TOML document describing the plant, the synthesis
//! choices, the simulation and the output location.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::builders::{build_battery, build_example1, BatteryParams};
use crate::lipschitz::{estimate_bounds, BoundEstimation, NonlinearityComponent, ScalarFn, SlopeBounds};
use crate::lmi::{MultiplierLevel, SynthesisOptions, Theorem};
use crate::matrixcore::{from_rows, DenseMatrix, DenseVector};
use crate::sdp::SolveOptions;
use crate::sim::{InputProfile, NoiseKind};
use crate::system::{BoundedSystem, DetailedSystem};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("override `{key}`: {reason}")]
    Override { key: String, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Example1,
    Battery,
    Inline,
}

/// One named nonlinearity component of an inline system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentConfig {
    /// Registry name: `sin_theta`, `cos_theta`, `ocv_cubic` or `linear`.
    pub handle: String,
    #[serde(default)]
    pub params: Vec<f64>,
    pub weights: Vec<f64>,
    pub projection: Vec<Vec<f64>>,
    pub domain: Vec<[f64; 2]>,
    /// Slope bounds per projected coordinate; estimated on the domain when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlineSystem {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    #[serde(default)]
    pub g: Vec<Vec<f64>>,
    #[serde(default)]
    pub f: Vec<Vec<f64>>,
    #[serde(default)]
    pub b1: Vec<Vec<f64>>,
    #[serde(default)]
    pub b2: Vec<Vec<f64>>,
    #[serde(default)]
    pub f_components: Vec<ComponentConfig>,
    #[serde(default)]
    pub g_components: Vec<ComponentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub builtin: Builtin,
    pub theta1: f64,
    pub theta2: f64,
    pub battery: BatteryParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inline: Option<InlineSystem>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            builtin: Builtin::Example1,
            theta1: 0.1,
            theta2: 0.5,
            battery: BatteryParams::default(),
            inline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub theorem: Theorem,
    pub z_level: MultiplierLevel,
    pub s_level: MultiplierLevel,
    pub margin_base: f64,
    pub vertex_cap: usize,
    pub verify_samples: usize,
    pub verify_seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let o = SynthesisOptions::default();
        Self {
            theorem: o.theorem,
            z_level: o.z_level,
            s_level: o.s_level,
            margin_base: o.margin_base,
            vertex_cap: o.vertex_cap,
            verify_samples: 500,
            verify_seed: 7,
        }
    }
}

impl SynthesisConfig {
    pub fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            theorem: self.theorem,
            z_level: self.z_level,
            s_level: self.s_level,
            margin_base: self.margin_base,
            vertex_cap: self.vertex_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub enabled: bool,
    pub horizon: usize,
    /// Seed of the first run; run `i` uses `seed + i`.
    pub seed: u64,
    pub runs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xhat0: Option<Vec<f64>>,
    pub noise: NoiseKind,
    pub input: InputProfile,
    /// CSV replacing `noise` (one row per step, `k` column optional).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_file: Option<PathBuf>,
    pub ekf: bool,
    /// Diagonal of the EKF's initial covariance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ekf_p0: Option<Vec<f64>>,
    /// Variance of ω assumed by the EKF.
    pub ekf_noise_var: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            horizon: 100,
            seed: 42,
            runs: 1,
            x0: None,
            xhat0: None,
            noise: NoiseKind::Gaussian { mean: 0.0, std: 0.1 },
            input: InputProfile::default(),
            noise_file: None,
            input_file: None,
            ekf: false,
            ekf_p0: None,
            ekf_noise_var: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    /// Root of the run directories; `None` defers to the caller.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub system: SystemConfig,
    pub synthesis: SynthesisConfig,
    pub solver: SolveOptions,
    pub simulation: SimulationConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            system: SystemConfig::default(),
            synthesis: SynthesisConfig::default(),
            solver: SolveOptions::default(),
            simulation: SimulationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn example1(theta1: f64, theta2: f64) -> Self {
        let mut c = Self {
            name: "example1".into(),
            ..Self::default()
        };
        c.system.theta1 = theta1;
        c.system.theta2 = theta2;
        c.simulation.input = InputProfile::Constant { value: 0.0 };
        c
    }

    pub fn battery() -> Self {
        let mut c = Self {
            name: "battery".into(),
            ..Self::default()
        };
        c.system.builtin = Builtin::Battery;
        c.simulation.ekf = true;
        c.simulation.runs = 20;
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Parses `text`, applies `key=value` overrides to the fully defaulted
    /// document and validates the result.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let base = Self::from_toml_str(text)?;
        let mut table = toml::Table::try_from(&base).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse_with_overrides(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for f in [&mut cfg.simulation.noise_file, &mut cfg.simulation.input_file].into_iter().flatten() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        Ok(cfg)
    }

    /// Checks everything that can be checked without solving; returns the
    /// battery warnings, if any.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            return Err(ConfigError::Invalid(format!("name `{}` is not a valid directory name", self.name)));
        }
        let warnings = match self.system.builtin {
            Builtin::Battery => self.system.battery.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?,
            _ => Vec::new(),
        };
        let bs = self.build_system()?;
        let n = bs.system.n();
        let s = &self.simulation;
        if s.horizon == 0 || s.runs == 0 {
            return Err(ConfigError::Invalid("simulation horizon and runs must be positive".into()));
        }
        for (name, v) in [("x0", &s.x0), ("xhat0", &s.xhat0), ("ekf_p0", &s.ekf_p0)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(ConfigError::Invalid(format!("{name} has {} entries, the state has {n}", v.len())));
                }
            }
        }
        if let NoiseKind::Gaussian { std, .. } = s.noise {
            if !(std >= 0.0) {
                return Err(ConfigError::Invalid(format!("noise std must be non-negative, got {std}")));
            }
        }
        if !(s.ekf_noise_var > 0.0) {
            return Err(ConfigError::Invalid("ekf_noise_var must be positive".into()));
        }
        let so = &self.solver;
        if !(so.feas_tol > 0.0 && so.gap_tol > 0.0 && so.max_iter > 0 && so.step_fraction > 0.0 && so.step_fraction < 1.0) {
            return Err(ConfigError::Invalid("solver tolerances, max_iter and step_fraction must be in range".into()));
        }
        Ok(warnings)
    }

    /// The plant in original coordinates with its slope bounds.
    pub fn build_system(&self) -> Result<BoundedSystem, ConfigError> {
        let bs = match self.system.builtin {
            Builtin::Example1 => build_example1(self.system.theta1, self.system.theta2),
            Builtin::Battery => build_battery(&self.system.battery).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            Builtin::Inline => {
                let inline = self
                    .system
                    .inline
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("builtin = \"inline\" needs a [system.inline] table".into()))?;
                build_inline(inline)?
            }
        };
        bs.system.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(bs)
    }

    /// Initial plant and observer states; the battery defaults to
    /// (0, 0, 0.8) and (0, 0, 0.5), other systems to ones and zeros.
    pub fn initial_states(&self, n: usize) -> (DenseVector, DenseVector) {
        let (dx, dxh) = match self.system.builtin {
            Builtin::Battery => (vec![0.0, 0.0, 0.8], vec![0.0, 0.0, 0.5]),
            _ => (vec![1.0; n], vec![0.0; n]),
        };
        let x0 = self.simulation.x0.clone().unwrap_or(dx);
        let xh0 = self.simulation.xhat0.clone().unwrap_or(dxh);
        (DenseVector::from_vec(x0), DenseVector::from_vec(xh0))
    }
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: Option<usize>) -> Result<DenseMatrix, ConfigError> {
    if rows.is_empty() {
        return match ncols {
            Some(c) => Ok(DenseMatrix::zeros(nrows, c)),
            None => Err(ConfigError::Invalid(format!("{name} is missing"))),
        };
    }
    from_rows(rows).map_err(|e| ConfigError::Invalid(format!("{name}: {e}")))
}

fn component(family: &str, i: usize, cc: &ComponentConfig) -> Result<(NonlinearityComponent, Vec<f64>, Vec<f64>), ConfigError> {
    let tag = |e: String| ConfigError::Invalid(format!("{family}[{i}]: {e}"));
    let func = ScalarFn::from_name(&cc.handle, &cc.params, cc.weights.clone()).map_err(|e| tag(e.to_string()))?;
    let proj = from_rows(&cc.projection).map_err(|e| tag(e.to_string()))?;
    let domain = cc.domain.iter().map(|d| (d[0], d[1])).collect();
    let comp = NonlinearityComponent::new(proj, func, domain).map_err(|e| tag(e.to_string()))?;
    let (lo, hi) = match (&cc.lower, &cc.upper) {
        (Some(lo), Some(hi)) => (lo.clone(), hi.clone()),
        (None, None) => estimate_bounds(&comp, BoundEstimation::default()).map_err(|e| tag(e.to_string()))?,
        _ => return Err(tag("give both lower and upper bounds or neither".into())),
    };
    Ok((comp, lo, hi))
}

fn family(name: &str, list: &[ComponentConfig]) -> Result<(Vec<NonlinearityComponent>, SlopeBounds), ConfigError> {
    if list.is_empty() {
        return Ok((vec![], SlopeBounds::empty()));
    }
    let mut comps = Vec::new();
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for (i, cc) in list.iter().enumerate() {
        let (c, lo, hi) = component(name, i, cc)?;
        comps.push(c);
        lower.push(lo);
        upper.push(hi);
    }
    let bounds = SlopeBounds::new(lower, upper).map_err(|e| ConfigError::Invalid(format!("{name} bounds: {e}")))?;
    Ok((comps, bounds))
}

fn build_inline(s: &InlineSystem) -> Result<BoundedSystem, ConfigError> {
    let a = matrix("a", &s.a, 0, None)?;
    let c = matrix("c", &s.c, 0, None)?;
    let (n, p) = (a.nrows(), c.nrows());
    let (fc, fb) = family("f", &s.f_components)?;
    let (gc, gb) = family("g", &s.g_components)?;
    let b1 = matrix("b1", &s.b1, n, Some(0))?;
    let inputs = b1.ncols();
    let system = DetailedSystem {
        a,
        g: matrix("g", &s.g, n, Some(fc.len()))?,
        b1,
        b2: matrix("b2", &s.b2, p, Some(inputs))?,
        c,
        e: matrix("e", &s.e, 0, None)?,
        d: matrix("d", &s.d, 0, None)?,
        f: matrix("f", &s.f, p, Some(gc.len()))?,
        f_components: fc,
        g_components: gc,
    };
    Ok(BoundedSystem {
        system,
        f_bounds: fb,
        g_bounds: gb,
    })
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn find_paths(table: &toml::Table, key: &str, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    for (k, v) in table {
        prefix.push(k.clone());
        if k == key {
            out.push(prefix.clone());
        }
        if let toml::Value::Table(t) = v {
            find_paths(t, key, prefix, out);
        }
        prefix.pop();
    }
}

/// Applies `key=value`, where `key` is a dotted path or a bare key that
/// occurs exactly once in the document.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let err = |key: &str, reason: String| ConfigError::Override {
        key: key.to_string(),
        reason,
    };
    let (key, raw) = spec.split_once('=').ok_or_else(|| err(spec, "expected key=value".into()))?;
    let key = key.trim();
    let path: Vec<String> = if key.contains('.') {
        key.split('.').map(str::to_string).collect()
    } else {
        let mut found = Vec::new();
        find_paths(table, key, &mut Vec::new(), &mut found);
        match found.len() {
            0 => return Err(err(key, "no such key".into())),
            1 => found.pop().expect("one path"),
            _ => {
                let names: Vec<String> = found.iter().map(|p| p.join(".")).collect();
                return Err(err(key, format!("ambiguous, matches {}", names.join(", "))));
            }
        }
    };
    let (leaf, parents) = path.split_last().ok_or_else(|| err(key, "empty key".into()))?;
    let mut cur = &mut *table;
    for p in parents {
        cur = match cur.get_mut(p) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(err(key, format!("`{p}` is not a section"))),
        };
    }
    let mut value = parse_value(raw.trim());
    if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (cur.get(leaf), &value) {
        value = toml::Value::Float(*i as f64);
    }
    cur.insert(leaf.clone(), value);
    Ok(())
}
