//! Side-by-side tables of several result bundles, with published baseline
//! values as fixed reference rows.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{Builtin, ScenarioConfig};
use crate::lmi::Theorem;
use super::runner::{ScenarioMetrics, SynthesisRecord, METRICS_FILE, SCENARIO_FILE, SYNTHESIS_FILE};

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("need at least two bundles, got {0}")]
    TooFew(usize),
    #[error("bundle {0}: {1}")]
    Bundle(PathBuf, String),
}

/// The (θ₁, θ₂) grid of the example-1 comparison.
pub const THETA_GRID: [(f64, f64); 5] = [(0.1, 0.5), (0.2, 0.1), (0.2, 0.4), (0.4, 0.1), (0.5, 0.5)];

/// Published √μ of two earlier LMI designs on the same grid (cited, not recomputed).
pub const CITED_SQRT_MU: [(&str, [f64; 5]); 2] = [
    ("baseline LMI A", [0.0393, 0.0994, 0.1438, 0.4885, 2.4415]),
    ("baseline LMI B", [2.1801, 2.1149, 2.3706, 2.4415, 4.4248]),
];

/// Published battery RMSE per state (V₁, V₂, SoC).
pub const CITED_BATTERY_RMSE: [(&str, [f64; 3]); 2] = [
    ("reported observer", [7.71e-4, 1.97e-7, 0.0014]),
    ("reported EKF", [7.78e-4, 7.92e-4, 0.0028]),
];

/// The example-1 grid under both conditions, as named design-only scenarios.
pub fn grid_configs(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for theorem in [Theorem::T1, Theorem::T2] {
        for (t1, t2) in THETA_GRID {
            let mut c = base.clone();
            c.system.builtin = Builtin::Example1;
            c.system.theta1 = t1;
            c.system.theta2 = t2;
            c.synthesis.theorem = theorem;
            c.simulation.enabled = false;
            c.name = format!("{}-{theorem}-{t1}-{t2}", base.name);
            out.push(c);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleRow {
    pub label: String,
    pub system: Builtin,
    pub theta: Option<(f64, f64)>,
    pub method: String,
    pub status: String,
    pub feasible: bool,
    pub verified: Option<bool>,
    pub sqrt_mu: Option<f64>,
    pub observer_rmse: Option<Vec<f64>>,
    pub ekf_rmse: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<BundleRow>,
    pub warnings: Vec<String>,
}

fn read_bundle(dir: &Path) -> Result<BundleRow, CompareError> {
    let err = |m: String| CompareError::Bundle(dir.to_path_buf(), m);
    let rec = SynthesisRecord::read(&dir.join(SYNTHESIS_FILE)).map_err(|e| err(e.to_string()))?;
    let cfg = std::fs::read_to_string(dir.join(SCENARIO_FILE))
        .map_err(|e| err(format!("{SCENARIO_FILE}: {e}")))
        .and_then(|t| ScenarioConfig::from_toml_str(&t).map_err(|e| err(e.to_string())))?;
    let metrics: Option<ScenarioMetrics> = match std::fs::read_to_string(dir.join(METRICS_FILE)) {
        Ok(t) => Some(serde_json::from_str(&t).map_err(|e| err(format!("{METRICS_FILE}: {e}")))?),
        Err(_) => None,
    };
    let label = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(BundleRow {
        label,
        system: cfg.system.builtin,
        theta: (cfg.system.builtin == Builtin::Example1).then_some((cfg.system.theta1, cfg.system.theta2)),
        method: format!("{} z={} s={}", rec.theorem, rec.z_level.name(), rec.s_level.name()),
        status: rec.status().label().to_string(),
        feasible: rec.feasible,
        verified: rec.verified,
        sqrt_mu: rec.sqrt_mu,
        observer_rmse: metrics.as_ref().map(|m| m.observer_rmse_mean.clone()),
        ekf_rmse: metrics.and_then(|m| m.ekf_rmse_mean),
    })
}

/// Reads every bundle; fails on fewer than two and flags mixed systems.
pub fn compare_report(bundles: &[PathBuf]) -> Result<Comparison, CompareError> {
    if bundles.len() < 2 {
        return Err(CompareError::TooFew(bundles.len()));
    }
    let rows = bundles.iter().map(|b| read_bundle(b)).collect::<Result<Vec<_>, _>>()?;
    let mut warnings = Vec::new();
    let mut systems: Vec<Builtin> = rows.iter().map(|r| r.system).collect();
    systems.sort_by_key(|s| *s as u8);
    systems.dedup();
    if systems.len() > 1 {
        warnings.push(format!("incompatible scenarios mixed ({systems:?}); they are tabulated separately"));
    }
    for r in &rows {
        if r.feasible && r.verified == Some(false) {
            warnings.push(format!("{}: design failed verification", r.label));
        }
    }
    Ok(Comparison { rows, warnings })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6e}"))
}

fn same_theta(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12
}

impl Comparison {
    /// One row per bundle and estimator plus the cited reference rows.
    pub fn to_csv(&self) -> String {
        let width = self
            .rows
            .iter()
            .flat_map(|r| [r.observer_rmse.as_ref(), r.ekf_rmse.as_ref()])
            .flatten()
            .map(Vec::len)
            .max()
            .unwrap_or(0)
            .max(if self.rows.iter().any(|r| r.system == Builtin::Battery) { 3 } else { 0 });
        let mut out = String::from("source,label,system,theta1,theta2,method,estimator,status,feasible,verified,sqrt_mu");
        for i in 1..=width {
            let _ = write!(out, ",rmse_x{i}");
        }
        out.push('\n');
        let rmse_cells = |v: Option<&Vec<f64>>| -> String {
            (0..width)
                .map(|i| v.and_then(|v| v.get(i)).map_or_else(String::new, |x| format!("{x:.6e}")))
                .collect::<Vec<_>>()
                .join(",")
        };
        let theta_cells = |t: Option<(f64, f64)>| t.map_or_else(|| ",".to_string(), |(a, b)| format!("{a},{b}"));
        for r in &self.rows {
            let sys = format!("{:?}", r.system).to_lowercase();
            let verified = r.verified.map_or_else(String::new, |v| v.to_string());
            let _ = write!(
                out,
                "bundle,{},{sys},{},{},observer,{},{},{verified},{}",
                r.label,
                theta_cells(r.theta),
                r.method,
                r.status,
                r.feasible,
                fmt_opt(r.sqrt_mu)
            );
            if width > 0 {
                let _ = write!(out, ",{}", rmse_cells(r.observer_rmse.as_ref()));
            }
            out.push('\n');
            if r.ekf_rmse.is_some() {
                let _ = writeln!(
                    out,
                    "bundle,{},{sys},{},,ekf,,,,,{}",
                    r.label,
                    theta_cells(r.theta),
                    rmse_cells(r.ekf_rmse.as_ref())
                );
            }
        }
        if self.rows.iter().any(|r| r.system == Builtin::Example1) {
            for (name, vals) in CITED_SQRT_MU {
                for (t, v) in THETA_GRID.iter().zip(vals) {
                    let _ = write!(out, "cited,{name},example1,{},{},{name},observer,,,,{v:.6e}", t.0, t.1);
                    out.push_str(&",".repeat(width));
                    out.push('\n');
                }
            }
        }
        if self.rows.iter().any(|r| r.system == Builtin::Battery) {
            for (name, vals) in CITED_BATTERY_RMSE {
                let est = if name.contains("EKF") { "ekf" } else { "observer" };
                let cells: Vec<String> = (0..width).map(|i| vals.get(i).map_or_else(String::new, |x| format!("{x:.6e}"))).collect();
                let _ = writeln!(out, "cited,{name},battery,,,{name},{est},,,,,{}", cells.join(","));
            }
        }
        out
    }

    /// Example-1 bundles as a method × (θ₁, θ₂) grid of √μ; battery bundles
    /// as an estimator × state grid of RMSE.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let ex: Vec<&BundleRow> = self.rows.iter().filter(|r| r.system == Builtin::Example1).collect();
        if !ex.is_empty() {
            let mut cols: Vec<(f64, f64)> = THETA_GRID.to_vec();
            for r in &ex {
                let t = r.theta.expect("example rows carry theta");
                if !cols.iter().any(|&c| same_theta(c, t)) {
                    cols.push(t);
                }
            }
            let mut methods: Vec<&str> = Vec::new();
            for r in &ex {
                if !methods.contains(&r.method.as_str()) {
                    methods.push(&r.method);
                }
            }
            let _ = writeln!(out, "sqrt(mu) by (theta1, theta2)");
            let _ = write!(out, "{:<42}", "method");
            for c in &cols {
                let _ = write!(out, " {:>14}", format!("({}, {})", c.0, c.1));
            }
            out.push('\n');
            for m in methods {
                let _ = write!(out, "{m:<42}");
                for &c in &cols {
                    let cell = ex
                        .iter()
                        .filter(|r| r.method == m && same_theta(r.theta.expect("theta"), c))
                        .last()
                        .map_or_else(
                            || "-".to_string(),
                            |r| match (r.feasible, r.sqrt_mu, r.verified) {
                                (true, Some(s), Some(false)) => format!("{s:.4e}*"),
                                (true, Some(s), _) => format!("{s:.4e}"),
                                _ => "inf".to_string(),
                            },
                        );
                    let _ = write!(out, " {cell:>14}");
                }
                out.push('\n');
            }
            for (name, vals) in CITED_SQRT_MU {
                let _ = write!(out, "{:<42}", format!("{name} (cited)"));
                for &c in &cols {
                    let cell = THETA_GRID
                        .iter()
                        .position(|&g| same_theta(g, c))
                        .map_or_else(|| "-".to_string(), |i| format!("{:.4}", vals[i]));
                    let _ = write!(out, " {cell:>14}");
                }
                out.push('\n');
            }
            if ex.iter().any(|r| r.verified == Some(false)) {
                let _ = writeln!(out, "* failed verification");
            }
            out.push('\n');
        }
        let bat: Vec<&BundleRow> = self.rows.iter().filter(|r| r.system == Builtin::Battery).collect();
        if !bat.is_empty() {
            let _ = writeln!(out, "RMSE of the estimation error");
            let _ = writeln!(out, "{:<42} {:>12} {:>12} {:>12}", "estimator", "x1", "x2", "x3 (SoC)");
            let line = |out: &mut String, name: &str, v: &[f64]| {
                let _ = write!(out, "{name:<42}");
                for x in v {
                    let _ = write!(out, " {x:>12.4e}");
                }
                out.push('\n');
            };
            for r in &bat {
                match &r.observer_rmse {
                    Some(v) => line(&mut out, &format!("{} observer ({})", r.label, r.method), v),
                    None => {
                        let _ = writeln!(out, "{:<42} {}", format!("{} observer", r.label), if r.feasible { "not simulated" } else { "infeasible" });
                    }
                }
                if let Some(v) = &r.ekf_rmse {
                    line(&mut out, &format!("{} EKF", r.label), v);
                }
            }
            for (name, vals) in CITED_BATTERY_RMSE {
                line(&mut out, &format!("{name} (cited)"), &vals);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bundle_is_an_error() {
        assert!(matches!(compare_report(&[PathBuf::from("a")]), Err(CompareError::TooFew(1))));
        assert!(matches!(compare_report(&[]), Err(CompareError::TooFew(0))));
    }

    #[test]
    fn missing_bundle_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let r = compare_report(&[tmp.path().join("a"), tmp.path().join("b")]);
        assert!(matches!(r, Err(CompareError::Bundle(..))));
    }
}
