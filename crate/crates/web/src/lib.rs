//! Browser bindings: each export returns a JSON string, or an error string
//! prefixed with `error:`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use lipobs::apps::{build_battery, build_example1, BatteryParams};
use lipobs::lmi::{synthesize, MultiplierLevel, SynthesisOptions, SynthesisProblem, Theorem};
use lipobs::matrixcore::{to_rows, DenseVector, SymMatrix};
use lipobs::sdp::SolveOptions;
use lipobs::sim::{ekf_baseline, rmse, simulate_observer, simulate_plant, InputProfile, NoiseSpec};

#[derive(Serialize)]
pub struct Design {
    pub status: String,
    pub sqrt_mu: Option<f64>,
    pub gain: Option<Vec<Vec<f64>>>,
    pub verified: Option<bool>,
    pub iterations: usize,
    pub vertices: u128,
}

#[derive(Serialize)]
pub struct BatteryRun {
    pub gain: Vec<f64>,
    pub sqrt_mu: f64,
    pub soc: Vec<f64>,
    pub soc_observer: Vec<f64>,
    pub soc_ekf: Vec<f64>,
    pub rmse_observer: Vec<f64>,
    pub rmse_ekf: Vec<f64>,
}

#[derive(Serialize)]
pub struct Curve {
    pub soc: Vec<f64>,
    pub ocv: Vec<f64>,
    pub slope: Vec<f64>,
}

fn json<T: Serialize>(r: Result<T, String>) -> String {
    match r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())) {
        Ok(s) => s,
        Err(e) => format!("error: {e}"),
    }
}

pub fn design_example1_impl(theta1: f64, theta2: f64, theorem: &str, level: &str) -> Result<Design, String> {
    let theorem = Theorem::parse(theorem).ok_or_else(|| format!("unknown condition `{theorem}`"))?;
    let level = MultiplierLevel::parse(level).ok_or_else(|| format!("unknown multiplier level `{level}`"))?;
    let opts = SynthesisOptions {
        theorem,
        z_level: level,
        s_level: level,
        ..SynthesisOptions::default()
    };
    let prob = SynthesisProblem::normalized(&build_example1(theta1, theta2), opts).map_err(|e| e.to_string())?;
    let out = synthesize(&prob, &SolveOptions::default(), 100, 7).map_err(|e| e.to_string())?;
    let res = out.result.as_ref();
    Ok(Design {
        status: out.status().label().to_string(),
        sqrt_mu: res.map(|r| r.sqrt_mu()),
        gain: res.map(|r| to_rows(&r.l)),
        verified: res.and_then(|r| r.verification.as_ref()).map(|v| v.passed()),
        iterations: out.solution.iterations,
        vertices: prob.vertex_count(),
    })
}

pub fn simulate_battery_impl(seed: u64, horizon: usize, noise_std: f64) -> Result<BatteryRun, String> {
    let bs = build_battery(&BatteryParams::default()).map_err(|e| e.to_string())?;
    let prob = SynthesisProblem::normalized(&bs, SynthesisOptions::default()).map_err(|e| e.to_string())?;
    let out = synthesize(&prob, &SolveOptions::default(), 0, 7).map_err(|e| e.to_string())?;
    let res = out.result.ok_or_else(|| format!("synthesis {}", out.solution.status.label()))?;
    let sys = &bs.system;
    let u = InputProfile::default().generate(1, horizon).map_err(|e| e.to_string())?;
    let w = NoiseSpec::gaussian(0.0, noise_std, seed).generate(1, horizon).map_err(|e| e.to_string())?;
    let x0 = DenseVector::from_column_slice(&[0.0, 0.0, 0.8]);
    let xh0 = DenseVector::from_column_slice(&[0.0, 0.0, 0.5]);
    let plant = simulate_plant(sys, &x0, &u, &w).map_err(|e| e.to_string())?;
    let obs = simulate_observer(sys, &res.l, &xh0, &plant.outputs, &u).map_err(|e| e.to_string())?;
    let var = noise_std.powi(2).max(1e-12);
    let q = SymMatrix::symmetric_part(&(&sys.e * var * sys.e.transpose()));
    let rn = SymMatrix::symmetric_part(&(&sys.d * var * sys.d.transpose()));
    let p0 = SymMatrix::from_diagonal(&[1e-4, 1e-4, 1.0 / 12.0]);
    let ekf = ekf_baseline(sys, &xh0, &p0, &q, &rn, &plant.outputs, &u).map_err(|e| e.to_string())?;
    let k = plant.states.len().min(obs.states.len()).min(ekf.predicted.states.len());
    let soc = |v: &[DenseVector]| v[..k].iter().map(|x| x[2]).collect::<Vec<_>>();
    Ok(BatteryRun {
        gain: res.l.iter().copied().collect(),
        sqrt_mu: res.sqrt_mu(),
        soc: soc(&plant.states),
        soc_observer: soc(&obs.states),
        soc_ekf: soc(&ekf.predicted.states),
        rmse_observer: rmse(&plant.states[..k], &obs.states[..k]).map_err(|e| e.to_string())?,
        rmse_ekf: rmse(&plant.states[..k], &ekf.predicted.states[..k]).map_err(|e| e.to_string())?,
    })
}

pub fn ocv_curve_impl(points: usize) -> Curve {
    let f = BatteryParams::default().ocv_fn();
    let n = points.max(2);
    let soc: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let h = 1e-6;
    Curve {
        ocv: soc.iter().map(|&s| f.eval(&[s])).collect(),
        slope: soc.iter().map(|&s| (f.eval(&[s + h]) - f.eval(&[s - h])) / (2.0 * h)).collect(),
        soc,
    }
}

/// Example-1 synthesis; `theorem` is T1 or T2, `level` a multiplier level name.
#[wasm_bindgen]
pub fn design_example1(theta1: f64, theta2: f64, theorem: &str, level: &str) -> String {
    json(design_example1_impl(theta1, theta2, theorem, level))
}

/// Battery design plus one noisy run of the plant, the observer and the EKF.
#[wasm_bindgen]
pub fn simulate_battery(seed: u32, horizon: u32, noise_std: f64) -> String {
    json(simulate_battery_impl(seed as u64, horizon as usize, noise_std))
}

#[wasm_bindgen]
pub fn ocv_curve(points: u32) -> String {
    json(Ok(ocv_curve_impl(points as usize)))
}
