//! wasm-bindgen front for the solver. Every export takes plain numbers and
//! returns a JSON string, so the page needs no generated TypeScript types.

use ma_isac::channel::steering;
use ma_isac::config::{dbm_to_watts, nats_to_bits};
use ma_isac::linalg::dot;
use ma_isac::{bca_solve, initialize_from_seed, Mode, SolveOptions, SolverState, SystemConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct ModeResult {
    pub mode: &'static str,
    pub crb_trace: Vec<f64>,
    pub sum_rate_bits: f64,
    pub d_r: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub ma: ModeResult,
    pub fpa: ModeResult,
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub p_bs_dbm: f64,
    pub crb_ma: f64,
    pub crb_fpa: f64,
}

#[derive(Debug, Serialize)]
pub struct Beampattern {
    pub angles_deg: Vec<f64>,
    /// a_t(θ)ᴴWWᴴa_t(θ) normalized to its peak.
    pub transmit: Vec<f64>,
    /// |a_r(θ)ᴴa_r(θ₀)|/N_r at the final positions.
    pub receive: Vec<f64>,
    pub theta0_deg: f64,
}

fn config(p_bs_dbm: f64, n_r: usize, seed: u64) -> Result<SystemConfig, String> {
    let cfg = SystemConfig { p_bs: dbm_to_watts(p_bs_dbm), n_r, rng_seed: seed, ..SystemConfig::default() };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn solve(cfg: &SystemConfig, mode: Mode) -> Result<SolverState, String> {
    let init = initialize_from_seed(cfg).map_err(|e| e.to_string())?;
    // fewer position alternations keep the page responsive
    let opts = SolveOptions { mode, max_outer: 15, position_alternations: 20, ..SolveOptions::default() };
    Ok(bca_solve(init, cfg, &opts))
}

fn summarize(mode: Mode, s: &SolverState) -> ModeResult {
    let last = s.history.last().expect("history holds the initial point");
    ModeResult {
        mode: mode.as_str(),
        crb_trace: s.history.iter().map(|h| h.crb).collect(),
        sum_rate_bits: nats_to_bits(last.sum_rate),
        d_r: last.d_r.clone(),
        converged: s.converged(),
    }
}

pub fn compare_modes(p_bs_dbm: f64, n_r: usize, seed: u64) -> Result<Comparison, String> {
    let cfg = config(p_bs_dbm, n_r, seed)?;
    Ok(Comparison { ma: summarize(Mode::Ma, &solve(&cfg, Mode::Ma)?), fpa: summarize(Mode::Fpa, &solve(&cfg, Mode::Fpa)?) })
}

pub fn sweep_power(lo_dbm: f64, hi_dbm: f64, steps: usize, n_r: usize, seed: u64) -> Result<Vec<SweepPoint>, String> {
    if steps == 0 || steps > 16 || !(lo_dbm <= hi_dbm) {
        return Err("need 1 to 16 steps and lo ≤ hi".into());
    }
    (0..steps)
        .map(|i| {
            let p = if steps == 1 { lo_dbm } else { lo_dbm + (hi_dbm - lo_dbm) * i as f64 / (steps - 1) as f64 };
            let cfg = config(p, n_r, seed)?;
            Ok(SweepPoint { p_bs_dbm: p, crb_ma: solve(&cfg, Mode::Ma)?.final_crb(), crb_fpa: solve(&cfg, Mode::Fpa)?.final_crb() })
        })
        .collect()
}

pub fn beampattern(p_bs_dbm: f64, n_r: usize, seed: u64, movable: bool, points: usize) -> Result<Beampattern, String> {
    let cfg = config(p_bs_dbm, n_r, seed)?;
    let s = solve(&cfg, if movable { Mode::Ma } else { Mode::Fpa })?;
    let n = points.clamp(16, 2048);
    let angles_deg: Vec<f64> = (0..n).map(|i| -90.0 + 180.0 * i as f64 / (n - 1) as f64).collect();
    let (a_r0, _) = steering(&s.d_r, cfg.theta0, cfg.wavelength, cfg.beta_r);
    let mut transmit = Vec::with_capacity(n);
    let mut receive = Vec::with_capacity(n);
    for &deg in &angles_deg {
        let th = deg.to_radians();
        let (a_t, _) = steering(&s.channel.d_t, th, cfg.wavelength, cfg.beta_t);
        transmit.push(s.w.adjoint_mul_vec(&a_t).iter().map(|z| z.norm_sqr()).sum::<f64>());
        let (a_r, _) = steering(&s.d_r, th, cfg.wavelength, cfg.beta_r);
        receive.push(dot(&a_r, &a_r0).norm() / n_r as f64);
    }
    let peak = transmit.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    transmit.iter_mut().for_each(|v| *v /= peak);
    Ok(Beampattern { angles_deg, transmit, receive, theta0_deg: cfg.theta0.to_degrees() })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

/// MA vs FPA solve at one operating point.
#[wasm_bindgen(js_name = compareModes)]
pub fn compare_modes_js(p_bs_dbm: f64, n_r: u32, seed: u32) -> Result<String, JsValue> {
    to_js(compare_modes(p_bs_dbm, n_r as usize, seed as u64))
}

#[wasm_bindgen(js_name = sweepPower)]
pub fn sweep_power_js(lo_dbm: f64, hi_dbm: f64, steps: u32, n_r: u32, seed: u32) -> Result<String, JsValue> {
    to_js(sweep_power(lo_dbm, hi_dbm, steps as usize, n_r as usize, seed as u64))
}

#[wasm_bindgen(js_name = beampattern)]
pub fn beampattern_js(p_bs_dbm: f64, n_r: u32, seed: u32, movable: bool, points: u32) -> Result<String, JsValue> {
    to_js(beampattern(p_bs_dbm, n_r as usize, seed as u64, movable, points as usize))
}
