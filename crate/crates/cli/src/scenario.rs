//! Scenario files: JSON with the unit in every key name.

use std::path::Path;

use anyhow::{bail, Context};
use ma_isac::config::{bits_to_nats, dbm_to_watts, nats_to_bits, watts_to_dbm};
use ma_isac::{Mode, SolveOptions, SystemConfig, C64};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub n_t: usize,
    pub n_r: usize,
    pub k_users: usize,
    pub l_slots: usize,
    pub paths_per_user: usize,
    pub wavelength_m: f64,
    pub d_max_m: f64,
    pub d_min_m: f64,
    pub p_bs_dbm: f64,
    pub p_u_dbm: f64,
    pub r_t_bits: f64,
    pub sigma2_dbm: f64,
    pub theta0_deg: f64,
    /// Target reflection coefficient magnitude and phase.
    pub alpha_abs: f64,
    pub alpha_phase_rad: f64,
    pub ref_gain_1m: f64,
    pub path_loss_exponent: f64,
    pub user_distance_m: f64,
    pub max_outer: usize,
    pub tol: f64,
    /// Sweep axes. A missing axis means "the scalar above"; an empty list means no runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_dbm_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_r_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_list: Option<Vec<Mode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

impl Default for Scenario {
    fn default() -> Self {
        let cfg = SystemConfig::default();
        let opts = SolveOptions::default();
        Self {
            n_t: cfg.n_t,
            n_r: cfg.n_r,
            k_users: cfg.k_users,
            l_slots: cfg.l_slots,
            paths_per_user: cfg.l1,
            wavelength_m: cfg.wavelength,
            d_max_m: cfg.d_max,
            d_min_m: cfg.d_min,
            p_bs_dbm: watts_to_dbm(cfg.p_bs),
            p_u_dbm: watts_to_dbm(cfg.p_u[0]),
            r_t_bits: nats_to_bits(cfg.r_t),
            sigma2_dbm: watts_to_dbm(cfg.sigma2),
            // rounded so print-defaults shows 30 rather than 29.999…
            theta0_deg: (cfg.theta0.to_degrees() * 1e9).round() / 1e9,
            alpha_abs: cfg.alpha.norm(),
            alpha_phase_rad: cfg.alpha.arg(),
            ref_gain_1m: cfg.c0,
            path_loss_exponent: cfg.alpha_loss,
            user_distance_m: cfg.d_user[0],
            max_outer: opts.max_outer,
            tol: opts.tol,
            power_dbm_list: None,
            n_r_list: None,
            mode_list: Some(vec![Mode::Ma, Mode::Fpa]),
            seeds: Some(vec![cfg.rng_seed]),
        }
    }
}

/// One (power, N_r, mode, seed) solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPoint {
    pub id: String,
    pub p_bs_dbm: f64,
    pub n_r: usize,
    pub mode: Mode,
    pub seed: u64,
    pub cfg: SystemConfig,
    pub opts: SolveOptions,
}

impl Scenario {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn config(&self, p_bs_dbm: f64, n_r: usize, seed: u64) -> anyhow::Result<SystemConfig> {
        let k = self.k_users;
        let cfg = SystemConfig {
            n_t: self.n_t,
            n_r,
            k_users: k,
            l_slots: self.l_slots,
            wavelength: self.wavelength_m,
            d_max: self.d_max_m,
            d_min: self.d_min_m,
            p_bs: dbm_to_watts(p_bs_dbm),
            p_u: vec![dbm_to_watts(self.p_u_dbm); k],
            r_t: bits_to_nats(self.r_t_bits),
            sigma2: dbm_to_watts(self.sigma2_dbm),
            theta0: self.theta0_deg.to_radians(),
            alpha: C64::from_polar(self.alpha_abs, self.alpha_phase_rad),
            l1: self.paths_per_user,
            c0: self.ref_gain_1m,
            alpha_loss: self.path_loss_exponent,
            d_user: vec![self.user_distance_m; k],
            rng_seed: seed,
            ..SystemConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cartesian product of the sweep axes, in file order.
    pub fn points(&self) -> anyhow::Result<Vec<RunPoint>> {
        if !(self.tol >= 0.0) {
            bail!("tol must be non-negative");
        }
        let powers = self.power_dbm_list.clone().unwrap_or_else(|| vec![self.p_bs_dbm]);
        let n_rs = self.n_r_list.clone().unwrap_or_else(|| vec![self.n_r]);
        let modes = self.mode_list.clone().unwrap_or_else(|| vec![Mode::Ma, Mode::Fpa]);
        let seeds = self.seeds.clone().unwrap_or_else(|| vec![1]);
        let mut out = Vec::new();
        for &p in &powers {
            for &n_r in &n_rs {
                for &mode in &modes {
                    for &seed in &seeds {
                        out.push(RunPoint {
                            id: format!("{}_p{}_nr{}_s{}", mode.as_str(), p, n_r, seed),
                            p_bs_dbm: p,
                            n_r,
                            mode,
                            seed,
                            cfg: self.config(p, n_r, seed)?,
                            opts: SolveOptions { mode, max_outer: self.max_outer, tol: self.tol, ..SolveOptions::default() },
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn defaults_round_trip_to_core_defaults() {
        let s = Scenario::default();
        let cfg = s.config(s.p_bs_dbm, s.n_r, 1).unwrap();
        let d = SystemConfig::default();
        assert!((cfg.p_bs - d.p_bs).abs() < 1e-15 && (cfg.sigma2 - d.sigma2).abs() < 1e-24);
        assert!((cfg.r_t - d.r_t).abs() < 1e-12 && (cfg.theta0 - d.theta0).abs() < 1e-12);
        assert_eq!((cfg.n_t, cfg.n_r, cfg.k_users, cfg.l1), (d.n_t, d.n_r, d.k_users, d.l1));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<Scenario>(r#"{"p_bs_watts": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn missing_axes_fall_back_and_empty_axes_yield_nothing() {
        let s: Scenario = serde_json::from_str(r#"{"seeds": [3, 4], "mode_list": ["ma"]}"#).unwrap();
        let pts = s.points().unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].id, "ma_p20_nr4_s4");
        let s: Scenario = serde_json::from_str(r#"{"power_dbm_list": []}"#).unwrap();
        assert!(s.points().unwrap().is_empty());
    }

    #[test]
    fn invalid_geometry_is_an_error() {
        let s: Scenario = serde_json::from_str(r#"{"n_r_list": [40]}"#).unwrap();
        assert!(s.points().is_err());
    }
}
