//! Scenario scalars in SI units (watts, meters, radians, nats).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::C64;
use crate::{IsacError, Result};

/// Whether receive-antenna positions are optimized (movable antennas) or frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ma,
    Fpa,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ma => "ma",
            Mode::Fpa => "fpa",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ma" => Ok(Mode::Ma),
            "fpa" => Ok(Mode::Fpa),
            other => Err(format!("unknown mode '{other}' (expected 'ma' or 'fpa')")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub k_users: usize,
    /// Coherent slots per sensing frame.
    pub l_slots: usize,
    pub wavelength: f64,
    pub d_max: f64,
    pub d_min: f64,
    pub p_bs: f64,
    pub p_u: Vec<f64>,
    /// Sum-rate threshold in nats/s/Hz.
    pub r_t: f64,
    pub sigma2: f64,
    pub theta0: f64,
    pub alpha: C64,
    pub beta_t: C64,
    pub beta_r: C64,
    /// Paths per user.
    pub l1: usize,
    pub c0: f64,
    pub alpha_loss: f64,
    pub d_user: Vec<f64>,
    pub rng_seed: u64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * std::f64::consts::LN_2
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

impl Default for SystemConfig {
    fn default() -> Self {
        let k = 2;
        Self {
            n_t: 4,
            n_r: 4,
            k_users: k,
            l_slots: 1024,
            wavelength: 0.1,
            d_max: 0.6,
            d_min: 0.05,
            p_bs: dbm_to_watts(20.0),
            p_u: vec![dbm_to_watts(10.0); k],
            r_t: bits_to_nats(4.0),
            sigma2: dbm_to_watts(-80.0),
            theta0: PI / 6.0,
            alpha: C64::new(1e-5, 0.0),
            beta_t: C64::new(1.0, 0.0),
            beta_r: C64::new(1.0, 0.0),
            l1: 10,
            c0: 1e-3,
            alpha_loss: 2.8,
            d_user: vec![50.0; k],
            rng_seed: 1,
        }
    }
}

impl SystemConfig {
    /// Wavenumber 2π/λ.
    pub fn kappa(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Resizes the per-user vectors to `k_users`, repeating the first entry.
    pub fn with_users(mut self, k: usize) -> Self {
        let pu = self.p_u.first().copied().unwrap_or(dbm_to_watts(10.0));
        let du = self.d_user.first().copied().unwrap_or(50.0);
        self.k_users = k;
        self.p_u = vec![pu; k];
        self.d_user = vec![du; k];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IsacError::InvalidConfig(msg));
        if self.n_t == 0 || self.n_r == 0 || self.k_users == 0 || self.l1 == 0 || self.l_slots == 0 {
            return bad("antenna, user, path and slot counts must be positive".into());
        }
        if self.p_u.len() != self.k_users || self.d_user.len() != self.k_users {
            return bad(format!(
                "p_u has {} and d_user has {} entries, expected k_users = {}",
                self.p_u.len(),
                self.d_user.len(),
                self.k_users
            ));
        }
        let positive = [
            ("wavelength", self.wavelength),
            ("d_min", self.d_min),
            ("d_max", self.d_max),
            ("p_bs", self.p_bs),
            ("sigma2", self.sigma2),
            ("c0", self.c0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.p_u.iter().chain(&self.d_user).any(|&v| !(v.is_finite() && v > 0.0)) {
            return bad("user powers and distances must be positive".into());
        }
        if (self.n_r as f64 - 1.0) * self.d_min > self.d_max * (1.0 + 1e-12) {
            return bad(format!(
                "{} receive antennas with spacing {} do not fit in aperture {}",
                self.n_r, self.d_min, self.d_max
            ));
        }
        if !(self.theta0.abs() < PI / 2.0) {
            return bad(format!("theta0 must lie in (-pi/2, pi/2), got {}", self.theta0));
        }
        if !(self.r_t.is_finite() && self.r_t >= 0.0) {
            return bad(format!("r_t must be non-negative, got {}", self.r_t));
        }
        if self.alpha.norm() == 0.0 || self.beta_r.norm() == 0.0 || self.beta_t.norm() == 0.0 {
            return bad("alpha, beta_t and beta_r must be non-zero".into());
        }
        if !self.alpha_loss.is_finite() {
            return bad("alpha_loss must be finite".into());
        }
        Ok(())
    }
}
