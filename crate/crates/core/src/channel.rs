//! Geometric field-response channels and target steering vectors.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::linalg::{CVector, C64, J};

/// RNG stream identifiers so that each consumer of a seed draws from an independent sequence.
pub mod streams {
    pub const CHANNEL: u64 = 1;
    pub const BEAMFORMER_INIT: u64 = 2;
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub wavelength: f64,
    /// Per-user angles of departure at the user side.
    pub theta_t: Vec<Vec<f64>>,
    /// Per-user angles of arrival at the base station.
    pub theta_r: Vec<Vec<f64>>,
    /// Diagonal of each user's path-response matrix.
    pub sigma: Vec<CVector>,
    pub d_t: Vec<f64>,
    pub d_r: Vec<f64>,
    /// User-side field-response vectors (single antenna at the origin).
    pub h0: Vec<CVector>,
}

/// Entry i is exp(j·2π/λ·d·sin(angle_i)).
pub fn field_response(d: f64, angles: &[f64], wavelength: f64) -> CVector {
    let kappa = 2.0 * std::f64::consts::PI / wavelength;
    angles.iter().map(|&a| C64::from_polar(1.0, kappa * d * a.sin())).collect()
}

/// Positions 0, s, 2s, … with s = max(d_min, d_max/(n−1)), the widest uniform array in the aperture.
pub fn uniform_positions(n: usize, d_min: f64, d_max: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0; n];
    }
    let s = d_min.max(d_max / (n as f64 - 1.0));
    (0..n).map(|i| i as f64 * s).collect()
}

/// Half-wavelength uniform array.
pub fn half_wave_positions(n: usize, wavelength: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * wavelength / 2.0).collect()
}

/// Spacing ≥ d_min, first ≥ 0, last ≤ d_max, each up to `tol` meters.
pub fn positions_feasible(d: &[f64], d_min: f64, d_max: f64, tol: f64) -> bool {
    if d.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let (Some(&first), Some(&last)) = (d.first(), d.last()) else {
        return true;
    };
    first >= -tol && last <= d_max + tol && d.windows(2).all(|w| w[1] - w[0] >= d_min - tol)
}

pub fn sample_channel(cfg: &SystemConfig) -> ChannelState {
    let mut rng = rng_for(cfg.rng_seed, streams::CHANNEL);
    let k = cfg.k_users;
    let l1 = cfg.l1;
    let angle = |rng: &mut ChaCha20Rng| rng.random_range(-FRAC_PI_2..FRAC_PI_2);
    let theta_t: Vec<Vec<f64>> = (0..k).map(|_| (0..l1).map(|_| angle(&mut rng)).collect()).collect();
    let theta_r: Vec<Vec<f64>> = (0..k).map(|_| (0..l1).map(|_| angle(&mut rng)).collect()).collect();
    let sigma = (0..k)
        .map(|u| {
            let var = cfg.c0 * cfg.d_user[u].powf(-cfg.alpha_loss) / l1 as f64;
            (0..l1).map(|_| complex_gaussian(&mut rng, var)).collect()
        })
        .collect();
    let h0 = theta_t.iter().map(|th| field_response(0.0, th, cfg.wavelength)).collect();
    ChannelState {
        wavelength: cfg.wavelength,
        theta_t,
        theta_r,
        sigma,
        d_t: half_wave_positions(cfg.n_t, cfg.wavelength),
        d_r: uniform_positions(cfg.n_r, cfg.d_min, cfg.d_max),
        h0,
    }
}

/// Circularly-symmetric complex Gaussian with E|z|² = var.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

impl ChannelState {
    pub fn k_users(&self) -> usize {
        self.sigma.len()
    }

    /// Σ_kᴴ h_{0,k}, the path-domain weights seen by every receive antenna.
    pub fn path_weights(&self, k: usize) -> CVector {
        self.sigma[k].iter().zip(&self.h0[k]).map(|(s, h)| s.conj() * h).collect()
    }

    /// h_k at the current receive positions.
    pub fn user_channel(&self, k: usize) -> CVector {
        self.user_channel_at(k, &self.d_r)
    }

    /// h_k with h_kᴴ = h_{0,k}ᴴ Σ_k H_{0,k}(d_r).
    pub fn user_channel_at(&self, k: usize, d_r: &[f64]) -> CVector {
        let g = self.path_weights(k);
        d_r.iter()
            .map(|&d| {
                let col = field_response(d, &self.theta_r[k], self.wavelength);
                col.iter().zip(&g).map(|(e, gi)| e.conj() * gi).sum()
            })
            .collect()
    }

    pub fn all_user_channels(&self) -> Vec<CVector> {
        (0..self.k_users()).map(|k| self.user_channel(k)).collect()
    }
}

/// a[n] = β·e^{jκ d[n] sinθ} and its derivative in θ.
pub fn steering(d: &[f64], theta: f64, wavelength: f64, beta: C64) -> (CVector, CVector) {
    let kappa = 2.0 * std::f64::consts::PI / wavelength;
    let a: CVector = d.iter().map(|&x| beta * C64::from_polar(1.0, kappa * x * theta.sin())).collect();
    let a_dot = d.iter().zip(&a).map(|(&x, &an)| J * (kappa * x * theta.cos()) * an).collect();
    (a, a_dot)
}
