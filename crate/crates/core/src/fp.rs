//! Uplink SINR, sum rate, and the Lagrangian-dual / quadratic-transform
//! reformulation with auxiliaries γ (per-user SINR) and ω (complex weights).

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm_sqr, CMatrix, CVector, C64};
use crate::{IsacError, Result};

/// Everything the rate expressions depend on besides (u, q).
#[derive(Debug, Clone)]
pub struct RateContext {
    pub h: Vec<CVector>,
    pub a_r: CVector,
    /// |α|²‖Wᴴa_t‖², the echo power that leaks into communication decoding.
    pub leak: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpState {
    pub gamma: Vec<f64>,
    pub omega: Vec<C64>,
}

/// |α|²‖Wᴴa_t‖²
pub fn leakage_power(alpha: C64, w: &CMatrix, a_t: &[C64]) -> f64 {
    alpha.norm_sqr() * norm_sqr(&w.adjoint_mul_vec(a_t))
}

impl RateContext {
    pub fn k_users(&self) -> usize {
        self.h.len()
    }

    /// Interference from other users, echo leakage and filtered noise seen by user k's filter.
    fn interference(&self, k: usize, u: &[CVector], q: &[f64]) -> f64 {
        let uk = &u[k];
        let others: f64 = (0..self.k_users()).filter(|&i| i != k).map(|i| q[i] * dot(uk, &self.h[i]).norm_sqr()).sum();
        others + self.leak * dot(uk, &self.a_r).norm_sqr() + self.sigma2 * norm_sqr(uk)
    }

    /// Desired signal plus everything in [`Self::interference`].
    pub fn total_power(&self, k: usize, u: &[CVector], q: &[f64]) -> f64 {
        q[k] * dot(&u[k], &self.h[k]).norm_sqr() + self.interference(k, u, q)
    }

    pub fn sinr(&self, k: usize, u: &[CVector], q: &[f64]) -> f64 {
        let den = self.interference(k, u, q);
        if den <= 0.0 {
            return 0.0;
        }
        q[k] * dot(&u[k], &self.h[k]).norm_sqr() / den
    }

    /// Σ_k ln(1 + SINR_k) in nats.
    pub fn sum_rate(&self, u: &[CVector], q: &[f64]) -> f64 {
        (0..self.k_users()).map(|k| self.sinr(k, u, q).ln_1p()).sum()
    }

    pub fn update_gamma(&self, k: usize, u: &[CVector], q: &[f64]) -> Result<f64> {
        if self.interference(k, u, q) <= 0.0 {
            return Err(IsacError::Degenerate(format!("user {k}: SINR denominator vanishes (zero filter)")));
        }
        Ok(self.sinr(k, u, q))
    }

    pub fn update_omega(&self, k: usize, gamma: f64, u: &[CVector], q: &[f64]) -> Result<C64> {
        let den = self.total_power(k, u, q);
        if den <= 0.0 {
            return Err(IsacError::Degenerate(format!("user {k}: quadratic-transform denominator vanishes")));
        }
        Ok((1.0 + gamma).sqrt() * q[k].sqrt() * dot(&u[k], &self.h[k]) / den)
    }

    /// Closed-form refresh of both auxiliaries; afterwards R₂ equals the true sum rate.
    pub fn refresh(&self, u: &[CVector], q: &[f64]) -> Result<FpState> {
        let mut gamma = Vec::with_capacity(self.k_users());
        let mut omega = Vec::with_capacity(self.k_users());
        for k in 0..self.k_users() {
            let g = self.update_gamma(k, u, q)?;
            omega.push(self.update_omega(k, g, u, q)?);
            gamma.push(g);
        }
        Ok(FpState { gamma, omega })
    }

    /// Lagrangian-dual form Σ ln(1+γ) − γ + (1+γ)·q|uᴴh|²/total.
    pub fn r1(&self, gamma: &[f64], u: &[CVector], q: &[f64]) -> f64 {
        (0..self.k_users())
            .map(|k| {
                let g = gamma[k];
                let tot = self.total_power(k, u, q);
                let frac = if tot > 0.0 { q[k] * dot(&u[k], &self.h[k]).norm_sqr() / tot } else { 0.0 };
                g.ln_1p() - g + (1.0 + g) * frac
            })
            .sum()
    }

    /// Quadratic-transform form
    /// Σ ln(1+γ) − γ + 2Re{ω*√(1+γ)√q uᴴh} − |ω|²·total.
    pub fn r2(&self, fp: &FpState, u: &[CVector], q: &[f64]) -> f64 {
        (0..self.k_users())
            .map(|k| {
                let g = fp.gamma[k];
                let w = fp.omega[k];
                let lin = 2.0 * (w.conj() * (1.0 + g).sqrt() * q[k].sqrt() * dot(&u[k], &self.h[k])).re;
                g.ln_1p() - g + lin - w.norm_sqr() * self.total_power(k, u, q)
            })
            .sum()
    }

    /// The part of R₂ that does not involve the echo leakage: R₂ = r2_without_leak − Σ|ω|²·leak·|uᴴa_r|².
    pub fn r2_without_leak(&self, fp: &FpState, u: &[CVector], q: &[f64]) -> f64 {
        let leak_part: f64 =
            (0..self.k_users()).map(|k| fp.omega[k].norm_sqr() * self.leak * dot(&u[k], &self.a_r).norm_sqr()).sum();
        self.r2(fp, u, q) + leak_part
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, rng_for};
    use rand_chacha::ChaCha20Rng;

    fn rand_vec(rng: &mut ChaCha20Rng, n: usize) -> CVector {
        (0..n).map(|_| complex_gaussian(rng, 1.0)).collect()
    }

    fn random_point(seed: u64) -> (RateContext, Vec<CVector>, Vec<f64>) {
        let mut rng = rng_for(seed, 5);
        let k = 3;
        let n = 4;
        let ctx = RateContext {
            h: (0..k).map(|_| rand_vec(&mut rng, n)).collect(),
            a_r: rand_vec(&mut rng, n),
            leak: 0.3,
            sigma2: 0.1,
        };
        let u = (0..k).map(|_| rand_vec(&mut rng, n)).collect();
        (ctx, u, vec![0.5, 1.0, 2.0])
    }

    #[test]
    fn single_user_no_beam() {
        let h = vec![C64::new(1.0, 1.0), C64::new(0.0, 2.0)];
        let u = vec![vec![C64::new(0.5, 0.0), C64::new(0.0, -1.0)]];
        let ctx = RateContext { h: vec![h.clone()], a_r: vec![C64::new(1.0, 0.0); 2], leak: 0.0, sigma2: 0.2 };
        let expect = 3.0 * dot(&u[0], &h).norm_sqr() / (0.2 * norm_sqr(&u[0]));
        assert!((ctx.sinr(0, &u, &[3.0]) - expect).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_filter_has_zero_sinr() {
        let ctx = RateContext {
            h: vec![vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]],
            a_r: vec![C64::new(0.0, 0.0); 2],
            leak: 1.0,
            sigma2: 1.0,
        };
        assert_eq!(ctx.sinr(0, &[vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]], &[1.0]), 0.0);
    }

    #[test]
    fn sinr_term_by_term() {
        let (ctx, u, q) = random_point(1);
        for k in 0..3 {
            let mut den = ctx.sigma2 * norm_sqr(&u[k]);
            for i in 0..3 {
                if i != k {
                    den += q[i] * dot(&u[k], &ctx.h[i]).norm_sqr();
                }
            }
            den += ctx.leak * dot(&u[k], &ctx.a_r).norm_sqr();
            let num = q[k] * dot(&u[k], &ctx.h[k]).norm_sqr();
            assert!((ctx.sinr(k, &u, &q) - num / den).abs() <= 1e-12 * num / den);
        }
    }

    #[test]
    fn refresh_is_tight() {
        for seed in 0..20 {
            let (ctx, u, q) = random_point(seed);
            let fp = ctx.refresh(&u, &q).unwrap();
            let rate = ctx.sum_rate(&u, &q);
            assert!((ctx.r1(&fp.gamma, &u, &q) - rate).abs() <= 1e-9);
            assert!((ctx.r2(&fp, &u, &q) - rate).abs() <= 1e-9);
            for k in 0..3 {
                assert_eq!(fp.gamma[k], ctx.sinr(k, &u, &q));
            }
        }
    }

    #[test]
    fn omega_is_local_maximizer() {
        let (ctx, u, q) = random_point(3);
        let fp = ctx.refresh(&u, &q).unwrap();
        let base = ctx.r2(&fp, &u, &q);
        for k in 0..3 {
            for dir in [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)] {
                let mut p = fp.clone();
                p.omega[k] += dir * 1e-3 * fp.omega[k].norm().max(1e-3);
                assert!(ctx.r2(&p, &u, &q) < base);
            }
        }
    }

    #[test]
    fn zero_power_gives_zero_omega() {
        let (ctx, u, _) = random_point(4);
        let q = vec![0.0, 1.0, 1.0];
        let fp = ctx.refresh(&u, &q).unwrap();
        assert_eq!(fp.omega[0], C64::new(0.0, 0.0));
        assert_eq!(fp.gamma[0], 0.0);
    }

    #[test]
    fn zero_filter_is_degenerate() {
        let (ctx, mut u, q) = random_point(6);
        u[1] = vec![C64::new(0.0, 0.0); 4];
        assert!(ctx.refresh(&u, &q).is_err());
    }

    #[test]
    fn leak_split_is_consistent() {
        let (ctx, u, q) = random_point(8);
        let fp = ctx.refresh(&u, &q).unwrap();
        let no_leak = RateContext { leak: 0.0, ..ctx.clone() };
        assert!((ctx.r2_without_leak(&fp, &u, &q) - no_leak.r2(&fp, &u, &q)).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn auxiliaries_maximize_r2(seed in 0u64..1000, dg in -0.5f64..0.5, dre in -0.5f64..0.5, dim in -0.5f64..0.5) {
            let (ctx, u, q) = random_point(seed);
            let best = ctx.refresh(&u, &q).unwrap();
            let mut other = best.clone();
            other.gamma[0] = (other.gamma[0] + dg).max(0.0);
            let mag = other.omega[0].norm();
            other.omega[0] += C64::new(dre, dim) * mag;
            proptest::prop_assert!(ctx.r2(&other, &u, &q) <= ctx.r2(&best, &u, &q) + 1e-12);
        }
    }
}
