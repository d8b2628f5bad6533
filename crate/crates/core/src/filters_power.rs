//! Closed-form receive-filter and user-power updates at fixed (γ, ω, W, d_r).
//!
//! Both blocks maximize R₂, which widens the margin R₂ − R_t available to the
//! beamformer and position blocks.

use log::debug;

use crate::fp::{FpState, RateContext};
use crate::linalg::{dot, herm_solve, CMatrix, CVector, C64};
use crate::Result;

/// D_{1,k} and d_{1,k} of the per-user filter problem min uᴴDu − 2Re{uᴴd}.
pub fn filter_system(k: usize, fp: &FpState, q: &[f64], ctx: &RateContext) -> (CMatrix, CVector) {
    let n = ctx.a_r.len();
    let w2 = fp.omega[k].norm_sqr();
    let mut m = CMatrix::outer(&ctx.a_r, &ctx.a_r).scale_real(ctx.leak);
    for (h, &qi) in ctx.h.iter().zip(q) {
        m = &m + &CMatrix::outer(h, h).scale_real(qi);
    }
    let d_mat = m.add_scaled_identity(ctx.sigma2).scale_real(w2).hermitian_part();
    let coef = (1.0 + fp.gamma[k]).sqrt() * fp.omega[k].conj() * q[k].sqrt();
    let d_vec: CVector = ctx.h[k].iter().map(|z| coef * z).collect();
    debug_assert_eq!(d_vec.len(), n);
    (d_mat, d_vec)
}

/// uᴴDu − 2Re{uᴴd}
pub fn filter_objective(d_mat: &CMatrix, d_vec: &[C64], u: &[C64]) -> f64 {
    d_mat.quad_form(u).re - 2.0 * dot(u, d_vec).re
}

#[derive(Debug, Clone)]
pub struct FilterUpdate {
    pub u: Vec<CVector>,
    /// Users whose ω_k was zero, leaving the filter untouched.
    pub skipped: Vec<usize>,
}

pub fn update_filters(fp: &FpState, u_prev: &[CVector], q: &[f64], ctx: &RateContext) -> Result<FilterUpdate> {
    let mut u = Vec::with_capacity(u_prev.len());
    let mut skipped = Vec::new();
    for k in 0..ctx.k_users() {
        if fp.omega[k].norm_sqr() == 0.0 {
            debug!("user {k}: omega is zero, keeping previous filter");
            skipped.push(k);
            u.push(u_prev[k].clone());
            continue;
        }
        let (d_mat, d_vec) = filter_system(k, fp, q, ctx);
        u.push(herm_solve(&d_mat, &d_vec)?);
    }
    Ok(FilterUpdate { u, skipped })
}

/// (a₅,k, a₆,k) of the per-user power problem max −a₅p² + a₆p over p = √q ∈ [0, √P_u].
pub fn power_coefficients(k: usize, fp: &FpState, u: &[CVector], ctx: &RateContext) -> (f64, f64) {
    let a5: f64 = (0..ctx.k_users()).map(|j| fp.omega[j].norm_sqr() * dot(&u[j], &ctx.h[k]).norm_sqr()).sum();
    let a6 = 2.0 * (1.0 + fp.gamma[k]).sqrt() * (fp.omega[k].conj() * dot(&u[k], &ctx.h[k])).re;
    (a5, a6)
}

/// Minimizer of a₅p² − a₆p over [0, p_max], returned as p.
pub fn optimal_amplitude(a5: f64, a6: f64, p_max: f64) -> f64 {
    if a5 > 0.0 {
        (a6 / (2.0 * a5)).clamp(0.0, p_max)
    } else if a6 > 0.0 {
        p_max
    } else {
        0.0
    }
}

pub fn update_powers(fp: &FpState, u: &[CVector], ctx: &RateContext, p_u: &[f64]) -> Vec<f64> {
    (0..ctx.k_users())
        .map(|k| {
            let (a5, a6) = power_coefficients(k, fp, u, ctx);
            if a5 <= 0.0 {
                debug!("user {k}: a5 = {a5}, power objective is linear");
            }
            optimal_amplitude(a5, a6, p_u[k].sqrt()).powi(2).min(p_u[k])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, rng_for};
    use crate::linalg::{norm, scale_vec, sub_vec};
    use rand::Rng;
    use rand_chacha::ChaCha20Rng;

    fn rand_vec(rng: &mut ChaCha20Rng, n: usize) -> CVector {
        (0..n).map(|_| complex_gaussian(rng, 1.0)).collect()
    }

    fn setup(seed: u64, leak: f64) -> (RateContext, Vec<CVector>, Vec<f64>) {
        let mut rng = rng_for(seed, 9);
        let ctx = RateContext {
            h: (0..2).map(|_| rand_vec(&mut rng, 4)).collect(),
            a_r: rand_vec(&mut rng, 4),
            leak,
            sigma2: 0.05,
        };
        let u = (0..2).map(|_| rand_vec(&mut rng, 4)).collect();
        (ctx, u, vec![0.7, 1.3])
    }

    #[test]
    fn identity_system() {
        let u = herm_solve(&CMatrix::identity(3), &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        assert!((u[0] - 1.0).norm() < 1e-15 && u[1].norm() < 1e-15);
    }

    #[test]
    fn filters_are_stationary() {
        for seed in 0..20 {
            let (ctx, u0, q) = setup(seed, 0.4);
            let fp = ctx.refresh(&u0, &q).unwrap();
            let up = update_filters(&fp, &u0, &q, &ctx).unwrap();
            for k in 0..2 {
                let (d_mat, d_vec) = filter_system(k, &fp, &q, &ctx);
                let r = sub_vec(&d_mat.mul_vec(&up.u[k]), &d_vec);
                assert!(norm(&r) <= 1e-10 * norm(&d_vec), "seed {seed}: {}", norm(&r));
            }
        }
    }

    #[test]
    fn filters_beat_perturbations() {
        let mut rng = rng_for(1, 1);
        let (ctx, u0, q) = setup(2, 0.4);
        let fp = ctx.refresh(&u0, &q).unwrap();
        let up = update_filters(&fp, &u0, &q, &ctx).unwrap();
        for k in 0..2 {
            let (d_mat, d_vec) = filter_system(k, &fp, &q, &ctx);
            let best = filter_objective(&d_mat, &d_vec, &up.u[k]);
            for _ in 0..20 {
                let v = rand_vec(&mut rng, 4);
                let scale = 1e-3 * norm(&up.u[k]);
                let p: CVector = up.u[k].iter().zip(&v).map(|(a, b)| a + b * scale).collect();
                assert!(filter_objective(&d_mat, &d_vec, &p) >= best);
            }
        }
    }

    #[test]
    fn single_user_filter_is_mmse_direction() {
        let mut rng = rng_for(4, 4);
        let h = rand_vec(&mut rng, 3);
        let ctx = RateContext { h: vec![h.clone()], a_r: vec![C64::new(0.0, 0.0); 3], leak: 0.0, sigma2: 0.2 };
        let u0 = vec![rand_vec(&mut rng, 3)];
        let q = [1.5];
        let fp = ctx.refresh(&u0, &q).unwrap();
        let u = update_filters(&fp, &u0, &q, &ctx).unwrap().u;
        let mmse = herm_solve(&CMatrix::outer(&h, &h).scale_real(1.5).add_scaled_identity(0.2), &h).unwrap();
        // same direction up to a complex scalar
        let c = dot(&mmse, &u[0]) / dot(&mmse, &mmse);
        assert!(norm(&sub_vec(&u[0], &scale_vec(c, &mmse))) <= 1e-10 * norm(&u[0]));
    }

    #[test]
    fn rate_does_not_drop_after_filter_then_refresh() {
        for seed in 0..20 {
            let (ctx, u0, q) = setup(seed, 0.4);
            let fp = ctx.refresh(&u0, &q).unwrap();
            let before = ctx.sum_rate(&u0, &q);
            let u1 = update_filters(&fp, &u0, &q, &ctx).unwrap().u;
            assert!(ctx.r2(&fp, &u1, &q) >= before - 1e-12);
            assert!(ctx.sum_rate(&u1, &q) >= before - 1e-12);
        }
    }

    #[test]
    fn zero_omega_keeps_filter() {
        let (ctx, u0, _) = setup(5, 0.1);
        let q = vec![0.0, 1.0];
        let fp = ctx.refresh(&u0, &q).unwrap();
        let up = update_filters(&fp, &u0, &q, &ctx).unwrap();
        assert_eq!(up.skipped, vec![0]);
        assert_eq!(up.u[0], u0[0]);
    }

    #[test]
    fn amplitude_branches() {
        assert_eq!(optimal_amplitude(1.0, 4.0, 1.0), 1.0);
        assert_eq!(optimal_amplitude(1.0, -3.0, 1.0), 0.0);
        assert_eq!(optimal_amplitude(2.0, 2.0, 1.0), 0.5);
        assert_eq!(optimal_amplitude(0.0, 1.0, 0.3), 0.3);
        assert_eq!(optimal_amplitude(0.0, -1.0, 0.3), 0.0);
    }

    #[test]
    fn powers_respect_boxes_and_raise_r2() {
        for seed in 0..20 {
            let (ctx, u0, q0) = setup(seed, 0.4);
            let fp = ctx.refresh(&u0, &q0).unwrap();
            let p_u = [1.0, 2.0];
            let q = update_powers(&fp, &u0, &ctx, &p_u);
            for k in 0..2 {
                assert!(q[k] >= 0.0 && q[k] <= p_u[k]);
            }
            assert!(ctx.r2(&fp, &u0, &q) >= ctx.r2(&fp, &u0, &q0) - 1e-12);
        }
    }

    #[test]
    fn powers_match_grid() {
        let mut rng = rng_for(11, 11);
        for _ in 0..100 {
            let a5 = rng.random_range(0.01..3.0);
            let a6 = rng.random_range(-2.0..4.0);
            let pmax = rng.random_range(0.1..2.0);
            let p = optimal_amplitude(a5, a6, pmax);
            let f = |x: f64| a5 * x * x - a6 * x;
            let grid = (0..=10_000).map(|i| f(pmax * i as f64 / 10_000.0)).fold(f64::INFINITY, f64::min);
            assert!(f(p) <= grid + 1e-12);
        }
    }
}
