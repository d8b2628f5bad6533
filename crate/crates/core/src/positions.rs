//! Receive-antenna position update, one antenna at a time.
//!
//! For fixed W the CRB surrogate depends on d_r only through the spread of the
//! positions, so the objective is an exact quadratic dᵀA₄₃d + b₄ᵀd − c₁₆.
//! The sum-rate constraint R_t − R₂(d_r) ≤ 0 is trigonometric in each d_{r,n};
//! it is majorized by a scalar quadratic τ₃d² + b₁₄d + c₂₆ tangent at the
//! current position, whose sublevel set is an interval. Each scalar problem is
//! then a quadratic over an interval.

use log::debug;
use serde::Serialize;

use crate::channel::{field_response, ChannelState};
use crate::config::SystemConfig;
use crate::fp::FpState;
use crate::linalg::{dot, eigh, CMatrix, CVector, C64};
use crate::Result;

/// Coefficients that do not depend on d_r.
#[derive(Debug, Clone)]
pub struct GlobalCoefficients {
    pub a41: Vec<Vec<f64>>,
    pub a42: Vec<Vec<f64>>,
    pub a43: Vec<Vec<f64>>,
    pub b4: Vec<f64>,
    pub c16: f64,
    /// Per user i, the quadratic weight on vec(H_{0,i}) (index n·L1 + l).
    pub a6: Vec<CMatrix>,
    pub b7: Vec<CVector>,
    pub a9: CMatrix,
    pub c20: f64,
    /// W was orthogonal to a_t; the fraction in the CRB surrogate was dropped.
    pub degenerate: bool,
    kappa: f64,
    theta_r: Vec<Vec<f64>>,
    sin_theta0: f64,
    beta_r: C64,
    wavelength: f64,
    l1: usize,
}

/// Per-antenna scalar problem: minimize a₇d² + b₆d subject to τ₃d² + b₁₄d + c₂₆ ≤ 0 and the spacing box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositionSubproblem {
    pub a7: f64,
    pub b6: f64,
    pub tau3: f64,
    pub b14: f64,
    pub c26: f64,
    pub d0: f64,
    pub box_low: f64,
    pub box_up: f64,
    /// Exact constraint value R_t − R₂ at d0.
    pub g0: f64,
}

impl PositionSubproblem {
    pub fn surrogate(&self, d: f64) -> f64 {
        self.tau3 * d * d + self.b14 * d + self.c26
    }

    pub fn objective(&self, d: f64) -> f64 {
        self.a7 * d * d + self.b6 * d
    }
}

fn user_block(theta: &[f64], d: f64, wavelength: f64) -> CVector {
    field_response(d, theta, wavelength)
}

/// vec(H_{0,i}) at positions d_r.
fn stacked_response(theta: &[f64], d_r: &[f64], wavelength: f64) -> CVector {
    d_r.iter().flat_map(|&d| user_block(theta, d, wavelength)).collect()
}

pub fn build_global_coefficients(
    cfg: &SystemConfig,
    ch: &ChannelState,
    w: &CMatrix,
    u: &[CVector],
    q: &[f64],
    fp: &FpState,
) -> GlobalCoefficients {
    let n_r = u[0].len();
    let l1 = cfg.l1;
    let kappa = cfg.kappa();
    let c = kappa * cfg.theta0.cos();
    let bb = cfg.beta_r.norm_sqr();
    let (a_t, a_t_dot) = crate::sensing::transmit_steering(cfg, &ch.d_t);
    let wa = w.adjoint_mul_vec(&a_t);
    let wad = w.adjoint_mul_vec(&a_t_dot);
    let x = dot(&wa, &wa).re;
    let y = dot(&wad, &wa);
    let z = dot(&wad, &wad).re;
    let nrf = n_r as f64;
    let degenerate = x <= 1e-14 * (bb * nrf * crate::linalg::norm_sqr(&a_t)).max(f64::MIN_POSITIVE) * w.frobenius_norm().powi(2);

    // −(T₁ − |T₂|²/T₃) = dᵀ(A₄₂ − A₄₁)d + b₄ᵀd − c₁₆
    let (a41, a42, b4, c16) = if degenerate {
        let a41 = diag_matrix(n_r, bb * c * c * x);
        (a41, vec![vec![0.0; n_r]; n_r], vec![-2.0 * bb * c * y.im; n_r], bb * nrf * z)
    } else {
        let a41 = diag_matrix(n_r, bb * c * c * x);
        let a42 = vec![vec![bb * c * c * x / nrf; n_r]; n_r];
        // T₁ contributes −2Bc·Im(Y)·Σd and |T₂|²/T₃ contributes +2Bc·Im(Y)·Σd
        let b41 = -2.0 * bb * c * y.im;
        let b42 = 2.0 * bb * c * y.im;
        (a41, a42, vec![b41 + b42; n_r], bb * nrf * (z - y.norm_sqr() / x))
    };
    let a43 = (0..n_r).map(|i| (0..n_r).map(|j| a42[i][j] - a41[i][j]).collect()).collect();

    let k_users = u.len();
    let g: Vec<CVector> = (0..k_users).map(|i| ch.path_weights(i)).collect();
    let a6 = (0..k_users)
        .map(|i| {
            let mut m = CMatrix::zeros(n_r * l1, n_r * l1);
            for k in 0..k_users {
                let v = kron_conj(&u[k], &g[i]);
                m = &m + &CMatrix::outer(&v, &v).scale_real(fp.omega[k].norm_sqr() * q[i]);
            }
            m.hermitian_part()
        })
        .collect();
    let b7 = (0..k_users)
        .map(|i| {
            let v = kron_conj(&u[i], &g[i]);
            let coef = -2.0 * fp.omega[i].conj() * (1.0 + fp.gamma[i]).sqrt() * q[i].sqrt();
            v.iter().map(|z| coef * z).collect()
        })
        .collect();
    let leak = cfg.alpha.norm_sqr() * x;
    let mut a9 = CMatrix::zeros(n_r, n_r);
    for k in 0..k_users {
        a9 = &a9 + &CMatrix::outer(&u[k], &u[k]).scale_real(fp.omega[k].norm_sqr() * leak);
    }
    let c20: f64 = (0..k_users)
        .map(|k| {
            let gk = fp.gamma[k];
            gk.ln_1p() - gk - fp.omega[k].norm_sqr() * cfg.sigma2 * crate::linalg::norm_sqr(&u[k])
        })
        .sum::<f64>()
        - cfg.r_t;

    GlobalCoefficients {
        a41,
        a42,
        a43,
        b4,
        c16,
        a6,
        b7,
        a9: a9.hermitian_part(),
        c20,
        degenerate,
        kappa,
        theta_r: ch.theta_r.clone(),
        sin_theta0: cfg.theta0.sin(),
        beta_r: cfg.beta_r,
        wavelength: cfg.wavelength,
        l1,
    }
}

fn diag_matrix(n: usize, v: f64) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { v } else { 0.0 }).collect()).collect()
}

/// conj(u) ⊗ g, so that (conj(u)⊗g)ᴴ vec(H) = conj(uᴴ Hᴴ g).
fn kron_conj(u: &[C64], g: &[C64]) -> CVector {
    u.iter().flat_map(|un| g.iter().map(move |gl| un.conj() * gl)).collect()
}

impl GlobalCoefficients {
    pub fn n_r(&self) -> usize {
        self.a43.len()
    }

    /// dᵀA₄₃d + b₄ᵀd − c₁₆, the negated CRB surrogate.
    pub fn objective(&self, d: &[f64]) -> f64 {
        let n = d.len();
        let mut v = -self.c16;
        for i in 0..n {
            v += self.b4[i] * d[i];
            for j in 0..n {
                v += d[i] * self.a43[i][j] * d[j];
            }
        }
        v
    }

    fn a_r(&self, d: &[f64]) -> CVector {
        d.iter().map(|&x| self.beta_r * C64::from_polar(1.0, self.kappa * x * self.sin_theta0)).collect()
    }

    /// Σ_i (h̄ᴴA₆h̄ + Re{b₇ᴴh̄}) + a_rᴴA₉a_r − c₂₀, which equals R_t − R₂ at d.
    pub fn rate_lhs(&self, d: &[f64]) -> f64 {
        let mut v = -self.c20;
        for i in 0..self.a6.len() {
            let hb = stacked_response(&self.theta_r[i], d, self.wavelength);
            v += self.a6[i].quad_form(&hb).re + dot(&self.b7[i], &hb).re;
        }
        v + self.a9.quad_form(&self.a_r(d)).re
    }

    pub fn subproblem(&self, n: usize, d_r: &[f64], d_min: f64, d_max: f64) -> Result<PositionSubproblem> {
        let nr = d_r.len();
        let d0 = d_r[n];
        let a7 = self.a43[n][n];
        let b6 = 2.0 * (0..nr).filter(|&i| i != n).map(|i| self.a43[n][i] * d_r[i]).sum::<f64>() + self.b4[n];

        let l1 = self.l1;
        let k2 = self.kappa * self.kappa;
        let mut grad = 0.0;
        let mut tau2_sum = 0.0;
        for i in 0..self.a6.len() {
            let th = &self.theta_r[i];
            let a = &self.a6[i];
            let blocks: Vec<CVector> = d_r.iter().map(|&d| user_block(th, d, self.wavelength)).collect();
            let h0 = &blocks[n];
            let a7_block = a.block(n * l1, n * l1, l1, l1);
            let lmax = eigh(&a7_block)?.max_value();
            // b₁₀ = 2Σ_{m≠n} A[n,m]h_m + b₇[n]
            let mut b12: CVector = (0..l1).map(|l| self.b7[i][n * l1 + l]).collect();
            for (m, hm) in blocks.iter().enumerate() {
                if m == n {
                    continue;
                }
                let am = a.block(n * l1, m * l1, l1, l1).mul_vec(hm);
                for l in 0..l1 {
                    b12[l] += am[l] * 2.0;
                }
            }
            // MM on the diagonal block: b₁₂ = b₁₀ + 2(A₇ − λ_max I)h₀
            let a7h0 = a7_block.mul_vec(h0);
            for l in 0..l1 {
                b12[l] += (a7h0[l] - h0[l] * lmax) * 2.0;
            }
            for (l, &t) in th.iter().enumerate() {
                let s = t.sin();
                let phase = self.kappa * d0 * s - b12[l].arg();
                grad -= b12[l].norm() * self.kappa * s * phase.sin();
            }
            tau2_sum += k2 * b12.iter().map(|z| z.norm()).sum::<f64>();
        }
        let ar = self.a_r(d_r);
        let cn: C64 = (0..nr).filter(|&m| m != n).map(|m| self.a9[(n, m)] * ar[m]).sum();
        let b15 = cn * 2.0;
        let phase = self.kappa * d0 * self.sin_theta0 + self.beta_r.arg() - b15.arg();
        grad -= b15.norm() * self.beta_r.norm() * self.kappa * self.sin_theta0 * phase.sin();
        let tau4 = k2 * b15.norm() * self.beta_r.norm();

        let tau3 = 0.5 * tau2_sum + 0.5 * tau4;
        let g0 = self.rate_lhs(d_r);
        let b14 = grad - 2.0 * tau3 * d0;
        let c26 = g0 - tau3 * d0 * d0 - b14 * d0;
        let box_low = if n == 0 { 0.0 } else { d_r[n - 1] + d_min };
        let box_up = if n + 1 == nr { d_max } else { d_r[n + 1] - d_min };
        Ok(PositionSubproblem { a7, b6, tau3, b14, c26, d0, box_low, box_up, g0 })
    }
}

/// Sublevel set {d : τ₃d² + b₁₄d + c₂₆ ≤ 0} intersected with [low, up].
pub fn feasible_interval(tau3: f64, b14: f64, c26: f64, low: f64, up: f64) -> Option<(f64, f64)> {
    if low > up {
        return None;
    }
    let (r1, r2) = if tau3 > 0.0 {
        let disc = b14 * b14 - 4.0 * tau3 * c26;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        // numerically stable pair of roots
        let qv = -0.5 * (b14 + b14.signum() * sq);
        let (x1, x2) = if qv != 0.0 { (qv / tau3, c26 / qv) } else { (0.0, 0.0) };
        (x1.min(x2), x1.max(x2))
    } else if b14 > 0.0 {
        (f64::NEG_INFINITY, -c26 / b14)
    } else if b14 < 0.0 {
        (-c26 / b14, f64::INFINITY)
    } else if c26 <= 0.0 {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        return None;
    };
    let lo = r1.max(low);
    let hi = r2.min(up);
    (lo <= hi).then_some((lo, hi))
}

/// Minimizer of a₇d² + b₆d over [low, up].
pub fn theorem1_minimize(a7: f64, b6: f64, low: f64, up: f64) -> f64 {
    let f = |d: f64| a7 * d * d + b6 * d;
    if a7 > 0.0 {
        (-b6 / (2.0 * a7)).clamp(low, up)
    } else if a7 == 0.0 {
        if b6 > 0.0 {
            low
        } else if b6 < 0.0 {
            up
        } else {
            low
        }
    } else if f(low) <= f(up) {
        low
    } else {
        up
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepStats {
    pub moved: usize,
    /// Antennas whose surrogate interval was empty or whose move was rejected.
    pub held: usize,
    pub max_tangency_error: f64,
}

/// One ascending sweep over all receive antennas.
pub fn update_positions(gc: &GlobalCoefficients, d_r: &[f64], d_min: f64, d_max: f64) -> Result<(Vec<f64>, SweepStats)> {
    let mut d = d_r.to_vec();
    let mut stats = SweepStats::default();
    for n in 0..d.len() {
        let sp = gc.subproblem(n, &d, d_min, d_max)?;
        stats.max_tangency_error = stats.max_tangency_error.max((sp.surrogate(sp.d0) - sp.g0).abs());
        let interval = feasible_interval(sp.tau3, sp.b14, sp.c26, sp.box_low, sp.box_up).map(|(lo, hi)| {
            // the current point satisfies the surrogate by tangency; keep it inside despite roundoff
            if sp.d0 >= sp.box_low && sp.d0 <= sp.box_up {
                (lo.min(sp.d0), hi.max(sp.d0))
            } else {
                (lo, hi)
            }
        });
        let Some((lo, hi)) = interval else {
            debug!("antenna {n}: empty surrogate interval, holding position");
            stats.held += 1;
            continue;
        };
        let cand = theorem1_minimize(sp.a7, sp.b6, lo, hi);
        let before = gc.objective(&d);
        let old = d[n];
        d[n] = cand;
        let g_new = gc.rate_lhs(&d);
        if gc.objective(&d) > before || g_new > sp.g0.max(0.0) {
            d[n] = old;
            stats.held += 1;
        } else if cand != old {
            stats.moved += 1;
        }
    }
    Ok((d, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{rng_for, sample_channel};
    use crate::fp::{leakage_power, RateContext};
    use crate::sensing;
    use rand::Rng;

    struct Fixture {
        cfg: SystemConfig,
        ch: ChannelState,
        w: CMatrix,
        u: Vec<CVector>,
        q: Vec<f64>,
        fp: FpState,
    }

    fn fixture(seed: u64) -> Fixture {
        let cfg = SystemConfig { rng_seed: seed, r_t: 0.5, ..SystemConfig::default() };
        let ch = sample_channel(&cfg);
        let mut rng = rng_for(seed, 42);
        let w = CMatrix::from_fn(cfg.n_t, cfg.n_t, |_, _| crate::channel::complex_gaussian(&mut rng, 1.0))
            .scale_real(0.1);
        let u: Vec<CVector> = (0..cfg.k_users)
            .map(|_| (0..cfg.n_r).map(|_| crate::channel::complex_gaussian(&mut rng, 1.0)).collect())
            .collect();
        let q = cfg.p_u.clone();
        let ctx = rate_context(&cfg, &ch, &w, &ch.d_r);
        let fp = ctx.refresh(&u, &q).unwrap();
        let _ = rng.random::<u8>();
        Fixture { cfg, ch, w, u, q, fp }
    }

    fn rate_context(cfg: &SystemConfig, ch: &ChannelState, w: &CMatrix, d_r: &[f64]) -> RateContext {
        let (a_t, _) = sensing::transmit_steering(cfg, &ch.d_t);
        let (a_r, _) = crate::channel::steering(d_r, cfg.theta0, cfg.wavelength, cfg.beta_r);
        RateContext {
            h: (0..cfg.k_users).map(|k| ch.user_channel_at(k, d_r)).collect(),
            a_r,
            leak: leakage_power(cfg.alpha, w, &a_t),
            sigma2: cfg.sigma2,
        }
    }

    #[test]
    fn objective_is_negated_crb_surrogate() {
        let fx = fixture(1);
        let gc = build_global_coefficients(&fx.cfg, &fx.ch, &fx.w, &fx.u, &fx.q, &fx.fp);
        let mut rng = rng_for(3, 3);
        for _ in 0..20 {
            let d: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..0.6)).collect();
            let m = sensing::evaluate(&fx.cfg, &fx.ch.d_t, &d, &fx.w);
            assert!((gc.objective(&d) + m.obj).abs() <= 1e-9 * m.obj.abs(), "{} vs {}", gc.objective(&d), -m.obj);
        }
        assert!(gc.b4.iter().all(|b| b.abs() <= 1e-9 * gc.c16.abs()));
    }

    #[test]
    fn rate_side_equals_threshold_gap() {
        let fx = fixture(2);
        let gc = build_global_coefficients(&fx.cfg, &fx.ch, &fx.w, &fx.u, &fx.q, &fx.fp);
        let mut rng = rng_for(4, 4);
        for _ in 0..20 {
            let d: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..0.6)).collect();
            let ctx = rate_context(&fx.cfg, &fx.ch, &fx.w, &d);
            let r2 = ctx.r2(&fx.fp, &fx.u, &fx.q);
            let lhs = gc.rate_lhs(&d);
            assert!((lhs - (fx.cfg.r_t - r2)).abs() <= 1e-9 * (1.0 + r2.abs()), "{lhs} vs {}", fx.cfg.r_t - r2);
        }
    }

    #[test]
    fn zero_beamformer_has_constant_objective() {
        let fx = fixture(3);
        let w = CMatrix::zeros(4, 4);
        let gc = build_global_coefficients(&fx.cfg, &fx.ch, &w, &fx.u, &fx.q, &fx.fp);
        assert!(gc.a43.iter().flatten().all(|&v| v == 0.0));
        assert!(gc.b4.iter().all(|&v| v == 0.0));
        assert_eq!(gc.c16, 0.0);
        assert!(gc.a9.max_abs() == 0.0);
    }

    #[test]
    fn surrogate_is_tangent_and_dominates() {
        let mut rng = rng_for(5, 5);
        for seed in 0..5 {
            let fx = fixture(10 + seed);
            let gc = build_global_coefficients(&fx.cfg, &fx.ch, &fx.w, &fx.u, &fx.q, &fx.fp);
            let d_r = fx.ch.d_r.clone();
            for n in 0..4 {
                let sp = gc.subproblem(n, &d_r, fx.cfg.d_min, fx.cfg.d_max).unwrap();
                assert!((sp.surrogate(sp.d0) - sp.g0).abs() <= 1e-8 * sp.g0.abs().max(1.0));
                // slope matches the exact constraint
                let h = 1e-7;
                let mut dp = d_r.clone();
                dp[n] += h;
                let mut dm = d_r.clone();
                dm[n] -= h;
                let fd = (gc.rate_lhs(&dp) - gc.rate_lhs(&dm)) / (2.0 * h);
                let slope = 2.0 * sp.tau3 * sp.d0 + sp.b14;
                assert!((fd - slope).abs() <= 1e-4 * fd.abs().max(1.0), "{fd} vs {slope}");
                for _ in 0..100 {
                    let x = rng.random_range(-0.2..0.8);
                    let mut d = d_r.clone();
                    d[n] = x;
                    assert!(sp.surrogate(x) >= gc.rate_lhs(&d) - 1e-9);
                }
            }
        }
    }

    #[test]
    fn interval_examples() {
        assert_eq!(feasible_interval(1.0, 0.0, -1.0, -0.5, 2.0), Some((-0.5, 1.0)));
        assert_eq!(feasible_interval(1.0, 0.0, 1.0, -0.5, 2.0), None);
        assert_eq!(feasible_interval(0.0, 0.0, -1.0, 0.1, 0.4), Some((0.1, 0.4)));
        assert_eq!(feasible_interval(0.0, 2.0, -0.4, 0.0, 1.0), Some((0.0, 0.2)));
        assert_eq!(feasible_interval(0.0, -2.0, 0.4, 0.0, 1.0), Some((0.2, 1.0)));
        assert_eq!(feasible_interval(1.0, 0.0, -1.0, 2.0, 3.0), None);
    }

    #[test]
    fn theorem1_examples() {
        assert_eq!(theorem1_minimize(1.0, -2.0, 0.0, 3.0), 1.0);
        assert_eq!(theorem1_minimize(0.0, 5.0, 0.0, 1.0), 0.0);
        assert_eq!(theorem1_minimize(0.0, -5.0, 0.0, 1.0), 1.0);
        assert_eq!(theorem1_minimize(-1.0, 0.5, 0.0, 1.0), 1.0);
        assert_eq!(theorem1_minimize(-1.0, 3.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn sweeps_keep_feasibility_and_descend() {
        for seed in 0..5 {
            let fx = fixture(20 + seed);
            let gc = build_global_coefficients(&fx.cfg, &fx.ch, &fx.w, &fx.u, &fx.q, &fx.fp);
            let mut d = fx.ch.d_r.clone();
            assert!(gc.rate_lhs(&d) <= 0.0, "fixture must start rate-feasible");
            let mut prev = gc.objective(&d);
            for _ in 0..10 {
                let (next, _) = update_positions(&gc, &d, fx.cfg.d_min, fx.cfg.d_max).unwrap();
                d = next;
                assert!(crate::channel::positions_feasible(&d, fx.cfg.d_min, fx.cfg.d_max, 1e-12));
                assert!(gc.rate_lhs(&d) <= 1e-9);
                let obj = gc.objective(&d);
                assert!(obj <= prev + 1e-9 * prev.abs());
                prev = obj;
            }
        }
    }

    #[test]
    fn fixed_point_is_stable() {
        let fx = fixture(30);
        let gc = build_global_coefficients(&fx.cfg, &fx.ch, &fx.w, &fx.u, &fx.q, &fx.fp);
        let mut d = fx.ch.d_r.clone();
        for _ in 0..30 {
            d = update_positions(&gc, &d, fx.cfg.d_min, fx.cfg.d_max).unwrap().0;
        }
        let (again, _) = update_positions(&gc, &d, fx.cfg.d_min, fx.cfg.d_max).unwrap();
        for (a, b) in again.iter().zip(&d) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
