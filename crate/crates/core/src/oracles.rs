//! Slow brute-force checks of the closed-form blocks.
//!
//! Each oracle rebuilds its quantity from linalg primitives and direct
//! evaluation only, so agreement with the fast path is evidence rather than
//! tautology. [`verify`] runs all of them and is what `isac verify` reports.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::beamformer::{linearized_quadratic, shifted_constraint, trust_region_objective, trust_region_solve_eig};
use crate::channel::{complex_gaussian, rng_for, sample_channel, uniform_positions};
use crate::config::SystemConfig;
use crate::filters_power::{filter_system, update_filters, update_powers};
use crate::fp::RateContext;
use crate::linalg::{eigh, herm_solve, norm, norm_sqr, real_inverse, sub_vec, CMatrix, CVector, Eigh, C64};
use crate::positions::{build_global_coefficients, theorem1_minimize};
use crate::sensing;
use crate::solver::rate_context;
use crate::{IsacError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub n_cases: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Which error the tolerance applies to.
#[derive(Clone, Copy)]
enum Gate {
    Abs,
    Rel,
}

struct Tally {
    abs: f64,
    rel: f64,
    n: usize,
}

impl Tally {
    fn new() -> Self {
        Self { abs: 0.0, rel: 0.0, n: 0 }
    }

    fn add(&mut self, err: f64, scale: f64) {
        let rel = err / scale.abs().max(f64::MIN_POSITIVE);
        // NaN counts as an infinite error
        self.abs = if err.is_nan() { f64::INFINITY } else { self.abs.max(err) };
        self.rel = if rel.is_nan() { f64::INFINITY } else { self.rel.max(rel) };
        self.n += 1;
    }

    fn report(self, name: &str, tol: f64, gate: Gate) -> OracleReport {
        let err = match gate {
            Gate::Abs => self.abs,
            Gate::Rel => self.rel,
        };
        OracleReport {
            name: name.to_string(),
            max_abs_err: self.abs,
            max_rel_err: self.rel,
            n_cases: self.n,
            tolerance: tol,
            passed: err <= tol,
        }
    }
}

/// Minimum of xᴴQx − 2Re{xᴴq} over ‖x‖² ≤ radius2 for dim ≤ 3.
///
/// Scans the regularized family x(ν) = (Q + νI)⁻¹q over a log grid of ν,
/// keeping feasible members and projecting the rest radially onto the sphere,
/// then polishes the best grid cell by golden-section search in log ν.
pub fn trust_region_grid_oracle(q_mat: &CMatrix, q: &[C64], radius2: f64, grid_density: usize) -> Result<f64> {
    let n = q.len();
    if n > 3 {
        return Err(IsacError::InvalidConfig(format!("grid oracle supports dimension ≤ 3, got {n}")));
    }
    if !(radius2 > 0.0) {
        return Err(IsacError::InvalidConfig("radius² must be positive".into()));
    }
    let r = radius2.sqrt();
    let value = |log_nu: f64| -> f64 {
        let nu = log_nu.exp();
        let Ok(mut x) = herm_solve(&q_mat.add_scaled_identity(nu), q) else {
            return f64::INFINITY;
        };
        let xn = norm(&x);
        if xn * xn > radius2 {
            x.iter_mut().for_each(|z| *z *= r / xn);
        }
        trust_region_objective(q_mat, q, &x)
    };
    let scale = q_mat.frobenius_norm() + norm(q) / r + 1.0;
    let lo = (1e-12 * scale).ln();
    let hi = (1e8 * scale).ln();
    let m = grid_density.max(10);
    let grid: Vec<f64> = (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&g| value(g)).collect();
    let (ib, &vb) = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty grid");
    let (mut a, mut b) = (grid[ib.saturating_sub(1)], grid[(ib + 1).min(m)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if value(c) < value(d) {
            b = d;
        } else {
            a = c;
        }
    }
    // x = 0 is always feasible
    Ok(vb.min(value(0.5 * (a + b))).min(0.0))
}

fn steer(d: &[f64], theta: f64, wavelength: f64, beta: C64) -> CVector {
    d.iter().map(|&x| beta * C64::from_polar(1.0, 2.0 * PI / wavelength * x * theta.sin())).collect()
}

/// μ(θ, α) = α·vec(a_r a_tᴴ W S_r) with S_r = √L·I.
fn echo_mean(cfg: &SystemConfig, d_t: &[f64], d_r: &[f64], w: &CMatrix, theta: f64, alpha: C64) -> CVector {
    let a_t = steer(d_t, theta, cfg.wavelength, cfg.beta_t);
    let a_r = steer(d_r, theta, cfg.wavelength, cfg.beta_r);
    let a = CMatrix::outer(&a_r, &a_t);
    let s = CMatrix::identity(w.cols()).scale_real((cfg.l_slots as f64).sqrt());
    a.matmul(w).matmul(&s).vec().iter().map(|z| alpha * z).collect()
}

/// FIM over ζ = [θ, Re α, Im α] from the Jacobian of the noiseless echo.
pub fn fim_jacobian_oracle(cfg: &SystemConfig, d_t: &[f64], d_r: &[f64], w: &CMatrix) -> [[f64; 3]; 3] {
    let h = 1e-6;
    let th = cfg.theta0;
    let plus = echo_mean(cfg, d_t, d_r, w, th + h, cfg.alpha);
    let minus = echo_mean(cfg, d_t, d_r, w, th - h, cfg.alpha);
    let d_theta: CVector = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect();
    let d_re = echo_mean(cfg, d_t, d_r, w, th, C64::new(1.0, 0.0));
    let d_im = echo_mean(cfg, d_t, d_r, w, th, C64::new(0.0, 1.0));
    let jac = [d_theta, d_re, d_im];
    let mut f = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let ip: C64 = jac[i].iter().zip(&jac[j]).map(|(a, b)| a.conj() * b).sum();
            f[i][j] = 2.0 / cfg.sigma2 * ip.re;
        }
    }
    f
}

/// Dense-grid minimizer of f over [lo, hi] with endpoints included.
pub fn scalar_grid_oracle(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n_points: usize) -> Result<(f64, f64)> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(IsacError::InvalidConfig(format!("empty interval [{lo}, {hi}]")));
    }
    if n_points < 1000 {
        return Err(IsacError::InvalidConfig(format!("need at least 1000 grid points, got {n_points}")));
    }
    let mut best = (lo, f(lo));
    for i in 1..n_points {
        let x = lo + (hi - lo) * i as f64 / (n_points - 1) as f64;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Perturbs every eigendecomposition the oracles use; the suite must then fail.
    pub corrupt_linalg: bool,
}

fn oracle_eigh(m: &CMatrix, opts: &VerifyOptions) -> Result<Eigh> {
    let mut e = eigh(m)?;
    if opts.corrupt_linalg {
        e.values.iter_mut().for_each(|v| *v *= 1.0 + 1e-3);
    }
    Ok(e)
}

fn rand_vec(rng: &mut ChaCha20Rng, n: usize) -> CVector {
    (0..n).map(|_| complex_gaussian(rng, 1.0)).collect()
}

fn rand_hermitian(rng: &mut ChaCha20Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| complex_gaussian(rng, 1.0));
    (&a + &a.adjoint()).scale_real(0.5)
}

fn rand_psd(rng: &mut ChaCha20Rng, n: usize, rank: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, rank, |_, _| complex_gaussian(rng, 1.0));
    a.matmul(&a.adjoint())
}

/// Sorted positions with spacing ≥ d_min inside [0, d_max].
pub fn random_positions(rng: &mut ChaCha20Rng, n: usize, d_min: f64, d_max: f64) -> Vec<f64> {
    let slack = (d_max - d_min * (n as f64 - 1.0)).max(0.0);
    let mut cuts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=slack)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.iter().enumerate().map(|(i, c)| c + d_min * i as f64).collect()
}

/// A random scenario point: channel, W with ‖W‖² ≤ P_BS, feasible d_r.
fn random_point(seed: u64, rng: &mut ChaCha20Rng) -> (SystemConfig, crate::channel::ChannelState, CMatrix, Vec<f64>) {
    let n_t = rng.random_range(2..=4);
    let n_r = rng.random_range(2..=5);
    let cfg = SystemConfig {
        n_t,
        n_r,
        rng_seed: seed,
        theta0: rng.random_range(-1.3..1.3),
        alpha: complex_gaussian(rng, 1e-10),
        ..SystemConfig::default()
    };
    let ch = sample_channel(&cfg);
    let w = CMatrix::from_fn(n_t, n_t, |_, _| complex_gaussian(rng, 1.0));
    let w = w.scale_real((cfg.p_bs * rng.random_range(0.1..1.0)).sqrt() / w.frobenius_norm());
    let d_r = random_positions(rng, n_r, cfg.d_min, cfg.d_max);
    (cfg, ch, w, d_r)
}

pub fn eigh_reconstruction(opts: &VerifyOptions) -> Result<OracleReport> {
    let mut rng = rng_for(11, 101);
    let mut t = Tally::new();
    for i in 0..200 {
        let m = rand_hermitian(&mut rng, 1 + i % 6);
        let e = oracle_eigh(&m, opts)?;
        let err = (&e.apply_fn(|l| l) - &m).frobenius_norm();
        t.add(err, m.frobenius_norm());
    }
    Ok(t.report("eigh_reconstruction", 1e-10, Gate::Rel))
}

pub fn crb_closed_form_identity() -> Result<OracleReport> {
    let mut rng = rng_for(12, 102);
    let mut t = Tally::new();
    for i in 0..100 {
        let (cfg, ch, w, d_r) = random_point(i, &mut rng);
        let m = sensing::evaluate(&cfg, &ch.d_t, &d_r, &w);
        let inv = real_inverse(&m.fim.iter().map(|r| r.to_vec()).collect::<Vec<_>>())?;
        t.add((m.crb - inv[0][0]).abs(), inv[0][0]);
    }
    Ok(t.report("crb_closed_form_identity", 1e-10, Gate::Rel))
}

pub fn fim_cross_validation() -> Result<OracleReport> {
    let mut rng = rng_for(13, 103);
    let mut t = Tally::new();
    for i in 0..50 {
        let (cfg, ch, w, d_r) = random_point(1000 + i, &mut rng);
        let fast = sensing::evaluate(&cfg, &ch.d_t, &d_r, &w).fim;
        let slow = fim_jacobian_oracle(&cfg, &ch.d_t, &d_r, &w);
        let scale = slow.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
        let err = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).fold(0.0f64, |a, (r, c)| a.max((fast[r][c] - slow[r][c]).abs()));
        t.add(err, scale);
    }
    Ok(t.report("fim_jacobian", 1e-4, Gate::Rel))
}

/// Returns (objective gap report, KKT report).
pub fn trust_region_checks(opts: &VerifyOptions) -> Result<(OracleReport, OracleReport)> {
    let mut rng = rng_for(14, 104);
    let mut gap = Tally::new();
    let mut kkt = Tally::new();
    for i in 0..200 {
        let n = 2 + i % 2;
        let rank = rng.random_range(1..=n);
        let q_mat = rand_psd(&mut rng, n, rank);
        let q = rand_vec(&mut rng, n);
        let r2 = rng.random_range(0.01..4.0);
        let e = oracle_eigh(&q_mat, opts)?;
        let (x, sol) = trust_region_solve_eig(&e, &q, r2)?;
        let fast = trust_region_objective(&q_mat, &q, &x);
        let slow = trust_region_grid_oracle(&q_mat, &q, r2, 4000)?;
        gap.add((fast - slow).max(0.0) + (norm_sqr(&x) - r2).max(0.0), 1.0 + slow.abs());
        kkt.add(sol.kkt_residual, 1.0);
    }
    Ok((gap.report("trust_region_grid", 1e-4, Gate::Abs), kkt.report("trust_region_kkt", 1e-8, Gate::Abs)))
}

pub fn theorem1_grid() -> Result<OracleReport> {
    let mut rng = rng_for(15, 105);
    let mut t = Tally::new();
    for _ in 0..500 {
        let a7 = match rng.random_range(0..4) {
            0 => 0.0,
            _ => rng.random_range(-5.0..5.0),
        };
        let b6 = rng.random_range(-5.0..5.0);
        let lo = rng.random_range(-1.0..1.0);
        let hi = lo + rng.random_range(0.0..2.0);
        let f = |d: f64| a7 * d * d + b6 * d;
        let d = theorem1_minimize(a7, b6, lo, hi);
        let (_, vmin) = scalar_grid_oracle(f, lo, hi, 100_001)?;
        let outside = (lo - d).max(d - hi).max(0.0);
        t.add((f(d) - vmin).abs() + outside, 1.0);
    }
    Ok(t.report("theorem1_grid", 1e-6, Gate::Abs))
}

fn random_rate_context(rng: &mut ChaCha20Rng) -> (RateContext, Vec<CVector>, Vec<f64>, Vec<f64>) {
    let k = rng.random_range(1..=3);
    let n = rng.random_range(2..=4);
    let ctx = RateContext {
        h: (0..k).map(|_| rand_vec(rng, n)).collect(),
        a_r: rand_vec(rng, n),
        leak: rng.random_range(0.0..0.5),
        sigma2: rng.random_range(0.01..0.5),
    };
    let u = (0..k).map(|_| rand_vec(rng, n)).collect();
    let p_u: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..3.0)).collect();
    let q = p_u.iter().map(|p| p * rng.random_range(0.0..1.0)).collect();
    (ctx, u, q, p_u)
}

/// update_powers against a grid over √q_k of R₂ evaluated directly (R₂ is separable in the q_k).
pub fn power_grid() -> Result<OracleReport> {
    let mut rng = rng_for(16, 106);
    let mut t = Tally::new();
    let mut cases = 0;
    while cases < 500 {
        let (ctx, u, q0, p_u) = random_rate_context(&mut rng);
        let fp = ctx.refresh(&u, &q0)?;
        let q = update_powers(&fp, &u, &ctx, &p_u);
        for k in 0..q.len() {
            if cases == 500 {
                break;
            }
            let r2_at = |p: f64| {
                let mut qq = q.clone();
                qq[k] = p * p;
                -ctx.r2(&fp, &u, &qq)
            };
            let (_, vmin) = scalar_grid_oracle(r2_at, 0.0, p_u[k].sqrt(), 20_001)?;
            let v = r2_at(q[k].sqrt());
            let outside = (q[k] - p_u[k]).max(-q[k]).max(0.0);
            t.add((v - vmin).max(0.0) + outside, 1.0 + vmin.abs());
            cases += 1;
        }
    }
    Ok(t.report("power_grid", 1e-6, Gate::Rel))
}

pub fn filter_stationarity() -> Result<OracleReport> {
    let mut rng = rng_for(17, 107);
    let mut t = Tally::new();
    for _ in 0..100 {
        let (ctx, u0, q, _) = random_rate_context(&mut rng);
        let fp = ctx.refresh(&u0, &q)?;
        let up = update_filters(&fp, &u0, &q, &ctx)?;
        for k in 0..q.len() {
            let (d_mat, d_vec) = filter_system(k, &fp, &q, &ctx);
            let r = sub_vec(&d_mat.mul_vec(&up.u[k]), &d_vec);
            t.add(norm(&r), norm(&d_vec));
        }
    }
    Ok(t.report("filter_stationarity", 1e-10, Gate::Rel))
}

pub fn fp_tightness() -> Result<OracleReport> {
    let mut rng = rng_for(18, 108);
    let mut t = Tally::new();
    for _ in 0..100 {
        let (ctx, u, q, _) = random_rate_context(&mut rng);
        let fp = ctx.refresh(&u, &q)?;
        let direct: f64 = (0..q.len())
            .map(|k| {
                let sig = q[k] * crate::linalg::dot(&u[k], &ctx.h[k]).norm_sqr();
                let tot = ctx.total_power(k, &u, &q);
                (1.0 + sig / (tot - sig)).ln()
            })
            .sum();
        t.add((ctx.r2(&fp, &u, &q) - direct).abs(), 1.0);
    }
    Ok(t.report("fp_tightness", 1e-9, Gate::Abs))
}

/// Tangency at the expansion point and dominance at 100 random points for the
/// beamformer linearization and the shifted rate constraint.
pub fn beamformer_mm() -> Result<OracleReport> {
    let mut rng = rng_for(19, 109);
    let mut t = Tally::new();
    for _ in 0..20 {
        let n = 4;
        let b3 = rand_psd(&mut rng, n, 2);
        let b2 = rand_psd(&mut rng, n, 1);
        let c1 = rng.random_range(0.1..2.0);
        let delta = 1e-8f64.max(1e-8 * eigh(&b2)?.max_value());
        let w0 = rand_vec(&mut rng, n);
        let exact3 = b3.quad_form(&w0).re;
        t.add((linearized_quadratic(&b3, &w0, &w0) - exact3).abs(), exact3);
        let exact2 = b2.quad_form(&w0).re - c1;
        t.add((shifted_constraint(&b2, c1, delta, &w0, &w0) - exact2).abs(), exact2.abs().max(1.0));
        for _ in 0..100 {
            let w = rand_vec(&mut rng, n);
            // violations count as errors; a valid bound contributes zero
            t.add((linearized_quadratic(&b3, &w0, &w) - b3.quad_form(&w).re).max(0.0), 1.0);
            t.add((b2.quad_form(&w).re - c1 - shifted_constraint(&b2, c1, delta, &w0, &w)).max(0.0), 1.0);
        }
    }
    Ok(t.report("beamformer_mm", 1e-8, Gate::Rel))
}

/// Position-constraint surrogate: tangency at d₀ and dominance at 100 random positions per antenna.
pub fn position_mm() -> Result<OracleReport> {
    let mut rng = rng_for(20, 110);
    let mut t = Tally::new();
    for seed in 0..5u64 {
        let cfg = SystemConfig { rng_seed: 200 + seed, r_t: 0.5, ..SystemConfig::default() };
        let ch = sample_channel(&cfg);
        let w = CMatrix::from_fn(cfg.n_t, cfg.n_t, |_, _| complex_gaussian(&mut rng, 1.0));
        let w = w.scale_real(cfg.p_bs.sqrt() / w.frobenius_norm());
        let d_r = uniform_positions(cfg.n_r, cfg.d_min, cfg.d_max);
        let ctx = rate_context(&cfg, &ch, &w, &d_r);
        let u: Vec<CVector> = (0..cfg.k_users).map(|_| rand_vec(&mut rng, cfg.n_r)).collect();
        let fp = ctx.refresh(&u, &cfg.p_u)?;
        let gc = build_global_coefficients(&cfg, &ch, &w, &u, &cfg.p_u, &fp);
        for n in 0..cfg.n_r {
            let sp = gc.subproblem(n, &d_r, cfg.d_min, cfg.d_max)?;
            // exact constraint value straight from the rate expressions
            let exact = |x: f64| {
                let mut d = d_r.clone();
                d[n] = x;
                cfg.r_t - rate_context(&cfg, &ch, &w, &d).r2(&fp, &u, &cfg.p_u)
            };
            let scale = exact(sp.d0).abs().max(1.0);
            t.add((sp.surrogate(sp.d0) - exact(sp.d0)).abs(), scale);
            for _ in 0..100 {
                let x = rng.random_range(-0.1..cfg.d_max + 0.1);
                t.add((exact(x) - sp.surrogate(x)).max(0.0), scale);
            }
        }
    }
    Ok(t.report("position_mm", 1e-8, Gate::Rel))
}

/// Every oracle suite, in a fixed order.
pub fn verify(opts: &VerifyOptions) -> Result<Vec<OracleReport>> {
    let (tr_gap, tr_kkt) = trust_region_checks(opts)?;
    Ok(vec![
        eigh_reconstruction(opts)?,
        crb_closed_form_identity()?,
        fim_cross_validation()?,
        tr_gap,
        tr_kkt,
        theorem1_grid()?,
        power_grid()?,
        filter_stationarity()?,
        fp_tightness()?,
        beamformer_mm()?,
        position_mm()?,
    ])
}
