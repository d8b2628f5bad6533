//! Beamformer update by penalty dual decomposition.
//!
//! The ratio objective is split with a copy f of w and a scalar b standing in
//! for wᴴB₅f:
//!
//! ```text
//! min  −wᴴB₃w + |wᴴB₄f|²/b
//! s.t. wᴴB₂w ≤ c₁,  ‖f‖² ≤ P_BS,  w = f,  wᴴB₅f = b
//! ```
//!
//! The equality couplings are moved into an augmented Lagrangian
//!
//! ```text
//! AL = −wᴴB₃w + |wᴴB₄f|²/b + Re{λ₁ᴴ(w−f)} + Re{λ₂*(wᴴB₅f − b)}
//!      + (‖w−f‖² + |wᴴB₅f − b|²)/(2ρ)
//! ```
//!
//! which is minimized block-wise over (w, f, b). The w-block linearizes the
//! concave −wᴴB₃w and, because B₂ = Σ I⊗(·) has rank at most N_t, usually
//! needs a proximal shift δ to make the constraint a ball after a change of
//! variables. Both w and f blocks then reduce to the trust-region problem
//! solved in [`trust_region_solve`].
//!
//! Internally the problem is rescaled so that ‖f‖ ≤ 1 and λ_max(A₁) = 1/4,
//! which keeps the augmented Lagrangian bounded below in w from the first
//! penalty. The split variable b is rescaled separately so that λ_max(A₃) = 1/4,
//! which makes the absolute residual tolerance on wᴴB₅f = b meaningful.

use log::{debug, trace};
use serde::Serialize;

use crate::fp::{FpState, RateContext};
use crate::linalg::{
    add_vec, dot, eigh, herm_power_from, norm, norm_inf, norm_sqr, scale_vec, sub_vec, CMatrix, CVector, Eigh, C64,
    ZERO,
};
use crate::sensing::Coefficients;
use crate::{IsacError, Result};

/// Lifted matrices with wᴴ(I⊗A)w = tr(A W Wᴴ) and the rate budget c₁ (nats).
#[derive(Debug, Clone)]
pub struct ConstraintData {
    pub b2: CMatrix,
    pub c1: f64,
    pub b3: CMatrix,
    pub b4: CMatrix,
    pub b5: CMatrix,
}

pub fn lift(a: &CMatrix) -> CMatrix {
    CMatrix::identity(a.rows()).kron(a)
}

pub fn build_constraint_data(
    fp: &FpState,
    u: &[CVector],
    q: &[f64],
    ctx: &RateContext,
    alpha: C64,
    a_t: &[C64],
    coeffs: &Coefficients,
    r_t: f64,
) -> ConstraintData {
    let weight: f64 = (0..ctx.k_users())
        .map(|k| fp.omega[k].norm_sqr() * alpha.norm_sqr() * dot(&u[k], &ctx.a_r).norm_sqr())
        .sum();
    let b2 = lift(&CMatrix::outer(a_t, a_t)).scale_real(weight);
    ConstraintData {
        b2,
        c1: ctx.r2_without_leak(fp, u, q) - r_t,
        b3: lift(&coeffs.a1),
        b4: lift(&coeffs.a2),
        b5: lift(&coeffs.a3),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionSolution {
    pub nu: f64,
    /// max of relative stationarity, complementarity and feasibility violations.
    pub kkt_residual: f64,
    pub on_boundary: bool,
}

/// Minimizes xᴴQx − 2Re{xᴴq} subject to ‖x‖² ≤ radius2 for Hermitian PSD Q.
pub fn trust_region_solve(q_mat: &CMatrix, q: &[C64], radius2: f64) -> Result<(CVector, TrustRegionSolution)> {
    let eig = eigh(&q_mat.hermitian_part())?;
    trust_region_solve_eig(&eig, q, radius2)
}

/// Same as [`trust_region_solve`] with a precomputed eigendecomposition of Q.
pub fn trust_region_solve_eig(eig: &Eigh, q: &[C64], radius2: f64) -> Result<(CVector, TrustRegionSolution)> {
    if !(radius2 > 0.0 && radius2.is_finite()) {
        return Err(IsacError::Degenerate(format!("trust-region radius² must be positive, got {radius2}")));
    }
    let n = q.len();
    let lam_max = eig.max_value().max(0.0);
    let lam: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0)).collect();
    let qp = eig.to_eigenbasis(q);
    let qnorm = norm(&qp);
    let zero_tol = 1e-13 * lam_max.max(f64::MIN_POSITIVE);

    let x_norm2 = |nu: f64| -> f64 {
        (0..n)
            .map(|i| {
                let d = lam[i] + nu;
                if d > zero_tol {
                    qp[i].norm_sqr() / (d * d)
                } else if qp[i].norm() <= 1e-14 * qnorm.max(f64::MIN_POSITIVE) {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .sum()
    };

    let nu = if x_norm2(0.0) <= radius2 {
        0.0
    } else {
        // ψ(ν) = 1/√φ(ν) − 1/√r̄ is concave and increasing on (0, ∞).
        let target = 1.0 / radius2.sqrt();
        let mut lo = 0.0;
        let mut hi = qnorm / radius2.sqrt() + f64::MIN_POSITIVE;
        while x_norm2(hi) > radius2 {
            hi *= 2.0;
        }
        let mut nu = hi;
        for _ in 0..200 {
            let phi = x_norm2(nu);
            if !phi.is_finite() || phi == 0.0 {
                nu = 0.5 * (lo + hi);
                continue;
            }
            if phi > radius2 {
                lo = nu;
            } else {
                hi = nu;
            }
            if (phi - radius2).abs() <= 1e-14 * radius2 || hi - lo <= 1e-15 * hi {
                break;
            }
            let dphi: f64 = (0..n)
                .map(|i| {
                    let d = lam[i] + nu;
                    if d > zero_tol {
                        -2.0 * qp[i].norm_sqr() / (d * d * d)
                    } else {
                        0.0
                    }
                })
                .sum();
            let psi = 1.0 / phi.sqrt() - target;
            let dpsi = -0.5 * phi.powf(-1.5) * dphi;
            let step = nu - psi / dpsi;
            nu = if dpsi > 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        }
        nu
    };

    let xp: CVector = (0..n)
        .map(|i| {
            let d = lam[i] + nu;
            if d > zero_tol {
                qp[i] / d
            } else {
                ZERO
            }
        })
        .collect();
    let mut x = eig.from_eigenbasis(&xp);
    let mut xn2 = norm_sqr(&x);
    if xn2 > radius2 {
        // the secular solve stops within a few ulps of the sphere; land exactly inside
        x = scale_vec(C64::new((radius2 / xn2).sqrt() * (1.0 - 1e-15), 0.0), &x);
        xn2 = norm_sqr(&x);
    }
    let xp = eig.to_eigenbasis(&x);
    let resid_vec: CVector = (0..n).map(|i| xp[i] * (eig.values[i] + nu) - qp[i]).collect();
    let station = norm(&resid_vec) / (qnorm + (lam_max + nu) * xn2.sqrt()).max(f64::MIN_POSITIVE);
    let compl = nu * (xn2 - radius2).abs() / ((lam_max + nu) * radius2).max(f64::MIN_POSITIVE);
    let feas = (xn2 - radius2).max(0.0) / radius2;
    let kkt_residual = station.max(compl).max(feas);
    trace!("trust region: nu={nu:e} |x|^2={xn2:e} r={radius2:e} kkt={kkt_residual:e}");
    Ok((x, TrustRegionSolution { nu, kkt_residual, on_boundary: nu > 0.0 }))
}

/// xᴴQx − 2Re{xᴴq}
pub fn trust_region_objective(q_mat: &CMatrix, q: &[C64], x: &[C64]) -> f64 {
    q_mat.quad_form(x).re - 2.0 * dot(x, q).re
}

/// The scaled problem the PDD iterates on: x = w/√P_BS, A₁ divided by 4λ_max(A₁), A₃ by 4λ_max(A₃).
#[derive(Debug, Clone)]
pub struct PddProblem {
    pub b2: CMatrix,
    pub c1: f64,
    pub b3: CMatrix,
    pub b4: CMatrix,
    pub b5: CMatrix,
    pub b2_eig: Eigh,
    pub delta: f64,
    pub case: ConstraintCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstraintCase {
    /// B₂ invertible: substitute w̄ = B₂^{1/2}w.
    Invertible,
    /// B₂ singular: majorize with B₂ + δI first.
    Singular,
}

impl PddProblem {
    pub fn new(data: &ConstraintData, p_bs: f64, delta_rel: f64) -> Result<Self> {
        // With λ_max(B₃) = 1/4 after scaling, the initial penalty 1/(2ρ₀) = 1/2 already keeps the
        // w-block of the augmented Lagrangian bounded below.
        let b3_max = eigh(&data.b3.hermitian_part())?.max_value();
        let scale = 4.0 * b3_max;
        if !(scale > 0.0 && scale.is_finite()) || data.b5.max_abs() == 0.0 {
            return Err(IsacError::Degenerate("sensing coefficients vanish".into()));
        }
        let b2 = data.b2.scale_real(p_bs).hermitian_part();
        let b2_eig = eigh(&b2)?;
        let lmax = b2_eig.max_value().max(0.0);
        let case = if b2_eig.min_value() > 1e-10 * lmax && lmax > 0.0 {
            ConstraintCase::Invertible
        } else {
            ConstraintCase::Singular
        };
        // b and B₅ get their own scale t: |wᴴ√(s t)B₄f|²/(t·b) = s·|wᴴB₄f|²/b, so the
        // objective is unchanged while the coupling wᴴB₅f = b is measured at unit size.
        let b5_max = eigh(&data.b5.hermitian_part())?.max_value();
        let s = p_bs / scale;
        let t = p_bs / (4.0 * b5_max);
        Ok(Self {
            b2,
            c1: data.c1,
            b3: data.b3.scale_real(s).hermitian_part(),
            b4: data.b4.scale_real((s * t).sqrt()),
            b5: data.b5.scale_real(t).hermitian_part(),
            b2_eig,
            delta: delta_rel.max(delta_rel * lmax),
            case,
        })
    }

    pub fn dim(&self) -> usize {
        self.b3.rows()
    }

    /// wᴴB₂w − c₁ (≤ 0 is rate-feasible).
    pub fn rate_slack(&self, w: &[C64]) -> f64 {
        self.b2.quad_form(w).re - self.c1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PddState {
    pub w: CVector,
    pub f: CVector,
    pub b: f64,
    pub lambda1: CVector,
    pub lambda2: C64,
    pub rho: f64,
}

pub const EPS_B: f64 = 1e-12;

impl PddState {
    pub fn new(problem: &PddProblem, w: CVector, rho0: f64) -> Self {
        let f = w.clone();
        let b = problem.b5.bilinear(&w, &f).re.max(EPS_B);
        let n = w.len();
        Self { w, f, b, lambda1: vec![ZERO; n], lambda2: ZERO, rho: rho0 }
    }

    pub fn residuals(&self, problem: &PddProblem) -> (f64, f64) {
        let z = problem.b5.bilinear(&self.w, &self.f);
        (norm_inf(&sub_vec(&self.w, &self.f)), (z - self.b).norm())
    }
}

pub fn augmented_lagrangian(p: &PddProblem, s: &PddState) -> f64 {
    let diff = sub_vec(&s.w, &s.f);
    let z = p.b5.bilinear(&s.w, &s.f);
    let zb = z - s.b;
    -p.b3.quad_form(&s.w).re + p.b4.bilinear(&s.w, &s.f).norm_sqr() / s.b
        + dot(&s.lambda1, &diff).re
        + (s.lambda2.conj() * zb).re
        + (norm_sqr(&diff) + zb.norm_sqr()) / (2.0 * s.rho)
}

/// B₆ and b₂ of the w-block after linearizing −wᴴB₃w at w₀.
pub fn w_block(p: &PddProblem, s: &PddState) -> (CMatrix, CVector) {
    let b4f = p.b4.mul_vec(&s.f);
    let b5f = p.b5.mul_vec(&s.f);
    let inv2r = 1.0 / (2.0 * s.rho);
    let b6 = &CMatrix::outer(&b4f, &b4f).scale_real(1.0 / s.b)
        + &(&CMatrix::identity(p.dim()) + &CMatrix::outer(&b5f, &b5f)).scale_real(inv2r);
    let b1: CVector = (0..p.dim())
        .map(|i| (s.f[i] + b5f[i] * s.b) * inv2r - s.lambda1[i] * 0.5 - s.lambda2.conj() * b5f[i] * 0.5)
        .collect();
    let b2 = add_vec(&b1, &p.b3.mul_vec(&s.w));
    (b6.hermitian_part(), b2)
}

/// Concave-term linearization used by the w-block: 2Re{w₀ᴴB₃w} − w₀ᴴB₃w₀ ≤ wᴴB₃w.
pub fn linearized_quadratic(b3: &CMatrix, w0: &[C64], w: &[C64]) -> f64 {
    2.0 * b3.bilinear(w0, w).re - b3.quad_form(w0).re
}

/// wᴴ(B₂+δI)w − 2δRe{w₀ᴴw} + δ‖w₀‖² − c₁, an upper bound on wᴴB₂w − c₁ tight at w₀.
pub fn shifted_constraint(b2: &CMatrix, c1: f64, delta: f64, w0: &[C64], w: &[C64]) -> f64 {
    b2.quad_form(w).re + delta * norm_sqr(w) - 2.0 * delta * dot(w0, w).re + delta * norm_sqr(w0) - c1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BlockStats {
    pub kkt_residual: f64,
    /// The candidate was rejected and the previous iterate kept.
    pub kept_previous: bool,
    /// The candidate was pulled back toward w₀ to restore feasibility.
    pub pulled_back: bool,
}

pub fn update_w(p: &PddProblem, s: &PddState) -> Result<(CVector, BlockStats)> {
    if p.c1 < 0.0 {
        return Err(IsacError::Infeasible(format!("rate budget c1 = {:e} is negative", p.c1)));
    }
    let w0 = &s.w;
    let (b6, b2v) = w_block(p, s);
    let surrogate = |w: &[C64]| b6.quad_form(w).re - 2.0 * dot(w, &b2v).re;

    let (cand, kkt) = match p.case {
        ConstraintCase::Invertible => {
            let r = herm_power_from(&p.b2_eig, 0.0, -0.5)?;
            let bt = r.matmul(&b6).matmul(&r).hermitian_part();
            let qt = r.mul_vec(&b2v);
            let (wb, sol) = trust_region_solve(&bt, &qt, p.c1.max(f64::MIN_POSITIVE))?;
            (r.mul_vec(&wb), sol.kkt_residual)
        }
        ConstraintCase::Singular => {
            let delta = p.delta;
            let r = herm_power_from(&p.b2_eig, delta, -0.5)?;
            let b_hat_inv = herm_power_from(&p.b2_eig, delta, -1.0)?;
            let bh = scale_vec(C64::new(delta, 0.0), w0);
            let m = b_hat_inv.mul_vec(&bh);
            let radius2 = dot(&bh, &m).re - (delta * norm_sqr(w0) - p.c1);
            if !(radius2 > 0.0) {
                debug!("w-step: zero surrogate radius ({radius2:e}), keeping w0");
                return Ok((w0.clone(), BlockStats { kept_previous: true, ..Default::default() }));
            }
            let bt = r.matmul(&b6).matmul(&r).hermitian_part();
            let qt = sub_vec(&r.mul_vec(&b2v), &r.mul_vec(&b6.mul_vec(&m)));
            let (wt, sol) = trust_region_solve(&bt, &qt, radius2)?;
            (add_vec(&r.mul_vec(&wt), &m), sol.kkt_residual)
        }
    };

    let mut stats = BlockStats { kkt_residual: kkt, ..Default::default() };
    if !cand.iter().all(|z| z.re.is_finite() && z.im.is_finite()) || !(surrogate(&cand) <= surrogate(w0)) {
        stats.kept_previous = true;
        return Ok((w0.clone(), stats));
    }
    let mut w = cand;
    if p.rate_slack(&w) > 0.0 {
        // back along the segment to the constraint boundary; the convex surrogate stays below its w0 value
        let d = sub_vec(&w, w0);
        let a = p.b2.quad_form(&d).re;
        let bq = p.b2.bilinear(w0, &d).re;
        let c = p.rate_slack(w0).min(0.0);
        let t = if a > 0.0 { ((-bq + (bq * bq - a * c).max(0.0).sqrt()) / a).clamp(0.0, 1.0) } else { 0.0 };
        let mut t = t;
        w = add_vec(w0, &scale_vec(C64::new(t, 0.0), &d));
        while p.rate_slack(&w) > 0.0 && t > 0.0 {
            t *= 1.0 - 1e-9;
            t = if t < 1e-300 { 0.0 } else { t };
            w = add_vec(w0, &scale_vec(C64::new(t, 0.0), &d));
        }
        stats.pulled_back = true;
    }
    Ok((w, stats))
}

/// B₇ and b₃ of the f-block.
pub fn f_block(p: &PddProblem, s: &PddState) -> (CMatrix, CVector) {
    let b4hw = p.b4.adjoint_mul_vec(&s.w);
    let b5hw = p.b5.adjoint_mul_vec(&s.w);
    let inv2r = 1.0 / (2.0 * s.rho);
    let b7 = &CMatrix::outer(&b4hw, &b4hw).scale_real(1.0 / s.b)
        + &(&CMatrix::identity(p.dim()) + &CMatrix::outer(&b5hw, &b5hw)).scale_real(inv2r);
    let b3: CVector = (0..p.dim())
        .map(|i| (s.w[i] + b5hw[i] * s.b) * inv2r + s.lambda1[i] * 0.5 - s.lambda2 * b5hw[i] * 0.5)
        .collect();
    (b7.hermitian_part(), b3)
}

/// f-block over the unit ball (‖f‖² ≤ P_BS in original units).
pub fn update_f(p: &PddProblem, s: &PddState) -> Result<(CVector, BlockStats)> {
    let (b7, b3) = f_block(p, s);
    let (f, sol) = trust_region_solve(&b7, &b3, 1.0)?;
    let mut stats = BlockStats { kkt_residual: sol.kkt_residual, ..Default::default() };
    let obj = |x: &[C64]| trust_region_objective(&b7, &b3, x);
    if norm_sqr(&s.f) <= 1.0 && !(obj(&f) <= obj(&s.f)) {
        stats.kept_previous = true;
        return Ok((s.f.clone(), stats));
    }
    Ok((f, stats))
}

/// (a₁, a₂, a₄) of a₁b² + a₂b + a₄/b.
pub fn b_coefficients(p: &PddProblem, s: &PddState) -> (f64, f64, f64) {
    let z = p.b5.bilinear(&s.w, &s.f);
    let a1 = 1.0 / (2.0 * s.rho);
    let a2 = -z.re / s.rho - s.lambda2.re;
    let a4 = p.b4.bilinear(&s.w, &s.f).norm_sqr();
    (a1, a2, a4)
}

/// Minimizer over b > 0 of a₁b² + a₂b + a₄/b, i.e. the positive root of 2a₁b³ + a₂b² − a₄.
pub fn solve_b(a1: f64, a2: f64, a4: f64) -> f64 {
    assert!(a1 > 0.0, "a1 must be positive");
    if a4 <= 0.0 {
        return (-a2 / (2.0 * a1)).max(EPS_B);
    }
    let p = |b: f64| (2.0 * a1 * b + a2) * b * b - a4;
    let dp = |b: f64| (6.0 * a1 * b + 2.0 * a2) * b;
    let mut lo = 0.0;
    // for b ≥ max(−a₂/a₁, 0) the cubic is at least a₁b³ − a₄
    let mut hi = (-a2 / a1).max(0.0) + (a4 / a1).cbrt();
    while p(hi) <= 0.0 {
        hi = hi * 2.0 + 1.0;
    }
    let mut b = hi;
    for _ in 0..200 {
        let v = p(b);
        if v == 0.0 {
            break;
        }
        if v > 0.0 {
            hi = b;
        } else {
            lo = b;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let d = dp(b);
        let step = if d > 0.0 { b - v / d } else { f64::NAN };
        let next = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if (next - b).abs() <= f64::EPSILON * b {
            b = next;
            break;
        }
        b = next;
    }
    b.max(EPS_B)
}

pub fn update_b(p: &PddProblem, s: &PddState) -> f64 {
    let (a1, a2, a4) = b_coefficients(p, s);
    let b = solve_b(a1, a2, a4);
    let g = |x: f64| a1 * x * x + a2 * x + a4 / x;
    if g(b) <= g(s.b) {
        b
    } else {
        s.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PddOptions {
    pub rho0: f64,
    pub rho_decay: f64,
    pub eta0: f64,
    pub eps_outer: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub inner_rel_tol: f64,
    pub delta_rel: f64,
}

impl Default for PddOptions {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            rho_decay: 0.85,
            eta0: 1.0,
            eps_outer: 1e-5,
            max_outer: 100,
            max_inner: 50,
            inner_rel_tol: 1e-8,
            delta_rel: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    Dual,
    Penalty,
    Converged,
}

#[derive(Debug, Clone, Serialize)]
pub struct PddOuterRecord {
    pub outer: usize,
    pub inner_sweeps: usize,
    pub residual_wf: f64,
    pub residual_b: f64,
    pub rho: f64,
    pub al: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, Serialize)]
pub struct PddDiagnostics {
    pub records: Vec<PddOuterRecord>,
    pub converged: bool,
    /// Largest AL increase over any single (w, f, b) sub-update.
    pub max_al_increase: f64,
    pub max_kkt_residual: f64,
    pub sub_updates: usize,
    pub case: ConstraintCase,
    pub final_residual_wf: f64,
    pub final_residual_b: f64,
}

#[derive(Debug, Clone)]
pub struct PddOutput {
    pub w: CMatrix,
    pub diagnostics: PddDiagnostics,
}

/// Runs the two-layer PDD loop from a rate-feasible beamformer.
pub fn pdd_solve(data: &ConstraintData, w_init: &CMatrix, p_bs: f64, opts: &PddOptions) -> Result<PddOutput> {
    let n_t = w_init.rows();
    let problem = PddProblem::new(data, p_bs, opts.delta_rel)?;
    let x0 = scale_vec(C64::new(1.0 / p_bs.sqrt(), 0.0), &w_init.vec());
    let (state, diagnostics) = pdd_iterate(&problem, x0, opts)?;
    let w = CMatrix::unvec(&scale_vec(C64::new(p_bs.sqrt(), 0.0), &state.w), n_t, w_init.cols());
    Ok(PddOutput { w, diagnostics })
}

/// The PDD loop in scaled coordinates; exposed for tests that inspect the state.
pub fn pdd_iterate(problem: &PddProblem, x0: CVector, opts: &PddOptions) -> Result<(PddState, PddDiagnostics)> {
    let mut s = PddState::new(problem, x0, opts.rho0);
    let mut eta = opts.eta0;
    let mut records = Vec::new();
    let mut max_inc = f64::NEG_INFINITY;
    let mut max_kkt: f64 = 0.0;
    let mut sub_updates = 0;
    let mut converged = false;

    for outer in 0..opts.max_outer {
        let mut al = augmented_lagrangian(problem, &s);
        let mut sweeps = 0;
        for _ in 0..opts.max_inner {
            sweeps += 1;
            let start = al;

            let (w, st) = update_w(problem, &s)?;
            s.w = w;
            max_kkt = max_kkt.max(st.kkt_residual);
            let next = augmented_lagrangian(problem, &s);
            max_inc = max_inc.max(next - al);
            al = next;

            let (f, st) = update_f(problem, &s)?;
            s.f = f;
            max_kkt = max_kkt.max(st.kkt_residual);
            let next = augmented_lagrangian(problem, &s);
            max_inc = max_inc.max(next - al);
            al = next;

            s.b = update_b(problem, &s);
            let next = augmented_lagrangian(problem, &s);
            max_inc = max_inc.max(next - al);
            al = next;
            sub_updates += 3;

            if (start - al).abs() <= opts.inner_rel_tol * al.abs().max(1.0) {
                break;
            }
        }

        let (rwf, rb) = s.residuals(problem);
        let res = rwf.max(rb);
        let branch = if res <= opts.eps_outer {
            converged = true;
            Branch::Converged
        } else if res <= eta {
            let z = problem.b5.bilinear(&s.w, &s.f);
            let inv = 1.0 / s.rho;
            s.lambda1 = add_vec(&s.lambda1, &scale_vec(C64::new(inv, 0.0), &sub_vec(&s.w, &s.f)));
            s.lambda2 += (z - s.b) * inv;
            eta = 0.5 * res;
            Branch::Dual
        } else {
            s.rho *= opts.rho_decay;
            Branch::Penalty
        };
        debug!("pdd outer {outer}: |w-f|={rwf:e} |z-b|={rb:e} rho={:e} al={al:e} {branch:?}", s.rho);
        records.push(PddOuterRecord {
            outer,
            inner_sweeps: sweeps,
            residual_wf: rwf,
            residual_b: rb,
            rho: s.rho,
            al,
            branch,
        });
        if converged {
            break;
        }
    }
    let (rwf, rb) = s.residuals(problem);
    let diagnostics = PddDiagnostics {
        records,
        converged,
        max_al_increase: if sub_updates == 0 { 0.0 } else { max_inc },
        max_kkt_residual: max_kkt,
        sub_updates,
        case: problem.case,
        final_residual_wf: rwf,
        final_residual_b: rb,
    };
    Ok((s, diagnostics))
}
