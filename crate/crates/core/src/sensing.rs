//! Fisher information and Cramér-Rao bound for the target direction.
//!
//! The echo after interference cancellation is Y = α a_r a_tᴴ W S. With
//! A(θ) = a_r a_tᴴ and Ȧ its angle derivative, the three coefficient matrices
//! are A₁ = ȦᴴȦ, A₂ = ȦᴴA and A₃ = AᴴA, written out in terms of the transmit
//! steering vector and the receive positions.

use serde::Serialize;

use crate::channel::steering;
use crate::config::SystemConfig;
use crate::linalg::{CMatrix, C64, J};

#[derive(Debug, Clone)]
pub struct Coefficients {
    pub a1: CMatrix,
    pub a2: CMatrix,
    pub a3: CMatrix,
}

/// tr(A₁WWᴴ), tr(A₂WWᴴ), tr(A₃WWᴴ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceTerms {
    pub t1: f64,
    pub t2: C64,
    pub t3: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensingModel {
    #[serde(skip)]
    pub coeffs: Coefficients,
    pub fim: [[f64; 3]; 3],
    pub crb: f64,
    pub obj: f64,
    /// Set when W is (numerically) orthogonal to a_t and the fraction was dropped.
    pub degenerate: bool,
}

/// Transmit steering vector and derivative on the fixed transmit array.
pub fn transmit_steering(cfg: &SystemConfig, d_t: &[f64]) -> (Vec<C64>, Vec<C64>) {
    steering(d_t, cfg.theta0, cfg.wavelength, cfg.beta_t)
}

pub fn coefficient_matrices(
    d_r: &[f64],
    a_t: &[C64],
    a_t_dot: &[C64],
    theta0: f64,
    wavelength: f64,
    beta_r: C64,
) -> Coefficients {
    let kappa = 2.0 * std::f64::consts::PI / wavelength;
    let c = kappa * theta0.cos();
    let nr = d_r.len() as f64;
    let g = beta_r.norm_sqr();
    let s1: f64 = d_r.iter().map(|d| c * d).sum();
    let s2: f64 = d_r.iter().map(|d| (c * d).powi(2)).sum();

    let tt = CMatrix::outer(a_t, a_t);
    let td = CMatrix::outer(a_t, a_t_dot);
    let dt = CMatrix::outer(a_t_dot, a_t);
    let dd = CMatrix::outer(a_t_dot, a_t_dot);

    let a1 = {
        let m = &(&tt.scale_real(s2) + &td.scale(-J * s1)) + &(&dt.scale(J * s1) + &dd.scale_real(nr));
        m.scale_real(g)
    };
    let a2 = (&tt.scale(-J * s1) + &dt.scale_real(nr)).scale_real(g);
    let a3 = tt.scale_real(nr * g);
    Coefficients { a1, a2, a3 }
}

/// tr(A W Wᴴ) summed over the columns of W.
pub fn trace_ww(a: &CMatrix, w: &CMatrix) -> C64 {
    (0..w.cols())
        .map(|c| {
            let col: Vec<C64> = (0..w.rows()).map(|r| w[(r, c)]).collect();
            a.quad_form(&col)
        })
        .sum()
}

pub fn trace_terms(coeffs: &Coefficients, w: &CMatrix) -> TraceTerms {
    TraceTerms {
        t1: trace_ww(&coeffs.a1, w).re,
        t2: trace_ww(&coeffs.a2, w),
        t3: trace_ww(&coeffs.a3, w).re,
    }
}

/// The maximized surrogate T₁ − |T₂|²/T₃ and whether T₃ was treated as zero.
pub fn objective_from_traces(t: &TraceTerms, a3_norm: f64, w_norm_sqr: f64) -> (f64, bool) {
    if t.t3 <= 1e-14 * a3_norm * w_norm_sqr {
        (t.t1, true)
    } else {
        (t.t1 - t.t2.norm_sqr() / t.t3, false)
    }
}

pub fn fim(t: &TraceTerms, alpha: C64, sigma2: f64, l_slots: usize) -> [[f64; 3]; 3] {
    let s = 2.0 * l_slots as f64 / sigma2;
    let f_tt = s * alpha.norm_sqr() * t.t1;
    let z = alpha.conj() * t.t2;
    let f_ta = [s * z.re, s * (z * J).re];
    let f_aa = s * t.t3;
    [[f_tt, f_ta[0], f_ta[1]], [f_ta[0], f_aa, 0.0], [f_ta[1], 0.0, f_aa]]
}

/// [F⁻¹]₁,₁ through the Schur complement of the (α_R, α_I) block, which is a scaled identity.
pub fn crb_theta(f: &[[f64; 3]; 3]) -> f64 {
    let faa = f[1][1];
    if faa <= 0.0 {
        return f64::INFINITY;
    }
    let schur = f[0][0] - (f[0][1] * f[0][1] + f[0][2] * f[0][2]) / faa;
    if schur <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / schur
    }
}

/// σ²/(2L|α|²·obj)
pub fn crb_closed_form(obj: f64, alpha: C64, sigma2: f64, l_slots: usize) -> f64 {
    if obj <= 0.0 {
        return f64::INFINITY;
    }
    sigma2 / (2.0 * l_slots as f64 * alpha.norm_sqr() * obj)
}

/// Everything the optimizer needs about sensing at a given (d_r, W).
pub fn evaluate(cfg: &SystemConfig, d_t: &[f64], d_r: &[f64], w: &CMatrix) -> SensingModel {
    let (a_t, a_t_dot) = transmit_steering(cfg, d_t);
    let coeffs = coefficient_matrices(d_r, &a_t, &a_t_dot, cfg.theta0, cfg.wavelength, cfg.beta_r);
    let t = trace_terms(&coeffs, w);
    let a3_norm = coeffs.a3.frobenius_norm();
    let (obj, degenerate) = objective_from_traces(&t, a3_norm, w.frobenius_norm().powi(2));
    let f = fim(&t, cfg.alpha, cfg.sigma2, cfg.l_slots);
    let crb = crb_closed_form(obj, cfg.alpha, cfg.sigma2, cfg.l_slots);
    SensingModel { coeffs, fim: f, crb, obj, degenerate }
}
