//! Block-coordinate loop over (γ, ω) → W → {u_k} → {q_k} → d_r.
//!
//! The CRB depends only on W and d_r. The filter and power blocks can only
//! raise the sum rate, the position block only lowers the CRB surrogate, and a
//! PDD beamformer is accepted only if it does not raise the CRB, so the
//! recorded CRB trace is non-increasing.

use log::{debug, info, warn};
use serde::Serialize;

use crate::beamformer::{build_constraint_data, pdd_solve, PddOptions};
use crate::channel::{complex_gaussian, rng_for, sample_channel, streams, uniform_positions, ChannelState};
use crate::config::{Mode, SystemConfig};
use crate::filters_power::{update_filters, update_powers};
use crate::fp::{leakage_power, FpState, RateContext};
use crate::linalg::{herm_solve, CMatrix, CVector};
use crate::positions::{build_global_coefficients, update_positions};
use crate::sensing::{self, crb_theta};
use crate::{IsacError, Result};

const INIT_ATTEMPTS: u64 = 20;
const FEASIBILITY_ALTERNATIONS: usize = 5;
/// Position sweeps stop once no antenna moves more than this (meters).
const POSITION_STEP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub mode: Mode,
    pub max_outer: usize,
    /// Stop once |ΔCRB|/CRB falls to this value.
    pub tol: f64,
    /// Cap on MM sweeps over the receive antennas per position block.
    pub position_sweeps: usize,
    /// Cap on (γ, ω) → u → q → d_r passes per outer iteration in MA mode.
    pub position_alternations: usize,
    pub pdd: PddOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { mode: Mode::Ma, max_outer: 30, tol: 1e-4, position_sweeps: 200, position_alternations: 50, pdd: PddOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// [F⁻¹]₁₁ in rad².
    pub crb: f64,
    pub obj: f64,
    /// True sum rate Σ ln(1 + SINR_k) in nats.
    pub sum_rate: f64,
    pub w_power: f64,
    pub q: Vec<f64>,
    pub d_r: Vec<f64>,
    /// Largest |R₂ − Σ ln(1+SINR)| right after any (γ, ω) refresh in this iteration.
    pub fp_gap: f64,
    pub pdd_outer: usize,
    pub pdd_converged: bool,
    pub pdd_residual_wf: f64,
    pub pdd_residual_b: f64,
    pub pdd_max_al_increase: f64,
    pub pdd_max_kkt: f64,
    pub w_accepted: bool,
    pub positions_moved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Termination {
    Converged,
    MaxOuter,
    /// A block failed; the state holds the last good iterate.
    Halted(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverState {
    #[serde(skip)]
    pub w: CMatrix,
    #[serde(skip)]
    pub u: Vec<CVector>,
    pub q: Vec<f64>,
    pub d_r: Vec<f64>,
    pub fp: FpState,
    #[serde(skip)]
    pub channel: ChannelState,
    pub history: Vec<IterationRecord>,
    pub termination: Option<Termination>,
    /// Seed offset that produced the initial beamformer.
    pub init_attempt: u64,
}

impl SolverState {
    pub fn converged(&self) -> bool {
        self.termination == Some(Termination::Converged)
    }

    pub fn final_crb(&self) -> f64 {
        self.history.last().map_or(f64::INFINITY, |r| r.crb)
    }
}

/// Rate-side inputs at (W, d_r).
pub fn rate_context(cfg: &SystemConfig, ch: &ChannelState, w: &CMatrix, d_r: &[f64]) -> RateContext {
    let (a_t, _) = sensing::transmit_steering(cfg, &ch.d_t);
    let (a_r, _) = crate::channel::steering(d_r, cfg.theta0, cfg.wavelength, cfg.beta_r);
    RateContext {
        h: (0..cfg.k_users).map(|k| ch.user_channel_at(k, d_r)).collect(),
        a_r,
        leak: leakage_power(cfg.alpha, w, &a_t),
        sigma2: cfg.sigma2,
    }
}

fn exact_crb(cfg: &SystemConfig, ch: &ChannelState, d_r: &[f64], w: &CMatrix) -> (f64, f64) {
    let m = sensing::evaluate(cfg, &ch.d_t, d_r, w);
    (crb_theta(&m.fim), m.obj)
}

/// (Σ q h hᴴ + leak·a_r a_rᴴ + σ²I)⁻¹ h_k for every user.
fn mmse_filters(ctx: &RateContext, q: &[f64]) -> Result<Vec<CVector>> {
    let n = ctx.a_r.len();
    let mut m = CMatrix::outer(&ctx.a_r, &ctx.a_r).scale_real(ctx.leak);
    for (h, &qk) in ctx.h.iter().zip(q) {
        m = &m + &CMatrix::outer(h, h).scale_real(qk);
    }
    let m = m.add_scaled_identity(ctx.sigma2).hermitian_part();
    debug_assert_eq!(m.rows(), n);
    ctx.h.iter().map(|h| Ok(herm_solve(&m, h)?)).collect()
}

fn random_beamformer(cfg: &SystemConfig, attempt: u64) -> CMatrix {
    let mut rng = rng_for(cfg.rng_seed.wrapping_add(attempt), streams::BEAMFORMER_INIT);
    let w = CMatrix::from_fn(cfg.n_t, cfg.n_t, |_, _| complex_gaussian(&mut rng, 1.0));
    let f = w.frobenius_norm();
    w.scale_real(cfg.p_bs.sqrt() / f)
}

/// Samples the channel from `cfg.rng_seed` and initializes.
pub fn initialize_from_seed(cfg: &SystemConfig) -> Result<SolverState> {
    cfg.validate()?;
    initialize(cfg, &sample_channel(cfg))
}

pub fn initialize(cfg: &SystemConfig, channels: &ChannelState) -> Result<SolverState> {
    cfg.validate()?;
    let d_r = uniform_positions(cfg.n_r, cfg.d_min, cfg.d_max);
    let mut best_rate = f64::NEG_INFINITY;
    for attempt in 0..INIT_ATTEMPTS {
        let w = random_beamformer(cfg, attempt);
        let ctx = rate_context(cfg, channels, &w, &d_r);
        let mut q = cfg.p_u.clone();
        let mut u = mmse_filters(&ctx, &q)?;
        let mut fp = ctx.refresh(&u, &q)?;
        for _ in 0..FEASIBILITY_ALTERNATIONS {
            if ctx.sum_rate(&u, &q) >= cfg.r_t {
                break;
            }
            u = update_filters(&fp, &u, &q, &ctx)?.u;
            q = update_powers(&fp, &u, &ctx, &cfg.p_u);
            fp = ctx.refresh(&u, &q)?;
        }
        let rate = ctx.sum_rate(&u, &q);
        best_rate = best_rate.max(rate);
        if rate >= cfg.r_t {
            let mut channel = channels.clone();
            channel.d_r = d_r.clone();
            let mut state = SolverState {
                w,
                u,
                q,
                d_r,
                fp,
                channel,
                history: Vec::new(),
                termination: None,
                init_attempt: attempt,
            };
            let gap = (ctx.r2(&state.fp, &state.u, &state.q) - rate).abs();
            let rec = record(cfg, &state, 0, gap, None, false, 0);
            state.history.push(rec);
            return Ok(state);
        }
        debug!("init attempt {attempt}: sum rate {rate:.4} < {:.4}", cfg.r_t);
    }
    Err(IsacError::Infeasible(format!(
        "no rate-feasible start after {INIT_ATTEMPTS} beamformer seeds: best sum rate {best_rate:.6} nats < R_t = {:.6} nats",
        cfg.r_t
    )))
}

struct PddSummary {
    outer: usize,
    converged: bool,
    res_wf: f64,
    res_b: f64,
    max_al_increase: f64,
    max_kkt: f64,
}

fn record(
    cfg: &SystemConfig,
    s: &SolverState,
    iteration: usize,
    fp_gap: f64,
    pdd: Option<PddSummary>,
    w_accepted: bool,
    positions_moved: usize,
) -> IterationRecord {
    let (crb, obj) = exact_crb(cfg, &s.channel, &s.d_r, &s.w);
    let ctx = rate_context(cfg, &s.channel, &s.w, &s.d_r);
    let p = pdd.unwrap_or(PddSummary {
        outer: 0,
        converged: false,
        res_wf: 0.0,
        res_b: 0.0,
        max_al_increase: 0.0,
        max_kkt: 0.0,
    });
    IterationRecord {
        iteration,
        crb,
        obj,
        sum_rate: ctx.sum_rate(&s.u, &s.q),
        w_power: s.w.frobenius_norm().powi(2),
        q: s.q.clone(),
        d_r: s.d_r.clone(),
        fp_gap,
        pdd_outer: p.outer,
        pdd_converged: p.converged,
        pdd_residual_wf: p.res_wf,
        pdd_residual_b: p.res_b,
        pdd_max_al_increase: p.max_al_increase,
        pdd_max_kkt: p.max_kkt,
        w_accepted,
        positions_moved,
    }
}

fn max_step(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn filters_and_powers(cfg: &SystemConfig, s: &mut SolverState) -> Result<()> {
    let ctx = rate_context(cfg, &s.channel, &s.w, &s.d_r);
    s.u = update_filters(&s.fp, &s.u, &s.q, &ctx)?.u;
    s.q = update_powers(&s.fp, &s.u, &ctx, &cfg.p_u);
    Ok(())
}

/// Refreshes (γ, ω) and returns |R₂ − true rate| at the refreshed point.
fn refresh(cfg: &SystemConfig, s: &mut SolverState) -> Result<f64> {
    let ctx = rate_context(cfg, &s.channel, &s.w, &s.d_r);
    s.fp = ctx.refresh(&s.u, &s.q)?;
    Ok((ctx.r2(&s.fp, &s.u, &s.q) - ctx.sum_rate(&s.u, &s.q)).abs())
}

fn iterate(cfg: &SystemConfig, s: &mut SolverState, iteration: usize, opts: &SolveOptions) -> Result<IterationRecord> {
    let mut fp_gap = refresh(cfg, s)?;

    // beamformer
    let ctx = rate_context(cfg, &s.channel, &s.w, &s.d_r);
    let (a_t, a_t_dot) = sensing::transmit_steering(cfg, &s.channel.d_t);
    let coeffs = sensing::coefficient_matrices(&s.d_r, &a_t, &a_t_dot, cfg.theta0, cfg.wavelength, cfg.beta_r);
    let data = build_constraint_data(&s.fp, &s.u, &s.q, &ctx, cfg.alpha, &a_t, &coeffs, cfg.r_t);
    let out = pdd_solve(&data, &s.w, cfg.p_bs, &opts.pdd)?;
    let diag = &out.diagnostics;
    let mut w_new = out.w;
    let pw = w_new.frobenius_norm().powi(2);
    if pw > cfg.p_bs {
        w_new = w_new.scale_real((cfg.p_bs / pw).sqrt());
    }
    let (crb_old, _) = exact_crb(cfg, &s.channel, &s.d_r, &s.w);
    let (crb_new, _) = exact_crb(cfg, &s.channel, &s.d_r, &w_new);
    let rate_new = rate_context(cfg, &s.channel, &w_new, &s.d_r).sum_rate(&s.u, &s.q);
    let accepted = w_new.is_finite() && crb_new <= crb_old && rate_new >= cfg.r_t;
    if accepted {
        s.w = w_new;
    } else {
        debug!("iteration {iteration}: PDD beamformer rejected (crb {crb_new:e} vs {crb_old:e}, rate {rate_new:.6})");
    }
    let pdd = PddSummary {
        outer: diag.records.len(),
        converged: diag.converged,
        res_wf: diag.final_residual_wf,
        res_b: diag.final_residual_b,
        max_al_increase: diag.max_al_increase,
        max_kkt: diag.max_kkt_residual,
    };

    // filters and powers at the new W
    filters_and_powers(cfg, s)?;

    // positions; with W fixed, the frozen-filter rate constraint binds after a few
    // millimeters, so (γ, ω) → u → q → d_r is repeated until the array stops moving
    let mut moved = 0;
    if opts.mode == Mode::Ma {
        for alt in 0..opts.position_alternations.max(1) {
            if alt > 0 {
                fp_gap = fp_gap.max(refresh(cfg, s)?);
                filters_and_powers(cfg, s)?;
            }
            fp_gap = fp_gap.max(refresh(cfg, s)?);
            let start = s.d_r.clone();
            let gc = build_global_coefficients(cfg, &s.channel, &s.w, &s.u, &s.q, &s.fp);
            for _ in 0..opts.position_sweeps {
                let (d, stats) = update_positions(&gc, &s.d_r, cfg.d_min, cfg.d_max)?;
                let step = max_step(&d, &s.d_r);
                moved += stats.moved;
                s.d_r = d;
                if step <= POSITION_STEP_TOL {
                    break;
                }
            }
            s.channel.d_r = s.d_r.clone();
            if max_step(&s.d_r, &start) <= POSITION_STEP_TOL {
                break;
            }
        }
    }
    Ok(record(cfg, s, iteration, fp_gap, Some(pdd), accepted, moved))
}

pub fn bca_solve(mut state: SolverState, cfg: &SystemConfig, opts: &SolveOptions) -> SolverState {
    let mut prev = state.final_crb();
    state.termination = Some(Termination::MaxOuter);
    for it in 1..=opts.max_outer {
        let backup = state.clone();
        match iterate(cfg, &mut state, it, opts) {
            Ok(rec) => {
                let crb = rec.crb;
                state.history.push(rec);
                let change = (prev - crb).abs() / prev.abs().max(f64::MIN_POSITIVE);
                prev = crb;
                if change <= opts.tol || opts.tol.is_infinite() {
                    info!("converged after {it} iterations, crb {crb:e}");
                    state.termination = Some(Termination::Converged);
                    break;
                }
            }
            Err(e) => {
                warn!("iteration {it} failed: {e}");
                let history = std::mem::take(&mut state.history);
                state = backup;
                state.history = history;
                state.termination = Some(Termination::Halted(e.to_string()));
                break;
            }
        }
    }
    state
}

/// Constraint violations of a recorded iterate, each ≤ 0 when satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub rate_shortfall: f64,
    pub power_excess: f64,
    pub q_violation: f64,
    pub position_violation: f64,
}

pub fn check_constraints(cfg: &SystemConfig, rec: &IterationRecord) -> ConstraintCheck {
    let q_violation = rec
        .q
        .iter()
        .zip(&cfg.p_u)
        .map(|(&q, &p)| (-q).max(q - p))
        .fold(f64::NEG_INFINITY, f64::max);
    let d = &rec.d_r;
    let mut pos = (-d[0]).max(d[d.len() - 1] - cfg.d_max);
    for w in d.windows(2) {
        pos = pos.max(cfg.d_min - (w[1] - w[0]));
    }
    ConstraintCheck {
        rate_shortfall: cfg.r_t - rec.sum_rate,
        power_excess: rec.w_power - cfg.p_bs,
        q_violation,
        position_violation: pos,
    }
}

impl ConstraintCheck {
    /// Tolerances: 1e-6 nats on the rate, 1e-8 relative on the power, 1e-8 on boxes and spacing.
    pub fn satisfied(&self, cfg: &SystemConfig) -> bool {
        self.rate_shortfall <= 1e-6
            && self.power_excess <= 1e-8 * cfg.p_bs
            && self.q_violation <= 1e-8 * cfg.p_u.iter().cloned().fold(0.0, f64::max).max(1e-300)
            && self.position_violation <= 1e-8
    }
}
