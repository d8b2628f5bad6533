//! Library half of the `isac` binary: scenario sweeps and the oracle gate.

pub mod scenario;

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use log::{info, warn};
use ma_isac::config::nats_to_bits;
use ma_isac::oracles::{self, OracleReport, VerifyOptions};
use ma_isac::{bca_solve, initialize_from_seed, IsacError, SolverState, Termination};
use rayon::prelude::*;

pub use scenario::{RunPoint, Scenario};

pub const SCHEMA_LINE: &str = "#schema=1";

pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const INFEASIBLE: i32 = 2;
    pub const ORACLE_FAILED: i32 = 3;
}

#[derive(Debug)]
pub enum PointResult {
    Solved(Box<SolverState>),
    Infeasible(String),
    Error(String),
}

impl PointResult {
    fn status(&self) -> &'static str {
        match self {
            PointResult::Solved(s) => match s.termination {
                Some(Termination::Converged) => "converged",
                Some(Termination::Halted(_)) => "FAILED",
                _ => "max_outer",
            },
            _ => "FAILED",
        }
    }
}

pub fn solve_point(p: &RunPoint) -> PointResult {
    match initialize_from_seed(&p.cfg) {
        Ok(init) => {
            let state = bca_solve(init, &p.cfg, &p.opts);
            if let Some(Termination::Halted(why)) = &state.termination {
                warn!("{}: halted: {why}", p.id);
            }
            PointResult::Solved(Box::new(state))
        }
        Err(IsacError::Infeasible(msg)) => PointResult::Infeasible(msg),
        Err(e) => PointResult::Error(e.to_string()),
    }
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<File>> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "{SCHEMA_LINE}")?;
    Ok(csv::Writer::from_writer(f))
}

fn e(x: f64) -> String {
    format!("{x:e}")
}

const TRACE_HEADER: [&str; 14] = [
    "iteration",
    "crb_rad2",
    "obj",
    "sum_rate_bits",
    "w_power_w",
    "fp_gap",
    "pdd_outer",
    "pdd_converged",
    "pdd_residual_wf",
    "pdd_residual_b",
    "pdd_max_al_increase",
    "w_accepted",
    "positions_moved",
    "d_r_m",
];

fn write_trace(dir: &Path, p: &RunPoint, res: &PointResult) -> anyhow::Result<()> {
    let mut w = csv_writer(&dir.join(format!("trace_{}.csv", p.id)))?;
    w.write_record(TRACE_HEADER)?;
    let failure = match res {
        PointResult::Solved(s) => {
            for h in &s.history {
                let d_r = h.d_r.iter().map(|d| e(*d)).collect::<Vec<_>>().join(";");
                w.write_record([
                    h.iteration.to_string(),
                    e(h.crb),
                    e(h.obj),
                    e(nats_to_bits(h.sum_rate)),
                    e(h.w_power),
                    e(h.fp_gap),
                    h.pdd_outer.to_string(),
                    h.pdd_converged.to_string(),
                    e(h.pdd_residual_wf),
                    e(h.pdd_residual_b),
                    e(h.pdd_max_al_increase),
                    h.w_accepted.to_string(),
                    h.positions_moved.to_string(),
                    d_r,
                ])?;
            }
            match &s.termination {
                Some(Termination::Halted(why)) => Some(why.clone()),
                _ => None,
            }
        }
        PointResult::Infeasible(m) => Some(format!("infeasible: {m}")),
        PointResult::Error(m) => Some(m.clone()),
    };
    if let Some(why) = failure {
        let mut row = vec![String::new(); TRACE_HEADER.len()];
        row[0] = "FAILED".into();
        row[TRACE_HEADER.len() - 1] = why;
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 11] =
    ["id", "mode", "p_bs_dbm", "n_r", "seed", "status", "iterations", "final_crb_rad2", "sum_rate_bits", "d_r_m", "message"];

/// Runs every sweep point and writes the CSVs. Returns the process exit code.
pub fn run_scenario(scenario: &Scenario, out: &Path, jobs: Option<usize>) -> anyhow::Result<i32> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let points = scenario.points()?;
    info!("{} sweep points", points.len());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
    let results: Vec<PointResult> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let r = solve_point(p);
                info!("{}: {}", p.id, r.status());
                r
            })
            .collect()
    });

    let mut summary = csv_writer(&out.join("summary.csv"))?;
    summary.write_record(SUMMARY_HEADER)?;
    let mut code = exit::OK;
    for (p, r) in points.iter().zip(&results) {
        write_trace(out, p, r)?;
        let (iters, crb, rate, d_r, msg) = match r {
            PointResult::Solved(s) => {
                let last = s.history.last().expect("history holds the initial point");
                let msg = match &s.termination {
                    Some(Termination::Halted(why)) => why.clone(),
                    _ => String::new(),
                };
                (
                    (s.history.len() - 1).to_string(),
                    e(last.crb),
                    e(nats_to_bits(last.sum_rate)),
                    last.d_r.iter().map(|d| e(*d)).collect::<Vec<_>>().join(";"),
                    msg,
                )
            }
            PointResult::Infeasible(m) | PointResult::Error(m) => (String::new(), String::new(), String::new(), String::new(), m.clone()),
        };
        // internal errors outrank infeasibility
        let halted = matches!(r, PointResult::Solved(s) if matches!(s.termination, Some(Termination::Halted(_))));
        code = match r {
            PointResult::Error(_) => exit::INTERNAL,
            _ if halted => exit::INTERNAL,
            PointResult::Infeasible(_) if code == exit::OK => exit::INFEASIBLE,
            _ => code,
        };
        summary.write_record([
            p.id.clone(),
            p.mode.as_str().to_string(),
            p.p_bs_dbm.to_string(),
            p.n_r.to_string(),
            p.seed.to_string(),
            r.status().to_string(),
            iters,
            crb,
            rate,
            d_r,
            msg,
        ])?;
    }
    summary.flush()?;
    Ok(code)
}

pub fn write_verify_csv(reports: &[OracleReport], path: &Path) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["name", "max_abs_err", "max_rel_err", "n_cases", "tolerance", "passed"])?;
    for r in reports {
        w.write_record([r.name.clone(), e(r.max_abs_err), e(r.max_rel_err), r.n_cases.to_string(), e(r.tolerance), r.passed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the oracle suites into `out/verify.csv`. Returns the process exit code.
pub fn verify(out: &Path, opts: &VerifyOptions) -> anyhow::Result<i32> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let reports = oracles::verify(opts)?;
    write_verify_csv(&reports, &out.join("verify.csv"))?;
    for r in &reports {
        info!("{}: passed={} max_rel={:e}", r.name, r.passed, r.max_rel_err);
    }
    Ok(if reports.iter().all(|r| r.passed) { exit::OK } else { exit::ORACLE_FAILED })
}
