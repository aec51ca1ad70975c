use std::path::Path;
use std::time::Instant;

use dmv_core::field::fmt17;
use dmv_core::relenergy::{energy_inequality_residual, rei_series, DmvHistory, ReiBreakdown};
use dmv_core::solver::run;
use serde::Serialize;

use super::{elapsed, Outcome};
use crate::artifacts::{Manifest, OutDir};
use crate::config::RunConfig;
use crate::error::HarnessError;

pub const REI_HEADER: &str =
    "t,rel_energy,rel_energy_initial,defects,dissipation,lhs,T1,T2,T3,T4,T5,T6,T7,T8,rhs,residual,slack,holds";

#[derive(Debug, Clone, Serialize)]
pub struct ReiReport {
    pub strong_solution: &'static str,
    pub slack: f64,
    pub checkpoints: usize,
    pub failing_checkpoints: Vec<f64>,
    pub min_residual: f64,
    /// `max |T3..T6|` over checkpoints; checked only for unforced runs.
    pub max_strong_residual_term: f64,
    pub strong_residual_terms_checked: bool,
    pub strong_residual_terms_pass: bool,
    pub energy_residual_final: f64,
    pub passed: bool,
    pub series: Vec<ReiBreakdown<f64>>,
}

pub fn rei_check(cfg: &RunConfig, out: &Path) -> Result<Outcome, HarnessError> {
    let start = Instant::now();
    let strong = cfg.strong_solution().ok_or_else(|| {
        HarnessError::Usage("rei-check needs a constant, perturbed or manufactured configuration".into())
    })?;
    let traj = run(&cfg.solver_config(cfg.grid())?)?;
    let hist = DmvHistory::from_trajectory(&traj)?;
    let series = rei_series(&hist, strong.as_ref())?;
    let g = cfg.grid();
    let slack = cfg.rei.abs_tol + cfg.rei.slack_dx * g.dx().max(g.dy());

    let failing: Vec<f64> = series.iter().filter(|b| !b.holds(slack)).map(|b| b.tau).collect();
    let min_residual = series.iter().map(|b| b.residual).fold(f64::INFINITY, f64::min);
    let max_term = series
        .iter()
        .flat_map(|b| b.terms[2..6].iter().map(|t| t.abs()))
        .fold(0.0, f64::max);
    let terms_checked = !cfg.is_forced();
    let terms_pass = !terms_checked || max_term <= cfg.rei.term_tol;
    let report = ReiReport {
        strong_solution: strong.name(),
        slack,
        checkpoints: series.len(),
        passed: failing.is_empty() && terms_pass,
        failing_checkpoints: failing,
        min_residual,
        max_strong_residual_term: max_term,
        strong_residual_terms_checked: terms_checked,
        strong_residual_terms_pass: terms_pass,
        energy_residual_final: energy_inequality_residual(&hist, hist.final_time())?,
        series,
    };

    let mut dir = OutDir::create(out)?;
    let rows: Vec<Vec<String>> = report
        .series
        .iter()
        .map(|b| {
            let mut r = vec![
                fmt17(b.tau),
                fmt17(b.rel_energy),
                fmt17(b.rel_energy_initial),
                fmt17(b.defects),
                fmt17(b.dissipation),
                fmt17(b.lhs_total),
            ];
            r.extend(b.terms.iter().map(|t| fmt17(*t)));
            r.extend([
                fmt17(b.rhs_total()),
                fmt17(b.residual),
                fmt17(slack),
                b.holds(slack).to_string(),
            ]);
            r
        })
        .collect();
    dir.write_csv("rei.csv", REI_HEADER, &rows)?;
    dir.write_json("rei_report.json", &report)?;
    let summary = serde_json::json!({
        "passed": report.passed,
        "min_residual": report.min_residual,
        "slack": slack,
        "max_strong_residual_term": max_term,
    });
    Manifest::new("rei-check", cfg, &summary, elapsed(start)).write(&mut dir)?;
    let message = format!(
        "rei-check against {} solution: {} checkpoints, min residual {:.3e} (slack {:.1e}), max |T3..T6| {:.3e}{}",
        report.strong_solution,
        report.checkpoints,
        report.min_residual,
        slack,
        max_term,
        if report.passed { "" } else { " -- FAILED" }
    );
    Ok(Outcome {
        passed: report.passed,
        message,
    })
}
