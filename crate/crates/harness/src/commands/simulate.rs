use std::path::Path;
use std::time::Instant;

use dmv_core::solver::{run, RunEcho};
use serde::Serialize;

use super::{elapsed, Outcome};
use crate::artifacts::{time_series, Manifest, OutDir, TIMESERIES_HEADER};
use crate::config::RunConfig;
use crate::error::HarnessError;

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub steps: usize,
    pub checkpoints: usize,
    pub final_time: f64,
    pub mass_rel_drift: f64,
    pub rhotheta_rel_drift: f64,
    pub min_theta: f64,
    pub max_rho: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub strong_solution: Option<&'static str>,
    pub solver: RunEcho<f64>,
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome, HarnessError> {
    let start = Instant::now();
    let params = cfg.params().map_err(|e| HarnessError::Usage(e.to_string()))?;
    let traj = run(&cfg.solver_config(cfg.grid())?)?;
    let strong = cfg.strong_solution();
    let rows = time_series(&traj, &params, strong.as_deref())?;

    let mut dir = OutDir::create(out)?;
    let mut header = TIMESERIES_HEADER.to_string();
    if strong.is_some() {
        header.push_str(",rel_energy");
    }
    let cells: Vec<Vec<String>> = rows.iter().map(|r| r.cells()).collect();
    dir.write_csv("timeseries.csv", &header, &cells)?;
    for (k, s) in traj.states.iter().enumerate() {
        dir.write_snapshot(&format!("snapshots/snapshot_{k:05}.csv"), s)?;
    }

    let (first, last) = (rows[0], rows[rows.len() - 1]);
    let summary = SimulateSummary {
        steps: traj.steps,
        checkpoints: traj.len(),
        final_time: last.t,
        mass_rel_drift: (last.total_mass - first.total_mass).abs() / first.total_mass,
        rhotheta_rel_drift: (last.total_rhotheta - first.total_rhotheta).abs() / first.total_rhotheta,
        min_theta: rows.iter().map(|r| r.min_theta).fold(f64::INFINITY, f64::min),
        max_rho: rows.iter().map(|r| r.max_rho).fold(f64::NEG_INFINITY, f64::max),
        energy_initial: first.total_energy,
        energy_final: last.total_energy,
        strong_solution: strong.as_ref().map(|s| s.name()),
        solver: traj.echo,
    };
    Manifest::new("simulate", cfg, &summary, elapsed(start)).write(&mut dir)?;
    Ok(Outcome {
        passed: true,
        message: format!(
            "simulate: {} steps to t = {}, {} checkpoints, mass drift {:.3e}, min theta {}",
            summary.steps, summary.final_time, summary.checkpoints, summary.mass_rel_drift, summary.min_theta
        ),
    })
}
