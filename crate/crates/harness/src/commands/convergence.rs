use std::path::Path;
use std::time::Instant;

use dmv_core::field::{fmt17, ConservedState, Grid2D};
use dmv_core::relenergy::{
    energy_inequality_residual, rei_series, weak_form_residual, DmvHistory, Equation, StrongSolution, TestFunction,
};
use dmv_core::solver::{run, Trajectory};
use serde::Serialize;

use super::{elapsed, Outcome};
use crate::artifacts::{fmt_opt, Manifest, OutDir};
use crate::config::RunConfig;
use crate::error::HarnessError;

/// Errors at or below this are treated as exact; their orders are undefined.
pub const ZERO_ERROR: f64 = 1e-12;
/// Minimum acceptable state self-convergence order.
pub const MIN_STATE_ORDER: f64 = 0.8;

pub const CONVERGENCE_HEADER: &str = "n,dx,steps,state_error,state_order,energy_residual,energy_order,\
momentum_residual,momentum_order,rei_negative_part,rei_order";

#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub n: usize,
    pub dx: f64,
    pub steps: usize,
    /// L1 distance of the final conserved state from the reference.
    pub state_error: f64,
    /// `|energy residual|` at the final time.
    pub energy_residual: f64,
    /// `|momentum weak-form residual|` with the bubble test function.
    pub momentum_residual: f64,
    /// `max(0, −min residual)` of the relative energy inequality.
    pub rei_negative_part: Option<f64>,
    /// Orders against the next coarser level.
    pub state_order: Option<f64>,
    pub energy_order: Option<f64>,
    pub momentum_order: Option<f64>,
    pub rei_order: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub levels: Vec<usize>,
    /// `"exact"` for manufactured runs, otherwise the resolution of the reference run.
    pub reference: String,
    pub rows: Vec<LevelRow>,
    pub min_state_order: Option<f64>,
    pub passed: bool,
}

#[derive(Serialize)]
struct Echo<'a> {
    run: &'a RunConfig,
    levels: &'a [usize],
}

fn order(coarse: f64, fine: f64, ratio: f64) -> Option<f64> {
    (coarse > ZERO_ERROR && fine > ZERO_ERROR).then(|| (coarse / fine).ln() / ratio.ln())
}

fn l1_distance(a: &ConservedState<f64>, b: &ConservedState<f64>) -> f64 {
    let g = a.grid();
    let mut sum = 0.0;
    for k in 0..g.len() {
        let (ra, ma, za) = (a.rho.values()[k], a.mom.values()[k], a.z.values()[k]);
        let (rb, mb, zb) = (b.rho.values()[k], b.mom.values()[k], b.z.values()[k]);
        sum += (ra - rb).abs() + (ma[0] - mb[0]).abs() + (ma[1] - mb[1]).abs() + (za - zb).abs();
    }
    sum * g.cell_area()
}

fn level_grid(cfg: &RunConfig, n: usize) -> Result<Grid2D<f64>, HarnessError> {
    let (nx, ny) = (cfg.grid.nx, cfg.grid.ny);
    if (n * ny) % nx != 0 {
        return Err(HarnessError::Usage(format!(
            "level {n} does not preserve the {nx}x{ny} aspect ratio"
        )));
    }
    cfg.grid_for(n, n * ny / nx)
        .map_err(|e| HarnessError::Usage(format!("level {n}: {e}")))
}

fn run_level(cfg: &RunConfig, n: usize, output_every: usize) -> Result<Trajectory<f64>, HarnessError> {
    let mut sc = cfg.solver_config(level_grid(cfg, n)?)?;
    sc.output_every = output_every;
    Ok(run(&sc)?)
}

pub fn convergence_study(cfg: &RunConfig, levels: &[usize], out: &Path) -> Result<Outcome, HarnessError> {
    let start = Instant::now();
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 3 {
        return Err(HarnessError::Usage(format!(
            "convergence-study needs at least 3 distinct levels, got {}",
            levels.len()
        )));
    }
    let strong = cfg.strong_solution();
    let manufactured = cfg.is_forced();
    let finest = *levels.last().expect("nonempty");
    let base_every = cfg.run.output_every;

    let reference = if manufactured {
        None
    } else {
        let n_ref = 2 * finest;
        Some(run_level(cfg, n_ref, base_every * n_ref / levels[0])?)
    };

    let mut rows: Vec<LevelRow> = Vec::with_capacity(levels.len());
    for &n in &levels {
        let traj = run_level(cfg, n, (base_every * n / levels[0]).max(1))?;
        let g = *traj.final_state().grid();
        let t_final = traj.times[traj.len() - 1];
        let target = match (&reference, &strong) {
            (Some(r), _) => {
                if g.refinement_factor(r.final_state().grid()).is_none() {
                    return Err(HarnessError::Usage(format!(
                        "level {n} does not nest in the reference grid"
                    )));
                }
                r.final_state()
                    .restrict_to(&g)
                    .map_err(|e| HarnessError::Usage(format!("level {n}: {e}")))?
            }
            (None, Some(s)) => s.state_at(g, t_final),
            (None, None) => unreachable!("forced runs carry a manufactured solution"),
        };
        let hist = DmvHistory::from_trajectory(&traj)?;
        let rei_negative_part = match &strong {
            Some(s) => Some(
                rei_series(&hist, s.as_ref() as &dyn StrongSolution<f64>)?
                    .iter()
                    .map(|b| (-b.residual).max(0.0))
                    .fold(0.0, f64::max),
            ),
            None => None,
        };
        let mut row = LevelRow {
            n,
            dx: g.dx(),
            steps: traj.steps,
            state_error: l1_distance(traj.final_state(), &target),
            energy_residual: energy_inequality_residual(&hist, t_final)?.abs(),
            momentum_residual: weak_form_residual(&hist, Equation::Momentum, TestFunction::Bubble, t_final)?.abs(),
            rei_negative_part,
            state_order: None,
            energy_order: None,
            momentum_order: None,
            rei_order: None,
        };
        if let Some(prev) = rows.last() {
            let ratio = prev.dx / row.dx;
            row.state_order = order(prev.state_error, row.state_error, ratio);
            row.energy_order = order(prev.energy_residual, row.energy_residual, ratio);
            row.momentum_order = order(prev.momentum_residual, row.momentum_residual, ratio);
            row.rei_order = match (prev.rei_negative_part, row.rei_negative_part) {
                (Some(a), Some(b)) => order(a, b, ratio),
                _ => None,
            };
        }
        rows.push(row);
    }

    let min_state_order = rows.iter().filter_map(|r| r.state_order).reduce(f64::min);
    let report = ConvergenceReport {
        reference: match &reference {
            Some(r) => format!("{}x{}", r.final_state().grid().nx(), r.final_state().grid().ny()),
            None => "exact".into(),
        },
        levels: levels.clone(),
        passed: min_state_order.is_none_or(|o| o >= MIN_STATE_ORDER),
        min_state_order,
        rows,
    };

    let mut dir = OutDir::create(out)?;
    let csv: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt17(r.dx),
                r.steps.to_string(),
                fmt17(r.state_error),
                fmt_opt(r.state_order),
                fmt17(r.energy_residual),
                fmt_opt(r.energy_order),
                fmt17(r.momentum_residual),
                fmt_opt(r.momentum_order),
                fmt_opt(r.rei_negative_part),
                fmt_opt(r.rei_order),
            ]
        })
        .collect();
    dir.write_csv("convergence.csv", CONVERGENCE_HEADER, &csv)?;
    dir.write_json("convergence.json", &report)?;
    let summary = serde_json::json!({
        "passed": report.passed,
        "reference": report.reference,
        "min_state_order": report.min_state_order,
    });
    let echo = Echo {
        run: cfg,
        levels: &levels,
    };
    Manifest::new("convergence-study", &echo, &summary, elapsed(start)).write(&mut dir)?;

    let mut message = format!("convergence-study against {} reference:", report.reference);
    for r in &report.rows {
        message.push_str(&format!(
            "\n  n = {:4}  state error {:.3e} (order {})  energy residual {:.3e} (order {})",
            r.n,
            r.state_error,
            r.state_order.map_or("n/a".into(), |o| format!("{o:.2}")),
            r.energy_residual,
            r.energy_order.map_or("n/a".into(), |o| format!("{o:.2}")),
        ));
    }
    if !report.passed {
        message.push_str(&format!("\n  state order below {MIN_STATE_ORDER}"));
    }
    Ok(Outcome {
        passed: report.passed,
        message,
    })
}
