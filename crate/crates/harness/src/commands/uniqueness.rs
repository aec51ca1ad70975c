use std::path::Path;
use std::time::Instant;

use dmv_core::field::fmt17;
use dmv_core::relenergy::{uniqueness_experiment, UniquenessConfig};
use serde::Serialize;

use super::{elapsed, Outcome};
use crate::artifacts::{fmt_opt, Manifest, OutDir};
use crate::config::{IcSpec, RunConfig};
use crate::error::HarnessError;

#[derive(Serialize)]
struct Echo<'a> {
    run: &'a RunConfig,
    epsilons: &'a [f64],
}

pub fn uniqueness_study(cfg: &RunConfig, epsilons: &[f64], out: &Path) -> Result<Outcome, HarnessError> {
    let start = Instant::now();
    let (rho0, theta0, modes) = match cfg.ic {
        IcSpec::Constant { rho, theta, .. } => (rho, theta, (1, 1)),
        IcSpec::Perturbed {
            rho,
            theta,
            mode_x,
            mode_y,
            ..
        } => (rho, theta, (mode_x, mode_y)),
        _ => {
            return Err(HarnessError::Usage(
                "uniqueness-study perturbs a constant state; use ic.kind = constant or perturbed".into(),
            ))
        }
    };
    if cfg.is_forced() {
        return Err(HarnessError::Usage("uniqueness-study runs unforced".into()));
    }
    let ucfg = UniquenessConfig {
        grid: cfg.grid(),
        params: cfg.params().map_err(|e| HarnessError::Usage(e.to_string()))?,
        cfl: cfg.run.cfl,
        t_end: cfg.run.t_end,
        output_every: cfg.run.output_every,
        rho0,
        theta0,
        modes,
        seed: cfg.seeds.ic,
        epsilons: epsilons.to_vec(),
    };
    let report = uniqueness_experiment(&ucfg)?;

    let mut dir = OutDir::create(out)?;
    let mut rows = Vec::new();
    for r in &report.runs {
        for (k, t) in r.times.iter().enumerate() {
            let ratio = r.ratios.get(k).copied();
            let env = r.fitted_c.map(|c| (c * t).exp());
            rows.push(vec![
                fmt17(r.eps),
                fmt17(*t),
                fmt17(r.rel_energy[k]),
                fmt_opt(ratio),
                fmt_opt(env),
            ]);
        }
    }
    dir.write_csv("uniqueness.csv", "eps,t,rel_energy,ratio,envelope", &rows)?;
    dir.write_json("uniqueness.json", &report)?;
    let summary = serde_json::json!({
        "passed": report.passed,
        "scaling_pass": report.scaling_pass,
        "rate_stability": report.rate_stability,
        "envelope_pass": report.envelope_pass,
        "zero_epsilon": report.zero_epsilon,
        "notes": report.notes,
    });
    let echo = Echo { run: cfg, epsilons };
    Manifest::new("uniqueness-study", &echo, &summary, elapsed(start)).write(&mut dir)?;

    let mut message = format!(
        "uniqueness-study over {} perturbation sizes: scaling {}, rate stability {}, envelope {}, zero run {}",
        report.runs.len(),
        verdict((!report.scaling.is_empty()).then_some(report.scaling_pass)),
        verdict(report.rate_stability.as_ref().map(|r| r.pass)),
        verdict(Some(report.envelope_pass)),
        verdict(report.zero_epsilon.as_ref().map(|z| z.pass)),
    );
    for n in &report.notes {
        message.push_str(&format!("\n  note: {n}"));
    }
    Ok(Outcome {
        passed: report.passed,
        message,
    })
}

fn verdict(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "skipped",
    }
}
