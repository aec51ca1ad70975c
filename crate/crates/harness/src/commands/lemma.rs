use std::path::Path;
use std::time::Instant;

use dmv_core::relenergy::{verify_coercivity, Bounds, RelEnergyError, SamplingSpec};
use dmv_core::thermo::FluidParams;
use serde::Serialize;

use super::{elapsed, Outcome};
use crate::artifacts::{Manifest, OutDir};
use crate::error::HarnessError;

/// Inputs of the coercivity certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaArgs {
    pub gamma: f64,
    pub a: f64,
    pub c_star: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for LemmaArgs {
    fn default() -> Self {
        Self {
            gamma: 1.4,
            a: 1.0,
            c_star: 0.5,
            rho_min: 0.5,
            rho_max: 2.0,
            theta_min: 0.5,
            theta_max: 2.0,
            samples: SamplingSpec::default().fresh_samples,
            seed: SamplingSpec::default().seed,
        }
    }
}

pub fn verify_lemma(args: &LemmaArgs, out: &Path) -> Result<Outcome, HarnessError> {
    let start = Instant::now();
    let params =
        FluidParams::thermo_only(args.gamma, args.a, args.c_star).map_err(|e| HarnessError::Usage(e.to_string()))?;
    let bounds = Bounds::new(args.rho_min, args.rho_max, args.theta_min, args.theta_max);
    bounds.validate(params.c_star)?;
    let spec = SamplingSpec {
        fresh_samples: args.samples,
        seed: args.seed,
        ..SamplingSpec::default()
    };
    let mut dir = OutDir::create(out)?;
    let cert = match verify_coercivity(&params, &bounds, &spec) {
        Ok(c) => c,
        Err(RelEnergyError::SearchExhausted { detail }) => {
            let failure = serde_json::json!({ "passed": false, "error": detail });
            dir.write_json("certificate.json", &failure)?;
            Manifest::new("verify-lemma", args, &failure, elapsed(start)).write(&mut dir)?;
            return Ok(Outcome {
                passed: false,
                message: format!("verify-lemma: search exhausted: {detail}"),
            });
        }
        Err(e) => return Err(e.into()),
    };
    dir.write_json("certificate.json", &cert)?;
    let summary = serde_json::json!({
        "passed": cert.passed,
        "c1": cert.c1, "c2": cert.c2, "c3": cert.c3, "c4": cert.c4,
        "fresh_violations": cert.fresh_violations,
    });
    Manifest::new("verify-lemma", args, &summary, elapsed(start)).write(&mut dir)?;
    let message = if cert.passed {
        format!(
            "verify-lemma: c1 = {}, c2 = {}, c3 = {}, c4 = {:.6e}; {} fresh samples, min ratio {:.6e}",
            cert.c1, cert.c2, cert.c3, cert.c4, cert.fresh_samples, cert.fresh_min_ratio
        )
    } else {
        format!(
            "verify-lemma: FAILED with c4 = {:.6e}, {} of {} fresh samples below c4; first: {:?}",
            cert.c4, cert.fresh_violations, cert.fresh_samples, cert.first_fresh_violation
        )
    };
    Ok(Outcome {
        passed: cert.passed,
        message,
    })
}
