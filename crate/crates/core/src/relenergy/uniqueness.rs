//! Perturbation experiment around a uniform strong solution: relative
//! energy decay, its scaling in the perturbation size, and a fitted
//! exponential envelope.

use rayon::prelude::*;
use serde::Serialize;

use crate::field::Grid2D;
use crate::mvmeasure::dirac_from_state;
use crate::scalar::Scalar;
use crate::solver::{run, InitialCondition, SmoothPerturbation, SolverConfig};
use crate::thermo::FluidParams;

use super::bregman::relative_energy_total;
use super::strong::ConstantState;
use super::RelEnergyError;

/// Tolerance on `E(0)` ratios against `(ε_a/ε_b)²`.
pub const SCALING_TOL: f64 = 0.10;
/// Allowed relative spread of the fitted rate across `ε`.
pub const RATE_STABILITY_TOL: f64 = 0.20;
/// Slack factor on the envelope `E(τ)/E(0) ≤ factor · e^{Cτ}`.
pub const ENVELOPE_FACTOR: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessConfig<T> {
    pub grid: Grid2D<T>,
    pub params: FluidParams<T>,
    pub cfl: T,
    pub t_end: T,
    pub output_every: usize,
    pub rho0: T,
    pub theta0: T,
    pub modes: (usize, usize),
    pub seed: u64,
    pub epsilons: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonRun<T> {
    pub eps: T,
    pub times: Vec<T>,
    pub rel_energy: Vec<T>,
    /// `E(t_k)/E(0)`; empty when `E(0) = 0`.
    pub ratios: Vec<T>,
    /// Least-squares rate `C` of `ln(E/E0) ≈ C t`.
    pub fitted_c: Option<T>,
    /// `max_k ratio_k / e^{C t_k}`.
    pub max_envelope_ratio: Option<T>,
    pub envelope_pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingCheck<T> {
    pub eps_a: T,
    pub eps_b: T,
    pub observed: T,
    pub expected: T,
    pub rel_error: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateStability<T> {
    pub mean: T,
    pub max_rel_deviation: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroEpsilonCheck<T> {
    pub max_rel_energy: T,
    pub floor: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport<T> {
    pub runs: Vec<EpsilonRun<T>>,
    pub scaling: Vec<ScalingCheck<T>>,
    pub scaling_pass: bool,
    /// `None` when fewer than two positive `ε` were supplied.
    pub rate_stability: Option<RateStability<T>>,
    pub envelope_pass: bool,
    pub zero_epsilon: Option<ZeroEpsilonCheck<T>>,
    pub notes: Vec<String>,
    pub passed: bool,
}

fn solver_config<T: Scalar>(cfg: &UniquenessConfig<T>, grid: Grid2D<T>, eps: T) -> SolverConfig<T> {
    let initial = InitialCondition::Perturbed(SmoothPerturbation {
        rho0: cfg.rho0,
        theta0: cfg.theta0,
        amplitude: eps,
        modes: cfg.modes,
        seed: cfg.seed,
    });
    let mut sc = SolverConfig::new(grid, cfg.params, initial);
    sc.cfl = cfg.cfl;
    sc.t_end = cfg.t_end;
    sc.output_every = cfg.output_every;
    sc
}

/// `E(t_k)` against the uniform strong state along a solver run.
pub fn relative_energy_series<T: Scalar>(
    cfg: &UniquenessConfig<T>,
    grid: Grid2D<T>,
    eps: T,
) -> Result<(Vec<T>, Vec<T>), RelEnergyError> {
    let traj = run(&solver_config(cfg, grid, eps)).map_err(|e| RelEnergyError::SolverAtEps {
        eps: eps.as_f64(),
        source: e,
    })?;
    let strong = ConstantState {
        rho: cfg.rho0,
        theta: cfg.theta0,
    };
    let series = traj
        .states
        .iter()
        .zip(&traj.times)
        .map(|(s, t)| relative_energy_total(&dirac_from_state(s)?, &strong, *t, &cfg.params))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((traj.times, series))
}

/// `C = Σ t ln r / Σ t²` over checkpoints with `t > 0`.
pub fn fit_rate<T: Scalar>(times: &[T], ratios: &[T]) -> Option<T> {
    let mut num = T::zero();
    let mut den = T::zero();
    for (t, r) in times.iter().zip(ratios) {
        if *t > T::zero() && *r > T::zero() {
            num += *t * r.ln();
            den += *t * *t;
        }
    }
    (den > T::zero()).then(|| num / den)
}

fn analyse<T: Scalar>(eps: T, times: Vec<T>, rel_energy: Vec<T>) -> EpsilonRun<T> {
    let e0 = rel_energy[0];
    if !(e0 > T::zero()) {
        return EpsilonRun {
            eps,
            times,
            rel_energy,
            ratios: Vec::new(),
            fitted_c: None,
            max_envelope_ratio: None,
            envelope_pass: None,
        };
    }
    let ratios: Vec<T> = rel_energy.iter().map(|e| *e / e0).collect();
    let c = fit_rate(&times, &ratios);
    let worst = c.map(|c| {
        times
            .iter()
            .zip(&ratios)
            .map(|(t, r)| *r / (c * *t).exp())
            .fold(T::zero(), T::max)
    });
    EpsilonRun {
        eps,
        times,
        rel_energy,
        ratios,
        fitted_c: c,
        max_envelope_ratio: worst,
        envelope_pass: worst.map(|w| w <= T::lit(ENVELOPE_FACTOR)),
    }
}

pub fn uniqueness_experiment<T: Scalar>(cfg: &UniquenessConfig<T>) -> Result<UniquenessReport<T>, RelEnergyError> {
    if cfg.epsilons.is_empty() {
        return Err(RelEnergyError::InvalidConstants(
            "no perturbation sizes supplied".into(),
        ));
    }
    if cfg.epsilons.iter().any(|e| !(*e >= T::zero()) || !e.is_finite()) {
        return Err(RelEnergyError::InvalidConstants(
            "perturbation sizes must be non-negative".into(),
        ));
    }
    let runs = cfg
        .epsilons
        .par_iter()
        .map(|&eps| relative_energy_series(cfg, cfg.grid, eps).map(|(t, e)| analyse(eps, t, e)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut notes = Vec::new();
    let positive: Vec<&EpsilonRun<T>> = runs.iter().filter(|r| r.eps > T::zero()).collect();

    let mut scaling = Vec::new();
    for pair in positive.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let observed = a.rel_energy[0] / b.rel_energy[0];
        let expected = (a.eps / b.eps).powi(2);
        let rel_error = (observed / expected - T::one()).abs();
        scaling.push(ScalingCheck {
            eps_a: a.eps,
            eps_b: b.eps,
            observed,
            expected,
            rel_error,
            pass: rel_error <= T::lit(SCALING_TOL),
        });
    }
    if scaling.is_empty() {
        notes.push("E(0) scaling check skipped: fewer than two positive perturbation sizes".into());
    }
    let scaling_pass = scaling.iter().all(|s| s.pass);

    let rates: Vec<T> = positive.iter().filter_map(|r| r.fitted_c).collect();
    let rate_stability = if rates.len() >= 2 {
        let mean = rates.iter().copied().sum::<T>() / T::from_usize_lossy(rates.len());
        let dev = rates.iter().map(|c| ((*c - mean) / mean).abs()).fold(T::zero(), T::max);
        Some(RateStability {
            mean,
            max_rel_deviation: dev,
            pass: dev <= T::lit(RATE_STABILITY_TOL),
        })
    } else {
        notes.push("rate stability check skipped: fewer than two fitted rates".into());
        None
    };

    let envelope_pass = positive.iter().all(|r| r.envelope_pass.unwrap_or(false));

    let zero_epsilon = match runs.iter().find(|r| r.eps == T::zero()) {
        Some(r) => {
            let max_e = r.rel_energy.iter().copied().fold(T::zero(), T::max);
            let p0 = cfg.params.a * (cfg.rho0 * cfg.theta0).powf(cfg.params.gamma);
            let mut floor = T::lit(1e-12) * cfg.grid.area() * p0;
            let (nx, ny) = (cfg.grid.nx() / 2, cfg.grid.ny() / 2);
            if nx >= 4 && ny >= 4 {
                let coarse = Grid2D::new(nx, ny, cfg.grid.lx(), cfg.grid.ly())?;
                let (_, e) = relative_energy_series(cfg, coarse, T::zero())?;
                floor = floor.max(e.into_iter().fold(T::zero(), T::max));
            }
            Some(ZeroEpsilonCheck {
                max_rel_energy: max_e,
                floor,
                pass: max_e <= floor,
            })
        }
        None => None,
    };

    let passed = scaling_pass
        && rate_stability.as_ref().map_or(true, |r| r.pass)
        && envelope_pass
        && zero_epsilon.as_ref().map_or(true, |z| z.pass);
    Ok(UniquenessReport {
        runs,
        scaling,
        scaling_pass,
        rate_stability,
        envelope_pass,
        zero_epsilon,
        notes,
        passed,
    })
}
