//! Relative energy between measure-valued states and smooth solutions,
//! coercivity of the relative pressure potential, residuals of the integral
//! (in)equalities, and the weak-strong uniqueness experiment.

pub mod bregman;
pub mod coercivity;
pub mod residuals;
pub mod strong;
pub mod uniqueness;

use thiserror::Error;

use crate::field::FieldError;
use crate::mvmeasure::MeasureError;
use crate::solver::SolverError;
use crate::thermo::ThermoError;

pub use bregman::{
    relative_energy_atom, relative_energy_cell, relative_energy_total, relative_pressure_potential,
    relative_pressure_potential_theta,
};
pub use coercivity::{
    certify_with_sets, search_constants, verify_coercivity, Bounds, CoercivityCertificate, CoercivitySets, Region,
    SamplingSpec,
};
pub use residuals::{
    energy_inequality_residual, entropy_inequality_residual, entropy_integral_series, poincare_constant,
    poincare_residual, rei_breakdown, rei_series, weak_form_residual, DmvHistory, Equation, ReiBreakdown, TestFunction,
};
pub use strong::{ConstantState, Manufactured, PdeForcing, Stratified, StrongBounds, StrongSample, StrongSolution};
pub use uniqueness::{uniqueness_experiment, UniquenessConfig, UniquenessReport};

#[derive(Debug, Error)]
pub enum RelEnergyError {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("coercivity search exhausted: {detail}")]
    SearchExhausted { detail: String },
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),
    #[error("solver failed for eps = {eps}: {source}")]
    SolverAtEps { eps: f64, source: SolverError },
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}
