//! Relative pressure potential and relative energy.

use crate::mvmeasure::{Atom, CellMeasure, MeasureField};
use crate::scalar::{Scalar, Vec2};
use crate::thermo::{self, FluidParams, ThermoError};

use super::strong::StrongSolution;
use super::RelEnergyError;

/// `r(e^L − 1 − L) + (γ−1)(1 − r + r ln r)` scaled by `ϑρ/(γ−1)`, where
/// `r = ρ̃/ρ` and `L = ln(ϑ̃/ϑ)`. Algebraically identical to the four-term
/// Bregman expression but free of its cancellation; each summand is `≥ 0`.
fn bregman_core<T: Scalar>(r: T, log_q: T, rho: T, vartheta: T, params: &FluidParams<T>) -> T {
    let gm1 = params.gm1();
    let first = if r > T::zero() {
        r * (log_q.exp_m1() - log_q)
    } else {
        T::zero()
    };
    let entropy_like = if r > T::zero() {
        T::one() - r + r * r.ln()
    } else {
        T::one()
    };
    vartheta * rho / gm1 * (first + gm1 * entropy_like)
}

/// `F(ρ̃, S̃ | ρ, S) = P(ρ̃, S̃) − ∂P/∂ρ (ρ̃−ρ) − ∂P/∂S (S̃−S) − P(ρ, S)`.
pub fn relative_pressure_potential<T: Scalar>(
    rho_t: T,
    s_t: T,
    rho: T,
    s: T,
    params: &FluidParams<T>,
) -> Result<T, ThermoError> {
    if !(rho > T::zero()) {
        return Err(ThermoError::Domain {
            op: "relative_pressure_potential",
            detail: format!("reference rho = {rho}"),
        });
    }
    if !(rho_t >= T::zero()) {
        return Err(ThermoError::Domain {
            op: "relative_pressure_potential",
            detail: format!("rho_t = {rho_t}"),
        });
    }
    let gm1 = params.gm1();
    let vartheta = thermo::pressure_potential_ds(rho, s, params)?;
    if rho_t == T::zero() {
        // P(0, S̃) is 0 for S̃ ≤ 0 and infinite otherwise.
        thermo::pressure_rho_s(rho_t, s_t, params)?;
        return Ok(bregman_core(T::zero(), T::zero(), rho, vartheta, params));
    }
    let r = rho_t / rho;
    let log_q = gm1 * r.ln() + gm1 * (s_t / rho_t - s / rho);
    Ok(bregman_core(r, log_q, rho, vartheta, params))
}

/// [`relative_pressure_potential`] in `(ρ, θ)` variables, with `θ̃ ≥ c★` enforced.
pub fn relative_pressure_potential_theta<T: Scalar>(
    rho_t: T,
    theta_t: T,
    rho: T,
    theta: T,
    params: &FluidParams<T>,
) -> Result<T, ThermoError> {
    // Validates the atom against the admissible set.
    thermo::entropy(rho_t, theta_t, params)?;
    if !(rho > T::zero() && theta > T::zero()) {
        return Err(ThermoError::Domain {
            op: "relative_pressure_potential_theta",
            detail: format!("reference (rho, theta) = ({rho}, {theta})"),
        });
    }
    let vartheta = params.a * rho.powf(params.gm1()) * theta.powf(params.gamma);
    if rho_t == T::zero() {
        return Ok(bregman_core(T::zero(), T::zero(), rho, vartheta, params));
    }
    let r = rho_t / rho;
    let log_q = params.gm1() * r.ln() + params.gamma * (theta_t / theta).ln();
    Ok(bregman_core(r, log_q, rho, vartheta, params))
}

/// `½ρ̃|ũ−u|² + F(ρ̃, S̃ | ρ, S)` for one atom.
pub fn relative_energy_atom<T: Scalar>(
    atom: &Atom<T>,
    rho: T,
    theta: T,
    u: Vec2<T>,
    params: &FluidParams<T>,
) -> Result<T, ThermoError> {
    let du = [atom.u[0] - u[0], atom.u[1] - u[1]];
    let kinetic = T::lit(0.5) * atom.rho * (du[0] * du[0] + du[1] * du[1]);
    Ok(kinetic + relative_pressure_potential_theta(atom.rho, atom.theta, rho, theta, params)?)
}

/// Relative energy density of a cell measure against strong values.
pub fn relative_energy_cell<T: Scalar>(
    cell: &CellMeasure<T>,
    rho: T,
    theta: T,
    u: Vec2<T>,
    params: &FluidParams<T>,
) -> Result<T, RelEnergyError> {
    Ok(cell.expect_with(|a| Ok(relative_energy_atom(a, rho, theta, u, params)?))?)
}

/// `∫ E(V | ρ, θ, u)(t) dx` with the strong solution sampled at cell centres.
pub fn relative_energy_total<T: Scalar>(
    measure: &MeasureField<T>,
    strong: &dyn StrongSolution<T>,
    t: T,
    params: &FluidParams<T>,
) -> Result<T, RelEnergyError> {
    let g = *measure.grid();
    let mut acc = T::zero();
    for (k, cell) in measure.cells().iter().enumerate() {
        let (i, j) = g.ij(k);
        let s = strong.eval(t, g.center(i, j));
        acc += relative_energy_cell(cell, s.rho, s.theta, s.u, params)?;
    }
    Ok(acc * g.cell_area())
}
