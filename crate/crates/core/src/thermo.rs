//! Pointwise thermodynamics of the potential-temperature gas.
//!
//! The pressure law is `p = a (ρθ)^γ`. Writing the total physical entropy as
//! `S = ρ/(γ-1) · ln(a θ^γ)` turns the same pressure into
//! `p(ρ, S) = ρ^γ exp((γ-1) S / ρ)`, and the pressure potential
//! `P(ρ, S) = p(ρ, S) / (γ-1)` is convex in `(ρ, S)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error("{op}: argument outside the admissible domain ({detail})")]
    Domain { op: &'static str, detail: String },
    #[error("pressure is infinite at zero density with positive entropy (S = {entropy})")]
    InfinitePressure { entropy: f64 },
    #[error("invalid fluid parameters: {0}")]
    InvalidParams(String),
}

fn domain<T: Scalar>(op: &'static str, name: &str, value: T) -> ThermoError {
    ThermoError::Domain {
        op,
        detail: format!("{name} = {}", value.as_f64()),
    }
}

/// Physical constants of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams<T> {
    pub gamma: T,
    pub a: T,
    pub mu: T,
    pub lambda: T,
    pub c_star: T,
    pub dim: usize,
}

impl<T: Scalar> FluidParams<T> {
    /// Two-dimensional parameter set, validated.
    pub fn new(gamma: T, a: T, mu: T, lambda: T, c_star: T) -> Result<Self, ThermoError> {
        let p = Self {
            gamma,
            a,
            mu,
            lambda,
            c_star,
            dim: 2,
        };
        p.validate()?;
        Ok(p)
    }

    /// Inviscid-looking parameters for pointwise thermodynamics (`mu` is kept
    /// strictly positive so the set stays valid).
    pub fn thermo_only(gamma: T, a: T, c_star: T) -> Result<Self, ThermoError> {
        Self::new(gamma, a, T::lit(1e-3), T::zero(), c_star)
    }

    pub fn validate(&self) -> Result<(), ThermoError> {
        let bad = |msg: String| Err(ThermoError::InvalidParams(msg));
        if !(self.gamma > T::one()) || !self.gamma.is_finite() {
            return bad(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(self.a > T::zero()) || !self.a.is_finite() {
            return bad(format!("a must be positive, got {}", self.a));
        }
        if !(self.mu > T::zero()) || !self.mu.is_finite() {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if self.dim == 0 {
            return bad("dimension must be positive".into());
        }
        let lambda_min = -(T::lit(2.0) / T::from_usize_lossy(self.dim)) * self.mu;
        if !(self.lambda >= lambda_min) || !self.lambda.is_finite() {
            return bad(format!(
                "lambda must be at least -2 mu / d = {}, got {}",
                lambda_min, self.lambda
            ));
        }
        if !(self.c_star > T::zero()) || !self.c_star.is_finite() {
            return bad(format!("c_star must be positive, got {}", self.c_star));
        }
        Ok(())
    }

    #[inline]
    pub fn gm1(&self) -> T {
        self.gamma - T::one()
    }
}

/// A `(ρ, θ, S)` triple whose entropy is always computed from `(ρ, θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoPoint<T> {
    rho: T,
    theta: T,
    entropy: T,
}

impl<T: Scalar> ThermoPoint<T> {
    pub fn new(rho: T, theta: T, params: &FluidParams<T>) -> Result<Self, ThermoError> {
        let entropy = entropy(rho, theta, params)?;
        Ok(Self { rho, theta, entropy })
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn entropy(&self) -> T {
        self.entropy
    }
}

/// `p = a w^γ` for the total potential temperature `w = ρθ`.
pub fn pressure_of_rhotheta<T: Scalar>(w: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    if !(w >= T::zero()) {
        return Err(domain("pressure_of_rhotheta", "w", w));
    }
    Ok(params.a * w.powf(params.gamma))
}

/// `P(w) = a/(γ-1) w^γ`.
pub fn pressure_potential_of_rhotheta<T: Scalar>(w: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    Ok(pressure_of_rhotheta(w, params)? / params.gm1())
}

/// Total physical entropy `S(ρ, θ) = ρ/(γ-1) ln(a θ^γ)`.
pub fn entropy<T: Scalar>(rho: T, theta: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    if !(rho >= T::zero()) {
        return Err(domain("entropy", "rho", rho));
    }
    if !(theta >= params.c_star) {
        return Err(domain("entropy", "theta", theta));
    }
    if rho == T::zero() {
        return Ok(T::zero());
    }
    Ok(rho / params.gm1() * (params.a.ln() + params.gamma * theta.ln()))
}

/// Inverse of [`entropy`] in `θ` at fixed `ρ > 0`.
pub fn theta_of_entropy<T: Scalar>(rho: T, s: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    if !(rho > T::zero()) {
        return Err(domain("theta_of_entropy", "rho", rho));
    }
    let log_a_theta_gamma = params.gm1() * s / rho;
    Ok(((log_a_theta_gamma - params.a.ln()) / params.gamma).exp())
}

/// `p(ρ, S) = ρ^γ exp((γ-1) S/ρ)`, with the degenerate vacuum branches.
pub fn pressure_rho_s<T: Scalar>(rho: T, s: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    if !(rho >= T::zero()) {
        return Err(domain("pressure_rho_s", "rho", rho));
    }
    if rho == T::zero() {
        return if s <= T::zero() {
            Ok(T::zero())
        } else {
            Err(ThermoError::InfinitePressure { entropy: s.as_f64() })
        };
    }
    Ok(rho.powf(params.gamma) * (params.gm1() * s / rho).exp())
}

/// `P(ρ, S) = p(ρ, S)/(γ-1)`.
pub fn pressure_potential_rho_s<T: Scalar>(rho: T, s: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    Ok(pressure_rho_s(rho, s, params)? / params.gm1())
}

fn require_positive_rho<T: Scalar>(op: &'static str, rho: T) -> Result<(), ThermoError> {
    if rho > T::zero() {
        Ok(())
    } else {
        Err(domain(op, "rho", rho))
    }
}

/// `∂P/∂ρ = ρ^(γ-1) e^((γ-1)S/ρ) (γ - (γ-1)S/ρ) / (γ-1)`.
pub fn pressure_potential_drho<T: Scalar>(rho: T, s: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    require_positive_rho("pressure_potential_drho", rho)?;
    let x = params.gm1() * s / rho;
    Ok(rho.powf(params.gm1()) * x.exp() * (params.gamma - x) / params.gm1())
}

/// `∂P/∂S = ρ^(γ-1) e^((γ-1)S/ρ)`; always positive.
pub fn pressure_potential_ds<T: Scalar>(rho: T, s: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    require_positive_rho("pressure_potential_ds", rho)?;
    Ok(rho.powf(params.gm1()) * (params.gm1() * s / rho).exp())
}

/// `∂p/∂ρ` at fixed `S`.
pub fn pressure_drho<T: Scalar>(rho: T, s: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    Ok(params.gm1() * pressure_potential_drho(rho, s, params)?)
}

/// `∂p/∂S` at fixed `ρ`.
pub fn pressure_ds<T: Scalar>(rho: T, s: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    Ok(params.gm1() * pressure_potential_ds(rho, s, params)?)
}

/// Absolute temperature `ϑ = (1/(γ-1)) ∂p/∂S`, which equals `a ρ^(γ-1) θ^γ`.
pub fn absolute_temperature<T: Scalar>(rho: T, s: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    pressure_potential_ds(rho, s, params)
}

/// Acoustic speed at frozen `θ`: `c² = ∂p/∂ρ|_θ = a γ (ρθ)^(γ-1) θ`.
pub fn sound_speed<T: Scalar>(rho: T, theta: T, params: &FluidParams<T>) -> T {
    (params.a * params.gamma * (rho * theta).powf(params.gm1()) * theta).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    fn params(gamma: f64, a: f64) -> FluidParams<f64> {
        FluidParams::thermo_only(gamma, a, 0.5).unwrap()
    }

    #[test]
    fn pressure_examples() {
        assert_eq!(pressure_of_rhotheta(0.0, &params(1.4, 1.0)).unwrap(), 0.0);
        assert_relative_eq!(pressure_of_rhotheta(1.0, &params(1.4, 2.0)).unwrap(), 2.0);
        assert_relative_eq!(pressure_of_rhotheta(3.0, &params(2.0, 1.0)).unwrap(), 9.0);
        assert!(pressure_of_rhotheta(-1.0, &params(2.0, 1.0)).is_err());
    }

    #[test]
    fn pressure_potential_examples() {
        let p = params(2.0, 1.0);
        assert_eq!(pressure_potential_of_rhotheta(0.0, &p).unwrap(), 0.0);
        assert_relative_eq!(pressure_potential_of_rhotheta(1.0, &p).unwrap(), 1.0);
        assert_relative_eq!(pressure_potential_of_rhotheta(2.0, &p).unwrap(), 4.0);
        assert!(pressure_potential_of_rhotheta(-0.5, &p).is_err());
    }

    #[test]
    fn entropy_examples() {
        let p = params(2.0, 1.0);
        assert_eq!(entropy(0.0, 1.0, &p).unwrap(), 0.0);
        assert_relative_eq!(entropy(2.0, E, &p).unwrap(), 4.0, max_relative = 1e-15);
        for gamma in [1.4, 5.0 / 3.0, 2.0] {
            assert_eq!(entropy(1.0, 1.0, &params(gamma, 1.0)).unwrap(), 0.0);
        }
        assert!(entropy(1.0, 0.25, &p).is_err());
    }

    #[test]
    fn theta_of_entropy_examples() {
        let p = params(2.0, 1.0);
        assert_relative_eq!(theta_of_entropy(1.0, 0.0, &p).unwrap(), 1.0);
        assert_relative_eq!(theta_of_entropy(2.0, 4.0, &p).unwrap(), E, max_relative = 1e-15);
        assert!(theta_of_entropy(0.0, 1.0, &p).is_err());
    }

    #[test]
    fn theta_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let gamma = [1.4, 5.0 / 3.0, 2.0][rng.gen_range(0..3)];
            let p = FluidParams::thermo_only(gamma, rng.gen_range(0.1..10.0), 0.5).unwrap();
            let rho = 10f64.powf(rng.gen_range(-3.0..3.0));
            let theta = rng.gen_range(0.5..100.0);
            let s = entropy(rho, theta, &p).unwrap();
            let back = theta_of_entropy(rho, s, &p).unwrap();
            worst = worst.max(((back - theta) / theta).abs());
            let s2 = entropy(rho, back, &p).unwrap();
            assert!((s2 - s).abs() <= 1e-12 * s.abs().max(rho));
        }
        assert!(worst <= 1e-12, "worst relative error {worst}");
    }

    #[test]
    fn pressure_rho_s_examples() {
        let p = params(2.0, 1.0);
        assert_relative_eq!(pressure_rho_s(1.0, 0.0, &p).unwrap(), 1.0);
        assert_eq!(pressure_rho_s(0.0, -1.0, &p).unwrap(), 0.0);
        let both = pressure_rho_s(2.0, 4.0, &p).unwrap();
        assert_relative_eq!(both, 4.0 * E * E, max_relative = 1e-14);
        assert_relative_eq!(both, pressure_of_rhotheta(2.0 * E, &p).unwrap(), max_relative = 1e-14);
        assert!(matches!(
            pressure_rho_s(0.0, 1.0, &p),
            Err(ThermoError::InfinitePressure { .. })
        ));
        assert!(pressure_rho_s(-1.0, 0.0, &p).is_err());
    }

    #[test]
    fn pressure_potential_rho_s_examples() {
        let p = params(2.0, 1.0);
        assert_relative_eq!(pressure_potential_rho_s(1.0, 0.0, &p).unwrap(), 1.0);
        assert_relative_eq!(pressure_potential_rho_s(2.0, 0.0, &p).unwrap(), 4.0);
        assert_eq!(pressure_potential_rho_s(0.0, 0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn partial_derivative_examples() {
        let p = params(2.0, 1.0);
        assert_relative_eq!(pressure_potential_drho(1.0, 0.0, &p).unwrap(), 2.0);
        assert_relative_eq!(pressure_potential_ds(1.0, 0.0, &p).unwrap(), 1.0);
        assert_relative_eq!(absolute_temperature(1.0, 0.0, &p).unwrap(), 1.0);
        assert!(pressure_potential_drho(0.0, 0.0, &p).is_err());
        assert!(pressure_potential_ds(-1.0, 0.0, &p).is_err());
        assert!(absolute_temperature(0.0, 0.0, &p).is_err());
    }

    #[test]
    fn absolute_temperature_matches_primitive_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let p = FluidParams::thermo_only(rng.gen_range(1.05..3.0), rng.gen_range(0.2..5.0), 0.5).unwrap();
            let rho = 10f64.powf(rng.gen_range(-2.0..2.0));
            let theta = rng.gen_range(0.5..20.0);
            let s = entropy(rho, theta, &p).unwrap();
            let vt = absolute_temperature(rho, s, &p).unwrap();
            assert!(vt > 0.0);
            let expected = p.a * rho.powf(p.gamma - 1.0) * theta.powf(p.gamma);
            assert_relative_eq!(vt, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn sound_speed_uniform_unit_state() {
        let p = params(2.0, 1.0);
        assert_relative_eq!(sound_speed(1.0, 1.0, &p), 2f64.sqrt());
    }

    #[test]
    fn params_validation() {
        assert!(FluidParams::new(1.0, 1.0, 1.0, 0.0, 0.5).is_err());
        assert!(FluidParams::new(1.4, 0.0, 1.0, 0.0, 0.5).is_err());
        assert!(FluidParams::new(1.4, 1.0, 0.0, 0.0, 0.5).is_err());
        assert!(FluidParams::new(1.4, 1.0, 1.0, -1.0, 0.5).is_ok());
        assert!(FluidParams::new(1.4, 1.0, 1.0, -1.01, 0.5).is_err());
        assert!(FluidParams::new(1.4, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(FluidParams::new(f64::NAN, 1.0, 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn thermo_point_is_self_consistent() {
        let p = params(1.4, 1.0);
        let tp = ThermoPoint::new(1.3, 2.1, &p).unwrap();
        assert_eq!(tp.entropy(), entropy(1.3, 2.1, &p).unwrap());
        assert!(ThermoPoint::new(1.0, 0.1, &p).is_err());
    }

    #[test]
    fn single_precision_instantiation() {
        let p = FluidParams::<f32>::thermo_only(2.0, 1.0, 0.5).unwrap();
        let s = entropy(2.0f32, std::f32::consts::E, &p).unwrap();
        assert!((s - 4.0).abs() < 1e-5);
        assert!((pressure_rho_s(2.0f32, s, &p).unwrap() - 4.0 * std::f32::consts::E.powi(2)).abs() < 1e-4);
    }
}
