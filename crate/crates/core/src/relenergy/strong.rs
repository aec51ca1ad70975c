//! Smooth reference solutions with closed-form derivatives.

use std::sync::Arc;

use serde::Serialize;

use crate::field::{ConservedState, Grid2D, Primitive};
use crate::scalar::{Mat2, Scalar, Vec2};
use crate::solver::Forcing;
use crate::thermo::FluidParams;

/// Point values and derivatives of a smooth triplet `(ρ, θ, u)`.
/// `grad_u[c][d] = ∂_d u_c`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrongSample<T> {
    pub rho: T,
    pub theta: T,
    pub u: Vec2<T>,
    pub grad_rho: Vec2<T>,
    pub grad_theta: Vec2<T>,
    pub grad_u: Mat2<T>,
    pub rho_t: T,
    pub theta_t: T,
    pub u_t: Vec2<T>,
    pub lap_u: Vec2<T>,
    pub grad_div_u: Vec2<T>,
}

/// Derived thermodynamic quantities and PDE residual factors of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongDerived<T> {
    pub entropy: T,
    pub pressure: T,
    /// `∂p/∂ρ` at fixed `S`.
    pub p_rho: T,
    /// `∂p/∂S` at fixed `ρ`.
    pub p_s: T,
    pub p_potential: T,
    /// `∂P/∂ρ`, `∂P/∂S`.
    pub pp_rho: T,
    pub pp_s: T,
    /// Absolute temperature `ϑ` and its gradient.
    pub vartheta: T,
    pub grad_vartheta: Vec2<T>,
    pub div_u: T,
    pub div_stress: Vec2<T>,
    /// `ρ_t + div(ρu)`.
    pub continuity: T,
    /// `ρu_t + ρ(∇u)u + ∇p − div 𝕊`.
    pub momentum: Vec2<T>,
    /// `S_t + div(Su)`.
    pub entropy_balance: T,
    /// `ϑ_t + u·∇ϑ + ∂p/∂S div u`.
    pub temperature: T,
    /// `(ρθ)_t + div(ρθu)`.
    pub rhotheta: T,
}

impl<T: Scalar> StrongSample<T> {
    pub fn derived(&self, params: &FluidParams<T>) -> StrongDerived<T> {
        let g = params.gamma;
        let gm1 = params.gm1();
        let a = params.a;
        let (r, th, u) = (self.rho, self.theta, self.u);
        let w = r * th;
        let pressure = a * w.powf(g);
        let s_spec = (a.ln() + g * th.ln()) / gm1;
        let entropy = r * s_spec;
        let vartheta = a * r.powf(gm1) * th.powf(g);
        // p(ρ, S) = ρ^γ e^x with x = (γ-1)S/ρ, so ∂p/∂ρ = p(γ - x)/ρ and ∂p/∂S = (γ-1)ϑ.
        let x = gm1 * entropy / r;
        let p_rho = pressure * (g - x) / r;
        let p_s = gm1 * vartheta;
        let p_potential = pressure / gm1;
        let div_u = self.grad_u[0][0] + self.grad_u[1][1];
        let nu = params.mu * (T::one() - T::lit(2.0) / T::from_usize_lossy(params.dim)) + params.lambda;
        let div_stress = [
            params.mu * self.lap_u[0] + nu * self.grad_div_u[0],
            params.mu * self.lap_u[1] + nu * self.grad_div_u[1],
        ];
        let dot = |v: Vec2<T>| u[0] * v[0] + u[1] * v[1];
        let mat_rho = self.rho_t + dot(self.grad_rho);
        let mat_theta = self.theta_t + dot(self.grad_theta);
        let continuity = mat_rho + r * div_u;
        let dp_dw = g * a * w.powf(gm1);
        let grad_p = [
            dp_dw * (th * self.grad_rho[0] + r * self.grad_theta[0]),
            dp_dw * (th * self.grad_rho[1] + r * self.grad_theta[1]),
        ];
        let mut momentum = [T::zero(); 2];
        for c in 0..2 {
            let conv = self.grad_u[c][0] * u[0] + self.grad_u[c][1] * u[1];
            momentum[c] = r * (self.u_t[c] + conv) + grad_p[c] - div_stress[c];
        }
        let entropy_balance = s_spec * continuity + r * g / (gm1 * th) * mat_theta;
        let grad_vartheta = [
            vartheta * (gm1 * self.grad_rho[0] / r + g * self.grad_theta[0] / th),
            vartheta * (gm1 * self.grad_rho[1] / r + g * self.grad_theta[1] / th),
        ];
        let temperature = vartheta * (gm1 * mat_rho / r + g * mat_theta / th) + p_s * div_u;
        let rhotheta = th * continuity + r * mat_theta;
        StrongDerived {
            entropy,
            pressure,
            p_rho,
            p_s,
            p_potential,
            pp_rho: p_rho / gm1,
            pp_s: vartheta,
            vartheta,
            grad_vartheta,
            div_u,
            div_stress,
            continuity,
            momentum,
            entropy_balance,
            temperature,
            rhotheta,
        }
    }
}

/// Extremes of `ρ` and `θ` over the run window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongBounds<T> {
    pub rho_min: T,
    pub rho_max: T,
    pub theta_min: T,
    pub theta_max: T,
}

pub trait StrongSolution<T: Scalar>: Send + Sync {
    fn eval(&self, t: T, x: Vec2<T>) -> StrongSample<T>;
    fn bounds(&self) -> StrongBounds<T>;
    fn name(&self) -> &'static str;

    /// Cell-centre samples at time `t`.
    fn state_at(&self, grid: Grid2D<T>, t: T) -> ConservedState<T> {
        ConservedState::from_primitive(grid, |x| {
            let s = self.eval(t, x);
            Primitive {
                rho: s.rho,
                theta: s.theta,
                u: s.u,
            }
        })
    }
}

/// Uniform state at rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantState<T> {
    pub rho: T,
    pub theta: T,
}

impl<T: Scalar> StrongSolution<T> for ConstantState<T> {
    fn eval(&self, _t: T, _x: Vec2<T>) -> StrongSample<T> {
        StrongSample {
            rho: self.rho,
            theta: self.theta,
            ..Default::default()
        }
    }

    fn bounds(&self) -> StrongBounds<T> {
        StrongBounds {
            rho_min: self.rho,
            rho_max: self.rho,
            theta_min: self.theta,
            theta_max: self.theta,
        }
    }

    fn name(&self) -> &'static str {
        "constant"
    }
}

/// Steady state at rest with uniform pressure: `ρθ = w0` and
/// `ρ = ρ0 (1 + β cos(πx/lx) cos(πy/ly))`. Solves the unforced system exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stratified<T> {
    pub rho0: T,
    pub beta: T,
    pub w0: T,
    pub lx: T,
    pub ly: T,
}

impl<T: Scalar> StrongSolution<T> for Stratified<T> {
    fn eval(&self, _t: T, x: Vec2<T>) -> StrongSample<T> {
        let (kx, ky) = (T::PI() / self.lx, T::PI() / self.ly);
        let (cx, sx) = ((kx * x[0]).cos(), (kx * x[0]).sin());
        let (cy, sy) = ((ky * x[1]).cos(), (ky * x[1]).sin());
        let rho = self.rho0 * (T::one() + self.beta * cx * cy);
        let grad_rho = [
            -self.rho0 * self.beta * kx * sx * cy,
            -self.rho0 * self.beta * ky * cx * sy,
        ];
        let theta = self.w0 / rho;
        let grad_theta = [-theta / rho * grad_rho[0], -theta / rho * grad_rho[1]];
        StrongSample {
            rho,
            theta,
            grad_rho,
            grad_theta,
            ..Default::default()
        }
    }

    fn bounds(&self) -> StrongBounds<T> {
        let lo = self.rho0 * (T::one() - self.beta.abs());
        let hi = self.rho0 * (T::one() + self.beta.abs());
        StrongBounds {
            rho_min: lo,
            rho_max: hi,
            theta_min: self.w0 / hi,
            theta_max: self.w0 / lo,
        }
    }

    fn name(&self) -> &'static str {
        "stratified"
    }
}

/// Manufactured triplet with time factor `g(t) = cos(ωt)`:
/// `ρ = ρ0 + Aρ g C`, `θ = θ0 + Aθ g C`, `u = Au g Ψ (1, -1)` where
/// `C = cos(πx/lx) cos(πy/ly)` and `Ψ = sin(πx/lx) sin(πy/ly)`.
/// Requires a forcing to be a solution; see [`PdeForcing`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Manufactured<T> {
    pub rho0: T,
    pub theta0: T,
    pub amp_rho: T,
    pub amp_theta: T,
    pub amp_u: T,
    pub omega: T,
    pub lx: T,
    pub ly: T,
}

impl<T: Scalar> StrongSolution<T> for Manufactured<T> {
    fn eval(&self, t: T, x: Vec2<T>) -> StrongSample<T> {
        let (kx, ky) = (T::PI() / self.lx, T::PI() / self.ly);
        let (cx, sx) = ((kx * x[0]).cos(), (kx * x[0]).sin());
        let (cy, sy) = ((ky * x[1]).cos(), (ky * x[1]).sin());
        let g = (self.omega * t).cos();
        let gt = -self.omega * (self.omega * t).sin();

        let c = cx * cy;
        let grad_c = [-kx * sx * cy, -ky * cx * sy];
        let psi = sx * sy;
        let grad_psi = [kx * cx * sy, ky * sx * cy];
        let psi_xy = kx * ky * cx * cy;
        let lap_psi = -(kx * kx + ky * ky) * psi;

        let au = self.amp_u;
        let sign = [T::one(), -T::one()];
        let mut grad_u = [[T::zero(); 2]; 2];
        for comp in 0..2 {
            for d in 0..2 {
                grad_u[comp][d] = sign[comp] * au * g * grad_psi[d];
            }
        }
        // div u = Au g (Ψ_x − Ψ_y); its gradient uses Ψ_xx = −kx²Ψ, Ψ_yy = −ky²Ψ.
        let grad_div_u = [au * g * (-kx * kx * psi - psi_xy), au * g * (psi_xy + ky * ky * psi)];
        StrongSample {
            rho: self.rho0 + self.amp_rho * g * c,
            theta: self.theta0 + self.amp_theta * g * c,
            u: [au * g * psi, -au * g * psi],
            grad_rho: [self.amp_rho * g * grad_c[0], self.amp_rho * g * grad_c[1]],
            grad_theta: [self.amp_theta * g * grad_c[0], self.amp_theta * g * grad_c[1]],
            grad_u,
            rho_t: self.amp_rho * gt * c,
            theta_t: self.amp_theta * gt * c,
            u_t: [au * gt * psi, -au * gt * psi],
            lap_u: [au * g * lap_psi, -au * g * lap_psi],
            grad_div_u,
        }
    }

    fn bounds(&self) -> StrongBounds<T> {
        StrongBounds {
            rho_min: self.rho0 - self.amp_rho.abs(),
            rho_max: self.rho0 + self.amp_rho.abs(),
            theta_min: self.theta0 - self.amp_theta.abs(),
            theta_max: self.theta0 + self.amp_theta.abs(),
        }
    }

    fn name(&self) -> &'static str {
        "manufactured"
    }
}

/// Sources that turn a smooth triplet into an exact solution of the forced
/// conservative system.
#[derive(Clone)]
pub struct PdeForcing<T: Scalar> {
    pub strong: Arc<dyn StrongSolution<T>>,
    pub params: FluidParams<T>,
}

impl<T: Scalar> Forcing<T> for PdeForcing<T> {
    fn source(&self, t: T, x: Vec2<T>) -> [T; 4] {
        let s = self.strong.eval(t, x);
        let d = s.derived(&self.params);
        // (ρu)_t + div(ρu⊗u) + ∇p − div 𝕊 = [momentum residual] + u·[continuity residual].
        [
            d.continuity,
            d.momentum[0] + s.u[0] * d.continuity,
            d.momentum[1] + s.u[1] * d.continuity,
            d.rhotheta,
        ]
    }
}
