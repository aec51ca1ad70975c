//! Residuals of the balance laws, inequalities and the relative energy
//! inequality, evaluated on snapshot sequences of measures.
//!
//! Time integrals use the trapezoidal rule over the stored checkpoints.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::field::{smallest_dirichlet_eigenvalue, Grid2D, VectorField};
use crate::mvmeasure::{dirac_from_state, DefectFields, MeasureField, Observable};
use crate::scalar::{ddot, Mat2, Scalar, Vec2};
use crate::solver::{stress, viscous_stress, Trajectory};
use crate::thermo::{self, FluidParams};

use super::bregman::{relative_energy_atom, relative_pressure_potential_theta};
use super::strong::StrongSolution;
use super::RelEnergyError;

/// Snapshots of a measure-valued history with their defects.
#[derive(Debug, Clone)]
pub struct DmvHistory<T: Scalar> {
    pub times: Vec<T>,
    pub measures: Vec<MeasureField<T>>,
    pub defects: Vec<DefectFields<T>>,
    /// `∫_0^t ∫ 𝕊(∇u_V):∇u_V dx ds` at each checkpoint.
    pub dissipation_accum: Vec<T>,
    pub params: FluidParams<T>,
}

impl<T: Scalar> DmvHistory<T> {
    /// Dirac measures of the solver states with zero defects; the dissipation
    /// integral is the one accumulated by the solver.
    pub fn from_trajectory(traj: &Trajectory<T>) -> Result<Self, RelEnergyError> {
        let params = traj.echo.params;
        let measures = traj
            .states
            .iter()
            .map(dirac_from_state)
            .collect::<Result<Vec<_>, _>>()?;
        let defects = traj
            .states
            .iter()
            .map(|s| DefectFields::zeros(*s.grid(), params.dim))
            .collect();
        let h = Self {
            times: traj.times.clone(),
            measures,
            defects,
            dissipation_accum: traj.dissipation_accum.clone(),
            params,
        };
        h.check()?;
        Ok(h)
    }

    /// General history; the dissipation integral is computed from `u_V = ⟨ũ⟩`.
    pub fn new(
        times: Vec<T>,
        measures: Vec<MeasureField<T>>,
        defects: Vec<DefectFields<T>>,
        params: FluidParams<T>,
    ) -> Result<Self, RelEnergyError> {
        let mut h = Self {
            dissipation_accum: vec![T::zero(); times.len()],
            times,
            measures,
            defects,
            params,
        };
        h.check()?;
        let rates = (0..h.len())
            .map(|k| {
                let grad = h.u_v(k)?.noslip_gradient();
                Ok(viscous_stress(&grad, &h.params).ddot(&grad)?.integrate())
            })
            .collect::<Result<Vec<T>, RelEnergyError>>()?;
        h.dissipation_accum = h.cumulative(&rates);
        Ok(h)
    }

    fn check(&self) -> Result<(), RelEnergyError> {
        let n = self.times.len();
        if n == 0 {
            return Err(RelEnergyError::Misaligned("empty history".into()));
        }
        if self.measures.len() != n || self.defects.len() != n || self.dissipation_accum.len() != n {
            return Err(RelEnergyError::Misaligned(format!(
                "{} times, {} measures, {} defects, {} dissipation values",
                n,
                self.measures.len(),
                self.defects.len(),
                self.dissipation_accum.len()
            )));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RelEnergyError::Misaligned("times must increase strictly".into()));
        }
        let g = *self.measures[0].grid();
        if self.measures.iter().any(|m| *m.grid() != g) || self.defects.iter().any(|d| *d.grid() != g) {
            return Err(RelEnergyError::Misaligned("snapshots live on different grids".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> &Grid2D<T> {
        self.measures[0].grid()
    }

    /// Index of the checkpoint at time `tau`.
    pub fn index_of(&self, tau: T) -> Result<usize, RelEnergyError> {
        let scale = T::one().max(tau.abs());
        self.times
            .iter()
            .position(|t| (*t - tau).abs() <= T::tol(1e-12) * scale)
            .ok_or_else(|| RelEnergyError::Misaligned(format!("no checkpoint at t = {tau}")))
    }

    pub fn final_time(&self) -> T {
        *self.times.last().expect("non-empty")
    }

    /// `u_V = ⟨ũ⟩` at checkpoint `k`.
    pub fn u_v(&self, k: usize) -> Result<VectorField<T>, RelEnergyError> {
        let vals = self.measures[k].expectation_field(Observable::Velocity, &self.params)?;
        let data = vals.iter().map(|v| v.as_vector().expect("vector")).collect();
        Ok(VectorField::new(*self.grid(), data)?)
    }

    /// Trapezoidal running integral of `f` over the checkpoints.
    pub fn cumulative(&self, f: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(f.len());
        let mut acc = T::zero();
        out.push(acc);
        for k in 1..f.len() {
            acc += T::lit(0.5) * (f[k] + f[k - 1]) * (self.times[k] - self.times[k - 1]);
            out.push(acc);
        }
        out
    }

    fn integral_to(&self, f: &[T], k: usize) -> T {
        self.cumulative(&f[..=k])[k]
    }

    fn defect_integrals(&self, k: usize) -> (T, T) {
        (self.defects[k].e_def.integrate(), self.defects[k].d_def.integrate())
    }
}

/// `LHS − RHS` of the energy inequality at checkpoint `τ`; `≤ 0` means it holds.
pub fn energy_inequality_residual<T: Scalar>(hist: &DmvHistory<T>, tau: T) -> Result<T, RelEnergyError> {
    let k = hist.index_of(tau)?;
    let e = |n: usize| hist.measures[n].integrate(Observable::EnergyDensity, &hist.params);
    let (ed, dd) = hist.defect_integrals(k);
    Ok(e(k)? + hist.dissipation_accum[k] + ed + dd - e(0)?)
}

/// Balance law tested in [`weak_form_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Equation {
    Continuity,
    Momentum,
    Theta,
}

impl FromStr for Equation {
    type Err = RelEnergyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "continuity" => Ok(Self::Continuity),
            "momentum" => Ok(Self::Momentum),
            "theta" => Ok(Self::Theta),
            other => Err(RelEnergyError::InvalidTestFunction(format!(
                "unknown equation '{other}'"
            ))),
        }
    }
}

/// Built-in test functions. For the momentum equation the scalar function
/// `φ` is used in both components, `φ(1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestFunction {
    /// `φ = 1`.
    One,
    /// `b(x) = 16 x(lx−x) y(ly−y) / (lx² ly²)`, time independent.
    Bubble,
    /// `(1 + t) b(x)`.
    BubbleTime,
    /// `cos(kπx/lx) cos(lπy/ly)`; changes sign.
    Cosine { kx: usize, ky: usize },
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::One => f.write_str("one"),
            Self::Bubble => f.write_str("bubble"),
            Self::BubbleTime => f.write_str("bubble_t"),
            Self::Cosine { kx, ky } => write!(f, "cos_{kx}_{ky}"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = RelEnergyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one" => return Ok(Self::One),
            "bubble" => return Ok(Self::Bubble),
            "bubble_t" => return Ok(Self::BubbleTime),
            _ => {}
        }
        let parts: Vec<&str> = s.split('_').collect();
        if let ["cos", kx, ky] = parts.as_slice() {
            if let (Ok(kx), Ok(ky)) = (kx.parse(), ky.parse()) {
                return Ok(Self::Cosine { kx, ky });
            }
        }
        Err(RelEnergyError::InvalidTestFunction(format!(
            "unknown test function '{s}'"
        )))
    }
}

impl TestFunction {
    pub fn vanishes_on_boundary(self) -> bool {
        matches!(self, Self::Bubble | Self::BubbleTime)
    }

    pub fn is_nonnegative(self) -> bool {
        !matches!(self, Self::Cosine { .. })
    }

    /// `(φ, ∂tφ, ∇φ)` at `(t, x)`.
    pub fn eval<T: Scalar>(self, grid: &Grid2D<T>, t: T, x: Vec2<T>) -> (T, T, Vec2<T>) {
        let (lx, ly) = (grid.lx(), grid.ly());
        match self {
            Self::One => (T::one(), T::zero(), [T::zero(); 2]),
            Self::Bubble | Self::BubbleTime => {
                let norm = T::lit(16.0) / (lx * lx * ly * ly);
                let (fx, fy) = (x[0] * (lx - x[0]), x[1] * (ly - x[1]));
                let (dfx, dfy) = (lx - T::lit(2.0) * x[0], ly - T::lit(2.0) * x[1]);
                let b = norm * fx * fy;
                let gb = [norm * dfx * fy, norm * fx * dfy];
                if self == Self::Bubble {
                    (b, T::zero(), gb)
                } else {
                    let s = T::one() + t;
                    (s * b, b, [s * gb[0], s * gb[1]])
                }
            }
            Self::Cosine { kx, ky } => {
                let ax = T::from_usize_lossy(kx) * T::PI() / lx;
                let ay = T::from_usize_lossy(ky) * T::PI() / ly;
                let (cx, sx) = ((ax * x[0]).cos(), (ax * x[0]).sin());
                let (cy, sy) = ((ay * x[1]).cos(), (ay * x[1]).sin());
                (cx * cy, T::zero(), [-ax * sx * cy, -ay * cx * sy])
            }
        }
    }
}

/// Per-checkpoint `(∫ g φ dx, ∫ [g ∂tφ + flux·∇φ] dx)` for the scalar laws.
fn scalar_law_terms<T: Scalar>(
    hist: &DmvHistory<T>,
    k: usize,
    density: Observable,
    flux: Observable,
    phi: TestFunction,
) -> Result<(T, T), RelEnergyError> {
    let g = *hist.grid();
    let t = hist.times[k];
    let m = &hist.measures[k];
    let mut pair = (T::zero(), T::zero());
    for (n, cell) in m.cells().iter().enumerate() {
        let (i, j) = g.ij(n);
        let (f, ft, gf) = phi.eval(&g, t, g.center(i, j));
        let d = cell.expect_scalar(density, &hist.params)?;
        let q = cell.expectation(flux, &hist.params)?.as_vector().expect("vector flux");
        pair.0 += d * f;
        pair.1 += d * ft + q[0] * gf[0] + q[1] * gf[1];
    }
    let area = g.cell_area();
    Ok((pair.0 * area, pair.1 * area))
}

fn momentum_terms<T: Scalar>(hist: &DmvHistory<T>, k: usize, phi: TestFunction) -> Result<(T, T), RelEnergyError> {
    let g = *hist.grid();
    let t = hist.times[k];
    let p = &hist.params;
    let m = &hist.measures[k];
    let grad_uv = hist.u_v(k)?.noslip_gradient();
    let r_def = &hist.defects[k].r_def;
    let mut pair = (T::zero(), T::zero());
    for (n, cell) in m.cells().iter().enumerate() {
        let (i, j) = g.ij(n);
        let (f, ft, gf) = phi.eval(&g, t, g.center(i, j));
        // Φ = φ(1, 1): ∇Φ has both rows equal to ∇φ.
        let grad_phi: Mat2<T> = [gf, gf];
        let div_phi = gf[0] + gf[1];
        let mom = cell.expectation(Observable::Momentum, p)?.as_vector().expect("vector");
        let conv = cell
            .expectation(Observable::ConvectiveTensor, p)?
            .as_tensor()
            .expect("tensor");
        let pres = cell.expect_scalar(Observable::Pressure, p)?;
        let visc = stress(grad_uv.values()[n], p);
        pair.0 += (mom[0] + mom[1]) * f;
        pair.1 += (mom[0] + mom[1]) * ft + ddot(conv, grad_phi) + pres * div_phi - ddot(visc, grad_phi)
            + ddot(grad_phi, r_def.values()[n]);
    }
    let area = g.cell_area();
    Ok((pair.0 * area, pair.1 * area))
}

/// `[∫⟨V;g⟩φ]_0^τ − ∫_0^τ ∫ (…) dx dt` for the chosen balance law.
pub fn weak_form_residual<T: Scalar>(
    hist: &DmvHistory<T>,
    equation: Equation,
    phi: TestFunction,
    tau: T,
) -> Result<T, RelEnergyError> {
    if equation == Equation::Momentum && !phi.vanishes_on_boundary() {
        return Err(RelEnergyError::InvalidTestFunction(format!(
            "momentum test function '{phi}' must vanish on the boundary"
        )));
    }
    let k = hist.index_of(tau)?;
    let terms = (0..=k)
        .map(|n| match equation {
            Equation::Continuity => scalar_law_terms(hist, n, Observable::Density, Observable::Momentum, phi),
            Equation::Theta => scalar_law_terms(hist, n, Observable::RhoTheta, Observable::RhoThetaFlux, phi),
            Equation::Momentum => momentum_terms(hist, n, phi),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rates: Vec<T> = terms.iter().map(|t| t.1).collect();
    Ok(terms[k].0 - terms[0].0 - hist.integral_to(&rates, k))
}

/// `[∫⟨V;ρ̃lnθ̃⟩ψ]_0^τ − ∫_0^τ ∫ (…) dx dt`; `≥ 0` means the inequality holds.
pub fn entropy_inequality_residual<T: Scalar>(
    hist: &DmvHistory<T>,
    psi: TestFunction,
    tau: T,
) -> Result<T, RelEnergyError> {
    if !psi.is_nonnegative() {
        return Err(RelEnergyError::InvalidTestFunction(format!(
            "entropy test function '{psi}' must be non-negative"
        )));
    }
    let k = hist.index_of(tau)?;
    let terms = (0..=k)
        .map(|n| scalar_law_terms(hist, n, Observable::RhoLogTheta, Observable::RhoLogThetaFlux, psi))
        .collect::<Result<Vec<_>, _>>()?;
    let rates: Vec<T> = terms.iter().map(|t| t.1).collect();
    Ok(terms[k].0 - terms[0].0 - hist.integral_to(&rates, k))
}

/// `1/λ_min` of the discrete Dirichlet Laplacian used by
/// [`VectorField::dirichlet_energy`].
pub fn poincare_constant<T: Scalar>(grid: &Grid2D<T>) -> T {
    T::one() / smallest_dirichlet_eigenvalue(grid, 20_000)
}

/// Time-integrated Poincaré residual
/// `∫∫⟨|ũ−U|²⟩ − C_P (∫∫|∇(u_V−U)|² + ∫∫𝔈 + ∫𝔇(τ))`; `≤ 0` means it holds.
/// `u_ref[k]` is `U` at checkpoint `k` and must vanish on the walls.
pub fn poincare_residual<T: Scalar>(
    hist: &DmvHistory<T>,
    u_ref: &[VectorField<T>],
    c_p: T,
    tau: T,
) -> Result<T, RelEnergyError> {
    let k = hist.index_of(tau)?;
    if u_ref.len() < k + 1 {
        return Err(RelEnergyError::Misaligned(format!(
            "{} reference velocities for {} checkpoints",
            u_ref.len(),
            k + 1
        )));
    }
    let mut lhs = Vec::with_capacity(k + 1);
    let mut rhs = Vec::with_capacity(k + 1);
    for (n, u) in u_ref.iter().enumerate().take(k + 1) {
        let m = &hist.measures[n];
        let uv = u.values();
        lhs.push(m.integrate_with(|c, a| {
            let d = [a.u[0] - uv[c][0], a.u[1] - uv[c][1]];
            Ok(d[0] * d[0] + d[1] * d[1])
        })?);
        let dv = hist.u_v(n)?.sub(u)?;
        rhs.push(dv.dirichlet_energy() + hist.defects[n].e_def.integrate());
    }
    let d_tau = hist.defects[k].d_def.integrate();
    Ok(hist.integral_to(&lhs, k) - c_p * (hist.integral_to(&rhs, k) + d_tau))
}

/// Terms of the relative energy inequality at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReiBreakdown<T> {
    pub tau: T,
    pub rel_energy: T,
    pub rel_energy_initial: T,
    pub defects: T,
    pub dissipation: T,
    pub lhs_total: T,
    /// The eight right-hand-side integrals, in order.
    pub terms: [T; 8],
    pub residual: T,
}

impl<T: Scalar> ReiBreakdown<T> {
    pub fn rhs_total(&self) -> T {
        self.terms.iter().copied().sum()
    }

    /// Holds when `LHS ≤ Σ terms + slack`.
    pub fn holds(&self, slack: T) -> bool {
        self.residual >= -slack
    }
}

/// Integrands `[E, diss, T1..T8]` at checkpoint `k`.
fn rei_integrands<T: Scalar>(
    hist: &DmvHistory<T>,
    strong: &dyn StrongSolution<T>,
    k: usize,
) -> Result<[T; 10], RelEnergyError> {
    let g = *hist.grid();
    let p = &hist.params;
    let t = hist.times[k];
    let grad_uv = hist.u_v(k)?.noslip_gradient();
    let r_def = &hist.defects[k].r_def;
    let mut acc = [T::zero(); 10];
    for (n, cell) in hist.measures[k].cells().iter().enumerate() {
        let (i, j) = g.ij(n);
        let s = strong.eval(t, g.center(i, j));
        let d = s.derived(p);
        let (rho, u, gu) = (s.rho, s.u, s.grad_u);
        let mut c = [T::zero(); 10];
        for a in cell.atoms() {
            let w = a.weight;
            let du = [a.u[0] - u[0], a.u[1] - u[1]];
            let s_t = thermo::entropy(a.rho, a.theta, p)?;
            let f = relative_pressure_potential_theta(a.rho, a.theta, rho, s.theta, p)?;
            let ratio = a.rho / rho;
            let ent_mix = ratio * d.entropy - s_t;
            let quad = du[0] * (gu[0][0] * du[0] + gu[0][1] * du[1]) + du[1] * (gu[1][0] * du[0] + gu[1][1] * du[1]);
            c[0] += w * relative_energy_atom(a, rho, s.theta, u, p)?;
            c[2] += w * (-a.rho * quad);
            c[3] += w * (-(p.gm1() * f) * d.div_u);
            c[4] += w * (-ratio * (du[0] * d.momentum[0] + du[1] * d.momentum[1]));
            c[5] += w * ((T::one() - ratio) * d.p_rho * d.continuity);
            c[6] += w * ((T::one() - ratio) * d.p_s * d.entropy_balance);
            c[7] += w * (ent_mix * d.temperature);
            c[8] += w * (ent_mix * (du[0] * d.grad_vartheta[0] + du[1] * d.grad_vartheta[1]));
            c[9] += w * (-(ratio - T::one()) * (d.div_stress[0] * du[0] + d.div_stress[1] * du[1]));
        }
        c[8] -= ddot(gu, r_def.values()[n]);
        let mut dg = grad_uv.values()[n];
        for a in 0..2 {
            for b in 0..2 {
                dg[a][b] -= gu[a][b];
            }
        }
        c[1] = ddot(stress(dg, p), dg);
        for q in 0..10 {
            acc[q] += c[q];
        }
    }
    let area = g.cell_area();
    Ok(acc.map(|v| v * area))
}

/// Breakdown at every checkpoint of the history.
pub fn rei_series<T: Scalar>(
    hist: &DmvHistory<T>,
    strong: &dyn StrongSolution<T>,
) -> Result<Vec<ReiBreakdown<T>>, RelEnergyError> {
    let rows = (0..hist.len())
        .map(|k| rei_integrands(hist, strong, k))
        .collect::<Result<Vec<_>, _>>()?;
    let column = |q: usize| hist.cumulative(&rows.iter().map(|r| r[q]).collect::<Vec<_>>());
    let diss = column(1);
    let terms: Vec<Vec<T>> = (2..10).map(column).collect();
    let e0 = rows[0][0];
    Ok((0..hist.len())
        .map(|k| {
            let (ed, dd) = hist.defect_integrals(k);
            let mut tk = [T::zero(); 8];
            for (q, col) in terms.iter().enumerate() {
                tk[q] = col[k];
            }
            let lhs = rows[k][0] - e0 + ed + dd + diss[k];
            let rhs: T = tk.iter().copied().sum();
            ReiBreakdown {
                tau: hist.times[k],
                rel_energy: rows[k][0],
                rel_energy_initial: e0,
                defects: ed + dd,
                dissipation: diss[k],
                lhs_total: lhs,
                terms: tk,
                residual: rhs - lhs,
            }
        })
        .collect())
}

pub fn rei_breakdown<T: Scalar>(
    hist: &DmvHistory<T>,
    strong: &dyn StrongSolution<T>,
    tau: T,
) -> Result<ReiBreakdown<T>, RelEnergyError> {
    let k = hist.index_of(tau)?;
    Ok(rei_series(hist, strong)?.swap_remove(k))
}

/// `∫ ⟨V;ρ̃ ln θ̃⟩ dx` at each checkpoint.
pub fn entropy_integral_series<T: Scalar>(hist: &DmvHistory<T>) -> Result<Vec<T>, RelEnergyError> {
    hist.measures
        .iter()
        .map(|m| Ok(m.integrate(Observable::RhoLogTheta, &hist.params)?))
        .collect()
}
