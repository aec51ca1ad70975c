//! Finite-atom Young measures per cell, their expectations and the defect
//! fields that accompany them.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::field::{fmt17, ConservedState, FieldError, Grid2D, ScalarField, TensorField};
use crate::scalar::{sym_eigenvalues, Mat2, Scalar, Vec2};
use crate::thermo::{self, FluidParams, ThermoError};

/// Tolerance on `Σ weights = 1` accepted by [`CellMeasure::new`].
pub const WEIGHT_SUM_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("cell measure has no atoms")]
    Empty,
    #[error("atom weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("atom weight {weight} is not positive")]
    NonpositiveWeight { weight: f64 },
    #[error("unknown observable '{0}'")]
    UnknownObservable(String),
    #[error("observable '{0}' is not scalar-valued")]
    NotScalar(Observable),
    #[error("fine grid {fine_nx}x{fine_ny} is not an integer refinement of {coarse_nx}x{coarse_ny}")]
    NotNested {
        fine_nx: usize,
        fine_ny: usize,
        coarse_nx: usize,
        coarse_ny: usize,
    },
    #[error("zero density at cell ({i}, {j}); velocity and temperature are undefined")]
    ZeroDensity { i: usize, j: usize },
    #[error("expected {expected} cell measures, got {got}")]
    CellCount { expected: usize, got: usize },
    #[error("no states supplied")]
    NoStates,
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// One point mass `weight · δ_(ρ̃, θ̃, ũ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom<T> {
    pub weight: T,
    pub rho: T,
    pub theta: T,
    pub u: Vec2<T>,
}

impl<T: Scalar> Atom<T> {
    pub fn new(weight: T, rho: T, theta: T, u: Vec2<T>) -> Self {
        Self { weight, rho, theta, u }
    }

    fn is_finite(&self) -> bool {
        self.weight.is_finite()
            && self.rho.is_finite()
            && self.theta.is_finite()
            && self.u[0].is_finite()
            && self.u[1].is_finite()
    }
}

/// Quantities whose expectation can be taken against a measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Observable {
    /// `ρ̃`
    Density,
    /// `ρ̃ũ`
    Momentum,
    /// `ρ̃θ̃`
    RhoTheta,
    /// `ρ̃ ln θ̃`
    RhoLogTheta,
    /// `ρ̃ ln(θ̃) ũ`
    RhoLogThetaFlux,
    /// `ρ̃θ̃ũ`
    RhoThetaFlux,
    /// `ũ`
    Velocity,
    /// `ρ̃ ũ⊗ũ`
    ConvectiveTensor,
    /// `p(ρ̃θ̃)`
    Pressure,
    /// `½ρ̃|ũ|² + P(ρ̃θ̃)`
    EnergyDensity,
    /// `S(ρ̃, θ̃)`
    Entropy,
    /// `ρ̃²`
    DensitySquared,
}

impl Observable {
    pub const ALL: [Observable; 12] = [
        Self::Density,
        Self::Momentum,
        Self::RhoTheta,
        Self::RhoLogTheta,
        Self::RhoLogThetaFlux,
        Self::RhoThetaFlux,
        Self::Velocity,
        Self::ConvectiveTensor,
        Self::Pressure,
        Self::EnergyDensity,
        Self::Entropy,
        Self::DensitySquared,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::Density => "rho",
            Self::Momentum => "momentum",
            Self::RhoTheta => "rho_theta",
            Self::RhoLogTheta => "rho_log_theta",
            Self::RhoLogThetaFlux => "rho_log_theta_flux",
            Self::RhoThetaFlux => "rho_theta_flux",
            Self::Velocity => "velocity",
            Self::ConvectiveTensor => "convective_tensor",
            Self::Pressure => "pressure",
            Self::EnergyDensity => "energy",
            Self::Entropy => "entropy",
            Self::DensitySquared => "rho_squared",
        }
    }

    /// True when `g` is affine in `(ρ̃, ρ̃θ̃, ρ̃ũ)` jointly or in `ũ`.
    pub fn is_affine(self) -> bool {
        matches!(self, Self::Density | Self::Momentum | Self::RhoTheta | Self::Velocity)
    }

    pub fn eval<T: Scalar>(self, a: &Atom<T>, params: &FluidParams<T>) -> Result<ObservableValue<T>, MeasureError> {
        use ObservableValue::{Scalar as S, Tensor, Vector};
        let r = a.rho;
        let u = a.u;
        Ok(match self {
            Self::Density => S(r),
            Self::Momentum => Vector([r * u[0], r * u[1]]),
            Self::RhoTheta => S(r * a.theta),
            Self::RhoLogTheta => S(r * log_theta(a.theta)?),
            Self::RhoLogThetaFlux => {
                let s = r * log_theta(a.theta)?;
                Vector([s * u[0], s * u[1]])
            }
            Self::RhoThetaFlux => Vector([r * a.theta * u[0], r * a.theta * u[1]]),
            Self::Velocity => Vector(u),
            Self::ConvectiveTensor => Tensor([[r * u[0] * u[0], r * u[0] * u[1]], [r * u[1] * u[0], r * u[1] * u[1]]]),
            Self::Pressure => S(thermo::pressure_of_rhotheta(r * a.theta, params)?),
            Self::EnergyDensity => S(T::lit(0.5) * r * (u[0] * u[0] + u[1] * u[1])
                + thermo::pressure_potential_of_rhotheta(r * a.theta, params)?),
            Self::Entropy => S(thermo::entropy(r, a.theta, params)?),
            Self::DensitySquared => S(r * r),
        })
    }
}

fn log_theta<T: Scalar>(theta: T) -> Result<T, MeasureError> {
    if theta > T::zero() {
        Ok(theta.ln())
    } else {
        Err(ThermoError::Domain {
            op: "ln",
            detail: format!("theta = {theta}"),
        }
        .into())
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Observable {
    type Err = MeasureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|o| o.id() == s)
            .ok_or_else(|| MeasureError::UnknownObservable(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ObservableValue<T> {
    Scalar(T),
    Vector(Vec2<T>),
    Tensor(Mat2<T>),
}

impl<T: Scalar> ObservableValue<T> {
    fn zero_like(&self) -> Self {
        match self {
            Self::Scalar(_) => Self::Scalar(T::zero()),
            Self::Vector(_) => Self::Vector([T::zero(); 2]),
            Self::Tensor(_) => Self::Tensor([[T::zero(); 2]; 2]),
        }
    }

    fn add_scaled(&mut self, w: T, other: &Self) {
        match (self, other) {
            (Self::Scalar(a), Self::Scalar(b)) => *a += w * *b,
            (Self::Vector(a), Self::Vector(b)) => {
                for c in 0..2 {
                    a[c] += w * b[c];
                }
            }
            (Self::Tensor(a), Self::Tensor(b)) => {
                for c in 0..2 {
                    for d in 0..2 {
                        a[c][d] += w * b[c][d];
                    }
                }
            }
            _ => unreachable!("observable values of one kind"),
        }
    }

    pub fn as_scalar(&self) -> Option<T> {
        match self {
            Self::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<Vec2<T>> {
        match self {
            Self::Vector(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_tensor(&self) -> Option<Mat2<T>> {
        match self {
            Self::Tensor(v) => Some(*v),
            _ => None,
        }
    }

    /// Components in row-major order.
    pub fn components(&self) -> Vec<T> {
        match self {
            Self::Scalar(v) => vec![*v],
            Self::Vector(v) => v.to_vec(),
            Self::Tensor(m) => vec![m[0][0], m[0][1], m[1][0], m[1][1]],
        }
    }
}

/// Probability measure on state space made of finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMeasure<T> {
    atoms: Vec<Atom<T>>,
}

impl<T: Scalar> CellMeasure<T> {
    /// Accepts atoms whose weights are positive and sum to one within
    /// [`WEIGHT_SUM_TOL`], then renormalizes exactly.
    pub fn new(atoms: Vec<Atom<T>>) -> Result<Self, MeasureError> {
        let sum = Self::checked_sum(&atoms)?;
        if (sum - T::one()).abs() > T::tol(WEIGHT_SUM_TOL) {
            return Err(MeasureError::WeightSum { sum: sum.as_f64() });
        }
        Ok(Self::normalized(atoms, sum))
    }

    /// Divides every weight by their total.
    pub fn from_unnormalized(atoms: Vec<Atom<T>>) -> Result<Self, MeasureError> {
        let sum = Self::checked_sum(&atoms)?;
        Ok(Self::normalized(atoms, sum))
    }

    /// No checks at all; used to build invalid measures for [`validate`].
    pub fn new_unchecked(atoms: Vec<Atom<T>>) -> Self {
        Self { atoms }
    }

    pub fn dirac(rho: T, theta: T, u: Vec2<T>) -> Self {
        Self {
            atoms: vec![Atom::new(T::one(), rho, theta, u)],
        }
    }

    /// `w·a + (1-w)·b`.
    pub fn mixture(a: &Self, w: T, b: &Self) -> Result<Self, MeasureError> {
        let atoms = a
            .atoms
            .iter()
            .map(|x| Atom {
                weight: w * x.weight,
                ..*x
            })
            .chain(b.atoms.iter().map(|x| Atom {
                weight: (T::one() - w) * x.weight,
                ..*x
            }))
            .filter(|x| x.weight > T::zero())
            .collect();
        Self::from_unnormalized(atoms)
    }

    fn checked_sum(atoms: &[Atom<T>]) -> Result<T, MeasureError> {
        if atoms.is_empty() {
            return Err(MeasureError::Empty);
        }
        let mut sum = T::zero();
        for a in atoms {
            if !(a.weight > T::zero()) {
                return Err(MeasureError::NonpositiveWeight {
                    weight: a.weight.as_f64(),
                });
            }
            sum += a.weight;
        }
        Ok(sum)
    }

    fn normalized(mut atoms: Vec<Atom<T>>, sum: T) -> Self {
        if sum != T::one() {
            for a in &mut atoms {
                a.weight /= sum;
            }
        }
        Self { atoms }
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn weight_sum(&self) -> T {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `⟨V; g⟩ = Σ wₖ g(atomₖ)`.
    pub fn expectation(&self, g: Observable, params: &FluidParams<T>) -> Result<ObservableValue<T>, MeasureError> {
        let first = self.atoms.first().ok_or(MeasureError::Empty)?;
        let mut acc = g.eval(first, params)?.zero_like();
        for a in &self.atoms {
            acc.add_scaled(a.weight, &g.eval(a, params)?);
        }
        Ok(acc)
    }

    pub fn expect_scalar(&self, g: Observable, params: &FluidParams<T>) -> Result<T, MeasureError> {
        self.expectation(g, params)?
            .as_scalar()
            .ok_or(MeasureError::NotScalar(g))
    }

    /// `⟨V; f(atom)⟩` for an arbitrary scalar function of the atom.
    pub fn expect_with(&self, mut f: impl FnMut(&Atom<T>) -> Result<T, MeasureError>) -> Result<T, MeasureError> {
        let mut acc = T::zero();
        for a in &self.atoms {
            acc += a.weight * f(a)?;
        }
        Ok(acc)
    }
}

/// Total energy `|m|²/(2ρ) + P(ρ, S)` as a function of conserved variables.
pub fn energy_conserved<T: Scalar>(rho: T, m: Vec2<T>, s: T, params: &FluidParams<T>) -> Result<T, ThermoError> {
    let kinetic = if rho > T::zero() {
        T::lit(0.5) * (m[0] * m[0] + m[1] * m[1]) / rho
    } else {
        T::zero()
    };
    Ok(kinetic + thermo::pressure_potential_rho_s(rho, s, params)?)
}

/// One cell measure per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureField<T> {
    grid: Grid2D<T>,
    cells: Vec<CellMeasure<T>>,
}

impl<T: Scalar> MeasureField<T> {
    pub fn new(grid: Grid2D<T>, cells: Vec<CellMeasure<T>>) -> Result<Self, MeasureError> {
        if cells.len() != grid.len() {
            return Err(MeasureError::CellCount {
                expected: grid.len(),
                got: cells.len(),
            });
        }
        Ok(Self { grid, cells })
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }

    pub fn cells(&self) -> &[CellMeasure<T>] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [CellMeasure<T>] {
        &mut self.cells
    }

    pub fn cell(&self, i: usize, j: usize) -> &CellMeasure<T> {
        &self.cells[self.grid.idx(i, j)]
    }

    pub fn expectation_field(
        &self,
        g: Observable,
        params: &FluidParams<T>,
    ) -> Result<Vec<ObservableValue<T>>, MeasureError> {
        self.cells.iter().map(|c| c.expectation(g, params)).collect()
    }

    pub fn scalar_field(&self, g: Observable, params: &FluidParams<T>) -> Result<ScalarField<T>, MeasureError> {
        let data = self
            .cells
            .iter()
            .map(|c| c.expect_scalar(g, params))
            .collect::<Result<_, _>>()?;
        Ok(ScalarField::new(self.grid, data)?)
    }

    /// `∫ ⟨V; g⟩ dx` for a scalar observable.
    pub fn integrate(&self, g: Observable, params: &FluidParams<T>) -> Result<T, MeasureError> {
        Ok(self.scalar_field(g, params)?.integrate())
    }

    /// `∫ ⟨V; f⟩ dx` for a per-atom function that may depend on the cell.
    pub fn integrate_with(
        &self,
        mut f: impl FnMut(usize, &Atom<T>) -> Result<T, MeasureError>,
    ) -> Result<T, MeasureError> {
        let mut acc = T::zero();
        for (k, c) in self.cells.iter().enumerate() {
            acc += c.expect_with(|a| f(k, a))?;
        }
        Ok(acc * self.grid.cell_area())
    }
}

/// One Dirac atom per cell at `(ρ, z/ρ, m/ρ)`.
pub fn dirac_from_state<T: Scalar>(state: &ConservedState<T>) -> Result<MeasureField<T>, MeasureError> {
    let g = *state.grid();
    let mut cells = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        if !(state.rho.values()[k] > T::zero()) {
            let (i, j) = g.ij(k);
            return Err(MeasureError::ZeroDensity { i, j });
        }
        let p = state.primitive(k);
        cells.push(CellMeasure::dirac(p.rho, p.theta, p.u));
    }
    MeasureField::new(g, cells)
}

/// Collects the fine sub-cell values of every supplied state as equal-weight
/// atoms of the enclosing coarse cell.
pub fn ensemble_from_refinement<T: Scalar>(
    fine_states: &[ConservedState<T>],
    coarse: &Grid2D<T>,
) -> Result<MeasureField<T>, MeasureError> {
    let first = fine_states.first().ok_or(MeasureError::NoStates)?;
    let mut cells: Vec<Vec<Atom<T>>> = vec![Vec::new(); coarse.len()];
    let total = T::from_usize_lossy(fine_states.len());
    for state in fine_states {
        let fine = *state.grid();
        if fine != *first.grid() {
            return Err(FieldError::GridMismatch.into());
        }
        let (kx, ky) = coarse.refinement_factor(&fine).ok_or(MeasureError::NotNested {
            fine_nx: fine.nx(),
            fine_ny: fine.ny(),
            coarse_nx: coarse.nx(),
            coarse_ny: coarse.ny(),
        })?;
        let w = T::one() / (T::from_usize_lossy(kx * ky) * total);
        for k in 0..fine.len() {
            let (i, j) = fine.ij(k);
            if !(state.rho.values()[k] > T::zero()) {
                return Err(MeasureError::ZeroDensity { i, j });
            }
            let p = state.primitive(k);
            cells[coarse.idx(i / kx, j / ky)].push(Atom::new(w, p.rho, p.theta, p.u));
        }
    }
    let cells = cells
        .into_iter()
        .map(CellMeasure::from_unnormalized)
        .collect::<Result<_, _>>()?;
    MeasureField::new(*coarse, cells)
}

/// Energy, dissipation and Reynolds defects together with the trace
/// compatibility constants `d_lo ≤ tr ℜ / 𝔈 ≤ d_hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectFields<T> {
    pub e_def: ScalarField<T>,
    pub d_def: ScalarField<T>,
    pub r_def: TensorField<T>,
    pub d_lo: T,
    pub d_hi: T,
}

impl<T: Scalar> DefectFields<T> {
    /// Zero defects with `d_lo = 1`, `d_hi = dim`.
    pub fn zeros(grid: Grid2D<T>, dim: usize) -> Self {
        Self {
            e_def: ScalarField::zeros(grid),
            d_def: ScalarField::zeros(grid),
            r_def: TensorField::zeros(grid),
            d_lo: T::one(),
            d_hi: T::from_usize_lossy(dim),
        }
    }

    pub fn grid(&self) -> &Grid2D<T> {
        self.e_def.grid()
    }
}

/// Defects read off an ensemble: `𝔈 = ⟨energy⟩ − energy(barycentre)` with the
/// barycentre taken in `(ρ̃, ρ̃ũ, S̃)`, and `ℜ = ⟨ρ̃ũ⊗ũ⟩ − m̄⊗m̄/ρ̄`. `𝔇` is zero.
pub fn infer_defects<T: Scalar>(
    measure: &MeasureField<T>,
    params: &FluidParams<T>,
) -> Result<DefectFields<T>, MeasureError> {
    let g = *measure.grid();
    let mut out = DefectFields::zeros(g, params.dim);
    for (k, cell) in measure.cells().iter().enumerate() {
        let rho = cell.expect_scalar(Observable::Density, params)?;
        let m = cell
            .expectation(Observable::Momentum, params)?
            .as_vector()
            .expect("vector");
        let s = cell.expect_scalar(Observable::Entropy, params)?;
        let e = cell.expect_scalar(Observable::EnergyDensity, params)?;
        let conv = cell
            .expectation(Observable::ConvectiveTensor, params)?
            .as_tensor()
            .expect("tensor");
        let gap = e - energy_conserved(rho, m, s, params)?;
        out.e_def.values_mut()[k] = gap.max(T::zero());
        let mut r = conv;
        if rho > T::zero() {
            for c in 0..2 {
                for d in 0..2 {
                    r[c][d] -= m[c] * m[d] / rho;
                }
            }
        }
        let off = T::lit(0.5) * (r[0][1] + r[1][0]);
        r[0][1] = off;
        r[1][0] = off;
        out.r_def.values_mut()[k] = r;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    GridMismatch,
    EmptyCell,
    WeightSum,
    NonpositiveWeight,
    NonFinite,
    NegativeDensity,
    ThetaBelowFloor,
    NegativeEnergyDefect,
    NegativeDissipationDefect,
    ReynoldsAsymmetric,
    ReynoldsNotPsd,
    TraceBelowLower,
    TraceAboveUpper,
    TraceConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    /// Atom index for atom-level violations.
    pub atom: Option<usize>,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell ({}, {})", self.i, self.j)?;
        if let Some(a) = self.atom {
            write!(f, " atom {a}")?;
        }
        write!(f, ": {:?}: {}", self.kind, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn at(&self, i: usize, j: usize) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.i == i && v.j == j)
    }
}

/// Lists every violated constraint on the measure and the defects.
pub fn validate<T: Scalar>(
    measure: &MeasureField<T>,
    defects: &DefectFields<T>,
    params: &FluidParams<T>,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let g = *measure.grid();
    let mut push = |k: usize, atom: Option<usize>, kind, detail: String| {
        let (i, j) = g.ij(k);
        report.violations.push(Violation {
            i,
            j,
            atom,
            kind,
            detail,
        });
    };
    if defects.grid() != &g || defects.d_def.grid() != &g || defects.r_def.grid() != &g {
        push(
            0,
            None,
            ViolationKind::GridMismatch,
            "defect fields live on another grid".into(),
        );
        return report;
    }
    if !(defects.d_lo > T::zero() && defects.d_lo <= defects.d_hi) {
        push(
            0,
            None,
            ViolationKind::TraceConstants,
            format!("need 0 < d_lo <= d_hi, got {} and {}", defects.d_lo, defects.d_hi),
        );
    }
    let sum_tol = T::tol(WEIGHT_SUM_TOL);
    let tol = T::tol(1e-12);
    for (k, cell) in measure.cells().iter().enumerate() {
        if cell.atoms().is_empty() {
            push(k, None, ViolationKind::EmptyCell, "no atoms".into());
        } else {
            let sum = cell.weight_sum();
            if (sum - T::one()).abs() > sum_tol {
                push(k, None, ViolationKind::WeightSum, format!("weights sum to {sum}"));
            }
        }
        for (n, a) in cell.atoms().iter().enumerate() {
            if !a.is_finite() {
                push(k, Some(n), ViolationKind::NonFinite, format!("{a:?}"));
                continue;
            }
            if !(a.weight > T::zero()) {
                push(
                    k,
                    Some(n),
                    ViolationKind::NonpositiveWeight,
                    format!("weight {}", a.weight),
                );
            }
            if a.rho < T::zero() {
                push(k, Some(n), ViolationKind::NegativeDensity, format!("rho {}", a.rho));
            }
            if a.theta < params.c_star {
                push(
                    k,
                    Some(n),
                    ViolationKind::ThetaBelowFloor,
                    format!("theta {} below floor {}", a.theta, params.c_star),
                );
            }
        }

        let e = defects.e_def.values()[k];
        let d = defects.d_def.values()[k];
        let r = defects.r_def.values()[k];
        if !e.is_finite() || !d.is_finite() || r.iter().flatten().any(|v| !v.is_finite()) {
            push(k, None, ViolationKind::NonFinite, "defect value".into());
            continue;
        }
        if e < T::zero() {
            push(k, None, ViolationKind::NegativeEnergyDefect, format!("E = {e}"));
        }
        if d < T::zero() {
            push(k, None, ViolationKind::NegativeDissipationDefect, format!("D = {d}"));
        }
        let scale = T::one() + r.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs())) + e.abs();
        if (r[0][1] - r[1][0]).abs() > tol * scale {
            push(
                k,
                None,
                ViolationKind::ReynoldsAsymmetric,
                format!("R12 = {}, R21 = {}", r[0][1], r[1][0]),
            );
        }
        let (lmin, _) = sym_eigenvalues(r);
        if lmin < -tol * scale {
            push(k, None, ViolationKind::ReynoldsNotPsd, format!("min eigenvalue {lmin}"));
        }
        let tr = r[0][0] + r[1][1];
        if defects.d_lo * e > tr + tol * scale {
            push(
                k,
                None,
                ViolationKind::TraceBelowLower,
                format!("tr R = {tr} < d_lo E = {}", defects.d_lo * e),
            );
        }
        if tr > defects.d_hi * e + tol * scale {
            push(
                k,
                None,
                ViolationKind::TraceAboveUpper,
                format!("tr R = {tr} > d_hi E = {}", defects.d_hi * e),
            );
        }
    }
    report
}

pub const MEASURE_CSV_HEADER: &str = "cell_i,cell_j,atom_k,weight,rho,theta,ux,uy";
pub const DEFECT_CSV_HEADER: &str = "x,y,E,D,R11,R12,R22";

pub fn write_measure_csv<T: Scalar, W: Write>(measure: &MeasureField<T>, mut out: W) -> io::Result<()> {
    writeln!(out, "{MEASURE_CSV_HEADER}")?;
    let g = measure.grid();
    for (k, cell) in measure.cells().iter().enumerate() {
        let (i, j) = g.ij(k);
        for (n, a) in cell.atoms().iter().enumerate() {
            writeln!(
                out,
                "{i},{j},{n},{},{},{},{},{}",
                fmt17(a.weight),
                fmt17(a.rho),
                fmt17(a.theta),
                fmt17(a.u[0]),
                fmt17(a.u[1])
            )?;
        }
    }
    Ok(())
}

pub fn write_defect_csv<T: Scalar, W: Write>(defects: &DefectFields<T>, mut out: W) -> io::Result<()> {
    writeln!(out, "{DEFECT_CSV_HEADER}")?;
    let g = *defects.grid();
    for k in 0..g.len() {
        let (i, j) = g.ij(k);
        let c = g.center(i, j);
        let r = defects.r_def.values()[k];
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt17(c[0]),
            fmt17(c[1]),
            fmt17(defects.e_def.values()[k]),
            fmt17(defects.d_def.values()[k]),
            fmt17(r[0][0]),
            fmt17(r[0][1]),
            fmt17(r[1][1])
        )?;
    }
    Ok(())
}
