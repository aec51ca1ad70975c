//! Uniform Cartesian cells on a rectangle, cell-centred fields and the
//! discrete operators built on them.
//!
//! Cell `(i, j)` has centre `((i+½)dx, (j+½)dy)` and flat index `j*nx + i`,
//! so `x` varies fastest.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Mat2, Scalar, Vec2};
use crate::thermo::FluidParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid needs at least 4 cells per axis, got {nx}x{ny}")]
    TooFewCells { nx: usize, ny: usize },
    #[error("domain extents must be positive and finite, got {lx} x {ly}")]
    BadExtent { lx: f64, ly: f64 },
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid state at cell ({i}, {j}): {reason}")]
    InvalidCell { i: usize, j: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D<T> {
    nx: usize,
    ny: usize,
    lx: T,
    ly: T,
}

impl<T: Scalar> Grid2D<T> {
    pub fn new(nx: usize, ny: usize, lx: T, ly: T) -> Result<Self, FieldError> {
        if nx < 4 || ny < 4 {
            return Err(FieldError::TooFewCells { nx, ny });
        }
        if !(lx > T::zero() && ly > T::zero() && lx.is_finite() && ly.is_finite()) {
            return Err(FieldError::BadExtent {
                lx: lx.as_f64(),
                ly: ly.as_f64(),
            });
        }
        Ok(Self { nx, ny, lx, ly })
    }

    pub fn unit_square(n: usize) -> Result<Self, FieldError> {
        Self::new(n, n, T::one(), T::one())
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> T {
        self.lx
    }
    pub fn ly(&self) -> T {
        self.ly
    }
    pub fn dx(&self) -> T {
        self.lx / T::from_usize_lossy(self.nx)
    }
    pub fn dy(&self) -> T {
        self.ly / T::from_usize_lossy(self.ny)
    }
    pub fn cell_area(&self) -> T {
        self.dx() * self.dy()
    }
    pub fn area(&self) -> T {
        self.lx * self.ly
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn center(&self, i: usize, j: usize) -> Vec2<T> {
        let half = T::lit(0.5);
        [
            (T::from_usize_lossy(i) + half) * self.dx(),
            (T::from_usize_lossy(j) + half) * self.dy(),
        ]
    }

    /// Same extents, `factor` times more cells per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            nx: self.nx * factor,
            ny: self.ny * factor,
            lx: self.lx,
            ly: self.ly,
        }
    }

    /// Integer refinement factors `(kx, ky)` if `fine` nests inside `self`.
    pub fn refinement_factor(&self, fine: &Self) -> Option<(usize, usize)> {
        if !fine.nx.is_multiple_of(self.nx) || !fine.ny.is_multiple_of(self.ny) {
            return None;
        }
        let tol = T::tol(1e-12);
        if ((fine.lx - self.lx) / self.lx).abs() > tol || ((fine.ly - self.ly) / self.ly).abs() > tol {
            return None;
        }
        Some((fine.nx / self.nx, fine.ny / self.ny))
    }
}

macro_rules! field_type {
    ($name:ident, $elem:ty, $zero:expr) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name<T> {
            grid: Grid2D<T>,
            data: Vec<$elem>,
        }

        impl<T: Scalar> $name<T> {
            pub fn new(grid: Grid2D<T>, data: Vec<$elem>) -> Result<Self, FieldError> {
                if data.len() != grid.len() {
                    return Err(FieldError::LengthMismatch {
                        expected: grid.len(),
                        got: data.len(),
                    });
                }
                Ok(Self { grid, data })
            }

            pub fn zeros(grid: Grid2D<T>) -> Self {
                Self {
                    grid,
                    data: vec![$zero; grid.len()],
                }
            }

            pub fn from_fn(grid: Grid2D<T>, mut f: impl FnMut(Vec2<T>) -> $elem) -> Self {
                let mut data = Vec::with_capacity(grid.len());
                for j in 0..grid.ny() {
                    for i in 0..grid.nx() {
                        data.push(f(grid.center(i, j)));
                    }
                }
                Self { grid, data }
            }

            pub fn grid(&self) -> &Grid2D<T> {
                &self.grid
            }
            pub fn values(&self) -> &[$elem] {
                &self.data
            }
            pub fn values_mut(&mut self) -> &mut [$elem] {
                &mut self.data
            }
            #[inline]
            pub fn at(&self, i: usize, j: usize) -> $elem {
                self.data[self.grid.idx(i, j)]
            }
        }
    };
}

field_type!(ScalarField, T, T::zero());
field_type!(VectorField, Vec2<T>, [T::zero(); 2]);
field_type!(TensorField, Mat2<T>, [[T::zero(); 2]; 2]);

/// Derivative of a cell-centred sequence at position `k` of `n` values.
/// Central in the interior, second-order one-sided at the two ends.
#[inline]
fn diff1d<T: Scalar>(f: impl Fn(usize) -> T, k: usize, n: usize, h: T) -> T {
    let two_h = T::lit(2.0) * h;
    let four = T::lit(4.0);
    if k == 0 {
        let (f0, f1, f2) = (f(0), f(1), f(2));
        (four * (f1 - f0) - (f2 - f0)) / two_h
    } else if k == n - 1 {
        let (f0, f1, f2) = (f(n - 1), f(n - 2), f(n - 3));
        -(four * (f1 - f0) - (f2 - f0)) / two_h
    } else {
        (f(k + 1) - f(k - 1)) / two_h
    }
}

impl<T: Scalar> ScalarField<T> {
    pub fn constant(grid: Grid2D<T>, value: T) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// `Σ f dx dy` summed in index order.
    pub fn integrate(&self) -> T {
        let mut acc = T::zero();
        for v in &self.data {
            acc += *v;
        }
        acc * self.grid.cell_area()
    }

    pub fn gradient(&self) -> VectorField<T> {
        let g = self.grid;
        let (nx, ny, dx, dy) = (g.nx(), g.ny(), g.dx(), g.dy());
        let mut out = Vec::with_capacity(g.len());
        for j in 0..ny {
            for i in 0..nx {
                let gx = diff1d(|k| self.at(k, j), i, nx, dx);
                let gy = diff1d(|k| self.at(i, k), j, ny, dy);
                out.push([gx, gy]);
            }
        }
        VectorField { grid: g, data: out }
    }

    pub fn min(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    /// Discrete L1 norm `Σ |f| dx dy`.
    pub fn l1_norm(&self) -> T {
        self.map(|v| v.abs()).integrate()
    }

    /// Cell averages on a coarser nested grid.
    pub fn restrict_to(&self, coarse: &Grid2D<T>) -> Result<Self, FieldError> {
        let (kx, ky) = coarse.refinement_factor(&self.grid).ok_or(FieldError::GridMismatch)?;
        let w = T::one() / T::from_usize_lossy(kx * ky);
        let mut data = Vec::with_capacity(coarse.len());
        for j in 0..coarse.ny() {
            for i in 0..coarse.nx() {
                let mut acc = T::zero();
                for b in 0..ky {
                    for a in 0..kx {
                        acc += self.at(i * kx + a, j * ky + b);
                    }
                }
                data.push(acc * w);
            }
        }
        Ok(Self { grid: *coarse, data })
    }
}

impl<T: Scalar> VectorField<T> {
    pub fn component(&self, c: usize) -> ScalarField<T> {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|v| v[c]).collect(),
        }
    }

    /// Jacobian `G[c][d] = ∂_d v_c` with the same stencils as [`ScalarField::gradient`].
    pub fn gradient(&self) -> TensorField<T> {
        let g0 = self.component(0).gradient();
        let g1 = self.component(1).gradient();
        let data = g0.data.iter().zip(&g1.data).map(|(a, b)| [*a, *b]).collect();
        TensorField { grid: self.grid, data }
    }

    pub fn divergence(&self) -> ScalarField<T> {
        let g = self.grid;
        let (nx, ny, dx, dy) = (g.nx(), g.ny(), g.dx(), g.dy());
        let mut out = Vec::with_capacity(g.len());
        for j in 0..ny {
            for i in 0..nx {
                let a = diff1d(|k| self.at(k, j)[0], i, nx, dx);
                let b = diff1d(|k| self.at(i, k)[1], j, ny, dy);
                out.push(a + b);
            }
        }
        ScalarField { grid: g, data: out }
    }

    pub fn dot(&self, other: &Self) -> Result<ScalarField<T>, FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch);
        }
        Ok(ScalarField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
                .collect(),
        })
    }

    /// Gradient of a field that vanishes on the walls, using reflected ghosts
    /// (`v_ghost = -v_interior`) and central differences everywhere.
    pub fn noslip_gradient(&self) -> TensorField<T> {
        let g = self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let two = T::lit(2.0);
        let (dx2, dy2) = (two * g.dx(), two * g.dy());
        let mut out = Vec::with_capacity(g.len());
        for j in 0..ny {
            for i in 0..nx {
                let here = self.at(i, j);
                let east = if i + 1 < nx { self.at(i + 1, j) } else { neg(here) };
                let west = if i > 0 { self.at(i - 1, j) } else { neg(here) };
                let north = if j + 1 < ny { self.at(i, j + 1) } else { neg(here) };
                let south = if j > 0 { self.at(i, j - 1) } else { neg(here) };
                let mut m = [[T::zero(); 2]; 2];
                for c in 0..2 {
                    m[c][0] = (east[c] - west[c]) / dx2;
                    m[c][1] = (north[c] - south[c]) / dy2;
                }
                out.push(m);
            }
        }
        TensorField { grid: g, data: out }
    }

    /// `Σ_faces |Δv|²/h² dx dy` with reflected wall ghosts: the compact
    /// Dirichlet energy, equal to `vᵀ A v dx dy` for the 5-point Dirichlet
    /// Laplacian `A`.
    pub fn dirichlet_energy(&self) -> T {
        let g = self.grid;
        let (nx, ny, dx, dy) = (g.nx(), g.ny(), g.dx(), g.dy());
        let two = T::lit(2.0);
        let mut acc = T::zero();
        for j in 0..ny {
            for i in 0..=nx {
                let (l, r) = match (i.checked_sub(1), i < nx) {
                    (Some(a), true) => (self.at(a, j), self.at(i, j)),
                    (None, _) => (neg(self.at(0, j)), self.at(0, j)),
                    (Some(a), false) => (self.at(a, j), neg(self.at(a, j))),
                };
                // A wall face sits half a cell from the centre; the reflected
                // ghost makes the jump 2v over a full spacing.
                let d = [(r[0] - l[0]) / dx, (r[1] - l[1]) / dx];
                let w = if i == 0 || i == nx { T::one() / two } else { T::one() };
                acc += w * (d[0] * d[0] + d[1] * d[1]);
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let (l, r) = match (j.checked_sub(1), j < ny) {
                    (Some(b), true) => (self.at(i, b), self.at(i, j)),
                    (None, _) => (neg(self.at(i, 0)), self.at(i, 0)),
                    (Some(b), false) => (self.at(i, b), neg(self.at(i, b))),
                };
                let d = [(r[0] - l[0]) / dy, (r[1] - l[1]) / dy];
                let w = if j == 0 || j == ny { T::one() / two } else { T::one() };
                acc += w * (d[0] * d[0] + d[1] * d[1]);
            }
        }
        acc * g.cell_area()
    }
}

#[inline]
fn neg<T: Scalar>(v: Vec2<T>) -> Vec2<T> {
    [-v[0], -v[1]]
}

impl<T: Scalar> TensorField<T> {
    /// Row-wise divergence: `(div M)_c = Σ_d ∂_d M[c][d]`.
    pub fn divergence(&self) -> VectorField<T> {
        let g = self.grid;
        let (nx, ny, dx, dy) = (g.nx(), g.ny(), g.dx(), g.dy());
        let mut out = Vec::with_capacity(g.len());
        for j in 0..ny {
            for i in 0..nx {
                let mut v = [T::zero(); 2];
                for (c, vc) in v.iter_mut().enumerate() {
                    *vc = diff1d(|k| self.at(k, j)[c][0], i, nx, dx) + diff1d(|k| self.at(i, k)[c][1], j, ny, dy);
                }
                out.push(v);
            }
        }
        VectorField { grid: g, data: out }
    }

    /// Cellwise Frobenius product.
    pub fn ddot(&self, other: &Self) -> Result<ScalarField<T>, FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch);
        }
        Ok(ScalarField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| crate::scalar::ddot(*a, *b))
                .collect(),
        })
    }
}

/// Smallest eigenvalue of the 5-point Dirichlet Laplacian with reflected
/// ghosts, by power iteration on `σI - A` with `σ` above the spectrum.
pub fn smallest_dirichlet_eigenvalue<T: Scalar>(grid: &Grid2D<T>, iterations: usize) -> T {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (idx2, idy2) = (T::one() / (grid.dx() * grid.dx()), T::one() / (grid.dy() * grid.dy()));
    let sigma = T::lit(4.0) * (idx2 + idy2);
    let apply = |v: &[T], out: &mut [T]| {
        for j in 0..ny {
            for i in 0..nx {
                let c = v[j * nx + i];
                let e = if i + 1 < nx { v[j * nx + i + 1] } else { -c };
                let w = if i > 0 { v[j * nx + i - 1] } else { -c };
                let n = if j + 1 < ny { v[(j + 1) * nx + i] } else { -c };
                let s = if j > 0 { v[(j - 1) * nx + i] } else { -c };
                let lap = (T::lit(2.0) * c - e - w) * idx2 + (T::lit(2.0) * c - n - s) * idy2;
                out[j * nx + i] = sigma * c - lap;
            }
        }
    };
    // Positive start vector overlapping the lowest mode.
    let mut v: Vec<T> = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.ij(k);
            let c = grid.center(i, j);
            (T::PI() * c[0] / grid.lx()).sin() * (T::PI() * c[1] / grid.ly()).sin() + T::lit(0.1)
        })
        .collect();
    let mut w = vec![T::zero(); v.len()];
    let mut rayleigh = T::zero();
    for _ in 0..iterations.max(1) {
        let norm = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        apply(&v, &mut w);
        rayleigh = v.iter().zip(&w).map(|(a, b)| *a * *b).sum::<T>();
        std::mem::swap(&mut v, &mut w);
    }
    sigma - rayleigh
}

/// Conserved unknowns `(ρ, ρu, ρθ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservedState<T> {
    pub rho: ScalarField<T>,
    pub mom: VectorField<T>,
    pub z: ScalarField<T>,
}

/// Primitive values at one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive<T> {
    pub rho: T,
    pub theta: T,
    pub u: Vec2<T>,
}

impl<T: Scalar> ConservedState<T> {
    pub fn new(rho: ScalarField<T>, mom: VectorField<T>, z: ScalarField<T>) -> Result<Self, FieldError> {
        if rho.grid() != mom.grid() || rho.grid() != z.grid() {
            return Err(FieldError::GridMismatch);
        }
        Ok(Self { rho, mom, z })
    }

    /// State sampled from primitive values at cell centres.
    pub fn from_primitive(grid: Grid2D<T>, mut f: impl FnMut(Vec2<T>) -> Primitive<T>) -> Self {
        let prims: Vec<Primitive<T>> = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                f(grid.center(i, j))
            })
            .collect();
        Self {
            rho: ScalarField::new(grid, prims.iter().map(|p| p.rho).collect()).unwrap(),
            mom: VectorField::new(grid, prims.iter().map(|p| [p.rho * p.u[0], p.rho * p.u[1]]).collect()).unwrap(),
            z: ScalarField::new(grid, prims.iter().map(|p| p.rho * p.theta).collect()).unwrap(),
        }
    }

    pub fn uniform(grid: Grid2D<T>, rho: T, theta: T, u: Vec2<T>) -> Self {
        Self::from_primitive(grid, |_| Primitive { rho, theta, u })
    }

    pub fn grid(&self) -> &Grid2D<T> {
        self.rho.grid()
    }

    #[inline]
    pub fn primitive(&self, k: usize) -> Primitive<T> {
        let rho = self.rho.values()[k];
        let m = self.mom.values()[k];
        Primitive {
            rho,
            theta: self.z.values()[k] / rho,
            u: [m[0] / rho, m[1] / rho],
        }
    }

    pub fn velocity(&self) -> VectorField<T> {
        let data = self
            .rho
            .values()
            .iter()
            .zip(self.mom.values())
            .map(|(r, m)| [m[0] / *r, m[1] / *r])
            .collect();
        VectorField::new(*self.grid(), data).unwrap()
    }

    pub fn theta(&self) -> ScalarField<T> {
        self.z.zip_map(&self.rho, |z, r| z / r).unwrap()
    }

    pub fn pressure(&self, params: &FluidParams<T>) -> ScalarField<T> {
        self.z.map(|z| params.a * z.max(T::zero()).powf(params.gamma))
    }

    /// `½ρ|u|² + P(ρθ)` per cell.
    pub fn energy_density(&self, params: &FluidParams<T>) -> ScalarField<T> {
        let half = T::lit(0.5);
        let data = (0..self.grid().len())
            .map(|k| {
                let r = self.rho.values()[k];
                let m = self.mom.values()[k];
                let z = self.z.values()[k].max(T::zero());
                half * (m[0] * m[0] + m[1] * m[1]) / r + params.a * z.powf(params.gamma) / params.gm1()
            })
            .collect();
        ScalarField::new(*self.grid(), data).unwrap()
    }

    /// Checks `ρ ≥ 0` everywhere and `θ ≥ c★` wherever `ρ > 0`.
    pub fn validate(&self, params: &FluidParams<T>) -> Result<(), FieldError> {
        let g = *self.grid();
        for k in 0..g.len() {
            let (i, j) = g.ij(k);
            let r = self.rho.values()[k];
            let z = self.z.values()[k];
            let m = self.mom.values()[k];
            if !(r.is_finite() && z.is_finite() && m[0].is_finite() && m[1].is_finite()) {
                return Err(FieldError::InvalidCell {
                    i,
                    j,
                    reason: "non-finite value".into(),
                });
            }
            if r < T::zero() {
                return Err(FieldError::InvalidCell {
                    i,
                    j,
                    reason: format!("negative density {}", r),
                });
            }
            if r > T::zero() && z / r < params.c_star {
                return Err(FieldError::InvalidCell {
                    i,
                    j,
                    reason: format!("theta {} below floor {}", z / r, params.c_star),
                });
            }
        }
        Ok(())
    }

    /// Cell-averaged restriction of every conserved field.
    pub fn restrict_to(&self, coarse: &Grid2D<T>) -> Result<Self, FieldError> {
        let m0 = self.mom.component(0).restrict_to(coarse)?;
        let m1 = self.mom.component(1).restrict_to(coarse)?;
        let mom = VectorField::new(
            *coarse,
            m0.values().iter().zip(m1.values()).map(|(a, b)| [*a, *b]).collect(),
        )?;
        Self::new(self.rho.restrict_to(coarse)?, mom, self.z.restrict_to(coarse)?)
    }
}

/// State extended by one ghost layer on every side.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostedState<T> {
    grid: Grid2D<T>,
    rho: Vec<T>,
    mom: Vec<Vec2<T>>,
    z: Vec<T>,
}

impl<T: Scalar> GhostedState<T> {
    #[inline]
    fn gidx(&self, i: isize, j: isize) -> usize {
        ((j + 1) as usize) * (self.grid.nx() + 2) + (i + 1) as usize
    }

    /// Values at cell `(i, j)`, where `i ∈ [-1, nx]` and `j ∈ [-1, ny]`.
    #[inline]
    pub fn get(&self, i: isize, j: isize) -> (T, Vec2<T>, T) {
        let k = self.gidx(i, j);
        (self.rho[k], self.mom[k], self.z[k])
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }
}

/// No-slip ghost layer: velocity reflects with a sign flip so the
/// wall-interpolated velocity vanishes; `ρ` and `θ` are copied (zero normal
/// gradient). Corner ghosts are never read by the face stencils.
pub fn apply_noslip_ghosts<T: Scalar>(state: &ConservedState<T>) -> GhostedState<T> {
    let g = *state.grid();
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    let n = ((nx + 2) * (ny + 2)) as usize;
    let mut out = GhostedState {
        grid: g,
        rho: vec![T::zero(); n],
        mom: vec![[T::zero(); 2]; n],
        z: vec![T::zero(); n],
    };
    for j in -1..=ny {
        for i in -1..=nx {
            let ii = i.clamp(0, nx - 1);
            let jj = j.clamp(0, ny - 1);
            let src = g.idx(ii as usize, jj as usize);
            let ghost = ii != i || jj != j;
            let k = out.gidx(i, j);
            out.rho[k] = state.rho.values()[src];
            out.z[k] = state.z.values()[src];
            let m = state.mom.values()[src];
            out.mom[k] = if ghost { [-m[0], -m[1]] } else { m };
        }
    }
    out
}

/// Column order of the field CSV dump.
pub const FIELD_CSV_HEADER: &str = "x,y,rho,ux,uy,theta";

/// 17 significant digits in scientific notation; round-trips exactly.
pub fn fmt17<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

/// Writes one row per cell in flat-index order with 17 significant digits.
pub fn write_state_csv<T: Scalar, W: Write>(state: &ConservedState<T>, mut out: W) -> io::Result<()> {
    writeln!(out, "{FIELD_CSV_HEADER}")?;
    let g = *state.grid();
    for k in 0..g.len() {
        let (i, j) = g.ij(k);
        let c = g.center(i, j);
        let p = state.primitive(k);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt17(c[0]),
            fmt17(c[1]),
            fmt17(p.rho),
            fmt17(p.u[0]),
            fmt17(p.u[1]),
            fmt17(p.theta)
        )?;
    }
    Ok(())
}

/// Reads a dump written by [`write_state_csv`] back onto `grid`.
pub fn read_state_csv<T: Scalar>(grid: Grid2D<T>, text: &str) -> Result<ConservedState<T>, FieldError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().unwrap_or_default().trim();
    if header != FIELD_CSV_HEADER {
        return Err(FieldError::InvalidCell {
            i: 0,
            j: 0,
            reason: format!("unexpected header `{header}`"),
        });
    }
    let mut prims = Vec::with_capacity(grid.len());
    for (row, line) in lines.enumerate() {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| {
                let (i, j) = grid.ij(row.min(grid.len().saturating_sub(1)));
                FieldError::InvalidCell {
                    i,
                    j,
                    reason: format!("row {}: {e}", row + 2),
                }
            })?;
        if cols.len() != 6 {
            let (i, j) = grid.ij(row.min(grid.len().saturating_sub(1)));
            return Err(FieldError::InvalidCell {
                i,
                j,
                reason: format!("row {} has {} columns", row + 2, cols.len()),
            });
        }
        prims.push(Primitive {
            rho: T::lit(cols[2]),
            theta: T::lit(cols[5]),
            u: [T::lit(cols[3]), T::lit(cols[4])],
        });
    }
    if prims.len() != grid.len() {
        return Err(FieldError::LengthMismatch {
            expected: grid.len(),
            got: prims.len(),
        });
    }
    Ok(ConservedState::from_primitive(grid, |c| {
        let (i, j) = (
            ((c[0] / grid.dx()).floor().as_f64()) as usize,
            ((c[1] / grid.dy()).floor().as_f64()) as usize,
        );
        prims[grid.idx(i.min(grid.nx() - 1), j.min(grid.ny() - 1))]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid2D<f64> {
        Grid2D::unit_square(n).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = Grid2D::new(8, 4, 2.0, 1.0).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.dy(), 0.25);
        assert_eq!(g.center(0, 0), [0.125, 0.125]);
        assert_eq!(g.center(7, 3), [1.875, 0.875]);
        assert_eq!(g.ij(g.idx(5, 2)), (5, 2));
        assert!(Grid2D::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid2D::new(8, 8, 0.0, 1.0).is_err());
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let f = ScalarField::constant(grid(8), 3.7);
        assert!(f.gradient().values().iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn gradient_exact_on_linear() {
        let f = ScalarField::from_fn(grid(16), |c| c[0]);
        for v in f.gradient().values() {
            assert_relative_eq!(v[0], 1.0, epsilon = 1e-12);
            assert!(v[1].abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_second_order_on_sine() {
        let err = |n: usize| {
            let f = ScalarField::from_fn(grid(n), |c| (PI * c[0]).sin());
            let g = f.gradient();
            let exact = VectorField::from_fn(grid(n), |c| [PI * (PI * c[0]).cos(), 0.0]);
            g.values()
                .iter()
                .zip(exact.values())
                .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        assert!(e1 / e2 > 3.5 && e2 / e3 > 3.5, "ratios {} {}", e1 / e2, e2 / e3);
    }

    #[test]
    fn divergence_of_constant_vector_is_zero() {
        let v = VectorField::from_fn(grid(8), |_| [1.5, -2.0]);
        assert!(v.divergence().values().iter().all(|d| *d == 0.0));
    }

    #[test]
    fn integrate_unit_and_bilinear() {
        assert_relative_eq!(ScalarField::constant(grid(8), 1.0).integrate(), 1.0, epsilon = 1e-14);
        // Midpoint rule is exact on x*y over a uniform grid.
        for n in [8, 64] {
            let f = ScalarField::from_fn(grid(n), |c| c[0] * c[1]);
            assert_relative_eq!(f.integrate(), 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn integrate_second_order_on_curved_integrand() {
        let err = |n: usize| {
            let f = ScalarField::from_fn(grid(n), |c| (c[0] * c[0]) * (c[1] * c[1]));
            (f.integrate() - 1.0 / 9.0).abs()
        };
        assert!(err(64) <= 1e-3);
        let r1 = err(32) / err(64);
        let r2 = err(64) / err(128);
        assert!(r1 > 3.9 && r2 > 3.9, "{r1} {r2}");
    }

    #[test]
    fn integrate_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = ScalarField::from_fn(grid(32), |_| rng.gen_range(-1.0..1.0));
        let a = f.integrate();
        let b = f.clone().integrate();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn ghosts_reflect_velocity_and_copy_scalars() {
        let g = grid(4);
        let zero = ConservedState::uniform(g, 1.0, 1.0, [0.0, 0.0]);
        let gh = apply_noslip_ghosts(&zero);
        for k in -1..=4 {
            assert_eq!(gh.get(-1, k.clamp(0, 3)).1, [0.0, 0.0]);
        }
        let s = ConservedState::uniform(g, 2.0, 1.5, [1.0, 0.0]);
        let gh = apply_noslip_ghosts(&s);
        let (r, m, z) = gh.get(-1, 2);
        assert_eq!((r, z), (2.0, 3.0));
        assert_eq!([m[0] / r, m[1] / r], [-1.0, 0.0]);
        let (_, m, _) = gh.get(4, 0);
        assert_eq!(m, [-2.0, -0.0]);
        let (_, m, _) = gh.get(1, 4);
        assert_eq!(m, [-2.0, -0.0]);
    }

    #[test]
    fn wall_interpolant_vanishes_for_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let g = grid(6);
            let s = ConservedState::from_primitive(g, |_| Primitive {
                rho: rng.gen_range(0.5..2.0),
                theta: rng.gen_range(0.5..2.0),
                u: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            });
            let gh = apply_noslip_ghosts(&s);
            for k in 0..6isize {
                for (a, b) in [((-1, k), (0, k)), ((6, k), (5, k)), ((k, -1), (k, 0)), ((k, 6), (k, 5))] {
                    let (ra, ma, _) = gh.get(a.0, a.1);
                    let (rb, mb, _) = gh.get(b.0, b.1);
                    for c in 0..2 {
                        assert!((ma[c] / ra + mb[c] / rb).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_divergence_adjointness_is_second_order() {
        // v vanishes on the walls; f is generic.
        let defect = |n: usize| {
            let g = grid(n);
            let f = ScalarField::from_fn(g, |c| (1.3 * c[0]).cos() + c[1] * c[1]);
            let v = VectorField::from_fn(g, |c| {
                let b = (PI * c[0]).sin() * (PI * c[1]).sin();
                [b * (1.0 + c[1]), b * c[0]]
            });
            let a = f.zip_map(&v.divergence(), |x, y| x * y).unwrap().integrate();
            let b = f.gradient().dot(&v).unwrap().integrate();
            (a + b).abs()
        };
        let (d1, d2, d3) = (defect(32), defect(64), defect(128));
        assert!(d1 / d2 > 3.0 && d2 / d3 > 3.0, "{d1} {d2} {d3}");
    }

    #[test]
    fn dirichlet_eigenvalue_matches_closed_form() {
        let g = Grid2D::new(12, 8, 1.0, 0.5).unwrap();
        let lam = smallest_dirichlet_eigenvalue(&g, 4000);
        let exact = 4.0 / (g.dx() * g.dx()) * (PI * g.dx() / (2.0 * g.lx())).sin().powi(2)
            + 4.0 / (g.dy() * g.dy()) * (PI * g.dy() / (2.0 * g.ly())).sin().powi(2);
        assert_relative_eq!(lam, exact, max_relative = 1e-6);
    }

    #[test]
    fn dirichlet_energy_matches_laplacian_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = grid(6);
        let v = VectorField::from_fn(g, |_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        // Brute force vᵀ A v with the ghost-reflected 5-point stencil.
        let (nx, ny) = (6usize, 6usize);
        let h2 = g.dx() * g.dx();
        let mut quad = 0.0;
        for c in 0..2 {
            for j in 0..ny {
                for i in 0..nx {
                    let u = |a: isize, b: isize| -> f64 {
                        if a < 0 || b < 0 || a >= nx as isize || b >= ny as isize {
                            -v.at(i, j)[c]
                        } else {
                            v.at(a as usize, b as usize)[c]
                        }
                    };
                    let (ii, jj) = (i as isize, j as isize);
                    let lap = (4.0 * u(ii, jj) - u(ii + 1, jj) - u(ii - 1, jj) - u(ii, jj + 1) - u(ii, jj - 1)) / h2;
                    quad += u(ii, jj) * lap;
                }
            }
        }
        assert_relative_eq!(v.dirichlet_energy(), quad * g.cell_area(), max_relative = 1e-12);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = grid(5);
        let s = ConservedState::from_primitive(g, |_| Primitive {
            rho: rng.gen_range(0.5..2.0),
            theta: rng.gen_range(0.5..2.0),
            u: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        });
        let mut buf = Vec::new();
        write_state_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,rho,ux,uy,theta\n"));
        let back = read_state_csv(g, &text).unwrap();
        for k in 0..g.len() {
            let (a, b) = (s.primitive(k), back.primitive(k));
            assert_eq!(a.rho, b.rho);
            assert_relative_eq!(a.theta, b.theta, max_relative = 1e-15);
            assert_relative_eq!(a.u[0], b.u[0], max_relative = 1e-15, epsilon = 1e-300);
        }
    }

    #[test]
    fn state_validation_flags_theta_floor() {
        let p = FluidParams::new(1.4, 1.0, 0.01, 0.0, 0.5).unwrap();
        let g = grid(4);
        assert!(ConservedState::uniform(g, 1.0, 1.0, [0.0, 0.0]).validate(&p).is_ok());
        let bad = ConservedState::uniform(g, 1.0, 0.4, [0.0, 0.0]);
        assert!(matches!(
            bad.validate(&p),
            Err(FieldError::InvalidCell { i: 0, j: 0, .. })
        ));
    }

    #[test]
    fn restriction_averages_subcells() {
        let fine = ScalarField::from_fn(grid(8), |c| c[0]);
        let coarse = fine.restrict_to(&grid(4)).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                assert_relative_eq!(coarse.at(i, j), grid(4).center(i, j)[0], epsilon = 1e-15);
            }
        }
        assert!(fine.restrict_to(&grid(5)).is_err());
    }
}
