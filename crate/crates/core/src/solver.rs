//! Explicit finite-volume integrator.
//!
//! Convective fluxes of `(ρ, ρu, ρθ)` use the local Lax-Friedrichs (Rusanov)
//! flux with wave speed `|u·n| + c`; the pressure gradient and the viscous
//! divergence use the central operators of [`crate::field`]; time stepping is
//! forward Euler. No-slip walls enter through reflected ghost cells, which
//! makes the wall mass and `ρθ` fluxes vanish identically.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::field::{
    apply_noslip_ghosts, ConservedState, FieldError, Grid2D, Primitive, ScalarField, TensorField, VectorField,
};
use crate::scalar::{Mat2, Scalar, Vec2};
use crate::thermo::{sound_speed, FluidParams, ThermoError};

/// Density below which a step is declared failed.
pub const DENSITY_FLOOR: f64 = 1e-10;
/// Relative slack on the `θ ≥ c★` floor.
pub const THETA_FLOOR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("positivity failure at cell ({i}, {j}), t = {time}: {detail}")]
    Positivity {
        i: usize,
        j: usize,
        time: f64,
        detail: String,
    },
    #[error("non-positive density {rho} at cell ({i}, {j})")]
    NonpositiveDensity { i: usize, j: usize, rho: f64 },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

/// Pointwise source terms added to the right-hand side; used for
/// manufactured solutions.
pub trait Forcing<T: Scalar>: Send + Sync {
    /// Sources for `(ρ, ρu_x, ρu_y, ρθ)`.
    fn source(&self, t: T, x: Vec2<T>) -> [T; 4];
}

/// Smooth perturbation of a uniform rest state.
///
/// Scalars use `cos·cos` modes (zero normal derivative at the walls), the
/// velocity uses `sin·sin` modes (zero on the walls). `seed = 0` selects the
/// single mode `(modes.0, modes.1)`; any other seed mixes random modes
/// `(k, l) ∈ {1, 2}²` with coefficients normalised to unit `ℓ¹` norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothPerturbation<T> {
    pub rho0: T,
    pub theta0: T,
    pub amplitude: T,
    pub modes: (usize, usize),
    pub seed: u64,
}

impl<T: Scalar> SmoothPerturbation<T> {
    fn coefficients(&self) -> [[[T; 2]; 2]; 4] {
        let mut c = [[[T::zero(); 2]; 2]; 4];
        if self.seed == 0 {
            return c;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for field in c.iter_mut() {
            let mut total = T::zero();
            for row in field.iter_mut() {
                for v in row.iter_mut() {
                    *v = T::lit(rng.gen_range(-1.0..1.0));
                    total += v.abs();
                }
            }
            for row in field.iter_mut() {
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
        }
        c
    }

    /// Shape functions `(s_ρ, s_θ, s_ux, s_uy)`, each bounded by one.
    pub fn shapes(&self, grid: &Grid2D<T>, x: Vec2<T>) -> [T; 4] {
        let px = T::PI() * x[0] / grid.lx();
        let py = T::PI() * x[1] / grid.ly();
        if self.seed == 0 {
            let (mx, my) = (T::from_usize_lossy(self.modes.0), T::from_usize_lossy(self.modes.1));
            let cc = (mx * px).cos() * (my * py).cos();
            let ss = (mx * px).sin() * (my * py).sin();
            let half = T::lit(0.5);
            return [cc, half * cc, ss, half * ss];
        }
        let coef = self.coefficients();
        let mut out = [T::zero(); 4];
        for (f, o) in out.iter_mut().enumerate() {
            for k in 0..2 {
                for l in 0..2 {
                    let (kk, ll) = (T::from_usize_lossy(k + 1), T::from_usize_lossy(l + 1));
                    let basis = if f < 2 {
                        (kk * px).cos() * (ll * py).cos()
                    } else {
                        (kk * px).sin() * (ll * py).sin()
                    };
                    *o += coef[f][k][l] * basis;
                }
            }
        }
        out
    }

    pub fn build(&self, grid: Grid2D<T>) -> ConservedState<T> {
        let a = self.amplitude;
        ConservedState::from_primitive(grid, |x| {
            let s = self.shapes(&grid, x);
            Primitive {
                rho: self.rho0 * (T::one() + a * s[0]),
                theta: self.theta0 * (T::one() + a * s[1]),
                u: [a * s[2], a * s[3]],
            }
        })
    }
}

#[derive(Clone)]
pub enum InitialCondition<T> {
    Uniform { rho: T, theta: T, u: Vec2<T> },
    Perturbed(SmoothPerturbation<T>),
    State(ConservedState<T>),
}

impl<T: Scalar> InitialCondition<T> {
    pub fn build(&self, grid: Grid2D<T>) -> Result<ConservedState<T>, SolverError> {
        Ok(match self {
            Self::Uniform { rho, theta, u } => ConservedState::uniform(grid, *rho, *theta, *u),
            Self::Perturbed(p) => p.build(grid),
            Self::State(s) => {
                if *s.grid() != grid {
                    return Err(SolverError::Config(
                        "initial state grid differs from solver grid".into(),
                    ));
                }
                s.clone()
            }
        })
    }
}

impl<T: fmt::Debug> fmt::Debug for InitialCondition<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform { rho, theta, u } => f
                .debug_struct("Uniform")
                .field("rho", rho)
                .field("theta", theta)
                .field("u", u)
                .finish(),
            Self::Perturbed(p) => f.debug_tuple("Perturbed").field(p).finish(),
            Self::State(_) => f.write_str("State(..)"),
        }
    }
}

#[derive(Clone)]
pub struct SolverConfig<T: Scalar> {
    pub grid: Grid2D<T>,
    pub params: FluidParams<T>,
    pub cfl: T,
    pub t_end: T,
    /// Record a snapshot every this many steps (the final time is always kept).
    pub output_every: usize,
    pub initial: InitialCondition<T>,
    pub forcing: Option<Arc<dyn Forcing<T>>>,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(grid: Grid2D<T>, params: FluidParams<T>, initial: InitialCondition<T>) -> Self {
        Self {
            grid,
            params,
            cfl: T::lit(0.4),
            t_end: T::lit(0.1),
            output_every: 1,
            initial,
            forcing: None,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.params.validate()?;
        if !(self.cfl > T::zero() && self.cfl <= T::lit(0.9)) {
            return Err(SolverError::Config(format!(
                "cfl must lie in (0, 0.9], got {}",
                self.cfl
            )));
        }
        if !(self.t_end >= T::zero()) || !self.t_end.is_finite() {
            return Err(SolverError::Config(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.output_every == 0 {
            return Err(SolverError::Config("output_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn echo(&self) -> RunEcho<T> {
        RunEcho {
            grid: self.grid,
            params: self.params,
            cfl: self.cfl,
            t_end: self.t_end,
            output_every: self.output_every,
            forced: self.forcing.is_some(),
        }
    }
}

impl<T: Scalar> fmt::Debug for SolverConfig<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolverConfig")
            .field("grid", &self.grid)
            .field("params", &self.params)
            .field("cfl", &self.cfl)
            .field("t_end", &self.t_end)
            .field("output_every", &self.output_every)
            .field("initial", &self.initial)
            .field("forced", &self.forcing.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunEcho<T> {
    pub grid: Grid2D<T>,
    pub params: FluidParams<T>,
    pub cfl: T,
    pub t_end: T,
    pub output_every: usize,
    pub forced: bool,
}

/// Snapshots of a run. `dissipation_accum[k]` is `Σ Δt ∫ 𝕊(∇u):∇u dx` over
/// the steps taken before `times[k]`.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Scalar> {
    pub times: Vec<T>,
    pub states: Vec<ConservedState<T>>,
    pub dissipation_accum: Vec<T>,
    pub steps: usize,
    pub echo: RunEcho<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &ConservedState<T> {
        self.states.last().expect("trajectory holds the initial snapshot")
    }
}

/// `𝕊 = μ(G + Gᵀ - (2/d) tr G I) + λ tr G I` for `G[c][d] = ∂_d u_c`.
pub fn stress<T: Scalar>(g: Mat2<T>, params: &FluidParams<T>) -> Mat2<T> {
    let div = g[0][0] + g[1][1];
    let iso = (params.lambda - T::lit(2.0) / T::from_usize_lossy(params.dim) * params.mu) * div;
    let mut s = [[T::zero(); 2]; 2];
    for c in 0..2 {
        for d in 0..2 {
            s[c][d] = params.mu * (g[c][d] + g[d][c]);
        }
        s[c][c] += iso;
    }
    s
}

pub fn viscous_stress<T: Scalar>(grad_u: &TensorField<T>, params: &FluidParams<T>) -> TensorField<T> {
    let data = grad_u.values().iter().map(|g| stress(*g, params)).collect();
    TensorField::new(*grad_u.grid(), data).expect("same grid")
}

/// `∫ 𝕊(∇u):∇u dx` with the wall-aware velocity gradient.
pub fn viscous_dissipation<T: Scalar>(state: &ConservedState<T>, params: &FluidParams<T>) -> T {
    let grad = state.velocity().noslip_gradient();
    viscous_stress(&grad, params)
        .ddot(&grad)
        .expect("same grid")
        .integrate()
}

/// Largest stable step for the explicit scheme:
/// `Δt = cfl / max_cells[(|u_x|+c)/dx + (|u_y|+c)/dy + 2(2μ+|λ|)/ρ (1/dx² + 1/dy²)]`.
pub fn cfl_dt<T: Scalar>(state: &ConservedState<T>, params: &FluidParams<T>, cfl: T) -> Result<T, SolverError> {
    let g = *state.grid();
    let (dx, dy) = (g.dx(), g.dy());
    let inv_h2 = T::one() / (dx * dx) + T::one() / (dy * dy);
    let visc = T::lit(2.0) * (T::lit(2.0) * params.mu + params.lambda.abs());
    let mut rate = T::zero();
    for k in 0..g.len() {
        let rho = state.rho.values()[k];
        if !(rho > T::zero()) {
            let (i, j) = g.ij(k);
            return Err(SolverError::NonpositiveDensity {
                i,
                j,
                rho: rho.as_f64(),
            });
        }
        let p = state.primitive(k);
        let c = sound_speed(p.rho, p.theta, params);
        let r = (p.u[0].abs() + c) / dx + (p.u[1].abs() + c) / dy + visc / rho * inv_h2;
        rate = rate.max(r);
    }
    Ok(cfl / rate)
}

/// Right-hand side `dU/dt` of the semi-discrete scheme, in the order
/// `(ρ, ρu_x, ρu_y, ρθ)` per cell.
fn rhs<T: Scalar>(
    state: &ConservedState<T>,
    params: &FluidParams<T>,
    t: T,
    forcing: Option<&dyn Forcing<T>>,
) -> Vec<[T; 4]> {
    let g = *state.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (dx, dy) = (g.dx(), g.dy());
    let gh = apply_noslip_ghosts(state);
    let half = T::lit(0.5);
    let mut out = vec![[T::zero(); 4]; g.len()];

    // Rusanov flux through a face with normal `axis`, from cell `l` to cell `r`.
    let face_flux = |l: (isize, isize), r: (isize, isize), axis: usize| -> [T; 4] {
        let (rl, ml, zl) = gh.get(l.0, l.1);
        let (rr, mr, zr) = gh.get(r.0, r.1);
        let (ul, ur) = (ml[axis] / rl, mr[axis] / rr);
        let cl = sound_speed(rl, zl / rl, params);
        let cr = sound_speed(rr, zr / rr, params);
        let alpha = (ul.abs() + cl).max(ur.abs() + cr);
        let fl = [rl * ul, ml[0] * ul, ml[1] * ul, zl * ul];
        let fr = [rr * ur, mr[0] * ur, mr[1] * ur, zr * ur];
        let ql = [rl, ml[0], ml[1], zl];
        let qr = [rr, mr[0], mr[1], zr];
        let mut f = [T::zero(); 4];
        for q in 0..4 {
            f[q] = half * (fl[q] + fr[q]) - half * alpha * (qr[q] - ql[q]);
        }
        f
    };

    for j in 0..ny {
        let mut west = face_flux((-1, j as isize), (0, j as isize), 0);
        for i in 0..nx {
            let east = face_flux((i as isize, j as isize), (i as isize + 1, j as isize), 0);
            let k = g.idx(i, j);
            for q in 0..4 {
                out[k][q] -= (east[q] - west[q]) / dx;
            }
            west = east;
        }
    }
    for i in 0..nx {
        let mut south = face_flux((i as isize, -1), (i as isize, 0), 1);
        for j in 0..ny {
            let north = face_flux((i as isize, j as isize), (i as isize, j as isize + 1), 1);
            let k = g.idx(i, j);
            for q in 0..4 {
                out[k][q] -= (north[q] - south[q]) / dy;
            }
            south = north;
        }
    }

    let grad_p = state.pressure(params).gradient();
    let div_stress = viscous_stress(&state.velocity().noslip_gradient(), params).divergence();
    for k in 0..g.len() {
        let gp = grad_p.values()[k];
        let ds = div_stress.values()[k];
        out[k][1] += ds[0] - gp[0];
        out[k][2] += ds[1] - gp[1];
    }

    if let Some(f) = forcing {
        for (k, o) in out.iter_mut().enumerate() {
            let (i, j) = g.ij(k);
            let s = f.source(t, g.center(i, j));
            for q in 0..4 {
                o[q] += s[q];
            }
        }
    }
    out
}

/// One forward-Euler step of length `dt` starting at time `t`.
pub fn step<T: Scalar>(
    state: &ConservedState<T>,
    dt: T,
    params: &FluidParams<T>,
    t: T,
    forcing: Option<&dyn Forcing<T>>,
) -> Result<ConservedState<T>, SolverError> {
    let g = *state.grid();
    let du = rhs(state, params, t, forcing);
    let mut rho = Vec::with_capacity(g.len());
    let mut mom = Vec::with_capacity(g.len());
    let mut z = Vec::with_capacity(g.len());
    let floor = T::lit(DENSITY_FLOOR);
    let theta_floor = params.c_star * (T::one() - T::lit(THETA_FLOOR_TOL));
    for (k, d) in du.iter().enumerate() {
        let r = state.rho.values()[k] + dt * d[0];
        let m = state.mom.values()[k];
        let m = [m[0] + dt * d[1], m[1] + dt * d[2]];
        let zz = state.z.values()[k] + dt * d[3];
        let (i, j) = g.ij(k);
        let fail = |detail: String| SolverError::Positivity {
            i,
            j,
            time: (t + dt).as_f64(),
            detail,
        };
        if !(r > floor) {
            return Err(fail(format!("density {} at or below floor {}", r, DENSITY_FLOOR)));
        }
        if !(zz / r >= theta_floor) || !m[0].is_finite() || !m[1].is_finite() {
            return Err(fail(format!("theta {} below floor {}", zz / r, params.c_star)));
        }
        rho.push(r);
        mom.push(m);
        z.push(zz);
    }
    Ok(ConservedState::new(
        ScalarField::new(g, rho)?,
        VectorField::new(g, mom)?,
        ScalarField::new(g, z)?,
    )?)
}

/// Integrates to `t_end`, recording snapshots and accumulated dissipation.
pub fn run<T: Scalar>(config: &SolverConfig<T>) -> Result<Trajectory<T>, SolverError> {
    config.validate()?;
    let params = &config.params;
    let mut state = config.initial.build(config.grid)?;
    state.validate(params)?;

    let mut traj = Trajectory {
        times: vec![T::zero()],
        states: vec![state.clone()],
        dissipation_accum: vec![T::zero()],
        steps: 0,
        echo: config.echo(),
    };
    let forcing = config.forcing.as_deref();
    let mut t = T::zero();
    let mut accum = T::zero();
    while t < config.t_end {
        let mut dt = cfl_dt(&state, params, config.cfl)?;
        let last = t + dt >= config.t_end;
        if last {
            dt = config.t_end - t;
        }
        let dissipation = viscous_dissipation(&state, params);
        state = step(&state, dt, params, t, forcing)?;
        accum += dt * dissipation;
        t = if last { config.t_end } else { t + dt };
        traj.steps += 1;
        if last || traj.steps % config.output_every == 0 {
            traj.times.push(t);
            traj.states.push(state.clone());
            traj.dissipation_accum.push(accum);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(mu: f64, lambda: f64) -> FluidParams<f64> {
        FluidParams::new(2.0, 1.0, mu, lambda, 0.5).unwrap()
    }

    fn tensor(m: Mat2<f64>) -> TensorField<f64> {
        TensorField::from_fn(Grid2D::unit_square(4).unwrap(), |_| m)
    }

    #[test]
    fn stress_examples() {
        let p = params(1.0, 0.0);
        let zero = viscous_stress(&tensor([[0.0; 2]; 2]), &p);
        assert!(zero.values().iter().all(|s| *s == [[0.0; 2]; 2]));
        let dil = viscous_stress(&tensor([[1.0, 0.0], [0.0, 1.0]]), &p);
        assert!(dil.values().iter().all(|s| s.iter().flatten().all(|v| v.abs() < 1e-15)));
        let shear = tensor([[0.0, 1.0], [0.0, 0.0]]);
        let s = viscous_stress(&shear, &p);
        assert_eq!(s.values()[0], [[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(crate::scalar::ddot(s.values()[0], shear.values()[0]), 1.0);
    }

    #[test]
    fn cfl_dt_examples() {
        let p = FluidParams::new(2.0, 1.0, 1e-300, 0.0, 0.5).unwrap();
        let g = Grid2D::unit_square(64).unwrap();
        let s = ConservedState::uniform(g, 1.0, 1.0, [0.0, 0.0]);
        let dt = cfl_dt(&s, &p, 0.5).unwrap();
        let expected = 0.5 / (2.0 * 64.0 * 2f64.sqrt());
        assert_relative_eq!(dt, expected, max_relative = 1e-12);
        assert!((dt - 2.76e-3).abs() < 5e-6);

        let p = params(0.01, 0.0);
        let s2 = ConservedState::uniform(Grid2D::unit_square(128).unwrap(), 1.0, 1.0, [0.3, -0.2]);
        let s1 = ConservedState::uniform(g, 1.0, 1.0, [0.3, -0.2]);
        assert!(cfl_dt(&s2, &p, 0.5).unwrap() <= 0.5 * cfl_dt(&s1, &p, 0.5).unwrap());

        let mut bad = s1.clone();
        bad.rho.values_mut()[5] = 0.0;
        assert!(matches!(
            cfl_dt(&bad, &p, 0.5),
            Err(SolverError::NonpositiveDensity { .. })
        ));
    }

    #[test]
    fn uniform_rest_state_is_a_fixed_point() {
        let p = params(0.05, 0.01);
        let g = Grid2D::new(8, 6, 1.0, 0.7).unwrap();
        let s = ConservedState::uniform(g, 1.3, 0.9, [0.0, 0.0]);
        let next = step(&s, 1e-3, &p, 0.0, None).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn t_end_zero_gives_single_snapshot() {
        let g = Grid2D::unit_square(8).unwrap();
        let init = InitialCondition::Uniform {
            rho: 1.0,
            theta: 1.0,
            u: [0.0, 0.0],
        };
        let mut cfg = SolverConfig::new(g, params(0.01, 0.0), init);
        cfg.t_end = 0.0;
        let traj = run(&cfg).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.steps, 0);
        assert_eq!(traj.states[0], ConservedState::uniform(g, 1.0, 1.0, [0.0, 0.0]));
    }

    #[test]
    fn config_validation() {
        let g = Grid2D::unit_square(8).unwrap();
        let init = InitialCondition::Uniform {
            rho: 1.0,
            theta: 1.0,
            u: [0.0, 0.0],
        };
        let mut cfg = SolverConfig::new(g, params(0.01, 0.0), init);
        cfg.cfl = 0.95;
        assert!(matches!(run(&cfg), Err(SolverError::Config(_))));
        cfg.cfl = 0.4;
        cfg.output_every = 0;
        assert!(run(&cfg).is_err());
    }

    #[test]
    fn theta_below_floor_in_initial_data_is_rejected() {
        let g = Grid2D::unit_square(8).unwrap();
        let init = InitialCondition::Uniform {
            rho: 1.0,
            theta: 0.3,
            u: [0.0, 0.0],
        };
        let cfg = SolverConfig::new(g, params(0.01, 0.0), init);
        assert!(matches!(run(&cfg), Err(SolverError::Field(_))));
    }

    #[test]
    fn positivity_failure_names_cell_and_time() {
        struct Drain;
        impl Forcing<f64> for Drain {
            fn source(&self, _t: f64, x: Vec2<f64>) -> [f64; 4] {
                if x[0] < 0.2 && x[1] < 0.2 {
                    [-1e6, 0.0, 0.0, -1e6]
                } else {
                    [0.0; 4]
                }
            }
        }
        let g = Grid2D::unit_square(8).unwrap();
        let s = ConservedState::uniform(g, 1.0, 1.0, [0.0, 0.0]);
        let err = step(&s, 1e-3, &params(0.01, 0.0), 0.25, Some(&Drain)).unwrap_err();
        match err {
            SolverError::Positivity { i, j, time, .. } => {
                assert_eq!((i, j), (0, 0));
                assert_relative_eq!(time, 0.251);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perturbation_shapes_are_bounded_and_vanish_on_walls() {
        let g = Grid2D::unit_square(16).unwrap();
        for seed in [0u64, 1, 42] {
            let p = SmoothPerturbation::<f64> {
                rho0: 1.0,
                theta0: 1.0,
                amplitude: 0.1,
                modes: (1, 2),
                seed,
            };
            for x in [[0.3, 0.7], [0.01, 0.5], [0.99, 0.99]] {
                let s = p.shapes(&g, x);
                assert!(s.iter().all(|v: &f64| v.abs() <= 1.0 + 1e-12));
            }
            for x in [[0.0, 0.4], [1.0, 0.4], [0.4, 0.0], [0.4, 1.0]] {
                let s = p.shapes(&g, x);
                assert!(f64::abs(s[2]) < 1e-12 && f64::abs(s[3]) < 1e-12);
            }
        }
    }
}
