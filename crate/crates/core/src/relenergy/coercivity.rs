//! Sampling certificate for the coercivity of the relative pressure
//! potential: quadratic growth on a bounded near set `R`, growth like
//! `1 + (ρ̃θ̃)^γ` on its complement `S`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::scalar::Scalar;
use crate::thermo::{self, FluidParams};

use super::bregman::relative_pressure_potential;
use super::RelEnergyError;

/// Samples closer than this to the reference (in `(ρ, S)`) are skipped.
pub const COINCIDENCE_RADIUS: f64 = 1e-8;
const MAX_SEARCH_STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds<T> {
    pub rho_min: T,
    pub rho_max: T,
    pub theta_min: T,
    pub theta_max: T,
}

impl<T: Scalar> Bounds<T> {
    pub fn new(rho_min: T, rho_max: T, theta_min: T, theta_max: T) -> Self {
        Self {
            rho_min,
            rho_max,
            theta_min,
            theta_max,
        }
    }

    pub fn validate(&self, c_star: T) -> Result<(), RelEnergyError> {
        let ok = self.rho_min > T::zero()
            && self.rho_min <= self.rho_max
            && self.theta_min > T::zero()
            && self.theta_min <= self.theta_max
            && self.rho_max.is_finite()
            && self.theta_max.is_finite();
        if !ok {
            return Err(RelEnergyError::InvalidBounds(format!(
                "need 0 < rho_min <= rho_max and 0 < theta_min <= theta_max, got rho [{}, {}], theta [{}, {}]",
                self.rho_min, self.rho_max, self.theta_min, self.theta_max
            )));
        }
        if self.theta_max < c_star {
            return Err(RelEnergyError::InvalidBounds(format!(
                "c_star = {} exceeds theta_max = {}; the near set would be empty",
                c_star, self.theta_max
            )));
        }
        Ok(())
    }

    /// `n × n` reference grid over the box, corners included.
    fn reference_grid(&self, n: usize) -> Vec<(T, T)> {
        let rhos = linspace(self.rho_min, self.rho_max, n);
        let thetas = linspace(self.theta_min, self.theta_max, n);
        let mut out = Vec::with_capacity(rhos.len() * thetas.len());
        for &r in &rhos {
            for &t in &thetas {
                out.push((r, t));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    Near,
    Far,
    Inadmissible,
}

/// `R = [c1 ρ̲, c2 ρ̄] × [c★, c3 θ̄]`, `S = {ρ̃ ≥ 0, θ̃ ≥ c★} \ R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoercivitySets<T> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub rho_lo: T,
    pub rho_hi: T,
    pub theta_hi: T,
    pub c_star: T,
}

impl<T: Scalar> CoercivitySets<T> {
    pub fn new(params: &FluidParams<T>, bounds: &Bounds<T>, c1: T, c2: T, c3: T) -> Result<Self, RelEnergyError> {
        bounds.validate(params.c_star)?;
        if !(c1 > T::zero() && c1 <= c2 && c2.is_finite()) {
            return Err(RelEnergyError::InvalidConstants(format!(
                "need 0 < c1 <= c2, got {c1}, {c2}"
            )));
        }
        if !(c3 * bounds.theta_max >= params.c_star) || !c3.is_finite() {
            return Err(RelEnergyError::InvalidConstants(format!(
                "need c3 >= c_star/theta_max = {}, got {c3}",
                params.c_star / bounds.theta_max
            )));
        }
        Ok(Self {
            c1,
            c2,
            c3,
            rho_lo: c1 * bounds.rho_min,
            rho_hi: c2 * bounds.rho_max,
            theta_hi: c3 * bounds.theta_max,
            c_star: params.c_star,
        })
    }

    pub fn classify(&self, rho_t: T, theta_t: T) -> Region {
        if !(rho_t >= T::zero() && theta_t >= self.c_star) {
            Region::Inadmissible
        } else if rho_t >= self.rho_lo && rho_t <= self.rho_hi && theta_t <= self.theta_hi {
            Region::Near
        } else {
            Region::Far
        }
    }

    pub fn in_near(&self, rho_t: T, theta_t: T) -> bool {
        self.classify(rho_t, theta_t) == Region::Near
    }

    pub fn in_far(&self, rho_t: T, theta_t: T) -> bool {
        self.classify(rho_t, theta_t) == Region::Far
    }
}

/// Explicit lower bounds for `F/a` on the three pieces of the far set,
/// each of the form `A + B·(ρ̃θ̃)^γ`. Used to steer the constant search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FarLowerBounds<T> {
    /// `ρ̃ < c1 ρ̲`: constant part; the `X^γ` coefficient is `1/(2(γ-1))`.
    pub small_rho_const: T,
    /// `ρ̃ > c2 ρ̄`: coefficient of `X^γ/(γ-1)`.
    pub large_rho_coef: T,
    /// `c1 ρ̲ ≤ ρ̃ ≤ c2 ρ̄`, `θ̃ > c3 θ̄`: coefficient of `X^γ/(γ-1)`.
    pub large_theta_coef: T,
    /// `min (ρθ)^γ` over the reference box.
    pub base: T,
}

struct BoundData<T> {
    gamma: T,
    gm1: T,
    k: T,
    base: T,
    lam: T,
}

impl<T: Scalar> BoundData<T> {
    fn new(params: &FluidParams<T>, b: &Bounds<T>) -> Self {
        let gamma = params.gamma;
        let gm1 = params.gm1();
        Self {
            gamma,
            gm1,
            k: b.rho_max.powf(gm1) * b.theta_max.powf(gamma),
            base: (b.rho_min * b.theta_min).powf(gamma),
            lam: b.theta_min.ln().abs().max(b.theta_max.ln().abs()),
        }
    }

    fn small_rho_const(&self, c1: T, b: &Bounds<T>) -> T {
        let (g, gm1, one, two) = (self.gamma, self.gm1, T::one(), T::lit(2.0));
        let r = c1 * b.rho_min;
        let q = two * g / (two * g - one);
        let young =
            (two * g - one) / (two * g) * g.powf(-one / (two * g - one)) * (g * self.k).powf(q) * r.powf(q / two);
        self.base - g / gm1 * self.k * r * (one + self.lam) - young / gm1
    }

    fn large_rho_coef(&self, c2: T, c_star: T, b: &Bounds<T>) -> T {
        let g = self.gamma;
        T::one() - g * c2.powf(T::one() - g) * (b.theta_max / c_star).powf(g) * (T::one() + self.lam + c_star.sqrt())
    }

    fn large_theta_coef(&self, c1: T, c3: T, b: &Bounds<T>) -> T {
        let g = self.gamma;
        T::one()
            - g * (b.rho_max / (c1 * b.rho_min)).powf(self.gm1)
                * c3.powf(-g)
                * (T::one() + self.lam + (c3 * b.theta_max).sqrt())
    }
}

impl<T: Scalar> FarLowerBounds<T> {
    pub fn new(params: &FluidParams<T>, bounds: &Bounds<T>, sets: &CoercivitySets<T>) -> Self {
        let d = BoundData::new(params, bounds);
        Self {
            small_rho_const: d.small_rho_const(sets.c1, bounds),
            large_rho_coef: d.large_rho_coef(sets.c2, params.c_star, bounds),
            large_theta_coef: d.large_theta_coef(sets.c1, sets.c3, bounds),
            base: d.base,
        }
    }

    pub fn all_positive(&self) -> bool {
        self.small_rho_const > T::zero() && self.large_rho_coef > T::zero() && self.large_theta_coef > T::zero()
    }

    /// Lower bound for `F` at a far sample.
    pub fn eval(&self, params: &FluidParams<T>, sets: &CoercivitySets<T>, rho_t: T, theta_t: T) -> T {
        let xg = (rho_t * theta_t).powf(params.gamma);
        let gm1 = params.gm1();
        let v = if rho_t < sets.rho_lo {
            self.small_rho_const + xg / (T::lit(2.0) * gm1)
        } else if rho_t > sets.rho_hi {
            self.base + self.large_rho_coef * xg / gm1
        } else {
            self.base + self.large_theta_coef * xg / gm1
        };
        params.a * v
    }
}

/// Picks `c1` (halving), `c2` and `c3` (doubling) until every far-set lower
/// bound is positive.
pub fn search_constants<T: Scalar>(
    params: &FluidParams<T>,
    bounds: &Bounds<T>,
) -> Result<CoercivitySets<T>, RelEnergyError> {
    bounds.validate(params.c_star)?;
    let d = BoundData::new(params, bounds);
    let two = T::lit(2.0);
    let exhausted = |what: &str, value: T| RelEnergyError::SearchExhausted {
        detail: format!("{what} search did not converge (last value {value})"),
    };

    let mut c1 = T::one();
    let mut steps = 0;
    while !(d.small_rho_const(c1, bounds) > T::zero()) {
        c1 /= two;
        steps += 1;
        if steps > MAX_SEARCH_STEPS {
            return Err(exhausted("c1", c1));
        }
    }
    let mut c2 = T::one();
    steps = 0;
    while !(d.large_rho_coef(c2, params.c_star, bounds) > T::zero()) {
        c2 *= two;
        steps += 1;
        if steps > MAX_SEARCH_STEPS {
            return Err(exhausted("c2", c2));
        }
    }
    let mut c3 = T::one().max(params.c_star / bounds.theta_max);
    steps = 0;
    while !(d.large_theta_coef(c1, c3, bounds) > T::zero()) {
        c3 *= two;
        steps += 1;
        if steps > MAX_SEARCH_STEPS {
            return Err(exhausted("c3", c3));
        }
    }
    CoercivitySets::new(params, bounds, c1, c2, c3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingSpec {
    /// Log-spaced density samples.
    pub n_rho: usize,
    /// Log-spaced temperature samples.
    pub n_theta: usize,
    /// Reference grid is `n_ref × n_ref` over the bounds box.
    pub n_ref: usize,
    /// Fresh random samples for the independent check.
    pub fresh_samples: usize,
    pub seed: u64,
    /// `c4` is reported as this fraction of the sampled minimum.
    pub safety: f64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            n_rho: 160,
            n_theta: 96,
            n_ref: 5,
            fresh_samples: 100_000,
            seed: 7,
            safety: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleReport<T> {
    pub rho_t: T,
    pub theta_t: T,
    pub rho: T,
    pub theta: T,
    pub region: Region,
    pub f: T,
    pub ratio: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityCertificate<T> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub c4: T,
    pub sampled_min: T,
    pub safety_factor: f64,
    pub samples: usize,
    pub min_location: Option<SampleReport<T>>,
    pub fresh_samples: usize,
    pub fresh_min_ratio: T,
    pub fresh_violations: usize,
    pub first_fresh_violation: Option<SampleReport<T>>,
    /// Far samples where `F` fell below the explicit lower bound (expected 0).
    pub lower_bound_violations: usize,
    pub far_bounds: FarLowerBounds<T>,
    pub gamma: T,
    pub a: T,
    pub c_star: T,
    pub bounds: Bounds<T>,
    pub passed: bool,
}

/// `F` divided by the demand of the sample's region, or `None` for
/// inadmissible or coincident samples.
pub fn coercivity_ratio<T: Scalar>(
    params: &FluidParams<T>,
    sets: &CoercivitySets<T>,
    rho_t: T,
    theta_t: T,
    rho: T,
    theta: T,
) -> Result<Option<SampleReport<T>>, RelEnergyError> {
    let region = sets.classify(rho_t, theta_t);
    if region == Region::Inadmissible {
        return Ok(None);
    }
    let s_t = thermo::entropy(rho_t, theta_t, params)?;
    let s = rho / params.gm1() * (params.a.ln() + params.gamma * theta.ln());
    let f = relative_pressure_potential(rho_t, s_t, rho, s, params)?;
    let demand = match region {
        Region::Near => {
            let q = (rho_t - rho).powi(2) + (s_t - s).powi(2);
            if q.sqrt() < T::lit(COINCIDENCE_RADIUS) {
                return Ok(None);
            }
            q
        }
        _ => T::one() + (rho_t * theta_t).powf(params.gamma),
    };
    Ok(Some(SampleReport {
        rho_t,
        theta_t,
        rho,
        theta,
        region,
        f,
        ratio: f / demand,
    }))
}

fn linspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n <= 1 || lo == hi {
        return vec![lo];
    }
    let step = (hi - lo) / T::from_usize_lossy(n - 1);
    let mut v: Vec<T> = (0..n).map(|k| lo + step * T::from_usize_lossy(k)).collect();
    v[n - 1] = hi;
    v
}

fn logspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(T::exp).collect()
}

fn sorted_unique<T: Scalar>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    v.dedup();
    v
}

/// Tilde-sample axes: log-spaced up to ten times the near-set caps, the
/// near-set boundaries exactly, and a linear layer over the bounds box.
fn sample_axes<T: Scalar>(
    params: &FluidParams<T>,
    bounds: &Bounds<T>,
    sets: &CoercivitySets<T>,
    spec: &SamplingSpec,
) -> (Vec<T>, Vec<T>) {
    let ten = T::lit(10.0);
    let mut rho = logspace(sets.rho_lo * T::lit(1e-3), ten * sets.rho_hi, spec.n_rho);
    rho.extend([T::zero(), sets.rho_lo, sets.rho_hi, bounds.rho_min, bounds.rho_max]);
    rho.extend(linspace(sets.rho_lo, T::lit(2.0) * bounds.rho_max, 4 * spec.n_ref + 1));
    let mut theta = logspace(params.c_star, ten * sets.theta_hi, spec.n_theta);
    theta.extend([params.c_star, sets.theta_hi, bounds.theta_max]);
    theta.extend(linspace(
        params.c_star,
        T::lit(2.0) * bounds.theta_max,
        4 * spec.n_ref + 1,
    ));
    if bounds.theta_min >= params.c_star {
        theta.push(bounds.theta_min);
    }
    (sorted_unique(rho), sorted_unique(theta))
}

fn min_report<T: Scalar>(a: Option<SampleReport<T>>, b: Option<SampleReport<T>>) -> Option<SampleReport<T>> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.ratio < x.ratio { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Minimum ratio over the tilde grid and every reference point, in a fixed
/// reduction order.
pub fn sampled_minimum<T: Scalar>(
    params: &FluidParams<T>,
    sets: &CoercivitySets<T>,
    references: &[(T, T)],
    rho_axis: &[T],
    theta_axis: &[T],
) -> Result<(Option<SampleReport<T>>, usize), RelEnergyError> {
    let per_rho: Vec<Result<(Option<SampleReport<T>>, usize), RelEnergyError>> = rho_axis
        .par_iter()
        .map(|&rt| {
            let mut best = None;
            let mut count = 0;
            for &(r, th) in references {
                for &tt in theta_axis {
                    if let Some(rep) = coercivity_ratio(params, sets, rt, tt, r, th)? {
                        count += 1;
                        best = min_report(best, Some(rep));
                    }
                }
            }
            Ok((best, count))
        })
        .collect();
    let mut best = None;
    let mut count = 0;
    for r in per_rho {
        let (b, c) = r?;
        best = min_report(best, b);
        count += c;
    }
    Ok((best, count))
}

/// Far samples on which `F` drops below the explicit lower bound.
fn lower_bound_violations<T: Scalar>(
    params: &FluidParams<T>,
    sets: &CoercivitySets<T>,
    lb: &FarLowerBounds<T>,
    references: &[(T, T)],
    rho_axis: &[T],
    theta_axis: &[T],
) -> Result<usize, RelEnergyError> {
    let counts: Vec<Result<usize, RelEnergyError>> = rho_axis
        .par_iter()
        .map(|&rt| {
            let mut n = 0;
            for &(r, th) in references {
                for &tt in theta_axis {
                    if let Some(rep) = coercivity_ratio(params, sets, rt, tt, r, th)? {
                        if rep.region == Region::Far {
                            let bound = lb.eval(params, sets, rt, tt);
                            if rep.f < bound * (T::one() - T::tol(1e-12)) {
                                n += 1;
                            }
                        }
                    }
                }
            }
            Ok(n)
        })
        .collect();
    counts.into_iter().sum()
}

/// Fresh random samples: a third log-uniform over the whole sampled range,
/// a third uniform over the near set, a third within ±50% of the reference.
fn fresh_check<T: Scalar>(
    params: &FluidParams<T>,
    bounds: &Bounds<T>,
    sets: &CoercivitySets<T>,
    c4: T,
    n: usize,
    seed: u64,
) -> Result<(T, usize, Option<SampleReport<T>>), RelEnergyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo_r = (sets.rho_lo * T::lit(1e-3)).as_f64().ln();
    let hi_r = (T::lit(10.0) * sets.rho_hi).as_f64().ln();
    let lo_t = params.c_star.as_f64().ln();
    let hi_t = (T::lit(10.0) * sets.theta_hi).as_f64().ln();
    let span = |rng: &mut ChaCha8Rng, lo: T, hi: T| {
        if hi > lo {
            T::lit(rng.gen_range(lo.as_f64()..=hi.as_f64()))
        } else {
            lo
        }
    };
    let mut draws = Vec::with_capacity(n);
    for k in 0..n {
        let rho = span(&mut rng, bounds.rho_min, bounds.rho_max);
        let theta = span(&mut rng, bounds.theta_min, bounds.theta_max);
        let (rt, tt) = match k % 3 {
            0 => (
                T::lit(rng.gen_range(lo_r..hi_r).exp()),
                T::lit(rng.gen_range(lo_t..hi_t).exp()),
            ),
            1 => (
                span(&mut rng, sets.rho_lo, sets.rho_hi),
                span(&mut rng, sets.c_star, sets.theta_hi),
            ),
            _ => (
                rho * T::lit(rng.gen_range(0.5..1.5)),
                (theta * T::lit(rng.gen_range(0.5..1.5))).max(params.c_star),
            ),
        };
        draws.push((rt, tt, rho, theta));
    }
    let results: Vec<Result<Option<SampleReport<T>>, RelEnergyError>> = draws
        .par_iter()
        .map(|&(rt, tt, r, th)| coercivity_ratio(params, sets, rt, tt, r, th))
        .collect();
    let mut min_ratio = T::infinity();
    let mut violations = 0;
    let mut first = None;
    for r in results {
        if let Some(rep) = r? {
            min_ratio = min_ratio.min(rep.ratio);
            if rep.ratio < c4 {
                violations += 1;
                first.get_or_insert(rep);
            }
        }
    }
    Ok((min_ratio, violations, first))
}

/// Evaluates the certificate for given sets: sampled minimum, `c4`, and
/// the fresh-sample check.
pub fn certify_with_sets<T: Scalar>(
    params: &FluidParams<T>,
    bounds: &Bounds<T>,
    sets: &CoercivitySets<T>,
    spec: &SamplingSpec,
) -> Result<CoercivityCertificate<T>, RelEnergyError> {
    let references = bounds.reference_grid(spec.n_ref);
    let (rho_axis, theta_axis) = sample_axes(params, bounds, sets, spec);
    let (min_loc, samples) = sampled_minimum(params, sets, &references, &rho_axis, &theta_axis)?;
    let far_bounds = FarLowerBounds::new(params, bounds, sets);
    let lb_violations = lower_bound_violations(params, sets, &far_bounds, &references, &rho_axis, &theta_axis)?;
    let sampled_min = min_loc.map(|m| m.ratio).unwrap_or(T::zero());
    let c4 = T::lit(spec.safety) * sampled_min;
    let (fresh_min_ratio, fresh_violations, first_fresh_violation) =
        fresh_check(params, bounds, sets, c4, spec.fresh_samples, spec.seed.wrapping_add(1))?;
    Ok(CoercivityCertificate {
        c1: sets.c1,
        c2: sets.c2,
        c3: sets.c3,
        c4,
        sampled_min,
        safety_factor: spec.safety,
        samples,
        min_location: min_loc,
        fresh_samples: spec.fresh_samples,
        fresh_min_ratio,
        fresh_violations,
        first_fresh_violation,
        lower_bound_violations: lb_violations,
        far_bounds,
        gamma: params.gamma,
        a: params.a,
        c_star: params.c_star,
        bounds: *bounds,
        passed: c4 > T::zero() && fresh_violations == 0,
    })
}

/// Searches the set constants, then certifies `c4` by sampling.
pub fn verify_coercivity<T: Scalar>(
    params: &FluidParams<T>,
    bounds: &Bounds<T>,
    spec: &SamplingSpec,
) -> Result<CoercivityCertificate<T>, RelEnergyError> {
    let sets = search_constants(params, bounds)?;
    let cert = certify_with_sets(params, bounds, &sets, spec)?;
    if !(cert.sampled_min > T::zero()) {
        return Err(RelEnergyError::SearchExhausted {
            detail: format!("non-positive coercivity ratio at {:?}", cert.min_location),
        });
    }
    Ok(cert)
}
