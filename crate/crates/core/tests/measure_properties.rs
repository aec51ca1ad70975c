use dmv_core::field::{ConservedState, Grid2D, Primitive};
use dmv_core::mvmeasure::{
    ensemble_from_refinement, infer_defects, validate, Atom, CellMeasure, DefectFields, MeasureField, Observable,
    ViolationKind,
};
use dmv_core::thermo::FluidParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> FluidParams<f64> {
    FluidParams::new(1.4, 1.0, 0.01, 0.0, 0.5).unwrap()
}

fn random_cell(rng: &mut ChaCha8Rng) -> CellMeasure<f64> {
    let n = rng.gen_range(1..6);
    let atoms = (0..n)
        .map(|_| {
            Atom::new(
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.1..3.0),
                rng.gen_range(0.5..3.0),
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            )
        })
        .collect();
    CellMeasure::from_unnormalized(atoms).unwrap()
}

fn components(c: &CellMeasure<f64>, g: Observable) -> Vec<f64> {
    c.expectation(g, &params()).unwrap().components()
}

#[test]
fn expectation_is_linear_in_the_measure() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (a, b) = (random_cell(&mut rng), random_cell(&mut rng));
        let w = rng.gen_range(0.05..0.95);
        let mix = CellMeasure::mixture(&a, w, &b).unwrap();
        for g in Observable::ALL {
            let (ea, eb, em) = (components(&a, g), components(&b, g), components(&mix, g));
            for k in 0..em.len() {
                let expect = w * ea[k] + (1.0 - w) * eb[k];
                let scale = 1.0 + ea[k].abs().max(eb[k].abs());
                assert!((em[k] - expect).abs() <= 1e-14 * scale, "{g}: {} vs {expect}", em[k]);
            }
        }
    }
}

#[test]
fn affine_observables_equal_their_value_at_the_barycentre() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let c = random_cell(&mut rng);
        let mut rho = 0.0;
        let mut w_bar = 0.0;
        let mut m = [0.0; 2];
        let mut u = [0.0; 2];
        for a in c.atoms() {
            rho += a.weight * a.rho;
            w_bar += a.weight * a.rho * a.theta;
            for d in 0..2 {
                m[d] += a.weight * a.rho * a.u[d];
                u[d] += a.weight * a.u[d];
            }
        }
        let conserved = Atom::new(1.0, rho, w_bar / rho, [m[0] / rho, m[1] / rho]);
        for g in [Observable::Density, Observable::Momentum, Observable::RhoTheta] {
            assert!(g.is_affine());
            let lhs = components(&c, g);
            let rhs = g.eval(&conserved, &p).unwrap().components();
            for k in 0..lhs.len() {
                assert!((lhs[k] - rhs[k]).abs() <= 1e-14 * (1.0 + rhs[k].abs()));
            }
        }
        let bary_u = Atom::new(1.0, 1.0, 1.0, u);
        let lhs = components(&c, Observable::Velocity);
        let rhs = Observable::Velocity.eval(&bary_u, &p).unwrap().components();
        assert!((lhs[0] - rhs[0]).abs() <= 1e-15 && (lhs[1] - rhs[1]).abs() <= 1e-15);
    }
    assert!(!Observable::EnergyDensity.is_affine());
}

#[test]
fn checkerboard_ensemble_moments() {
    let fine = Grid2D::unit_square(8).unwrap();
    let coarse = Grid2D::unit_square(4).unwrap();
    let state = ConservedState::from_primitive(fine, {
        let mut k = 0usize;
        move |_| {
            let (i, j) = fine.ij(k);
            k += 1;
            Primitive {
                rho: if (i + j) % 2 == 0 { 1.0 } else { 3.0 },
                theta: 1.0,
                u: [0.0, 0.0],
            }
        }
    });
    let m = ensemble_from_refinement(&[state], &coarse).unwrap();
    let p = params();
    for cell in m.cells() {
        assert_eq!(cell.atoms().len(), 4);
        assert!((cell.expect_scalar(Observable::Density, &p).unwrap() - 2.0).abs() < 1e-15);
        assert!((cell.expect_scalar(Observable::DensitySquared, &p).unwrap() - 5.0).abs() < 1e-15);
    }
    // Density oscillation at rest stores energy that the barycentre misses.
    let d = infer_defects(&m, &p).unwrap();
    assert!(d.e_def.min() > 0.0);
    assert!(d.r_def.values().iter().all(|r| r.iter().flatten().all(|v| *v == 0.0)));
}

fn valid_field() -> (MeasureField<f64>, DefectFields<f64>) {
    let g = Grid2D::unit_square(4).unwrap();
    let cell = CellMeasure::new(vec![
        Atom::new(0.5, 1.0, 1.0, [0.2, 0.0]),
        Atom::new(0.5, 1.2, 0.8, [-0.2, 0.1]),
    ])
    .unwrap();
    let m = MeasureField::new(g, vec![cell; g.len()]).unwrap();
    let mut d = DefectFields::zeros(g, 2);
    d.e_def.values_mut().iter_mut().for_each(|v| *v = 1.0);
    d.r_def
        .values_mut()
        .iter_mut()
        .for_each(|r| *r = [[0.75, 0.0], [0.0, 0.75]]);
    (m, d)
}

#[test]
fn validate_flags_every_constructed_violation() {
    let p = params();
    let (m, d) = valid_field();
    assert!(validate(&m, &d, &p).is_valid());

    let cases: Vec<(
        ViolationKind,
        Box<dyn Fn(&mut MeasureField<f64>, &mut DefectFields<f64>)>,
    )> = vec![
        (
            ViolationKind::ThetaBelowFloor,
            Box::new(|m, _| {
                m.cells_mut()[5] = CellMeasure::new_unchecked(vec![Atom::new(1.0, 1.0, 0.3, [0.0; 2])]);
            }),
        ),
        (
            ViolationKind::WeightSum,
            Box::new(|m, _| {
                m.cells_mut()[5] = CellMeasure::new_unchecked(vec![Atom::new(0.7, 1.0, 1.0, [0.0; 2])]);
            }),
        ),
        (
            ViolationKind::NonpositiveWeight,
            Box::new(|m, _| {
                m.cells_mut()[5] = CellMeasure::new_unchecked(vec![
                    Atom::new(1.5, 1.0, 1.0, [0.0; 2]),
                    Atom::new(-0.5, 1.0, 1.0, [0.0; 2]),
                ]);
            }),
        ),
        (
            ViolationKind::NegativeDensity,
            Box::new(|m, _| {
                m.cells_mut()[5] = CellMeasure::new_unchecked(vec![Atom::new(1.0, -0.1, 1.0, [0.0; 2])]);
            }),
        ),
        (
            ViolationKind::EmptyCell,
            Box::new(|m, _| m.cells_mut()[5] = CellMeasure::new_unchecked(Vec::new())),
        ),
        (
            ViolationKind::NonFinite,
            Box::new(|m, _| {
                m.cells_mut()[5] = CellMeasure::new_unchecked(vec![Atom::new(1.0, f64::NAN, 1.0, [0.0; 2])]);
            }),
        ),
        (
            ViolationKind::ReynoldsNotPsd,
            Box::new(|_, d| d.r_def.values_mut()[5] = [[2.0, 0.0], [0.0, -0.5]]),
        ),
        (
            ViolationKind::ReynoldsAsymmetric,
            Box::new(|_, d| d.r_def.values_mut()[5] = [[0.75, 0.1], [0.0, 0.75]]),
        ),
        (
            ViolationKind::TraceBelowLower,
            Box::new(|_, d| d.r_def.values_mut()[5] = [[0.25, 0.0], [0.0, 0.25]]),
        ),
        (
            ViolationKind::TraceAboveUpper,
            Box::new(|_, d| d.r_def.values_mut()[5] = [[1.5, 0.0], [0.0, 1.0]]),
        ),
        (
            ViolationKind::NegativeEnergyDefect,
            Box::new(|_, d| {
                d.e_def.values_mut()[5] = -1.0;
                d.r_def.values_mut()[5] = [[0.0; 2]; 2];
            }),
        ),
        (
            ViolationKind::NegativeDissipationDefect,
            Box::new(|_, d| d.d_def.values_mut()[5] = -1e-3),
        ),
        (ViolationKind::TraceConstants, Box::new(|_, d| d.d_lo = 3.0)),
    ];
    for (kind, mutate) in cases {
        let (mut m, mut d) = valid_field();
        mutate(&mut m, &mut d);
        let report = validate(&m, &d, &p);
        assert!(report.has(kind), "{kind:?} not flagged: {:?}", report.violations);
        if kind != ViolationKind::TraceConstants {
            assert!(report.at(1, 1).any(|v| v.kind == kind), "{kind:?} at wrong cell");
        }
    }

    let (m, _) = valid_field();
    let other = DefectFields::zeros(Grid2D::unit_square(8).unwrap(), 2);
    assert!(validate(&m, &other, &p).has(ViolationKind::GridMismatch));
}
