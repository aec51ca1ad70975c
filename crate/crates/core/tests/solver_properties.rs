use std::sync::Arc;

use dmv_core::field::Grid2D;
use dmv_core::relenergy::{entropy_integral_series, DmvHistory, Manufactured, PdeForcing, StrongSolution};
use dmv_core::solver::{run, InitialCondition, SmoothPerturbation, SolverConfig};
use dmv_core::thermo::FluidParams;
use proptest::prelude::*;

fn params() -> FluidParams<f64> {
    FluidParams::new(1.4, 1.0, 0.01, 0.0, 0.5).unwrap()
}

fn perturbed(n: usize, amplitude: f64, seed: u64, t_end: f64) -> SolverConfig<f64> {
    let init = InitialCondition::Perturbed(SmoothPerturbation {
        rho0: 1.0,
        theta0: 1.0,
        amplitude,
        modes: (1, 1),
        seed,
    });
    let mut cfg = SolverConfig::new(Grid2D::unit_square(n).unwrap(), params(), init);
    cfg.t_end = t_end;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mass_and_rhotheta_are_conserved_and_theta_stays_admissible(
        seed in 1u64..10_000,
        amplitude in 0.01f64..0.3,
        n in prop_oneof![Just(8usize), Just(16)],
    ) {
        let traj = run(&perturbed(n, amplitude, seed, 0.05)).unwrap();
        let m0 = traj.states[0].rho.integrate();
        let z0 = traj.states[0].z.integrate();
        let floor = params().c_star - 1e-12;
        for s in &traj.states {
            prop_assert!((s.rho.integrate() - m0).abs() <= 1e-12 * m0);
            prop_assert!((s.z.integrate() - z0).abs() <= 1e-12 * z0);
            prop_assert!(s.theta().min() >= floor);
        }
    }

    #[test]
    fn rho_log_theta_integral_never_decreases(seed in 1u64..10_000, amplitude in 0.01f64..0.2) {
        let mut cfg = perturbed(16, amplitude, seed, 0.05);
        cfg.output_every = 1;
        let h = DmvHistory::from_trajectory(&run(&cfg).unwrap()).unwrap();
        let s = entropy_integral_series(&h).unwrap();
        for w in s.windows(2) {
            prop_assert!(w[1] - w[0] >= -1e-10, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn theta_range_obeys_the_minimum_and_maximum_principle() {
    let traj = run(&perturbed(24, 0.2, 3, 0.1)).unwrap();
    let (lo, hi) = (traj.states[0].theta().min(), traj.states[0].theta().max());
    for s in &traj.states {
        let th = s.theta();
        assert!(th.min() >= lo - 1e-12 && th.max() <= hi + 1e-12);
    }
}

#[test]
fn forced_manufactured_solution_converges_at_first_order() {
    let p = params();
    let m = Manufactured {
        rho0: 1.0,
        theta0: 1.0,
        amp_rho: 0.1,
        amp_theta: 0.05,
        amp_u: 0.1,
        omega: 2.0,
        lx: 1.0,
        ly: 1.0,
    };
    let strong: Arc<dyn StrongSolution<f64>> = Arc::new(m);
    let errors: Vec<f64> = [16usize, 32, 64]
        .iter()
        .map(|&n| {
            let g = Grid2D::unit_square(n).unwrap();
            let mut cfg = SolverConfig::new(g, p, InitialCondition::State(strong.state_at(g, 0.0)));
            cfg.t_end = 0.1;
            cfg.forcing = Some(Arc::new(PdeForcing {
                strong: strong.clone(),
                params: p,
            }));
            let traj = run(&cfg).unwrap();
            let exact = strong.state_at(g, *traj.times.last().unwrap());
            let fin = traj.final_state();
            let diff: f64 = fin
                .rho
                .values()
                .iter()
                .zip(exact.rho.values())
                .chain(fin.z.values().iter().zip(exact.z.values()))
                .map(|(a, b)| (a - b).abs())
                .sum();
            diff * g.cell_area()
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.8, "errors {errors:?}");
    }
}

#[test]
fn seeded_initial_data_is_reproducible() {
    let a = run(&perturbed(8, 0.1, 42, 0.02)).unwrap();
    let b = run(&perturbed(8, 0.1, 42, 0.02)).unwrap();
    assert_eq!(a.final_state(), b.final_state());
    let c = run(&perturbed(8, 0.1, 43, 0.02)).unwrap();
    assert_ne!(a.states[0], c.states[0]);
}
