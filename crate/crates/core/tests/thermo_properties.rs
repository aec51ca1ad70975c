use dmv_core::relenergy::{relative_pressure_potential, relative_pressure_potential_theta};
use dmv_core::sym_eigenvalues;
use dmv_core::thermo::{self, FluidParams};
use proptest::prelude::*;

fn params(gamma: f64, a: f64, c_star: f64) -> FluidParams<f64> {
    FluidParams::thermo_only(gamma, a, c_star).unwrap()
}

fn gamma_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.4), Just(2.0), Just(5.0 / 3.0), 1.05f64..3.0]
}

/// Log-uniform positive value in `[lo, hi]`.
fn log_range(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

fn p_of(rho: f64, s: f64, p: &FluidParams<f64>) -> f64 {
    thermo::pressure_potential_rho_s(rho, s, p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn pressure_round_trips_through_entropy(
        gamma in gamma_strategy(),
        a in log_range(0.1, 10.0),
        rho in log_range(1e-3, 1e3),
        t in 0.0f64..1.0,
    ) {
        let p = params(gamma, a, 0.5);
        let theta = 0.5 + t * 99.5;
        let s = thermo::entropy(rho, theta, &p).unwrap();
        let lhs = thermo::pressure_rho_s(rho, s, &p).unwrap();
        let rhs = a * (rho * theta).powf(gamma);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        let back = thermo::theta_of_entropy(rho, s, &p).unwrap();
        prop_assert!((back - theta).abs() <= 1e-12 * theta);
    }

    #[test]
    fn potential_derivatives_match_central_differences(
        gamma in gamma_strategy(),
        rho in log_range(1e-2, 1e2),
        theta in 0.5f64..20.0,
    ) {
        let p = params(gamma, 1.0, 0.5);
        let s = thermo::entropy(rho, theta, &p).unwrap();
        let hr = 1e-5 * rho;
        let hs = 1e-5 * s.abs().max(rho);
        let fd_rho = (p_of(rho + hr, s, &p) - p_of(rho - hr, s, &p)) / (2.0 * hr);
        let fd_s = (p_of(rho, s + hs, &p) - p_of(rho, s - hs, &p)) / (2.0 * hs);
        let d_rho = thermo::pressure_potential_drho(rho, s, &p).unwrap();
        let d_s = thermo::pressure_potential_ds(rho, s, &p).unwrap();
        // Scale by the magnitude of the potential's local variation so sign
        // changes of ∂P/∂ρ do not blow up the relative error.
        let scale_rho = d_rho.abs().max(p_of(rho, s, &p) / rho);
        prop_assert!((fd_rho - d_rho).abs() <= 1e-6 * scale_rho, "{} {}", fd_rho, d_rho);
        prop_assert!((fd_s - d_s).abs() <= 1e-6 * d_s.abs(), "{} {}", fd_s, d_s);
    }

    #[test]
    fn potential_hessian_is_positive_semidefinite(
        gamma in gamma_strategy(),
        rho in log_range(1e-2, 1e2),
        theta in 0.5f64..20.0,
    ) {
        let p = params(gamma, 1.0, 0.5);
        let s = thermo::entropy(rho, theta, &p).unwrap();
        let (hr, hs) = (1e-4 * rho, 1e-4 * rho);
        let f = |r: f64, q: f64| p_of(r, q, &p);
        let f0 = f(rho, s);
        let frr = (f(rho + hr, s) - 2.0 * f0 + f(rho - hr, s)) / (hr * hr);
        let fss = (f(rho, s + hs) - 2.0 * f0 + f(rho, s - hs)) / (hs * hs);
        let frs = (f(rho + hr, s + hs) - f(rho + hr, s - hs) - f(rho - hr, s + hs) + f(rho - hr, s - hs))
            / (4.0 * hr * hs);
        let (lo, hi) = sym_eigenvalues([[frr, frs], [frs, fss]]);
        prop_assert!(lo >= -1e-6 * hi.abs().max(1.0), "{} {}", lo, hi);
    }

    #[test]
    fn relative_potential_is_nonnegative(
        gamma in gamma_strategy(),
        rho_t in log_range(1e-4, 1e4),
        theta_t in log_range(0.5, 1e3),
        rho in log_range(1e-2, 1e2),
        theta in log_range(0.5, 1e2),
    ) {
        let p = params(gamma, 1.0, 0.5);
        let f = relative_pressure_potential_theta(rho_t, theta_t, rho, theta, &p).unwrap();
        prop_assert!(f >= -1e-12, "{}", f);
        let here = relative_pressure_potential_theta(rho, theta, rho, theta, &p).unwrap();
        prop_assert!(here.abs() <= 1e-14);
    }

    #[test]
    fn relative_potential_matches_its_definition(
        gamma in gamma_strategy(),
        rho_t in 0.2f64..5.0,
        theta_t in 0.5f64..5.0,
        rho in 0.2f64..5.0,
        theta in 0.5f64..5.0,
    ) {
        let p = params(gamma, 1.0, 0.5);
        let s_t = thermo::entropy(rho_t, theta_t, &p).unwrap();
        let s = thermo::entropy(rho, theta, &p).unwrap();
        let direct = p_of(rho_t, s_t, &p)
            - thermo::pressure_potential_drho(rho, s, &p).unwrap() * (rho_t - rho)
            - thermo::pressure_potential_ds(rho, s, &p).unwrap() * (s_t - s)
            - p_of(rho, s, &p);
        let stable = relative_pressure_potential(rho_t, s_t, rho, s, &p).unwrap();
        let scale = p_of(rho_t, s_t, &p) + p_of(rho, s, &p);
        prop_assert!((direct - stable).abs() <= 1e-11 * scale, "{} {}", direct, stable);
    }
}

#[test]
fn entropy_below_floor_is_a_domain_error() {
    let p = params(1.4, 1.0, 0.5);
    assert!(thermo::entropy(1.0, 0.49, &p).is_err());
    assert!(thermo::entropy(-1.0, 1.0, &p).is_err());
    assert!(relative_pressure_potential_theta(1.0, 0.4, 1.0, 1.0, &p).is_err());
}
