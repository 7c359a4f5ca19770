use clocksync::experiments::{default_grid, Protocol, SweepOptions};
use clocksync::steadystate::lyapunov_residual;
use clocksync::{solve_lyapunov, sweep_coupling, PhysicalParams, SweepRow};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn stable_system() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (2usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0..5.0f64, n * n),
            prop::collection::vec(-2.0..2.0f64, n * n),
            0.01..2.0f64,
        )
            .prop_map(move |(b, c, margin)| {
                let b = DMatrix::from_vec(n, n, b);
                let shift = b
                    .complex_eigenvalues()
                    .iter()
                    .map(|z| z.re)
                    .fold(f64::NEG_INFINITY, f64::max);
                let a = b - DMatrix::identity(n, n) * (shift + margin);
                let c = DMatrix::from_vec(n, n, c);
                let d = &c * c.transpose() + DMatrix::identity(n, n) * 1e-3;
                (a, d)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn lyapunov_residual_and_psd((a, d) in stable_system()) {
        let v = solve_lyapunov(&a, &d).unwrap();
        prop_assert!(lyapunov_residual(&a, &v, &d) <= 1e-8 * d.norm());
        prop_assert_eq!(&v, &v.transpose());
        let min = v.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min >= -1e-10 * v.norm(), "min eigenvalue {}", min);
    }
}

fn analytic_sweep() -> Vec<SweepRow> {
    let opts = SweepOptions {
        protocol: Protocol::Analytic,
        ..SweepOptions::default()
    };
    sweep_coupling(&PhysicalParams::paper(), &default_grid(), &opts).unwrap()
}

#[test]
fn second_law_and_cooling_across_sweep() {
    for r in analytic_sweep() {
        assert!(r.pi_s >= 0.0, "g={} pi_s={}", r.g_over_kappa, r.pi_s);
        if r.g_over_kappa > 0.0 {
            assert!(r.mu_b1 < 0.0 && r.mu_b2 < 0.0, "g={}", r.g_over_kappa);
            assert!(r.mu_a > 0.0);
        }
    }
}

#[test]
fn cavity_and_phonon_fluxes_turn_together() {
    let rows = analytic_sweep();
    let argmax = |f: &dyn Fn(&SweepRow) -> f64| {
        rows.iter()
            .enumerate()
            .max_by(|a, b| f(a.1).total_cmp(&f(b.1)))
            .map(|(i, _)| i)
            .unwrap()
    };
    let ka = argmax(&|r| r.mu_a);
    let kb = argmax(&|r| (r.mu_b1 + r.mu_b2).abs());
    assert!(ka.abs_diff(kb) <= 1, "mu_a peaks at {ka}, |mu_b| at {kb}");
    assert!(ka > 0 && ka < rows.len() - 1);
}

#[test]
fn photonic_flux_scale() {
    let max = analytic_sweep().iter().map(|r| r.mu_a).fold(0.0, f64::max);
    assert!(max > 1e11 && max < 1e13, "{max}");
}

#[test]
fn thermal_mode_is_exact() {
    let (g, n) = (3.7, 12.25);
    let a = DMatrix::from_row_slice(2, 2, &[-g / 2.0, 5.0, -5.0, -g / 2.0]);
    let d = DMatrix::identity(2, 2) * (g * (n + 0.5));
    let v = solve_lyapunov(&a, &d).unwrap();
    let expected = DMatrix::identity(2, 2) * (n + 0.5);
    assert!((v - expected).amax() <= 1e-12 * (n + 0.5));
}
