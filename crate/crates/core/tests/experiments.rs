use std::sync::OnceLock;

use clocksync::experiments::{linear_grid, spearman, Protocol, SweepOptions, TransientSetup};
use clocksync::metrics::EnsembleMoments;
use clocksync::trajectory::{run_ensemble_range, InitialState, Integrator, SimulationOptions};
use clocksync::{
    reduced_dynamics, sweep_coupling, transient_experiment, PhysicalParams, SweepRow,
    TransientExperiment,
};

const TRANSIENT_GRID: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];

fn transients() -> &'static [TransientExperiment] {
    static CELL: OnceLock<Vec<TransientExperiment>> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = PhysicalParams::paper();
        TRANSIENT_GRID
            .iter()
            .map(|&g| transient_experiment(&p, g, &TransientSetup::default(), 2024).unwrap())
            .collect()
    })
}

fn short_sweep(seed: u64) -> Vec<SweepRow> {
    let opts = SweepOptions {
        protocol: Protocol::Both,
        master_seed: seed,
        duration: 2.0,
        ..SweepOptions::default()
    };
    sweep_coupling(&PhysicalParams::paper(), &linear_grid(0.05, 11), &opts).unwrap()
}

fn bits(rows: &[SweepRow]) -> Vec<u64> {
    rows.iter()
        .flat_map(|r| {
            [
                r.g_over_kappa, r.c, r.c_err, r.d, r.n1, r.n2, r.gamma_plus, r.gamma_minus, r.ratio,
                r.mu_b1, r.mu_b2, r.mu_a, r.pi_s, r.analytic_c,
            ]
        })
        .map(f64::to_bits)
        .collect()
}

#[test]
fn sweep_trajectory_c_matches_analytic_and_repeats() {
    let rows = short_sweep(7);
    for r in &rows {
        assert!(
            (r.c - r.analytic_c).abs() < 3.0 * r.c_err,
            "g={}: {} ± {} vs {}",
            r.g_over_kappa,
            r.c,
            r.c_err,
            r.analytic_c
        );
        assert!(r.d.is_finite() && r.n1.is_finite() && r.n2.is_finite());
    }
    assert_eq!(bits(&rows), bits(&short_sweep(7)));
}

#[test]
fn quench_transients() {
    let runs = transients();
    let times: Vec<f64> = runs.iter().map(|e| e.result.transient_time).collect();
    assert!(times.windows(2).all(|w| w[1] < w[0]), "{times:?}");
    let at = |g: f64| runs.iter().find(|e| e.g_over_kappa == g).unwrap();
    assert!(at(0.04).plateau >= 0.9, "{}", at(0.04).plateau);
    assert!(at(0.01).overshoot() >= 0.05, "{}", at(0.01).overshoot());
    for e in runs {
        assert!(e.result.r.iter().all(|r| r.abs() <= 1.0 + 1e-12));
        let ness = [e.ness.mu_b1, e.ness.mu_b2, e.ness.mu_a];
        for ((mean, err), target) in e.tail_fluxes(0.2).iter().zip(ness) {
            assert!((mean - target).abs() < 3.0 * err, "g={}: {mean} ± {err} vs {target}", e.g_over_kappa);
        }
    }
}

// Faster synchronization costs a larger photonic entropy flux.
#[test]
fn faster_synchronization_needs_larger_flux() {
    let runs = transients();
    let times: Vec<f64> = runs.iter().map(|e| e.result.transient_time).collect();
    let rates: Vec<f64> = runs.iter().map(|e| e.mean_mu_a()).collect();
    assert!(spearman(&times, &rates) < 0.0, "{times:?} {rates:?}");
}

// The flux integrated up to the transient time stays nearly constant
// (μ_a grows like G² while the transient time shrinks like 1/G²), so the
// rank correlation comes out positive.
#[test]
#[ignore = "not reproduced: integrated flux is nearly constant across the grid"]
fn integrated_flux_grows_as_transient_time_falls() {
    let runs = transients();
    let times: Vec<f64> = runs.iter().map(|e| e.result.transient_time).collect();
    let integrated: Vec<f64> = runs.iter().map(|e| e.integrated_mu_a).collect();
    assert!(spearman(&times, &integrated) < 0.0, "{times:?} {integrated:?}");
}

#[test]
fn equilibrium_start_has_no_flux() {
    let p = PhysicalParams::paper().uncoupled();
    let d = reduced_dynamics(&p).unwrap();
    let mut opts = SimulationOptions::new(1e-3, 1e-5, Integrator::Exact);
    opts.initial = InitialState::UncoupledThermal;
    let ens = run_ensemble_range(&d, 0..400, &opts, 17).unwrap();
    let flux = EnsembleMoments::from_ensemble(&ens)
        .unwrap()
        .entropy_flux(&p, d.omega_bar)
        .unwrap();
    assert!(flux.mu_b1[0].abs() < 3.0 * flux.err_b1[0]);
    assert!(flux.mu_b2[0].abs() < 3.0 * flux.err_b2[0]);
    assert_eq!(flux.mu_a[0], 0.0);
}
