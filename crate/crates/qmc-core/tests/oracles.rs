//! Cross-module agreement checks: the three probability engines (exact
//! channel evolution, exact path enumeration, Monte Carlo sampling) against
//! each other, the closed form against both coherent paths, and the
//! long-product equilibration of sampled kernel sequences.

use qmc_core::analysis::closed_form_series;
use qmc_core::compound::{
    enumerate_paths, mc_estimate, q_matrix, w_matrix, MeasurementTimeline, RngStream,
};
use qmc_core::model::{
    evolve, pure_evolve_fast, DecoherenceParams, DensityMatrix, GeneratorSpec, ScheduleForm,
    ScheduleParams,
};

#[test]
fn three_engines_agree_on_small_instances() {
    for (dim, lambda, zeta, p, t) in [
        (2usize, 1.0, 0.5, 0.4, 6u64),
        (3, 0.5, 1.0, 0.7, 5),
        (2, 0.8, 0.0, 1.0, 4),
    ] {
        let gen = GeneratorSpec::fully_connected(dim, lambda).unwrap();
        let sched = ScheduleParams::exponential(zeta).unwrap();
        let dec = DecoherenceParams::new(p).unwrap();
        let rho = DensityMatrix::basis_state(dim, 0).unwrap();
        let exact = evolve(&rho, &gen, &sched, &dec, t, false).unwrap();
        let est =
            mc_estimate(0, &gen, &sched, &dec, t, 20_000, RngStream::new(99, 0)).unwrap();
        for j in 0..dim {
            let enumerated = enumerate_paths(0, j, &gen, &sched, &dec, t).unwrap();
            assert!(
                (enumerated - exact.last()[j]).abs() <= 1e-10,
                "enumeration vs evolution at site {j}"
            );
            let err = (est.estimates()[j] - exact.last()[j]).abs();
            assert!(
                err <= 4.0 * est.std_errors()[j].max(1e-12),
                "Monte Carlo at site {j}: error {err}"
            );
        }
    }
}

#[test]
fn square_root_coin_schedule_agrees_across_engines() {
    let gen = GeneratorSpec::fully_connected(2, 0.5).unwrap();
    let sched = ScheduleParams::new(0.7, ScheduleForm::SqrtCoin).unwrap();
    let dec = DecoherenceParams::new(0.3).unwrap();
    let rho = DensityMatrix::basis_state(2, 1).unwrap();
    let exact = evolve(&rho, &gen, &sched, &dec, 6, false).unwrap();
    for j in 0..2 {
        let enumerated = enumerate_paths(1, j, &gen, &sched, &dec, 6).unwrap();
        assert!((enumerated - exact.last()[j]).abs() <= 1e-10);
    }
}

#[test]
fn coherent_paths_and_closed_form_coincide() {
    let lambda = 1.0;
    let zeta = 1.0;
    let t = 2000u64;
    let gen = GeneratorSpec::fully_connected(2, lambda).unwrap();
    let sched = ScheduleParams::exponential(zeta).unwrap();
    let dec = DecoherenceParams::new(0.0).unwrap();
    let rho = DensityMatrix::basis_state(2, 0).unwrap();
    let slow = evolve(&rho, &gen, &sched, &dec, t, false).unwrap();
    let fast = pure_evolve_fast(0, &gen, &sched, t).unwrap();
    let closed = closed_form_series(lambda, zeta, t);
    for n in 0..=t as usize {
        assert!((slow.step(n)[0] - fast.step(n)[0]).abs() <= 1e-10);
        assert!((slow.step(n)[0] - closed[n]).abs() <= 1e-10);
    }
}

/// Long kernel products settle onto the uniform matrix: by roughly 5000
/// measurements the running product (terminal kernel included) sits within
/// 0.01 of 1/m entrywise, for 20 independent timelines.
#[test]
fn kernel_products_equilibrate_along_sampled_timelines() {
    let gen = GeneratorSpec::fully_connected(2, 1.0).unwrap();
    let g = gen.build();
    let horizon = 10_000u64;
    for seed in 0..20u64 {
        let tl =
            MeasurementTimeline::sample(0.5, horizon, RngStream::new(505, seed)).unwrap();
        assert!(tl.count() >= 4500, "timeline unexpectedly short");
        let mut product = qmc_core::compound::StochasticMatrix::identity(2);
        for (prev, gap) in tl.segments() {
            product = product.product(&q_matrix(&g, 0.5, prev, gap).unwrap());
        }
        let w = w_matrix(&g, 0.5, tl.last_arrival_within_horizon(), horizon).unwrap();
        product = product.product(&w);
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (product.at(i, j) - 0.5).abs() < 0.01,
                    "seed {seed}: entry ({i},{j}) = {}",
                    product.at(i, j)
                );
            }
        }
    }
}
