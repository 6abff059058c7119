//! Cross-module property suite behind the `verify` command.
//!
//! Each check exercises one structural identity of the model end to end:
//! double stochasticity of the measurement kernels, trace preservation of
//! the channel, agreement of the three probability engines (exact channel
//! evolution, exact path enumeration, Monte Carlo), the unitary semigroup
//! entry bounds, and the contraction bound for inhomogeneous kernel
//! products.

use num_complex::Complex64;
use rand::Rng;

use crate::classical::{convergence_report, semigroup_bounds_check, EquilibriumMatrix};
use crate::compound::{
    enumerate_paths, mc_estimate, q_matrix, w_matrix, MeasurementTimeline, RngStream,
    StochasticMatrix,
};
use crate::linalg::HermitianMatrix;
use crate::model::{
    apply_channel, evolve, DecoherenceParams, DensityMatrix, GeneratorSpec, ScheduleParams,
};
use crate::Result;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the full suite with a fixed seed; the report is deterministic.
pub fn run_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        double_stochasticity(seed)?,
        trace_preservation(seed)?,
        oracle_equivalence(seed)?,
        semigroup_bounds(seed)?,
        contraction_bound(seed)?,
    ])
}

fn double_stochasticity(seed: u64) -> Result<CheckOutcome> {
    let mut rng = RngStream::new(seed, 10).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let dim = rng.gen_range(2..=5);
        let lambda = 0.1 + 1.9 * rng.gen::<f64>();
        let zeta = 2.0 * rng.gen::<f64>();
        let sigma = rng.gen_range(0..1000u64);
        let gap = rng.gen_range(1..=30u64);
        let g = GeneratorSpec::fully_connected(dim, lambda)?.build();
        let q = q_matrix(&g, zeta, sigma, gap)?;
        let w = w_matrix(&g, zeta, sigma, sigma + gap)?;
        for m in [&q, &w] {
            worst = worst
                .max(m.max_row_sum_deviation())
                .max(m.max_col_sum_deviation());
        }
    }
    Ok(CheckOutcome {
        name: "double_stochasticity",
        passed: worst <= 1e-12,
        detail: format!("max row/column sum deviation {worst:.3e} over 1000 kernels"),
    })
}

fn trace_preservation(seed: u64) -> Result<CheckOutcome> {
    let mut rng = RngStream::new(seed, 11).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        let dim = rng.gen_range(2..=5);
        let lambda = 0.2 + 1.8 * rng.gen::<f64>();
        let p = rng.gen::<f64>();
        let gen = GeneratorSpec::fully_connected(dim, lambda)?;
        let u = crate::model::step_unitary(&gen.build(), rng.gen::<f64>(), rng.gen_range(1..50))?;
        let rho = random_density(dim, &mut rng)?;
        let out = apply_channel(&rho, &u, p)?;
        let tr = out.matrix().trace();
        worst = worst.max((tr.re - 1.0).abs()).max(tr.im.abs());
    }
    Ok(CheckOutcome {
        name: "trace_preservation",
        passed: worst <= 1e-12,
        detail: format!("max trace deviation {worst:.3e} over 300 channel applications"),
    })
}

fn random_density(dim: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<DensityMatrix> {
    // A A* normalised to unit trace is Hermitian and positive.
    let a = crate::linalg::ComplexMatrix::from_fn(dim, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let gram = a.mul(&a.adjoint());
    let trace = gram.trace().re;
    let normalised =
        crate::linalg::ComplexMatrix::from_fn(dim, |i, j| gram.at(i, j) / trace);
    DensityMatrix::new(normalised)
}

fn oracle_equivalence(seed: u64) -> Result<CheckOutcome> {
    let mut worst_exact: f64 = 0.0;
    for dim in [2usize, 3] {
        for t in 1..=5u64 {
            for &p in &[0.2, 0.7, 1.0] {
                for &zeta in &[0.0, 0.5, 1.0] {
                    for &lambda in &[0.5, 1.0] {
                        let gen = GeneratorSpec::fully_connected(dim, lambda)?;
                        let sched = ScheduleParams::exponential(zeta)?;
                        let dec = DecoherenceParams::new(p)?;
                        let rho = DensityMatrix::basis_state(dim, 0)?;
                        let exact = evolve(&rho, &gen, &sched, &dec, t, false)?;
                        for j in 0..dim {
                            let v = enumerate_paths(0, j, &gen, &sched, &dec, t)?;
                            worst_exact = worst_exact.max((v - exact.last()[j]).abs());
                        }
                    }
                }
            }
        }
    }

    let mut mc_ok = true;
    let mut mc_detail = String::new();
    let gen = GeneratorSpec::fully_connected(2, 1.0)?;
    let sched = ScheduleParams::exponential(1.0)?;
    let dec = DecoherenceParams::new(0.3)?;
    let rho = DensityMatrix::basis_state(2, 0)?;
    let exact = evolve(&rho, &gen, &sched, &dec, 50, false)?;
    let est = mc_estimate(0, &gen, &sched, &dec, 50, 20_000, RngStream::new(seed, 12))?;
    for j in 0..2 {
        let err = (est.estimates()[j] - exact.last()[j]).abs();
        let limit = 4.0 * est.std_errors()[j].max(1e-12);
        if err > limit {
            mc_ok = false;
            mc_detail = format!("; Monte Carlo site {j} off by {err:.3e} (> {limit:.3e})");
        }
    }

    Ok(CheckOutcome {
        name: "oracle_equivalence",
        passed: worst_exact <= 1e-10 && mc_ok,
        detail: format!("max |enumeration - evolution| = {worst_exact:.3e}{mc_detail}"),
    })
}

fn semigroup_bounds(seed: u64) -> Result<CheckOutcome> {
    let mut rng = RngStream::new(seed, 13).rng();
    let mut failures = 0usize;
    let trials = 200;
    for _ in 0..trials {
        let dim = rng.gen_range(2..=5);
        let g = HermitianMatrix::from_upper(dim, |i, j| {
            let modulus = 0.1 + 0.9 * rng.gen::<f64>();
            if i == j {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                Complex64::new(sign * modulus, 0.0)
            } else {
                Complex64::from_polar(modulus, 2.0 * std::f64::consts::PI * rng.gen::<f64>())
            }
        });
        let theta0 = semigroup_bounds_check(&g, 0.0)?.theta0;
        let report = semigroup_bounds_check(&g, rng.gen::<f64>() * theta0)?;
        if !report.all_hold() {
            failures += 1;
        }
    }
    Ok(CheckOutcome {
        name: "semigroup_bounds",
        passed: failures == 0,
        detail: format!("{failures} of {trials} random generators violated an entry bound"),
    })
}

fn contraction_bound(seed: u64) -> Result<CheckOutcome> {
    let gen = GeneratorSpec::fully_connected(2, 1.0)?;
    let g = gen.build();
    let pi = EquilibriumMatrix::uniform(2)?;
    let mut all_hold = true;
    let mut worst_excess = f64::NEG_INFINITY;
    for k in 0..20u64 {
        let tl = MeasurementTimeline::sample(0.5, 2000, RngStream::new(seed, 14).substream(k))?;
        let factors: Vec<StochasticMatrix> = tl
            .segments()
            .map(|(prev, gap)| q_matrix(&g, 0.5, prev, gap))
            .collect::<Result<_>>()?;
        let report = convergence_report(&factors, &pi)?;
        all_hold &= report.hypothesis_holds() && report.bound_holds();
        for (dev, bound) in report
            .running_deviations()
            .iter()
            .zip(report.certificate().running_bounds())
        {
            worst_excess = worst_excess.max(dev - bound);
        }
    }
    Ok(CheckOutcome {
        name: "contraction_bound",
        passed: all_hold,
        detail: format!("worst (deviation - bound) = {worst_excess:.3e} over 20 timelines"),
    })
}
