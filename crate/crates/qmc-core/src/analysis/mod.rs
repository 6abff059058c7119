//! Experimental protocol: closed-form return probability for the 2-site
//! fully connected generator, period prediction and detection on coherent
//! trajectories, decay-rate regression, and parameter sweeps.

mod fit;
mod sweep;

pub use fit::{fit_decay, model_selection, DecayModel, FitResult, ModelSelection, SelectionCriterion};
pub use sweep::{run_sweep, write_sweep_csv, SweepGrid, SweepRow, SweepStatus};

use crate::linalg::KahanSum;
use crate::{Error, Result};

/// Snap width around the logarithmic branch of the period formula, where
/// the generic exponent blows up.
const ZETA_TWO_SNAP: f64 = 1e-9;
/// Values closer than this are merged into one plateau when scanning for
/// local maxima.
const PLATEAU_TOL: f64 = 1e-12;

/// A detected or predicted oscillation period: the first full period after
/// step `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodEstimate {
    pub anchor: u64,
    pub length: f64,
}

/// Closed-form return probability of the 2-site all-coupling generator under
/// the coherent exponential schedule:
/// `P_n(1,1) = 1 - (1/2)(1 - cos(2 lambda S_n))` with `S_n` the partial sum
/// of `k^(-zeta/2)`.
///
/// The eigenvalue gap of the generator is `2 lambda` and the eigenbasis
/// splits the sites evenly, which fixes the amplitude at `1/2`. The
/// complementary probability is `P_n(2,1) = 1 - P_n(1,1)`.
pub fn closed_form_p11(lambda: f64, zeta: f64, n: u64) -> f64 {
    let mut s = KahanSum::new();
    let exponent = -0.5 * zeta;
    for k in 1..=n {
        s.add((k as f64).powf(exponent));
    }
    1.0 - 0.5 * (1.0 - (2.0 * lambda * s.value()).cos())
}

/// The closed-form series for `n = 0..=t`, computed in one pass.
pub fn closed_form_series(lambda: f64, zeta: f64, t: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(t as usize + 1);
    out.push(1.0);
    let mut s = KahanSum::new();
    let exponent = -0.5 * zeta;
    for k in 1..=t {
        s.add((k as f64).powf(exponent));
        out.push(1.0 - 0.5 * (1.0 - (2.0 * lambda * s.value()).cos()));
    }
    out
}

/// Predicted first period after step `n` for an eigenvalue gap
/// `delta_lambda` and schedule exponent `zeta` in `[0, 2]`.
///
/// For `zeta < 2` the angle sum grows like a power of `n` and the period is
/// `[(1 - zeta/2) 2 pi / gap + n^(1 - zeta/2)]^(1/(1 - zeta/2)) - n`; at
/// `zeta = 2` the growth is logarithmic and the period is
/// `n (e^(2 pi / gap) - 1)`. Exponents within 1e-9 of 2 are snapped onto the
/// logarithmic branch. Above 2 the angle series converges and no period
/// exists.
pub fn predict_period(delta_lambda: f64, zeta: f64, n: u64) -> Result<PeriodEstimate> {
    if !(delta_lambda.is_finite() && delta_lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta_lambda",
            reason: format!("eigenvalue gap must be positive, got {delta_lambda}"),
        });
    }
    if !(zeta.is_finite() && zeta >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "zeta",
            reason: format!("schedule exponent must be nonnegative, got {zeta}"),
        });
    }
    if zeta > 2.0 + ZETA_TWO_SNAP {
        return Err(Error::InvalidParameter {
            name: "zeta",
            reason: format!("no periodic regime above 2, got {zeta}"),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "the asymptotic period formula needs an anchor of at least 1".into(),
        });
    }
    let full_turn = 2.0 * std::f64::consts::PI / delta_lambda;
    let length = if (zeta - 2.0).abs() <= ZETA_TWO_SNAP {
        n as f64 * full_turn.exp_m1()
    } else {
        let e = 1.0 - 0.5 * zeta;
        // bracket = e * full_turn + n^e, assembled as 1 + x with
        // x = e * full_turn + expm1(e ln n) so the e -> 0 limit stays exact.
        let x = e * full_turn + (e * (n as f64).ln()).exp_m1();
        (x.ln_1p() / e).exp() - n as f64
    };
    Ok(PeriodEstimate {
        anchor: n,
        length,
    })
}

/// Ratio check of the coupling-scaling law: scaling the eigenvalue gap by
/// `scale` should shrink the period by the same factor.
#[derive(Debug, Clone, Copy)]
pub struct ScalingReport {
    pub ratio: f64,
    /// `|ratio - 1| <= 5%`.
    pub within_tolerance: bool,
}

/// Compares `predict_period(scale * gap)` against
/// `predict_period(gap) / scale`.
pub fn lambda_scaling_check(
    delta_lambda: f64,
    zeta: f64,
    n: u64,
    scale: f64,
) -> Result<ScalingReport> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter {
            name: "scale",
            reason: format!("scale factor must be positive, got {scale}"),
        });
    }
    let base = predict_period(delta_lambda, zeta, n)?.length;
    let scaled = predict_period(delta_lambda * scale, zeta, n)?.length;
    let ratio = scaled / (base / scale);
    Ok(ScalingReport {
        ratio,
        within_tolerance: (ratio - 1.0).abs() <= 0.05,
    })
}

/// Strict local maxima of a series; runs of equal values (within 1e-12)
/// count once, at the midpoint rounded down. Endpoints never qualify.
pub fn local_maxima(series: &[f64]) -> Vec<(usize, f64)> {
    let mut maxima = Vec::new();
    let len = series.len();
    if len < 3 {
        return maxima;
    }
    let mut start = 0usize;
    while start < len {
        let mut end = start;
        while end + 1 < len && (series[end + 1] - series[start]).abs() <= PLATEAU_TOL {
            end += 1;
        }
        let value = series[start];
        if start > 0 && end + 1 < len && series[start - 1] < value && series[end + 1] < value {
            maxima.push(((start + end) / 2, value));
        }
        start = end + 1;
    }
    maxima
}

/// Decay-envelope sample points for fitting: the interior local maxima of a
/// trajectory's site series.
///
/// When the oscillation overdamps early (strong measurement with a long
/// local period) fewer than four interior peaks survive; the series start is
/// then prepended as the zeroth peak of the envelope, which it is.
pub fn decay_envelope_points(series: &[f64]) -> Vec<(f64, f64)> {
    let mut points: Vec<(f64, f64)> = local_maxima(series)
        .into_iter()
        .map(|(n, v)| (n as f64, v))
        .collect();
    if points.len() < 4 {
        if let Some(&first) = series.first() {
            points.insert(0, (0.0, first));
        }
    }
    points
}

/// Peak-to-peak periods of a series: one estimate per consecutive pair of
/// local maxima, anchored at the earlier peak. Fewer than two maxima yield
/// an empty list.
pub fn detect_periods(series: &[f64]) -> Vec<PeriodEstimate> {
    let maxima = local_maxima(series);
    maxima
        .windows(2)
        .map(|pair| PeriodEstimate {
            anchor: pair[0].0 as u64,
            length: (pair[1].0 - pair[0].0) as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        evolve, DecoherenceParams, DensityMatrix, GeneratorSpec, ScheduleParams,
    };
    use std::f64::consts::PI;

    #[test]
    fn closed_form_full_return_at_whole_turns() {
        // zeta = 0, lambda = pi: the argument advances by 2 pi each step.
        for n in [0u64, 1, 5, 9] {
            assert!((closed_form_p11(PI, 0.0, n) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_alternates_at_half_turns() {
        // zeta = 0, lambda = pi/2: cos(pi n) alternates.
        for n in 0u64..8 {
            let expected = if n % 2 == 0 { 1.0 } else { 0.0 };
            assert!((closed_form_p11(PI / 2.0, 0.0, n) - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_matches_channel_evolution() {
        let gen = GeneratorSpec::fully_connected(2, 1.0).unwrap();
        let sched = ScheduleParams::exponential(1.0).unwrap();
        let dec = DecoherenceParams::new(0.0).unwrap();
        let rho = DensityMatrix::basis_state(2, 0).unwrap();
        let tr = evolve(&rho, &gen, &sched, &dec, 2000, false).unwrap();
        let series = closed_form_series(1.0, 1.0, 2000);
        for n in 0..=2000 {
            assert!(
                (tr.step(n)[0] - series[n]).abs() <= 1e-10,
                "step {n}: {} vs {}",
                tr.step(n)[0],
                series[n]
            );
        }
    }

    #[test]
    fn closed_form_complement_sums_to_one() {
        for n in [1u64, 17, 123] {
            let p11 = closed_form_p11(0.8, 1.3, n);
            let p21 = 1.0 - p11;
            assert!((p11 + p21 - 1.0).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&p11));
        }
    }

    #[test]
    fn period_formula_is_constant_at_zeta_zero() {
        for n in [1u64, 10, 1000] {
            let est = predict_period(2.0, 0.0, n).unwrap();
            assert!((est.length - PI).abs() < 1e-12, "anchor {n}");
        }
    }

    #[test]
    fn period_formula_logarithmic_branch() {
        let est = predict_period(2.0, 2.0, 100).unwrap();
        assert!((est.length - 100.0 * (PI.exp() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn period_formula_continuous_at_the_branch_point() {
        for n in [100u64, 10_000] {
            let below = predict_period(2.0, 2.0 - 1e-8, n).unwrap().length;
            let at = predict_period(2.0, 2.0, n).unwrap().length;
            assert!(
                ((below - at) / at).abs() < 1e-6,
                "anchor {n}: {below} vs {at}"
            );
        }
    }

    #[test]
    fn period_formula_rejects_aperiodic_exponents() {
        assert!(predict_period(2.0, 2.5, 100).is_err());
    }

    #[test]
    fn period_formula_matches_measured_peaks() {
        // Measure the peak spacing of the exact series near the anchor.
        let zeta = 1.0;
        let lambda = 1.0;
        let anchor = 10_000u64;
        let predicted = predict_period(2.0 * lambda, zeta, anchor).unwrap().length;
        let window = (anchor + 3 * predicted as u64).max(anchor + 100);
        let series = closed_form_series(lambda, zeta, window);
        let peaks: Vec<usize> = local_maxima(&series)
            .into_iter()
            .map(|(i, _)| i)
            .filter(|&i| i >= anchor as usize)
            .collect();
        assert!(peaks.len() >= 2, "need two peaks past the anchor");
        let measured = (peaks[1] - peaks[0]) as f64;
        assert!(
            ((measured - predicted) / predicted).abs() < 0.02,
            "measured {measured} vs predicted {predicted}"
        );
    }

    #[test]
    fn scaling_ratio_is_exact_at_zeta_zero() {
        let report = lambda_scaling_check(2.0, 0.0, 50, 3.0).unwrap();
        assert!((report.ratio - 1.0).abs() < 1e-12);
        assert!(report.within_tolerance);
    }

    #[test]
    fn scaling_ratio_near_one_for_large_anchors() {
        let report = lambda_scaling_check(2.0, 1.0, 100_000, 2.0).unwrap();
        assert!(report.within_tolerance, "ratio {}", report.ratio);
    }

    #[test]
    fn scaling_ratio_near_one_on_log_branch_with_wide_gap() {
        let report = lambda_scaling_check(60.0, 2.0, 100_000, 3.0).unwrap();
        assert!(report.within_tolerance, "ratio {}", report.ratio);
    }

    #[test]
    fn cosine_periods_are_recovered_exactly() {
        let series: Vec<f64> = (0..=500)
            .map(|n| (2.0 * PI * n as f64 / 50.0).cos())
            .collect();
        let periods = detect_periods(&series);
        assert!(!periods.is_empty());
        for p in periods {
            assert_eq!(p.length, 50.0);
        }
    }

    #[test]
    fn monotone_series_has_no_periods() {
        let series: Vec<f64> = (0..100).map(|n| n as f64).collect();
        assert!(detect_periods(&series).is_empty());
    }

    #[test]
    fn plateaus_collapse_to_their_midpoint() {
        let series = vec![0.0, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0];
        let maxima = local_maxima(&series);
        assert_eq!(maxima.len(), 2);
        assert_eq!(maxima[0].0, 2);
        assert_eq!(maxima[1].0, 5);
    }

    #[test]
    fn boundary_plateaus_are_not_maxima() {
        let series = vec![1.0, 1.0, 0.5, 0.7, 0.2];
        let maxima = local_maxima(&series);
        assert_eq!(maxima.len(), 1);
        assert_eq!(maxima[0].0, 3);
    }
}
