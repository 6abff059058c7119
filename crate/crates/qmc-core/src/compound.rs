//! The compound Markov chain representation of the decoherent evolution.
//!
//! Conditioned on the random measurement times, the measurement outcomes
//! form a classical Markov chain whose kernels are squared moduli of the
//! unitary products between measurements. Site probabilities at any horizon
//! are then an expectation over geometric measurement timelines of a product
//! of doubly stochastic matrices `Q` followed by a terminal matrix `W`. This
//! module holds the timeline sampler, the `Q`/`W` builders, the Monte Carlo
//! estimator of that expectation, an exact enumerator over all measurement
//! subsets for small instances, and the outcome-chain sampler.
//!
//! Randomness: ChaCha8 seeded from a 64-bit value, with the ChaCha stream id
//! carrying the substream index. Identical `(seed, stream)` pairs reproduce
//! identical draws on every platform.

use rand::distributions::Open01;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{eigh, ComplexMatrix, HermitianMatrix, SpectralDecomposition};
use crate::model::{
    schedule_angle, DecoherenceParams, GeneratorSpec, ScheduleForm, ScheduleParams,
    UnitarySchedule,
};
use crate::{Error, Result};

/// Row-sum tolerance for accepting a stochastic matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Exact-enumeration size guards.
const ENUMERATION_MAX_T: u64 = 12;
const ENUMERATION_MAX_DIM: usize = 4;

/// Identity of a reproducible random stream: a seed plus a substream index.
///
/// `rng()` yields a ChaCha8 generator with the seed expanded through
/// `seed_from_u64` and the substream placed in the ChaCha stream id, so
/// distinct indices give statistically independent, bit-reproducible
/// sequences. `substream(k)` derives worker/sample streams by mixing `k`
/// into the index with SplitMix64, which keeps derived streams disjoint from
/// consecutively numbered user streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Deterministically derived child stream `k`.
    pub fn substream(&self, k: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ (k.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Geometric measurement timeline up to a horizon `t`.
///
/// Gaps are i.i.d. geometric on `{1, 2, ...}` with success probability `p`,
/// so the mean gap is `1/p`. Sampling materialises gaps until the first
/// arrival past the horizon; `count` is the number of arrivals at or before
/// it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementTimeline {
    gaps: Vec<u64>,
    arrivals: Vec<u64>,
    horizon: u64,
    count: usize,
}

impl MeasurementTimeline {
    pub fn sample(p: f64, horizon: u64, stream: RngStream) -> Result<Self> {
        Self::sample_with(p, horizon, &mut stream.rng())
    }

    pub fn sample_with(p: f64, horizon: u64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: format!(
                    "timeline sampling needs a measurement probability in (0, 1], got {p}"
                ),
            });
        }
        let mut gaps = Vec::new();
        let mut arrivals = Vec::new();
        let mut sigma: u64 = 0;
        loop {
            let gap = sample_geometric(p, rng);
            sigma = sigma.saturating_add(gap);
            gaps.push(gap);
            arrivals.push(sigma);
            if sigma > horizon {
                break;
            }
        }
        let count = arrivals.len() - 1;
        Ok(Self {
            gaps,
            arrivals,
            horizon,
            count,
        })
    }

    /// Builds a timeline from explicit gaps; the final arrival must be the
    /// first one past the horizon.
    pub fn from_gaps(gaps: Vec<u64>, horizon: u64) -> Result<Self> {
        if gaps.is_empty() || gaps.contains(&0) {
            return Err(Error::InvalidParameter {
                name: "gaps",
                reason: "need at least one gap and all gaps must be positive".into(),
            });
        }
        let mut arrivals = Vec::with_capacity(gaps.len());
        let mut sigma = 0u64;
        for &g in &gaps {
            sigma = sigma.saturating_add(g);
            arrivals.push(sigma);
        }
        let last = *arrivals.last().expect("nonempty");
        if last <= horizon {
            return Err(Error::InvalidParameter {
                name: "gaps",
                reason: format!("final arrival {last} must exceed the horizon {horizon}"),
            });
        }
        if arrivals.len() >= 2 && arrivals[arrivals.len() - 2] > horizon {
            return Err(Error::InvalidParameter {
                name: "gaps",
                reason: "only the final arrival may exceed the horizon".into(),
            });
        }
        let count = arrivals.len() - 1;
        Ok(Self {
            gaps,
            arrivals,
            horizon,
            count,
        })
    }

    /// All materialised gaps, including the one that overshoots the horizon.
    pub fn gaps(&self) -> &[u64] {
        &self.gaps
    }

    /// All materialised arrival times; the last one exceeds the horizon.
    pub fn arrivals(&self) -> &[u64] {
        &self.arrivals
    }

    /// Arrivals at or within the horizon.
    pub fn arrivals_within_horizon(&self) -> &[u64] {
        &self.arrivals[..self.count]
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Number of measurements at or before the horizon.
    pub fn count(&self) -> usize {
        self.count
    }

    /// The last arrival within the horizon, or 0 when there is none.
    pub fn last_arrival_within_horizon(&self) -> u64 {
        if self.count == 0 {
            0
        } else {
            self.arrivals[self.count - 1]
        }
    }

    /// Measurement segments `(previous arrival, gap)` within the horizon.
    pub fn segments(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        (0..self.count).map(move |k| {
            let prev = if k == 0 { 0 } else { self.arrivals[k - 1] };
            (prev, self.gaps[k])
        })
    }
}

/// Inverse-CDF geometric sample on `{1, 2, ...}` with mean `1/p`.
fn sample_geometric(p: f64, rng: &mut ChaCha8Rng) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.sample(Open01);
    let value = (u.ln() / (1.0 - p).ln()).ceil();
    (value as u64).max(1)
}

/// Row-stochastic matrix of nonnegative reals.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    /// Validates nonnegativity and unit row sums within [`STOCHASTIC_TOL`].
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        for (idx, &x) in data.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "entries",
                    reason: format!("entry {idx} is {x}, expected a nonnegative real"),
                });
            }
        }
        let m = Self { dim, data };
        for i in 0..dim {
            let sum: f64 = m.row(i).iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidParameter {
                    name: "rows",
                    reason: format!("row {i} sums to {sum}, expected 1"),
                });
            }
        }
        Ok(m)
    }

    /// Trusted constructor for products of validated matrices, where row
    /// sums stay exact in theory but drift slightly past the strict
    /// construction tolerance.
    pub(crate) fn from_raw(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Matrix product `self * rhs` (no re-validation).
    pub fn product(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions must agree");
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        Self { dim: n, data }
    }

    /// Row vector times matrix.
    pub fn propagate_row(&self, row: &[f64]) -> Vec<f64> {
        assert_eq!(row.len(), self.dim);
        let n = self.dim;
        let mut out = vec![0.0; n];
        for (i, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for j in 0..n {
                out[j] += w * self.data[i * n + j];
            }
        }
        out
    }

    pub fn max_row_sum_deviation(&self) -> f64 {
        (0..self.dim)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_col_sum_deviation(&self) -> f64 {
        (0..self.dim)
            .map(|j| {
                ((0..self.dim).map(|i| self.at(i, j)).sum::<f64>() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest entry of `|self - rhs|`.
    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        assert_eq!(self.dim, rhs.dim);
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Squared moduli of `exp(i theta G)` arranged as a transition matrix:
/// entry `(i, j)` is the probability of measuring `j` after starting in `i`.
fn transition_from_angle(sd: &SpectralDecomposition, theta: f64) -> Result<StochasticMatrix> {
    let u = sd.unitary_exp(theta)?;
    let m = u.dim();
    let mut data = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            data[i * m + j] = u.at(j, i).norm_sqr();
        }
    }
    StochasticMatrix::new(m, data)
}

/// Transition kernel across one measurement gap: squared moduli of the
/// ordered unitary product over steps `sigma_prev+1 ..= sigma_prev+gap`.
/// All step unitaries share the generator, so the product collapses to a
/// single exponential at the accumulated angle.
pub fn q_matrix(
    g: &HermitianMatrix,
    zeta: f64,
    sigma_prev: u64,
    gap: u64,
) -> Result<StochasticMatrix> {
    if gap == 0 {
        return Err(Error::InvalidParameter {
            name: "gap",
            reason: "measurement gaps are at least 1".into(),
        });
    }
    let sd = eigh(g)?;
    transition_from_angle(&sd, schedule_angle(zeta, sigma_prev, sigma_prev + gap))
}

/// Terminal kernel from the last measurement to the horizon: identity when
/// `sigma_last == t`, otherwise squared moduli of the residual unitary
/// product over `sigma_last+1 ..= t`.
pub fn w_matrix(g: &HermitianMatrix, zeta: f64, sigma_last: u64, t: u64) -> Result<StochasticMatrix> {
    if sigma_last > t {
        return Err(Error::InvalidParameter {
            name: "sigma_last",
            reason: format!("last measurement {sigma_last} lies past the horizon {t}"),
        });
    }
    if sigma_last == t {
        return Ok(StochasticMatrix::identity(g.dim()));
    }
    let sd = eigh(g)?;
    transition_from_angle(&sd, schedule_angle(zeta, sigma_last, t))
}

/// Monte Carlo estimate of all site probabilities at the horizon.
#[derive(Debug, Clone)]
pub struct McEstimate {
    estimates: Vec<f64>,
    std_errors: Vec<f64>,
    n_samples: u64,
    stream: RngStream,
}

impl McEstimate {
    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn std_errors(&self) -> &[f64] {
        &self.std_errors
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn stream(&self) -> RngStream {
        self.stream
    }

    /// Writes `j,estimate,stderr,n_samples,seed` rows (1-based site labels).
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "j,estimate,stderr,n_samples,seed")?;
        for (j, (est, se)) in self.estimates.iter().zip(&self.std_errors).enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                j + 1,
                crate::io::format_float(*est),
                crate::io::format_float(*se),
                self.n_samples,
                self.stream.seed()
            )?;
        }
        Ok(())
    }
}

/// Estimates site probabilities at horizon `t` from `samples` independent
/// measurement timelines.
///
/// Each sample draws a timeline from its own derived substream (so the
/// result is independent of how samples are sharded across workers), then
/// propagates the start row through the timeline's `Q` kernels and the
/// terminal `W`. Returns per-site means and standard errors of the mean.
pub fn mc_estimate(
    start: usize,
    gen: &GeneratorSpec,
    sched: &ScheduleParams,
    dec: &DecoherenceParams,
    t: u64,
    samples: u64,
    stream: RngStream,
) -> Result<McEstimate> {
    if sched.form() != ScheduleForm::Exponential {
        return Err(Error::InvalidParameter {
            name: "schedule",
            reason: "the compound representation requires the exponential schedule".into(),
        });
    }
    let p = dec.p();
    if p <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: "the compound estimator needs p > 0; use coherent evolution for p = 0".into(),
        });
    }
    if samples == 0 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "need at least one sample".into(),
        });
    }
    let m = gen.dim();
    if start >= m {
        return Err(Error::InvalidParameter {
            name: "start",
            reason: format!("site index {start} out of range for dimension {m}"),
        });
    }
    let sd = eigh(&gen.build())?;
    let zeta = sched.zeta();

    let mut sums = vec![0.0; m];
    let mut sums_sq = vec![0.0; m];
    for s in 0..samples {
        let mut rng = stream.substream(s).rng();
        let timeline = MeasurementTimeline::sample_with(p, t, &mut rng)?;
        let row = propagate_timeline(start, &sd, zeta, &timeline)?;
        for j in 0..m {
            sums[j] += row[j];
            sums_sq[j] += row[j] * row[j];
        }
    }
    let n = samples as f64;
    let estimates: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let std_errors: Vec<f64> = estimates
        .iter()
        .zip(&sums_sq)
        .map(|(&mean, &sq)| {
            if samples < 2 {
                0.0
            } else {
                let variance = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
                (variance / n).sqrt()
            }
        })
        .collect();
    Ok(McEstimate {
        estimates,
        std_errors,
        n_samples: samples,
        stream,
    })
}

/// Row `start` of `Q_1 ... Q_{n_t} W` for one timeline.
fn propagate_timeline(
    start: usize,
    sd: &SpectralDecomposition,
    zeta: f64,
    timeline: &MeasurementTimeline,
) -> Result<Vec<f64>> {
    let m = sd.dim();
    let mut row = vec![0.0; m];
    row[start] = 1.0;
    for (sigma_prev, gap) in timeline.segments() {
        let q = transition_from_angle(sd, schedule_angle(zeta, sigma_prev, sigma_prev + gap))?;
        row = q.propagate_row(&row);
    }
    let sigma_last = timeline.last_arrival_within_horizon();
    if sigma_last < timeline.horizon() {
        let w = transition_from_angle(sd, schedule_angle(zeta, sigma_last, timeline.horizon()))?;
        row = w.propagate_row(&row);
    }
    Ok(row)
}

/// Exact site probability by brute force: sums over every subset of
/// measurement steps in `{1..t}` and all intermediate outcomes, weighting a
/// subset of size `n` by `p^n (1-p)^(t-n)`.
///
/// Bounded to `t <= 12`, `dim <= 4`. Intermediate-outcome sums chain the
/// per-segment transition matrices, so each subset costs `O(t m^2)`.
pub fn enumerate_paths(
    start: usize,
    target: usize,
    gen: &GeneratorSpec,
    sched: &ScheduleParams,
    dec: &DecoherenceParams,
    t: u64,
) -> Result<f64> {
    let m = gen.dim();
    if t > ENUMERATION_MAX_T || m > ENUMERATION_MAX_DIM {
        return Err(Error::InstanceTooLarge(format!(
            "exact enumeration is limited to t <= {ENUMERATION_MAX_T} and dim <= {ENUMERATION_MAX_DIM}, got t = {t}, dim = {m}"
        )));
    }
    if start >= m || target >= m {
        return Err(Error::InvalidParameter {
            name: "site",
            reason: format!("site indices must lie below {m}"),
        });
    }

    // Transition matrices for every step range (a, b]: squared moduli of
    // U_b ... U_{a+1}. Works for either schedule form.
    let schedule = UnitarySchedule::new(gen, sched)?;
    let steps: Vec<ComplexMatrix> = (1..=t)
        .map(|n| Ok(schedule.at_step(n)?.matrix().clone()))
        .collect::<Result<_>>()?;
    let t_us = t as usize;
    let mut segment = vec![vec![None::<StochasticMatrix>; t_us + 1]; t_us + 1];
    for a in 0..=t_us {
        let mut acc = ComplexMatrix::identity(m);
        for b in (a + 1)..=t_us {
            acc = steps[b - 1].mul(&acc);
            let mut data = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    data[i * m + j] = acc.at(j, i).norm_sqr();
                }
            }
            segment[a][b] = Some(StochasticMatrix::from_raw(m, data));
        }
    }

    let p = dec.p();
    let q = dec.q();
    let mut total = 0.0;
    for mask in 0u64..(1u64 << t) {
        let n_meas = mask.count_ones() as i32;
        let weight = p.powi(n_meas) * q.powi(t as i32 - n_meas);
        if weight == 0.0 {
            continue;
        }
        let mut row = vec![0.0; m];
        row[start] = 1.0;
        let mut prev = 0usize;
        for step in 1..=t_us {
            if mask & (1 << (step - 1)) != 0 {
                row = segment[prev][step]
                    .as_ref()
                    .expect("segment computed")
                    .propagate_row(&row);
                prev = step;
            }
        }
        if prev < t_us {
            row = segment[prev][t_us]
                .as_ref()
                .expect("segment computed")
                .propagate_row(&row);
        }
        total += weight * row[target];
    }
    Ok(total)
}

/// Samples the measurement-outcome chain along a fixed timeline: each
/// outcome is drawn from the row of the current segment kernel indexed by
/// the previous outcome, starting from `start`.
pub fn sample_outcomes(
    start: usize,
    timeline: &MeasurementTimeline,
    gen: &GeneratorSpec,
    sched: &ScheduleParams,
    stream: RngStream,
) -> Result<Vec<usize>> {
    sample_outcomes_with(start, timeline, gen, sched, &mut stream.rng())
}

pub fn sample_outcomes_with(
    start: usize,
    timeline: &MeasurementTimeline,
    gen: &GeneratorSpec,
    sched: &ScheduleParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if sched.form() != ScheduleForm::Exponential {
        return Err(Error::InvalidParameter {
            name: "schedule",
            reason: "the compound representation requires the exponential schedule".into(),
        });
    }
    let m = gen.dim();
    if start >= m {
        return Err(Error::InvalidParameter {
            name: "start",
            reason: format!("site index {start} out of range for dimension {m}"),
        });
    }
    let sd = eigh(&gen.build())?;
    let mut outcomes = Vec::with_capacity(timeline.count());
    let mut current = start;
    for (sigma_prev, gap) in timeline.segments() {
        let q = transition_from_angle(&sd, schedule_angle(sched.zeta(), sigma_prev, sigma_prev + gap))?;
        current = draw_from_row(q.row(current), rng);
        outcomes.push(current);
    }
    Ok(outcomes)
}

/// Probability of one outcome path along a fixed timeline: the product of
/// the segment-kernel entries the chain traverses.
pub fn path_probability(
    start: usize,
    timeline: &MeasurementTimeline,
    gen: &GeneratorSpec,
    sched: &ScheduleParams,
    outcomes: &[usize],
) -> Result<f64> {
    if outcomes.len() != timeline.count() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} outcomes for this timeline, got {}",
            timeline.count(),
            outcomes.len()
        )));
    }
    let sd = eigh(&gen.build())?;
    let mut prob = 1.0;
    let mut current = start;
    for ((sigma_prev, gap), &next) in timeline.segments().zip(outcomes) {
        let q = transition_from_angle(&sd, schedule_angle(sched.zeta(), sigma_prev, sigma_prev + gap))?;
        prob *= q.at(current, next);
        current = next;
    }
    Ok(prob)
}

fn draw_from_row(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &w) in row.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    row.len() - 1
}
