//! Generators, the time-inhomogeneous unitary schedule, the decoherent
//! channel, and exact density-operator evolution.
//!
//! One evolution step at index `n` applies the channel
//! `rho -> (1 - p) U_n rho U_n* + p diag(U_n rho U_n*)`, which is the Kraus
//! family `{sqrt(1-p) I, sqrt(p) |i><i|}` written out: with probability `p`
//! the site observable is measured, otherwise the step is purely unitary.
//! Site probabilities are the diagonal of the evolved density matrix.

use num_complex::Complex64;

use crate::linalg::{
    eigh, ComplexMatrix, HermitianMatrix, KahanSum, SpectralDecomposition, UnitaryMatrix,
};
use crate::{Error, Result};

/// Tolerances for accepting a density matrix.
const DENSITY_HERMITIAN_TOL: f64 = 1e-12;
const DENSITY_TRACE_TOL: f64 = 1e-12;
/// Eigenvalue noise floor: anything above this magnitude below zero is a
/// genuine positivity violation, smaller excursions are roundoff.
const DENSITY_EIGENVALUE_TOL: f64 = 1e-10;
/// Row-sum tolerance for trajectory probability vectors.
const PROBABILITY_SUM_TOL: f64 = 1e-10;

/// Graph family of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    FullyConnected,
    Cyclic,
    Custom,
}

impl std::fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeneratorKind::FullyConnected => write!(f, "full"),
            GeneratorKind::Cyclic => write!(f, "cyclic"),
            GeneratorKind::Custom => write!(f, "custom"),
        }
    }
}

/// The Hermitian generator `G` driving the unitary schedule.
///
/// `FullyConnected` puts the coupling on every entry, `Cyclic` on the two
/// cyclic off-diagonals only, and `Custom` wraps an arbitrary Hermitian
/// matrix.
#[derive(Debug, Clone)]
pub enum GeneratorSpec {
    FullyConnected { dim: usize, lambda: f64 },
    Cyclic { dim: usize, lambda: f64 },
    Custom { matrix: HermitianMatrix },
}

impl GeneratorSpec {
    pub fn fully_connected(dim: usize, lambda: f64) -> Result<Self> {
        Self::check_dim(dim)?;
        Self::check_lambda(lambda)?;
        Ok(GeneratorSpec::FullyConnected { dim, lambda })
    }

    pub fn cyclic(dim: usize, lambda: f64) -> Result<Self> {
        Self::check_dim(dim)?;
        Self::check_lambda(lambda)?;
        Ok(GeneratorSpec::Cyclic { dim, lambda })
    }

    pub fn custom(matrix: HermitianMatrix) -> Result<Self> {
        Self::check_dim(matrix.dim())?;
        Ok(GeneratorSpec::Custom { matrix })
    }

    fn check_dim(dim: usize) -> Result<()> {
        if dim < 2 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: format!("state space needs at least 2 sites, got {dim}"),
            });
        }
        Ok(())
    }

    fn check_lambda(lambda: f64) -> Result<()> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("coupling must be a positive finite real, got {lambda}"),
            });
        }
        Ok(())
    }

    pub fn kind(&self) -> GeneratorKind {
        match self {
            GeneratorSpec::FullyConnected { .. } => GeneratorKind::FullyConnected,
            GeneratorSpec::Cyclic { .. } => GeneratorKind::Cyclic,
            GeneratorSpec::Custom { .. } => GeneratorKind::Custom,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GeneratorSpec::FullyConnected { dim, .. } | GeneratorSpec::Cyclic { dim, .. } => *dim,
            GeneratorSpec::Custom { matrix } => matrix.dim(),
        }
    }

    /// The coupling, when the generator is parameterised by one.
    pub fn lambda(&self) -> Option<f64> {
        match self {
            GeneratorSpec::FullyConnected { lambda, .. }
            | GeneratorSpec::Cyclic { lambda, .. } => Some(*lambda),
            GeneratorSpec::Custom { .. } => None,
        }
    }

    /// Smallest entry modulus of the built matrix. Positive for fully
    /// connected generators, zero for cyclic ones.
    pub fn epsilon0(&self) -> f64 {
        self.build().min_entry_modulus()
    }

    /// Materialises the generator matrix.
    pub fn build(&self) -> HermitianMatrix {
        match self {
            GeneratorSpec::FullyConnected { dim, lambda } => {
                HermitianMatrix::from_upper(*dim, |_, _| Complex64::new(*lambda, 0.0))
            }
            GeneratorSpec::Cyclic { dim, lambda } => {
                let m = *dim;
                HermitianMatrix::from_upper(m, |i, j| {
                    // Neighbours on the cycle; for m = 2 the two directions
                    // meet on the same entry.
                    if j == (i + 1) % m || j == (i + m - 1) % m {
                        Complex64::new(*lambda, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            }
            GeneratorSpec::Custom { matrix } => matrix.clone(),
        }
    }
}

/// Functional form of the step unitaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleForm {
    /// `U_n = exp(i G / n^(zeta/2))`.
    Exponential,
    /// The real orthogonal 2x2 coin with entries `sqrt(1 - lambda/n^zeta)`
    /// and `sqrt(lambda/n^zeta)`; requires a 2-site space and
    /// `lambda <= 1`.
    SqrtCoin,
}

/// Schedule exponent and form. `zeta = 0` recovers the homogeneous chain.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleParams {
    zeta: f64,
    form: ScheduleForm,
}

impl ScheduleParams {
    pub fn new(zeta: f64, form: ScheduleForm) -> Result<Self> {
        if !(zeta.is_finite() && zeta >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "zeta",
                reason: format!("schedule exponent must be nonnegative, got {zeta}"),
            });
        }
        Ok(Self { zeta, form })
    }

    pub fn exponential(zeta: f64) -> Result<Self> {
        Self::new(zeta, ScheduleForm::Exponential)
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn form(&self) -> ScheduleForm {
        self.form
    }
}

/// Per-step measurement probability `p` (and its complement `q = 1 - p`).
#[derive(Debug, Clone, Copy)]
pub struct DecoherenceParams {
    p: f64,
}

impl DecoherenceParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: format!("measurement probability must lie in [0, 1], got {p}"),
            });
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }
}

/// Density matrix: Hermitian, unit trace, positive semidefinite up to
/// numerical noise (eigenvalues above `-1e-10`).
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates all three invariants; positivity is checked through a full
    /// eigendecomposition, so keep this on construction paths rather than in
    /// inner loops.
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        let herm = HermitianMatrix::new(mat.clone()).map_err(|_| {
            Error::InvalidDensity("matrix is not Hermitian within 1e-12".into())
        })?;
        let mut max_asym: f64 = 0.0;
        for i in 0..mat.dim() {
            for j in 0..mat.dim() {
                max_asym = max_asym.max((mat.at(i, j) - mat.at(j, i).conj()).norm());
            }
        }
        if max_asym > DENSITY_HERMITIAN_TOL {
            return Err(Error::InvalidDensity(format!(
                "matrix is not Hermitian within 1e-12 (asymmetry {max_asym:.3e})"
            )));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > DENSITY_TRACE_TOL || tr.im.abs() > DENSITY_TRACE_TOL {
            return Err(Error::InvalidDensity(format!(
                "trace must be 1, got {} + {}i",
                tr.re, tr.im
            )));
        }
        let sd = eigh(&herm)?;
        if let Some(&worst) = sd
            .eigenvalues()
            .iter()
            .filter(|&&l| l < -DENSITY_EIGENVALUE_TOL)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
        {
            return Err(Error::InvalidDensity(format!(
                "matrix has a negative eigenvalue {worst:.3e}"
            )));
        }
        Ok(Self { mat })
    }

    /// Pure state `|index><index|` (0-based site index).
    pub fn basis_state(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidParameter {
                name: "index",
                reason: format!("site index {index} out of range for dimension {dim}"),
            });
        }
        let mut mat = ComplexMatrix::zeros(dim);
        mat.set(index, index, Complex64::new(1.0, 0.0));
        Ok(Self { mat })
    }

    /// The maximally mixed state `I / dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let mut mat = ComplexMatrix::zeros(dim);
        for i in 0..dim {
            mat.set(i, i, Complex64::new(1.0 / dim as f64, 0.0));
        }
        Self { mat }
    }

    /// Internal constructor for channel outputs, whose invariants hold by
    /// construction (the channel is completely positive and trace
    /// preserving).
    pub(crate) fn from_channel_output(mat: ComplexMatrix) -> Self {
        debug_assert!((mat.trace().re - 1.0).abs() < 1e-9);
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    /// Real diagonal entry `site`, clamped to `[0, 1]`.
    pub fn site_probability(&self, site: usize) -> Result<f64> {
        if site >= self.dim() {
            return Err(Error::InvalidParameter {
                name: "site",
                reason: format!("site index {site} out of range for dimension {}", self.dim()),
            });
        }
        Ok(self.mat.at(site, site).re.clamp(0.0, 1.0))
    }

    /// All site probabilities: the real diagonal, clamped to `[0, 1]`.
    pub fn site_probabilities(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.mat.at(i, i).re.clamp(0.0, 1.0))
            .collect()
    }
}

/// Accumulated rotation angle of the exponential schedule over steps
/// `after+1 ..= upto`: the compensated sum of `k^(-zeta/2)`.
pub fn schedule_angle(zeta: f64, after: u64, upto: u64) -> f64 {
    let mut sum = KahanSum::new();
    let exponent = -0.5 * zeta;
    for k in (after + 1)..=upto {
        sum.add((k as f64).powf(exponent));
    }
    sum.value()
}

/// The step-`n` unitary `exp(i G / n^(zeta/2))`, `n >= 1`.
pub fn step_unitary(g: &HermitianMatrix, zeta: f64, n: u64) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "step index starts at 1".into(),
        });
    }
    crate::linalg::unitary_exp(g, (n as f64).powf(-0.5 * zeta))
}

/// The real orthogonal 2x2 coin at step `n`:
/// rows `[sqrt(1-x), sqrt(x)]`, `[sqrt(x), -sqrt(1-x)]` with
/// `x = lambda / n^zeta`, which must lie in `[0, 1]`.
pub fn sqrt_coin_unitary(lambda: f64, zeta: f64, n: u64) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "step index starts at 1".into(),
        });
    }
    let x = lambda / (n as f64).powf(zeta);
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("lambda / n^zeta = {x} falls outside [0, 1] at step {n}"),
        });
    }
    let a = (1.0 - x).sqrt();
    let b = x.sqrt();
    let u = ComplexMatrix::new(
        2,
        vec![
            Complex64::new(a, 0.0),
            Complex64::new(b, 0.0),
            Complex64::new(b, 0.0),
            Complex64::new(-a, 0.0),
        ],
    )?;
    UnitaryMatrix::new(u)
}

/// One application of the decoherent channel:
/// `(1 - p) U rho U* + p diag(U rho U*)`.
///
/// Zeroing the off-diagonal block is algebraically identical to summing the
/// projective Kraus terms and cheaper.
pub fn apply_channel(rho: &DensityMatrix, u: &UnitaryMatrix, p: f64) -> Result<DensityMatrix> {
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("measurement probability must lie in [0, 1], got {p}"),
        });
    }
    if rho.dim() != u.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has dimension {}, unitary has {}",
            rho.dim(),
            u.dim()
        )));
    }
    let rotated = u.matrix().mul(rho.matrix()).mul(&u.matrix().adjoint());
    let q = 1.0 - p;
    let out = ComplexMatrix::from_fn(rho.dim(), |i, j| {
        if i == j {
            rotated.at(i, i)
        } else {
            q * rotated.at(i, j)
        }
    });
    Ok(DensityMatrix::from_channel_output(out))
}

/// Site-probability history of an evolution, one row per step, with the
/// full states retained on request.
#[derive(Debug, Clone)]
pub struct Trajectory {
    probabilities: Vec<Vec<f64>>,
    states: Option<Vec<DensityMatrix>>,
}

impl Trajectory {
    fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(Error::InvalidDensity(format!(
                "site probabilities sum to {sum}, expected 1"
            )));
        }
        self.probabilities.push(row);
        Ok(())
    }

    /// Number of recorded steps, including step 0.
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.probabilities.first().map_or(0, Vec::len)
    }

    /// Probability vector after `n` steps.
    pub fn step(&self, n: usize) -> &[f64] {
        &self.probabilities[n]
    }

    pub fn last(&self) -> &[f64] {
        self.probabilities.last().expect("trajectory has step 0")
    }

    /// The probability of one site across all steps.
    pub fn site_series(&self, site: usize) -> Vec<f64> {
        self.probabilities.iter().map(|row| row[site]).collect()
    }

    /// Full states, present when evolution was asked to keep them.
    pub fn states(&self) -> Option<&[DensityMatrix]> {
        self.states.as_deref()
    }

    /// Writes `n,p1,...,pm` rows with 17-significant-digit floats.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        let m = self.dim();
        write!(out, "n")?;
        for j in 1..=m {
            write!(out, ",p{j}")?;
        }
        writeln!(out)?;
        for (n, row) in self.probabilities.iter().enumerate() {
            write!(out, "{n}")?;
            for &x in row {
                write!(out, ",{}", crate::io::format_float(x))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Evolves `rho0` through `t` channel applications, recording site
/// probabilities at every step (step 0 is the initial state).
pub fn evolve(
    rho0: &DensityMatrix,
    gen: &GeneratorSpec,
    sched: &ScheduleParams,
    dec: &DecoherenceParams,
    t: u64,
    keep_states: bool,
) -> Result<Trajectory> {
    if rho0.dim() != gen.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has dimension {}, generator has {}",
            rho0.dim(),
            gen.dim()
        )));
    }
    let stepper = UnitarySchedule::new(gen, sched)?;

    let mut trajectory = Trajectory {
        probabilities: Vec::with_capacity(t as usize + 1),
        states: keep_states.then(Vec::new),
    };
    let mut rho = rho0.clone();
    trajectory.push_row(rho.site_probabilities())?;
    if let Some(states) = trajectory.states.as_mut() {
        states.push(rho.clone());
    }
    for n in 1..=t {
        let u = stepper.at_step(n)?;
        rho = apply_channel(&rho, &u, dec.p())?;
        trajectory.push_row(rho.site_probabilities())?;
        if let Some(states) = trajectory.states.as_mut() {
            states.push(rho.clone());
        }
    }
    Ok(trajectory)
}

/// Step-unitary factory with the generator's eigendecomposition cached.
pub(crate) struct UnitarySchedule {
    zeta: f64,
    inner: ScheduleInner,
}

enum ScheduleInner {
    Exponential { spectral: SpectralDecomposition },
    SqrtCoin { lambda: f64 },
}

impl UnitarySchedule {
    pub(crate) fn new(gen: &GeneratorSpec, sched: &ScheduleParams) -> Result<Self> {
        let inner = match sched.form() {
            ScheduleForm::Exponential => ScheduleInner::Exponential {
                spectral: eigh(&gen.build())?,
            },
            ScheduleForm::SqrtCoin => {
                if gen.dim() != 2 {
                    return Err(Error::InvalidParameter {
                        name: "schedule",
                        reason: "the square-root coin schedule needs a 2-site space".into(),
                    });
                }
                let lambda = gen.lambda().ok_or(Error::InvalidParameter {
                    name: "schedule",
                    reason: "the square-root coin schedule needs a coupling-parameterised generator"
                        .into(),
                })?;
                if lambda > 1.0 {
                    return Err(Error::InvalidParameter {
                        name: "lambda",
                        reason: format!(
                            "the square-root coin schedule needs lambda <= 1, got {lambda}"
                        ),
                    });
                }
                ScheduleInner::SqrtCoin { lambda }
            }
        };
        Ok(Self {
            zeta: sched.zeta(),
            inner,
        })
    }

    pub(crate) fn at_step(&self, n: u64) -> Result<UnitaryMatrix> {
        match &self.inner {
            ScheduleInner::Exponential { spectral } => {
                spectral.unitary_exp((n as f64).powf(-0.5 * self.zeta))
            }
            ScheduleInner::SqrtCoin { lambda } => sqrt_coin_unitary(*lambda, self.zeta, n),
        }
    }
}

/// Coherent (`p = 0`) evolution of a basis state under the exponential
/// schedule in `O(t m^2)` after one eigendecomposition.
///
/// All step unitaries commute, so the product through step `n` is
/// `exp(i G S_n)` with `S_n` the compensated partial sum of `k^(-zeta/2)`.
pub fn pure_evolve_fast(
    start: usize,
    gen: &GeneratorSpec,
    sched: &ScheduleParams,
    t: u64,
) -> Result<Trajectory> {
    if sched.form() != ScheduleForm::Exponential {
        return Err(Error::InvalidParameter {
            name: "schedule",
            reason: "the fast coherent path requires the exponential schedule".into(),
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
    let b = sd.eigenvectors().matrix();
    // Components of |start> in the eigenbasis.
    let coeffs: Vec<Complex64> = (0..m).map(|l| b.at(start, l).conj()).collect();

    let mut trajectory = Trajectory {
        probabilities: Vec::with_capacity(t as usize + 1),
        states: None,
    };
    let mut row0 = vec![0.0; m];
    row0[start] = 1.0;
    trajectory.push_row(row0)?;

    let mut angle = KahanSum::new();
    let exponent = -0.5 * sched.zeta();
    for n in 1..=t {
        angle.add((n as f64).powf(exponent));
        let s_n = angle.value();
        let mut row = vec![0.0; m];
        for (j, slot) in row.iter_mut().enumerate() {
            let mut amp = Complex64::new(0.0, 0.0);
            for l in 0..m {
                amp += b.at(j, l) * Complex64::from_polar(1.0, s_n * sd.eigenvalues()[l])
                    * coeffs[l];
            }
            *slot = amp.norm_sqr().clamp(0.0, 1.0);
        }
        trajectory.push_row(row)?;
    }
    Ok(trajectory)
}
