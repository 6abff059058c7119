//! Classical machinery for inhomogeneous Markov chains: minorization
//! constants against a rank-one equilibrium matrix, ordered transition
//! products, contraction certificates, and entry bounds for the unitary
//! semigroup.
//!
//! The certificate logic tracks, for factors `P_k >= delta_k Pi` with
//! `Pi P_k = Pi`, the bound `||P_1 ... P_n - Pi||_max <= prod(1 - delta_k)`.
//! Deviations are reported in the max-entry norm, which is weaker than the
//! operator norm the bound is usually stated in, so the inequality stays
//! valid.

use crate::compound::StochasticMatrix;
use crate::linalg::{HermitianMatrix, UnitaryMatrix};
use crate::{Error, Result};

/// Slack added to the contraction bound before comparing deviations, to
/// absorb roundoff in long products.
pub const CONTRACTION_SLACK: f64 = 1e-9;

/// Rank-one equilibrium matrix: every row is the same distribution.
///
/// The uniform case is the one exercised downstream (products of doubly
/// stochastic kernels equilibrate to it); the general-row constructor is
/// exposed for completeness.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumMatrix {
    row: Vec<f64>,
}

impl EquilibriumMatrix {
    /// The uniform matrix with all entries `1/dim`.
    pub fn uniform(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "dimension must be at least 1".into(),
            });
        }
        Ok(Self {
            row: vec![1.0 / dim as f64; dim],
        })
    }

    /// A general identical-rows matrix from one probability row.
    pub fn from_row(row: Vec<f64>) -> Result<Self> {
        if row.is_empty() {
            return Err(Error::InvalidParameter {
                name: "row",
                reason: "row must be nonempty".into(),
            });
        }
        if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidParameter {
                name: "row",
                reason: "row entries must be nonnegative finite reals".into(),
            });
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "row",
                reason: format!("row sums to {sum}, expected 1"),
            });
        }
        Ok(Self { row })
    }

    pub fn dim(&self) -> usize {
        self.row.len()
    }

    #[inline]
    pub fn at(&self, _row: usize, col: usize) -> f64 {
        self.row[col]
    }

    pub fn row(&self) -> &[f64] {
        &self.row
    }

    pub fn as_stochastic(&self) -> StochasticMatrix {
        let n = self.dim();
        let mut data = Vec::with_capacity(n * n);
        for _ in 0..n {
            data.extend_from_slice(&self.row);
        }
        StochasticMatrix::new(n, data).expect("equilibrium rows are stochastic")
    }

    /// Largest entry of `|P - Pi|`.
    pub fn max_abs_diff(&self, p: &StochasticMatrix) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((p.at(i, j) - self.row[j]).abs());
            }
        }
        worst
    }

    /// Max deviation of `Pi * P` from `Pi`; zero exactly when `Pi` is
    /// invariant for `P` (for the uniform row: columns of `P` sum to 1).
    pub fn invariance_defect(&self, p: &StochasticMatrix) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let entry: f64 = (0..n).map(|k| self.row[k] * p.at(k, j)).sum();
            worst = worst.max((entry - self.row[j]).abs());
        }
        worst
    }
}

/// Largest `delta` in `[0, 1]` with `P >= delta * Pi` entrywise.
///
/// Columns where the equilibrium row vanishes impose no constraint.
pub fn minorization_delta(p: &StochasticMatrix, pi: &EquilibriumMatrix) -> Result<f64> {
    if p.dim() != pi.dim() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has dimension {}, equilibrium has {}",
            p.dim(),
            pi.dim()
        )));
    }
    let n = p.dim();
    let mut delta = f64::INFINITY;
    for j in 0..n {
        let pij = pi.row()[j];
        if pij == 0.0 {
            continue;
        }
        for i in 0..n {
            delta = delta.min(p.at(i, j) / pij);
        }
    }
    if delta == f64::INFINITY {
        delta = 1.0;
    }
    Ok(delta.clamp(0.0, 1.0))
}

/// Ordered product of transition matrices (first factor applied first).
/// The empty product is the identity; the result's rows must still sum to 1
/// within an accumulated `1e-10`.
pub fn inhomogeneous_product(dim: usize, factors: &[StochasticMatrix]) -> Result<StochasticMatrix> {
    for (k, f) in factors.iter().enumerate() {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "factor {k} has dimension {}, expected {dim}",
                f.dim()
            )));
        }
    }
    let mut product = StochasticMatrix::identity(dim);
    for f in factors {
        product = product.product(f);
    }
    if product.max_row_sum_deviation() > 1e-10 {
        return Err(Error::InvalidParameter {
            name: "factors",
            reason: "accumulated row-sum drift exceeds 1e-10".into(),
        });
    }
    Ok(product)
}

/// Per-factor minorization record with running products of `1 - delta_k`.
#[derive(Debug, Clone)]
pub struct ContractionCertificate {
    deltas: Vec<f64>,
    alphas: Vec<f64>,
    running_bounds: Vec<f64>,
}

impl ContractionCertificate {
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Prefix products of the `alpha_k`; nonincreasing in `k`.
    pub fn running_bounds(&self) -> &[f64] {
        &self.running_bounds
    }

    /// The full product bound over all factors (1 for an empty sequence).
    pub fn product_bound(&self) -> f64 {
        self.running_bounds.last().copied().unwrap_or(1.0)
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

/// Contraction certificate plus the realized prefix deviations from the
/// equilibrium matrix.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    certificate: ContractionCertificate,
    running_deviations: Vec<f64>,
    /// Largest invariance defect `||Pi P_k - Pi||` over the factors; the
    /// contraction bound is only claimed when this is negligible.
    max_invariance_defect: f64,
}

impl ConvergenceReport {
    pub fn certificate(&self) -> &ContractionCertificate {
        &self.certificate
    }

    /// `||P_1 ... P_k - Pi||_max` for each prefix.
    pub fn running_deviations(&self) -> &[f64] {
        &self.running_deviations
    }

    pub fn final_deviation(&self) -> f64 {
        self.running_deviations.last().copied().unwrap_or(0.0)
    }

    pub fn max_invariance_defect(&self) -> f64 {
        self.max_invariance_defect
    }

    /// Whether every factor leaves the equilibrium row invariant (within
    /// stochastic tolerance), which is the hypothesis under which the bound
    /// applies.
    pub fn hypothesis_holds(&self) -> bool {
        self.max_invariance_defect <= 1e-11
    }

    /// True when every prefix deviation sits below its running bound plus
    /// [`CONTRACTION_SLACK`].
    pub fn bound_holds(&self) -> bool {
        self.running_deviations
            .iter()
            .zip(self.certificate.running_bounds())
            .all(|(dev, bound)| *dev <= bound + CONTRACTION_SLACK)
    }

    /// Writes `k,delta,alpha,running_bound,running_deviation` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "k,delta,alpha,running_bound,running_deviation")?;
        for k in 0..self.certificate.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                k + 1,
                crate::io::format_float(self.certificate.deltas()[k]),
                crate::io::format_float(self.certificate.alphas()[k]),
                crate::io::format_float(self.certificate.running_bounds()[k]),
                crate::io::format_float(self.running_deviations[k]),
            )?;
        }
        Ok(())
    }
}

/// Evaluates the contraction certificate and realized deviations for an
/// ordered factor sequence.
pub fn convergence_report(
    factors: &[StochasticMatrix],
    pi: &EquilibriumMatrix,
) -> Result<ConvergenceReport> {
    let dim = pi.dim();
    let mut deltas = Vec::with_capacity(factors.len());
    let mut alphas = Vec::with_capacity(factors.len());
    let mut running_bounds = Vec::with_capacity(factors.len());
    let mut running_deviations = Vec::with_capacity(factors.len());
    let mut bound = 1.0f64;
    let mut prefix = StochasticMatrix::identity(dim);
    let mut max_defect: f64 = 0.0;
    for f in factors {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "factor has dimension {}, equilibrium has {dim}",
                f.dim()
            )));
        }
        let delta = minorization_delta(f, pi)?;
        let alpha = 1.0 - delta;
        bound *= alpha;
        prefix = prefix.product(f);
        deltas.push(delta);
        alphas.push(alpha);
        running_bounds.push(bound);
        running_deviations.push(pi.max_abs_diff(&prefix));
        max_defect = max_defect.max(pi.invariance_defect(f));
    }
    Ok(ConvergenceReport {
        certificate: ContractionCertificate {
            deltas,
            alphas,
            running_bounds,
        },
        running_deviations,
        max_invariance_defect: max_defect,
    })
}

/// Analytic minorization constant for one measurement segment of the
/// exponential schedule: `m eps0^2 T^2 / (4 sigma^zeta)`, valid once the
/// accumulated angle sits inside the semigroup-bound hypothesis.
pub fn analytic_minorization_delta(
    dim: usize,
    epsilon0: f64,
    gap: u64,
    sigma: u64,
    zeta: f64,
) -> f64 {
    let t = gap as f64;
    (dim as f64 * epsilon0 * epsilon0 * t * t / (4.0 * (sigma as f64).powf(zeta))).clamp(0.0, 1.0)
}

/// Entry bounds for `U = exp(i theta G)` under the hypothesis
/// `theta <= theta0 = min(eps0 / (4 ||G||^2), 1 / (4 ||G||))` with
/// `eps0 = min |G_jk| > 0`:
/// off-diagonal moduli lie in `[theta eps0 / 2, 2 theta ||G||]` and diagonal
/// moduli are at least `1/2`.
#[derive(Debug, Clone, Copy)]
pub struct SemigroupBoundsReport {
    pub theta: f64,
    pub theta0: f64,
    pub epsilon0: f64,
    pub inf_norm: f64,
    /// Whether `theta <= theta0`; outside the hypothesis the bound checks
    /// are reported but not asserted.
    pub in_hypothesis: bool,
    pub offdiag_lower_ok: bool,
    pub offdiag_upper_ok: bool,
    pub diag_lower_ok: bool,
}

impl SemigroupBoundsReport {
    /// All three bounds hold and the hypothesis applies.
    pub fn all_hold(&self) -> bool {
        self.in_hypothesis && self.offdiag_lower_ok && self.offdiag_upper_ok && self.diag_lower_ok
    }
}

/// Evaluates `exp(i theta G)` and checks the semigroup entry bounds.
///
/// Requires every entry of `G` to be nonzero (`eps0 > 0`); generators with
/// vanishing entries (cyclic graphs) are outside the hypothesis entirely.
pub fn semigroup_bounds_check(g: &HermitianMatrix, theta: f64) -> Result<SemigroupBoundsReport> {
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("angle must be a nonnegative real, got {theta}"),
        });
    }
    let epsilon0 = g.min_entry_modulus();
    if epsilon0 <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "epsilon0",
            reason: "the entry bounds require all generator entries nonzero".into(),
        });
    }
    let inf_norm = g.matrix().inf_norm();
    let theta0 = (epsilon0 / (4.0 * inf_norm * inf_norm)).min(1.0 / (4.0 * inf_norm));
    let u: UnitaryMatrix = crate::linalg::unitary_exp(g, theta)?;

    let n = g.dim();
    let lower = 0.5 * theta * epsilon0;
    let upper = 2.0 * theta * inf_norm;
    let mut offdiag_lower_ok = true;
    let mut offdiag_upper_ok = true;
    let mut diag_lower_ok = true;
    for i in 0..n {
        for j in 0..n {
            let modulus = u.at(i, j).norm();
            if i == j {
                diag_lower_ok &= modulus >= 0.5;
            } else {
                offdiag_lower_ok &= modulus >= lower;
                offdiag_upper_ok &= modulus <= upper;
            }
        }
    }
    Ok(SemigroupBoundsReport {
        theta,
        theta0,
        epsilon0,
        inf_norm,
        in_hypothesis: theta <= theta0,
        offdiag_lower_ok,
        offdiag_upper_ok,
        diag_lower_ok,
    })
}
