//! Dense complex matrix arithmetic, Hermitian eigendecomposition, and
//! spectral matrix exponentials.
//!
//! Everything is sized for small dense problems (site spaces up to a few
//! dozen states). Matrices are stored row-major as flat vectors of
//! `Complex64`; all types are immutable after construction, so values can be
//! shared freely across threads.
//!
//! The eigensolver is a cyclic Jacobi iteration on the complex Hermitian
//! matrix: each rotation annihilates one off-diagonal pair, sweeps repeat
//! until the off-diagonal Frobenius norm falls below `1e-13` relative to the
//! matrix norm. At these sizes it is simple, dependency-free and accurate to
//! well below the tolerances the rest of the crate asserts.

use num_complex::Complex64;

use crate::{Error, Result};

/// Absolute tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-14;
/// Max-entry tolerance on `U U* - I` for accepting a matrix as unitary.
pub const UNITARY_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-13;

/// Square matrix of complex double-precision entries, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries. The dimension must be at
    /// least 1, `data` must hold exactly `dim * dim` finite entries.
    pub fn new(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "matrix dimension must be at least 1".into(),
            });
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "entries",
                reason: "matrix entries must be finite".into(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix entry by entry from `f(row, col)`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] = value;
    }

    /// Matrix product `self * rhs`. Panics on dimension mismatch; all
    /// in-crate callers multiply same-sized square matrices.
    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions must agree");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |i, j| self.at(j, i).conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.at(i, i)).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry modulus of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        assert_eq!(self.dim, rhs.dim, "matrix dimensions must agree");
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Operator infinity norm: the largest row sum of entry moduli.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.at(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Hermitian matrix. Construction symmetrizes exactly, `H = (M + M*) / 2`,
/// after rejecting inputs whose asymmetry exceeds [`HERMITIAN_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    base: ComplexMatrix,
}

impl HermitianMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let n = matrix.dim();
        let mut max_asymmetry: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let d = (matrix.at(i, j) - matrix.at(j, i).conj()).norm();
                max_asymmetry = max_asymmetry.max(d);
            }
        }
        if max_asymmetry > HERMITIAN_TOL {
            return Err(Error::NotHermitian { max_asymmetry });
        }
        let mut base = ComplexMatrix::zeros(n);
        for i in 0..n {
            base.set(i, i, Complex64::new(matrix.at(i, i).re, 0.0));
            for j in (i + 1)..n {
                let avg = 0.5 * (matrix.at(i, j) + matrix.at(j, i).conj());
                base.set(i, j, avg);
                base.set(j, i, avg.conj());
            }
        }
        Ok(Self { base })
    }

    /// Builds the Hermitian matrix with `f(i, j)` above the diagonal,
    /// `f(i, i).re` on it, and conjugates below.
    pub fn from_upper(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut base = ComplexMatrix::zeros(dim);
        for i in 0..dim {
            base.set(i, i, Complex64::new(f(i, i).re, 0.0));
            for j in (i + 1)..dim {
                let z = f(i, j);
                base.set(i, j, z);
                base.set(j, i, z.conj());
            }
        }
        Self { base }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Smallest entry modulus, the minorization constant of the generator.
    pub fn min_entry_modulus(&self) -> f64 {
        self.base
            .data
            .iter()
            .map(|z| z.norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Unitary matrix; construction verifies the max entry of `U U* - I` is
/// within [`UNITARY_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    base: ComplexMatrix,
}

impl UnitaryMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let product = matrix.mul(&matrix.adjoint());
        let max_deviation = product.max_abs_diff(&ComplexMatrix::identity(matrix.dim()));
        if max_deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { max_deviation });
        }
        Ok(Self { base: matrix })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.base.at(row, col)
    }
}

/// Eigendecomposition of a Hermitian matrix: `H = B diag(eigenvalues) B*`
/// with real eigenvalues sorted descending (stable under ties) and the
/// eigenvectors as columns of the unitary `B`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: UnitaryMatrix,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &UnitaryMatrix {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Rebuilds `B diag(eigenvalues) B*`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let b = self.eigenvectors.matrix();
        let n = self.dim();
        ComplexMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|l| b.at(i, l) * self.eigenvalues[l] * b.at(j, l).conj())
                .sum()
        })
    }

    /// Forms `exp(i theta H) = B diag(exp(i theta lambda_l)) B*` from the
    /// cached decomposition.
    pub fn unitary_exp(&self, theta: f64) -> Result<UnitaryMatrix> {
        let n = self.dim();
        let b = self.eigenvectors.matrix();
        let phases: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .map(|&l| Complex64::from_polar(1.0, theta * l))
            .collect();
        let u = ComplexMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|l| b.at(i, l) * phases[l] * b.at(j, l).conj())
                .sum()
        });
        UnitaryMatrix::new(u)
    }
}

/// Diagonalizes a Hermitian matrix by cyclic Jacobi rotations.
///
/// Sweeps run until the off-diagonal Frobenius norm drops below
/// `1e-13 * ||H||_F`, with a cap of 100 sweeps; hitting the cap yields
/// [`Error::EighDidNotConverge`] carrying the residual.
pub fn eigh(h: &HermitianMatrix) -> Result<SpectralDecomposition> {
    let n = h.dim();
    let mut a = h.matrix().clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();

    if scale > 0.0 {
        let tol = JACOBI_REL_TOL * scale;
        let mut converged = false;
        let mut residual = off_diagonal_norm(&a);
        for _ in 0..JACOBI_MAX_SWEEPS {
            if residual <= tol {
                converged = true;
                break;
            }
            for p in 0..n - 1 {
                for q in (p + 1)..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
            residual = off_diagonal_norm(&a);
        }
        if !converged && residual > tol {
            return Err(Error::EighDidNotConverge {
                sweeps: JACOBI_MAX_SWEEPS,
                residual,
            });
        }
    }

    // Sort descending; sort_by is stable so ties keep column order.
    let mut order: Vec<usize> = (0..n).collect();
    let raw: Vec<f64> = (0..n).map(|i| a.at(i, i).re).collect();
    order.sort_by(|&i, &j| raw[j].partial_cmp(&raw[i]).expect("finite eigenvalues"));

    let eigenvalues: Vec<f64> = order.iter().map(|&l| raw[l]).collect();
    let b = ComplexMatrix::from_fn(n, |i, j| v.at(i, order[j]));
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors: UnitaryMatrix::new(b)?,
    })
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.at(i, j).norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// One complex Jacobi rotation annihilating the (p, q) entry.
///
/// With `a_pq = |a_pq| e^{i beta}`, the plane rotation
/// `J = [[c, s e^{i beta}], [-s e^{-i beta}, c]]` (rows/columns p, q)
/// applied as `A <- J* A J` zeroes the pair; `V <- V J` accumulates the
/// eigenvectors.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a.at(p, q);
    let abs_apq = apq.norm();
    if abs_apq == 0.0 {
        return;
    }
    let phase = apq / abs_apq;
    let app = a.at(p, p).re;
    let aqq = a.at(q, q).re;

    // Numerically stable tangent of the rotation angle.
    let theta = (aqq - app) / (2.0 * abs_apq);
    let t = if theta == 0.0 {
        1.0
    } else {
        theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    let n = a.dim();
    // Column update: A <- A J.
    for k in 0..n {
        let akp = a.at(k, p);
        let akq = a.at(k, q);
        a.set(k, p, c * akp - s * phase.conj() * akq);
        a.set(k, q, s * phase * akp + c * akq);
    }
    // Row update: A <- J* A.
    for k in 0..n {
        let apk = a.at(p, k);
        let aqk = a.at(q, k);
        a.set(p, k, c * apk - s * phase * aqk);
        a.set(q, k, s * phase.conj() * apk + c * aqk);
    }
    // The rotation is exact on the pair; clear roundoff residue and keep the
    // diagonal real.
    a.set(p, q, Complex64::new(0.0, 0.0));
    a.set(q, p, Complex64::new(0.0, 0.0));
    a.set(p, p, Complex64::new(a.at(p, p).re, 0.0));
    a.set(q, q, Complex64::new(a.at(q, q).re, 0.0));
    for k in 0..n {
        let vkp = v.at(k, p);
        let vkq = v.at(k, q);
        v.set(k, p, c * vkp - s * phase.conj() * vkq);
        v.set(k, q, s * phase * vkp + c * vkq);
    }
}

/// `exp(i theta H)` through the spectral decomposition of `H`.
pub fn unitary_exp(h: &HermitianMatrix, theta: f64) -> Result<UnitaryMatrix> {
    if !theta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("rotation angle must be finite, got {theta}"),
        });
    }
    eigh(h)?.unitary_exp(theta)
}

/// Compensated (Kahan) accumulator for long sums of small terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Independent oracle: truncated Taylor series of exp(i theta H).
    fn taylor_exp(h: &HermitianMatrix, theta: f64, terms: usize) -> ComplexMatrix {
        let n = h.dim();
        let scaled = ComplexMatrix::from_fn(n, |i, j| c(0.0, theta) * h.matrix().at(i, j));
        let mut sum = ComplexMatrix::identity(n);
        let mut power = ComplexMatrix::identity(n);
        let mut factorial = 1.0;
        for k in 1..=terms {
            power = power.mul(&scaled);
            factorial *= k as f64;
            for i in 0..n {
                for j in 0..n {
                    let acc = sum.at(i, j) + power.at(i, j) / factorial;
                    sum.set(i, j, acc);
                }
            }
        }
        sum
    }

    /// Independent oracle: all roots of a monic polynomial by Durand-Kerner.
    fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
        let degree = coeffs.len();
        let mut roots: Vec<Complex64> = (0..degree)
            .map(|k| Complex64::from_polar(0.9, 0.7 + 2.2 * k as f64))
            .collect();
        let eval = |x: Complex64| -> Complex64 {
            let mut v = Complex64::new(1.0, 0.0);
            for &a in coeffs {
                v = v * x + a;
            }
            v
        };
        for _ in 0..500 {
            let old = roots.clone();
            for i in 0..degree {
                let mut denom = Complex64::new(1.0, 0.0);
                for j in 0..degree {
                    if j != i {
                        denom *= old[i] - old[j];
                    }
                }
                roots[i] = old[i] - eval(old[i]) / denom;
            }
        }
        roots
    }

    /// Characteristic polynomial coefficients via Faddeev-LeVerrier, again
    /// independent of the Jacobi path.
    fn characteristic_polynomial(m: &ComplexMatrix) -> Vec<f64> {
        let n = m.dim();
        let mut coeffs = vec![0.0; n];
        let mut aux = ComplexMatrix::identity(n);
        for k in 1..=n {
            let prod = m.mul(&aux);
            let ck = -prod.trace().re / k as f64;
            coeffs[k - 1] = ck;
            aux = prod;
            for i in 0..n {
                let d = aux.at(i, i) + c(ck, 0.0);
                aux.set(i, i, d);
            }
        }
        coeffs
    }

    fn all_lambda_2x2(lambda: f64) -> HermitianMatrix {
        HermitianMatrix::from_upper(2, |_, _| c(lambda, 0.0))
    }

    #[test]
    fn eigh_rank_one_two_by_two() {
        let h = all_lambda_2x2(1.0);
        let sd = eigh(&h).unwrap();
        assert!((sd.eigenvalues()[0] - 2.0).abs() < 1e-12);
        assert!(sd.eigenvalues()[1].abs() < 1e-12);
        let b = sd.eigenvectors().matrix();
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        // Columns up to a unit phase.
        for (col, expected) in [(0, [1.0, 1.0]), (1, [1.0, -1.0])] {
            let lead = b.at(0, col);
            let phase = lead / lead.norm();
            for row in 0..2 {
                let entry = b.at(row, col) / phase;
                assert!((entry.re - expected[row] * inv_sqrt2).abs() < 1e-12);
                assert!(entry.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eigh_identity_has_unit_spectrum() {
        let h = HermitianMatrix::new(ComplexMatrix::identity(4)).unwrap();
        let sd = eigh(&h).unwrap();
        for &l in sd.eigenvalues() {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eigh_cyclic_five_matches_characteristic_roots() {
        let lambda = 0.5;
        let h = HermitianMatrix::from_upper(5, |i, j| {
            if j == i + 1 || (i == 0 && j == 4) {
                c(lambda, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let sd = eigh(&h).unwrap();

        let coeffs = characteristic_polynomial(h.matrix());
        let mut roots: Vec<f64> = polynomial_roots(&coeffs).iter().map(|z| z.re).collect();
        roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (got, want) in sd.eigenvalues().iter().zip(&roots) {
            assert!(
                (got - want).abs() < 1e-6,
                "eigenvalue {got} vs root {want}"
            );
        }

        // Analytic spectrum of the scaled cycle: 2 lambda cos(2 pi k / 5).
        let mut analytic: Vec<f64> = (0..5)
            .map(|k| 2.0 * lambda * (2.0 * std::f64::consts::PI * k as f64 / 5.0).cos())
            .collect();
        analytic.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (got, want) in sd.eigenvalues().iter().zip(&analytic) {
            assert!((got - want).abs() < 1e-11);
        }
    }

    #[test]
    fn eigh_zero_matrix() {
        let h = HermitianMatrix::new(ComplexMatrix::zeros(3)).unwrap();
        let sd = eigh(&h).unwrap();
        assert!(sd.eigenvalues().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn unitary_exp_zero_angle_is_identity() {
        let h = all_lambda_2x2(0.7);
        let u = unitary_exp(&h, 0.0).unwrap();
        assert!(u.matrix().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-14);
    }

    #[test]
    fn unitary_exp_matches_taylor_series() {
        let h = all_lambda_2x2(1.0);
        let u = unitary_exp(&h, 0.1).unwrap();
        let oracle = taylor_exp(&h, 0.1, 40);
        assert!(u.matrix().max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn unitary_exp_is_unitary() {
        let h = HermitianMatrix::from_upper(3, |i, j| c(0.3 + i as f64, 0.1 * j as f64));
        let u = unitary_exp(&h, 0.3).unwrap();
        let gram = u.matrix().mul(&u.matrix().adjoint());
        assert!(gram.max_abs_diff(&ComplexMatrix::identity(3)) <= 1e-12);
    }

    #[test]
    fn non_hermitian_input_rejected() {
        let m = ComplexMatrix::new(2, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
            .unwrap();
        assert!(matches!(
            HermitianMatrix::new(m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn kahan_sum_beats_naive_on_long_tails() {
        let mut kahan = KahanSum::new();
        let mut naive = 0.0f64;
        for k in 1..=1_000_000u64 {
            let x = (k as f64).powf(-0.5);
            kahan.add(x);
            naive += x;
        }
        // Both close, but the compensated path is the reference elsewhere.
        assert!((kahan.value() - naive).abs() < 1e-6);
        assert!(kahan.value().is_finite());
    }

    fn arb_hermitian(max_dim: usize) -> impl Strategy<Value = HermitianMatrix> {
        (2..=max_dim)
            .prop_flat_map(|n| {
                proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
                    .prop_map(move |vals| {
                        HermitianMatrix::from_upper(n, |i, j| {
                            let (re, im) = vals[i * n + j];
                            c(re, im)
                        })
                    })
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_exp_inverse(h in arb_hermitian(6), theta in -3.0f64..3.0) {
            let u = unitary_exp(&h, theta).unwrap();
            let v = unitary_exp(&h, -theta).unwrap();
            let prod = u.matrix().mul(v.matrix());
            prop_assert!(prod.max_abs_diff(&ComplexMatrix::identity(h.dim())) <= 1e-12);
        }

        #[test]
        fn prop_exp_semigroup(h in arb_hermitian(5), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let u = unitary_exp(&h, a).unwrap();
            let v = unitary_exp(&h, b).unwrap();
            let w = unitary_exp(&h, a + b).unwrap();
            prop_assert!(u.matrix().mul(v.matrix()).max_abs_diff(w.matrix()) <= 1e-11);
        }

        #[test]
        fn prop_eigh_reconstruction(h in arb_hermitian(16)) {
            let sd = eigh(&h).unwrap();
            let residual = sd.reconstruct().max_abs_diff(h.matrix());
            prop_assert!(residual <= 1e-11 * (1.0 + h.matrix().max_abs()));
        }

        #[test]
        fn prop_conjugation_preserves_trace(h in arb_hermitian(4), theta in -3.0f64..3.0) {
            let n = h.dim();
            // A fixed positive unit-trace matrix built from the Hermitian input.
            let rho = ComplexMatrix::from_fn(n, |i, j| {
                if i == j { c(1.0 / n as f64, 0.0) } else { c(0.0, 0.0) }
            });
            let u = unitary_exp(&h, theta).unwrap();
            let rotated = u.matrix().mul(&rho).mul(&u.matrix().adjoint());
            prop_assert!((rotated.trace().re - 1.0).abs() <= 1e-12);
            prop_assert!(rotated.trace().im.abs() <= 1e-12);
        }
    }
}
