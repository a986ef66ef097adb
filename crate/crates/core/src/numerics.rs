//! Dense complex linear-algebra kernels shared by every solver.
//!
//! Matrices are `nalgebra` dynamic matrices over `Complex64`. The Hermitian
//! eigensolver is nalgebra's tridiagonal QR routine; everything else here is
//! small glue (quadratic forms, PSD clipping, central-difference checks).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{validation, Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Default numerical tolerances. Solver-level overrides live in `SolverConfig`.
pub mod tol {
    /// Max deviation from conjugate symmetry accepted by `hermitian_eig`.
    pub const HERMITIAN: f64 = 1e-10;
    /// Unit-modulus violation accepted for phase vectors.
    pub const MODULUS: f64 = 1e-9;
    /// Feasibility tolerance for solution-state constraints.
    pub const FEASIBILITY: f64 = 1e-9;
    /// Unit-diagonal tolerance of the lifted phase matrix.
    pub const DIAGONAL: f64 = 1e-8;
    /// Rank-one residual `tr(V) - ||V||_2` below which V counts as rank one.
    pub const RANK_ONE: f64 = 1e-4;
    /// Guard added to denominators of relative errors.
    pub const REL_GUARD: f64 = 1e-12;
}

/// A matrix known to be conjugate-symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMat);

impl HermitianMatrix {
    /// Validates conjugate symmetry within [`tol::HERMITIAN`] (relative to the
    /// largest entry) and stores the exactly symmetrized matrix.
    pub fn new(a: CMat) -> Result<Self> {
        check_hermitian(&a)?;
        Ok(Self(hermitize(&a)))
    }

    /// Stores `(A + A^H) / 2` without checking how far `A` was from it.
    pub fn symmetrized(a: &CMat) -> Self {
        Self(hermitize(a))
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: CMat,
}

impl HermitianEig {
    pub fn reconstruct(&self) -> CMat {
        self.reconstruct_with(|l| l)
    }

    /// `U diag(f(lambda)) U^H`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let s = f(l);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        hermitize(&(scaled * self.vectors.adjoint()))
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    pub fn min_value(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn dominant_vector(&self) -> CVec {
        self.vectors.column(0).into_owned()
    }
}

fn check_hermitian(a: &CMat) -> Result<()> {
    if a.nrows() != a.ncols() {
        return validation(format!("matrix is {}x{}, expected square", a.nrows(), a.ncols()));
    }
    if a.nrows() == 0 {
        return validation("matrix is empty");
    }
    let scale = a.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    let n = a.nrows();
    for i in 0..n {
        for j in i..n {
            let dev = (a[(i, j)] - a[(j, i)].conj()).norm();
            if !dev.is_finite() || dev > tol::HERMITIAN * scale {
                return validation(format!(
                    "matrix is not Hermitian: |A[{i},{j}] - conj(A[{j},{i}])| = {dev:e}"
                ));
            }
        }
    }
    Ok(())
}

/// `(A + A^H) / 2`.
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition `A = U diag(lambda) U^H` with `lambda` sorted descending.
pub fn hermitian_eig(a: &CMat) -> Result<HermitianEig> {
    check_hermitian(a)?;
    let sym = hermitize(a);
    let n = sym.nrows();
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEig { values, vectors })
}

/// Nearest positive-semidefinite matrix in Frobenius norm.
pub fn psd_project(a: &CMat) -> Result<CMat> {
    Ok(hermitian_eig(a)?.reconstruct_with(|l| l.max(0.0)))
}

/// Max over coordinates of `|central difference - analytic| / (|analytic| + 1e-12)`.
pub fn fd_gradient_check<F>(f: F, x: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if x.len() != analytic.len() {
        return validation(format!(
            "gradient has {} entries for a {}-dimensional point",
            analytic.len(),
            x.len()
        ));
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numerical(format!("objective not finite at probe {i}")));
        }
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / (analytic[i].abs() + tol::REL_GUARD));
    }
    Ok(worst)
}

/// `Re(g^H A g)`.
pub fn quad_form(a: &CMat, g: &CVec) -> f64 {
    g.dotc(&(a * g)).re
}

/// `Re tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

pub fn trace_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// `x x^H`.
pub fn outer(x: &CVec) -> CMat {
    x * x.adjoint()
}

/// Spectral norm of a Hermitian PSD matrix (its largest eigenvalue).
pub fn spectral_norm_psd(a: &CMat) -> Result<f64> {
    Ok(hermitian_eig(a)?.max_value())
}

/// Solves `A x = b` for Hermitian positive-definite `A`.
pub fn solve_hpd(a: &CMat, b: &CVec) -> Result<CVec> {
    let chol = hermitize(a)
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

pub fn normalized(x: &CVec) -> CVec {
    let n = x.norm();
    x / C64::new(n, 0.0)
}

/// Entry-wise projection onto the unit circle; zeros map to 1.
pub fn unit_modulus(x: &CVec) -> CVec {
    x.map(|z| {
        let r = z.norm();
        if r > 0.0 {
            z / r
        } else {
            C64::new(1.0, 0.0)
        }
    })
}

/// One draw from `CN(0, 1)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| complex_gaussian(rng))
}

/// Matrix square root `U diag(sqrt(max(lambda, 0))) U^H` of a Hermitian PSD matrix.
pub fn psd_sqrt(a: &CMat) -> Result<CMat> {
    Ok(hermitian_eig(a)?.reconstruct_with(|l| l.max(0.0).sqrt()))
}
