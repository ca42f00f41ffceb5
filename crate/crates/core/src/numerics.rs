//! Dense complex linear algebra for small Hermitian systems.
//!
//! Everything here is sized for relay arrays of a handful of antennas
//! (N ≤ 16). Matrices are dense and stored in `nalgebra` containers; the
//! Hermitian eigensolver is a cyclic complex Jacobi iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};

/// Complex column (or row) vector of finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector(DVector<Complex64>);

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("vector has non-finite entries".into()));
        }
        Ok(Self(DVector::from_vec(entries)))
    }

    /// Builds a vector from real parts only.
    pub fn from_real(entries: &[f64]) -> Result<Self> {
        Self::new(entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> Complex64) -> Self {
        Self(DVector::from_fn(len, |i, _| f(i)))
    }

    /// `(1/√n)(1, …, 1)`.
    pub fn uniform(len: usize) -> Self {
        let v = Complex64::new(1.0 / (len as f64).sqrt(), 0.0);
        Self(DVector::from_element(len, v))
    }

    /// k-th canonical basis vector.
    pub fn basis(len: usize, k: usize) -> Self {
        Self::from_fn(len, |i| if i == k { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    pub fn inner(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Unit-norm copy. Fails on the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Domain("cannot normalize the zero vector".into()));
        }
        Ok(Self(self.0.unscale(n)))
    }

    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    /// Unconjugated bilinear product `Σ aₙ bₙ`, i.e. `aᵀb` (or `a·b` for a row `a`).
    pub fn bilinear(&self, other: &Self) -> Result<Complex64> {
        check_dim(self.len(), other.len())?;
        Ok(self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum())
    }

    /// Conjugated inner product `a†b`.
    pub fn dot(&self, other: &Self) -> Result<Complex64> {
        check_dim(self.len(), other.len())?;
        Ok(self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    /// Entries for which the largest-magnitude component is real and non-negative.
    pub fn phase_normalized(&self) -> Self {
        let mut best = 0;
        let mut best_abs = -1.0;
        for (k, z) in self.0.iter().enumerate() {
            let a = z.norm();
            if a > best_abs {
                best_abs = a;
                best = k;
            }
        }
        if best_abs <= 0.0 {
            return self.clone();
        }
        let z = self.0[best];
        let phase = z.conj() / z.norm();
        let mut out = self.scale(phase);
        out.0[best] = Complex64::new(out.0[best].norm(), 0.0);
        out
    }
}

impl std::ops::Index<usize> for ComplexVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

/// N×N Hermitian matrix. Every constructor mirrors the upper triangle so the
/// conjugate symmetry holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<Complex64>);

impl HermitianMatrix {
    /// Fills the upper triangle from `f(j, k)` (j ≤ k) and mirrors it.
    /// Diagonal entries keep only their real part.
    pub fn from_upper(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            m[(j, j)] = Complex64::new(f(j, j).re, 0.0);
            for k in j + 1..n {
                let z = f(j, k);
                m[(j, k)] = z;
                m[(k, j)] = z.conj();
            }
        }
        Self(m)
    }

    /// Projects an arbitrary square matrix onto its Hermitian part `(M + M†)/2`.
    pub fn hermitian_part(m: &DMatrix<Complex64>) -> Result<Self> {
        check_dim(m.nrows(), m.ncols())?;
        Ok(Self::from_upper(m.nrows(), |j, k| (m[(j, k)] + m[(k, j)].conj()) * 0.5))
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn diag(d: &[f64]) -> Self {
        Self::from_upper(d.len(), |j, k| if j == k { Complex64::new(d[j], 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    /// `v v†`.
    pub fn outer(v: &ComplexVector) -> Self {
        let s = v.as_slice();
        Self::from_upper(v.len(), |j, k| s[j] * s[k].conj())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn inner(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.0[(j, k)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|k| self.0[(k, k)].re).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self(&self.0 - &other.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Quadratic form `v† M v` (real for Hermitian M).
    pub fn quad_form(&self, v: &ComplexVector) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        let mv = &self.0 * v.inner();
        Ok(v.inner().iter().zip(mv.iter()).map(|(a, b)| (a.conj() * b).re).sum())
    }
}

/// Result of a Hermitian eigendecomposition: eigenvalues in descending order
/// with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<ComplexVector>,
}

impl Eigen {
    /// `Σ λₖ vₖ vₖ†`.
    pub fn reconstruct(&self) -> HermitianMatrix {
        let n = self.values.len();
        let mut acc = HermitianMatrix::zeros(n);
        for (lam, v) in self.values.iter().zip(&self.vectors) {
            acc = acc.add(&HermitianMatrix::outer(v).scaled(*lam)).expect("same dimension");
        }
        acc
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-14;

/// Cyclic Jacobi eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues come back sorted descending (stable, so equal eigenvalues keep
/// their diagonal order). Each eigenvector's global phase is fixed so that its
/// largest-magnitude entry is real and non-negative.
pub fn eig_hermitian(m: &HermitianMatrix) -> Result<Eigen> {
    let n = m.dim();
    if n == 0 {
        return Err(Error::Domain("empty matrix".into()));
    }
    let mut a = m.0.clone();
    let mut v = DMatrix::<Complex64>::identity(n, n);
    let fro = m.frobenius_norm();
    let off_norm = |a: &DMatrix<Complex64>| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    s += a[(j, k)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) <= JACOBI_REL_TOL * fro {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // Phase rotation makes the (p, q) entry real, then a real
                // Jacobi rotation annihilates it.
                let phase = apq / mag;
                let theta = (aqq - app) / (2.0 * mag);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U restricted to (p, q): [[c, s], [-s·e^{-iφ}, c·e^{-iφ}]]
                let pc = phase.conj();
                let u_pp = Complex64::new(c, 0.0);
                let u_pq = Complex64::new(s, 0.0);
                let u_qp = -pc * s;
                let u_qq = pc * c;

                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = arp * u_pp + arq * u_qp;
                    a[(r, q)] = arp * u_pq + arq * u_qq;
                }
                for col in 0..n {
                    let apc = a[(p, col)];
                    let aqc = a[(q, col)];
                    a[(p, col)] = u_pp.conj() * apc + u_qp.conj() * aqc;
                    a[(q, col)] = u_pq.conj() * apc + u_qq.conj() * aqc;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp * u_pp + vrq * u_qp;
                    v[(r, q)] = vrp * u_pq + vrq * u_qq;
                }
            }
        }
    }
    if !converged && off_norm(&a) > JACOBI_REL_TOL * fro {
        return Err(Error::SolverFailure(format!("Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let values = order.iter().map(|&k| a[(k, k)].re).collect();
    let vectors = order.iter().map(|&k| ComplexVector(v.column(k).into_owned()).phase_normalized()).collect();
    Ok(Eigen { values, vectors })
}

/// `Tr(AB)` for Hermitian A, B. The imaginary rounding residue is dropped.
pub fn trace_inner(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let n = a.dim();
    let mut s = 0.0;
    for j in 0..n {
        for k in 0..n {
            s += (a.0[(j, k)] * b.0[(k, j)]).re;
        }
    }
    Ok(s)
}

/// Real symmetric embedding `[[Re M, −Im M], [Im M, Re M]]`.
pub fn real_embed(m: &HermitianMatrix) -> DMatrix<f64> {
    let n = m.dim();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for k in 0..n {
            let z = m.0[(j, k)];
            out[(j, k)] = z.re;
            out[(j + n, k + n)] = z.re;
            out[(j, k + n)] = -z.im;
            out[(j + n, k)] = z.im;
        }
    }
    out
}

/// Inverse of [`real_embed`]. Any symmetric 2N×2N matrix is first averaged
/// onto the embedding structure, so PSD inputs map to PSD outputs.
pub fn real_unembed(y: &DMatrix<f64>) -> Result<HermitianMatrix> {
    check_dim(y.nrows(), y.ncols())?;
    if !y.nrows().is_multiple_of(2) {
        return Err(Error::Domain("embedding dimension must be even".into()));
    }
    let n = y.nrows() / 2;
    Ok(HermitianMatrix::from_upper(n, |j, k| {
        let re = 0.25 * (y[(j, k)] + y[(k, j)] + y[(j + n, k + n)] + y[(k + n, j + n)]);
        let im = 0.25 * (y[(j + n, k)] + y[(k, j + n)] - y[(j, k + n)] - y[(k + n, j)]);
        Complex64::new(re, im)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eig_identity() {
        let e = eig_hermitian(&HermitianMatrix::identity(3)).unwrap();
        for l in &e.values {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_diagonal() {
        let e = eig_hermitian(&HermitianMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors[0], ComplexVector::basis(2, 0));
        assert_eq!(e.vectors[1], ComplexVector::basis(2, 1));
    }

    #[test]
    fn eig_diagonal_ascending_input_is_sorted() {
        let e = eig_hermitian(&HermitianMatrix::diag(&[1.0, 5.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![5.0, 3.0, 1.0]);
        assert_eq!(e.vectors[0], ComplexVector::basis(3, 1));
    }

    #[test]
    fn eig_two_by_two_complex() {
        let m = HermitianMatrix::from_upper(2, |j, k| match (j, k) {
            (0, 0) | (1, 1) => c(2.0, 0.0),
            _ => c(0.0, 1.0),
        });
        let e = eig_hermitian(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let r = e.reconstruct().sub(&m).unwrap().frobenius_norm();
        assert!(r < 1e-12);
        // largest-magnitude entry real non-negative
        for v in &e.vectors {
            let top = v.as_slice().iter().fold(c(0.0, 0.0), |acc, z| if z.norm() > acc.norm() { *z } else { acc });
            assert!(top.im.abs() < 1e-15 && top.re >= 0.0);
        }
    }

    #[test]
    fn eig_ties_keep_first_occurrence() {
        let e = eig_hermitian(&HermitianMatrix::diag(&[2.0, 2.0])).unwrap();
        assert_eq!(e.vectors[0], ComplexVector::basis(2, 0));
    }

    #[test]
    fn trace_inner_examples() {
        let i4 = HermitianMatrix::identity(4);
        assert_eq!(trace_inner(&i4, &i4).unwrap(), 4.0);
        let a = HermitianMatrix::diag(&[1.0, 2.0]);
        let b = HermitianMatrix::diag(&[3.0, 4.0]);
        assert_eq!(trace_inner(&a, &b).unwrap(), 11.0);
        let v = ComplexVector::new(vec![c(1.0, 2.0), c(-0.5, 0.3)]).unwrap();
        let w = ComplexVector::new(vec![c(0.2, -1.0), c(1.5, 0.7)]).unwrap();
        let t = trace_inner(&HermitianMatrix::outer(&v), &HermitianMatrix::outer(&w)).unwrap();
        assert!((t - v.dot(&w).unwrap().norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn trace_inner_dimension_mismatch() {
        let r = trace_inner(&HermitianMatrix::identity(2), &HermitianMatrix::identity(3));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn real_embed_examples() {
        let e = real_embed(&HermitianMatrix::diag(&[2.5]));
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[2.5, 0.0, 0.0, 2.5]));
        assert_eq!(real_embed(&HermitianMatrix::identity(2)), DMatrix::identity(4, 4));

        let pauli = HermitianMatrix::from_upper(2, |j, k| if j == k { c(0.0, 0.0) } else { c(0.0, 1.0) });
        let mut ev: Vec<f64> = real_embed(&pauli).symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in ev.iter().zip([1.0, 1.0, -1.0, -1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn unembed_inverts_embed() {
        let m = HermitianMatrix::from_upper(3, |j, k| c((j + 2 * k) as f64, (k as f64) - (j as f64) * 0.5));
        let back = real_unembed(&real_embed(&m)).unwrap();
        assert!(back.sub(&m).unwrap().frobenius_norm() < 1e-15);
    }

    #[test]
    fn normalize_zero_vector_fails() {
        assert!(ComplexVector::zeros(3).normalized().is_err());
        assert!(ComplexVector::new(vec![c(f64::NAN, 0.0)]).is_err());
    }
}
