//! Sparse symmetric matrices and the generalized eigenproblem
//! `A x = lambda M x` with `M` positive definite, optionally restricted to a
//! hyperplane `c^T x = 0`.
//!
//! Small problems are solved densely (Cholesky of `M`, then a symmetric
//! eigendecomposition); larger ones by shift-invert subspace iteration with
//! Rayleigh-Ritz, using a sparse Cholesky factor of `A - sigma M`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, WstabError};

/// Problems with at most this many unknowns use the dense solver.
pub const DENSE_LIMIT: usize = 800;

/// Residual accepted by the iterative solver before it stops.
const ITERATIVE_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 2000;

/// Builds a CSC matrix from triplets; duplicates are summed in order.
pub fn csc_from_triplets(
    n: usize,
    triplets: impl IntoIterator<Item = (usize, usize, f64)>,
) -> CscMatrix<f64> {
    let mut coo = CooMatrix::new(n, n);
    for (i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CscMatrix::from(&coo)
}

/// `alpha a + beta b`.
pub fn combine(alpha: f64, a: &CscMatrix<f64>, beta: f64, b: &CscMatrix<f64>) -> CscMatrix<f64> {
    let n = a.nrows();
    let ta = a.triplet_iter().map(|(i, j, v)| (i, j, alpha * v));
    let tb = b.triplet_iter().map(|(i, j, v)| (i, j, beta * v));
    csc_from_triplets(n, ta.chain(tb))
}

pub fn matvec(a: &CscMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (i, j, v) in a.triplet_iter() {
        y[i] += v * x[j];
    }
    y
}

/// `v^T a w`.
pub fn bilinear(a: &CscMatrix<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    a.triplet_iter().map(|(i, j, x)| v[i] * x * w[j]).sum()
}

pub fn to_dense(a: &CscMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += v;
    }
    d
}

/// Largest `|a_ij - a_ji|`.
pub fn symmetry_defect(a: &CscMatrix<f64>) -> f64 {
    let d = to_dense_if_small(a);
    match d {
        Some(d) => (&d - d.transpose()).amax(),
        None => {
            let t = a.transpose();
            let diff = combine(1.0, a, -1.0, &t);
            diff.values().iter().fold(0.0, |m, v| m.max(v.abs()))
        }
    }
}

fn to_dense_if_small(a: &CscMatrix<f64>) -> Option<DMatrix<f64>> {
    (a.nrows() <= DENSE_LIMIT).then(|| to_dense(a))
}

/// Eigenpairs in ascending order, `M`-normalized.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
    /// `|A x - lambda M x| / |x|`, with the constraint direction removed.
    pub residuals: Vec<f64>,
}

fn check_dims(
    a: &CscMatrix<f64>,
    m: &CscMatrix<f64>,
    count: usize,
    constraint: Option<&DVector<f64>>,
) -> Result<usize> {
    let n = a.nrows();
    for got in [a.ncols(), m.nrows(), m.ncols()] {
        if got != n {
            return Err(WstabError::DimensionMismatch { expected: n, got });
        }
    }
    if let Some(c) = constraint {
        if c.len() != n {
            return Err(WstabError::DimensionMismatch {
                expected: n,
                got: c.len(),
            });
        }
        if !(c.norm() > 0.0) {
            return Err(WstabError::Input("constraint vector is zero".into()));
        }
    }
    let available = n - usize::from(constraint.is_some());
    if count == 0 || count > available {
        return Err(WstabError::Input(format!(
            "requested {count} eigenpairs but only {available} degrees of freedom are available"
        )));
    }
    Ok(n)
}

fn residual(
    a: &CscMatrix<f64>,
    m: &CscMatrix<f64>,
    lambda: f64,
    x: &DVector<f64>,
    c: Option<&DVector<f64>>,
) -> f64 {
    let mut r = matvec(a, x) - matvec(m, x) * lambda;
    if let Some(c) = c {
        r -= c * (c.dot(&r) / c.dot(c));
    }
    r.norm() / x.norm()
}

/// Flips `x` so that its first largest-magnitude entry is positive.
fn fix_sign(x: &mut DVector<f64>) {
    let i = x.iamax();
    if x[i] < 0.0 {
        x.neg_mut();
    }
}

fn finish(
    a: &CscMatrix<f64>,
    m: &CscMatrix<f64>,
    constraint: Option<&DVector<f64>>,
    mut pairs: Vec<(f64, DVector<f64>)>,
) -> EigenPairs {
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = EigenPairs {
        values: Vec::new(),
        vectors: Vec::new(),
        residuals: Vec::new(),
    };
    for (lambda, mut x) in pairs {
        let scale = bilinear(m, &x, &x).sqrt();
        x /= scale;
        fix_sign(&mut x);
        out.residuals.push(residual(a, m, lambda, &x, constraint));
        out.values.push(lambda);
        out.vectors.push(x);
    }
    out
}

/// Orthonormal basis of `{x : c^T x = 0}` as the last `n - 1` columns of a
/// Householder reflection taking `c` to a multiple of `e_0`.
fn complement_basis(c: &DVector<f64>) -> DMatrix<f64> {
    let n = c.len();
    let mut v = c.clone();
    let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign * c.norm();
    let vv = v.dot(&v);
    let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vv);
    h.columns(1, n - 1).into_owned()
}

/// Dense solver; used directly for small problems and as an oracle.
pub fn dense_eigenpairs(
    a: &CscMatrix<f64>,
    m: &CscMatrix<f64>,
    count: usize,
    constraint: Option<&DVector<f64>>,
) -> Result<EigenPairs> {
    check_dims(a, m, count, constraint)?;
    let (ad, md) = (to_dense(a), to_dense(m));
    let basis = constraint.map(complement_basis);
    let (ar, mr) = match &basis {
        Some(q) => (q.transpose() * &ad * q, q.transpose() * &md * q),
        None => (ad, md),
    };
    let chol = mr
        .cholesky()
        .ok_or_else(|| WstabError::Numerical("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| WstabError::Numerical("mass factor is singular".into()))?;
    let c = &linv * ar * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });
    let back = linv.transpose();
    let pairs = order
        .into_iter()
        .take(count)
        .map(|i| {
            let y = &back * eig.eigenvectors.column(i);
            let x = match &basis {
                Some(q) => q * y,
                None => y,
            };
            (eig.eigenvalues[i], x)
        })
        .collect();
    Ok(finish(a, m, constraint, pairs))
}

/// Factor of `A - sigma M` with `sigma` below the spectrum (or the
/// constrained spectrum's enclosing unconstrained one).
struct ShiftedFactor {
    factor: CscCholesky<f64>,
    /// `(A - sigma M)^{-1} c` when constrained.
    constraint: Option<(DVector<f64>, DVector<f64>)>,
}

impl ShiftedFactor {
    fn new(
        a: &CscMatrix<f64>,
        m: &CscMatrix<f64>,
        constraint: Option<&DVector<f64>>,
    ) -> Result<(Self, f64)> {
        let mut sigma = -1.0;
        for _ in 0..64 {
            if let Ok(factor) = CscCholesky::factor(&combine(1.0, a, -sigma, m)) {
                let constraint = constraint.map(|c| {
                    let y = factor.solve(&DMatrix::from_column_slice(c.len(), 1, c.as_slice()));
                    (c.clone(), y.column(0).into_owned())
                });
                return Ok((ShiftedFactor { factor, constraint }, sigma));
            }
            sigma = 2.0 * sigma - 1.0;
        }
        Err(WstabError::Numerical(
            "no shift makes A - sigma M positive definite".into(),
        ))
    }

    /// Shift-invert step `x -> (A - sigma M)^{-1} M x`, projected onto the
    /// constraint hyperplane along `(A - sigma M)^{-1} c`.
    fn apply(&self, m: &CscMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mx = DMatrix::from_columns(
            &x.column_iter()
                .map(|c| matvec(m, &c.into_owned()))
                .collect::<Vec<_>>(),
        );
        let mut y = self.factor.solve(&mx);
        if let Some((c, kc)) = &self.constraint {
            let ckc = c.dot(kc);
            for mut col in y.column_iter_mut() {
                let mu = c.dot(&col) / ckc;
                col.axpy(-mu, kc, 1.0);
            }
        }
        y
    }
}

/// `M`-orthonormalizes the columns in place (modified Gram-Schmidt, twice).
fn m_orthonormalize(m: &CscMatrix<f64>, x: &mut DMatrix<f64>) -> Result<()> {
    for _ in 0..2 {
        for j in 0..x.ncols() {
            for i in 0..j {
                let xi = x.column(i).into_owned();
                let xj = x.column(j).into_owned();
                let proj = bilinear(m, &xi, &xj);
                x.column_mut(j).axpy(-proj, &xi, 1.0);
            }
            let xj = x.column(j).into_owned();
            let norm = bilinear(m, &xj, &xj).sqrt();
            if !(norm > 1e-300) {
                return Err(WstabError::Numerical("subspace iteration lost rank".into()));
            }
            x.column_mut(j).scale_mut(1.0 / norm);
        }
    }
    Ok(())
}

/// Shift-invert subspace iteration with Rayleigh-Ritz.
pub fn subspace_eigenpairs(
    a: &CscMatrix<f64>,
    m: &CscMatrix<f64>,
    count: usize,
    constraint: Option<&DVector<f64>>,
) -> Result<EigenPairs> {
    let n = check_dims(a, m, count, constraint)?;
    let available = n - usize::from(constraint.is_some());
    let p = (2 * count).max(count + 8).min(available);
    let (shifted, _sigma) = ShiftedFactor::new(a, m, constraint)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    if let Some(c) = constraint {
        for mut col in x.column_iter_mut() {
            let mu = c.dot(&col) / c.dot(c);
            col.axpy(-mu, c, 1.0);
        }
    }
    m_orthonormalize(m, &mut x)?;

    for _ in 0..MAX_ITERATIONS {
        let mut y = shifted.apply(m, &x);
        m_orthonormalize(m, &mut y)?;
        let ay = DMatrix::from_columns(
            &y.column_iter()
                .map(|c| matvec(a, &c.into_owned()))
                .collect::<Vec<_>>(),
        );
        let small = y.transpose() * &ay;
        let small = (&small + small.transpose()) * 0.5;
        let eig = SymmetricEigen::new(small);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[i]
                .total_cmp(&eig.eigenvalues[j])
                .then(i.cmp(&j))
        });
        let z = DMatrix::from_columns(
            &order
                .iter()
                .map(|&i| eig.eigenvectors.column(i))
                .collect::<Vec<_>>(),
        );
        x = &y * z;
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let converged = (0..count).all(|k| {
            let xk = x.column(k).into_owned();
            residual(a, m, values[k], &xk, constraint) <= ITERATIVE_TOL * values[k].abs().max(1.0)
        });
        if converged {
            let pairs = (0..count)
                .map(|k| (values[k], x.column(k).into_owned()))
                .collect();
            return Ok(finish(a, m, constraint, pairs));
        }
    }
    Err(WstabError::Numerical(format!(
        "subspace iteration did not converge in {MAX_ITERATIONS} iterations"
    )))
}

/// Smallest `count` eigenpairs of `A x = lambda M x` (restricted to
/// `c^T x = 0` when a constraint is given).
pub fn smallest_eigenpairs(
    a: &CscMatrix<f64>,
    m: &CscMatrix<f64>,
    count: usize,
    constraint: Option<&DVector<f64>>,
) -> Result<EigenPairs> {
    if a.nrows() <= DENSE_LIMIT {
        dense_eigenpairs(a, m, count, constraint)
    } else {
        subspace_eigenpairs(a, m, count, constraint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Neumann Laplacian pencil on `n` P1 elements of `[0, pi]`.
    fn laplacian(n: usize) -> (CscMatrix<f64>, CscMatrix<f64>) {
        let h = std::f64::consts::PI / n as f64;
        let mut k = Vec::new();
        let mut m = Vec::new();
        for e in 0..n {
            for (a, b) in [(e, e), (e + 1, e + 1)] {
                k.push((a, b, 1.0 / h));
                m.push((a, b, h / 3.0));
            }
            for (a, b) in [(e, e + 1), (e + 1, e)] {
                k.push((a, b, -1.0 / h));
                m.push((a, b, h / 6.0));
            }
        }
        (csc_from_triplets(n + 1, k), csc_from_triplets(n + 1, m))
    }

    #[test]
    fn dense_and_iterative_agree() {
        let (k, m) = laplacian(300);
        let d = dense_eigenpairs(&k, &m, 5, None).unwrap();
        let s = subspace_eigenpairs(&k, &m, 5, None).unwrap();
        for i in 0..5 {
            assert!(
                (d.values[i] - s.values[i]).abs() < 1e-8,
                "{:?} {:?}",
                d.values,
                s.values
            );
            assert!((d.values[i] - (i * i) as f64).abs() < 1e-3 * (1 + i * i) as f64);
            assert!(d.residuals[i] < 1e-8 && s.residuals[i] < 1e-8);
        }
    }

    #[test]
    fn constraint_removes_constant_mode() {
        let (k, m) = laplacian(200);
        let ones = DVector::from_element(201, 1.0);
        let c = matvec(&m, &ones);
        for pairs in [
            dense_eigenpairs(&k, &m, 3, Some(&c)).unwrap(),
            subspace_eigenpairs(&k, &m, 3, Some(&c)).unwrap(),
        ] {
            assert!((pairs.values[0] - 1.0).abs() < 1e-3, "{:?}", pairs.values);
            assert!(c.dot(&pairs.vectors[0]).abs() < 1e-10);
            assert!(pairs.residuals.iter().all(|r| *r < 1e-8));
        }
    }

    #[test]
    fn negative_spectrum_is_found() {
        let (k, m) = laplacian(900);
        let shifted = combine(1.0, &k, -3.5, &m);
        let s = smallest_eigenpairs(&shifted, &m, 3, None).unwrap();
        assert!((s.values[0] + 3.5).abs() < 1e-8);
        assert!((s.values[2] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn bad_requests_are_rejected() {
        let (k, m) = laplacian(4);
        assert!(dense_eigenpairs(&k, &m, 6, None).is_err());
        assert!(dense_eigenpairs(&k, &m, 0, None).is_err());
        assert!(symmetry_defect(&k) == 0.0);
    }
}
