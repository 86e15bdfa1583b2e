use faer::linalg::solvers::Solve;
use faer::sparse::{linalg::solvers::Lu, SparseColMat, Triplet};
use faer::{Mat, MatMut};

use super::{check_dims, LinOp};
use crate::error::Error;
use crate::sparse::SparseMat;
use crate::Result;

/// Sparse LU factorization (backed by faer).
///
/// Optionally bordered by constraint rows: with constraint vectors `c_k`
/// the factored matrix is `[A C; C^T 0]` and [`DirectSolver::solve`]
/// returns the `A`-part of the solution, which then satisfies `c_k . x = 0`.
pub struct DirectSolver {
    n: usize,
    n_total: usize,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectSolver").field("n", &self.n).field("n_total", &self.n_total).finish()
    }
}

impl DirectSolver {
    pub fn new(a: &SparseMat) -> Result<Self> {
        Self::bordered(a, &[])
    }

    pub fn bordered(a: &SparseMat, constraints: &[Vec<f64>]) -> Result<Self> {
        let n = a.nrows();
        check_dims("direct solver (square)", n, a.ncols())?;
        let nt = n + constraints.len();
        let mut trip: Vec<Triplet<usize, usize, f64>> = a.iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        for (k, c) in constraints.iter().enumerate() {
            check_dims("direct solver constraint", n, c.len())?;
            for (i, &v) in c.iter().enumerate() {
                if v != 0.0 {
                    trip.push(Triplet::new(i, n + k, v));
                    trip.push(Triplet::new(n + k, i, v));
                }
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(nt, nt, &trip)
            .map_err(|e| Error::Singular(format!("sparse matrix construction failed: {e:?}")))?;
        // faer's numeric phase panics on an exactly zero pivot instead of returning an error
        let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| mat.sp_lu()))
            .map_err(|_| Error::Singular("zero pivot in sparse LU".into()))?
            .map_err(|e| Error::Singular(format!("LU factorization failed: {e:?}")))?;
        let s = Self { n, n_total: nt, lu };
        // probe for numerical singularity
        let probe = s.solve_full(&vec![1.0; nt]);
        if probe.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("LU factorization produced non-finite values".into()));
        }
        Ok(s)
    }

    fn solve_full(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.lu
            .solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n_total, 1));
        x
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "direct solve rhs length");
        let mut rhs = b.to_vec();
        rhs.resize(self.n_total, 0.0);
        let mut x = self.solve_full(&rhs);
        x.truncate(self.n);
        x
    }
}

impl LinOp for DirectSolver {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.solve(x));
    }
}

/// Dense LU solve with partial pivoting.
pub fn dense_solve(a: &Mat<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    check_dims("dense solve", n, a.ncols())?;
    check_dims("dense solve rhs", n, b.len())?;
    let lu = a.partial_piv_lu();
    let mut x = b.to_vec();
    lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("dense LU produced non-finite values".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::norm2;

    #[test]
    fn identity_returns_rhs() {
        let s = DirectSolver::new(&SparseMat::identity(4)).unwrap();
        assert_eq!(s.solve(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn residual_small() {
        let n = 30;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 4.0));
            e.push((i, (i + 1) % n, -1.0));
            e.push((i, (i + 7) % n, 0.5));
        }
        let a = SparseMat::from_triplets(n, n, e);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let x = DirectSolver::new(&a).unwrap().solve(&b);
        let r: Vec<f64> = a.mul(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-12 * norm2(&b));
    }

    #[test]
    fn singular_detected() {
        let a = SparseMat::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(DirectSolver::new(&a).is_err());
        let z = SparseMat::zeros(3, 3);
        assert!(DirectSolver::new(&z).is_err());
    }

    #[test]
    fn bordered_removes_nullspace() {
        // 1D Neumann Laplacian has constants in its kernel
        let n = 10;
        let mut e = Vec::new();
        for i in 0..n - 1 {
            e.push((i, i, 1.0));
            e.push((i + 1, i + 1, 1.0));
            e.push((i, i + 1, -1.0));
            e.push((i + 1, i, -1.0));
        }
        let a = SparseMat::from_triplets(n, n, e);
        let s = DirectSolver::bordered(&a, &[vec![1.0; n]]).unwrap();
        let mut b: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let x = s.solve(&b);
        assert!(x.iter().sum::<f64>().abs() < 1e-12);
        let r: Vec<f64> = a.mul(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) < 1e-12);
    }

    #[test]
    fn hilbert_residual_small_error_larger() {
        let n = 8;
        let h = Mat::<f64>::from_fn(n, n, |i, j| 1.0 / (i + j + 1) as f64);
        let xs = vec![1.0; n];
        let b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[(i, j)]).sum()).collect();
        let x = dense_solve(&h, &b).unwrap();
        let r: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| h[(i, j)] * x[j]).sum::<f64>() - b[i])
            .collect();
        let err: Vec<f64> = x.iter().zip(&xs).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-14 * norm2(&b));
        assert!(norm2(&err) > norm2(&r));
    }
}
