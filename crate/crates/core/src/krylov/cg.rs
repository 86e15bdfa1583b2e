use std::time::Instant;

use super::{check_dims, KrylovConfig, SolveReport};
use crate::error::Error;
use crate::sparse::{dot, norm2, SparseMat};
use crate::Result;

/// Conjugate gradients with Jacobi preconditioning. Fails with
/// [`Error::Indefinite`] on nonpositive curvature.
pub fn pcg_jacobi(a: &SparseMat, b: &[f64], cfg: &KrylovConfig) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let n = a.nrows();
    check_dims("pcg rhs", n, b.len())?;
    let start = Instant::now();
    let dinv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = norm2(b);
    let target = cfg.target(bnorm);
    let mut report = SolveReport {
        residual_history: vec![bnorm],
        ..Default::default()
    };
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    while bnorm > 0.0 && report.final_residual() > target && report.iterations < cfg.maxit {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Indefinite(pap));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        report.iterations += 1;
        report.residual_history.push(norm2(&r));
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    report.converged = report.final_residual() <= target;
    report.wall_time = start.elapsed();
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> SparseMat {
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 2.0 + shift));
            if i > 0 {
                e.push((i, i - 1, -1.0));
                e.push((i - 1, i, -1.0));
            }
        }
        SparseMat::from_triplets(n, n, e)
    }

    #[test]
    fn diagonal_in_one_iteration() {
        let a = SparseMat::from_diagonal(&[1.0, 4.0, 9.0, 0.5]);
        let b = [1.0, 2.0, 3.0, 4.0];
        let (x, rep) = pcg_jacobi(&a, &b, &KrylovConfig::relative(1e-14, 1, 10)).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!((x[2] - 3.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn a_norm_error_monotone() {
        let a = laplace_1d(40, 0.01);
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul(&xs);
        let mut last = f64::INFINITY;
        for it in 1..30 {
            let (x, _) = pcg_jacobi(&a, &b, &KrylovConfig::relative(0.0, 1, it)).unwrap();
            let e: Vec<f64> = x.iter().zip(&xs).map(|(p, q)| p - q).collect();
            let en = dot(&e, &a.mul(&e));
            assert!(en <= last * (1.0 + 1e-10));
            last = en;
        }
    }

    #[test]
    fn detects_indefinite() {
        let a = SparseMat::from_diagonal(&[1.0, -1.0]);
        let err = pcg_jacobi(&a, &[0.0, 1.0], &KrylovConfig::relative(1e-10, 1, 10)).unwrap_err();
        assert!(matches!(err, Error::Indefinite(_)));
    }
}
