use std::time::Instant;

use super::{check_dims, KrylovConfig, LinOp, SolveReport};
use crate::sparse::{dot, norm2};
use crate::Result;

/// Restarted right-preconditioned GMRES. The preconditioner must be constant.
pub fn gmres(op: &dyn LinOp, b: &[f64], precond: &dyn LinOp, cfg: &KrylovConfig) -> Result<(Vec<f64>, SolveReport)> {
    if !precond.is_constant() {
        return Err(crate::Error::invalid("gmres requires a constant preconditioner; use fgmres"));
    }
    run(op, b, precond, cfg, false)
}

/// Flexible GMRES: stores the preconditioned directions, so the
/// preconditioner may change from one application to the next.
pub fn fgmres(op: &dyn LinOp, b: &[f64], precond: &dyn LinOp, cfg: &KrylovConfig) -> Result<(Vec<f64>, SolveReport)> {
    run(op, b, precond, cfg, true)
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        (1.0, 0.0, a)
    } else {
        let r = a.hypot(b);
        (a / r, b / r, r)
    }
}

fn run(
    op: &dyn LinOp,
    b: &[f64],
    precond: &dyn LinOp,
    cfg: &KrylovConfig,
    flexible: bool,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let n = op.dim();
    check_dims("gmres rhs", n, b.len())?;
    check_dims("gmres preconditioner", n, precond.dim())?;
    let start = Instant::now();
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    let target = cfg.target(bnorm);
    let mut report = SolveReport {
        residual_history: vec![bnorm],
        ..Default::default()
    };
    if bnorm == 0.0 {
        report.converged = true;
        report.wall_time = start.elapsed();
        return Ok((x, report));
    }
    let m = cfg.restart.min(cfg.maxit).min(n.max(1));
    let mut r = b.to_vec();
    let mut rnorm = bnorm;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    loop {
        if rnorm <= target {
            report.converged = true;
            break;
        }
        if report.iterations >= cfg.maxit {
            break;
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut zs: Vec<Vec<f64>> = Vec::new();
        v.push(r.iter().map(|ri| ri / rnorm).collect());
        // h[j] is column j of the Hessenberg matrix (length j + 2)
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = rnorm;
        let mut k = 0;
        while k < m && report.iterations < cfg.maxit {
            precond.apply(&v[k], &mut z);
            op.apply(&z, &mut w);
            if flexible {
                zs.push(z.clone());
            }
            let mut col = vec![0.0; k + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= hij * vj);
            }
            let hnext = norm2(&w);
            col[k + 1] = hnext;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let (c, s, rr) = givens(col[k], col[k + 1]);
            col[k] = rr;
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g[k + 1] = -s * g[k];
            g[k] *= c;
            h.push(col);
            k += 1;
            report.iterations += 1;
            let est = g[k].abs();
            report.residual_history.push(est);
            let breakdown = hnext <= 1e-14 * bnorm.max(f64::MIN_POSITIVE);
            if est <= target || breakdown {
                break;
            }
            v.push(w.iter().map(|wi| wi / hnext).collect());
        }
        // back substitution for y
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        if flexible {
            for (j, yj) in y.iter().enumerate() {
                x.iter_mut().zip(&zs[j]).for_each(|(xi, zi)| *xi += yj * zi);
            }
        } else {
            let mut u = vec![0.0; n];
            for (j, yj) in y.iter().enumerate() {
                u.iter_mut().zip(&v[j]).for_each(|(ui, vi)| *ui += yj * vi);
            }
            precond.apply(&u, &mut z);
            x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
        }
        op.apply(&x, &mut w);
        r.iter_mut().zip(b.iter().zip(&w)).for_each(|(ri, (bi, wi))| *ri = bi - wi);
        rnorm = norm2(&r);
        *report.residual_history.last_mut().unwrap() = rnorm;
        if k == 0 {
            break;
        }
    }
    report.wall_time = start.elapsed();
    Ok((x, report))
}
