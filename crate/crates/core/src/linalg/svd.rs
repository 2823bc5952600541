//! One-sided Jacobi SVD.
//!
//! Columns of a working copy of `M` are rotated pairwise until every pair is
//! numerically orthogonal; the rotations accumulate into `V`, the column norms
//! are the singular values and the normalized columns form `U`. Columns whose
//! norm is negligible get an orthonormal completion so that `U` always has
//! orthonormal columns, which Procrustes needs for rank-deficient inputs.

use super::Matrix;
use crate::error::{Error, Result};

/// Sweep cap before the decomposition is declared non-convergent.
pub const MAX_SWEEPS: usize = 60;

/// Relative off-diagonal threshold: a pair is orthogonal once
/// `|aᵢ·aⱼ| ≤ TOL · ‖aᵢ‖‖aⱼ‖`.
const TOL: f64 = 1e-12;

/// Thin SVD: `M = U · diag(S) · Vᵀ`, `S` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let us = {
            let mut us = self.u.clone();
            let k = self.s.len();
            for r in 0..us.rows() {
                for c in 0..k {
                    let x = us.get(r, c) * self.s[c];
                    us.set(r, c, x);
                }
            }
            us
        };
        us.matmul(&self.v.transpose()).expect("svd factors conform")
    }
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    if m.rows() < m.cols() {
        let t = jacobi(&m.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    jacobi(m)
}

fn col_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xi, yi) = (*x, *y);
        *x = c * xi - s * yi;
        *y = s * xi + c * yi;
    }
}

/// Requires `rows >= cols`.
fn jacobi(m: &Matrix) -> Result<Svd> {
    let (rows, n) = m.shape();
    debug_assert!(rows >= n);

    let mut a: Vec<Vec<f64>> = (0..n).map(|c| m.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            e
        })
        .collect();

    let scale = m.frobenius_norm();
    let null_sq = {
        let t = f64::EPSILON * rows as f64 * scale;
        t * t
    };

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let alpha = col_dot(&a[i], &a[i]);
                let beta = col_dot(&a[j], &a[j]);
                if alpha <= null_sq || beta <= null_sq {
                    continue;
                }
                let gamma = col_dot(&a[i], &a[j]);
                if gamma.abs() <= TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = a.split_at_mut(j);
                rotate(&mut lo[i], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(j);
                rotate(&mut lo[i], &mut hi[0], c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "jacobi svd did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    let sigma: Vec<f64> = a.iter().map(|col| col_dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));

    let null = null_sq.sqrt();
    let mut u_cols: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&k| {
            (sigma[k] > null).then(|| a[k].iter().map(|x| x / sigma[k]).collect::<Vec<f64>>())
        })
        .collect();
    complete_orthonormal(&mut u_cols, rows);

    let mut u = Matrix::zeros(rows, n);
    let mut vm = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (out, &k) in order.iter().enumerate() {
        let ucol = u_cols[out].as_ref().expect("completion fills every column");
        for r in 0..rows {
            u.set(r, out, ucol[r]);
        }
        for r in 0..n {
            vm.set(r, out, v[k][r]);
        }
        s.push(sigma[k]);
    }
    Ok(Svd { u, s, v: vm })
}

/// Fills `None` slots with unit vectors orthogonal to every other column,
/// drawn from the standard basis by Gram-Schmidt (applied twice).
fn complete_orthonormal(cols: &mut [Option<Vec<f64>>], len: usize) {
    let mut basis_idx = 0;
    for slot in 0..cols.len() {
        if cols[slot].is_some() {
            continue;
        }
        loop {
            assert!(basis_idx < len, "ran out of basis vectors");
            let mut cand = vec![0.0; len];
            cand[basis_idx] = 1.0;
            basis_idx += 1;
            for _ in 0..2 {
                for q in cols.iter().flatten() {
                    let p = col_dot(&cand, q);
                    for (c, qi) in cand.iter_mut().zip(q) {
                        *c -= p * qi;
                    }
                }
            }
            let nrm = col_dot(&cand, &cand).sqrt();
            if nrm > 0.5 {
                cand.iter_mut().for_each(|c| *c /= nrm);
                cols[slot] = Some(cand);
                break;
            }
        }
    }
}
