use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{dot_slices, Matrix};

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn fill_gaussian(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for x in out {
        *x = StandardNormal.sample(rng);
    }
}

/// Matrix of i.i.d. standard normal entries, deterministic per seed.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    fill_gaussian(&mut seeded_rng(seed), m.as_mut_slice());
    m
}

/// Haar-ish random orthogonal `d×d` matrix: the `Q` factor of a seeded
/// Gaussian matrix, with the sign convention that `R` has a positive diagonal.
pub fn random_orthogonal(d: usize, seed: u64) -> Matrix {
    assert!(d >= 1, "dimension must be positive");
    let g = gaussian_matrix(d, d, seed);
    let mut q = orthonormalize_columns(&g);
    // A Gaussian matrix is full rank with probability one; the retry only
    // guards the measure-zero case.
    let mut bump = 1;
    while q.is_none() {
        q = orthonormalize_columns(&gaussian_matrix(d, d, seed.wrapping_add(bump)));
        bump += 1;
    }
    q.unwrap()
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Produces `Q`
/// with `R_ii = ‖·‖ > 0`, or `None` if a column is numerically dependent.
pub(crate) fn orthonormalize_columns(m: &Matrix) -> Option<Matrix> {
    let (rows, cols) = m.shape();
    let mut qs: Vec<Vec<f64>> = Vec::with_capacity(cols);
    for c in 0..cols {
        let mut v = m.column(c);
        let start = super::norm(&v);
        for _ in 0..2 {
            for q in &qs {
                let p = dot_slices(&v, q);
                for (x, qi) in v.iter_mut().zip(q) {
                    *x -= p * qi;
                }
            }
        }
        let n = super::norm(&v);
        if !(n > 1e-10 * start.max(f64::MIN_POSITIVE)) {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= n);
        qs.push(v);
    }
    let mut out = Matrix::zeros(rows, cols);
    for (c, q) in qs.iter().enumerate() {
        for r in 0..rows {
            out.set(r, c, q[r]);
        }
    }
    Some(out)
}
