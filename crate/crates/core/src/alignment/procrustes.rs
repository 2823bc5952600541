use super::{AlignmentAdapter, Scope};
use crate::corpus::{ClassificationItem, EmbeddingStore};
use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::objectives::mean_of;

/// Orthogonal `W` minimizing `‖P·W − C‖_F` for row-stacked `P` and `C`:
/// with `CᵀP = U·S·Vᵀ`, `W = V·Uᵀ`.
pub fn procrustes(p: &Matrix, c: &Matrix) -> Result<Matrix> {
    if p.shape() != c.shape() {
        return Err(Error::Dimension {
            expected: p.rows() * p.cols(),
            found: c.rows() * c.cols(),
        });
    }
    if p.rows() == 0 {
        return Err(Error::Input("procrustes needs at least one row".into()));
    }
    let dec = svd(&c.transpose().matmul(p)?)?;
    dec.v.matmul(&dec.u.transpose())
}

/// Adapter applying the Procrustes map to prototypes. Rows are mapped as
/// `p·W`, so the column-vector adapter holds `Wᵀ`.
pub fn procrustes_adapter(p: &Matrix, c: &Matrix, scope: Scope) -> Result<AlignmentAdapter> {
    let w = procrustes(p, c)?;
    AlignmentAdapter::new(w.transpose(), scope, true)
}

/// One `(prototype, normalized example centroid)` row pair per item.
pub fn centroid_pairs(
    items: &[ClassificationItem],
    store: &EmbeddingStore,
) -> Result<(Matrix, Matrix)> {
    if items.is_empty() {
        return Err(Error::Input("no classification items".into()));
    }
    let mut protos = Vec::with_capacity(items.len());
    let mut cents = Vec::with_capacity(items.len());
    for item in items {
        protos.push(store.require(&item.target)?.clone());
        let ex = item
            .examples
            .iter()
            .map(|e| store.require(e).map(|v| v.as_slice()))
            .collect::<Result<Vec<_>>>()?;
        if ex.is_empty() {
            return Err(Error::Schema(format!("item `{}` has no examples", item.target)));
        }
        let c = crate::linalg::EmbeddingVector::new(mean_of(&ex))?;
        cents.push(crate::linalg::normalize(&c)?);
    }
    Ok((Matrix::from_rows(&protos)?, Matrix::from_rows(&cents)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, random_orthogonal};

    #[test]
    fn identity_when_equal() {
        let p = gaussian_matrix(10, 4, 1);
        let w = procrustes(&p, &p).unwrap();
        assert!(w.max_abs_diff(&Matrix::identity(4)) <= 1e-8);
    }

    #[test]
    fn recovers_rotation() {
        for (d, seed) in [(4, 2), (16, 3)] {
            let p = gaussian_matrix(32, d, seed);
            let r = random_orthogonal(d, seed + 100);
            let c = p.matmul(&r).unwrap();
            let w = procrustes(&p, &c).unwrap();
            assert!(w.max_abs_diff(&r) <= 1e-6);
            assert!(w.orthogonality_defect() <= 1e-8);
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = gaussian_matrix(5, 3, 1);
        let c = gaussian_matrix(5, 4, 1);
        assert!(matches!(procrustes(&p, &c), Err(Error::Dimension { .. })));
    }

    #[test]
    fn adapter_maps_prototypes_onto_targets() {
        let p = gaussian_matrix(8, 3, 4);
        let r = random_orthogonal(3, 5);
        let c = p.matmul(&r).unwrap();
        let a = procrustes_adapter(&p, &c, Scope::PrototypesOnly).unwrap();
        let out = a.matrix().mul_slice(p.row(0));
        for (o, t) in out.iter().zip(c.row(0)) {
            assert!((o - t).abs() < 1e-9);
        }
    }
}
