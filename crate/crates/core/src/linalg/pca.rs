use super::{svd, EmbeddingVector, Matrix};
use crate::error::{Error, Result};

/// Projects mean-centered vectors onto their top-`k` principal directions.
///
/// Each component's sign is fixed so that its largest-magnitude loading is
/// positive. Components beyond the rank of the centered data project to zero.
pub fn pca_project(vectors: &[EmbeddingVector], k: usize) -> Result<Vec<Vec<f64>>> {
    if vectors.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "pca needs at least 2 vectors, got {}",
            vectors.len()
        )));
    }
    let d = vectors[0].dim();
    if k == 0 || k > d {
        return Err(Error::Input(format!("k = {k} must lie in 1..={d}")));
    }
    let n = vectors.len();
    let x = Matrix::from_rows(vectors)?;
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = x;
    for r in 0..n {
        for c in 0..d {
            let v = centered.get(r, c) - mean[c];
            centered.set(r, c, v);
        }
    }

    let dec = svd(&centered)?;
    let available = dec.v.cols().min(k);
    let mut directions: Vec<Vec<f64>> = (0..available).map(|j| dec.v.column(j)).collect();
    for dir in &mut directions {
        let lead = dir
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > dir[best].abs() { i } else { best });
        if dir[lead] < 0.0 {
            dir.iter_mut().for_each(|x| *x = -*x);
        }
    }

    Ok((0..n)
        .map(|r| {
            let row = centered.row(r);
            (0..k)
                .map(|j| {
                    directions
                        .get(j)
                        .map_or(0.0, |dir| super::dot_slices(row, dir))
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
        let n = xs.clone().count() as f64;
        let mean = xs.clone().sum::<f64>() / n;
        xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn points_on_a_line() {
        let pts: Vec<_> = (0..6)
            .map(|i| ev(&[i as f64, 2.0 * i as f64 + 1.0]))
            .collect();
        let proj = pca_project(&pts, 2).unwrap();
        assert!(variance(proj.iter().map(|p| p[1])) < 1e-24);
        assert!(variance(proj.iter().map(|p| p[0])) > 1.0);
    }

    #[test]
    fn antipodal_pair() {
        let proj = pca_project(&[ev(&[1.0, 2.0, 3.0]), ev(&[-1.0, -2.0, -3.0])], 1).unwrap();
        assert!((proj[0][0] + proj[1][0]).abs() < 1e-12);
        assert!((proj[0][0].abs() - 14f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn variances_match_eigenvalues_of_covariance() {
        // Oracle: power iteration with deflation on the sample covariance,
        // independent of the SVD path.
        let g = gaussian_matrix(30, 5, 3);
        let pts: Vec<_> = (0..30)
            .map(|r| {
                let row = g.row(r);
                ev(&[row[0] * 3.0, row[1] * 2.0 + row[0], row[2], row[3] * 0.5, row[4] * 0.1])
            })
            .collect();
        let k = 3;
        let proj = pca_project(&pts, k).unwrap();

        let n = pts.len();
        let d = 5;
        let mut mean = vec![0.0; d];
        for p in &pts {
            for (m, v) in mean.iter_mut().zip(p.as_slice()) {
                *m += v / n as f64;
            }
        }
        let mut cov = vec![vec![0.0; d]; d];
        for p in &pts {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (p.as_slice()[i] - mean[i]) * (p.as_slice()[j] - mean[j])
                        / (n as f64 - 1.0);
                }
            }
        }
        for comp in 0..k {
            let mut v = vec![1.0; d];
            let mut lambda = 0.0;
            for _ in 0..5000 {
                let w: Vec<f64> = (0..d)
                    .map(|i| (0..d).map(|j| cov[i][j] * v[j]).sum())
                    .collect();
                let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                lambda = nrm;
                v = w.into_iter().map(|x| x / nrm).collect();
            }
            let var = variance(proj.iter().map(|p| p[comp]));
            assert!(
                (var - lambda).abs() <= 1e-9 * lambda.max(1.0),
                "component {comp}: {var} vs {lambda}"
            );
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] -= lambda * v[i] * v[j];
                }
            }
        }
    }

    #[test]
    fn translation_invariant() {
        let g = gaussian_matrix(12, 4, 9);
        let pts: Vec<_> = (0..12).map(|r| ev(g.row(r))).collect();
        let shifted: Vec<_> = pts
            .iter()
            .map(|p| ev(&p.as_slice().iter().map(|x| x + 5.0).collect::<Vec<_>>()))
            .collect();
        let a = pca_project(&pts, 3).unwrap();
        let b = pca_project(&shifted, 3).unwrap();
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            pca_project(&[ev(&[1.0])], 1),
            Err(Error::InsufficientData(_))
        ));
        assert!(pca_project(&[ev(&[1.0]), ev(&[2.0])], 2).is_err());
    }
}
