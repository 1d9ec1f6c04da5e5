//! Principal component projection.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// One row of `dims` coordinates per input vector.
    pub coords: Vec<Vec<f64>>,
    /// Unit principal axes, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Sample-covariance eigenvalues matching `components`.
    pub variances: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Projects mean-centred vectors onto the top `dims` eigenvectors of the
/// sample covariance (denominator `n - 1`). Each axis is signed so that its
/// first non-negligible loading is positive.
pub fn pca_project(vectors: &[Vec<f64>], dims: usize) -> Result<Projection> {
    if vectors.len() < 2 {
        return Err(Error::InvalidInput("PCA needs at least two vectors".into()));
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("PCA input vectors differ in length".into()));
    }
    if dims == 0 || dims > d {
        return Err(Error::Shape(format!("cannot project {d}-dimensional data onto {dims} axes")));
    }
    let n = vectors.len();
    let mean: Vec<f64> = (0..d).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
    let centred = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);
    let cov = (centred.transpose() * &centred) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(dims);
    let mut variances = Vec::with_capacity(dims);
    for &k in order.iter().take(dims) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        if let Some(&lead) = axis.iter().find(|x| x.abs() > 1e-12) {
            if lead < 0.0 {
                axis.iter_mut().for_each(|x| *x = -*x);
            }
        }
        components.push(axis);
        variances.push(eig.eigenvalues[k].max(0.0));
    }
    let coords = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().enumerate().map(|(j, &cj)| cj * centred[(i, j)]).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        coords,
        components,
        variances,
        mean,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean 2-D distance between `a[i]` and `b[i]` after a joint PCA fit on
/// both sets.
pub fn matched_pca_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "need two equally sized non-empty sets, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let joint: Vec<Vec<f64>> = a.iter().chain(b).cloned().collect();
    let p = pca_project(&joint, 2)?;
    let n = a.len();
    Ok((0..n).map(|i| distance(&p.coords[i], &p.coords[n + i])).sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_collapse_to_origin() {
        let v = vec![vec![0.2, 0.4, 0.1]; 5];
        let p = pca_project(&v, 2).unwrap();
        for c in &p.coords {
            assert!(c.iter().all(|x| x.abs() < 1e-15));
        }
    }

    #[test]
    fn two_points_lie_on_first_axis() {
        let v = vec![vec![1.0, 2.0, 0.0], vec![3.0, -1.0, 2.0]];
        let p = pca_project(&v, 2).unwrap();
        assert!((p.coords[0][0] + p.coords[1][0]).abs() < 1e-12);
        assert!(p.coords[0][1].abs() < 1e-12 && p.coords[1][1].abs() < 1e-12);
        let dist = ((2.0f64).powi(2) + 9.0 + 4.0).sqrt();
        assert!(((p.coords[0][0] - p.coords[1][0]).abs() - dist).abs() < 1e-12);
    }

    #[test]
    fn sign_convention() {
        let v = vec![vec![0.0, 1.0], vec![0.0, -1.0], vec![0.5, 0.0], vec![-0.5, 0.0]];
        let p = pca_project(&v, 2).unwrap();
        for c in &p.components {
            let lead = c.iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*lead > 0.0);
        }
        assert!(p.variances[0] >= p.variances[1]);
    }

    #[test]
    fn errors() {
        assert!(pca_project(&[vec![1.0]], 1).is_err());
        assert!(pca_project(&[vec![1.0, 2.0], vec![1.0]], 1).is_err());
        assert!(pca_project(&[vec![1.0], vec![2.0]], 2).is_err());
    }

    #[test]
    fn matched_distance_zero_for_equal_sets() {
        let a = vec![vec![0.1, 0.9, 0.3], vec![0.7, 0.2, 0.5], vec![0.4, 0.4, 0.8]];
        assert!(matched_pca_distance(&a, &a).unwrap() < 1e-12);
    }
}
