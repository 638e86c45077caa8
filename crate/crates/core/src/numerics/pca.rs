// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Principal components of a mean-centered data matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// One component per row (`k × d`), unit norm, mutually orthogonal.
    pub components: Matrix,
    /// Sample (n − 1) variance captured by each component, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Centered data in component coordinates (`n × k`).
    pub projections: Matrix,
    /// Column means subtracted before projection.
    pub mean: Vec<f64>,
    /// Trace of the covariance matrix.
    pub total_variance: f64,
}

/// PCA by eigendecomposition of the sample covariance matrix. Data are
/// centered, never scaled. Each component is oriented so that its
/// largest-magnitude coordinate is positive (first such index on ties).
pub fn pca(data: &Matrix, k: usize) -> Result<PcaResult> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::arg(format!("pca needs at least 2 rows, got {n}")));
    }
    if k > d {
        return Err(Error::arg(format!("pca k = {k} exceeds dimension {d}")));
    }
    if !data.is_finite() {
        return Err(Error::NumericDomain("pca input is not finite".into()));
    }

    let mean: Vec<f64> = (0..d)
        .map(|c| (0..n).map(|r| data.get(r, c)).sum::<f64>() / n as f64)
        .collect();
    let mut centered = data.clone();
    for r in 0..n {
        for (x, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *x -= m;
        }
    }

    let mut cov = Matrix::zeros(d, d);
    for r in 0..n {
        let row = centered.row(r).to_vec();
        cov.add_outer(&row, &row);
    }
    for x in cov.as_mut_slice() {
        *x /= (n - 1) as f64;
    }
    let total_variance = (0..d).map(|i| cov.get(i, i)).sum();

    let (values, vectors) = symmetric_eigen(&cov)?;
    let mut components = Matrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for j in 0..k {
        let mut v = vectors.column(j);
        orient(&mut v);
        components.row_mut(j).copy_from_slice(&v);
        // Tiny negative eigenvalues are round-off on a PSD matrix.
        explained_variance.push(values[j].max(0.0));
    }

    let mut projections = Matrix::zeros(n, k);
    for r in 0..n {
        for j in 0..k {
            let p = super::dot(centered.row(r), components.row(j));
            projections.set(r, j, p);
        }
    }

    Ok(PcaResult {
        components,
        explained_variance,
        projections,
        mean,
        total_variance,
    })
}

fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues sorted non-increasing and the matching unit
/// eigenvectors as the columns of the second matrix.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let (n, m) = a.shape();
    if n != m {
        return Err(Error::arg("symmetric_eigen needs a square matrix"));
    }
    let mut a = a.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }

    let scale: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a.get(p, q) * a.get(p, q))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, new, v.get(r, old));
        }
    }
    Ok((values, vectors))
}
