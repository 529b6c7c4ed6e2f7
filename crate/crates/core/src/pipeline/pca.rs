//! Principal components of 3D traces.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{LmarError, Result};

/// Mean and orthonormal principal axes of a 3D point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: [f64; 3],
    /// Rows are components, by decreasing explained variance. Each row's
    /// largest-magnitude loading is positive (lowest axis wins ties).
    pub components: [[f64; 3]; 3],
    pub explained_variance: [f64; 3],
}

impl PcaBasis {
    /// Share of total variance carried by each component.
    pub fn explained_ratio(&self) -> [f64; 3] {
        let total: f64 = self.explained_variance.iter().sum();
        self.explained_variance.map(|v| v / total)
    }

    /// Identity basis centred at `mean`.
    pub fn identity(mean: [f64; 3]) -> Self {
        Self {
            mean,
            components: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            explained_variance: [0.0; 3],
        }
    }
}

pub fn pca_fit(points: &[[f64; 3]]) -> Result<PcaBasis> {
    if points.len() < 4 {
        return Err(LmarError::SeriesTooShort(format!(
            "PCA needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LmarError::InvalidSeries("non-finite coordinate".into()));
    }
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for pt in points {
        for a in 0..3 {
            mean[a] += pt[a];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = Matrix3::<f64>::zeros();
    for pt in points {
        let d = Vector3::new(pt[0] - mean[0], pt[1] - mean[1], pt[2] - mean[2]);
        cov += d * d.transpose();
    }
    cov /= n - 1.0;
    if cov.trace() <= 0.0 {
        return Err(LmarError::DegenerateCovariance(
            "all points coincide (rank 0)".into(),
        ));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = [[0.0; 3]; 3];
    let mut explained_variance = [0.0; 3];
    for (row, &idx) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(idx);
        let mut v = [col[0], col[1], col[2]];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let lead = (0..3).fold(0, |best, a| {
            if v[a].abs() > v[best].abs() {
                a
            } else {
                best
            }
        });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components[row] = v;
        explained_variance[row] = eig.eigenvalues[idx].max(0.0);
    }
    Ok(PcaBasis {
        mean,
        components,
        explained_variance,
    })
}

/// Component scores, one series per component.
pub fn pca_project(basis: &PcaBasis, points: &[[f64; 3]]) -> Vec<Vec<f64>> {
    (0..3)
        .map(|c| {
            let w = basis.components[c];
            points
                .iter()
                .map(|pt| (0..3).map(|a| w[a] * (pt[a] - basis.mean[a])).sum())
                .collect()
        })
        .collect()
}

/// Maps component scores back to 3D. Components beyond `pc_values.len()`
/// contribute nothing, so passing only the first series gives the PC1
/// reconstruction.
pub fn pca_reconstruct(basis: &PcaBasis, pc_values: &[Vec<f64>]) -> Result<Vec<[f64; 3]>> {
    if pc_values.is_empty() || pc_values.len() > 3 {
        return Err(LmarError::ShapeMismatch(format!(
            "expected 1 to 3 component series, got {}",
            pc_values.len()
        )));
    }
    let n = pc_values[0].len();
    if pc_values.iter().any(|s| s.len() != n) {
        return Err(LmarError::ShapeMismatch(
            "component series have different lengths".into(),
        ));
    }
    Ok((0..n)
        .map(|t| {
            let mut out = basis.mean;
            for (c, series) in pc_values.iter().enumerate() {
                for a in 0..3 {
                    out[a] += basis.components[c][a] * series[t];
                }
            }
            out
        })
        .collect())
}
