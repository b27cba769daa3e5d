use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Sample skewness and (non-excess) kurtosis from central moments:
/// `g1 = m3 / m2^1.5`, `g2 = m4 / m2^2`.
pub fn shape_moments(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 4 {
        return Err(Error::UndefinedStatistic(format!(
            "need at least 4 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let c = x - mean;
        let c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let scale = samples.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    // Spread at rounding level counts as zero variance.
    if !(m2 > (1e-12 * scale).powi(2)) || !m2.is_finite() {
        return Err(Error::UndefinedStatistic("zero variance".into()));
    }
    Ok((m3 / m2.powf(1.5), m4 / (m2 * m2)))
}

/// Sarle's bimodality coefficient `(g1^2 + 1) / g2`.
pub fn bimodality_coefficient(samples: &[f64]) -> Result<f64> {
    let (g1, g2) = shape_moments(samples)?;
    Ok((g1 * g1 + 1.0) / g2)
}

/// Unit eigenvector of the largest eigenvalue, sign-normalized so that its
/// largest-magnitude component is positive. Falls back to the first axis for
/// a zero matrix.
pub fn principal_axis(cov: &DMatrix<f64>) -> DVector<f64> {
    let d = cov.nrows();
    let mut axis = DVector::zeros(d);
    if d == 0 {
        return axis;
    }
    if d == 1 || cov.amax() == 0.0 {
        axis[0] = 1.0;
        return axis;
    }
    let eig = SymmetricEigen::new(cov.clone());
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > eig.eigenvalues[best] { i } else { best });
    axis.copy_from(&eig.eigenvectors.column(top));
    let lead = axis.iamax();
    if axis[lead] < 0.0 {
        axis.neg_mut();
    }
    let norm = axis.norm();
    axis / norm
}

/// Summary statistics of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub mean: DVector<f64>,
    /// Population (1/n) covariance.
    pub covariance: DMatrix<f64>,
    pub size: usize,
    pub principal_axis: DVector<f64>,
    /// Skewness along the principal axis; `None` when undefined.
    pub skewness: Option<f64>,
    /// Non-excess kurtosis along the principal axis; `None` when undefined.
    pub kurtosis: Option<f64>,
}

impl ClusterStats {
    /// Statistics of the given rows of `points`.
    pub fn of_rows(points: &DMatrix<f64>, rows: &[usize]) -> Self {
        let d = points.ncols();
        let n = rows.len();
        assert!(n > 0, "cluster statistics of an empty cluster");
        let mut mean = DVector::zeros(d);
        for &r in rows {
            for c in 0..d {
                mean[c] += points[(r, c)];
            }
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for &r in rows {
            let dev = DVector::from_fn(d, |c, _| points[(r, c)] - mean[c]);
            cov.ger(1.0, &dev, &dev, 1.0);
        }
        cov /= n as f64;
        let axis = principal_axis(&cov);
        let proj = project(points, rows, &axis);
        let (skewness, kurtosis) = match shape_moments(&proj) {
            Ok((s, k)) => (Some(s), Some(k)),
            Err(_) => (None, None),
        };
        ClusterStats {
            mean,
            covariance: cov,
            size: n,
            principal_axis: axis,
            skewness,
            kurtosis,
        }
    }

    /// Bimodality coefficient along the principal axis, if defined.
    pub fn bimodality(&self) -> Option<f64> {
        match (self.skewness, self.kurtosis) {
            (Some(s), Some(k)) => Some((s * s + 1.0) / k),
            _ => None,
        }
    }
}

/// Projections of the given rows onto `axis`.
pub fn project(points: &DMatrix<f64>, rows: &[usize], axis: &DVector<f64>) -> Vec<f64> {
    rows.iter()
        .map(|&r| (0..axis.len()).map(|c| points[(r, c)] * axis[c]).sum())
        .collect()
}
