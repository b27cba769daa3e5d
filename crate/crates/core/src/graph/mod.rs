//! Opinion-dependent interaction structure.

mod edge_list;
mod layout;
mod population;

pub use edge_list::{load_edge_list, parse_edge_list, write_edge_list, EdgeListGraph};
pub use layout::force_directed_embedding;
pub use population::{generate_synthetic_population, MixtureComponent, Population};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel values are clamped from below so that row normalization stays
/// defined for very small homophily coefficients.
pub const KERNEL_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelForm {
    #[default]
    Gaussian,
}

/// Interaction kernel `psi(x, y) = exp(-|x - y|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default)]
    pub form: KernelForm,
    /// Homophily coefficient.
    pub sigma: f64,
}

impl KernelConfig {
    pub fn gaussian(sigma: f64) -> Self {
        KernelConfig {
            form: KernelForm::Gaussian,
            sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!(
                "kernel sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub fn from_sq_dist(&self, sq_dist: f64) -> f64 {
        match self.form {
            KernelForm::Gaussian => {
                (-sq_dist / (2.0 * self.sigma * self.sigma))
                    .exp()
                    .max(KERNEL_FLOOR)
            }
        }
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::gaussian(1.0)
    }
}

/// Evaluates the interaction kernel between two opinions.
pub fn kernel_eval(x: &[f64], y: &[f64], k: &KernelConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "opinion dimensions differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(k.from_sq_dist(sq))
}

/// Row-stochastic interaction matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    /// Checks the weight-matrix invariants: entries in `[0, 1]`, exact zero
    /// diagonal, rows summing to one within `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let w = &self.0;
        if w.nrows() != w.ncols() {
            return Err(Error::invalid("weight matrix is not square"));
        }
        for i in 0..w.nrows() {
            if w[(i, i)] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at row {i}")));
            }
            let mut sum = 0.0;
            for j in 0..w.ncols() {
                let v = w[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("entry ({i},{j}) = {v} outside [0,1]")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > tol {
                return Err(Error::invalid(format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }
}

/// Builds the weight matrix of a set of points (one point per row).
///
/// With `masses`, the kernel toward `j` is scaled by `masses[j]` before
/// normalization; the plain matrix is the unit-mass case.
pub fn weights_from_points(
    points: &DMatrix<f64>,
    masses: Option<&[f64]>,
    k: &KernelConfig,
) -> Result<WeightMatrix> {
    k.validate()?;
    let n = points.nrows();
    if n < 2 {
        return Err(Error::invalid(format!(
            "weight matrix needs at least 2 individuals, got {n}"
        )));
    }
    if let Some(m) = masses {
        if m.len() != n {
            return Err(Error::invalid("mass vector length mismatch"));
        }
    }
    let d = points.ncols();
    // Row-major copy; the column-major layout makes per-pair access strided.
    let rows: Vec<f64> = (0..n)
        .flat_map(|i| (0..d).map(move |c| (i, c)))
        .map(|(i, c)| points[(i, c)])
        .collect();
    let mut w = DMatrix::<f64>::zeros(n, n);
    let mut row_buf = vec![0.0; n];
    for i in 0..n {
        let xi = &rows[i * d..(i + 1) * d];
        let mut sum = 0.0;
        for (j, slot) in row_buf.iter_mut().enumerate() {
            if j == i {
                *slot = 0.0;
                continue;
            }
            let xj = &rows[j * d..(j + 1) * d];
            let sq: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            let mut v = k.from_sq_dist(sq);
            if let Some(m) = masses {
                v *= m[j];
            }
            *slot = v;
            sum += v;
        }
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::DegenerateRow { row: i });
        }
        for (j, v) in row_buf.iter().enumerate() {
            w[(i, j)] = v / sum;
        }
    }
    Ok(WeightMatrix(w))
}

/// Weight matrix of a population's current opinions.
pub fn build_weight_matrix(p: &Population, k: &KernelConfig) -> Result<WeightMatrix> {
    weights_from_points(p.opinions(), None, k)
}
