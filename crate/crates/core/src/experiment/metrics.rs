use nalgebra::{DMatrix, DVector};

use crate::clustering::{bimodality_coefficient, principal_axis};
use crate::error::{Error, Result};
use crate::solver::{Goal, Trace};

/// Final-state outcomes of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub sigma: f64,
    pub seed: u64,
    pub mean_dist_defender_goal: f64,
    pub mean_dist_adversary_goal: f64,
    /// NaN when the final opinions have no spread.
    pub final_bimodality: f64,
    pub j_a: f64,
    pub j_d: f64,
    /// Set when the scenario failed or stopped early.
    pub error: Option<String>,
}

impl MetricsRecord {
    pub const HEADER: [&'static str; 8] = [
        "sigma",
        "seed",
        "mean_dist_defender_goal",
        "mean_dist_adversary_goal",
        "final_bimodality",
        "J_a",
        "J_d",
        "error",
    ];

    pub fn failed(sigma: f64, seed: u64, message: String) -> Self {
        MetricsRecord {
            sigma,
            seed,
            mean_dist_defender_goal: f64::NAN,
            mean_dist_adversary_goal: f64::NAN,
            final_bimodality: f64::NAN,
            j_a: f64::NAN,
            j_d: f64::NAN,
            error: Some(message),
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    pub fn row(&self) -> [String; 8] {
        [
            self.sigma.to_string(),
            self.seed.to_string(),
            self.mean_dist_defender_goal.to_string(),
            self.mean_dist_adversary_goal.to_string(),
            self.final_bimodality.to_string(),
            self.j_a.to_string(),
            self.j_d.to_string(),
            u8::from(self.is_error()).to_string(),
        ]
    }
}

/// Mean Euclidean distance of the rows of `x` to their goals: each row's
/// own initial opinion, or a common point.
pub fn mean_distance_to_goal(x: &DMatrix<f64>, initial: &DMatrix<f64>, goal: &Goal) -> f64 {
    let n = x.nrows();
    let total: f64 = (0..n)
        .map(|i| match goal {
            Goal::InitialOpinions => (x.row(i) - initial.row(i)).norm(),
            Goal::Point(g) => (x.row(i) - g.transpose()).norm(),
        })
        .sum();
    total / n as f64
}

/// Population covariance (divisor `n`) of the rows of `x`.
fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mean[j]);
    centered.transpose() * &centered / n
}

/// Bimodality coefficient of the rows of `x` projected on `axis`.
pub fn bimodality_along(x: &DMatrix<f64>, axis: &DVector<f64>) -> Result<f64> {
    let proj: Vec<f64> = (0..x.nrows()).map(|i| x.row(i).transpose().dot(axis)).collect();
    bimodality_coefficient(&proj)
}

/// Bimodality coefficient along the first principal axis of `x`.
pub fn final_bimodality(x: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() < 4 {
        return Err(Error::UndefinedStatistic(format!(
            "need at least 4 individuals, got {}",
            x.nrows()
        )));
    }
    bimodality_along(x, &principal_axis(&covariance(x)))
}

/// Metrics of a (possibly partial) trace.
pub fn metrics_from_trace(
    trace: &Trace,
    sigma: f64,
    seed: u64,
    adversary_goal: &Goal,
    defender_goal: &Goal,
) -> MetricsRecord {
    let x = trace.final_opinions();
    let x0 = &trace.initial_opinions;
    MetricsRecord {
        sigma,
        seed,
        mean_dist_defender_goal: mean_distance_to_goal(x, x0, defender_goal),
        mean_dist_adversary_goal: mean_distance_to_goal(x, x0, adversary_goal),
        final_bimodality: final_bimodality(x).unwrap_or(f64::NAN),
        j_a: trace.cost_a,
        j_d: trace.cost_d,
        error: match &trace.status {
            crate::solver::TraceStatus::Complete => None,
            crate::solver::TraceStatus::Aborted { step, reason } => {
                Some(format!("aborted at step {step}: {reason}"))
            }
        },
    }
}
