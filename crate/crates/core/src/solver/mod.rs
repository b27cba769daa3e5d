//! Bounded-cognition feedback Stackelberg solver on the reduced state.
//!
//! The reduced state `s` stacks the `m` cluster centers row by row
//! (`s[c * d + k]` is coordinate `k` of cluster `c`). Around a reference
//! trajectory the one-step map is linearized by central differences, and
//! each player's best response to a frozen opponent policy is an affine
//! finite-horizon LQR solved by a backward Riccati recursion on the state
//! augmented with a constant coordinate.

mod cognition;
mod linearize;
mod lqr;
mod receding;

pub use cognition::{bounded_cognition_solve, LevelReport, StackelbergSolution};
pub use linearize::{linearize, rollout_closed_loop, rollout_reference, LinearizedDynamics, ReferenceTrajectory};
pub use lqr::{linearized_objective, lqr_best_response, lqr_solve, FeedbackPolicy, LqrSolution, ReducedCost};
pub use receding::{cold_start_messages, receding_horizon_run, ClusterConfig, Trace, TraceStatus};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::ReducedState;
use crate::dynamics::{step_points, DynamicsParams, MessagePair};
use crate::error::{Error, Result};
use crate::graph::{KernelConfig, Population};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Adversary,
    Defender,
}

impl Player {
    pub fn opponent(self) -> Player {
        match self {
            Player::Adversary => Player::Defender,
            Player::Defender => Player::Adversary,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Player::Adversary => "adversary",
            Player::Defender => "defender",
        }
    }
}

/// Where a player wants the population's opinions to be.
#[derive(Debug, Clone, PartialEq)]
pub enum Goal {
    /// Every individual at its own initial opinion (status quo).
    InitialOpinions,
    /// Every individual at one target point.
    Point(DVector<f64>),
}

/// How per-cluster state costs scale with cluster size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MassScale {
    /// Scale by member count: the reduced cost approximates the sum over
    /// individuals.
    #[default]
    Count,
    /// Scale by member fraction: the reduced cost approximates the mean.
    Fraction,
}

/// Quadratic cost of one player: per-individual state weight `Q` (`d x d`),
/// message weight `R` (`d x d`) and goal.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub state_weight: DMatrix<f64>,
    pub input_weight: DMatrix<f64>,
    pub goal: Goal,
    pub mass_scale: MassScale,
}

impl CostSpec {
    pub fn new(state_weight: DMatrix<f64>, input_weight: DMatrix<f64>, goal: Goal) -> Self {
        CostSpec {
            state_weight,
            input_weight,
            goal,
            mass_scale: MassScale::Count,
        }
    }

    pub fn dim(&self) -> usize {
        self.input_weight.nrows()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let (q, r) = (&self.state_weight, &self.input_weight);
        if q.shape() != (d, d) || r.shape() != (d, d) {
            return Err(Error::invalid(format!("cost matrices must be {d}x{d}")));
        }
        if let Goal::Point(g) = &self.goal {
            if g.len() != d {
                return Err(Error::invalid("goal dimension mismatch"));
            }
        }
        let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
        if !sym(q) || !sym(r) {
            return Err(Error::invalid("cost matrices must be symmetric"));
        }
        let qmin = q.clone().symmetric_eigenvalues().min();
        if qmin < -1e-12 * q.amax().max(1.0) {
            return Err(Error::invalid("state cost must be positive semi-definite"));
        }
        if r.clone().cholesky().is_none() {
            return Err(Error::invalid("message cost must be positive definite"));
        }
        Ok(())
    }

    /// Per-individual goal rows for a population.
    pub fn goal_rows(&self, initial: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.goal {
            Goal::InitialOpinions => initial.clone(),
            Goal::Point(g) => DMatrix::from_fn(initial.nrows(), initial.ncols(), |_, c| g[c]),
        }
    }

    /// Realized stage cost over the full population after a step:
    /// `sum_i (x_i - g_i)' Q (x_i - g_i) + u' R u`.
    pub fn stage_cost(&self, p: &Population, u: &DVector<f64>) -> f64 {
        let goal = self.goal_rows(p.initial_opinions());
        let dev = p.opinions() - goal;
        let state: f64 = (0..dev.nrows())
            .map(|i| {
                let r = dev.row(i).transpose();
                r.dot(&(&self.state_weight * &r))
            })
            .sum();
        state + u.dot(&(&self.input_weight * u))
    }

    /// Cost on the reduced state: block-diagonal state weight scaled by
    /// cluster mass and the stacked per-cluster goal.
    pub fn reduced(&self, rs: &ReducedState) -> ReducedCost {
        let (m, d) = (rs.clusters(), rs.dim());
        let total: usize = rs.masses.iter().sum();
        let mut q = DMatrix::zeros(m * d, m * d);
        for c in 0..m {
            let scale = match self.mass_scale {
                MassScale::Count => rs.masses[c] as f64,
                MassScale::Fraction => rs.masses[c] as f64 / total as f64,
            };
            q.view_mut((c * d, c * d), (d, d))
                .copy_from(&(&self.state_weight * scale));
        }
        let goal = match &self.goal {
            Goal::InitialOpinions => flatten(&rs.initial_centers),
            Goal::Point(g) => DVector::from_fn(m * d, |i, _| g[i % d]),
        };
        ReducedCost {
            state_weight: q,
            input_weight: self.input_weight.clone(),
            goal,
        }
    }
}

/// Horizon and iteration settings of the receding-horizon solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Planning horizon `H` in macro-steps.
    pub horizon: usize,
    /// Maximum cognition level.
    pub max_level: usize,
    /// Relative step of the central-difference Jacobians.
    pub fd_step: f64,
    /// Macro-steps applied between re-solves.
    pub replan_interval: usize,
    /// Total macro-steps `T`.
    pub steps: usize,
    /// Re-roll and re-linearize the reference after every level.
    pub reroll: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            horizon: 5,
            max_level: 10,
            fd_step: 1e-5,
            replan_interval: 1,
            steps: 30,
            reroll: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let SolverConfig {
            horizon,
            max_level,
            fd_step,
            replan_interval,
            steps,
            ..
        } = *self;
        if !(1 <= replan_interval && replan_interval <= horizon && horizon <= steps) {
            return Err(Error::invalid(format!(
                "need 1 <= replan_interval ({replan_interval}) <= horizon ({horizon}) <= steps ({steps})"
            )));
        }
        if max_level < 1 {
            return Err(Error::invalid("max_level must be at least 1"));
        }
        if !(fd_step > 0.0) || !fd_step.is_finite() {
            return Err(Error::invalid("fd_step must be positive"));
        }
        Ok(())
    }
}

/// The one-step opinion map restricted to cluster centers.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub anchors: DMatrix<f64>,
    pub masses: Option<Vec<f64>>,
    pub dynamics: DynamicsParams,
    pub kernel: KernelConfig,
}

impl ReducedModel {
    pub fn new(rs: &ReducedState, dynamics: DynamicsParams, kernel: KernelConfig) -> Self {
        ReducedModel {
            anchors: rs.initial_centers.clone(),
            masses: rs.mass_weights(),
            dynamics,
            kernel,
        }
    }

    pub fn clusters(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.anchors.ncols()
    }

    pub fn state_len(&self) -> usize {
        self.clusters() * self.dim()
    }

    /// `F(s, u_a, u_d)`.
    pub fn step(&self, s: &DVector<f64>, u_a: &DVector<f64>, u_d: &DVector<f64>) -> Result<DVector<f64>> {
        let points = unflatten(s, self.clusters(), self.dim());
        let msgs = MessagePair::new(u_a.clone(), u_d.clone());
        let next = step_points(
            &points,
            &self.anchors,
            self.masses.as_deref(),
            &msgs,
            &self.dynamics,
            &self.kernel,
        )?;
        Ok(flatten(&next))
    }
}

/// Row-major flattening of an `m x d` matrix.
pub fn flatten(x: &DMatrix<f64>) -> DVector<f64> {
    let d = x.ncols();
    DVector::from_fn(x.nrows() * d, |i, _| x[(i / d, i % d)])
}

pub fn unflatten(s: &DVector<f64>, m: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(m, d, s.as_slice())
}
