use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{bounded_cognition_solve, flatten, CostSpec, Goal, SolverConfig};
use crate::clustering::{
    cluster_means, initial_clustering, reduce_with, refresh, ClusterAssignment, ReducedWeighting,
};
use crate::dynamics::{opinion_step, DynamicsParams, MessagePair};
use crate::error::{Error, Result};
use crate::graph::{KernelConfig, Population};

/// Cluster maintenance settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub m0: usize,
    pub threshold: f64,
    pub epsilon: f64,
    pub weighting: ReducedWeighting,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            m0: 20,
            threshold: 0.55,
            epsilon: 1e-9,
            weighting: ReducedWeighting::Uniform,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m0 == 0 {
            return Err(Error::invalid("m0 must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "bimodality threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("merge epsilon must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceStatus {
    Complete,
    /// The run stopped at macro step `step`; everything before it is valid.
    Aborted { step: usize, reason: String },
}

/// Everything observed during one receding-horizon run.
#[derive(Debug, Clone)]
pub struct Trace {
    pub initial_opinions: DMatrix<f64>,
    /// Opinions at `t = 0..=T` for the steps actually taken.
    pub opinions: Vec<DMatrix<f64>>,
    /// Messages played at `t = 0..T`.
    pub messages: Vec<MessagePair>,
    /// Partition in force when the messages of step `t` were computed.
    pub assignments: Vec<ClusterAssignment>,
    /// Realized costs `sum_{t=1..T} stage(x_t, u_{t-1})` over all individuals.
    pub cost_a: f64,
    pub cost_d: f64,
    pub horizon: usize,
    pub max_level: usize,
    pub status: TraceStatus,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.messages.len()
    }

    pub fn is_complete(&self) -> bool {
        self.status == TraceStatus::Complete
    }

    pub fn final_opinions(&self) -> &DMatrix<f64> {
        self.opinions.last().expect("trace always holds x_0")
    }

    pub fn final_population(&self) -> Population {
        Population::with_initial(self.initial_opinions.clone(), self.final_opinions().clone())
            .expect("trace opinions share the initial shape")
    }
}

/// Default first-step messages: the defender echoes the population mean,
/// the adversary points toward its goal (or the mean if its goal is the
/// initial opinions).
pub fn cold_start_messages(p: &Population, cost_a: &CostSpec) -> MessagePair {
    let mean = p.mean_opinion();
    let adversary = match &cost_a.goal {
        Goal::Point(g) => {
            let norm = g.norm();
            if norm > 0.0 {
                g / norm
            } else {
                DVector::zeros(g.len())
            }
        }
        Goal::InitialOpinions => mean.clone(),
    };
    MessagePair::new(adversary, mean)
}

fn at_least_two(a: ClusterAssignment, p: &Population, seed: u64) -> Result<ClusterAssignment> {
    if a.count() >= 2 {
        Ok(a)
    } else {
        initial_clustering(p, 2, seed)
    }
}

/// Closed-loop game on the full population.
///
/// Every `replan_interval` steps the clusters are refreshed, the game is
/// solved on the reduced state and the resulting feedback laws drive the
/// full population, evaluated at the current cluster means. Solver or
/// numerical failures end the run early with an aborted trace; invalid
/// inputs are returned as errors.
#[allow(clippy::too_many_arguments)]
pub fn receding_horizon_run(
    p: &Population,
    cost_a: &CostSpec,
    cost_d: &CostSpec,
    cfg: &SolverConfig,
    dp: &DynamicsParams,
    k: &KernelConfig,
    clusters: &ClusterConfig,
    cold_start: Option<MessagePair>,
    seed: u64,
) -> Result<Trace> {
    cfg.validate()?;
    dp.validate()?;
    k.validate()?;
    clusters.validate()?;
    let d = p.dim();
    cost_a.validate(d)?;
    cost_d.validate(d)?;
    let mut u_prev = cold_start.unwrap_or_else(|| cold_start_messages(p, cost_a));
    if u_prev.adversary.len() != d || u_prev.defender.len() != d {
        return Err(Error::invalid("cold-start message dimension does not match opinions"));
    }

    let mut trace = Trace {
        initial_opinions: p.initial_opinions().clone(),
        opinions: vec![p.opinions().clone()],
        messages: Vec::with_capacity(cfg.steps),
        assignments: Vec::with_capacity(cfg.steps),
        cost_a: 0.0,
        cost_d: 0.0,
        horizon: cfg.horizon,
        max_level: cfg.max_level,
        status: TraceStatus::Complete,
    };
    let mut pop = p.clone();
    let mut assign = initial_clustering(&pop, clusters.m0.min(pop.len()), seed)?;
    let mut t = 0;
    while t < cfg.steps {
        if t > 0 {
            assign = refresh(&assign, &pop, clusters.threshold, clusters.epsilon)?;
        }
        assign = at_least_two(assign, &pop, seed)?;
        let rs = reduce_with(&assign, &pop, k, clusters.weighting)?;
        let solution = match bounded_cognition_solve(&rs, cost_a, cost_d, cfg, dp, k, &u_prev) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("solve failed at step {t}: {e}");
                trace.status = TraceStatus::Aborted {
                    step: t,
                    reason: e.to_string(),
                };
                return Ok(trace);
            }
        };
        let applied = cfg.replan_interval.min(cfg.steps - t);
        for j in 0..applied {
            let s = flatten(&cluster_means(&assign, pop.opinions()));
            let msgs = MessagePair::new(
                solution.adversary.eval(j, &s),
                solution.defender.eval(j, &s),
            );
            if !msgs.adversary.iter().chain(msgs.defender.iter()).all(|v| v.is_finite()) {
                return Ok(abort(trace, t, "non-finite message".into()));
            }
            let next = match opinion_step(&pop, &msgs, dp, k) {
                Ok(n) => n,
                Err(e) => return Ok(abort(trace, t, e.to_string())),
            };
            trace.cost_a += cost_a.stage_cost(&next, &msgs.adversary);
            trace.cost_d += cost_d.stage_cost(&next, &msgs.defender);
            trace.opinions.push(next.opinions().clone());
            trace.assignments.push(assign.clone());
            trace.messages.push(msgs.clone());
            u_prev = msgs;
            pop = next;
            t += 1;
        }
    }
    Ok(trace)
}

fn abort(mut trace: Trace, step: usize, reason: String) -> Trace {
    log::warn!("run aborted at step {step}: {reason}");
    trace.status = TraceStatus::Aborted { step, reason };
    trace
}
