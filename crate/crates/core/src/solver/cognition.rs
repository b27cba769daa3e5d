use nalgebra::DVector;

use super::{
    flatten, linearize, linearized_objective, lqr_best_response, rollout_closed_loop,
    rollout_reference, CostSpec, FeedbackPolicy, LinearizedDynamics, Player, ReducedModel,
    SolverConfig,
};
use crate::clustering::ReducedState;
use crate::dynamics::{DynamicsParams, MessagePair};
use crate::error::{Error, Result};
use crate::graph::KernelConfig;

/// Defender objective on the linearized model at one cognition level, for
/// its previous-level policy and its new best response, both against the
/// same frozen adversary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    pub defender_previous: f64,
    pub defender_best_response: f64,
}

#[derive(Debug, Clone)]
pub struct StackelbergSolution {
    pub adversary: FeedbackPolicy,
    pub defender: FeedbackPolicy,
    /// Linearization both final policies are expressed around.
    pub linearization: LinearizedDynamics,
    pub levels: Vec<LevelReport>,
}

/// Iterated best responses with each player modelling its opponent one
/// cognition level lower.
///
/// Level 0 is both players repeating their previous messages. At level `l`
/// the defender best-responds to the level `l-1` adversary, then the
/// adversary best-responds to that defender. The reference trajectory is
/// re-rolled under the level-`l` closed loop and re-linearized (unless
/// disabled). After the last level the defender solves once more against
/// the final adversary policy.
pub fn bounded_cognition_solve(
    rs: &ReducedState,
    cost_a: &CostSpec,
    cost_d: &CostSpec,
    cfg: &SolverConfig,
    dp: &DynamicsParams,
    k: &KernelConfig,
    u_prev: &MessagePair,
) -> Result<StackelbergSolution> {
    cfg.validate()?;
    let model = ReducedModel::new(rs, *dp, *k);
    let s0 = flatten(&rs.centers);
    let reduced_a = cost_a.reduced(rs);
    let reduced_d = cost_d.reduced(rs);
    let h = cfg.horizon;

    let traj = rollout_reference(&model, &s0, &u_prev.adversary, &u_prev.defender, h)?;
    let mut lin = linearize(&model, &traj, cfg.fd_step)?;
    let refs = &lin.reference.states[..h];
    let mut adversary = FeedbackPolicy::constant(Player::Adversary, &u_prev.adversary, refs);
    let mut defender = FeedbackPolicy::constant(Player::Defender, &u_prev.defender, refs);
    let origin = DVector::zeros(s0.len());
    let mut levels = Vec::with_capacity(cfg.max_level);

    for level in 1..=cfg.max_level {
        let mut next_defender = lqr_best_response(&lin, &adversary, &reduced_d, Player::Defender)?;
        next_defender.level = level;
        levels.push(LevelReport {
            level,
            defender_previous: linearized_objective(
                &lin,
                Player::Defender,
                &defender,
                &adversary,
                &reduced_d,
                &origin,
            ),
            defender_best_response: linearized_objective(
                &lin,
                Player::Defender,
                &next_defender,
                &adversary,
                &reduced_d,
                &origin,
            ),
        });
        let mut next_adversary =
            lqr_best_response(&lin, &next_defender, &reduced_a, Player::Adversary)?;
        next_adversary.level = level;
        adversary = next_adversary;
        defender = next_defender;

        if cfg.reroll {
            let traj = rollout_closed_loop(&model, &s0, &adversary, &defender)
                .map_err(|_| Error::Divergence { level })?;
            lin = linearize(&model, &traj, cfg.fd_step)?;
        }
    }

    let mut defender = lqr_best_response(&lin, &adversary, &reduced_d, Player::Defender)?;
    defender.level = cfg.max_level;
    let adversary = adversary.rebased(&lin.reference.states);
    Ok(StackelbergSolution {
        adversary,
        defender,
        linearization: lin,
        levels,
    })
}
