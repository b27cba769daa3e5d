use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{LinearizedDynamics, Player};
use crate::error::{Error, Result};

/// Eigenvalue floor (relative to the largest entry) for value matrices.
const PSD_TOLERANCE: f64 = 1e-8;

/// Affine time-varying feedback `u_t = K_t (s - r_t) + k_t` around the
/// reference states `r_t` it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicy {
    pub player: Player,
    pub level: usize,
    pub gains: Vec<DMatrix<f64>>,
    pub offsets: Vec<DVector<f64>>,
    pub reference: Vec<DVector<f64>>,
}

impl FeedbackPolicy {
    /// Open-loop policy playing `u` at every step.
    pub fn constant(player: Player, u: &DVector<f64>, reference: &[DVector<f64>]) -> Self {
        let n = reference.first().map_or(0, |r| r.len());
        FeedbackPolicy {
            player,
            level: 0,
            gains: vec![DMatrix::zeros(u.len(), n); reference.len()],
            offsets: vec![u.clone(); reference.len()],
            reference: reference.to_vec(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// Message at step `t` for absolute reduced state `s`.
    pub fn eval(&self, t: usize, s: &DVector<f64>) -> DVector<f64> {
        &self.gains[t] * (s - &self.reference[t]) + &self.offsets[t]
    }

    /// The same affine law expressed around other reference states.
    /// Steps beyond `reference.len()` are dropped.
    pub fn rebased(&self, reference: &[DVector<f64>]) -> Self {
        let h = self.horizon().min(reference.len());
        let offsets = (0..h)
            .map(|t| &self.offsets[t] + &self.gains[t] * (&reference[t] - &self.reference[t]))
            .collect();
        FeedbackPolicy {
            player: self.player,
            level: self.level,
            gains: self.gains[..h].to_vec(),
            offsets,
            reference: reference[..h].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.gains.iter().all(|k| k.iter().all(|v| v.is_finite()))
            && self.offsets.iter().all(|k| k.iter().all(|v| v.is_finite()))
    }
}

/// Player cost on the stacked reduced state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCost {
    pub state_weight: DMatrix<f64>,
    pub input_weight: DMatrix<f64>,
    pub goal: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct LqrSolution {
    pub policy: FeedbackPolicy,
    /// Augmented value matrices `P_0..=P_H` over `(ds, 1)`.
    pub values: Vec<DMatrix<f64>>,
}

/// Quadratic form of `(s - g)' Q (s - g)` over `(ds, 1)` with
/// `s = r + ds`.
fn augmented_state_cost(q: &DMatrix<f64>, offset: &DVector<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let q_off = q * offset;
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(q);
    out.view_mut((0, n), (n, 1)).copy_from(&q_off);
    out.view_mut((n, 0), (1, n)).copy_from(&q_off.transpose());
    out[(n, n)] = offset.dot(&q_off);
    out
}

fn check_psd(p: &DMatrix<f64>, t: usize) -> Result<()> {
    let scale = p.amax().max(1.0);
    let min = SymmetricEigen::new(p.clone()).eigenvalues.min();
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::Numeric(format!(
            "value matrix at step {t} lost positive semi-definiteness (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// Best response of `player` to a frozen `opponent` on the linearized game.
///
/// The opponent's law is folded into the dynamics (`A + B_o K_o`, plus its
/// affine term as drift) and a backward Riccati recursion runs on the state
/// augmented with a constant coordinate, which carries the goal offset of the
/// reference, the reference inputs and the drift. The terminal value is the
/// state cost.
pub fn lqr_solve(
    lin: &LinearizedDynamics,
    opponent: &FeedbackPolicy,
    cost: &ReducedCost,
    player: Player,
) -> Result<LqrSolution> {
    let h = lin.horizon();
    let n = lin.state_len();
    let du = lin.input_len();
    if opponent.horizon() < h {
        return Err(Error::invalid(format!(
            "opponent policy spans {} steps, game needs {h}",
            opponent.horizon()
        )));
    }
    if cost.state_weight.shape() != (n, n)
        || cost.input_weight.shape() != (du, du)
        || cost.goal.len() != n
    {
        return Err(Error::invalid("cost dimensions do not match the linearization"));
    }
    let opponent = opponent.rebased(&lin.reference.states);
    let other = player.opponent();
    let q = &cost.state_weight;
    let r = &cost.input_weight;

    let mut values = vec![DMatrix::zeros(0, 0); h + 1];
    let mut p = augmented_state_cost(q, &(&lin.reference.states[h] - &cost.goal));
    check_psd(&p, h)?;
    values[h] = p.clone();

    let mut gains = vec![DMatrix::zeros(du, n); h];
    let mut offsets = vec![DVector::zeros(du); h];
    for t in (0..h).rev() {
        let b_own = lin.b(player, t);
        let b_opp = lin.b(other, t);
        let a_hat = &lin.a[t] + b_opp * &opponent.gains[t];
        let drift = &lin.c[t] + b_opp * (&opponent.offsets[t] - lin.u_ref(other, t));

        let mut az = DMatrix::zeros(n + 1, n + 1);
        az.view_mut((0, 0), (n, n)).copy_from(&a_hat);
        az.view_mut((0, n), (n, 1)).copy_from(&drift);
        az[(n, n)] = 1.0;
        let mut bz = DMatrix::zeros(n + 1, du);
        bz.view_mut((0, 0), (n, du)).copy_from(b_own);

        let u_ref = lin.u_ref(player, t);
        let r_u = r * u_ref;
        let mut stage = augmented_state_cost(q, &(&lin.reference.states[t] - &cost.goal));
        stage[(n, n)] += u_ref.dot(&r_u);
        // Cross term 2 z' N du with N nonzero only in the constant row.
        let mut cross_t = DMatrix::zeros(du, n + 1);
        cross_t.view_mut((0, n), (du, 1)).copy_from(&r_u);

        let pb = &p * &bz;
        let s = r + bz.transpose() * &pb;
        let l = pb.transpose() * &az + &cross_t;
        let chol = s.clone().cholesky().ok_or_else(|| {
            Error::Numeric(format!("R + B'PB is not positive definite at step {t}"))
        })?;
        let kz = -chol.solve(&l);
        let next = &stage + az.transpose() * &p * &az + l.transpose() * &kz;
        p = (&next + next.transpose()) * 0.5;
        check_psd(&p, t)?;
        values[t] = p.clone();

        gains[t] = kz.columns(0, n).into_owned();
        offsets[t] = u_ref + kz.column(n);
    }
    let policy = FeedbackPolicy {
        player,
        level: 0,
        gains,
        offsets,
        reference: lin.reference.states[..h].to_vec(),
    };
    if !policy.is_finite() {
        return Err(Error::Numeric("non-finite feedback policy".into()));
    }
    Ok(LqrSolution { policy, values })
}

pub fn lqr_best_response(
    lin: &LinearizedDynamics,
    opponent: &FeedbackPolicy,
    cost: &ReducedCost,
    player: Player,
) -> Result<FeedbackPolicy> {
    Ok(lqr_solve(lin, opponent, cost, player)?.policy)
}

/// Cost of `player` on the linearized model when both players follow the
/// given policies from deviation `ds0` off the reference start:
/// `sum_{t<H} [(s_t - g)' Q (s_t - g) + u_t' R u_t] + (s_H - g)' Q (s_H - g)`.
pub fn linearized_objective(
    lin: &LinearizedDynamics,
    player: Player,
    own: &FeedbackPolicy,
    opponent: &FeedbackPolicy,
    cost: &ReducedCost,
    ds0: &DVector<f64>,
) -> f64 {
    let h = lin.horizon();
    let other = player.opponent();
    let refs = &lin.reference.states;
    let own = own.rebased(refs);
    let opponent = opponent.rebased(refs);
    let q = &cost.state_weight;
    let state_cost = |s: &DVector<f64>| {
        let e = s - &cost.goal;
        e.dot(&(q * &e))
    };
    let mut ds = ds0.clone();
    let mut total = 0.0;
    for t in 0..h {
        let s = &refs[t] + &ds;
        let u_own = own.eval(t, &s);
        let u_opp = opponent.eval(t, &s);
        total += state_cost(&s) + u_own.dot(&(&cost.input_weight * &u_own));
        ds = &lin.a[t] * &ds
            + lin.b(player, t) * (&u_own - lin.u_ref(player, t))
            + lin.b(other, t) * (&u_opp - lin.u_ref(other, t))
            + &lin.c[t];
    }
    total + state_cost(&(&refs[h] + &ds))
}
