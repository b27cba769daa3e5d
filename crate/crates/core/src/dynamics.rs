//! Message exposure, micro-time evidence diffusion and the macro-time
//! opinion update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{weights_from_points, KernelConfig, Population, WeightMatrix};

/// Above this size the evidence system is solved iteratively instead of by
/// dense LU.
const DENSE_SOLVE_LIMIT: usize = 1200;

/// How `(I - alpha W) y = b` is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceSolver {
    /// Dense LU up to a size limit, fixed-point iteration beyond it.
    #[default]
    Auto,
    Lu,
    /// Fixed-point iteration `y <- b + alpha W y`; contracts at rate `alpha`.
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsParams {
    /// Sharing probability.
    pub alpha: f64,
    /// Interest-decay rate of adversary messages.
    pub kappa_a: f64,
    /// Interest-decay rate of defender messages.
    pub kappa_d: f64,
    /// Stubbornness: weight on the current opinion against the initial one.
    pub lambda: f64,
    /// Learning rate.
    pub eta: f64,
    pub sigmoid_gain: f64,
    /// Clamp the effective learning rate `eta |y|` to at most 1.
    pub clamp_rate: bool,
    pub solver: EvidenceSolver,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams {
            alpha: 0.3,
            kappa_a: 0.5,
            kappa_d: 0.5,
            lambda: 0.7,
            eta: 0.5,
            sigmoid_gain: 1.0,
            clamp_rate: true,
            solver: EvidenceSolver::Auto,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        let DynamicsParams {
            alpha,
            kappa_a,
            kappa_d,
            lambda,
            eta,
            sigmoid_gain,
            ..
        } = *self;
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        if !(kappa_a > 0.0 && kappa_d > 0.0) || !kappa_a.is_finite() || !kappa_d.is_finite() {
            return Err(Error::invalid("decay rates kappa_a, kappa_d must be positive"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("eta must be non-negative, got {eta}")));
        }
        if !(sigmoid_gain > 0.0) || !sigmoid_gain.is_finite() {
            return Err(Error::invalid("sigmoid gain must be positive"));
        }
        Ok(())
    }
}

/// Adversary and defender message positions in opinion space.
#[derive(Debug, Clone, PartialEq)]
pub struct MessagePair {
    pub adversary: DVector<f64>,
    pub defender: DVector<f64>,
}

impl MessagePair {
    pub fn new(adversary: DVector<f64>, defender: DVector<f64>) -> Self {
        MessagePair {
            adversary,
            defender,
        }
    }
}

/// Probability that each individual observes a message posted at `u`.
pub fn exposure_probabilities(
    u: &DVector<f64>,
    points: &DMatrix<f64>,
    k: &KernelConfig,
) -> Result<DVector<f64>> {
    if u.len() != points.ncols() {
        return Err(Error::invalid(format!(
            "message dimension {} does not match opinion dimension {}",
            u.len(),
            points.ncols()
        )));
    }
    Ok(DVector::from_fn(points.nrows(), |i, _| {
        let sq: f64 = (0..u.len())
            .map(|c| (points[(i, c)] - u[c]).powi(2))
            .sum();
        k.from_sq_dist(sq)
    }))
}

/// Index used for the decaying forcing term of the micro-time recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesConvention {
    /// `y_{s+1} = alpha W y_s - p_a e^{-kappa_a s} + p_d e^{-kappa_d s}`.
    Literal,
    /// Forcing indexed by `s + 1`. Its infinite sum equals
    /// [`accumulated_evidence`], whose forcing factors are
    /// `e^{-kappa} / (1 - e^{-kappa})`.
    Shifted,
}

/// Runs the micro-time diffusion from `y_0 = 0` and returns `y_0..=y_{s_max}`.
pub fn propagate_micro(
    w: &WeightMatrix,
    p_a: &DVector<f64>,
    p_d: &DVector<f64>,
    dp: &DynamicsParams,
    s_max: usize,
    convention: SeriesConvention,
) -> Vec<DVector<f64>> {
    let n = w.len();
    let offset = match convention {
        SeriesConvention::Literal => 0.0,
        SeriesConvention::Shifted => 1.0,
    };
    let mut ys = Vec::with_capacity(s_max + 1);
    ys.push(DVector::zeros(n));
    for s in 0..s_max {
        let t = s as f64 + offset;
        let decay_a = (-dp.kappa_a * t).exp();
        let decay_d = (-dp.kappa_d * t).exp();
        let mut next = w.entries() * &ys[s] * dp.alpha;
        next.axpy(-decay_a, p_a, 1.0);
        next.axpy(decay_d, p_d, 1.0);
        ys.push(next);
    }
    ys
}

/// `sum_{s >= 1} e^{-kappa s} = 1 / (e^kappa - 1)`.
pub fn forcing_factor(kappa: f64) -> f64 {
    1.0 / kappa.exp_m1()
}

/// Total evidence received by each individual (positive favors the
/// defender): the solution of
/// `(I - alpha W) y = p_d c(kappa_d) - p_a c(kappa_a)` with
/// `c(kappa) = e^{-kappa} / (1 - e^{-kappa})`.
pub fn accumulated_evidence(
    w: &WeightMatrix,
    p_a: &DVector<f64>,
    p_d: &DVector<f64>,
    dp: &DynamicsParams,
) -> Result<DVector<f64>> {
    let n = w.len();
    if p_a.len() != n || p_d.len() != n {
        return Err(Error::invalid("exposure vector length does not match weights"));
    }
    let rhs = p_d * forcing_factor(dp.kappa_d) - p_a * forcing_factor(dp.kappa_a);
    if dp.alpha == 0.0 {
        return Ok(rhs);
    }
    let dense = match dp.solver {
        EvidenceSolver::Lu => true,
        EvidenceSolver::Iterative => false,
        EvidenceSolver::Auto => n <= DENSE_SOLVE_LIMIT,
    };
    let y = if dense {
        let mut system = w.entries() * -dp.alpha;
        for i in 0..n {
            system[(i, i)] += 1.0;
        }
        system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("singular evidence system I - alpha W".into()))?
    } else {
        fixed_point_solve(w.entries(), dp.alpha, &rhs)
    };
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite accumulated evidence".into()));
    }
    Ok(y)
}

fn fixed_point_solve(w: &DMatrix<f64>, alpha: f64, rhs: &DVector<f64>) -> DVector<f64> {
    let mut y = rhs.clone();
    let mut next = DVector::zeros(rhs.len());
    // alpha < 1 and W row-stochastic: the error shrinks by alpha per sweep in
    // the sup norm.
    for _ in 0..10_000 {
        next.gemv(alpha, w, &y, 0.0);
        next += rhs;
        let change = (&next - &y).amax();
        std::mem::swap(&mut y, &mut next);
        if change <= 1e-15 * y.amax().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    y
}

/// Logistic function with the configured gain; saturates without overflow.
pub fn sigmoid(y: f64, gain: f64) -> f64 {
    let z = gain * y;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Applies the opinion update to every row given the accumulated evidence:
///
/// `x_i <- (1 - lambda) x0_i + lambda (x_i + r_i (s_i u_d + (1 - s_i) u_a - x_i))`
///
/// where `s_i = sigmoid(y_i)` and `r_i = eta |y_i|`, clamped to 1 unless
/// disabled.
pub fn update_opinions(
    x: &DMatrix<f64>,
    x0: &DMatrix<f64>,
    evidence: &DVector<f64>,
    msgs: &MessagePair,
    dp: &DynamicsParams,
) -> DMatrix<f64> {
    let lam = dp.lambda;
    let (u_a, u_d) = (&msgs.adversary, &msgs.defender);
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, c| {
        let y = evidence[i];
        let share = sigmoid(y, dp.sigmoid_gain);
        let mut rate = dp.eta * y.abs();
        if dp.clamp_rate {
            rate = rate.min(1.0);
        }
        let target = share * u_d[c] + (1.0 - share) * u_a[c];
        let xi = x[(i, c)];
        (1.0 - lam) * x0[(i, c)] + lam * (xi + rate * (target - xi))
    })
}

/// Evidence received by each point under the given messages.
pub fn evidence_for_points(
    points: &DMatrix<f64>,
    masses: Option<&[f64]>,
    msgs: &MessagePair,
    dp: &DynamicsParams,
    k: &KernelConfig,
) -> Result<DVector<f64>> {
    let w = weights_from_points(points, masses, k)?;
    let p_a = exposure_probabilities(&msgs.adversary, points, k)?;
    let p_d = exposure_probabilities(&msgs.defender, points, k)?;
    accumulated_evidence(&w, &p_a, &p_d, dp)
}

/// One macro-time step for an arbitrary point set: weights from the current
/// points (optionally mass-weighted), exposure, evidence, opinion update.
pub fn step_points(
    points: &DMatrix<f64>,
    anchors: &DMatrix<f64>,
    masses: Option<&[f64]>,
    msgs: &MessagePair,
    dp: &DynamicsParams,
    k: &KernelConfig,
) -> Result<DMatrix<f64>> {
    let d = points.ncols();
    if msgs.adversary.len() != d || msgs.defender.len() != d {
        return Err(Error::invalid("message dimension does not match opinions"));
    }
    let y = evidence_for_points(points, masses, msgs, dp, k)?;
    Ok(update_opinions(points, anchors, &y, msgs, dp))
}

/// One macro-time step of the full population.
pub fn opinion_step(
    p: &Population,
    msgs: &MessagePair,
    dp: &DynamicsParams,
    k: &KernelConfig,
) -> Result<Population> {
    let next = step_points(p.opinions(), p.initial_opinions(), None, msgs, dp, k)?;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("opinion update produced non-finite values".into()));
    }
    p.with_opinions(next)
}
