//! Independent reference computations shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use opinion_game::clustering::{reduce, ClusterAssignment, ReducedState};
use opinion_game::graph::{KernelConfig, Population};
use opinion_game::dynamics::{DynamicsParams, MessagePair};
use opinion_game::solver::{
    bounded_cognition_solve, linearized_objective, CostSpec, FeedbackPolicy, Goal,
    LinearizedDynamics, Player, ReducedCost, ReferenceTrajectory, SolverConfig,
    StackelbergSolution,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn gaussian(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * sigma * sigma)).exp()
}

/// Row-normalized kernel matrix with zero diagonal, by direct loops.
pub fn weights(x: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let total: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| gaussian(&rows[i], &rows[j], sigma))
            .sum();
        for j in (0..n).filter(|&j| j != i) {
            w[(i, j)] = gaussian(&rows[i], &rows[j], sigma) / total;
        }
    }
    w
}

/// `sum_{s=0}^{s_max} y_s` of the micro recursion started at zero with the
/// forcing of step `s` taken as `e^{-kappa (s + 1)}`.
pub fn truncated_evidence(
    w: &DMatrix<f64>,
    p_a: &DVector<f64>,
    p_d: &DVector<f64>,
    alpha: f64,
    kappa_a: f64,
    kappa_d: f64,
    s_max: usize,
) -> DVector<f64> {
    let n = w.nrows();
    let mut y = DVector::zeros(n);
    let mut total = DVector::zeros(n);
    for s in 0..s_max {
        let k = (s + 1) as f64;
        let next = alpha * (w * &y) - p_a * (-kappa_a * k).exp() + p_d * (-kappa_d * k).exp();
        y = next;
        total += &y;
    }
    total
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// Random linearized game with `n` states, `du` inputs per player and the
/// given horizon, plus a cost with PSD (possibly singular) `Q` and PD `R`.
pub fn random_lq_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    du: usize,
    h: usize,
) -> (LinearizedDynamics, ReducedCost) {
    let a = (0..h).map(|_| random_matrix(rng, n, n, 0.6)).collect();
    let b_a = (0..h).map(|_| random_matrix(rng, n, du, 1.0)).collect();
    let b_d = (0..h).map(|_| random_matrix(rng, n, du, 1.0)).collect();
    let c = (0..h).map(|_| random_vector(rng, n, 0.3)).collect();
    let reference = ReferenceTrajectory {
        states: (0..=h).map(|_| random_vector(rng, n, 1.0)).collect(),
        inputs_a: (0..h).map(|_| random_vector(rng, du, 1.0)).collect(),
        inputs_d: (0..h).map(|_| random_vector(rng, du, 1.0)).collect(),
    };
    let rank = rng.random_range(1..=n);
    let lq = random_matrix(rng, rank, n, 1.0);
    let lr = random_matrix(rng, du, du, 1.0);
    let cost = ReducedCost {
        state_weight: lq.transpose() * lq,
        input_weight: lr.transpose() * lr + DMatrix::identity(du, du) * 0.5,
        goal: random_vector(rng, n, 1.0),
    };
    (
        LinearizedDynamics {
            a,
            b_a,
            b_d,
            c,
            reference,
        },
        cost,
    )
}

/// Opponent that always plays its reference input.
pub fn passive_opponent(lin: &LinearizedDynamics, player: Player) -> FeedbackPolicy {
    let other = player.opponent();
    let h = lin.horizon();
    let mut p = FeedbackPolicy::constant(other, lin.u_ref(other, 0), &lin.reference.states[..h]);
    for t in 0..h {
        p.offsets[t] = lin.u_ref(other, t).clone();
    }
    p
}

/// Minimizer of the player's cost over its stacked absolute inputs, from
/// the normal equations, with the opponent at its reference inputs and the
/// deviation starting at zero.
pub fn stacked_qp_inputs(
    lin: &LinearizedDynamics,
    cost: &ReducedCost,
    player: Player,
) -> Vec<DVector<f64>> {
    let h = lin.horizon();
    let n = lin.state_len();
    let du = lin.input_len();
    let nu = h * du;
    // ds_t = M_t U + m_t
    let mut m_mat = DMatrix::<f64>::zeros(n, nu);
    let mut m_vec = DVector::<f64>::zeros(n);
    let mut hess = DMatrix::<f64>::zeros(nu, nu);
    let mut grad = DVector::<f64>::zeros(nu);
    let q = &cost.state_weight;
    let mut add_state = |mm: &DMatrix<f64>, mv: &DVector<f64>, t: usize| {
        let off = &lin.reference.states[t] + mv - &cost.goal;
        hess += mm.transpose() * q * mm;
        grad += mm.transpose() * q * off;
    };
    for t in 0..h {
        add_state(&m_mat, &m_vec, t);
        let b = lin.b(player, t);
        let mut next_mat = &lin.a[t] * &m_mat;
        let mut block = next_mat.view_mut((0, t * du), (n, du));
        block += b;
        let next_vec = &lin.a[t] * &m_vec - b * lin.u_ref(player, t) + &lin.c[t];
        m_mat = next_mat;
        m_vec = next_vec;
    }
    add_state(&m_mat, &m_vec, h);
    for t in 0..h {
        let mut block = hess.view_mut((t * du, t * du), (du, du));
        block += &cost.input_weight;
    }
    let u = hess.cholesky().expect("stacked QP is strictly convex").solve(&(-grad));
    (0..h).map(|t| u.rows(t * du, du).into_owned()).collect()
}

/// Inputs produced by a feedback policy along the deviation dynamics from
/// zero, with the opponent at its reference inputs.
pub fn policy_inputs(
    lin: &LinearizedDynamics,
    policy: &FeedbackPolicy,
    player: Player,
) -> Vec<DVector<f64>> {
    let mut ds = DVector::zeros(lin.state_len());
    let mut out = Vec::new();
    for t in 0..lin.horizon() {
        let u = policy.eval(t, &(&lin.reference.states[t] + &ds));
        ds = &lin.a[t] * &ds + lin.b(player, t) * (&u - lin.u_ref(player, t)) + &lin.c[t];
        out.push(u);
    }
    out
}

pub fn stacked_rel_err(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum();
    let den: f64 = b.iter().map(|y| y.norm_squared()).sum();
    (num / den.max(1e-300)).sqrt()
}

/// Random reduced state of `m` clusters in `d` dimensions, each cluster a
/// jittered pair of individuals.
pub fn random_reduced_state(rng: &mut ChaCha8Rng, m: usize, d: usize, sigma: f64) -> ReducedState {
    let n = 2 * m;
    let x = random_matrix(rng, n, d, 1.5);
    let x0 = random_matrix(rng, n, d, 1.5);
    let p = Population::with_initial(x0, x).unwrap();
    let labels = (0..n).map(|i| i / 2).collect();
    let a = ClusterAssignment::new(labels, m).unwrap();
    reduce(&a, &p, &KernelConfig::gaussian(sigma)).unwrap()
}

/// Two 1-D clusters of three, adversary pulling toward -1.5, defender
/// holding the initial opinions, solved to cognition level 3.
pub fn defender_certificate_instance() -> (StackelbergSolution, ReducedCost) {
    let p = Population::with_initial(
        DMatrix::from_column_slice(6, 1, &[-1.2, -1.0, -0.9, 0.7, 0.9, 1.1]),
        DMatrix::from_column_slice(6, 1, &[-1.0, -0.9, -0.7, 0.5, 0.8, 1.0]),
    )
    .unwrap();
    let a = ClusterAssignment::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
    let k = KernelConfig::default();
    let rs = reduce(&a, &p, &k).unwrap();
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let cost_a = CostSpec::new(one(3.0), one(20.0), Goal::Point(DVector::from_element(1, -1.5)));
    let cost_d = CostSpec::new(one(1.0), one(80.0), Goal::InitialOpinions);
    let cfg = SolverConfig {
        horizon: 5,
        max_level: 3,
        steps: 5,
        ..SolverConfig::default()
    };
    let u0 = MessagePair::new(DVector::from_element(1, -1.0), DVector::from_element(1, 0.0));
    let sol = bounded_cognition_solve(&rs, &cost_a, &cost_d, &cfg, &DynamicsParams::default(), &k, &u0)
        .unwrap();
    (sol, cost_d.reduced(&rs))
}

/// Smallest change of the defender's linearized objective over all single
/// gain-entry perturbations by `+-delta`, minimised over initial deviations
/// `0` and `+-0.1 e_i` from the reference. Returns `(worst, base_scale)`.
///
/// From a zero deviation the closed loop never leaves the reference, so
/// gains only matter for the displaced starts.
pub fn gain_perturbation_margin(
    sol: &StackelbergSolution,
    cost: &ReducedCost,
    delta: f64,
) -> (f64, f64) {
    let lin = &sol.linearization;
    let n = lin.state_len();
    let mut starts = vec![DVector::zeros(n)];
    for i in 0..n {
        for s in [0.1, -0.1] {
            let mut v = DVector::zeros(n);
            v[i] = s;
            starts.push(v);
        }
    }
    let mut worst = f64::INFINITY;
    let mut scale = 0.0f64;
    for ds0 in &starts {
        let objective = |pol: &FeedbackPolicy| {
            linearized_objective(lin, Player::Defender, pol, &sol.adversary, cost, ds0)
        };
        let base = objective(&sol.defender);
        scale = scale.max(base.abs());
        for t in 0..sol.defender.horizon() {
            let (r, c) = sol.defender.gains[t].shape();
            for i in 0..r {
                for j in 0..c {
                    for step in [delta, -delta] {
                        let mut pert = sol.defender.clone();
                        pert.gains[t][(i, j)] += step;
                        worst = worst.min(objective(&pert) - base);
                    }
                }
            }
        }
    }
    (worst, scale)
}
