use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{FeedbackPolicy, ReducedModel};
use crate::error::{Error, Result};

/// Nominal states `s_0..=s_H` and the inputs `u_0..u_{H-1}` that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs_a: Vec<DVector<f64>>,
    pub inputs_d: Vec<DVector<f64>>,
}

impl ReferenceTrajectory {
    pub fn horizon(&self) -> usize {
        self.inputs_a.len()
    }

    fn check_finite(&self) -> bool {
        self.states
            .iter()
            .chain(&self.inputs_a)
            .chain(&self.inputs_d)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Rolls the reduced map forward `horizon` steps under constant messages.
pub fn rollout_reference(
    model: &ReducedModel,
    s0: &DVector<f64>,
    u_a: &DVector<f64>,
    u_d: &DVector<f64>,
    horizon: usize,
) -> Result<ReferenceTrajectory> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut states = vec![s0.clone()];
    for t in 0..horizon {
        let next = model.step(&states[t], u_a, u_d)?;
        states.push(next);
    }
    Ok(ReferenceTrajectory {
        states,
        inputs_a: vec![u_a.clone(); horizon],
        inputs_d: vec![u_d.clone(); horizon],
    })
}

/// Rolls the reduced map forward under both players' feedback policies.
pub fn rollout_closed_loop(
    model: &ReducedModel,
    s0: &DVector<f64>,
    adversary: &FeedbackPolicy,
    defender: &FeedbackPolicy,
) -> Result<ReferenceTrajectory> {
    let horizon = adversary.horizon();
    if defender.horizon() != horizon {
        return Err(Error::invalid("policies span different horizons"));
    }
    let mut traj = ReferenceTrajectory {
        states: vec![s0.clone()],
        inputs_a: Vec::with_capacity(horizon),
        inputs_d: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        let s = &traj.states[t];
        let u_a = adversary.eval(t, s);
        let u_d = defender.eval(t, s);
        let next = model.step(s, &u_a, &u_d)?;
        traj.inputs_a.push(u_a);
        traj.inputs_d.push(u_d);
        traj.states.push(next);
    }
    if !traj.check_finite() {
        return Err(Error::Numeric("closed-loop rollout is not finite".into()));
    }
    Ok(traj)
}

/// Time-varying linearization around a reference:
/// `ds_{t+1} = A_t ds_t + B^a_t du^a_t + B^d_t du^d_t + c_t`.
#[derive(Debug, Clone)]
pub struct LinearizedDynamics {
    pub a: Vec<DMatrix<f64>>,
    pub b_a: Vec<DMatrix<f64>>,
    pub b_d: Vec<DMatrix<f64>>,
    /// `F(s_t, u_t) - s_{t+1}`; zero along a self-consistent reference.
    pub c: Vec<DVector<f64>>,
    pub reference: ReferenceTrajectory,
}

impl LinearizedDynamics {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_len(&self) -> usize {
        self.a.first().map_or(0, |a| a.nrows())
    }

    pub fn input_len(&self) -> usize {
        self.b_a.first().map_or(0, |b| b.ncols())
    }

    /// Input matrix of `player`.
    pub fn b(&self, player: super::Player, t: usize) -> &DMatrix<f64> {
        match player {
            super::Player::Adversary => &self.b_a[t],
            super::Player::Defender => &self.b_d[t],
        }
    }

    /// Reference input of `player`.
    pub fn u_ref(&self, player: super::Player, t: usize) -> &DVector<f64> {
        match player {
            super::Player::Adversary => &self.reference.inputs_a[t],
            super::Player::Defender => &self.reference.inputs_d[t],
        }
    }
}

/// Central-difference Jacobians of the reduced map along `traj`, with step
/// `fd_step * max(|z_j|, 1)` on coordinate `z_j` of `(s, u_a, u_d)`.
pub fn linearize(
    model: &ReducedModel,
    traj: &ReferenceTrajectory,
    fd_step: f64,
) -> Result<LinearizedDynamics> {
    let n = model.state_len();
    let d = model.dim();
    let horizon = traj.horizon();
    let mut out = LinearizedDynamics {
        a: Vec::with_capacity(horizon),
        b_a: Vec::with_capacity(horizon),
        b_d: Vec::with_capacity(horizon),
        c: Vec::with_capacity(horizon),
        reference: traj.clone(),
    };
    for t in 0..horizon {
        let s = &traj.states[t];
        let (u_a, u_d) = (&traj.inputs_a[t], &traj.inputs_d[t]);
        let nominal = model.step(s, u_a, u_d)?;
        let z = DVector::from_iterator(
            n + 2 * d,
            s.iter().chain(u_a.iter()).chain(u_d.iter()).copied(),
        );
        let eval = |zz: &DVector<f64>| {
            model.step(
                &zz.rows(0, n).into_owned(),
                &zz.rows(n, d).into_owned(),
                &zz.rows(n + d, d).into_owned(),
            )
        };
        let columns: Vec<Result<DVector<f64>>> = (0..z.len())
            .into_par_iter()
            .map(|j| {
                let h = fd_step * z[j].abs().max(1.0);
                let mut plus = z.clone();
                plus[j] += h;
                let mut minus = z.clone();
                minus[j] -= h;
                let dz = plus[j] - minus[j];
                Ok((eval(&plus)? - eval(&minus)?) / dz)
            })
            .collect();
        let mut jac = DMatrix::zeros(n, z.len());
        for (j, col) in columns.into_iter().enumerate() {
            let col = col?;
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteJacobian {
                    step: t,
                    coordinate: j,
                });
            }
            jac.set_column(j, &col);
        }
        out.a.push(jac.columns(0, n).into_owned());
        out.b_a.push(jac.columns(n, d).into_owned());
        out.b_d.push(jac.columns(n + d, d).into_owned());
        out.c.push(nominal - &traj.states[t + 1]);
    }
    Ok(out)
}
