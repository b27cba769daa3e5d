//! Two-player influence-opinion games on opinion-dependent social networks.
//!
//! An adversary and a defender repeatedly inject messages (points in opinion
//! space) into a population. Messages diffuse over a homophily network whose
//! weights are derived from the current opinions, the net evidence each
//! individual receives is accumulated in closed form, and opinions then move
//! toward whichever message dominated, anchored by stubbornness to their
//! initial values.
//!
//! The game is solved on a cluster-reduced state: the population is grouped
//! by Ward clustering, clusters are split and merged as opinions drift, and
//! both players compute affine feedback policies by iterated LQR best
//! responses around a linearized reference trajectory, re-solved in a
//! receding-horizon loop.
//!
//! Module map:
//! - [`graph`]: interaction kernel, weight matrix, populations, edge lists,
//!   force-directed embedding.
//! - [`dynamics`]: exposure, micro-time diffusion, accumulated evidence and
//!   the macro-time opinion update.
//! - [`clustering`]: Ward clustering, bimodality-driven splits, merges and
//!   the reduced (quotient) state.
//! - [`solver`]: linearization, LQR best responses, the bounded-cognition
//!   iteration and the receding-horizon loop.
//! - [`experiment`]: configuration, metrics, scenario runs, sweeps, CSV and
//!   SVG output.

pub mod clustering;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod solver;

pub use error::{Error, Result};
