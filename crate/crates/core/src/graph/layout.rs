use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EdgeListGraph, Population};
use crate::error::{Error, Result};

const MIN_DIST: f64 = 0.01;

/// Two-dimensional Fruchterman-Reingold layout of `g`, rescaled to zero mean
/// and unit standard deviation per axis. The layout is used as both current
/// and initial opinions.
///
/// Positions start uniform in the unit square. Each iteration applies a
/// repulsive force `k^2 / dist` between all pairs and an attractive force
/// `dist^2 / k` along edges, with `k = sqrt(1 / n)`, and moves every node by
/// at most the current temperature, which cools linearly to zero.
pub fn force_directed_embedding(
    g: &EdgeListGraph,
    iterations: usize,
    seed: u64,
) -> Result<Population> {
    if iterations == 0 {
        return Err(Error::invalid("layout needs at least one iteration"));
    }
    let n = g.node_count();
    if n < 2 {
        return Err(Error::invalid(format!(
            "layout needs at least 2 nodes, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let mut neighbors = vec![Vec::new(); n];
    for &(a, b) in &g.edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }

    let k = (1.0 / n as f64).sqrt();
    let k2 = k * k;
    let span = |axis: usize, pos: &[[f64; 2]]| {
        let (lo, hi) = pos
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[axis]), hi.max(p[axis]))
            });
        hi - lo
    };
    let mut temp = 0.1 * span(0, &pos).max(span(1, &pos));
    let cooling = temp / (iterations as f64 + 1.0);

    for _ in 0..iterations {
        let step: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let pi = pos[i];
                let mut disp = [0.0, 0.0];
                for (j, pj) in pos.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let delta = [pi[0] - pj[0], pi[1] - pj[1]];
                    let dist = (delta[0] * delta[0] + delta[1] * delta[1]).sqrt().max(MIN_DIST);
                    let f = k2 / (dist * dist);
                    disp[0] += delta[0] * f;
                    disp[1] += delta[1] * f;
                }
                for &j in &neighbors[i] {
                    let pj = pos[j];
                    let delta = [pi[0] - pj[0], pi[1] - pj[1]];
                    let dist = (delta[0] * delta[0] + delta[1] * delta[1]).sqrt().max(MIN_DIST);
                    let f = dist / k;
                    disp[0] -= delta[0] * f;
                    disp[1] -= delta[1] * f;
                }
                let len = (disp[0] * disp[0] + disp[1] * disp[1]).sqrt().max(MIN_DIST);
                [disp[0] * temp / len, disp[1] * temp / len]
            })
            .collect();
        for (p, s) in pos.iter_mut().zip(&step) {
            p[0] += s[0];
            p[1] += s[1];
        }
        temp -= cooling;
    }

    let mut x = DMatrix::from_fn(n, 2, |i, c| pos[i][c]);
    standardize_columns(&mut x);
    Population::new(x)
}

/// Zero mean and unit population standard deviation per column; constant
/// columns are only centered.
pub(crate) fn standardize_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
}
