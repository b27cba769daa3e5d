//! Dynamic opinion clusters and the reduced (quotient) state.
//!
//! Clusters start from a Ward cut of the population and are then maintained
//! incrementally: a cluster whose projection on its principal axis has a
//! bimodality coefficient above the threshold is split in two by Ward, and
//! pairs whose means lie within one standard deviation of each other (along
//! the line joining them, under both clusters' covariances) are merged.

mod stats;
mod ward;

pub use stats::{bimodality_coefficient, principal_axis, project, shape_moments, ClusterStats};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{weights_from_points, KernelConfig, Population, WeightMatrix};

/// Clusters with fewer members are never split.
pub const MIN_SPLIT_SIZE: usize = 4;

/// Cluster label per individual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    m: usize,
}

impl ClusterAssignment {
    /// Validates that labels lie in `[0, m)` and every cluster is non-empty.
    pub fn new(labels: Vec<usize>, m: usize) -> Result<Self> {
        let mut seen = vec![false; m];
        for &l in &labels {
            if l >= m {
                return Err(Error::invalid(format!("label {l} outside [0, {m})")));
            }
            seen[l] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("cluster {empty} is empty")));
        }
        Ok(ClusterAssignment { labels, m })
    }

    /// Relabels arbitrary labels compactly by order of first appearance.
    pub fn from_raw(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        ClusterAssignment { m: map.len(), labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of clusters.
    pub fn count(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.m];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.m];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }

    /// Same partition, labels numbered by first appearance.
    pub fn canonical(&self) -> Self {
        Self::from_raw(&self.labels)
    }

    /// Whether both assignments induce the same partition of individuals.
    pub fn same_partition(&self, other: &Self) -> bool {
        self.len() == other.len() && self.canonical().labels == other.canonical().labels
    }

    fn check_population(&self, p: &Population) -> Result<()> {
        if self.labels.len() != p.len() {
            return Err(Error::invalid(format!(
                "assignment covers {} individuals, population has {}",
                self.labels.len(),
                p.len()
            )));
        }
        Ok(())
    }
}

/// Ward clustering of the current opinions cut at `m0` clusters.
///
/// Fully deterministic; the seed is accepted for interface stability and
/// does not influence the result.
pub fn initial_clustering(p: &Population, m0: usize, _seed: u64) -> Result<ClusterAssignment> {
    if m0 == 0 || m0 > p.len() {
        return Err(Error::invalid(format!(
            "initial cluster count {m0} outside [1, {}]",
            p.len()
        )));
    }
    let rows: Vec<usize> = (0..p.len()).collect();
    let labels = ward::ward_cut(p.opinions(), &rows, m0);
    ClusterAssignment::new(labels, m0)
}

/// Statistics of every cluster on the current opinions.
pub fn cluster_stats(a: &ClusterAssignment, p: &Population) -> Result<Vec<ClusterStats>> {
    a.check_population(p)?;
    Ok(a.members()
        .iter()
        .map(|rows| ClusterStats::of_rows(p.opinions(), rows))
        .collect())
}

/// Splits every cluster whose principal-axis bimodality coefficient exceeds
/// `threshold` into two Ward clusters. One pass, no recursion.
pub fn split_clusters(
    a: &ClusterAssignment,
    p: &Population,
    threshold: f64,
) -> Result<ClusterAssignment> {
    a.check_population(p)?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "split threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let a = a.canonical();
    let mut labels = a.labels.clone();
    let mut next = a.m;
    for rows in a.members() {
        if rows.len() < MIN_SPLIT_SIZE {
            continue;
        }
        let st = ClusterStats::of_rows(p.opinions(), &rows);
        match st.bimodality() {
            Some(bc) if bc > threshold => {
                let halves = ward::ward_cut(p.opinions(), &rows, 2);
                for (&i, &h) in rows.iter().zip(&halves) {
                    if h == 1 {
                        labels[i] = next;
                    }
                }
                next += 1;
            }
            _ => {}
        }
    }
    Ok(ClusterAssignment::from_raw(&labels))
}

/// Merge test for two clusters with `D = mu_i - mu_j`: `|D| <= epsilon`, or
/// `|D|^2 < min(D' S_i D, D' S_j D) / D'D`.
pub fn should_merge(a: &ClusterStats, b: &ClusterStats, epsilon: f64) -> bool {
    let diff = &a.mean - &b.mean;
    let dd = diff.norm_squared();
    if dd.sqrt() <= epsilon {
        return true;
    }
    let spread = |s: &ClusterStats| diff.dot(&(&s.covariance * &diff)) / dd;
    dd < spread(a).min(spread(b))
}

/// Greedy pairwise merging to a fixed point.
///
/// Pairs are scanned in ascending `(i, j)` order; on a merge the statistics
/// of the combined cluster are recomputed and the scan continues. Passes
/// repeat until one completes without merging, so on return no pair
/// satisfies [`should_merge`].
pub fn merge_clusters(
    a: &ClusterAssignment,
    p: &Population,
    epsilon: f64,
) -> Result<ClusterAssignment> {
    a.check_population(p)?;
    if !(epsilon >= 0.0) {
        return Err(Error::invalid("merge epsilon must be non-negative"));
    }
    let x = p.opinions();
    let mut groups = a.canonical().members();
    let mut stats: Vec<ClusterStats> = groups.iter().map(|g| ClusterStats::of_rows(x, g)).collect();
    loop {
        let mut merged = false;
        let mut i = 0;
        while i < groups.len() {
            let mut j = i + 1;
            while j < groups.len() {
                if should_merge(&stats[i], &stats[j], epsilon) {
                    let absorbed = groups.remove(j);
                    stats.remove(j);
                    groups[i].extend(absorbed);
                    groups[i].sort_unstable();
                    stats[i] = ClusterStats::of_rows(x, &groups[i]);
                    merged = true;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        if !merged {
            break;
        }
    }
    let mut labels = vec![0; p.len()];
    for (c, g) in groups.iter().enumerate() {
        for &i in g {
            labels[i] = c;
        }
    }
    Ok(ClusterAssignment::from_raw(&labels))
}

/// Per-macro-step maintenance: split, then merge.
pub fn refresh(
    a: &ClusterAssignment,
    p: &Population,
    threshold: f64,
    epsilon: f64,
) -> Result<ClusterAssignment> {
    let split = split_clusters(a, p, threshold)?;
    merge_clusters(&split, p, epsilon)
}

/// How the reduced weight matrix treats cluster sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReducedWeighting {
    /// Every cluster center interacts as a single individual.
    #[default]
    Uniform,
    /// Kernel toward a cluster is scaled by its mass.
    Mass,
}

/// Cluster-level state on which the game is solved.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    /// `m x d` mean current opinion per cluster.
    pub centers: DMatrix<f64>,
    /// `m x d` mean initial opinion per cluster.
    pub initial_centers: DMatrix<f64>,
    pub masses: Vec<usize>,
    pub reduced_weights: WeightMatrix,
    pub weighting: ReducedWeighting,
}

impl ReducedState {
    pub fn clusters(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn mass_weights(&self) -> Option<Vec<f64>> {
        match self.weighting {
            ReducedWeighting::Uniform => None,
            ReducedWeighting::Mass => Some(self.masses.iter().map(|&m| m as f64).collect()),
        }
    }
}

/// Per-cluster means of the rows of `x`.
pub fn cluster_means(a: &ClusterAssignment, x: &DMatrix<f64>) -> DMatrix<f64> {
    let d = x.ncols();
    let mut sums = DMatrix::zeros(a.count(), d);
    let sizes = a.sizes();
    for (i, &l) in a.labels().iter().enumerate() {
        for c in 0..d {
            sums[(l, c)] += x[(i, c)];
        }
    }
    for (l, &s) in sizes.iter().enumerate() {
        for c in 0..d {
            sums[(l, c)] /= s as f64;
        }
    }
    sums
}

pub fn reduce(a: &ClusterAssignment, p: &Population, k: &KernelConfig) -> Result<ReducedState> {
    reduce_with(a, p, k, ReducedWeighting::Uniform)
}

/// Quotient state: cluster means of current and initial opinions, masses, and
/// the weight matrix of the centers.
pub fn reduce_with(
    a: &ClusterAssignment,
    p: &Population,
    k: &KernelConfig,
    weighting: ReducedWeighting,
) -> Result<ReducedState> {
    a.check_population(p)?;
    if a.count() < 2 {
        return Err(Error::DegenerateReduction(a.count()));
    }
    let centers = cluster_means(a, p.opinions());
    let initial_centers = cluster_means(a, p.initial_opinions());
    let masses = a.sizes();
    let mass_f: Vec<f64> = masses.iter().map(|&m| m as f64).collect();
    let reduced_weights = weights_from_points(
        &centers,
        matches!(weighting, ReducedWeighting::Mass).then_some(&mass_f[..]),
        k,
    )?;
    Ok(ReducedState {
        centers,
        initial_centers,
        masses,
        reduced_weights,
        weighting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_weight_matrix, generate_synthetic_population, MixtureComponent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn line_population(xs: &[f64]) -> Population {
        Population::new(DMatrix::from_column_slice(xs.len(), 1, xs)).unwrap()
    }

    fn normal_sample(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(mean, sd).unwrap();
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    }

    /// Minimum within-cluster sum of squares over all bipartitions.
    fn exhaustive_two_means(x: &DMatrix<f64>) -> Vec<usize> {
        let n = x.nrows();
        let mut best = (f64::INFINITY, 0u64);
        for mask in 1..(1u64 << (n - 1)) {
            let rows: [Vec<usize>; 2] = [
                (0..n).filter(|&i| mask >> i & 1 == 0).collect(),
                (0..n).filter(|&i| mask >> i & 1 == 1).collect(),
            ];
            let sse: f64 = rows
                .iter()
                .map(|r| {
                    let s = ClusterStats::of_rows(x, r);
                    s.covariance.trace() * r.len() as f64
                })
                .sum();
            if sse < best.0 {
                best = (sse, mask);
            }
        }
        (0..n).map(|i| (best.1 >> i & 1) as usize).collect()
    }

    #[test]
    fn degenerate_cuts() {
        let comps = vec![MixtureComponent::isotropic(vec![0.0, 0.0], 1.0, 1.0)];
        let p = generate_synthetic_population(30, &comps, 1).unwrap();
        let a = initial_clustering(&p, 30, 0).unwrap();
        assert_eq!(a.labels(), &(0..30).collect::<Vec<_>>()[..]);
        let a = initial_clustering(&p, 1, 0).unwrap();
        assert!(a.labels().iter().all(|&l| l == 0));
        assert!(initial_clustering(&p, 31, 0).is_err());
        assert!(initial_clustering(&p, 0, 0).is_err());
    }

    #[test]
    fn separated_blobs_match_exhaustive_two_means() {
        let comps = vec![
            MixtureComponent::isotropic(vec![0.0, 0.0], 0.01, 0.5),
            MixtureComponent::isotropic(vec![1.0, 0.0], 0.01, 0.5),
        ];
        for seed in 0..4 {
            let p = generate_synthetic_population(12, &comps, seed).unwrap();
            let ward = initial_clustering(&p, 2, 0).unwrap();
            let oracle = ClusterAssignment::from_raw(&exhaustive_two_means(p.opinions()));
            assert!(ward.same_partition(&oracle));
            let blobs = ClusterAssignment::from_raw(
                &(0..12).map(|i| usize::from(i >= 6)).collect::<Vec<_>>(),
            );
            assert!(ward.same_partition(&blobs));
        }
    }

    #[test]
    fn unimodal_cluster_not_split() {
        let p = line_population(&normal_sample(500, 0.0, 1.0, 3));
        let a = ClusterAssignment::new(vec![0; 500], 1).unwrap();
        assert_eq!(split_clusters(&a, &p, 0.55).unwrap(), a);
    }

    #[test]
    fn bimodal_cluster_split() {
        let mut xs = normal_sample(250, -3.0, 1.0, 4);
        xs.extend(normal_sample(250, 3.0, 1.0, 5));
        let p = line_population(&xs);
        let a = ClusterAssignment::new(vec![0; 500], 1).unwrap();
        let s = split_clusters(&a, &p, 0.55).unwrap();
        assert_eq!(s.count(), 2);
        let st = cluster_stats(&s, &p).unwrap();
        assert!(st[0].mean[0] * st[1].mean[0] < 0.0);
        assert_eq!(s.sizes().iter().sum::<usize>(), 500);
    }

    #[test]
    fn threshold_one_blocks_moderate_bimodality() {
        let mut xs = normal_sample(250, -2.5, 1.0, 6);
        xs.extend(normal_sample(250, 2.5, 1.0, 7));
        let bc = bimodality_coefficient(&xs).unwrap();
        assert!(bc > 0.55 && bc <= 1.0);
        let p = line_population(&xs);
        let a = ClusterAssignment::new(vec![0; 500], 1).unwrap();
        assert_eq!(split_clusters(&a, &p, 1.0).unwrap(), a);
    }

    #[test]
    fn tiny_clusters_never_split() {
        let p = line_population(&[-5.0, 5.0, -5.0, 5.0, -5.0, 5.0]);
        let a = ClusterAssignment::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(split_clusters(&a, &p, 0.55).unwrap().count(), 2);
    }

    fn spherical_pair(offset: f64) -> (Population, ClusterAssignment) {
        // Four points at (+-1, +-1) around each mean: covariance exactly I.
        let mut rows = Vec::new();
        for cx in [0.0, offset] {
            for (dx, dy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                rows.extend([cx + dx, dy]);
            }
        }
        let p = Population::new(DMatrix::from_row_slice(8, 2, &rows)).unwrap();
        let a = ClusterAssignment::new(vec![0, 0, 0, 0, 1, 1, 1, 1], 2).unwrap();
        (p, a)
    }

    #[test]
    fn merge_rule_examples() {
        let (p, a) = spherical_pair(0.5);
        let st = cluster_stats(&a, &p).unwrap();
        assert_eq!(st[0].covariance, DMatrix::identity(2, 2));
        assert!(should_merge(&st[0], &st[1], 1e-9));
        assert_eq!(merge_clusters(&a, &p, 1e-9).unwrap().count(), 1);

        let (p, a) = spherical_pair(3.0);
        let st = cluster_stats(&a, &p).unwrap();
        assert!(!should_merge(&st[0], &st[1], 1e-9));
        assert_eq!(merge_clusters(&a, &p, 1e-9).unwrap().count(), 2);
    }

    #[test]
    fn identical_means_merge_through_guard() {
        let p = line_population(&[0.0, 0.0, 0.0]);
        let a = ClusterAssignment::new(vec![0, 1, 2], 3).unwrap();
        assert_eq!(merge_clusters(&a, &p, 1e-9).unwrap().count(), 1);
        // Without the guard, singletons have zero spread and cannot merge.
        let p = line_population(&[0.0, 1e-12, 5.0]);
        assert_eq!(merge_clusters(&a, &p, 0.0).unwrap().count(), 3);
    }

    #[test]
    fn reduce_examples() {
        let p = Population::new(DMatrix::from_row_slice(
            4,
            2,
            &[0.0, 0.0, 0.0, 2.0, 4.0, 0.0, 4.0, 2.0],
        ))
        .unwrap();
        let a = ClusterAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        let rs = reduce(&a, &p, &KernelConfig::default()).unwrap();
        assert_eq!(rs.centers, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 4.0, 1.0]));
        assert_eq!(rs.masses, vec![2, 2]);
        assert_eq!(
            rs.reduced_weights.entries(),
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );

        let one = ClusterAssignment::new(vec![0; 4], 1).unwrap();
        assert!(matches!(
            reduce(&one, &p, &KernelConfig::default()),
            Err(Error::DegenerateReduction(1))
        ));
    }

    #[test]
    fn singleton_reduction_is_identity() {
        let comps = vec![MixtureComponent::isotropic(vec![0.0, 0.0], 1.0, 1.0)];
        let p = generate_synthetic_population(15, &comps, 2).unwrap();
        let a = ClusterAssignment::new((0..15).collect(), 15).unwrap();
        let k = KernelConfig::gaussian(0.7);
        let rs = reduce(&a, &p, &k).unwrap();
        assert_eq!(&rs.centers, p.opinions());
        assert_eq!(rs.reduced_weights, build_weight_matrix(&p, &k).unwrap());
    }

    #[test]
    fn refresh_adjusts_counts() {
        // Stationary unimodal clusters: unchanged.
        let mut xs = normal_sample(200, -10.0, 1.0, 8);
        xs.extend(normal_sample(200, 10.0, 1.0, 9));
        let p = line_population(&xs);
        let a = ClusterAssignment::from_raw(&(0..400).map(|i| i / 200).collect::<Vec<_>>());
        assert_eq!(refresh(&a, &p, 0.55, 1e-9).unwrap(), a);

        // One cluster drifted into two far modes: count grows by one.
        let mut ys = normal_sample(200, -10.0, 1.0, 10);
        ys.extend(normal_sample(100, 5.0, 1.0, 11));
        ys.extend(normal_sample(100, 15.0, 1.0, 12));
        let p = line_population(&ys);
        assert_eq!(refresh(&a, &p, 0.55, 1e-9).unwrap().count(), 3);

        // Two clusters on the same mode: count drops by one.
        let zs = normal_sample(400, 0.0, 1.0, 13);
        let p = line_population(&zs);
        assert_eq!(refresh(&a, &p, 0.55, 1e-9).unwrap().count(), 1);
    }

    #[test]
    fn mass_weighted_reduction() {
        let p = line_population(&[0.0, 0.0, 0.0, 1.0, 2.0]);
        let a = ClusterAssignment::new(vec![0, 0, 0, 1, 2], 3).unwrap();
        let rs = reduce_with(&a, &p, &KernelConfig::default(), ReducedWeighting::Mass).unwrap();
        let w = rs.reduced_weights.entries();
        // Row 1 sees cluster 0 (mass 3, distance 1) and cluster 2 (mass 1, distance 1).
        assert!((w[(1, 0)] - 0.75).abs() < 1e-15);
        assert_eq!(rs.mass_weights(), Some(vec![3.0, 1.0, 1.0]));
    }
}
