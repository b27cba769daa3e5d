mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use opinion_game::clustering::{
    bimodality_coefficient, cluster_stats, initial_clustering, merge_clusters, reduce, refresh,
    should_merge, ClusterAssignment,
};
use opinion_game::dynamics::{
    accumulated_evidence, exposure_probabilities, sigmoid, update_opinions, DynamicsParams,
    MessagePair,
};
use opinion_game::graph::{
    build_weight_matrix, kernel_eval, parse_edge_list, write_edge_list, EdgeListGraph,
    KernelConfig, Population,
};
use opinion_game::solver::{
    bounded_cognition_solve, lqr_best_response, lqr_solve, CostSpec, Goal,
    Player, SolverConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn points(max_n: usize, d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_n).prop_flat_map(move |n| {
        prop::collection::vec(-3.0..3.0f64, n * d)
            .prop_map(move |v| DMatrix::from_row_slice(n, d, &v))
    })
}

fn vec2() -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-2.0..2.0f64, 2).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_rows_are_stochastic(x in points(25, 2), sigma in 0.05..5.0f64) {
        let w = build_weight_matrix(&Population::new(x).unwrap(), &KernelConfig::gaussian(sigma)).unwrap();
        let e = w.entries();
        for i in 0..e.nrows() {
            prop_assert_eq!(e[(i, i)], 0.0);
            prop_assert!((e.row(i).sum() - 1.0).abs() < 1e-10);
            prop_assert!(e.row(i).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn kernel_symmetric_and_monotone(a in vec2(), b in vec2(), s1 in 0.1..3.0f64, ds in 0.01..3.0f64) {
        let k = KernelConfig::gaussian(s1);
        let ab = kernel_eval(a.as_slice(), b.as_slice(), &k).unwrap();
        prop_assert_eq!(ab, kernel_eval(b.as_slice(), a.as_slice(), &k).unwrap());
        prop_assert!(ab <= 1.0 && ab > 0.0);
        let far: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x + 2.0 * (y - x)).collect();
        prop_assert!(kernel_eval(a.as_slice(), &far, &k).unwrap() <= ab);
        let wider = kernel_eval(a.as_slice(), b.as_slice(), &KernelConfig::gaussian(s1 + ds)).unwrap();
        prop_assert!(wider >= ab);
    }

    #[test]
    fn evidence_antisymmetric_under_role_swap(
        x in points(20, 2), ua in vec2(), ud in vec2(),
        alpha in 0.05..0.9f64, ka in 0.1..2.0f64, kd in 0.1..2.0f64,
    ) {
        let k = KernelConfig::default();
        let w = build_weight_matrix(&Population::new(x.clone()).unwrap(), &k).unwrap();
        let pa = exposure_probabilities(&ua, &x, &k).unwrap();
        let pd = exposure_probabilities(&ud, &x, &k).unwrap();
        let dp = DynamicsParams { alpha, kappa_a: ka, kappa_d: kd, ..DynamicsParams::default() };
        let swapped = DynamicsParams { kappa_a: kd, kappa_d: ka, ..dp };
        let y = accumulated_evidence(&w, &pa, &pd, &dp).unwrap();
        let z = accumulated_evidence(&w, &pd, &pa, &swapped).unwrap();
        prop_assert!((&y + &z).amax() <= 1e-12 * y.amax().max(1.0));
    }

    #[test]
    fn evidence_grows_with_defender_exposure(
        x in points(20, 2), ua in vec2(), ud in vec2(), bump in 0.0..0.5f64,
    ) {
        let k = KernelConfig::default();
        let dp = DynamicsParams::default();
        let w = build_weight_matrix(&Population::new(x.clone()).unwrap(), &k).unwrap();
        let pa = exposure_probabilities(&ua, &x, &k).unwrap();
        let pd = exposure_probabilities(&ud, &x, &k).unwrap();
        let more = pd.map(|p| (p + bump).min(1.0));
        let y = accumulated_evidence(&w, &pa, &pd, &dp).unwrap();
        let y2 = accumulated_evidence(&w, &pa, &more, &dp).unwrap();
        prop_assert!(y2.iter().zip(y.iter()).all(|(a, b)| *a >= b - 1e-12));
    }

    #[test]
    fn sigmoid_is_symmetric(y in -50.0..50.0f64, gain in 0.1..5.0f64) {
        prop_assert!((sigmoid(y, gain) + sigmoid(-y, gain) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn opinions_stay_in_box_of_anchors_state_and_messages(
        x in points(20, 2), ua in vec2(), ud in vec2(), eta in 0.0..3.0f64, lambda in 0.0..1.0f64,
    ) {
        let k = KernelConfig::default();
        let dp = DynamicsParams { eta, lambda, ..DynamicsParams::default() };
        let x0 = x.map(|v| 0.5 * v);
        let pa = exposure_probabilities(&ua, &x, &k).unwrap();
        let pd = exposure_probabilities(&ud, &x, &k).unwrap();
        let w = build_weight_matrix(&Population::new(x.clone()).unwrap(), &k).unwrap();
        let y = accumulated_evidence(&w, &pa, &pd, &dp).unwrap();
        let next = update_opinions(&x, &x0, &y, &MessagePair::new(ua.clone(), ud.clone()), &dp);
        for c in 0..2 {
            let all = x.column(c).iter().chain(x0.column(c).iter()).copied()
                .chain([ua[c], ud[c]]).collect::<Vec<_>>();
            let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(next.column(c).iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }
    }

    #[test]
    fn bimodality_affine_invariant(
        v in prop::collection::vec(-3.0..3.0f64, 5..60), a in 0.1..10.0f64, b in -5.0..5.0f64, neg in any::<bool>(),
    ) {
        let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let s = if neg { -a } else { a };
        let w: Vec<f64> = v.iter().map(|x| s * x + b).collect();
        let (p, q) = (bimodality_coefficient(&v).unwrap(), bimodality_coefficient(&w).unwrap());
        prop_assert!((p - q).abs() < 1e-8);
    }

    #[test]
    fn refresh_equivariant_under_label_permutation(
        x in points(40, 2), m0 in 2..6usize, shift in 1..5usize,
    ) {
        prop_assume!(m0 <= x.nrows());
        let p = Population::new(x).unwrap();
        let a = initial_clustering(&p, m0, 0).unwrap();
        let permuted = ClusterAssignment::new(
            a.labels().iter().map(|l| (l + shift) % a.count()).collect(), a.count()).unwrap();
        let r1 = refresh(&a, &p, 0.55, 1e-9).unwrap();
        let r2 = refresh(&permuted, &p, 0.55, 1e-9).unwrap();
        prop_assert!(r1.same_partition(&r2));
    }

    #[test]
    fn merge_leaves_no_mergeable_pair(x in points(40, 2), m0 in 2..8usize) {
        prop_assume!(m0 <= x.nrows());
        let p = Population::new(x).unwrap();
        let a = initial_clustering(&p, m0, 0).unwrap();
        let merged = merge_clusters(&a, &p, 1e-9).unwrap();
        let st = cluster_stats(&merged, &p).unwrap();
        for i in 0..st.len() {
            for j in i + 1..st.len() {
                prop_assert!(!should_merge(&st[i], &st[j], 1e-9));
            }
        }
        prop_assert_eq!(merged.sizes().iter().sum::<usize>(), p.len());
    }

    #[test]
    fn reduced_masses_sum_to_population(x in points(40, 2), m0 in 2..8usize) {
        prop_assume!(m0 <= x.nrows());
        let p = Population::new(x).unwrap();
        let a = initial_clustering(&p, m0, 0).unwrap();
        let rs = reduce(&a, &p, &KernelConfig::default()).unwrap();
        prop_assert_eq!(rs.masses.iter().sum::<usize>(), p.len());
    }

    #[test]
    fn singleton_clusters_reproduce_full_weights(x in points(15, 2), sigma in 0.2..3.0f64) {
        let n = x.nrows();
        let p = Population::new(x).unwrap();
        let k = KernelConfig::gaussian(sigma);
        let a = ClusterAssignment::new((0..n).collect(), n).unwrap();
        let rs = reduce(&a, &p, &k).unwrap();
        let w = build_weight_matrix(&p, &k).unwrap();
        prop_assert!((rs.reduced_weights.entries() - w.entries()).amax() < 1e-15);
        prop_assert_eq!(&rs.centers, p.opinions());
    }

    #[test]
    fn edge_list_round_trip(pairs in prop::collection::vec((0u64..40, 0u64..40), 1..80)) {
        let g = EdgeListGraph::from_pairs(pairs).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = parse_edge_list(&buf[..]).unwrap();
        // Isolated nodes (self-loop only) are not representable as edges.
        let connected = EdgeListGraph::from_pairs(
            g.edges.iter().map(|&(a, b)| (g.node_ids[a], g.node_ids[b]))).ok();
        prop_assert!(back == g || Some(back) == connected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn value_matrices_psd(seed in any::<u64>(), n in 1..7usize, du in 1..3usize, h in 1..7usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lin, cost) = random_lq_instance(&mut rng, n, du, h);
        for player in [Player::Defender, Player::Adversary] {
            let sol = lqr_solve(&lin, &passive_opponent(&lin, player), &cost, player).unwrap();
            for p in &sol.values {
                prop_assert!((p - p.transpose()).amax() <= 1e-9 * p.amax().max(1.0));
                let min = p.clone().symmetric_eigen().eigenvalues.min();
                prop_assert!(min >= -1e-8 * p.amax().max(1.0));
            }
        }
    }

    #[test]
    fn leader_and_follower_agree_against_a_silent_opponent(
        seed in any::<u64>(), n in 1..6usize, h in 1..5usize,
    ) {
        // With identical input matrices and a passive opponent, the two roles
        // face the same control problem.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut lin, cost) = random_lq_instance(&mut rng, n, 1, h);
        lin.b_a = lin.b_d.clone();
        lin.reference.inputs_a = lin.reference.inputs_d.clone();
        let d = lqr_best_response(&lin, &passive_opponent(&lin, Player::Defender), &cost, Player::Defender).unwrap();
        let a = lqr_best_response(&lin, &passive_opponent(&lin, Player::Adversary), &cost, Player::Adversary).unwrap();
        for t in 0..h {
            prop_assert!((&d.gains[t] - &a.gains[t]).amax() < 1e-12);
            prop_assert!((&d.offsets[t] - &a.offsets[t]).amax() < 1e-12);
        }
    }

    #[test]
    fn best_response_never_worse_than_previous_level(seed in any::<u64>(), m in 2..5usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rs = random_reduced_state(&mut rng, m, 2, 1.0);
        let d2 = DMatrix::<f64>::identity(2, 2);
        let cost_a = CostSpec::new(d2.clone() * 3.0, d2.clone() * 20.0, Goal::Point(DVector::from_vec(vec![-1.0, 0.0])));
        let cost_d = CostSpec::new(d2.clone(), d2 * 80.0, Goal::InitialOpinions);
        let cfg = SolverConfig { horizon: 3, max_level: 3, ..SolverConfig::default() };
        let u0 = MessagePair::new(DVector::from_vec(vec![-1.0, 0.0]), DVector::zeros(2));
        let sol = bounded_cognition_solve(&rs, &cost_a, &cost_d, &cfg, &DynamicsParams::default(), &KernelConfig::default(), &u0).unwrap();
        for r in &sol.levels {
            prop_assert!(r.defender_best_response <= r.defender_previous + 1e-9 * r.defender_previous.abs().max(1.0));
        }
        prop_assert!(sol.defender.is_finite() && sol.adversary.is_finite());
    }
}
