use fg_core::bp::{map_bounds, run_bp, BpConfig, BpMode};
use fg_core::exact::{enumerate, DEFAULT_STATE_CAP};
use fg_core::generators::{generate, random_graph, random_tree, DatasetSpec, Family, RandomGraphSpec};
use fg_core::search::{beam_search, best_first_search, SearchConfig};
use fg_core::uai::{read_uai, write_uai};
use fg_core::witness::graphs_match;
use fg_core::{apply_witness, tensor_sum, reduce_except, FactorGraph, PermutationWitness, ReduceMode, Symmetry, ZeroClamp};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Brute force over assignments in reverse lexicographic order, with scores
/// summed from raw tensor lookups.
fn naive(g: &FactorGraph) -> (f64, Vec<Vec<f64>>, f64) {
    let cards = g.cardinalities();
    let mut x = vec![0usize; cards.len()];
    let mut scores = Vec::new();
    let mut states = Vec::new();
    loop {
        let s: f64 = g
            .factors()
            .iter()
            .map(|f| {
                let idx: Vec<usize> = f.scope.iter().map(|&v| x[v]).collect();
                f.log_potential.get(&idx)
            })
            .sum();
        scores.push(s);
        states.push(x.clone());
        // increment from the first variable
        let mut i = 0;
        while i < x.len() {
            x[i] += 1;
            if x[i] < cards[i] {
                break;
            }
            x[i] = 0;
            i += 1;
        }
        if i == x.len() {
            break;
        }
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    let mut marg: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    for (s, st) in scores.iter().zip(&states) {
        let p = (s - m).exp() / z;
        for (v, &l) in st.iter().enumerate() {
            marg[v][l] += p;
        }
    }
    (m + z.ln(), marg, m)
}

fn linf(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn graph(seed: u64, spec: RandomGraphSpec) -> FactorGraph {
    random_graph(&spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_independent_oracle(seed in any::<u64>()) {
        let g = graph(seed, RandomGraphSpec::default());
        let r = enumerate(&g, DEFAULT_STATE_CAP).unwrap();
        let (log_z, marg, best) = naive(&g);
        prop_assert!((r.log_z - log_z).abs() < 1e-10);
        prop_assert!(linf(&r.marginals, &marg) < 1e-12);
        prop_assert!((r.map_log_score - best).abs() < 1e-12);
        prop_assert!((g.log_score(&r.map_assignment).unwrap() - best).abs() < 1e-12);
        for row in &r.marginals {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sum_product_exact_on_trees(seed in any::<u64>()) {
        let spec = RandomGraphSpec { min_vars: 1, max_vars: 8, min_card: 2, max_card: 4, ..RandomGraphSpec::default() };
        let g = random_tree(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(g.is_forest());
        let r = run_bp(&g, &BpConfig::default());
        let (_, marg, _) = naive(&g);
        prop_assert!(linf(&r.beliefs.variable_beliefs, &marg) < 1e-8);
    }

    #[test]
    fn max_product_decodes_tree_map(seed in any::<u64>()) {
        let spec = RandomGraphSpec { max_vars: 7, ..RandomGraphSpec::binary(7) };
        let g = random_tree(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = run_bp(&g, &BpConfig { mode: BpMode::Max, ..BpConfig::default() });
        let x = fg_core::bp::decode_map(&r.beliefs);
        let (_, _, best) = naive(&g);
        // ties in the MAP are measure-zero for Gaussian potentials
        prop_assert!((g.log_score(&x).unwrap() - best).abs() < 1e-9);
    }

    #[test]
    fn witness_preserves_scores_and_marginals(seed in any::<u64>()) {
        let g = graph(seed, RandomGraphSpec::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let w = PermutationWitness::random_full(&g, &mut rng);
        let g2 = apply_witness(&g, &w).unwrap();
        let x: Vec<usize> = g.cardinalities().iter().map(|&c| (seed as usize) % c).collect();
        let y = w.permute_assignment(&x);
        prop_assert!((g.log_score(&x).unwrap() - g2.log_score(&y).unwrap()).abs() < 1e-12);
        let a = enumerate(&g, DEFAULT_STATE_CAP).unwrap();
        let b = enumerate(&g2, DEFAULT_STATE_CAP).unwrap();
        prop_assert!((a.log_z - b.log_z).abs() < 1e-10);
        prop_assert!(linf(&w.permute_marginals(&a.marginals), &b.marginals) < 1e-12);
    }

    #[test]
    fn witness_inverse_round_trips(seed in any::<u64>()) {
        let g = graph(seed, RandomGraphSpec::default());
        let w = PermutationWitness::random_full(&g, &mut ChaCha8Rng::seed_from_u64(seed));
        let g2 = apply_witness(&g, &w).unwrap();
        let back = apply_witness(&g2, &w.inverse()).unwrap();
        prop_assert!(graphs_match(&g, &back, 0.0));
    }

    #[test]
    fn witness_composition(seed in any::<u64>()) {
        let g = graph(seed, RandomGraphSpec::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = PermutationWitness::random_full(&g, &mut rng);
        let g1 = apply_witness(&g, &w1).unwrap();
        let w2 = PermutationWitness::random_full(&g1, &mut rng);
        let g2 = apply_witness(&g1, &w2).unwrap();
        prop_assert!(graphs_match(&apply_witness(&g, &w1.then(&w2)).unwrap(), &g2, 0.0));
    }

    #[test]
    fn bp_equivariant_under_each_symmetry(seed in any::<u64>(), damping in 0.0f64..0.9) {
        let g = graph(seed, RandomGraphSpec::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for mode in [BpMode::Sum, BpMode::Max] {
            let cfg = BpConfig { mode, max_iters: 30, ..BpConfig::damped(damping) };
            let base = run_bp(&g, &cfg).beliefs.variable_beliefs;
            for s in Symmetry::ALL {
                let w = PermutationWitness::random(&g, s, &mut rng);
                let out = run_bp(&apply_witness(&g, &w).unwrap(), &cfg).beliefs.variable_beliefs;
                prop_assert!(linf(&w.permute_marginals(&base), &out) < 1e-8, "{}", s.name());
            }
        }
    }

    #[test]
    fn map_bounds_sandwich_oracle(seed in any::<u64>(), damping in 0.0f64..0.9) {
        let g = graph(seed, RandomGraphSpec::binary(10));
        let o = enumerate(&g, DEFAULT_STATE_CAP).unwrap();
        let r = run_bp(&g, &BpConfig { mode: BpMode::Max, max_iters: 50, ..BpConfig::damped(damping) });
        let (lo, hi) = map_bounds(&g, &r, o.log_z);
        let p = (o.map_log_score - o.log_z).exp();
        prop_assert!(lo <= p + 1e-10 && p <= hi + 1e-10, "{lo} {p} {hi}");
    }

    #[test]
    fn beam_never_exceeds_map_and_is_monotone(seed in any::<u64>(), k in 1usize..12) {
        let g = graph(seed, RandomGraphSpec::default());
        let o = enumerate(&g, DEFAULT_STATE_CAP).unwrap();
        let r = beam_search(&g, &SearchConfig { cache_size: k, seed, ..SearchConfig::default() });
        prop_assert!(r.log_score <= o.map_log_score + 1e-12);
        prop_assert!(r.trajectory.windows(2).all(|w| w[1].1 >= w[0].1));
        prop_assert!((g.log_score(&r.assignment).unwrap() - r.log_score).abs() < 1e-9);
    }

    #[test]
    fn best_first_is_beam_of_one(seed in any::<u64>()) {
        let g = graph(seed, RandomGraphSpec::default());
        let a = best_first_search(&g, &SearchConfig { seed, ..SearchConfig::default() });
        let b = beam_search(&g, &SearchConfig { cache_size: 1, seed, ..SearchConfig::default() });
        prop_assert_eq!(a, b);
    }

    #[test]
    fn uai_round_trip_is_fixpoint(seed in any::<u64>()) {
        let g = graph(seed, RandomGraphSpec::default());
        let once = read_uai(write_uai(&g).as_bytes(), ZeroClamp::default()).unwrap();
        let twice = read_uai(write_uai(&once).as_bytes(), ZeroClamp::default()).unwrap();
        prop_assert!(graphs_match(&g, &once, 1e-12));
        prop_assert!(graphs_match(&once, &twice, 0.0));
    }

    #[test]
    fn tensor_sum_then_reduce(a in prop::collection::vec(-5.0f64..5.0, 1..4),
                              b in prop::collection::vec(-5.0f64..5.0, 1..4),
                              c in prop::collection::vec(-5.0f64..5.0, 1..4)) {
        let t = tensor_sum(&[&a, &b, &c]).unwrap();
        let lse = |v: &[f64]| v.iter().map(|x| x.exp()).sum::<f64>().ln();
        let mx = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let r = reduce_except(&t, 1, ReduceMode::LogSumExp).unwrap();
        let m = reduce_except(&t, 1, ReduceMode::Max).unwrap();
        for (j, &bj) in b.iter().enumerate() {
            prop_assert!((r[j] - (bj + lse(&a) + lse(&c))).abs() < 1e-10);
            prop_assert!((m[j] - (bj + mx(&a) + mx(&c))).abs() < 1e-12);
        }
    }
}

#[test]
fn generated_datasets_round_trip_through_uai() {
    for family in [Family::Ising, Family::AsymBmrf] {
        for inst in generate(&DatasetSpec::new(family, 3, 20, 4), DEFAULT_STATE_CAP).unwrap() {
            let once = read_uai(write_uai(&inst.graph).as_bytes(), ZeroClamp::default()).unwrap();
            let twice = read_uai(write_uai(&once).as_bytes(), ZeroClamp::default()).unwrap();
            assert!(graphs_match(&inst.graph, &once, 1e-12));
            assert!(graphs_match(&once, &twice, 1e-12));
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let spec = DatasetSpec::new(Family::AsymBmrf, 4, 5, 99);
    let a: Vec<String> = generate(&spec, DEFAULT_STATE_CAP).unwrap().iter().map(|i| write_uai(&i.graph)).collect();
    let b: Vec<String> = generate(&spec, DEFAULT_STATE_CAP).unwrap().iter().map(|i| write_uai(&i.graph)).collect();
    assert_eq!(a, b);
}
