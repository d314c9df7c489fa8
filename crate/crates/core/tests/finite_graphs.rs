use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotor_core::acceptance::random_multigraph;
use rotor_core::graph::{
    classify, enumerate_recurrent, is_recurrent, spanning_tree_count, DirectedMultigraph, GraphError,
    RotorConfiguration, StateClass,
};
use rotor_core::group::{
    apply_generator, order_of_generator, sandpile_structure, verify_isomorphism, verify_transitivity,
    RecurrentSet,
};
use rotor_core::tree::{build_tree, root_order, uniform_rotors, TreeSpec, TreeVariant, ROOT};
use rotor_core::walk::{
    check_harmonic_invariant, reverse_walk, route_all, route_to_sink, ChipDistribution, RoutingOptions,
    Scheduler,
};

fn wired(d: usize, n: usize) -> DirectedMultigraph {
    build_tree(TreeSpec::new(d, n, TreeVariant::Wired)).unwrap()
}

fn all_configurations(g: &DirectedMultigraph) -> Vec<RotorConfiguration> {
    let mut out = vec![Vec::new()];
    for x in g.vertices() {
        let choices = if x == g.sink() { 1 } else { g.out_degree(x) };
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..choices).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(|v| RotorConfiguration::new(g, v).unwrap()).collect()
}

/// Same graph with vertices listed in a different order.
fn relabel(g: &DirectedMultigraph, perm: &[usize]) -> DirectedMultigraph {
    let names: Vec<String> = perm.iter().map(|&i| g.name(i).to_string()).collect();
    let lists: Vec<Vec<String>> = perm
        .iter()
        .map(|&i| g.out_edges(i).iter().map(|&y| g.name(y).to_string()).collect())
        .collect();
    DirectedMultigraph::build(&names, g.name(g.sink()), &lists).unwrap()
}

#[test]
fn wired_tree_of_height_two_is_a_valid_graph() {
    let g = wired(3, 2);
    assert!(g.non_sink_vertices().all(|x| g.out_degree(x) >= 1));
}

#[test]
fn loop_edges_are_rejected() {
    let err = DirectedMultigraph::build(&["r", "s"], "s", &[vec!["r", "s"], vec!["r"]]).unwrap_err();
    assert_eq!(err, GraphError::LoopEdge("r".into()));
}

#[test]
fn recurrent_count_matches_determinant_on_wired_trees() {
    for (d, n) in [(3, 2), (3, 3), (4, 2), (4, 3), (5, 2)] {
        let g = wired(d, n);
        let rec = enumerate_recurrent(&g).unwrap();
        let brute = all_configurations(&g).into_iter().filter(|t| is_recurrent(&g, t)).count();
        assert_eq!(rec.len(), brute);
        assert_eq!(BigInt::from(rec.len()), spanning_tree_count(&g));
    }
}

#[test]
fn enumeration_is_canonical_and_duplicate_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let g = random_multigraph(&mut rng, 5);
        let rec = enumerate_recurrent(&g).unwrap();
        let sorted: Vec<_> = {
            let mut v: Vec<Vec<usize>> = rec.iter().map(|t| t.as_slice().to_vec()).collect();
            v.sort();
            v
        };
        assert_eq!(rec.iter().map(|t| t.as_slice().to_vec()).collect::<Vec<_>>(), sorted);
        assert_eq!(rec.iter().collect::<BTreeSet<_>>().len(), rec.len());
        assert!(rec.iter().all(|t| is_recurrent(&g, t)));
        assert_eq!(BigInt::from(rec.len()), spanning_tree_count(&g));
    }
}

#[test]
fn recurrence_is_invariant_under_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let g = random_multigraph(&mut rng, 5);
        let mut perm: Vec<usize> = g.vertices().collect();
        perm.shuffle(&mut rng);
        let h = relabel(&g, &perm);
        for t in all_configurations(&g) {
            let named = t.to_named(&g);
            let u = RotorConfiguration::from_named(&h, &named).unwrap();
            assert_eq!(is_recurrent(&g, &t), is_recurrent(&h, &u));
        }
    }
}

#[test]
fn classify_recurrent_implies_acyclic() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let g = random_multigraph(&mut rng, 4);
        for t in all_configurations(&g) {
            for x in g.vertices() {
                if classify(&g, &t, x) == StateClass::Recurrent {
                    assert!(is_recurrent(&g, &t));
                }
            }
        }
    }
}

#[test]
fn intermediate_states_are_recurrent_or_cyclic_at_the_chip() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let g = random_multigraph(&mut rng, 5);
        let rec = enumerate_recurrent(&g).unwrap();
        let t = &rec[rng.gen_range(0..rec.len())];
        for x in g.vertices() {
            let (_, trace) = route_to_sink(&g, t, x).unwrap();
            assert!(trace.is_consistent(&g));
            let mut visited = BTreeSet::new();
            for (u, chip) in trace.states(&g) {
                match classify(&g, &u, chip) {
                    StateClass::Recurrent => assert!(!visited.contains(&chip)),
                    StateClass::CycAt(y) => assert_eq!(y, chip),
                    StateClass::Neither => panic!("intermediate state classifies as neither"),
                }
                visited.insert(chip);
            }
        }
    }
}

#[test]
fn routing_maps_rec_into_itself_and_reverse_walk_inverts_it() {
    let mut graphs = vec![wired(3, 2), wired(3, 3), wired(4, 2)];
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    graphs.extend((0..10).map(|_| random_multigraph(&mut rng, 5)));
    for g in graphs {
        let rec = enumerate_recurrent(&g).unwrap();
        for x in g.vertices() {
            let mut images = BTreeSet::new();
            for t in &rec {
                let (u, _) = route_to_sink(&g, t, x).unwrap();
                assert!(is_recurrent(&g, &u));
                assert_eq!(&reverse_walk(&g, &u, x).unwrap(), t);
                images.insert(u);
            }
            assert_eq!(images.len(), rec.len());
        }
    }
}

#[test]
fn route_all_is_independent_of_the_scheduler() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let g = random_multigraph(&mut rng, 5);
        let rec = enumerate_recurrent(&g).unwrap();
        let t = &rec[rng.gen_range(0..rec.len())];
        let mut chips = ChipDistribution::empty(&g);
        for x in g.non_sink_vertices() {
            chips.add(x, rng.gen_range(0..4));
        }
        let stops: Vec<usize> = g.non_sink_vertices().filter(|_| rng.gen_bool(0.3)).collect();
        let run = |scheduler| {
            route_all(&g, t, &chips, &stops, RoutingOptions { scheduler, ..RoutingOptions::default() }).unwrap()
        };
        let a = run(Scheduler::ChipAtATime);
        let b = run(Scheduler::RoundRobin);
        assert_eq!(a.stop_counts, b.stop_counts);
        assert_eq!(a.rotors, b.rotors);
        assert_eq!(a.stop_counts.total(), chips.total());
    }
}

#[test]
fn single_chip_route_all_equals_route_to_sink() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let g = random_multigraph(&mut rng, 5);
        let rec = enumerate_recurrent(&g).unwrap();
        let t = &rec[rng.gen_range(0..rec.len())];
        let x = g.non_sink_vertices().next().unwrap();
        let all = route_all(&g, t, &ChipDistribution::single(&g, x, 1), &[], RoutingOptions::default()).unwrap();
        let (u, _) = route_to_sink(&g, t, x).unwrap();
        assert_eq!(all.rotors, u);
        assert_eq!(all.stop_counts.get(g.sink()), 1);
    }
}

#[test]
fn constant_function_is_invariant_for_conserving_histories() {
    let g = wired(3, 3);
    let t = uniform_rotors(&g, 3, 3);
    let r = g.vertex(ROOT).unwrap();
    let chips = ChipDistribution::single(&g, r, root_order(3, 3));
    let out = route_all(
        &g,
        &t,
        &chips,
        &[],
        RoutingOptions { record: true, ..RoutingOptions::default() },
    )
    .unwrap();
    let log = out.log.unwrap();
    let h = vec![BigRational::from_integer(1.into()); g.num_vertices()];
    assert!(check_harmonic_invariant(&g, &h, &chips, &out.stop_counts, &log).unwrap());
}

#[test]
fn spec_group_examples() {
    let two = DirectedMultigraph::build(&["r", "s"], "s", &[vec!["s"], vec!["r"]]).unwrap();
    assert!(sandpile_structure(&two).invariant_factors.is_empty());
    assert!(verify_isomorphism(&two).unwrap().all_ok());

    let tri = DirectedMultigraph::build(&["a", "b", "s"], "s", &[vec!["b", "s"], vec!["a", "s"], vec!["a", "b"]])
        .unwrap();
    assert_eq!(sandpile_structure(&tri).invariant_factors, vec![BigInt::from(3)]);

    for (d, n, order) in [(3, 2, 3), (3, 3, 7), (4, 2, 4)] {
        let g = wired(d, n);
        let r = g.vertex(ROOT).unwrap();
        assert_eq!(order_of_generator(&g, r, &uniform_rotors(&g, d, d)).unwrap(), order);
        let mut t = uniform_rotors(&g, d, d);
        for _ in 0..order {
            t = route_to_sink(&g, &t, r).unwrap().0;
        }
        assert_eq!(t, uniform_rotors(&g, d, d));
    }
}

#[test]
fn generator_order_is_witness_independent() {
    let g = wired(3, 3);
    let r = g.vertex(ROOT).unwrap();
    let rec = enumerate_recurrent(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..5 {
        let t = &rec[rng.gen_range(0..rec.len())];
        assert_eq!(order_of_generator(&g, r, t).unwrap(), 7);
    }
}

#[test]
fn generators_commute_and_power_relations_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..10 {
        let g = random_multigraph(&mut rng, 4);
        let rec = enumerate_recurrent(&g).unwrap();
        for t in rec.iter().take(6) {
            for x in g.vertices() {
                for y in g.vertices() {
                    let xy = apply_generator(&g, &apply_generator(&g, t, x, 1).unwrap(), y, 1).unwrap();
                    let yx = apply_generator(&g, &apply_generator(&g, t, y, 1).unwrap(), x, 1).unwrap();
                    assert_eq!(xy, yx);
                }
                if x == g.sink() {
                    assert_eq!(&apply_generator(&g, t, x, 1).unwrap(), t);
                    continue;
                }
                let lhs = apply_generator(&g, t, x, g.out_degree(x) as i64).unwrap();
                let rhs = g
                    .out_edges(x)
                    .iter()
                    .fold(t.clone(), |u, &y| apply_generator(&g, &u, y, 1).unwrap());
                assert_eq!(lhs, rhs);
                assert_eq!(&apply_generator(&g, &apply_generator(&g, t, x, 1).unwrap(), x, -1).unwrap(), t);
            }
        }
    }
}

#[test]
fn transitivity_on_small_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    assert!(verify_transitivity(&wired(3, 2)).unwrap());
    for _ in 0..20 {
        assert!(verify_transitivity(&random_multigraph(&mut rng, 4)).unwrap());
    }
}

#[test]
fn generator_permutations_are_bijections() {
    let g = wired(3, 3);
    let rec = RecurrentSet::new(&g).unwrap();
    for x in g.vertices() {
        let p = rec.generator(&g, x).unwrap();
        assert!(p.is_bijection());
        assert!(p.after(&rec.reverse_generator(&g, x).unwrap()).is_identity());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariant_factors_multiply_to_tree_count(seed in any::<u64>()) {
        let g = random_multigraph(&mut ChaCha8Rng::seed_from_u64(seed), 6);
        let s = sandpile_structure(&g);
        prop_assert_eq!(s.order(), spanning_tree_count(&g));
        for w in s.invariant_factors.windows(2) {
            prop_assert_eq!(&w[1] % &w[0], BigInt::from(0));
        }
    }

    #[test]
    fn isomorphism_report_holds(seed in any::<u64>()) {
        let g = random_multigraph(&mut ChaCha8Rng::seed_from_u64(seed), 4);
        prop_assert!(verify_isomorphism(&g).unwrap().all_ok());
    }
}
