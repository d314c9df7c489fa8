use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotor_core::acceptance::{alternating_config, random_acyclic_config};
use rotor_core::escape::{random_tree_word, synthesize_tree};
use rotor_core::graph::{DirectedMultigraph, RotorConfiguration};
use rotor_core::tree::{
    aggregate, aggregate_modified, alternation_experiment, ball_size, build_tree, exit_measure_experiment,
    expected_returns, hitting_function, hitting_probabilities, modified_ball_count, random_acyclic_wired,
    recurrence_experiment, run_chips_infinite, uniform_rotors, Address, Arena, LazyTreeConfig, TreeSpec,
    TreeVariant, ORIGIN, ROOT,
};
use rotor_core::walk::{check_harmonic_invariant, walk_until, ChipDistribution};

fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

#[test]
fn tree_builders_match_the_definitions() {
    let wired = build_tree(TreeSpec::new(3, 2, TreeVariant::Wired)).unwrap();
    assert_eq!(wired.num_vertices(), 2);
    let hat = build_tree(TreeSpec::new(3, 3, TreeVariant::Hat)).unwrap();
    let plain = build_tree(TreeSpec::new(3, 3, TreeVariant::Plain)).unwrap();
    assert_eq!(hat.num_vertices(), plain.num_vertices() + 1);
    let w = build_tree(TreeSpec::new(4, 4, TreeVariant::Wired)).unwrap();
    for x in w.non_sink_vertices() {
        if w.name(x) != ROOT && w.out_edges(x).contains(&w.sink()) {
            assert_eq!(w.multiplicity(x, w.sink()), 3);
        }
    }
    for n in 2..8 {
        let y = build_tree(TreeSpec::new(3, n, TreeVariant::Branch)).unwrap();
        assert_eq!(y.num_vertices(), (1 << (n - 1)) + 1);
        let o = y.vertex(ORIGIN).unwrap();
        assert_eq!(y.out_degree(o), 1);
        assert_eq!(y.out_degree(y.vertex(ROOT).unwrap()), 3);
    }
    assert!(build_tree(TreeSpec::new(2, 3, TreeVariant::Hat)).is_err());
    assert!(build_tree(TreeSpec::new(3, 1, TreeVariant::Hat)).is_err());
    assert_eq!((0..4).map(|r| ball_size(3, r)).collect::<Vec<_>>(), vec![1, 4, 10, 22]);
    assert_eq!(ball_size(4, 3), 53);
    assert_eq!(modified_ball_count(3, 1), 4);
    assert_eq!(modified_ball_count(3, 2), 13);
}

/// Solves the harmonic system on `\hat T_n` by dense Gaussian elimination.
fn dense_hitting(g: &DirectedMultigraph, leaf: usize) -> Vec<BigRational> {
    let n = g.num_vertices();
    let mut m: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); n + 1]; n];
    for x in 0..n {
        if g.out_degree(x) == 1 {
            m[x][x] = BigRational::one();
            m[x][n] = if x == leaf { BigRational::one() } else { BigRational::zero() };
        } else {
            m[x][x] = BigRational::from_integer(g.out_degree(x).into());
            for &y in g.out_edges(x) {
                m[x][y] -= BigRational::one();
            }
        }
    }
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero()).expect("nonsingular");
        m.swap(col, pivot);
        let inv = m[col][col].recip();
        for c in col..=n {
            m[col][c] = &m[col][c] * &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..=n {
                    let delta = &f * &m[col][c];
                    m[r][c] -= delta;
                }
            }
        }
    }
    m.into_iter().map(|row| row[n].clone()).collect()
}

#[test]
fn hitting_probabilities_agree_with_a_dense_solve() {
    for d in 3..=4 {
        for n in 2..=5 {
            let h = hitting_probabilities(d, n).unwrap();
            assert!(h.matches_closed_forms());
            assert_eq!(h.total(), BigRational::one());
            let hat = build_tree(TreeSpec::new(d, n, TreeVariant::Hat)).unwrap();
            let r = hat.vertex(ROOT).unwrap();
            let leaves: Vec<usize> = hat.vertices().filter(|&x| hat.out_degree(x) == 1).collect();
            for z in [hat.sink(), leaves[0], leaves[leaves.len() - 2]] {
                let dense = dense_hitting(&hat, z);
                let (g, elim) = hitting_function(d, n, hat.name(z)).unwrap();
                assert_eq!(g.names(), hat.names());
                assert_eq!(elim, dense);
                let expected = if z == hat.sink() { &h.to_origin } else { &h.to_leaf[hat.name(z)] };
                assert_eq!(&dense[r], expected);
            }
        }
    }
}

#[test]
fn spec_hitting_examples() {
    let h = hitting_probabilities(3, 2).unwrap();
    assert_eq!(h.to_origin, rat(1, 3));
    assert!(h.to_leaf.values().all(|p| *p == rat(1, 3)));
    let h = hitting_probabilities(3, 3).unwrap();
    assert_eq!(h.to_origin, rat(3, 7));
    assert!(h.to_leaf.values().all(|p| *p == rat(1, 7)));
}

#[test]
fn exit_measure_conserves_harmonic_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (d, n) in [(3, 2), (3, 3), (3, 4), (4, 3)] {
        let wired = build_tree(TreeSpec::new(d, n, TreeVariant::Wired)).unwrap();
        let hat = build_tree(TreeSpec::new(d, n, TreeVariant::Hat)).unwrap();
        for _ in 0..5 {
            let t0 = random_acyclic_wired(&wired, d, &mut rng);
            let out = exit_measure_experiment(d, n, &t0, true).unwrap();
            assert!(out.holds());
            let log = out.log.unwrap();
            let r = hat.vertex(ROOT).unwrap();
            let before = ChipDistribution::single(&hat, r, out.chips);
            let mut after_named: BTreeMap<String, u64> = out.leaf_counts.clone();
            after_named.insert(ORIGIN.to_string(), out.origin_count);
            let after = ChipDistribution::from_named(&hat, &after_named).unwrap();
            for z in hat.vertices().filter(|&x| hat.out_degree(x) == 1) {
                let (_, h) = hitting_function(d, n, hat.name(z)).unwrap();
                assert!(check_harmonic_invariant(&hat, &h, &before, &after, &log).unwrap());
            }
        }
    }
}

#[test]
fn spec_exit_measure_examples() {
    for (n, chips, origin) in [(2, 3, 1), (3, 7, 3)] {
        let wired = build_tree(TreeSpec::new(3, n, TreeVariant::Wired)).unwrap();
        let out = exit_measure_experiment(3, n, &uniform_rotors(&wired, 3, 3), false).unwrap();
        assert_eq!(out.chips, chips);
        assert_eq!(out.origin_count, origin);
        assert!(out.leaf_counts.values().all(|&c| c == 1));
    }
    let wired = build_tree(TreeSpec::new(3, 3, TreeVariant::Wired)).unwrap();
    let r = wired.vertex(ROOT).unwrap();
    let mut cyclic = uniform_rotors(&wired, 3, 3);
    cyclic.set(r, 0);
    let child = wired.out_edges(r)[0];
    cyclic.set(child, 2);
    assert!(exit_measure_experiment(3, 3, &cyclic, false).is_err());
}

#[test]
fn spec_branch_examples() {
    assert_eq!(alternation_experiment(2).unwrap().run.stops, "bob");
    let ten = alternation_experiment(10).unwrap();
    assert!(ten.holds());
    assert_eq!(ten.run.stops.len(), 1023);
    assert!(recurrence_experiment(5, 6).unwrap().holds());
    assert_eq!(expected_returns(3, 10), rat(5, 1));
    assert_eq!(expected_returns(4, 9), rat(3, 1));
}

#[test]
fn spec_aggregation_examples() {
    let c3 = LazyTreeConfig::uniform(3, 1).unwrap();
    let run = aggregate(&c3, 4).unwrap();
    assert!(run.state.is_ball(1));
    let run = aggregate(&c3, 190).unwrap();
    assert!(run.state.is_ball(6));
    assert!(run.holds());
    let run = aggregate(&LazyTreeConfig::uniform(4, 1).unwrap(), 53).unwrap();
    assert!(run.state.is_ball(3));
    let modified = aggregate_modified(&c3, 13).unwrap();
    assert_eq!(modified.stops[0], Address::origin());
    assert!(modified.stops[1..4].iter().all(|a| a.depth() == 1));
    assert!(modified.holds());
    assert!(modified.state.is_ball(2));
}

#[test]
fn modified_process_is_a_time_change_of_aggregation() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for d in [3u8, 4] {
        for _ in 0..10 {
            let config = random_acyclic_config(&mut rng, d);
            let plain = aggregate(&config, ball_size(d as usize, 3)).unwrap();
            let modified = aggregate_modified(&config, modified_ball_count(d as usize, 3)).unwrap();
            assert!(modified.holds());
            assert_eq!(plain.state.occupation_order(), modified.state.occupation_order());
        }
    }
}

/// The ball of radius `depth` around the origin with the sphere of radius
/// `depth` collapsed to a sink `b`; rotor order as on the infinite tree.
fn finite_ball(d: u8, depth: usize) -> DirectedMultigraph {
    let mut addrs: Vec<Vec<u8>> = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 1..depth {
        let mut next = Vec::new();
        for a in &frontier {
            let kids = if a.is_empty() { d } else { d - 1 };
            for k in 1..=kids {
                let mut c: Vec<u8> = a.clone();
                c.push(k);
                next.push(c);
            }
        }
        addrs.extend(next.iter().cloned());
        frontier = next;
    }
    let name = |a: &[u8]| Address::from_path(a.to_vec()).to_string();
    let mut names: Vec<String> = addrs.iter().map(|a| name(a)).collect();
    names.push("b".into());
    let mut lists: Vec<Vec<String>> = Vec::new();
    let mut into_b = Vec::new();
    for a in &addrs {
        let kids = if a.is_empty() { d } else { d - 1 };
        let mut list = Vec::new();
        for k in 1..=kids {
            if a.len() + 1 < depth {
                let mut c = a.clone();
                c.push(k);
                list.push(name(&c));
            } else {
                list.push("b".to_string());
                into_b.push(name(a));
            }
        }
        if !a.is_empty() {
            list.push(name(&a[..a.len() - 1]));
        }
        lists.push(list);
    }
    lists.push(into_b);
    DirectedMultigraph::build(&names, "b", &lists).unwrap()
}

/// Compares the lazy simulator with a plain walk on a finite ball, up to the
/// first chip that touches the boundary other than by walking straight down.
fn compare_with_finite_ball(config: &LazyTreeConfig, depth: usize, chips: u64) -> usize {
    let d = config.degree();
    let g = finite_ball(d, depth);
    let origin = g.vertex("").unwrap();
    let path = |x: usize| -> Address { g.name(x).parse().unwrap() };
    let indices = g
        .vertices()
        .map(|x| if x == g.sink() { 0 } else { config.direction(path(x).as_slice()) as usize - 1 })
        .collect();
    let mut t = RotorConfiguration::new(&g, indices).unwrap();
    let mut stop = vec![false; g.num_vertices()];
    stop[origin] = true;

    let (lazy, tree) = run_chips_infinite(config, Arena::FullTree, chips).unwrap();
    let mut compared = 0;
    for out in &lazy {
        let straight_down = out.escaped && out.steps == out.max_depth as u64;
        if out.max_depth as usize >= depth && !straight_down {
            return compared;
        }
        let mut deepest = 0;
        let (end, _) = walk_until(&g, &mut t, origin, &stop, u64::MAX, |s| {
            if s.to != g.sink() {
                deepest = deepest.max(path(s.to).depth());
            }
        })
        .unwrap();
        assert_eq!(end == g.sink(), out.escaped, "chip {}", compared + 1);
        if !out.escaped {
            assert_eq!(deepest, out.max_depth as usize, "chip {}", compared + 1);
        }
        compared += 1;
    }
    for x in g.non_sink_vertices() {
        if let Some(dir) = tree.rotor_at(&path(x)) {
            assert_eq!(dir as usize, t.get(x) + 1, "rotor at `{}`", g.name(x));
        }
    }
    compared
}

#[test]
fn lazy_simulator_agrees_with_finite_balls() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut configs: Vec<LazyTreeConfig> = vec![alternating_config()];
    for d in [3u8, 4] {
        for dir in 1..d {
            configs.push(LazyTreeConfig::uniform(d, dir).unwrap());
        }
    }
    for d in [3u8, 4] {
        for _ in 0..15 {
            configs.push(random_acyclic_config(&mut rng, d));
        }
    }
    for _ in 0..15 {
        configs.push(synthesize_tree(&random_tree_word(&mut rng, 40)).unwrap());
    }
    let mut total = 0;
    for config in &configs {
        let depth = if config.degree() == 3 { 11 } else { 8 };
        total += compare_with_finite_ball(config, depth, 40);
    }
    assert!(total > 1200, "only {total} chips compared");
}

/// Every parent/child pair within `depth` levels whose rotors point at
/// each other, found by brute force.
fn brute_two_cycle(config: &LazyTreeConfig, depth: usize) -> bool {
    let d = config.degree();
    let mut frontier = vec![Vec::new()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for a in &frontier {
            let kids = if a.is_empty() { d } else { d - 1 };
            let dir = config.direction(a);
            for k in 1..=kids {
                let mut c: Vec<u8> = a.clone();
                c.push(k);
                if dir == k && config.direction(&c) == d {
                    return true;
                }
                next.push(c);
            }
        }
        frontier = next;
    }
    false
}

fn random_address<R: Rng>(rng: &mut R, d: u8, max_depth: usize) -> Address {
    let depth = rng.gen_range(1..=max_depth);
    let mut path = vec![rng.gen_range(1..=d)];
    for _ in 1..depth {
        path.push(rng.gen_range(1..d));
    }
    Address::from_path(path)
}

#[test]
fn acyclicity_check_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut cyclic = 0;
    for i in 0..600 {
        let d: u8 = if i % 3 == 0 { 4 } else { 3 };
        let (max_depth, max_levels) = if d == 3 { (3, 4) } else { (2, 2) };
        let mut c = LazyTreeConfig::new(d, rng.gen_range(1..=d)).unwrap();
        for _ in 0..rng.gen_range(0..4) {
            let _ = c.add_override(random_address(&mut rng, d, max_depth), rng.gen_range(1..=d));
        }
        for _ in 0..rng.gen_range(0..3) {
            let pattern = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(1..d)).collect();
            let _ = c.add_ray(random_address(&mut rng, d, max_depth), pattern, rng.gen_range(1..=d));
        }
        for _ in 0..rng.gen_range(0..3) {
            let _ = c.add_level_rule(
                random_address(&mut rng, d, max_depth),
                rng.gen_range(0..=max_levels),
                rng.gen_range(1..=d),
                rng.gen_range(1..=d),
            );
        }
        let depth = max_depth + max_levels as usize + 6;
        let brute = brute_two_cycle(&c, depth);
        assert_eq!(c.is_acyclic(), !brute, "{}", c.to_json());
        cyclic += brute as usize;
    }
    assert!(cyclic > 50 && cyclic < 550);
}
