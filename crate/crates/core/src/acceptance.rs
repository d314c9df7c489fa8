//! End-to-end checks of the library's main claims, shared by the
//! `acceptance` test target and the `verify-all` command.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use num_traits::Signed;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::escape::{
    is_escape_branch, is_escape_tree, phi, psi, random_branch_word, random_tree_word, satisfies_all,
    satisfies_pk, simulate, simulate_branch, synthesize_branch, synthesize_tree, BinaryWord,
    ConfigDescriptor, RootDirection,
};
use crate::graph::DirectedMultigraph;
use crate::group::{order_of_generator, verify_isomorphism};
use crate::tree::{
    aggregate, alternation_experiment, build_tree, exit_measure_experiment, expected_returns,
    hitting_probabilities, random_acyclic_wired, root_order, run_chips_infinite, Address, Arena,
    LazyTreeConfig, TreeSpec, TreeVariant, ROOT,
};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: u128,
    pub limit_ms: u128,
}

impl CriterionReport {
    pub fn within_limit(&self) -> bool {
        self.elapsed_ms < self.limit_ms
    }

    pub fn ok(&self) -> bool {
        self.passed && self.within_limit()
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}. {} ({} ms, limit {} ms): {}",
            if self.ok() { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed_ms,
            self.limit_ms,
            self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str, u64); 9] = [
    (1, "perfect ball", 10),
    (2, "exit measure", 30),
    (3, "root order", 10),
    (4, "rotor-router group vs sandpile group", 60),
    (5, "hitting probabilities", 5),
    (6, "alternation on Y_n", 10),
    (7, "extremal configurations", 60),
    (8, "escape characterization", 300),
    (9, "word calculus", 30),
];

/// Runs one criterion by number.
pub fn run_criterion(id: u8) -> Option<CriterionReport> {
    let &(_, name, limit_s) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let outcome = match id {
        1 => perfect_ball(),
        2 => exit_measure(),
        3 => root_orders(),
        4 => isomorphism(),
        5 => hitting(),
        6 => alternation(),
        7 => extremal(),
        8 => escape_characterization(),
        9 => word_calculus(),
        _ => unreachable!(),
    };
    let elapsed = start.elapsed();
    let (passed, detail) = match outcome {
        Ok(detail) => (true, detail),
        Err(detail) => (false, detail),
    };
    Some(CriterionReport {
        id,
        name,
        passed,
        detail,
        elapsed_ms: elapsed.as_millis(),
        limit_ms: Duration::from_secs(limit_s).as_millis(),
    })
}

pub fn run_all() -> Vec<CriterionReport> {
    CRITERIA.iter().filter_map(|c| run_criterion(c.0)).collect()
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_address<R: Rng + ?Sized>(rng: &mut R, d: u8, max_depth: usize) -> Address {
    let depth = rng.gen_range(1..=max_depth);
    let mut path = vec![rng.gen_range(1..=d)];
    for _ in 1..depth {
        path.push(rng.gen_range(1..d));
    }
    Address::from_path(path)
}

/// Random configuration built from a default, overrides, rays and level
/// rules, resampled until it has no 2-cycle. Rules that conflict with
/// earlier ones are dropped.
pub fn random_acyclic_config<R: Rng + ?Sized>(rng: &mut R, d: u8) -> LazyTreeConfig {
    loop {
        let mut c = LazyTreeConfig::new(d, rng.gen_range(1..=d)).expect("valid degree");
        if rng.gen_bool(0.5) {
            let _ = c.add_override(Address::origin(), rng.gen_range(1..=d));
        }
        for _ in 0..rng.gen_range(0..=6) {
            let _ = c.add_override(random_address(rng, d, 4), rng.gen_range(1..=d));
        }
        for _ in 0..rng.gen_range(0..=2) {
            let len = rng.gen_range(1..=2);
            let pattern = (0..len).map(|_| rng.gen_range(1..d)).collect();
            let _ = c.add_ray(random_address(rng, d, 3), pattern, rng.gen_range(1..=d));
        }
        for _ in 0..rng.gen_range(0..=2) {
            let _ = c.add_level_rule(
                random_address(rng, d, 3),
                rng.gen_range(0..=4),
                rng.gen_range(1..=d),
                rng.gen_range(1..=d),
            );
        }
        if c.is_acyclic() {
            return c;
        }
    }
}

/// Random strongly connected multigraph on 2 to `max_vertices` vertices:
/// a Hamiltonian cycle in random order plus random extra edges.
pub fn random_multigraph<R: Rng + ?Sized>(rng: &mut R, max_vertices: usize) -> DirectedMultigraph {
    let n = rng.gen_range(2..=max_vertices);
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out: Vec<Vec<String>> = vec![Vec::new(); n];
    for i in 0..n {
        out[order[i]].push(names[order[(i + 1) % n]].clone());
    }
    for x in 0..n {
        for _ in 0..rng.gen_range(0..=2) {
            let y = (x + rng.gen_range(1..n)) % n;
            out[x].push(names[y].clone());
        }
        out[x].shuffle(rng);
    }
    let sink = names[rng.gen_range(0..n)].clone();
    DirectedMultigraph::build(&names, &sink, &out).expect("cycle makes it strongly connected")
}

fn perfect_ball() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut runs = 0;
    for (d, max_rho) in [(3u8, 6usize), (4, 4)] {
        let chips = crate::tree::ball_size(d as usize, max_rho);
        for i in 0..25 {
            let config = if i == 0 {
                LazyTreeConfig::new(d, 1).expect("valid")
            } else {
                random_acyclic_config(&mut rng, d)
            };
            let run = aggregate(&config, chips).map_err(|e| e.to_string())?;
            ensure(run.ball_checks.len() == max_rho + 1 && run.holds(), || {
                format!("d={d}: ball or sandwich fails for config {}", config.to_json())
            })?;
            runs += 1;
        }
    }
    Ok(format!("{runs} acyclic configurations, all balls exact"))
}

fn exit_measure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut runs = 0;
    for d in 3..=5 {
        for n in 2..=6 {
            let g = build_tree(TreeSpec::new(d, n, TreeVariant::Wired)).map_err(|e| e.to_string())?;
            for _ in 0..50 {
                let t0 = random_acyclic_wired(&g, d, &mut rng);
                let out = exit_measure_experiment(d, n, &t0, false).map_err(|e| e.to_string())?;
                ensure(out.holds(), || format!("d={d} n={n}: {:?}", out.leaf_counts))?;
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs, one chip per leaf and rotors restored"))
}

fn root_orders() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in 3..=5 {
        for n in 2..=4 {
            let g = build_tree(TreeSpec::new(d, n, TreeVariant::Wired)).map_err(|e| e.to_string())?;
            let root = g.vertex(ROOT).expect("root");
            let witness = random_acyclic_wired(&g, d, &mut rng);
            let order = order_of_generator(&g, root, &witness).map_err(|e| e.to_string())?;
            ensure(order == root_order(d, n), || {
                format!("d={d} n={n}: order {order}, expected {}", root_order(d, n))
            })?;
        }
    }
    Ok("9 wired trees".into())
}

fn isomorphism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut graphs = vec![build_tree(TreeSpec::new(3, 2, TreeVariant::Wired)).map_err(|e| e.to_string())?];
    graphs.extend((0..25).map(|_| random_multigraph(&mut rng, 5)));
    for g in &graphs {
        let report = verify_isomorphism(g).map_err(|e| e.to_string())?;
        ensure(report.all_ok(), || {
            format!("{:?} on {}", report, serde_json::to_string(&g.to_file()).unwrap_or_default())
        })?;
    }
    Ok(format!("{} graphs", graphs.len()))
}

fn hitting() -> Outcome {
    for d in 3..=5 {
        for n in 2..=8 {
            let p = hitting_probabilities(d, n).map_err(|e| e.to_string())?;
            ensure(p.matches_closed_forms(), || format!("d={d} n={n}: P(o) = {}", p.to_origin))?;
        }
    }
    Ok("21 trees".into())
}

fn alternation() -> Outcome {
    for n in 2..=12 {
        let out = alternation_experiment(n).map_err(|e| e.to_string())?;
        ensure(out.holds(), || format!("n={n}: {}", out.run.stops))?;
    }
    Ok("n = 2..12".into())
}

/// Rotors on the path `3, 3/2, 3/2/2, …` point in direction 2, all others in
/// direction 1.
pub fn alternating_config() -> LazyTreeConfig {
    let mut c = LazyTreeConfig::new(3, 1).expect("valid");
    c.add_ray(Address::from_path(vec![3]), vec![2], 2).expect("valid ray");
    c
}

fn extremal() -> Outcome {
    let m = 10_000u64;
    let (out, _) = run_chips_infinite(&alternating_config(), Arena::FullTree, m).map_err(|e| e.to_string())?;
    let mut returns = 0u64;
    for (i, o) in out.iter().enumerate() {
        let chips = i as u64 + 1;
        ensure(o.escaped == (i % 2 == 0), || format!("chip {chips} breaks alternation"))?;
        returns += !o.escaped as u64;
        let gap = expected_returns(3, chips) - BigRational::from_integer(BigInt::from(returns));
        ensure(gap.abs() * BigInt::from(2) <= BigRational::from_integer(BigInt::from(1)), || {
            format!("|E - R| > 1/2 after {chips} chips")
        })?;
    }
    ensure(returns == m / 2, || format!("R({m}) = {returns}"))?;

    for d in [3u8, 4] {
        let config = LazyTreeConfig::new(d, d - 1).expect("valid");
        let (out, _) = run_chips_infinite(&config, Arena::FullTree, 1000).map_err(|e| e.to_string())?;
        let mut seen = [0u32; 256];
        for (i, o) in out.iter().enumerate() {
            seen[o.branch as usize] += 1;
            let j = seen[o.branch as usize];
            ensure(!o.escaped, || format!("d={d}: chip {} escaped", i + 1))?;
            ensure(o.max_depth <= j, || {
                format!("d={d}: chip {} reached depth {} as chip {j} of its branch", i + 1, o.max_depth)
            })?;
        }
    }
    Ok(format!("R({m}) = {}; all-(d-1) chips return", m / 2))
}

/// Every descriptor of depth at most `depth` whose level rules have at most
/// `max_h` levels.
pub fn descriptors_up_to(depth: usize, max_h: u32) -> Vec<ConfigDescriptor> {
    let mut all: Vec<ConfigDescriptor> = (0..=max_h).map(ConfigDescriptor::level).collect();
    for _ in 0..depth {
        let mut next: Vec<ConfigDescriptor> = (0..=max_h).map(ConfigDescriptor::level).collect();
        for root in RootDirection::ALL {
            for l in &all {
                for r in &all {
                    next.push(ConfigDescriptor::node(root, l.clone(), r.clone()));
                }
            }
        }
        all = next;
    }
    all
}

/// Words of length `len` realized by the descriptors of depth at most
/// `depth`, by plain enumeration.
pub fn realized_words(len: usize, depth: usize, max_h: u32) -> Result<BTreeSet<BinaryWord>, String> {
    descriptors_up_to(depth, max_h)
        .iter()
        .map(|desc| simulate_branch(desc, len).map_err(|e| e.to_string()))
        .collect()
}

/// Words of length `len` realized by descriptors of any depth.
///
/// A sub-branch interacts with its parent only through whether each chip it
/// receives returns or escapes, and it receives at most one visit per chip
/// entering the parent. So one descriptor per realized word of length `len`
/// is kept at each depth; nodes are built from those representatives and
/// simulated until no new word appears. Returns the words and the depth at
/// which the set stopped growing.
pub fn realized_words_closure(len: usize) -> Result<(BTreeMap<BinaryWord, ConfigDescriptor>, usize), String> {
    let mut reps: BTreeMap<BinaryWord, ConfigDescriptor> = BTreeMap::new();
    for h in 0..=len as u32 {
        let desc = ConfigDescriptor::level(h);
        let w = simulate_branch(&desc, len).map_err(|e| e.to_string())?;
        reps.entry(w).or_insert(desc);
    }
    for depth in 1.. {
        let current: Vec<ConfigDescriptor> = reps.values().cloned().collect();
        let mut grew = false;
        for root in RootDirection::ALL {
            for l in &current {
                for r in &current {
                    let desc = ConfigDescriptor::node(root, l.clone(), r.clone());
                    let w = simulate_branch(&desc, len).map_err(|e| e.to_string())?;
                    if let std::collections::btree_map::Entry::Vacant(e) = reps.entry(w) {
                        e.insert(desc);
                        grew = true;
                    }
                }
            }
        }
        if !grew {
            return Ok((reps, depth - 1));
        }
    }
    unreachable!()
}

pub const ORACLE_WORD_LENGTH: usize = 8;

fn escape_characterization() -> Outcome {
    let mut checked = 0;
    for n in 0..=10 {
        for a in BinaryWord::all(n) {
            let realized = match synthesize_branch(&a) {
                Ok(desc) => simulate_branch(&desc, n).map_err(|e| e.to_string())? == a,
                Err(_) => false,
            };
            ensure(realized == is_escape_branch(&a), || format!("branch round trip disagrees on {a}"))?;
            checked += 1;
        }
    }

    let (reps, depth) = realized_words_closure(ORACLE_WORD_LENGTH)?;
    let realized: BTreeSet<BinaryWord> = reps.into_keys().collect();
    let valid: BTreeSet<BinaryWord> = BinaryWord::all(ORACLE_WORD_LENGTH).filter(satisfies_all).collect();
    if let Some(w) = realized.difference(&valid).next() {
        return Err(format!("oracle realizes {w}, which violates the window condition"));
    }
    if let Some(w) = valid.difference(&realized).next() {
        return Err(format!("valid word {w} is never realized"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let a = random_branch_word(&mut rng, 100);
        let desc = synthesize_branch(&a).map_err(|e| e.to_string())?;
        ensure(simulate_branch(&desc, 100).map_err(|e| e.to_string())? == a, || format!("branch: {a}"))?;
        let t = random_tree_word(&mut rng, 100);
        ensure(is_escape_tree(&t), || format!("generator produced invalid tree word {t}"))?;
        let config = synthesize_tree(&t).map_err(|e| e.to_string())?;
        ensure(simulate(&config, Arena::FullTree, 100).map_err(|e| e.to_string())? == t, || {
            format!("tree: {t}")
        })?;
    }
    Ok(format!(
        "{checked} short words; oracle realizes exactly the {} valid length-{ORACLE_WORD_LENGTH} words (closed at depth {depth}); 400 long round trips",
        valid.len()
    ))
}

fn word_calculus() -> Outcome {
    let mut checked = 0;
    for n in 0..=14 {
        for a in BinaryWord::all(n) {
            let Ok((c, d)) = psi(&a) else {
                ensure(!satisfies_pk(&a, 2), || format!("psi rejected {a}"))?;
                continue;
            };
            let back = phi(&c, &d).map_err(|e| e.to_string())?;
            let mut padded = a.clone();
            padded.push(false);
            ensure(back == a || back == padded, || format!("phi(psi({a})) = {back}"))?;
            for k in 2..=5 {
                if satisfies_pk(&a, k) {
                    ensure(satisfies_pk(&c, k - 1) && satisfies_pk(&d, k - 1), || {
                        format!("psi({a}) = ({c}, {d}) breaks P_{}", k - 1)
                    })?;
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} factorable words up to length 14"))
}
