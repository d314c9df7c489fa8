//! Finite regular trees as multigraphs, exact hitting probabilities, and the
//! finite-tree rotor experiments (exit measure, alternation, recurrence).
//!
//! Vertices of `T_n` are named by address: the root is `r`, and its `k`-th child
//! is `r/k`. Every internal vertex lists its children in child-index order and
//! its parent last, so rotor index `k - 1` is direction `k` and index `d - 1`
//! points to the parent.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::Serialize;

use super::TreeError;
use crate::graph::{is_recurrent, DirectedMultigraph, RotorConfiguration, VertexId};
use crate::walk::{route_all, walk_until, ChipDistribution, RoutingLog, RoutingOptions, DEFAULT_STEP_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TreeVariant {
    /// `T_n` itself, with the root as sink.
    Plain,
    /// `T_n` plus a leaf `o` attached to the root; `o` is the sink.
    Hat,
    /// The hat tree with every leaf, `o` included, collapsed to the sink `s`.
    Wired,
    /// The hat tree with every leaf except `o` collapsed to the sink `b`.
    Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeSpec {
    pub degree: usize,
    pub height: usize,
    pub variant: TreeVariant,
}

impl TreeSpec {
    pub fn new(degree: usize, height: usize, variant: TreeVariant) -> Self {
        TreeSpec {
            degree,
            height,
            variant,
        }
    }
}

pub const ROOT: &str = "r";
pub const ORIGIN: &str = "o";
pub const WIRED_SINK: &str = "s";
pub const BOUNDARY: &str = "b";

pub(crate) fn check_params(d: usize, n: usize) -> Result<(), TreeError> {
    if d < 3 {
        return Err(TreeError::BadParameters(format!("degree {d} < 3")));
    }
    if n < 2 {
        return Err(TreeError::BadParameters(format!("height {n} < 2")));
    }
    if d > 255 {
        return Err(TreeError::BadParameters(format!("degree {d} > 255")));
    }
    Ok(())
}

/// Addresses of `T_n` in breadth-first order; depth `n - 1` holds the leaves.
fn tree_addresses(d: usize, n: usize) -> Vec<Vec<u8>> {
    let a = d - 1;
    let mut all = vec![Vec::new()];
    let mut level = vec![Vec::new()];
    for _ in 1..n {
        let mut next = Vec::with_capacity(level.len() * a);
        for addr in &level {
            for k in 1..=a {
                let mut child: Vec<u8> = addr.clone();
                child.push(k as u8);
                next.push(child);
            }
        }
        all.extend(next.iter().cloned());
        level = next;
    }
    all
}

pub fn address_name(addr: &[u8]) -> String {
    let mut name = String::from(ROOT);
    for k in addr {
        name.push('/');
        name.push_str(&k.to_string());
    }
    name
}

/// Builds one of the four finite trees.
pub fn build_tree(spec: TreeSpec) -> Result<DirectedMultigraph, TreeError> {
    let (d, n) = (spec.degree, spec.height);
    check_params(d, n)?;
    let a = d - 1;
    let addrs = tree_addresses(d, n);
    let leaf_depth = n - 1;

    // which tree vertices survive, and what replaces the collapsed ones
    let (keep_depth, extra_names, sink_name): (usize, Vec<&str>, &str) = match spec.variant {
        TreeVariant::Plain => (leaf_depth, vec![], ROOT),
        TreeVariant::Hat => (leaf_depth, vec![ORIGIN], ORIGIN),
        TreeVariant::Wired => (leaf_depth - 1, vec![WIRED_SINK], WIRED_SINK),
        TreeVariant::Branch => (leaf_depth - 1, vec![ORIGIN, BOUNDARY], BOUNDARY),
    };
    let collapse_to = match spec.variant {
        TreeVariant::Wired => Some(WIRED_SINK),
        TreeVariant::Branch => Some(BOUNDARY),
        _ => None,
    };
    let root_parent = match spec.variant {
        TreeVariant::Plain => None,
        TreeVariant::Wired => Some(WIRED_SINK),
        TreeVariant::Hat | TreeVariant::Branch => Some(ORIGIN),
    };

    let kept: Vec<&Vec<u8>> = addrs.iter().filter(|x| x.len() <= keep_depth).collect();
    let mut names: Vec<String> = kept.iter().map(|x| address_name(x)).collect();
    names.extend(extra_names.iter().map(|s| s.to_string()));
    let mut out: Vec<Vec<String>> = Vec::with_capacity(names.len());
    for addr in &kept {
        let mut list = Vec::with_capacity(d);
        if addr.len() < leaf_depth {
            for k in 1..=a {
                if addr.len() < keep_depth {
                    let mut child = (*addr).clone();
                    child.push(k as u8);
                    list.push(address_name(&child));
                } else {
                    list.push(collapse_to.expect("collapsed children need a target").to_string());
                }
            }
        }
        if addr.is_empty() {
            if let Some(p) = root_parent {
                list.push(p.to_string());
            }
        } else {
            list.push(address_name(&addr[..addr.len() - 1]));
        }
        out.push(list);
    }
    for extra in &extra_names {
        let list = if *extra == ORIGIN {
            vec![ROOT.to_string()]
        } else {
            // reverse of every edge into the collapsed vertex
            let mut back = Vec::new();
            for (x, list) in out.iter().enumerate() {
                for y in list {
                    if y == extra {
                        back.push(names[x].clone());
                    }
                }
            }
            back
        };
        out.push(list);
    }
    Ok(DirectedMultigraph::build(&names, sink_name, &out)?)
}

/// Every tree vertex of full degree gets rotor index `dir - 1`; others get 0.
pub fn uniform_rotors(g: &DirectedMultigraph, d: usize, dir: usize) -> RotorConfiguration {
    let indices = g
        .vertices()
        .map(|x| {
            if x != g.sink() && g.out_degree(x) == d {
                dir - 1
            } else {
                0
            }
        })
        .collect();
    RotorConfiguration::new(g, indices).expect("direction within 1..=d")
}

/// Random acyclic configuration on the wired tree `\bar T_n`, chosen top-down:
/// a vertex whose parent points at it may not point back.
pub fn random_acyclic_wired<R: Rng + ?Sized>(
    g: &DirectedMultigraph,
    d: usize,
    rng: &mut R,
) -> RotorConfiguration {
    let mut t = RotorConfiguration::zero(g);
    // vertices are stored parents first
    for x in g.non_sink_vertices() {
        let parent = g.out_edges(x)[d - 1];
        let choices = if parent != g.sink() && t.target(g, parent) == x {
            d - 1
        } else {
            d
        };
        t.set(x, rng.gen_range(0..choices));
    }
    debug_assert!(is_recurrent(g, &t));
    t
}

/// Copies rotor indices between two tree graphs by vertex name; vertices
/// missing from `from` get index 0.
pub fn translate_rotors(
    from: &DirectedMultigraph,
    t: &RotorConfiguration,
    to: &DirectedMultigraph,
) -> RotorConfiguration {
    let indices = to
        .vertices()
        .map(|x| match from.vertex(to.name(x)) {
            Some(y) if y != from.sink() && x != to.sink() => t.get(y),
            _ => 0,
        })
        .collect();
    RotorConfiguration::new(to, indices).expect("matching out-degrees")
}

fn pow(a: u64, e: usize) -> u64 {
    a.checked_pow(e as u32).expect("tree size overflow")
}

/// `b_ρ`, the number of vertices within distance ρ of the origin.
pub fn ball_size(d: usize, rho: usize) -> u64 {
    let a = (d - 1) as u64;
    1 + d as u64 * (pow(a, rho) - 1) / (a - 1)
}

/// `c_ρ = 1 + d Σ_{t=1}^{ρ} (a^t - 1)/(a - 1)`, the chip count after which the
/// modified aggregation fills the ball of radius ρ.
pub fn modified_ball_count(d: usize, rho: usize) -> u64 {
    let a = (d - 1) as u64;
    1 + d as u64 * (1..=rho).map(|t| (pow(a, t) - 1) / (a - 1)).sum::<u64>()
}

/// `(a^n - 1)/(a - 1)`.
pub fn root_order(d: usize, n: usize) -> u64 {
    let a = (d - 1) as u64;
    (pow(a, n) - 1) / (a - 1)
}

fn rational(n: u64, m: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(m))
}

/// Exit distribution of simple random walk on `\hat T_n` started at the root
/// and stopped at the leaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HittingProbabilities {
    pub degree: usize,
    pub height: usize,
    /// `P_r(X_τ = o)`.
    pub to_origin: BigRational,
    /// `P_r(X_τ = z)` for every leaf `z != o`, keyed by vertex name.
    pub to_leaf: BTreeMap<String, BigRational>,
}

impl HittingProbabilities {
    /// `(a^{n-1} - 1)/(a^n - 1)`.
    pub fn origin_closed_form(&self) -> BigRational {
        let a = (self.degree - 1) as u64;
        rational(pow(a, self.height - 1) - 1, pow(a, self.height) - 1)
    }

    /// `(a - 1)/(a^n - 1)`.
    pub fn leaf_closed_form(&self) -> BigRational {
        let a = (self.degree - 1) as u64;
        rational(a - 1, pow(a, self.height) - 1)
    }

    pub fn matches_closed_forms(&self) -> bool {
        let leaf = self.leaf_closed_form();
        self.to_origin == self.origin_closed_form()
            && self.to_leaf.values().all(|p| *p == leaf)
            && self.total().is_one()
    }

    pub fn total(&self) -> BigRational {
        self.to_leaf
            .values()
            .fold(self.to_origin.clone(), |acc, p| acc + p)
    }
}

/// Elimination data for the harmonic system on `\hat T_n`: for each internal
/// vertex `v`, `H(v) = β_v H(parent v) + Γ_v` where `Γ_v` depends only on the
/// leaf values inside the subtree of `v`.
struct TreeElimination {
    g: DirectedMultigraph,
    /// Internal (non-leaf, non-sink) vertices, parents before children.
    internal: Vec<VertexId>,
    beta: Vec<BigRational>,
}

impl TreeElimination {
    fn new(d: usize, n: usize) -> Result<Self, TreeError> {
        let g = build_tree(TreeSpec::new(d, n, TreeVariant::Hat))?;
        let internal: Vec<VertexId> = g
            .non_sink_vertices()
            .filter(|&x| g.out_degree(x) > 1)
            .collect();
        let mut beta = vec![BigRational::zero(); g.num_vertices()];
        // children before parents: eliminate bottom-up
        for &v in internal.iter().rev() {
            let dv = g.out_degree(v);
            let children = &g.out_edges(v)[..dv - 1];
            let sum = children
                .iter()
                .fold(BigRational::zero(), |acc, &c| acc + &beta[c]);
            beta[v] = (BigRational::from_integer(BigInt::from(dv)) - sum).recip();
        }
        Ok(TreeElimination { g, internal, beta })
    }

    fn parent(&self, v: VertexId) -> VertexId {
        *self.g.out_edges(v).last().expect("tree vertices have a parent edge")
    }

    /// Full solution `H` with the given leaf values (`o` included).
    fn solve(&self, leaf_value: impl Fn(VertexId) -> BigRational) -> Vec<BigRational> {
        let g = &self.g;
        let mut h = vec![BigRational::zero(); g.num_vertices()];
        let mut gamma = vec![BigRational::zero(); g.num_vertices()];
        let is_internal = |x: VertexId| x != g.sink() && g.out_degree(x) > 1;
        for x in g.vertices() {
            if !is_internal(x) {
                h[x] = leaf_value(x);
            }
        }
        for &v in self.internal.iter().rev() {
            let dv = g.out_degree(v);
            let sum = g.out_edges(v)[..dv - 1]
                .iter()
                .fold(BigRational::zero(), |acc, &c| {
                    acc + if is_internal(c) { gamma[c].clone() } else { h[c].clone() }
                });
            gamma[v] = &self.beta[v] * sum;
        }
        for &v in &self.internal {
            let p = self.parent(v);
            h[v] = &self.beta[v] * &h[p] + &gamma[v];
        }
        h
    }
}

/// Exact exit probabilities from the root of `\hat T_n`, by elimination of the
/// harmonic system from the leaves upward.
pub fn hitting_probabilities(d: usize, n: usize) -> Result<HittingProbabilities, TreeError> {
    let elim = TreeElimination::new(d, n)?;
    let g = &elim.g;
    let root = g.vertex(ROOT).expect("root exists");

    // with only o carrying value 1, Γ vanishes and H(r) = β_r
    let to_origin = elim.beta[root].clone();

    // with only z carrying value 1, H(r) is the product of β along the path
    // from r to the parent of z
    let mut reach = vec![BigRational::zero(); g.num_vertices()];
    for &v in &elim.internal {
        reach[v] = if v == root {
            elim.beta[v].clone()
        } else {
            &reach[elim.parent(v)] * &elim.beta[v]
        };
    }
    let to_leaf = g
        .non_sink_vertices()
        .filter(|&x| g.out_degree(x) == 1)
        .map(|z| (g.name(z).to_string(), reach[elim.parent(z)].clone()))
        .collect();
    Ok(HittingProbabilities {
        degree: d,
        height: n,
        to_origin,
        to_leaf,
    })
}

/// `H(x) = P_x(X_τ = z)` on every vertex of `\hat T_n` for the leaf named `leaf`.
pub fn hitting_function(
    d: usize,
    n: usize,
    leaf: &str,
) -> Result<(DirectedMultigraph, Vec<BigRational>), TreeError> {
    let elim = TreeElimination::new(d, n)?;
    let z = elim
        .g
        .vertex(leaf)
        .filter(|&z| elim.g.out_degree(z) == 1 || z == elim.g.sink())
        .ok_or_else(|| TreeError::BadParameters(format!("`{leaf}` is not a leaf")))?;
    let h = elim.solve(|x| {
        if x == z {
            BigRational::one()
        } else {
            BigRational::zero()
        }
    });
    Ok((elim.g, h))
}

/// Result of routing `(a^n - 1)/(a - 1)` chips from the root of `\hat T_n`.
#[derive(Debug, Clone)]
pub struct ExitMeasureOutcome {
    pub degree: usize,
    pub height: usize,
    pub chips: u64,
    /// Chips stopped at each leaf `z != o`.
    pub leaf_counts: BTreeMap<String, u64>,
    pub origin_count: u64,
    /// Final rotors on the wired tree.
    pub final_rotors: RotorConfiguration,
    pub rotors_restored: bool,
    pub log: Option<RoutingLog>,
}

impl ExitMeasureOutcome {
    pub fn expected_origin_count(&self) -> u64 {
        root_order(self.degree, self.height - 1)
    }

    pub fn holds(&self) -> bool {
        self.leaf_counts.values().all(|&c| c == 1)
            && self.leaf_counts.len() as u64 == pow((self.degree - 1) as u64, self.height - 1)
            && self.origin_count == self.expected_origin_count()
            && self.rotors_restored
    }
}

/// Starts `(a^n - 1)/(a - 1)` chips at the root of `\hat T_n` with rotors
/// taken from the acyclic configuration `t0` on `\bar T_n`, stopping each chip
/// at the first leaf it reaches.
pub fn exit_measure_experiment(
    d: usize,
    n: usize,
    t0: &RotorConfiguration,
    record: bool,
) -> Result<ExitMeasureOutcome, TreeError> {
    let wired = build_tree(TreeSpec::new(d, n, TreeVariant::Wired))?;
    t0.validate(&wired)?;
    if !is_recurrent(&wired, t0) {
        return Err(TreeError::NotAcyclic(
            "rotor configuration on the wired tree has an oriented cycle".into(),
        ));
    }
    let hat = build_tree(TreeSpec::new(d, n, TreeVariant::Hat))?;
    let start = translate_rotors(&wired, t0, &hat);
    let leaves: Vec<VertexId> = hat.vertices().filter(|&x| hat.out_degree(x) == 1).collect();
    let root = hat.vertex(ROOT).expect("root exists");
    let chips = root_order(d, n);
    let out = route_all(
        &hat,
        &start,
        &ChipDistribution::single(&hat, root, chips),
        &leaves,
        RoutingOptions {
            record,
            ..RoutingOptions::default()
        },
    )?;
    let origin = hat.sink();
    let leaf_counts = leaves
        .iter()
        .filter(|&&z| z != origin)
        .map(|&z| (hat.name(z).to_string(), out.stop_counts.get(z)))
        .collect();
    let final_rotors = translate_rotors(&hat, &out.rotors, &wired);
    Ok(ExitMeasureOutcome {
        degree: d,
        height: n,
        chips,
        leaf_counts,
        origin_count: out.stop_counts.get(origin),
        rotors_restored: &final_rotors == t0,
        final_rotors,
        log: out.log,
    })
}

/// Where each chip started at the root of `Y_n` stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BranchRun {
    pub degree: usize,
    pub height: usize,
    /// `'o'` or `'b'` per chip.
    pub stops: String,
    pub final_directions: BTreeMap<String, usize>,
}

fn run_branch(d: usize, n: usize, initial_dir: usize, chips: u64) -> Result<(BranchRun, DirectedMultigraph, RotorConfiguration), TreeError> {
    let g = build_tree(TreeSpec::new(d, n, TreeVariant::Branch))?;
    let mut t = uniform_rotors(&g, d, initial_dir);
    let root = g.vertex(ROOT).expect("root exists");
    let origin = g.vertex(ORIGIN).expect("origin exists");
    let mut stop = vec![false; g.num_vertices()];
    stop[origin] = true;
    let mut stops = String::with_capacity(chips as usize);
    for _ in 0..chips {
        let (end, _) = walk_until(&g, &mut t, root, &stop, DEFAULT_STEP_BUDGET, |_| {})?;
        stops.push(if end == origin { 'o' } else { 'b' });
    }
    let final_directions = g
        .vertices()
        .filter(|&x| x != g.sink() && g.out_degree(x) == d)
        .map(|x| (g.name(x).to_string(), t.get(x) + 1))
        .collect();
    Ok((
        BranchRun {
            degree: d,
            height: n,
            stops,
            final_directions,
        },
        g,
        t,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlternationOutcome {
    pub run: BranchRun,
    pub alternates: bool,
    pub rotors_restored: bool,
}

impl AlternationOutcome {
    pub fn holds(&self) -> bool {
        self.alternates && self.rotors_restored
    }
}

/// On the ternary branch `Y_n` with every rotor in direction 1, routes
/// `2^n - 1` chips from the root and records where they stop.
pub fn alternation_experiment(n: usize) -> Result<AlternationOutcome, TreeError> {
    let chips = pow(2, n) - 1;
    let (run, _, _) = run_branch(3, n, 1, chips)?;
    let alternates = run
        .stops
        .chars()
        .enumerate()
        .all(|(i, c)| c == if i % 2 == 0 { 'b' } else { 'o' });
    let rotors_restored = run.final_directions.values().all(|&k| k == 1);
    Ok(AlternationOutcome {
        run,
        alternates,
        rotors_restored,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecurrenceOutcome {
    pub run: BranchRun,
    pub all_return: bool,
    pub all_point_up: bool,
}

impl RecurrenceOutcome {
    pub fn holds(&self) -> bool {
        self.all_return && self.all_point_up
    }
}

/// On `Y_n` with every rotor in direction `d - 1`, routes `n - 1` chips from
/// the root.
pub fn recurrence_experiment(d: usize, n: usize) -> Result<RecurrenceOutcome, TreeError> {
    let (run, _, _) = run_branch(d, n, d - 1, (n - 1) as u64)?;
    let all_return = run.stops.chars().all(|c| c == 'o');
    let all_point_up = run.final_directions.values().all(|&k| k == d);
    Ok(RecurrenceOutcome {
        run,
        all_return,
        all_point_up,
    })
}

/// Expected number of returns among `m` independent random walks from the
/// origin of the infinite tree: `m / (d - 1)`.
pub fn expected_returns(d: usize, m: u64) -> BigRational {
    rational(m, (d - 1) as u64)
}
