//! The rotor-router group acting on recurrent configurations, the sandpile
//! group computed by Smith normal form, and checks relating the two.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_bigint::BigInt;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    enumerate_recurrent_with_limit, is_recurrent, spanning_tree_count, DirectedMultigraph,
    GraphError, RotorConfiguration, VertexId, DEFAULT_ENUMERATION_LIMIT,
};
use crate::linalg;
use crate::walk::{
    reverse_walk_with_budget, route_to_sink_in_place, step_in_place, WalkError,
    DEFAULT_STEP_BUDGET,
};

/// Default cap for the orbit length search in [`order_of_generator`].
pub const DEFAULT_ORDER_CAP: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("rotor configuration is not recurrent")]
    NotRecurrent,
    #[error("no return to the witness within {0} applications")]
    BudgetExceeded(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

/// `e_x^exponent (t)`; negative exponents undo walks with `reverse_walk`.
pub fn apply_generator(
    g: &DirectedMultigraph,
    t: &RotorConfiguration,
    x: VertexId,
    exponent: i64,
) -> Result<RotorConfiguration, GroupError> {
    t.validate(g)?;
    if !is_recurrent(g, t) {
        return Err(GroupError::NotRecurrent);
    }
    let mut u = t.clone();
    if exponent >= 0 {
        for _ in 0..exponent {
            route_to_sink_in_place(g, &mut u, x, DEFAULT_STEP_BUDGET)?;
        }
    } else {
        for _ in 0..exponent.unsigned_abs() {
            u = reverse_walk_with_budget(g, &u, x, DEFAULT_STEP_BUDGET)?;
        }
    }
    Ok(u)
}

/// Smallest `k >= 1` with `e_x^k(witness) = witness`.
pub fn order_of_generator(
    g: &DirectedMultigraph,
    x: VertexId,
    witness: &RotorConfiguration,
) -> Result<u64, GroupError> {
    order_of_generator_with_cap(g, x, witness, DEFAULT_ORDER_CAP)
}

pub fn order_of_generator_with_cap(
    g: &DirectedMultigraph,
    x: VertexId,
    witness: &RotorConfiguration,
    cap: u64,
) -> Result<u64, GroupError> {
    witness.validate(g)?;
    if !is_recurrent(g, witness) {
        return Err(GroupError::NotRecurrent);
    }
    let mut u = witness.clone();
    for k in 1..=cap {
        route_to_sink_in_place(g, &mut u, x, DEFAULT_STEP_BUDGET)?;
        if &u == witness {
            return Ok(k);
        }
    }
    Err(GroupError::BudgetExceeded(cap))
}

/// A permutation of the canonical list of recurrent configurations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    /// `self` after `other`: `i -> self(other(i))`.
    pub fn after(&self, other: &Permutation) -> Permutation {
        Permutation(other.0.iter().map(|&i| self.0[i]).collect())
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Permutation(inv)
    }

    pub fn pow(&self, exponent: i64) -> Permutation {
        let base = if exponent < 0 { self.inverse() } else { self.clone() };
        let mut result = Permutation::identity(self.0.len());
        for _ in 0..exponent.unsigned_abs() {
            result = base.after(&result);
        }
        result
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.0.len()];
        for &j in &self.0 {
            if j >= seen.len() || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        true
    }
}

/// `Rec(G)` in canonical order with a reverse index.
#[derive(Debug, Clone)]
pub struct RecurrentSet {
    configs: Vec<RotorConfiguration>,
    index: HashMap<RotorConfiguration, usize>,
}

impl RecurrentSet {
    pub fn new(g: &DirectedMultigraph) -> Result<Self, GroupError> {
        Self::with_limit(g, DEFAULT_ENUMERATION_LIMIT)
    }

    pub fn with_limit(g: &DirectedMultigraph, limit: u64) -> Result<Self, GroupError> {
        let configs = enumerate_recurrent_with_limit(g, limit)?;
        let index = configs
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(RecurrentSet { configs, index })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[RotorConfiguration] {
        &self.configs
    }

    pub fn position(&self, t: &RotorConfiguration) -> Option<usize> {
        self.index.get(t).copied()
    }

    /// `e_x` as a permutation of the canonical list.
    pub fn generator(&self, g: &DirectedMultigraph, x: VertexId) -> Result<Permutation, GroupError> {
        self.configs
            .iter()
            .map(|t| {
                let mut u = t.clone();
                route_to_sink_in_place(g, &mut u, x, DEFAULT_STEP_BUDGET)?;
                self.position(&u).ok_or(GroupError::NotRecurrent)
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Permutation)
    }

    /// The inverse of `e_x` computed independently through `reverse_walk`.
    pub fn reverse_generator(
        &self,
        g: &DirectedMultigraph,
        x: VertexId,
    ) -> Result<Permutation, GroupError> {
        self.configs
            .iter()
            .map(|t| {
                let u = reverse_walk_with_budget(g, t, x, DEFAULT_STEP_BUDGET)?;
                self.position(&u).ok_or(GroupError::NotRecurrent)
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Permutation)
    }
}

/// A product of generator powers `∏ e_x^{n_x}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupElementAction {
    pub exponents: BTreeMap<VertexId, i64>,
}

impl GroupElementAction {
    pub fn realize(&self, generators: &[Permutation], size: usize) -> Permutation {
        self.exponents
            .iter()
            .fold(Permutation::identity(size), |acc, (&x, &n)| {
                generators[x].pow(n).after(&acc)
            })
    }

    /// Applies the element to one configuration by routing and reverse routing.
    pub fn act(
        &self,
        g: &DirectedMultigraph,
        t: &RotorConfiguration,
    ) -> Result<RotorConfiguration, GroupError> {
        self.exponents
            .iter()
            .try_fold(t.clone(), |u, (&x, &n)| apply_generator(g, &u, x, n))
    }
}

/// The group element carrying `t1` to `t2`: `∏ e_x^{u(x) - v(x)}` where `u`
/// counts rotor turns from `t1` to `t2` and `v` counts arrivals when `u(y)`
/// chips at each `y` take a single step from `t1`.
pub fn transporter(
    g: &DirectedMultigraph,
    t1: &RotorConfiguration,
    t2: &RotorConfiguration,
) -> GroupElementAction {
    let n = g.num_vertices();
    let mut turns = vec![0i64; n];
    let mut arrivals = vec![0i64; n];
    let mut rotors = t1.clone();
    for x in g.non_sink_vertices() {
        let d = g.out_degree(x);
        let u = (t2.get(x) + d - t1.get(x)) % d;
        turns[x] = u as i64;
        for _ in 0..u {
            let y = step_in_place(g, &mut rotors, x).expect("x is not the sink");
            arrivals[y] += 1;
        }
    }
    debug_assert_eq!(&rotors, t2);
    let exponents = g
        .non_sink_vertices()
        .filter(|&x| turns[x] != arrivals[x])
        .map(|x| (x, turns[x] - arrivals[x]))
        .collect();
    GroupElementAction { exponents }
}

/// Transitivity of the generated group on `Rec(g)`: every configuration is
/// reached from the first one by its transporter, and a breadth-first orbit
/// search from the first one covers all of `Rec(g)`.
pub fn verify_transitivity(g: &DirectedMultigraph) -> Result<bool, GroupError> {
    let rec = RecurrentSet::new(g)?;
    let generators: Vec<Permutation> = g
        .vertices()
        .map(|x| {
            if x == g.sink() {
                Ok(Permutation::identity(rec.len()))
            } else {
                rec.generator(g, x)
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(transitive_with(g, &rec, &generators))
}

fn transitive_with(g: &DirectedMultigraph, rec: &RecurrentSet, generators: &[Permutation]) -> bool {
    if rec.is_empty() {
        return false;
    }
    let first = &rec.configs()[0];
    let by_transporter = rec.configs().iter().enumerate().all(|(j, t2)| {
        let element = transporter(g, first, t2);
        element.realize(generators, rec.len()).apply(0) == j
    });

    let mut seen = vec![false; rec.len()];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    let mut reached = 1;
    while let Some(i) = queue.pop_front() {
        for p in generators {
            let j = p.apply(i);
            if !seen[j] {
                seen[j] = true;
                reached += 1;
                queue.push_back(j);
            }
        }
    }
    by_transporter && reached == rec.len()
}

/// Invariant factors of the sandpile group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SandpileGroupStructure {
    /// Invariant factors greater than 1, each dividing the next.
    pub invariant_factors: Vec<BigInt>,
}

impl SandpileGroupStructure {
    pub fn order(&self) -> BigInt {
        self.invariant_factors
            .iter()
            .fold(BigInt::one(), |acc, f| acc * f)
    }
}

pub fn sandpile_structure(g: &DirectedMultigraph) -> SandpileGroupStructure {
    let diag = linalg::smith_diagonal(&g.reduced_laplacian());
    SandpileGroupStructure {
        invariant_factors: diag.into_iter().filter(|f| !f.is_one()).collect(),
    }
}

/// Outcome of the rotor-router / sandpile comparison on one graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsomorphismReport {
    pub rec_count: u64,
    pub sp_order: String,
    pub invariant_factors: Vec<String>,
    pub spanning_trees: String,
    pub relations_ok: bool,
    pub commutes_ok: bool,
    pub transitive_ok: bool,
    pub sink_identity_ok: bool,
    pub inverse_ok: bool,
}

impl IsomorphismReport {
    pub fn all_ok(&self) -> bool {
        self.rec_count.to_string() == self.sp_order
            && self.sp_order == self.spanning_trees
            && self.relations_ok
            && self.commutes_ok
            && self.transitive_ok
            && self.sink_identity_ok
            && self.inverse_ok
    }
}

/// Exhaustive check that the rotor-router group matches the sandpile group:
/// counts agree, each Laplacian row acts trivially, the sink acts trivially,
/// the generators commute, the action is transitive, and `reverse_walk`
/// inverts every generator.
pub fn verify_isomorphism(g: &DirectedMultigraph) -> Result<IsomorphismReport, GroupError> {
    let rec = RecurrentSet::new(g)?;
    let size = rec.len();
    let mut generators = Vec::with_capacity(g.num_vertices());
    let mut inverse_ok = true;
    for x in g.vertices() {
        if x == g.sink() {
            generators.push(Permutation::identity(size));
            continue;
        }
        let p = rec.generator(g, x)?;
        let back = rec.reverse_generator(g, x)?;
        inverse_ok &= p.is_bijection() && back.after(&p).is_identity();
        generators.push(p);
    }

    // e_s is the empty walk
    let sink_identity_ok = rec.configs().iter().all(|t| {
        let mut u = t.clone();
        route_to_sink_in_place(g, &mut u, g.sink(), 1).is_ok() && &u == t
    });

    // e_x^{d_x} = ∏_y e_y^{d_xy}
    let relations_ok = g.non_sink_vertices().all(|x| {
        let lhs = generators[x].pow(g.out_degree(x) as i64);
        let rhs = g
            .vertices()
            .fold(Permutation::identity(size), |acc, y| {
                generators[y].pow(g.multiplicity(x, y) as i64).after(&acc)
            });
        lhs == rhs
    });

    let commutes_ok = g.non_sink_vertices().all(|x| {
        g.non_sink_vertices()
            .filter(|&y| y > x)
            .all(|y| generators[x].after(&generators[y]) == generators[y].after(&generators[x]))
    });

    let transitive_ok = transitive_with(g, &rec, &generators);
    let structure = sandpile_structure(g);

    Ok(IsomorphismReport {
        rec_count: size as u64,
        sp_order: structure.order().abs().to_string(),
        invariant_factors: structure
            .invariant_factors
            .iter()
            .map(|f| f.to_string())
            .collect(),
        spanning_trees: spanning_tree_count(g).to_string(),
        relations_ok,
        commutes_ok,
        transitive_ok,
        sink_identity_ok,
        inverse_ok,
    })
}
