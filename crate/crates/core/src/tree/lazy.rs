//! Rotor-router dynamics on the infinite `d`-regular tree, materializing
//! vertices only when a chip first reaches them.

use std::fmt::Write as _;

use serde::Serialize;

use super::config::{Address, LazyTreeConfig};
use super::finite::ball_size;
use super::finite::modified_ball_count;
use super::TreeError;
use crate::walk::DEFAULT_STEP_BUDGET;

const ORIGIN: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    /// Never visited; every rotor below is in its initial direction.
    Fresh,
    /// Never materialized, but an escaping chip advanced every rotor along
    /// its descending path once.
    Trail,
    /// A layered subtree whose top `h` levels point up and whose deeper
    /// levels are untouched.
    Summary(u32),
    Node(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Arena {
    /// The whole tree; the origin's rotor cycles through its `d` neighbours.
    FullTree,
    /// One principal branch `Y` with the origin `o` as a leaf: chips started
    /// at `o` always enter vertex `1`.
    Branch,
}

#[derive(Debug, Clone)]
struct Node {
    addr: Address,
    parent: u32,
    rotor: u8,
    occupied: bool,
    children: Vec<Slot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Parent,
    Child(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChipOutcome {
    pub escaped: bool,
    /// Principal branch the chip walked in.
    pub branch: u8,
    pub max_depth: u32,
    pub steps: u64,
}

#[derive(Debug, Clone)]
pub struct LazyTree {
    config: LazyTreeConfig,
    arena: Arena,
    nodes: Vec<Node>,
    step_budget: u64,
}

impl LazyTree {
    pub fn new(config: LazyTreeConfig, arena: Arena) -> Self {
        let slots = match arena {
            Arena::FullTree => config.degree() as usize,
            Arena::Branch => 1,
        };
        let rotor = match arena {
            Arena::FullTree => config.direction(&[]),
            Arena::Branch => 0,
        };
        let origin = Node {
            addr: Address::origin(),
            parent: ORIGIN,
            rotor,
            occupied: false,
            children: vec![Slot::Fresh; slots],
        };
        LazyTree {
            config,
            arena,
            nodes: vec![origin],
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }

    /// Per-chip step cap.
    pub fn with_step_budget(mut self, budget: u64) -> Self {
        self.step_budget = budget;
        self
    }

    pub fn config(&self) -> &LazyTreeConfig {
        &self.config
    }

    pub fn arena(&self) -> Arena {
        self.arena
    }

    pub fn materialized_count(&self) -> usize {
        self.nodes.len()
    }

    /// Current rotor direction at `addr`, if that vertex is materialized.
    pub fn rotor_at(&self, addr: &Address) -> Option<u8> {
        self.find(addr.as_slice()).map(|v| self.nodes[v as usize].rotor)
    }

    fn find(&self, addr: &[u8]) -> Option<u32> {
        let mut v = ORIGIN;
        for &k in addr {
            match *self.nodes[v as usize].children.get(k as usize - 1)? {
                Slot::Node(id) => v = id,
                _ => return None,
            }
        }
        Some(v)
    }

    fn materialize(&mut self, parent: u32, k: u8, rotor: u8) -> u32 {
        let addr = self.nodes[parent as usize].addr.child(k);
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            addr,
            parent,
            rotor,
            occupied: false,
            children: vec![Slot::Fresh; self.config.degree() as usize - 1],
        });
        self.nodes[parent as usize].children[k as usize - 1] = Slot::Node(id);
        id
    }

    fn advance(&mut self, v: u32) -> Move {
        if v == ORIGIN && self.arena == Arena::Branch {
            return Move::Child(1);
        }
        let d = self.config.degree();
        let next = self.config.succ(self.nodes[v as usize].rotor);
        self.nodes[v as usize].rotor = next;
        if v != ORIGIN && next == d {
            Move::Parent
        } else {
            Move::Child(next)
        }
    }

    /// A chip entering the summarized subtree at `addr` passes through every
    /// rotor in the top `h` levels and is bounced back by each vertex at
    /// level `h`, provided all of those start in direction `d - 1`.
    fn returns_from_summary(&self, addr: &Address, h: u32) -> bool {
        if !self.config.has_layered_subtree(addr.as_slice()) {
            return false;
        }
        let mut probe = addr.as_slice().to_vec();
        probe.resize(probe.len() + h as usize, 1);
        self.config.direction(&probe) == self.config.degree() - 1
    }

    /// Sends one chip from the origin until it returns or escapes. `steps`
    /// counts moves, with each excursion into a summarized subtree counted
    /// once.
    pub fn run_chip(&mut self) -> Result<ChipOutcome, TreeError> {
        let mut v = ORIGIN;
        let mut steps = 0u64;
        let mut max_depth = 0u32;
        let mut branch = 0u8;
        loop {
            if steps >= self.step_budget {
                return Err(TreeError::StepBudgetExceeded(self.step_budget));
            }
            steps += 1;
            match self.advance(v) {
                Move::Parent => {
                    v = self.nodes[v as usize].parent;
                    if v == ORIGIN {
                        return Ok(ChipOutcome {
                            escaped: false,
                            branch,
                            max_depth,
                            steps,
                        });
                    }
                }
                Move::Child(k) => {
                    if v == ORIGIN {
                        branch = k;
                    }
                    let slot = self.nodes[v as usize].children[k as usize - 1];
                    v = match slot {
                        Slot::Node(id) => id,
                        Slot::Trail => {
                            let addr = self.nodes[v as usize].addr.child(k);
                            let dir = self.config.succ(self.config.direction(addr.as_slice()));
                            let id = self.materialize(v, k, dir);
                            self.nodes[id as usize].children[dir as usize - 1] = Slot::Trail;
                            id
                        }
                        Slot::Fresh | Slot::Summary(_) => {
                            let h = match slot {
                                Slot::Summary(h) => h,
                                _ => 0,
                            };
                            let addr = self.nodes[v as usize].addr.child(k);
                            if h == 0 && self.config.escape_certain(addr.as_slice()) {
                                self.nodes[v as usize].children[k as usize - 1] = Slot::Trail;
                                return Ok(ChipOutcome {
                                    escaped: true,
                                    branch,
                                    max_depth: max_depth.max(addr.depth() as u32),
                                    steps,
                                });
                            }
                            if self.returns_from_summary(&addr, h) {
                                // the whole excursion below counts as one step
                                self.nodes[v as usize].children[k as usize - 1] = Slot::Summary(h + 1);
                                max_depth = max_depth.max(addr.depth() as u32 + h);
                                steps += 1;
                                if v == ORIGIN {
                                    return Ok(ChipOutcome {
                                        escaped: false,
                                        branch,
                                        max_depth,
                                        steps,
                                    });
                                }
                                continue;
                            }
                            let dir = if h == 0 {
                                self.config.direction(addr.as_slice())
                            } else {
                                self.config.degree()
                            };
                            let id = self.materialize(v, k, dir);
                            if h > 1 {
                                self.nodes[id as usize].children.fill(Slot::Summary(h - 1));
                            }
                            id
                        }
                    };
                    max_depth = max_depth.max(self.nodes[v as usize].addr.depth() as u32);
                }
            }
        }
    }

    /// Graphviz rendering of the materialized region. Tree edges carry
    /// `rotor="down"` or `rotor="up"` when an endpoint's rotor points across.
    pub fn to_dot(&self) -> String {
        let d = self.config.degree();
        let name = |v: &Node| {
            if v.addr.is_origin() {
                "o".to_string()
            } else {
                v.addr.to_string()
            }
        };
        let mut out = String::from("digraph lazy_tree {\n  node [shape=circle];\n");
        for v in &self.nodes {
            let _ = writeln!(
                out,
                "  \"{}\" [occupied={}, dir={}{}];",
                name(v),
                v.occupied,
                v.rotor,
                if v.occupied { ", style=filled" } else { "" }
            );
        }
        // unmaterialized subtrees that differ from their initial state
        for v in &self.nodes {
            for (i, slot) in v.children.iter().enumerate() {
                let label = match slot {
                    Slot::Summary(h) => format!("summary={h}"),
                    Slot::Trail => "trail=true".to_string(),
                    _ => continue,
                };
                let child = v.addr.child(i as u8 + 1);
                let _ = writeln!(out, "  \"{child}\" [shape=box, {label}];");
                let _ = writeln!(out, "  \"{}\" -> \"{child}\" [style=dashed];", name(v));
            }
        }
        for v in self.nodes.iter().skip(1) {
            let p = &self.nodes[v.parent as usize];
            let k = *v.addr.as_slice().last().expect("non-origin");
            let down = p.rotor == k && !(p.addr.is_origin() && self.arena == Arena::Branch);
            let up = v.rotor == d;
            let rotor = match (down, up) {
                (true, true) => "both",
                (true, false) => "down",
                (false, true) => "up",
                (false, false) => "none",
            };
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [rotor=\"{rotor}\"];", name(p), name(v));
        }
        out.push_str("}\n");
        out
    }
}

/// Runs `m` chips from the origin, each until it returns or escapes.
pub fn run_chips_infinite(
    config: &LazyTreeConfig,
    arena: Arena,
    m: u64,
) -> Result<(Vec<ChipOutcome>, LazyTree), TreeError> {
    let mut tree = LazyTree::new(config.clone(), arena);
    let outcomes = (0..m).map(|_| tree.run_chip()).collect::<Result<Vec<_>, _>>()?;
    Ok((outcomes, tree))
}

/// `'1'` for every escaping chip, `'0'` for every returning one.
pub fn escape_bits(outcomes: &[ChipOutcome]) -> String {
    outcomes
        .iter()
        .map(|o| if o.escaped { '1' } else { '0' })
        .collect()
}

/// Vertices at depth `k` of the infinite tree.
pub fn sphere_size(d: usize, k: usize) -> u64 {
    if k == 0 {
        1
    } else {
        d as u64 * (d as u64 - 1).pow(k as u32 - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BallCheck {
    pub radius: usize,
    pub chips: u64,
    pub exact: bool,
    /// Only meaningful for the modified process.
    pub rotors_restored: Option<bool>,
}

/// Occupied cluster of a rotor-router aggregation run.
#[derive(Debug, Clone)]
pub struct AggregationState {
    tree: LazyTree,
    modified: bool,
    chips: u64,
    occupation_order: Vec<Address>,
    depth_counts: Vec<u64>,
}

impl AggregationState {
    fn start(config: &LazyTreeConfig, modified: bool) -> Result<Self, TreeError> {
        if let Some((p, c)) = config.find_two_cycle() {
            return Err(TreeError::NotAcyclic(format!(
                "rotors at `{p}` and `{c}` point at each other"
            )));
        }
        Ok(AggregationState {
            tree: LazyTree::new(config.clone(), Arena::FullTree),
            modified,
            chips: 0,
            occupation_order: Vec::new(),
            depth_counts: Vec::new(),
        })
    }

    fn occupy(&mut self, v: u32) -> Address {
        let node = &mut self.tree.nodes[v as usize];
        node.occupied = true;
        let depth = node.addr.depth();
        if self.depth_counts.len() <= depth {
            self.depth_counts.resize(depth + 1, 0);
        }
        self.depth_counts[depth] += 1;
        self.occupation_order.push(node.addr.clone());
        node.addr.clone()
    }

    /// Adds one chip at the origin; returns where it stopped.
    pub fn add_chip(&mut self) -> Result<Address, TreeError> {
        self.chips += 1;
        if !self.tree.nodes[ORIGIN as usize].occupied {
            return Ok(self.occupy(ORIGIN));
        }
        let budget = self.tree.step_budget;
        let mut v = ORIGIN;
        let mut steps = 0u64;
        loop {
            if steps >= budget {
                return Err(TreeError::StepBudgetExceeded(budget));
            }
            steps += 1;
            match self.tree.advance(v) {
                Move::Parent => {
                    v = self.tree.nodes[v as usize].parent;
                    if self.modified && v == ORIGIN {
                        return Ok(Address::origin());
                    }
                }
                Move::Child(k) => {
                    match self.tree.nodes[v as usize].children[k as usize - 1] {
                        Slot::Node(id) => v = id,
                        _ => {
                            let addr = self.tree.nodes[v as usize].addr.child(k);
                            let dir = self.tree.config.direction(addr.as_slice());
                            let id = self.tree.materialize(v, k, dir);
                            return Ok(self.occupy(id));
                        }
                    }
                }
            }
        }
    }

    pub fn chips(&self) -> u64 {
        self.chips
    }

    pub fn is_modified(&self) -> bool {
        self.modified
    }

    pub fn occupied_count(&self) -> u64 {
        self.occupation_order.len() as u64
    }

    pub fn max_depth(&self) -> usize {
        self.depth_counts.len().saturating_sub(1)
    }

    pub fn depth_counts(&self) -> &[u64] {
        &self.depth_counts
    }

    /// Occupied vertices in the order they joined the cluster.
    pub fn occupation_order(&self) -> &[Address] {
        &self.occupation_order
    }

    pub fn occupied_sorted(&self) -> Vec<Address> {
        let mut v = self.occupation_order.clone();
        v.sort();
        v
    }

    pub fn tree(&self) -> &LazyTree {
        &self.tree
    }

    fn degree(&self) -> usize {
        self.tree.config.degree() as usize
    }

    /// The cluster is exactly the ball of radius `rho`.
    pub fn is_ball(&self, rho: usize) -> bool {
        self.occupied_count() == ball_size(self.degree(), rho) && self.max_depth() == rho
    }

    /// Largest ρ with `B_ρ` inside the cluster.
    pub fn inner_radius(&self) -> usize {
        let d = self.degree();
        self.depth_counts
            .iter()
            .enumerate()
            .take_while(|&(k, &c)| c == sphere_size(d, k))
            .count()
            .saturating_sub(1)
    }

    /// `B_ρ ⊆ A ⊆ B_{ρ+1}` for the ρ with `b_ρ <= |A| < b_{ρ+1}`.
    pub fn is_sandwiched(&self) -> bool {
        let d = self.degree();
        let n = self.occupied_count();
        if n == 0 {
            return true;
        }
        let mut rho = 0;
        while ball_size(d, rho + 1) <= n {
            rho += 1;
        }
        self.inner_radius() >= rho && self.max_depth() <= rho + 1
    }

    /// Every materialized rotor is back in its initial direction.
    pub fn rotors_at_initial(&self) -> bool {
        self.tree
            .nodes
            .iter()
            .all(|v| v.rotor == self.tree.config.direction(v.addr.as_slice()))
    }

    pub fn to_dot(&self) -> String {
        self.tree.to_dot()
    }
}

#[derive(Debug, Clone)]
pub struct AggregationRun {
    pub state: AggregationState,
    /// One entry per ball size reached.
    pub ball_checks: Vec<BallCheck>,
    pub sandwich_ok: bool,
}

impl AggregationRun {
    pub fn holds(&self) -> bool {
        self.sandwich_ok && self.ball_checks.iter().all(|b| b.exact)
    }
}

/// Rotor-router aggregation of `chips` chips from the origin.
pub fn aggregate(config: &LazyTreeConfig, chips: u64) -> Result<AggregationRun, TreeError> {
    let mut state = AggregationState::start(config, false)?;
    let d = config.degree() as usize;
    let mut ball_checks = Vec::new();
    let mut sandwich_ok = true;
    let mut rho = 0;
    for _ in 0..chips {
        state.add_chip()?;
        let n = state.occupied_count();
        if n == ball_size(d, rho) {
            ball_checks.push(BallCheck {
                radius: rho,
                chips: n,
                exact: state.is_ball(rho),
                rotors_restored: None,
            });
            rho += 1;
        } else {
            sandwich_ok &= state.is_sandwiched();
        }
    }
    Ok(AggregationRun {
        state,
        ball_checks,
        sandwich_ok,
    })
}

#[derive(Debug, Clone)]
pub struct ModifiedRun {
    pub state: AggregationState,
    /// Stopping point of every chip; the origin for chips that returned.
    pub stops: Vec<Address>,
    /// One entry per `c_ρ` reached.
    pub ball_checks: Vec<BallCheck>,
}

impl ModifiedRun {
    pub fn holds(&self) -> bool {
        self.ball_checks
            .iter()
            .all(|b| b.exact && b.rotors_restored == Some(true))
    }
}

/// The time-changed process: a chip also stops when it returns to the origin.
pub fn aggregate_modified(config: &LazyTreeConfig, chips: u64) -> Result<ModifiedRun, TreeError> {
    let mut state = AggregationState::start(config, true)?;
    let d = config.degree() as usize;
    let mut stops = Vec::with_capacity(chips as usize);
    let mut ball_checks = Vec::new();
    let mut rho = 0;
    for n in 1..=chips {
        stops.push(state.add_chip()?);
        if n == modified_ball_count(d, rho) {
            ball_checks.push(BallCheck {
                radius: rho,
                chips: n,
                exact: state.is_ball(rho),
                rotors_restored: Some(state.rotors_at_initial()),
            });
            rho += 1;
        }
    }
    Ok(ModifiedRun {
        state,
        stops,
        ball_checks,
    })
}
