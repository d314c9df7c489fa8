//! Rotor-router dynamics on finite graphs.
//!
//! A step at `x` first advances the rotor at `x` to the next out-edge in the
//! cyclic order, then moves the chip along the new rotor edge.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{is_recurrent, DirectedMultigraph, GraphError, RotorConfiguration, VertexId};

/// Default number of steps a single routing call may take.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WalkError {
    #[error("chip is at the sink, which has no rotor")]
    ChipAtSink,
    #[error("rotor at `{from}` does not point to `{to}`")]
    NotAPredecessor { from: String, to: String },
    #[error("step budget of {0} exceeded")]
    StepBudgetExceeded(u64),
    #[error("rotor configuration is not recurrent")]
    NotRecurrent,
    #[error("initial and final rotor configurations differ")]
    RotorsNotRestored,
    #[error("function is not harmonic at emitting vertex `{0}`")]
    NotHarmonicAtEmitter(String),
    #[error("state has no legal predecessor: {0}")]
    NoPredecessor(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Advances the rotor at `chip` and returns the chip's new position.
pub fn step_in_place(
    g: &DirectedMultigraph,
    t: &mut RotorConfiguration,
    chip: VertexId,
) -> Result<VertexId, WalkError> {
    if chip == g.sink() {
        return Err(WalkError::ChipAtSink);
    }
    let next = (t.get(chip) + 1) % g.out_degree(chip);
    t.set(chip, next);
    Ok(g.out_edges(chip)[next])
}

pub fn step(
    g: &DirectedMultigraph,
    t: &RotorConfiguration,
    chip: VertexId,
) -> Result<(RotorConfiguration, VertexId), WalkError> {
    let mut t = t.clone();
    let chip = step_in_place(g, &mut t, chip)?;
    Ok((t, chip))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub from: VertexId,
    pub to: VertexId,
}

/// Full history of a single chip's walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkTrace {
    pub start: VertexId,
    pub stop: VertexId,
    pub initial: RotorConfiguration,
    pub final_rotors: RotorConfiguration,
    pub steps: Vec<Step>,
}

impl WalkTrace {
    /// The states `(T_k, x_k)` for `k = 0..=steps.len()`, replayed from the
    /// initial configuration.
    pub fn states(&self, g: &DirectedMultigraph) -> Vec<(RotorConfiguration, VertexId)> {
        let mut t = self.initial.clone();
        let mut x = self.start;
        let mut out = vec![(t.clone(), x)];
        for s in &self.steps {
            x = step_in_place(g, &mut t, s.from).expect("trace steps leave non-sink vertices");
            out.push((t.clone(), x));
        }
        out
    }

    /// Checks chaining of the steps and that the replay reproduces the final rotors.
    pub fn is_consistent(&self, g: &DirectedMultigraph) -> bool {
        let mut t = self.initial.clone();
        let mut x = self.start;
        for s in &self.steps {
            if s.from != x {
                return false;
            }
            match step_in_place(g, &mut t, x) {
                Ok(y) if y == s.to => x = y,
                _ => return false,
            }
        }
        x == self.stop && t == self.final_rotors
    }

    /// CSV with header `step,from,to`; vertices by name.
    pub fn to_csv(&self, g: &DirectedMultigraph) -> String {
        steps_to_csv(g, self.steps.iter().copied())
    }
}

fn steps_to_csv(g: &DirectedMultigraph, steps: impl Iterator<Item = Step>) -> String {
    let mut csv = String::from("step,from,to\n");
    for (i, s) in steps.enumerate() {
        let _ = writeln!(csv, "{},{},{}", i + 1, g.name(s.from), g.name(s.to));
    }
    csv
}

/// Walks a chip from `start` until it enters a vertex flagged in `stop` or the
/// sink. The chip always takes at least one step unless it starts at the sink.
/// Returns the stopping vertex and the number of steps taken.
pub fn walk_until(
    g: &DirectedMultigraph,
    t: &mut RotorConfiguration,
    start: VertexId,
    stop: &[bool],
    budget: u64,
    mut on_step: impl FnMut(Step),
) -> Result<(VertexId, u64), WalkError> {
    let mut x = start;
    let mut steps = 0u64;
    if x == g.sink() {
        return Ok((x, 0));
    }
    loop {
        if steps >= budget {
            return Err(WalkError::StepBudgetExceeded(budget));
        }
        let y = step_in_place(g, t, x)?;
        steps += 1;
        on_step(Step { from: x, to: y });
        x = y;
        if x == g.sink() || stop[x] {
            return Ok((x, steps));
        }
    }
}

/// `e_x` applied in place with the given budget; returns the number of steps.
pub fn route_to_sink_in_place(
    g: &DirectedMultigraph,
    t: &mut RotorConfiguration,
    x: VertexId,
    budget: u64,
) -> Result<u64, WalkError> {
    let stop = vec![false; g.num_vertices()];
    walk_until(g, t, x, &stop, budget, |_| {}).map(|(_, n)| n)
}

/// `e_x(t)` together with the full trace of the walk.
pub fn route_to_sink(
    g: &DirectedMultigraph,
    t: &RotorConfiguration,
    x: VertexId,
) -> Result<(RotorConfiguration, WalkTrace), WalkError> {
    route_to_sink_with_budget(g, t, x, DEFAULT_STEP_BUDGET)
}

pub fn route_to_sink_with_budget(
    g: &DirectedMultigraph,
    t: &RotorConfiguration,
    x: VertexId,
    budget: u64,
) -> Result<(RotorConfiguration, WalkTrace), WalkError> {
    t.validate(g)?;
    let mut rotors = t.clone();
    let mut steps = Vec::new();
    let stop = vec![false; g.num_vertices()];
    let (end, _) = walk_until(g, &mut rotors, x, &stop, budget, |s| steps.push(s))?;
    let trace = WalkTrace {
        start: x,
        stop: end,
        initial: t.clone(),
        final_rotors: rotors.clone(),
        steps,
    };
    Ok((rotors, trace))
}

/// The unique state `(t'', z)` that steps to `(t, chip)`.
pub fn predecessor(
    g: &DirectedMultigraph,
    t: &RotorConfiguration,
    chip: VertexId,
    z: VertexId,
) -> Result<(RotorConfiguration, VertexId), WalkError> {
    if z == g.sink() || t.target(g, z) != chip {
        return Err(WalkError::NotAPredecessor {
            from: g.name(z).to_string(),
            to: g.name(chip).to_string(),
        });
    }
    let mut prev = t.clone();
    let d = g.out_degree(z);
    prev.set(z, (t.get(z) + d - 1) % d);
    Ok((prev, z))
}

/// Recovers `t` from `e_x(t)` by undoing one rotor step at a time.
pub fn reverse_walk(
    g: &DirectedMultigraph,
    t_final: &RotorConfiguration,
    x: VertexId,
) -> Result<RotorConfiguration, WalkError> {
    reverse_walk_with_budget(g, t_final, x, DEFAULT_STEP_BUDGET)
}

pub fn reverse_walk_with_budget(
    g: &DirectedMultigraph,
    t_final: &RotorConfiguration,
    x: VertexId,
    budget: u64,
) -> Result<RotorConfiguration, WalkError> {
    t_final.validate(g)?;
    if !is_recurrent(g, t_final) {
        return Err(WalkError::NotRecurrent);
    }
    let sink = g.sink();
    let mut u = t_final.clone();
    let mut y = sink;
    if x == sink {
        return Ok(u);
    }
    let mut steps = 0u64;
    loop {
        let recurrent = is_recurrent(g, &u);
        // a recurrent intermediate state is never at an already visited vertex,
        // so meeting x in a recurrent state means we are back at the start
        if recurrent && y == x {
            return Ok(u);
        }
        if steps >= budget {
            return Err(WalkError::StepBudgetExceeded(budget));
        }
        steps += 1;
        let z = if recurrent {
            // follow the rotor path from x; the vertex before y on it was the
            // last exit into y
            let mut prev = x;
            let mut cur = u.target(g, x);
            let mut guard = 0;
            while cur != y {
                if cur == sink || guard > g.num_vertices() {
                    return Err(WalkError::NoPredecessor(format!(
                        "rotor path from `{}` misses `{}`",
                        g.name(x),
                        g.name(y)
                    )));
                }
                prev = cur;
                cur = u.target(g, cur);
                guard += 1;
            }
            prev
        } else {
            // the oriented cycle passes through y; its last vertex before y
            let mut prev = y;
            let mut cur = u.target(g, y);
            let mut guard = 0;
            while cur != y {
                if cur == sink || guard > g.num_vertices() {
                    return Err(WalkError::NoPredecessor(format!(
                        "no rotor cycle through `{}`",
                        g.name(y)
                    )));
                }
                prev = cur;
                cur = u.target(g, cur);
                guard += 1;
            }
            prev
        };
        let (pu, pz) = predecessor(g, &u, y, z)?;
        u = pu;
        y = pz;
    }
}

/// Chip counts per vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChipDistribution(Vec<u64>);

impl ChipDistribution {
    pub fn empty(g: &DirectedMultigraph) -> Self {
        ChipDistribution(vec![0; g.num_vertices()])
    }

    pub fn single(g: &DirectedMultigraph, x: VertexId, count: u64) -> Self {
        let mut c = Self::empty(g);
        c.0[x] = count;
        c
    }

    pub fn get(&self, x: VertexId) -> u64 {
        self.0[x]
    }

    pub fn add(&mut self, x: VertexId, count: u64) {
        self.0[x] += count;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    /// `{name: count}`, omitting zero entries.
    pub fn to_named(&self, g: &DirectedMultigraph) -> BTreeMap<String, u64> {
        g.vertices()
            .filter(|&x| self.0[x] > 0)
            .map(|x| (g.name(x).to_string(), self.0[x]))
            .collect()
    }

    pub fn from_named(
        g: &DirectedMultigraph,
        named: &BTreeMap<String, u64>,
    ) -> Result<Self, GraphError> {
        let mut c = Self::empty(g);
        for (name, &count) in named {
            c.0[g.vertex_or_err(name)?] += count;
        }
        Ok(c)
    }
}

/// Order in which `route_all` moves chips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Scheduler {
    /// Finish each chip before starting the next; chips start in vertex order.
    #[default]
    ChipAtATime,
    /// Every active chip takes one step per round.
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChipStep {
    pub chip: usize,
    pub from: VertexId,
    pub to: VertexId,
}

/// Step log of a multi-chip routing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingLog {
    pub initial: RotorConfiguration,
    pub final_rotors: RotorConfiguration,
    pub steps: Vec<ChipStep>,
}

impl RoutingLog {
    pub fn to_csv(&self, g: &DirectedMultigraph) -> String {
        steps_to_csv(
            g,
            self.steps.iter().map(|s| Step {
                from: s.from,
                to: s.to,
            }),
        )
    }
}

/// Something that records which vertices emitted chips between two rotor states.
pub trait RotorHistory {
    fn initial_rotors(&self) -> &RotorConfiguration;
    fn final_rotors(&self) -> &RotorConfiguration;
    fn emitters(&self) -> Vec<VertexId>;
}

impl RotorHistory for WalkTrace {
    fn initial_rotors(&self) -> &RotorConfiguration {
        &self.initial
    }
    fn final_rotors(&self) -> &RotorConfiguration {
        &self.final_rotors
    }
    fn emitters(&self) -> Vec<VertexId> {
        let mut e: Vec<_> = self.steps.iter().map(|s| s.from).collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

impl RotorHistory for RoutingLog {
    fn initial_rotors(&self) -> &RotorConfiguration {
        &self.initial
    }
    fn final_rotors(&self) -> &RotorConfiguration {
        &self.final_rotors
    }
    fn emitters(&self) -> Vec<VertexId> {
        let mut e: Vec<_> = self.steps.iter().map(|s| s.from).collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingOutcome {
    pub stop_counts: ChipDistribution,
    pub rotors: RotorConfiguration,
    pub log: Option<RoutingLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoutingOptions {
    pub scheduler: Scheduler,
    /// Budget for the whole call, summed over all chips.
    pub step_budget: u64,
    pub record: bool,
}

impl Default for RoutingOptions {
    fn default() -> Self {
        RoutingOptions {
            scheduler: Scheduler::ChipAtATime,
            step_budget: DEFAULT_STEP_BUDGET,
            record: false,
        }
    }
}

/// Routes every chip until it enters `stop_set` (or the sink). Each chip not
/// at the sink takes at least one step, so chips may start inside the stop set.
pub fn route_all(
    g: &DirectedMultigraph,
    t: &RotorConfiguration,
    chips: &ChipDistribution,
    stop_set: &[VertexId],
    options: RoutingOptions,
) -> Result<RoutingOutcome, WalkError> {
    t.validate(g)?;
    let mut stop = vec![false; g.num_vertices()];
    for &v in stop_set {
        stop[v] = true;
    }
    stop[g.sink()] = true;

    let mut rotors = t.clone();
    let mut counts = ChipDistribution::empty(g);
    let mut log = Vec::new();
    let mut used = 0u64;

    // chips in vertex order, then by multiplicity
    let mut starts = Vec::new();
    for x in g.vertices() {
        for _ in 0..chips.get(x) {
            starts.push(x);
        }
    }

    match options.scheduler {
        Scheduler::ChipAtATime => {
            for (chip, &x) in starts.iter().enumerate() {
                let (end, n) = walk_until(g, &mut rotors, x, &stop, options.step_budget - used, |s| {
                    if options.record {
                        log.push(ChipStep {
                            chip,
                            from: s.from,
                            to: s.to,
                        });
                    }
                })?;
                used += n;
                counts.add(end, 1);
            }
        }
        Scheduler::RoundRobin => {
            let mut active: VecDeque<(usize, VertexId)> = VecDeque::new();
            for (chip, &x) in starts.iter().enumerate() {
                if x == g.sink() {
                    counts.add(x, 1);
                } else {
                    active.push_back((chip, x));
                }
            }
            while let Some((chip, x)) = active.pop_front() {
                if used >= options.step_budget {
                    return Err(WalkError::StepBudgetExceeded(options.step_budget));
                }
                let y = step_in_place(g, &mut rotors, x)?;
                used += 1;
                if options.record {
                    log.push(ChipStep { chip, from: x, to: y });
                }
                if stop[y] {
                    counts.add(y, 1);
                } else {
                    active.push_back((chip, y));
                }
            }
        }
    }

    let log = options.record.then(|| RoutingLog {
        initial: t.clone(),
        final_rotors: rotors.clone(),
        steps: log,
    });
    Ok(RoutingOutcome {
        stop_counts: counts,
        rotors,
        log,
    })
}

/// Checks `Σ H(x)·before(x) = Σ H(x)·after(x)` for a history whose rotors
/// start and end in the same configuration, after confirming `H` is harmonic
/// at every emitting vertex.
pub fn check_harmonic_invariant(
    g: &DirectedMultigraph,
    h: &[BigRational],
    before: &ChipDistribution,
    after: &ChipDistribution,
    history: &impl RotorHistory,
) -> Result<bool, WalkError> {
    if history.initial_rotors() != history.final_rotors() {
        return Err(WalkError::RotorsNotRestored);
    }
    for x in history.emitters() {
        let lhs = &h[x] * BigRational::from_integer(g.out_degree(x).into());
        let rhs = g
            .out_edges(x)
            .iter()
            .fold(BigRational::zero(), |acc, &y| acc + &h[y]);
        if lhs != rhs {
            return Err(WalkError::NotHarmonicAtEmitter(g.name(x).to_string()));
        }
    }
    let weigh = |c: &ChipDistribution| {
        g.vertices().fold(BigRational::zero(), |acc, x| {
            acc + &h[x] * BigRational::from_integer(c.get(x).into())
        })
    };
    Ok(weigh(before) == weigh(after))
}
