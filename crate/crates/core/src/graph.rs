//! Finite directed multigraphs with a sink, rotor configurations on them, and
//! classification of rotor states into recurrent / cyclic-at-chip / neither.
//!
//! Each vertex carries an ordered list of out-edges. The order is the cyclic
//! order in which the rotor at that vertex turns, and a rotor is stored as an
//! index into this list.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, IntMatrix};

pub type VertexId = usize;

/// Default cap on the number of configurations visited by exhaustive enumeration.
pub const DEFAULT_ENUMERATION_LIMIT: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("duplicate vertex `{0}`")]
    DuplicateVertex(String),
    #[error("loop edge at `{0}`")]
    LoopEdge(String),
    #[error("vertex `{0}` has an empty out-edge list")]
    EmptyOutList(String),
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("{count} rotor configurations exceed the enumeration limit {limit}")]
    TooLarge { count: u128, limit: u64 },
    #[error("invalid rotor configuration: {0}")]
    InvalidConfiguration(String),
}

/// A strongly connected loopless multigraph with a sink and ordered out-edge lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedMultigraph {
    names: Vec<String>,
    index: HashMap<String, VertexId>,
    sink: VertexId,
    out: Vec<Vec<VertexId>>,
}

impl DirectedMultigraph {
    /// Builds a graph from vertex names and one ordered out-list per vertex
    /// (given in the same order as `vertices`).
    pub fn build<S: AsRef<str>>(
        vertices: &[S],
        sink: &str,
        out_lists: &[Vec<S>],
    ) -> Result<Self, GraphError> {
        let names: Vec<String> = vertices.iter().map(|v| v.as_ref().to_string()).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(GraphError::DuplicateVertex(name.clone()));
            }
        }
        if out_lists.len() != names.len() {
            return Err(GraphError::InvalidConfiguration(format!(
                "{} out-lists for {} vertices",
                out_lists.len(),
                names.len()
            )));
        }
        let lookup = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| GraphError::UnknownVertex(n.to_string()))
        };
        let sink = lookup(sink)?;
        let out = out_lists
            .iter()
            .map(|list| list.iter().map(|t| lookup(t.as_ref())).collect())
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        Self::from_parts(names, sink, out)
    }

    /// Builds a graph from names and index-based out-lists.
    pub fn from_parts(
        names: Vec<String>,
        sink: VertexId,
        out: Vec<Vec<VertexId>>,
    ) -> Result<Self, GraphError> {
        if names.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(GraphError::DuplicateVertex(name.clone()));
            }
        }
        if sink >= names.len() || out.len() != names.len() {
            return Err(GraphError::InvalidConfiguration(
                "sink or out-lists do not match the vertex set".into(),
            ));
        }
        for (x, list) in out.iter().enumerate() {
            for &y in list {
                if y >= names.len() {
                    return Err(GraphError::UnknownVertex(format!("#{y}")));
                }
                if y == x {
                    return Err(GraphError::LoopEdge(names[x].clone()));
                }
            }
            if list.is_empty() && x != sink {
                return Err(GraphError::EmptyOutList(names[x].clone()));
            }
        }
        let g = DirectedMultigraph {
            names,
            index,
            sink,
            out,
        };
        if !g.strongly_connected() {
            return Err(GraphError::NotStronglyConnected);
        }
        Ok(g)
    }

    fn strongly_connected(&self) -> bool {
        let n = self.names.len();
        let mut reverse = vec![Vec::new(); n];
        for (x, list) in self.out.iter().enumerate() {
            for &y in list {
                reverse[y].push(x);
            }
        }
        let reach = |adj: &dyn Fn(VertexId) -> Vec<VertexId>| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([self.sink]);
            seen[self.sink] = true;
            while let Some(x) = queue.pop_front() {
                for y in adj(x) {
                    if !seen[y] {
                        seen[y] = true;
                        queue.push_back(y);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(&|x| self.out[x].clone()) && reach(&|x| reverse[x].clone())
    }

    pub fn num_vertices(&self) -> usize {
        self.names.len()
    }

    pub fn sink(&self) -> VertexId {
        self.sink
    }

    pub fn name(&self, x: VertexId) -> &str {
        &self.names[x]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vertex(&self, name: &str) -> Option<VertexId> {
        self.index.get(name).copied()
    }

    pub fn vertex_or_err(&self, name: &str) -> Result<VertexId, GraphError> {
        self.vertex(name)
            .ok_or_else(|| GraphError::UnknownVertex(name.to_string()))
    }

    pub fn out_edges(&self, x: VertexId) -> &[VertexId] {
        &self.out[x]
    }

    /// `d_x`, the number of out-edges.
    pub fn out_degree(&self, x: VertexId) -> usize {
        self.out[x].len()
    }

    /// `d_xy`, the number of edges from `x` to `y`.
    pub fn multiplicity(&self, x: VertexId, y: VertexId) -> usize {
        self.out[x].iter().filter(|&&t| t == y).count()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        0..self.names.len()
    }

    pub fn non_sink_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices().filter(move |&x| x != self.sink)
    }

    /// Product of out-degrees over non-sink vertices, saturating.
    pub fn configuration_count(&self) -> u128 {
        self.non_sink_vertices()
            .fold(1u128, |acc, x| acc.saturating_mul(self.out_degree(x) as u128))
    }

    /// Rows `Δ_x` (for `x != sink`) of the out-degree Laplacian with the sink
    /// coordinate deleted: diagonal `d_x`, off-diagonal `-d_xy`.
    pub fn reduced_laplacian(&self) -> IntMatrix {
        let keep: Vec<VertexId> = self.non_sink_vertices().collect();
        keep.iter()
            .map(|&x| {
                keep.iter()
                    .map(|&y| {
                        if x == y {
                            BigInt::from(self.out_degree(x))
                        } else {
                            -BigInt::from(self.multiplicity(x, y))
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            vertices: self.names.clone(),
            sink: self.names[self.sink].clone(),
            out: self
                .vertices()
                .map(|x| {
                    (
                        self.names[x].clone(),
                        self.out[x].iter().map(|&y| self.names[y].clone()).collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self, GraphError> {
        for key in file.out.keys() {
            if !file.vertices.contains(key) {
                return Err(GraphError::UnknownVertex(key.clone()));
            }
        }
        let lists: Vec<Vec<String>> = file
            .vertices
            .iter()
            .map(|v| file.out.get(v).cloned().unwrap_or_default())
            .collect();
        Self::build(&file.vertices, &file.sink, &lists)
    }
}

/// On-disk graph format: `{vertices, sink, out: {name: [targets in rotor order]}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: Vec<String>,
    pub sink: String,
    pub out: BTreeMap<String, Vec<String>>,
}

/// Rotor index at every vertex. The sink slot is always 0 and carries no meaning.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RotorConfiguration(Vec<usize>);

impl RotorConfiguration {
    pub fn new(g: &DirectedMultigraph, indices: Vec<usize>) -> Result<Self, GraphError> {
        let t = RotorConfiguration(indices);
        t.validate(g)?;
        Ok(t)
    }

    /// Every rotor at index 0.
    pub fn zero(g: &DirectedMultigraph) -> Self {
        RotorConfiguration(vec![0; g.num_vertices()])
    }

    pub fn validate(&self, g: &DirectedMultigraph) -> Result<(), GraphError> {
        if self.0.len() != g.num_vertices() {
            return Err(GraphError::InvalidConfiguration(format!(
                "{} rotors for {} vertices",
                self.0.len(),
                g.num_vertices()
            )));
        }
        if self.0[g.sink()] != 0 {
            return Err(GraphError::InvalidConfiguration(
                "the sink carries no rotor".into(),
            ));
        }
        for x in g.non_sink_vertices() {
            if self.0[x] >= g.out_degree(x) {
                return Err(GraphError::InvalidConfiguration(format!(
                    "rotor index {} at `{}` is out of range (d = {})",
                    self.0[x],
                    g.name(x),
                    g.out_degree(x)
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, x: VertexId) -> usize {
        self.0[x]
    }

    pub fn set(&mut self, x: VertexId, index: usize) {
        self.0[x] = index;
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Head of the rotor edge at `x`.
    pub fn target(&self, g: &DirectedMultigraph, x: VertexId) -> VertexId {
        g.out_edges(x)[self.0[x]]
    }

    /// `{name: index}` for every non-sink vertex.
    pub fn to_named(&self, g: &DirectedMultigraph) -> BTreeMap<String, usize> {
        g.non_sink_vertices()
            .map(|x| (g.name(x).to_string(), self.0[x]))
            .collect()
    }

    pub fn from_named(
        g: &DirectedMultigraph,
        named: &BTreeMap<String, usize>,
    ) -> Result<Self, GraphError> {
        let mut rotors = vec![0; g.num_vertices()];
        for (name, &index) in named {
            let x = g.vertex_or_err(name)?;
            if x == g.sink() {
                return Err(GraphError::InvalidConfiguration(
                    "the sink carries no rotor".into(),
                ));
            }
            rotors[x] = index;
        }
        if let Some(x) = g.non_sink_vertices().find(|x| !named.contains_key(g.name(*x))) {
            return Err(GraphError::InvalidConfiguration(format!(
                "missing rotor for `{}`",
                g.name(x)
            )));
        }
        Self::new(g, rotors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateClass {
    Recurrent,
    CycAt(VertexId),
    Neither,
}

/// Whether the rotor subgraph contains an oriented cycle, treating `removed`
/// (if any) like the sink.
fn has_cycle(g: &DirectedMultigraph, t: &RotorConfiguration, removed: Option<VertexId>) -> bool {
    const FRESH: u8 = 0;
    const ACTIVE: u8 = 1;
    const DONE: u8 = 2;
    let n = g.num_vertices();
    let mut state = vec![FRESH; n];
    state[g.sink()] = DONE;
    if let Some(r) = removed {
        state[r] = DONE;
    }
    let mut path = Vec::new();
    for start in 0..n {
        let mut x = start;
        while state[x] == FRESH {
            state[x] = ACTIVE;
            path.push(x);
            x = t.target(g, x);
        }
        if state[x] == ACTIVE {
            return true;
        }
        for &y in &path {
            state[y] = DONE;
        }
        path.clear();
    }
    false
}

/// True iff the rotors form an oriented spanning tree rooted at the sink.
pub fn is_recurrent(g: &DirectedMultigraph, t: &RotorConfiguration) -> bool {
    !has_cycle(g, t, None)
}

pub fn classify(g: &DirectedMultigraph, t: &RotorConfiguration, chip: VertexId) -> StateClass {
    if !has_cycle(g, t, None) {
        StateClass::Recurrent
    } else if chip != g.sink() && !has_cycle(g, t, Some(chip)) {
        StateClass::CycAt(chip)
    } else {
        StateClass::Neither
    }
}

/// All recurrent configurations, in lexicographic order of the rotor indices
/// listed by vertex id.
pub fn enumerate_recurrent(g: &DirectedMultigraph) -> Result<Vec<RotorConfiguration>, GraphError> {
    enumerate_recurrent_with_limit(g, DEFAULT_ENUMERATION_LIMIT)
}

pub fn enumerate_recurrent_with_limit(
    g: &DirectedMultigraph,
    limit: u64,
) -> Result<Vec<RotorConfiguration>, GraphError> {
    let count = g.configuration_count();
    if count > limit as u128 {
        return Err(GraphError::TooLarge { count, limit });
    }
    let slots: Vec<VertexId> = g.non_sink_vertices().collect();
    let mut t = RotorConfiguration::zero(g);
    let mut found = Vec::new();
    loop {
        if is_recurrent(g, &t) {
            found.push(t.clone());
        }
        // odometer, last slot fastest
        let mut i = slots.len();
        loop {
            if i == 0 {
                return Ok(found);
            }
            i -= 1;
            let x = slots[i];
            if t.0[x] + 1 < g.out_degree(x) {
                t.0[x] += 1;
                break;
            }
            t.0[x] = 0;
        }
    }
}

/// Number of oriented spanning trees rooted at the sink, via the
/// determinant of the reduced Laplacian.
pub fn spanning_tree_count(g: &DirectedMultigraph) -> BigInt {
    linalg::determinant(&g.reduced_laplacian())
}
