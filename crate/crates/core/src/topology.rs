//! Undirected tree interaction graphs with a fixed edge orientation.
//!
//! Agents are numbered `1..=N` at the API boundary (configs, error messages)
//! and `0..N` internally. Edge `k` is stored as `(head, tail)` exactly as the
//! user listed it; that orientation fixes the signs of the incidence matrix and
//! which agent owns the hybrid variable of the edge.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::so3::{orthogonal_projector, Mat3, Rotation, Vec3, VALIDATION_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("graph needs at least one agent")]
    NoAgents,
    #[error("edge {edge} references agent {agent}, outside 1..={n}")]
    UnknownAgent { edge: usize, agent: usize, n: usize },
    #[error("edge {edge} is a self-loop on agent {agent}")]
    SelfLoop { edge: usize, agent: usize },
    #[error("edge {edge} ({head}, {tail}) duplicates edge {first}")]
    DuplicateEdge { edge: usize, first: usize, head: usize, tail: usize },
    #[error("edge {edge} ({head}, {tail}) closes a cycle")]
    HasCycle { edge: usize, head: usize, tail: usize },
    #[error("graph is not connected: agent {agent} is unreachable from agent 1")]
    NotConnected { agent: usize },
    #[error("expected {expected} per-edge values, got {got}")]
    EdgeCountMismatch { expected: usize, got: usize },
    #[error("bearing on edge {edge} is not a unit vector (norm {norm})")]
    NotUnit { edge: usize, norm: f64 },
}

/// Directed edge, 0-based agent indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub head: usize,
    pub tail: usize,
}

/// A validated undirected tree with an orientation on every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeTopology {
    n_agents: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
    head_edges: Vec<Vec<usize>>,
    tail_edges: Vec<Vec<usize>>,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Validates an edge list given as 1-based `(head, tail)` pairs.
pub fn validate_tree(n_agents: usize, edge_list: &[(usize, usize)]) -> Result<TreeTopology, TopologyError> {
    if n_agents == 0 {
        return Err(TopologyError::NoAgents);
    }
    let mut seen = std::collections::HashMap::new();
    let mut dsu = DisjointSet::new(n_agents);
    let mut edges = Vec::with_capacity(edge_list.len());
    for (k, &(head, tail)) in edge_list.iter().enumerate() {
        let edge = k + 1;
        for agent in [head, tail] {
            if agent == 0 || agent > n_agents {
                return Err(TopologyError::UnknownAgent { edge, agent, n: n_agents });
            }
        }
        if head == tail {
            return Err(TopologyError::SelfLoop { edge, agent: head });
        }
        let key = (head.min(tail), head.max(tail));
        if let Some(&first) = seen.get(&key) {
            return Err(TopologyError::DuplicateEdge { edge, first, head, tail });
        }
        seen.insert(key, edge);
        if !dsu.union(head - 1, tail - 1) {
            return Err(TopologyError::HasCycle { edge, head, tail });
        }
        edges.push(Edge { head: head - 1, tail: tail - 1 });
    }
    let root = dsu.find(0);
    if let Some(agent) = (1..n_agents).find(|&i| dsu.find(i) != root) {
        return Err(TopologyError::NotConnected { agent: agent + 1 });
    }

    let mut neighbors = vec![Vec::new(); n_agents];
    let mut head_edges = vec![Vec::new(); n_agents];
    let mut tail_edges = vec![Vec::new(); n_agents];
    for (k, e) in edges.iter().enumerate() {
        neighbors[e.head].push(e.tail);
        neighbors[e.tail].push(e.head);
        head_edges[e.head].push(k);
        tail_edges[e.tail].push(k);
    }
    Ok(TreeTopology { n_agents, edges, neighbors, head_edges, tail_edges })
}

impl TreeTopology {
    /// Path graph `1 -> 2 -> ... -> N` with every edge pointing away from agent 1.
    pub fn path(n_agents: usize) -> Result<Self, TopologyError> {
        let edges: Vec<_> = (1..n_agents).map(|i| (i, i + 1)).collect();
        validate_tree(n_agents, &edges)
    }

    /// Uniformly random attachment order with random edge orientations.
    pub fn random<R: Rng>(n_agents: usize, rng: &mut R) -> Self {
        let mut edges = Vec::with_capacity(n_agents.saturating_sub(1));
        for i in 2..=n_agents {
            let j = rng.gen_range(1..i);
            edges.push(if rng.gen_bool(0.5) { (i, j) } else { (j, i) });
        }
        validate_tree(n_agents, &edges).expect("random attachment always yields a tree")
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> Edge {
        self.edges[k]
    }

    /// 1-based `(head, tail)` pairs, the inverse of [`validate_tree`].
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.head + 1, e.tail + 1)).collect()
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.neighbors[agent]
    }

    /// Edges where `agent` is the head.
    pub fn head_edges(&self, agent: usize) -> &[usize] {
        &self.head_edges[agent]
    }

    /// Edges where `agent` is the tail.
    pub fn tail_edges(&self, agent: usize) -> &[usize] {
        &self.tail_edges[agent]
    }

    /// The agent that integrates and jumps the hybrid variable of edge `k`.
    pub fn xi_owner(&self, k: usize) -> usize {
        self.edges[k].head
    }

    pub fn check_edge_count(&self, got: usize) -> Result<(), TopologyError> {
        if got != self.n_edges() {
            return Err(TopologyError::EdgeCountMismatch { expected: self.n_edges(), got });
        }
        Ok(())
    }
}

/// Per-edge relative rotations, one per edge of the associated tree.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRotations(pub Vec<Rotation>);

impl EdgeRotations {
    pub fn new(t: &TreeTopology, rotations: Vec<Rotation>) -> Result<Self, TopologyError> {
        t.check_edge_count(rotations.len())?;
        Ok(EdgeRotations(rotations))
    }

    pub fn identity(t: &TreeTopology) -> Self {
        EdgeRotations(vec![Rotation::identity(); t.n_edges()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rotation> {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for EdgeRotations {
    type Output = Rotation;
    fn index(&self, k: usize) -> &Rotation {
        &self.0[k]
    }
}

/// N x M incidence matrix: `+1` at the head of each edge, `-1` at the tail.
pub fn incidence_matrix(t: &TreeTopology) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(t.n_agents(), t.n_edges());
    for (k, e) in t.edges().iter().enumerate() {
        h[(e.head, k)] = 1.0;
        h[(e.tail, k)] = -1.0;
    }
    h
}

/// Graph Laplacian `H Hᵀ`.
pub fn laplacian(t: &TreeTopology) -> DMatrix<f64> {
    let h = incidence_matrix(t);
    &h * h.transpose()
}

/// Kronecker product `m ⊗ I₃`.
pub fn kron_i3(m: &DMatrix<f64>) -> DMatrix<f64> {
    kron_block(m, &Mat3::identity())
}

/// Kronecker product `m ⊗ b` for a 3x3 block `b`.
pub fn kron_block(m: &DMatrix<f64>, b: &Mat3) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(3 * m.nrows(), 3 * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let s = m[(i, j)];
            if s != 0.0 {
                out.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(&(b * s));
            }
        }
    }
    out
}

/// Rotation-weighted incidence matrix (3N x 3M): block `(i, k)` is `I₃` when
/// `i` heads edge `k`, `-R̄_k` when `i` is its tail.
pub fn block_h_bar(t: &TreeTopology, rel: &EdgeRotations) -> Result<DMatrix<f64>, TopologyError> {
    t.check_edge_count(rel.len())?;
    let mut h = DMatrix::zeros(3 * t.n_agents(), 3 * t.n_edges());
    for (k, e) in t.edges().iter().enumerate() {
        h.fixed_view_mut::<3, 3>(3 * e.head, 3 * k).copy_from(&Mat3::identity());
        h.fixed_view_mut::<3, 3>(3 * e.tail, 3 * k).copy_from(&-rel[k].matrix());
    }
    Ok(h)
}

/// Bearing Laplacian `(H ⊗ I₃) diag(P_b) (H ⊗ I₃)ᵀ` for unit edge bearings.
pub fn bearing_laplacian(t: &TreeTopology, bearings: &[Vec3]) -> Result<DMatrix<f64>, TopologyError> {
    t.check_edge_count(bearings.len())?;
    let n = t.n_agents();
    let mut lb = DMatrix::zeros(3 * n, 3 * n);
    for (k, (e, b)) in t.edges().iter().zip(bearings).enumerate() {
        let norm = b.norm();
        if (norm - 1.0).abs() > VALIDATION_TOL {
            return Err(TopologyError::NotUnit { edge: k + 1, norm });
        }
        let p = orthogonal_projector(b).expect("unit bearing");
        for (a, c, s) in [(e.head, e.head, 1.0), (e.tail, e.tail, 1.0), (e.head, e.tail, -1.0), (e.tail, e.head, -1.0)] {
            let mut blk = lb.fixed_view_mut::<3, 3>(3 * a, 3 * c);
            blk += p * s;
        }
    }
    Ok(lb)
}
