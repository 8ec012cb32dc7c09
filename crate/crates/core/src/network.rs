//! Directed observer topology and Round-Robin polling arithmetic.
//!
//! Nodes are 0-based inside the crate. Configuration files, CSV output and
//! the CLI use 1-based node labels; the conversion happens only in
//! [`ObserverGraph::from_one_based`] and in the writers of [`crate::io`].

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge endpoint {index} out of range 1..={nodes}")]
    IndexOutOfRange { index: usize, nodes: usize },
    #[error("graph is not weakly connected ({reached} of {nodes} nodes reachable from node 1)")]
    DisconnectedGraph { reached: usize, nodes: usize },
    #[error("node {j} is not an in-neighbour of node {i}")]
    NotANeighbour { i: usize, j: usize },
    #[error("sampling period must be positive, got {0}")]
    NonPositivePeriod(f64),
}

/// Directed graph; an edge `(j, i)` means node `j` sends its estimate to `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObserverGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbourhoods: Vec<Vec<usize>>,
    out_neighbours: Vec<Vec<usize>>,
}

/// Graph section of the problem configuration (1-based labels).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
}

impl ObserverGraph {
    /// Builds a graph from 0-based `(from, to)` pairs. Duplicate edges are
    /// collapsed.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        if node_count == 0 {
            return Err(NetworkError::Empty);
        }
        let mut neighbourhoods = vec![Vec::new(); node_count];
        let mut out_neighbours = vec![Vec::new(); node_count];
        for &(j, i) in edges {
            for idx in [j, i] {
                if idx >= node_count {
                    return Err(NetworkError::IndexOutOfRange {
                        index: idx + 1,
                        nodes: node_count,
                    });
                }
            }
            if i == j {
                return Err(NetworkError::SelfLoop(i + 1));
            }
            if !neighbourhoods[i].contains(&j) {
                neighbourhoods[i].push(j);
                out_neighbours[j].push(i);
            }
        }
        for v in neighbourhoods.iter_mut().chain(out_neighbours.iter_mut()) {
            v.sort_unstable();
        }
        let mut edges: Vec<(usize, usize)> = neighbourhoods
            .iter()
            .enumerate()
            .flat_map(|(i, vi)| vi.iter().map(move |&j| (j, i)))
            .collect();
        edges.sort_unstable();

        let graph = Self {
            node_count,
            edges,
            neighbourhoods,
            out_neighbours,
        };
        let reached = graph.undirected_reach(0);
        if reached != node_count {
            return Err(NetworkError::DisconnectedGraph {
                reached,
                nodes: node_count,
            });
        }
        Ok(graph)
    }

    /// Builds a graph from 1-based `[from, to]` pairs as written in config files.
    pub fn from_one_based(node_count: usize, edges: &[[usize; 2]]) -> Result<Self, NetworkError> {
        let mut zero_based = Vec::with_capacity(edges.len());
        for &[j, i] in edges {
            for idx in [j, i] {
                if idx == 0 || idx > node_count {
                    return Err(NetworkError::IndexOutOfRange {
                        index: idx,
                        nodes: node_count,
                    });
                }
            }
            zero_based.push((j - 1, i - 1));
        }
        Self::new(node_count, &zero_based)
    }

    pub fn from_config(cfg: &GraphConfig) -> Result<Self, NetworkError> {
        Self::from_one_based(cfg.nodes, &cfg.edges)
    }

    pub fn to_config(&self) -> GraphConfig {
        GraphConfig {
            nodes: self.node_count,
            edges: self.edges.iter().map(|&(j, i)| [j + 1, i + 1]).collect(),
        }
    }

    fn undirected_reach(&self, start: usize) -> usize {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbourhoods[u].iter().chain(&self.out_neighbours[u]) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as 0-based `(from, to)` pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// In-neighbours of `i`, ascending.
    pub fn neighbourhood(&self, i: usize) -> &[usize] {
        &self.neighbourhoods[i]
    }

    /// Nodes that listen to `i`, ascending.
    pub fn out_neighbours(&self, i: usize) -> &[usize] {
        &self.out_neighbours[i]
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.neighbourhoods[i].len()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_neighbours[i].len()
    }

    pub fn max_in_degree(&self) -> usize {
        self.neighbourhoods.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `a_ij = 1` iff `(j, i)` is an edge.
    pub fn adjacency<T: Real>(&self) -> DMatrix<T> {
        let mut a = DMatrix::zeros(self.node_count, self.node_count);
        for &(j, i) in &self.edges {
            a[(i, j)] = T::one();
        }
        a
    }

    /// `diag(p_1, …, p_N) − adjacency`.
    pub fn laplacian<T: Real>(&self) -> DMatrix<T> {
        let mut l = -self.adjacency::<T>();
        for i in 0..self.node_count {
            l[(i, i)] = T::of(self.in_degree(i) as f64);
        }
        l
    }

    /// The neighbourhood of `i` after `k` shift permutations.
    pub fn permuted_neighbourhood(&self, i: usize, k: usize) -> Vec<usize> {
        let v = &self.neighbourhoods[i];
        if v.is_empty() {
            return Vec::new();
        }
        let mut out = v.clone();
        out.rotate_right(k % v.len());
        out
    }

    /// Neighbour polled by `i` at instant `t_k`: the head of `Π^k(V_i)`.
    pub fn polled_neighbour(&self, i: usize, k: usize) -> Option<usize> {
        let v = &self.neighbourhoods[i];
        if v.is_empty() {
            return None;
        }
        // Π^k moves the element at position (p - k mod p) mod p to the front.
        let p = v.len();
        Some(v[(p - k % p) % p])
    }

    /// 1-based position `ν` of `j` in `Π^k(V_i)`.
    pub fn sample_slot(&self, i: usize, j: usize, k: usize) -> Result<usize, NetworkError> {
        let v = &self.neighbourhoods[i];
        let pos = v
            .binary_search(&j)
            .map_err(|_| NetworkError::NotANeighbour { i: i + 1, j: j + 1 })?;
        Ok((pos + k) % v.len() + 1)
    }

    /// Index `k − ν + 1` of the instant at which the sample of `j` held by
    /// `i` on `[t_k, t_{k+1})` was taken; `None` when it predates `t_0` (the
    /// zero-initialised prehistory).
    pub fn sample_instant(&self, i: usize, j: usize, k: usize) -> Result<Option<usize>, NetworkError> {
        let nu = self.sample_slot(i, j, k)?;
        Ok((k + 1).checked_sub(nu))
    }
}

/// The shift permutation: the last element moves to the front.
pub fn shift_permutation<E: Clone>(ordered: &[E]) -> Vec<E> {
    let mut out = ordered.to_vec();
    if !out.is_empty() {
        out.rotate_right(1);
    }
    out
}

/// Sampling instants `t_k = kΔ` and the per-node maximum hold delays.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRobinSchedule<T> {
    period: T,
    node_delays: Vec<T>,
    network_delay: T,
}

impl<T: Real> RoundRobinSchedule<T> {
    /// `τ_i = max_k (t_{k+1} − t_{k−p_i+1})`, evaluated on the instant grid.
    pub fn new(graph: &ObserverGraph, period: T) -> Result<Self, NetworkError> {
        if !(period > T::zero()) {
            return Err(NetworkError::NonPositivePeriod(period.as_f64()));
        }
        let mut sched = Self {
            period,
            node_delays: Vec::new(),
            network_delay: T::zero(),
        };
        let node_delays: Vec<T> = (0..graph.node_count())
            .map(|i| sched.max_gap(graph.in_degree(i)))
            .collect();
        sched.network_delay = node_delays.iter().copied().fold(T::zero(), |a, b| a.max(b));
        sched.node_delays = node_delays;
        Ok(sched)
    }

    /// Largest `t_{k+1} − t_{k−p+1}` over the instants. With a uniform grid
    /// every window of `p` periods is identical, so one window suffices.
    fn max_gap(&self, p: usize) -> T {
        if p == 0 {
            return T::zero();
        }
        let k = p as i64 - 1;
        self.instant(k + 1) - self.instant(k - p as i64 + 1)
    }

    /// `t_k`. Negative `k` denote the prehistory grid.
    pub fn instant(&self, k: i64) -> T {
        T::of(k as f64) * self.period
    }

    pub fn period(&self) -> T {
        self.period
    }

    pub fn node_delay(&self, i: usize) -> T {
        self.node_delays[i]
    }

    pub fn node_delays(&self) -> &[T] {
        &self.node_delays
    }

    /// `τ = max_i τ_i`.
    pub fn network_delay(&self) -> T {
        self.network_delay
    }
}
