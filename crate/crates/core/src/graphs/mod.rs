//! Undirected simple graphs on at most 128 nodes, stored as per-row bitsets,
//! plus the ground-truth oracles built on them (connectivity, distances,
//! diameter, boolean matrix powers, capacity labels).

mod distribution;
pub mod jsonl;

pub use distribution::{
    dataset, make_two_chain, make_two_clique, sample_er, DistributionSpec, REJECTION_BUDGET,
};

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::perm::Permutation;

pub const MAX_NODES: usize = 128;
const WORDS: usize = MAX_NODES / 64;

/// Sentinel distance for pairs in different components.
pub const INFINITY: u32 = u32::MAX;

type Row = [u64; WORDS];

#[inline]
fn bit(row: &Row, j: usize) -> bool {
    row[j / 64] >> (j % 64) & 1 == 1
}

#[inline]
fn set_bit(row: &mut Row, j: usize) {
    row[j / 64] |= 1 << (j % 64);
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    adj: Vec<Row>,
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Graph(n={}, edges={:?})", self.n, self.edges())
    }
}

impl Graph {
    pub fn empty(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return Err(Error::config(format!(
                "graph size {n} outside 1..={MAX_NODES}"
            )));
        }
        Ok(Graph {
            n,
            adj: vec![[0; WORDS]; n],
        })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::empty(n)?;
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    /// Path on nodes `start..start+len` embedded in an `n`-node graph.
    pub fn path(n: usize, start: usize, len: usize) -> Result<Self> {
        let mut g = Graph::empty(n)?;
        g.add_path(start, len)?;
        Ok(g)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut g = Graph::empty(n)?;
        g.add_clique(0, n)?;
        Ok(g)
    }

    /// Adds `{u, v}`; re-adding an existing edge is a no-op.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if u >= self.n || v >= self.n {
            return Err(Error::config(format!(
                "edge ({u}, {v}) out of range for n = {}",
                self.n
            )));
        }
        if u == v {
            return Err(Error::config(format!("self-loop at {u}")));
        }
        set_bit(&mut self.adj[u], v);
        set_bit(&mut self.adj[v], u);
        Ok(())
    }

    pub(crate) fn add_path(&mut self, start: usize, len: usize) -> Result<()> {
        for u in start..(start + len).saturating_sub(1) {
            self.add_edge(u, u + 1)?;
        }
        Ok(())
    }

    pub(crate) fn add_clique(&mut self, start: usize, len: usize) -> Result<()> {
        for u in start..start + len {
            for v in u + 1..start + len {
                self.add_edge(u, v)?;
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        bit(&self.adj[u], v)
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn num_edges(&self) -> usize {
        (0..self.n).map(|u| self.degree(u)).sum::<usize>() / 2
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in u + 1..self.n {
                if self.has_edge(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Relabels node `i` as `perm(i)`.
    pub fn permuted(&self, perm: &Permutation) -> Graph {
        assert_eq!(perm.len(), self.n, "permutation size");
        let mut g = Graph::empty(self.n).expect("size already validated");
        for (u, v) in self.edges() {
            g.add_edge(perm.apply(u), perm.apply(v)).expect("valid edge");
        }
        g
    }

    /// Component label per node; labels are the smallest node id in the component.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = s;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in self.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = s;
                        queue.push_back(v);
                    }
                }
            }
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&v| bit(&self.adj[u], v))
    }

    /// BFS distances from `s`, expanding whole frontiers with word-wide ORs.
    fn bfs(&self, s: usize, out: &mut [u32]) {
        out.fill(INFINITY);
        out[s] = 0;
        let mut visited: Row = [0; WORDS];
        set_bit(&mut visited, s);
        let mut frontier = visited;
        let mut depth = 0;
        loop {
            let mut next: Row = [0; WORDS];
            for (w, &word) in frontier.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let u = w * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    for k in 0..WORDS {
                        next[k] |= self.adj[u][k];
                    }
                }
            }
            for k in 0..WORDS {
                next[k] &= !visited[k];
                visited[k] |= next[k];
            }
            if next.iter().all(|&w| w == 0) {
                break;
            }
            depth += 1;
            for (w, &word) in next.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    out[w * 64 + bits.trailing_zeros() as usize] = depth;
                    bits &= bits - 1;
                }
            }
            frontier = next;
        }
    }
}

/// Square 0/1 matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoolMatrix {
    n: usize,
    rows: Vec<Row>,
}

impl BoolMatrix {
    pub fn zeros(n: usize) -> Self {
        BoolMatrix {
            n,
            rows: vec![[0; WORDS]; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i);
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if f(i, j) {
                    m.set(i, j);
                }
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        bit(&self.rows[i], j)
    }

    pub fn set(&mut self, i: usize, j: usize) {
        set_bit(&mut self.rows[i], j);
    }

    pub fn count_ones(&self) -> usize {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    /// Boolean-semiring product.
    pub fn bool_mul(&self, rhs: &BoolMatrix) -> BoolMatrix {
        assert_eq!(self.n, rhs.n, "bool_mul size");
        let mut out = BoolMatrix::zeros(self.n);
        for i in 0..self.n {
            for k in 0..self.n {
                if self.get(i, k) {
                    for w in 0..WORDS {
                        out.rows[i][w] |= rhs.rows[k][w];
                    }
                }
            }
        }
        out
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.n, self.n, |i, j| if self.get(i, j) { 1.0 } else { 0.0 })
    }

    /// Support (`> 0`) of a real matrix.
    pub fn support(m: &Matrix) -> BoolMatrix {
        assert_eq!(m.rows(), m.cols(), "support of non-square matrix");
        BoolMatrix::from_fn(m.rows(), |i, j| m[(i, j)] > 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Self-loop-augmented adjacency `A_G + I`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyMatrix(BoolMatrix);

impl AdjacencyMatrix {
    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.0.get(i, j)
    }

    pub fn as_bool(&self) -> &BoolMatrix {
        &self.0
    }

    pub fn to_matrix(&self) -> Matrix {
        self.0.to_matrix()
    }
}

/// `R[i][j] = 1` iff `i` and `j` lie in the same component (diagonal included).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectivityMatrix(BoolMatrix);

impl ConnectivityMatrix {
    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.0.get(i, j)
    }

    pub fn as_bool(&self) -> &BoolMatrix {
        &self.0
    }

    pub fn to_matrix(&self) -> Matrix {
        self.0.to_matrix()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<u32>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Shortest-path distance, or [`INFINITY`].
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.d[i * self.n + j]
    }

    pub fn finite(&self, i: usize, j: usize) -> Option<u32> {
        let d = self.get(i, j);
        (d != INFINITY).then_some(d)
    }

    pub fn max_finite(&self) -> u32 {
        self.d.iter().copied().filter(|&d| d != INFINITY).max().unwrap_or(0)
    }
}

pub fn augmented_adjacency(g: &Graph) -> AdjacencyMatrix {
    let mut m = BoolMatrix {
        n: g.n,
        rows: g.adj.clone(),
    };
    for i in 0..g.n {
        m.set(i, i);
    }
    AdjacencyMatrix(m)
}

pub fn connectivity(g: &Graph) -> ConnectivityMatrix {
    let label = g.components();
    ConnectivityMatrix(BoolMatrix::from_fn(g.n, |i, j| label[i] == label[j]))
}

pub fn distances(g: &Graph) -> DistanceMatrix {
    let n = g.n;
    let mut d = vec![INFINITY; n * n];
    for s in 0..n {
        g.bfs(s, &mut d[s * n..(s + 1) * n]);
    }
    DistanceMatrix { n, d }
}

/// Largest intra-component distance; 0 for an edgeless graph.
pub fn diameter(g: &Graph) -> u32 {
    distances(g).max_finite()
}

/// Support of `A^k` under the boolean semiring.
pub fn power_support(a: &AdjacencyMatrix, k: u64) -> BoolMatrix {
    let mut acc = BoolMatrix::identity(a.n());
    for _ in 0..k {
        let next = acc.bool_mul(&a.0);
        // self-loops make the sequence monotone, so a fixed point is final
        if next == acc {
            break;
        }
        acc = next;
    }
    acc
}

/// `3^depth`, the largest diameter a depth-`depth` model decides exactly.
pub fn capacity(depth: usize) -> u64 {
    3u64.pow(depth as u32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairClass {
    Within,
    Beyond,
    Disconnected,
}

/// Per ordered pair `(i, j)`, row-major.
pub fn capacity_mask(g: &Graph, depth: usize) -> Result<Vec<PairClass>> {
    if depth == 0 {
        return Err(Error::config("capacity_mask needs depth >= 1"));
    }
    let cap = capacity(depth);
    let d = distances(g);
    Ok(d
        .d
        .iter()
        .map(|&x| match x {
            INFINITY => PairClass::Disconnected,
            x if u64::from(x) <= cap => PairClass::Within,
            _ => PairClass::Beyond,
        })
        .collect())
}

fn mean_fraction(graphs: &[Graph], depth: usize, class: PairClass) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::config("fraction over an empty graph list"));
    }
    let mut total = 0.0;
    for g in graphs {
        let mask = capacity_mask(g, depth)?;
        let hits = mask.iter().filter(|&&c| c == class).count();
        total += hits as f64 / (g.n * g.n) as f64;
    }
    Ok(total / graphs.len() as f64)
}

/// Mean fraction of ordered pairs at finite distance beyond `3^depth`.
pub fn rho(graphs: &[Graph], depth: usize) -> Result<f64> {
    mean_fraction(graphs, depth, PairClass::Beyond)
}

/// Mean fraction of ordered pairs in different components.
pub fn disconnected_fraction(graphs: &[Graph], depth: usize) -> Result<f64> {
    mean_fraction(graphs, depth, PairClass::Disconnected)
}
