//! Directed communication topologies.
//!
//! An edge `(i, j)` means agent `j` can send to agent `i`. Every node carries
//! a self-loop, so `i` is always in its own in- and out-neighbor sets.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    in_nbrs: Vec<Vec<usize>>,
    out_nbrs: Vec<Vec<usize>>,
}

impl Digraph {
    /// Builds a graph from `(receiver, sender)` pairs; self-loops are added
    /// for every node.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut set: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for (i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            set.insert((i, j));
        }
        let mut in_nbrs = vec![Vec::new(); n];
        let mut out_nbrs = vec![Vec::new(); n];
        for &(i, j) in &set {
            in_nbrs[i].push(j);
            out_nbrs[j].push(i);
        }
        for list in out_nbrs.iter_mut() {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges: set,
            in_nbrs,
            out_nbrs,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// All `(receiver, sender)` pairs, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, receiver: usize, sender: usize) -> bool {
        self.edges.contains(&(receiver, sender))
    }

    /// Agents that `i` receives from, including `i`.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_nbrs[i]
    }

    /// Agents that `j` sends to, including `j`.
    pub fn out_neighbors(&self, j: usize) -> &[usize] {
        &self.out_nbrs[j]
    }

    pub fn out_degree(&self, j: usize) -> usize {
        self.out_nbrs[j].len()
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_nbrs[i].len()
    }

    pub fn max_out_degree(&self) -> usize {
        (0..self.n).map(|j| self.out_degree(j)).max().unwrap_or(0)
    }

    /// Whether every edge has its reverse, i.e. the graph is undirected.
    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(i, j)| self.edges.contains(&(j, i)))
    }

    pub fn is_strongly_connected(&self) -> bool {
        // 0 reaches everyone along out-edges and everyone reaches 0
        // (everyone is reached from 0 along in-edges).
        self.reach_all(&self.out_nbrs) && self.reach_all(&self.in_nbrs)
    }

    fn reach_all(&self, adjacency: &[Vec<usize>]) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Plain-text edge list: first line `n`, then one `i j` line per edge
    /// (meaning `j` sends to `i`), sorted.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn parse_edge_list(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let n: usize = lines
            .next()
            .ok_or("missing node count")?
            .parse()
            .map_err(|e| format!("bad node count: {e}"))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let mut parts = line.split_whitespace();
            let mut next = || -> std::result::Result<usize, String> {
                parts
                    .next()
                    .ok_or_else(|| format!("edge {}: expected two indices", lineno + 1))?
                    .parse()
                    .map_err(|e| format!("edge {}: {e}", lineno + 1))
            };
            let i = next()?;
            let j = next()?;
            edges.push((i, j));
        }
        Digraph::new(n, edges).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text).map_err(|m| Error::parse(path, m))
    }
}

/// Random strongly-connected digraph: a random Hamiltonian cycle, self-loops,
/// and every other ordered pair independently with probability
/// `extra_edge_prob`. Deterministic for a fixed seed.
pub fn random_strongly_connected(n: usize, extra_edge_prob: f64, seed: u64) -> Result<Digraph> {
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    check_probability(extra_edge_prob)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges = BTreeSet::new();
    if n > 1 {
        for k in 0..n {
            // order[k] sends to order[k + 1]
            edges.insert((order[(k + 1) % n], order[k]));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && !edges.contains(&(i, j)) && rng.random::<f64>() < extra_edge_prob {
                edges.insert((i, j));
            }
        }
    }
    Digraph::new(n, edges)
}

/// Random connected undirected graph (symmetric edge set): a random
/// Hamiltonian path plus every other unordered pair with probability
/// `extra_edge_prob`.
pub fn random_connected_undirected(n: usize, extra_edge_prob: f64, seed: u64) -> Result<Digraph> {
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    check_probability(extra_edge_prob)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges = BTreeSet::new();
    for w in order.windows(2) {
        edges.insert((w[0], w[1]));
        edges.insert((w[1], w[0]));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !edges.contains(&(i, j)) && rng.random::<f64>() < extra_edge_prob {
                edges.insert((i, j));
                edges.insert((j, i));
            }
        }
    }
    Digraph::new(n, edges)
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("extra_edge_prob", p, "must lie in [0, 1]"));
    }
    Ok(())
}
