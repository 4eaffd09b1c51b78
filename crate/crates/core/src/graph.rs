//! Communication topology between regulation resources and the spectral
//! condition that makes the consensus step a contraction.
//!
//! The consensus iteration matrix `I − βΛ⁻¹L` (with `Λ = diag(1/(2a_i))`) is
//! not symmetric, but it is similar to `I − βΛ^{-1/2} L Λ^{-1/2}`, which is.
//! All spectra here are computed on the symmetric form.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Undirected, unweighted communication graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph from an edge list. Self-loops, duplicate edges (in
    /// either orientation) and out-of-range ids are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("graph", "node count must be >= 1"));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::param(
                    "graph.edges",
                    format!("edge ({i}, {j}) out of range for {n} nodes"),
                ));
            }
            if i == j {
                return Err(Error::param(
                    "graph.edges",
                    format!("self-loop at node {i}"),
                ));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::param(
                    "graph.edges",
                    format!("duplicate edge ({i}, {j})"),
                ));
            }
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &set {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges: set,
            neighbors,
        })
    }

    /// Graph with no edges.
    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, [])
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    /// Cycle `C_n`: every node linked to one neighbor on each side.
    pub fn ring(n: usize) -> Result<Self> {
        build_k_neighbor_ring(n, 2)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(i, j)` with `i < j`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.n,
            (0..self.n).map(|i| self.degree(i) as f64),
        ))
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Same graph with nodes relabeled: node `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "graph relabeling",
                expected: self.n,
                actual: perm.len(),
            });
        }
        Self::new(self.n, self.edges.iter().map(|&(i, j)| (perm[i], perm[j])))
    }
}

/// Laplacian `L = D_G − A_G`.
pub fn laplacian(graph: &CommGraph) -> DMatrix<f64> {
    graph.degree_matrix() - graph.adjacency()
}

/// Ring on `n` nodes where node `i` links to `i±1, …, i±k/2 (mod n)`.
pub fn build_k_neighbor_ring(n: usize, k: usize) -> Result<CommGraph> {
    if n < 2 {
        return Err(Error::param(
            "n",
            format!("k-neighbor ring needs n >= 2, got {n}"),
        ));
    }
    if k == 0 || !k.is_multiple_of(2) || k >= n {
        return Err(Error::param(
            "k",
            format!("links per node must be even, positive and < n = {n}, got {k}"),
        ));
    }
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for offset in 1..=k / 2 {
            let j = (i + offset) % n;
            edges.insert((i.min(j), i.max(j)));
        }
    }
    CommGraph::new(n, edges)
}

/// Second-smallest Laplacian eigenvalue (Fiedler value); zero for a single node.
pub fn algebraic_connectivity(graph: &CommGraph) -> f64 {
    let eig = sorted_eigenvalues(laplacian(graph));
    eig.get(1).copied().unwrap_or(0.0)
}

/// Symmetric form `I − β Λ^{-1/2} L Λ^{-1/2}` of the consensus iteration
/// matrix, with `Λ^{-1/2} = diag(√(2a_i))`.
pub fn consensus_matrix(graph: &CommGraph, beta: f64, costs: &[f64]) -> Result<DMatrix<f64>> {
    validate_costs(graph, costs)?;
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", format!("must be > 0, got {beta}")));
    }
    let n = graph.n();
    let scale: Vec<f64> = costs.iter().map(|a| (2.0 * a).sqrt()).collect();
    let l = laplacian(graph);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - beta * scale[i] * l[(i, j)] * scale[j]
    }))
}

/// Outcome of the spectral feasibility check on a topology, gain and costs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    /// Spectrum of `I − βΛ⁻¹L`, descending.
    pub eigenvalues: Vec<f64>,
    /// Second largest eigenvalue, `1 − ρ`.
    pub second_largest: f64,
    pub smallest: f64,
    /// Contraction factor `(1 − ρ) · max √a_i · max 1/√a_i`.
    pub gamma: f64,
    pub connected: bool,
    /// `γ < 1`, graph connected, and every eigenvalue but the leading 1 in `[0, 1)`.
    pub satisfied: bool,
}

/// Tolerance on the lower end of the spectrum; eigenvalues above `-EIG_TOL`
/// count as non-negative.
const EIG_TOL: f64 = 1e-12;

pub fn check_condition(graph: &CommGraph, beta: f64, costs: &[f64]) -> Result<SpectralReport> {
    let m = consensus_matrix(graph, beta, costs)?;
    let mut eigenvalues = sorted_eigenvalues(m);
    eigenvalues.reverse();

    let connected = graph.is_connected();
    let second_largest = eigenvalues.get(1).copied().unwrap_or(0.0);
    let smallest = *eigenvalues.last().expect("graph has at least one node");
    let sqrt_max = costs.iter().map(|a| a.sqrt()).fold(f64::MIN, f64::max);
    let inv_sqrt_max = costs
        .iter()
        .map(|a| 1.0 / a.sqrt())
        .fold(f64::MIN, f64::max);
    let gamma = second_largest * sqrt_max * inv_sqrt_max;

    let in_range = eigenvalues.len() < 2 || (smallest >= -EIG_TOL && second_largest < 1.0);
    let satisfied = connected && in_range && gamma < 1.0;

    Ok(SpectralReport {
        eigenvalues,
        second_largest,
        smallest,
        gamma,
        connected,
        satisfied,
    })
}

/// Largest `β` keeping the spectrum of `I − βΛ⁻¹L` non-negative:
/// `1 / λ_max(Λ^{-1/2} L Λ^{-1/2})`. `None` for an edgeless graph.
pub fn max_admissible_beta(graph: &CommGraph, costs: &[f64]) -> Result<Option<f64>> {
    validate_costs(graph, costs)?;
    let scale: Vec<f64> = costs.iter().map(|a| (2.0 * a).sqrt()).collect();
    let l = laplacian(graph);
    let n = graph.n();
    let weighted = DMatrix::from_fn(n, n, |i, j| scale[i] * l[(i, j)] * scale[j]);
    let top = sorted_eigenvalues(weighted).last().copied().unwrap_or(0.0);
    Ok((top > 0.0).then(|| 1.0 / top))
}

fn validate_costs(graph: &CommGraph, costs: &[f64]) -> Result<()> {
    if costs.len() != graph.n() {
        return Err(Error::DimensionMismatch {
            context: "cost vector vs graph nodes",
            expected: graph.n(),
            actual: costs.len(),
        });
    }
    if let Some((i, a)) = costs
        .iter()
        .enumerate()
        .find(|(_, a)| !(**a > 0.0) || !a.is_finite())
    {
        return Err(Error::param(
            format!("a[{i}]"),
            format!("a must be > 0, got {a}"),
        ));
    }
    Ok(())
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}
