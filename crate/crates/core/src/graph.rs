//! Graph data model, hop neighbourhoods and the contrastive weighting matrix.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Disjoint node index sets for training, validation and testing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// An undirected attributed graph with (partial) node labels.
///
/// The adjacency is stored densely. It starts out binary, symmetric and
/// hollow; mixup produces fractional but still symmetric copies of it.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub features: Matrix,
    pub adjacency: Matrix,
    /// Class id per node, `None` where unknown.
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub split: Split,
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Number of undirected edges (nonzero upper-triangle entries).
    pub fn num_edges(&self) -> usize {
        let n = self.num_nodes();
        (0..n)
            .map(|i| self.adjacency.row(i)[i + 1..].iter().filter(|&&w| w != 0.0).count())
            .sum()
    }

    /// Sorted neighbour lists from the nonzero pattern of the adjacency.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        neighbor_lists(&self.adjacency)
    }

    /// Label of a node that is required to have one.
    pub fn label(&self, i: usize) -> Result<usize> {
        self.labels[i]
            .ok_or_else(|| Error::InvalidGraph(format!("node {i} has no label")))
    }

    /// Checks the invariants every loaded or generated graph satisfies.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.adjacency.shape() != (n, n) {
            return Err(Error::InvalidGraph(format!(
                "adjacency is {:?} for {n} nodes",
                self.adjacency.shape()
            )));
        }
        if self.labels.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {n} nodes",
                self.labels.len()
            )));
        }
        for i in 0..n {
            if self.adjacency.get(i, i) != 0.0 {
                return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (self.adjacency.get(i, j), self.adjacency.get(j, i));
                if a != b {
                    return Err(Error::InvalidGraph(format!("asymmetric edge ({i}, {j})")));
                }
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::InvalidGraph(format!("edge weight {a} at ({i}, {j})")));
                }
            }
        }
        if let Some(&c) = self.labels.iter().flatten().find(|&&c| c >= self.num_classes) {
            return Err(Error::InvalidGraph(format!(
                "class {c} out of range for {} classes",
                self.num_classes
            )));
        }

        let mut owner = vec![None; n];
        for (name, set) in [
            ("train", &self.split.train),
            ("val", &self.split.val),
            ("test", &self.split.test),
        ] {
            for &i in set {
                if i >= n {
                    return Err(Error::InvalidGraph(format!("{name} index {i} >= {n}")));
                }
                if let Some(prev) = owner[i].replace(name) {
                    return Err(Error::InvalidGraph(format!(
                        "node {i} is in both {prev} and {name}"
                    )));
                }
                if self.labels[i].is_none() {
                    return Err(Error::InvalidGraph(format!("{name} node {i} has no label")));
                }
            }
        }
        if self.split.train.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        let mut seen = vec![false; self.num_classes];
        for &i in &self.split.train {
            if let Some(c) = self.labels[i] {
                seen[c] = true;
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidGraph(format!("class {c} has no training node")));
        }
        Ok(())
    }
}

/// Sorted neighbour lists from the nonzero off-diagonal pattern of `adj`.
pub fn neighbor_lists(adj: &Matrix) -> Vec<Vec<usize>> {
    (0..adj.rows())
        .map(|i| {
            adj.row(i)
                .iter()
                .enumerate()
                .filter(|&(j, &w)| j != i && w != 0.0)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

fn check_adjacency(adj: &Matrix, hops: usize) -> Result<()> {
    if hops == 0 {
        return Err(Error::InvalidArgument("hop radius must be at least 1".into()));
    }
    if adj.rows() != adj.cols() {
        return Err(Error::shape("adjacency", adj.shape(), adj.shape()));
    }
    if !adj.is_symmetric(0.0) {
        return Err(Error::InvalidGraph("adjacency is not symmetric".into()));
    }
    if (0..adj.rows()).any(|i| adj.get(i, i) != 0.0) {
        return Err(Error::InvalidGraph("adjacency has self-loops".into()));
    }
    Ok(())
}

/// `(D^-1/2 (A + I) D^-1/2)^hops` with `D` the row sums of `A + I`.
///
/// The propagation matrix is applied in sparse form to a dense accumulator,
/// so each hop costs `O(N * nnz)`.
pub fn normalized_adjacency_power(adj: &Matrix, hops: usize) -> Result<Matrix> {
    check_adjacency(adj, hops)?;
    let n = adj.rows();
    let deg: Vec<f64> = (0..n).map(|i| adj.row(i).iter().sum::<f64>() + 1.0).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();

    // sparse rows of the normalised propagation matrix, self-loop included
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            adj.row(i)
                .iter()
                .enumerate()
                .filter_map(|(j, &w)| {
                    let w = if i == j { 1.0 } else { w };
                    (w != 0.0).then(|| (j, w * inv_sqrt[i] * inv_sqrt[j]))
                })
                .collect()
        })
        .collect();

    let mut acc = Matrix::zeros(n, n);
    for (i, r) in rows.iter().enumerate() {
        for &(j, w) in r {
            acc.set(i, j, w);
        }
    }
    for _ in 1..hops {
        let mut next = Matrix::zeros(n, n);
        for (i, r) in rows.iter().enumerate() {
            let out = next.row_mut(i);
            for &(j, w) in r {
                for (o, v) in out.iter_mut().zip(acc.row(j)) {
                    *o += w * v;
                }
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// Nodes within `1..=radius` hops of each node (the node itself excluded).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhoods {
    pub radius: usize,
    /// Sorted member lists, one per node.
    pub sets: Vec<Vec<usize>>,
}

impl Neighborhoods {
    pub fn contains(&self, node: usize, other: usize) -> bool {
        self.sets[node].binary_search(&other).is_ok()
    }
}

/// Breadth-first search truncated at `radius` hops from every node.
pub fn r_hop_neighborhood(adj: &Matrix, radius: usize) -> Result<Neighborhoods> {
    check_adjacency(adj, radius)?;
    let lists = neighbor_lists(adj);
    let n = lists.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    let mut sets = Vec::with_capacity(n);
    for src in 0..n {
        let mut visited = vec![src];
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            if dist[u] == radius {
                continue;
            }
            for &v in &lists[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    visited.push(v);
                    queue.push_back(v);
                }
            }
        }
        for &v in &visited {
            dist[v] = usize::MAX;
        }
        let mut members: Vec<usize> = visited.into_iter().filter(|&v| v != src).collect();
        members.sort_unstable();
        sets.push(members);
    }
    Ok(Neighborhoods { radius, sets })
}

/// Per-pair contrast weights: the normalised multi-hop adjacency restricted to
/// each node's `r`-hop neighbourhood, zero elsewhere (diagonal included).
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastCoefficients {
    pub matrix: Matrix,
    pub radius: usize,
}

pub fn contrast_coefficients(
    norm_adj: &Matrix,
    hoods: &Neighborhoods,
) -> Result<ContrastCoefficients> {
    let n = norm_adj.rows();
    if norm_adj.shape() != (n, n) || hoods.sets.len() != n {
        return Err(Error::shape(
            "contrast_coefficients",
            norm_adj.shape(),
            (hoods.sets.len(), hoods.sets.len()),
        ));
    }
    let mut matrix = Matrix::zeros(n, n);
    for (i, set) in hoods.sets.iter().enumerate() {
        for &j in set {
            matrix.set(i, j, norm_adj.get(i, j));
        }
    }
    Ok(ContrastCoefficients {
        matrix,
        radius: hoods.radius,
    })
}

/// Convenience: hop neighbourhoods, normalised power and masking in one go.
pub fn contrast_from_adjacency(adj: &Matrix, radius: usize) -> Result<ContrastCoefficients> {
    let hoods = r_hop_neighborhood(adj, radius)?;
    let norm = normalized_adjacency_power(adj, radius)?;
    contrast_coefficients(&norm, &hoods)
}
