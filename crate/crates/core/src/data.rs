//! Dataset files, the synthetic block-model benchmark and noise injection.
//!
//! A dataset directory holds four plain-text files:
//!
//! * `edges.txt`: one `i j` pair per line, 0-indexed, undirected
//! * `features.txt`: `N` rows of whitespace-separated reals
//! * `labels.txt`: `N` class ids, `-1` for unknown
//! * `split.txt`: three lines with the train, validation and test indices

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::numerics::Matrix;

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const SPLIT_FILE: &str = "split.txt";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Reads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();

    let path = dir.join(FEATURES_FILE);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in read(&path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| parse_err(&path, no + 1, format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(&path, no + 1, "non-finite feature"));
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    &path,
                    no + 1,
                    format!("{} features, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(parse_err(&path, 0, "no feature rows"));
    }
    let features = Matrix::from_rows(&rows);

    let path = dir.join(LABELS_FILE);
    let mut labels = Vec::with_capacity(n);
    for (no, line) in read(&path)?.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: i64 = t.parse().map_err(|e| parse_err(&path, no + 1, format!("{t:?}: {e}")))?;
        labels.push(match v {
            -1 => None,
            v if v >= 0 => Some(v as usize),
            v => return Err(parse_err(&path, no + 1, format!("label {v} is negative"))),
        });
        if labels.len() > n {
            return Err(parse_err(&path, no + 1, format!("more labels than the {n} feature rows")));
        }
    }
    if labels.len() != n {
        return Err(parse_err(&path, 0, format!("{} labels for {n} feature rows", labels.len())));
    }
    let num_classes = labels.iter().flatten().max().map_or(0, |&c| c + 1);

    let path = dir.join(EDGES_FILE);
    let mut adjacency = Matrix::zeros(n, n);
    for (no, line) in read(&path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(parse_err(&path, no + 1, "expected two node ids"));
        }
        let mut ends = [0usize; 2];
        for (slot, t) in ends.iter_mut().zip(&parts) {
            *slot = t.parse().map_err(|e| parse_err(&path, no + 1, format!("{t:?}: {e}")))?;
            if *slot >= n {
                return Err(parse_err(&path, no + 1, format!("node {slot} out of range for {n} nodes")));
            }
        }
        let [i, j] = ends;
        if i == j {
            return Err(parse_err(&path, no + 1, format!("self-loop on node {i}")));
        }
        adjacency.set(i, j, 1.0);
        adjacency.set(j, i, 1.0);
    }

    let path = dir.join(SPLIT_FILE);
    let text = read(&path)?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != 3 {
        return Err(parse_err(&path, lines.len(), format!("expected 3 lines, found {}", lines.len())));
    }
    let mut sets = Vec::with_capacity(3);
    for (no, line) in lines.iter().enumerate() {
        let set = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| parse_err(&path, no + 1, format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(&i) = set.iter().find(|&&i| i >= n) {
            return Err(parse_err(&path, no + 1, format!("node {i} out of range for {n} nodes")));
        }
        sets.push(set);
    }
    let test = sets.pop().unwrap_or_default();
    let val = sets.pop().unwrap_or_default();
    let train = sets.pop().unwrap_or_default();

    let graph = Graph {
        features,
        adjacency,
        labels,
        num_classes,
        split: Split { train, val, test },
    };
    graph.validate()?;
    Ok(graph)
}

/// Writes the four-file format. Reals use the shortest representation that
/// parses back to the same value, so loading the output is lossless.
pub fn write_dataset(graph: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let n = graph.num_nodes();

    let mut out = String::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if graph.adjacency.get(i, j) != 0.0 {
                let _ = writeln!(out, "{i} {j}");
            }
        }
    }
    fs::write(dir.join(EDGES_FILE), &out)?;

    out.clear();
    for i in 0..n {
        let row: Vec<String> = graph.features.row(i).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    fs::write(dir.join(FEATURES_FILE), &out)?;

    out.clear();
    for l in &graph.labels {
        match l {
            Some(c) => writeln!(out, "{c}"),
            None => writeln!(out, "-1"),
        }
        .ok();
    }
    fs::write(dir.join(LABELS_FILE), &out)?;

    out.clear();
    for set in [&graph.split.train, &graph.split.val, &graph.split.test] {
        let ids: Vec<String> = set.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{}", ids.join(" "));
    }
    fs::write(dir.join(SPLIT_FILE), &out)?;
    Ok(())
}

/// Stochastic block model with Gaussian class-conditional features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbmSpec {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Length of each class mean; means are `μ e_c`, so they are orthogonal.
    pub mean_separation: f64,
    /// Standard deviation of the isotropic feature noise.
    pub feature_noise: f64,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub seed: u64,
}

impl Default for SbmSpec {
    /// The 4-class, 1000-node benchmark graph.
    fn default() -> Self {
        Self {
            classes: 4,
            nodes_per_class: 250,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 32,
            mean_separation: 1.0,
            feature_noise: 1.0,
            train_per_class: 20,
            val_per_class: 30,
            seed: 0,
        }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.classes == 0 || self.nodes_per_class == 0 {
            return bad("block model needs at least one class and one node per class".into());
        }
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return bad(format!("need 0 <= p_out < p_in <= 1, got p_in={} p_out={}", self.p_in, self.p_out));
        }
        if self.feature_dim < self.classes {
            return bad(format!(
                "feature_dim {} cannot hold {} orthogonal class means",
                self.feature_dim, self.classes
            ));
        }
        if !(self.mean_separation >= 0.0 && self.feature_noise >= 0.0) {
            return bad("mean_separation and feature_noise must be nonnegative".into());
        }
        if self.train_per_class == 0 || self.train_per_class + self.val_per_class > self.nodes_per_class {
            return bad(format!(
                "{} train + {} val per class does not fit in {} nodes per class",
                self.train_per_class, self.val_per_class, self.nodes_per_class
            ));
        }
        Ok(())
    }
}

/// Samples a block-model graph. Node `i` belongs to class `i / nodes_per_class`;
/// the split is stratified, the remainder of each class going to test.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Graph> {
    spec.validate()?;
    let k = spec.classes;
    let n = k * spec.nodes_per_class;
    let class_of = |i: usize| i / spec.nodes_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut adjacency = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if class_of(i) == class_of(j) { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                adjacency.set(i, j, 1.0);
                adjacency.set(j, i, 1.0);
            }
        }
    }

    let noise = Normal::new(0.0, spec.feature_noise)
        .map_err(|e| Error::InvalidArgument(format!("feature noise: {e}")))?;
    let features = Matrix::from_fn(n, spec.feature_dim, |i, d| {
        let mean = if d == class_of(i) { spec.mean_separation } else { 0.0 };
        mean + noise.sample(&mut rng)
    });

    let mut split = Split::default();
    for c in 0..k {
        let base = c * spec.nodes_per_class;
        let mut members: Vec<usize> = (base..base + spec.nodes_per_class).collect();
        for i in (1..members.len()).rev() {
            members.swap(i, rng.random_range(0..=i));
        }
        let (train, rest) = members.split_at(spec.train_per_class);
        let (val, test) = rest.split_at(spec.val_per_class);
        split.train.extend_from_slice(train);
        split.val.extend_from_slice(val);
        split.test.extend_from_slice(test);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();

    let graph = Graph {
        features,
        adjacency,
        labels: (0..n).map(|i| Some(class_of(i))).collect(),
        num_classes: k,
        split,
    };
    graph.validate()?;
    Ok(graph)
}

/// Replaces `⌊lnr · |V_L|⌋` training labels by a different, uniformly chosen
/// class. Returns the noisy graph and the number of flipped labels.
pub fn inject_label_noise(graph: &Graph, lnr: f64, seed: u64) -> Result<(Graph, usize)> {
    if !(0.0..=1.0).contains(&lnr) {
        return Err(Error::InvalidArgument(format!("label noise ratio {lnr} not in [0, 1]")));
    }
    let mut out = graph.clone();
    let train = &graph.split.train;
    let count = (lnr * train.len() as f64).floor() as usize;
    if count == 0 || graph.num_classes < 2 {
        return Ok((out, 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pos in index::sample(&mut rng, train.len(), count).into_vec() {
        let node = train[pos];
        let old = graph.label(node)?;
        let mut new = rng.random_range(0..graph.num_classes - 1);
        if new >= old {
            new += 1;
        }
        out.labels[node] = Some(new);
    }
    Ok((out, count))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphNoiseMode {
    /// Adds edges between non-adjacent pairs.
    #[default]
    Additive,
    /// Deletes existing edges and adds the same number between non-adjacent pairs.
    Rewire,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNoiseOutcome {
    pub requested: usize,
    pub added: usize,
    pub removed: usize,
    pub shortfall: usize,
}

/// Corrupts the structure with `⌊gnr · |E|⌋` new edges between uniformly
/// sampled non-adjacent pairs (and as many deletions in rewire mode).
/// If fewer non-edges exist than requested, all of them are added and the
/// shortfall is reported.
pub fn inject_graph_noise(
    graph: &Graph,
    gnr: f64,
    mode: GraphNoiseMode,
    seed: u64,
) -> Result<(Graph, GraphNoiseOutcome)> {
    if !(gnr >= 0.0 && gnr.is_finite()) {
        return Err(Error::InvalidArgument(format!("graph noise ratio {gnr} must be nonnegative")));
    }
    let n = graph.num_nodes();
    let requested = (gnr * graph.num_edges() as f64).floor() as usize;
    let mut out = graph.clone();
    let mut outcome = GraphNoiseOutcome {
        requested,
        ..Default::default()
    };
    if requested == 0 {
        return Ok((out, outcome));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut edges = Vec::new();
    let mut non_edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if graph.adjacency.get(i, j) != 0.0 {
                edges.push((i, j));
            } else {
                non_edges.push((i, j));
            }
        }
    }

    let placed = requested.min(non_edges.len());
    for pos in index::sample(&mut rng, non_edges.len(), placed).into_vec() {
        let (i, j) = non_edges[pos];
        out.adjacency.set(i, j, 1.0);
        out.adjacency.set(j, i, 1.0);
    }
    outcome.added = placed;
    outcome.shortfall = requested - placed;
    if outcome.shortfall > 0 {
        log::warn!(
            "graph noise: only {placed} of {requested} edges could be placed"
        );
    }

    if mode == GraphNoiseMode::Rewire {
        let removed = requested.min(edges.len());
        for pos in index::sample(&mut rng, edges.len(), removed).into_vec() {
            let (i, j) = edges[pos];
            out.adjacency.set(i, j, 0.0);
            out.adjacency.set(j, i, 0.0);
        }
        outcome.removed = removed;
    }
    Ok((out, outcome))
}
