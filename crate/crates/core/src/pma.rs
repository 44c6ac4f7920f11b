//! Pseudo-label-assisted mixup.
//!
//! Each refresh pairs, per class, one labelled node with one distant,
//! confidently pseudo-labelled node whose neighbourhood label distribution
//! is the most similar, then interpolates their features and adjacency rows.
//! The three filters applied to candidates are: not within `r` hops of any
//! labelled node, pseudo class equal to the labelled node's class, and
//! maximal cosine similarity of sharpened neighbourhood label distributions.
//!
//! Mixing always starts from the pristine graph, so successive refreshes do
//! not compound.

use std::collections::VecDeque;

use rand::RngCore;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Neighborhoods};
use crate::numerics::Matrix;

/// Snapshot of classifier output used as labels for unlabelled nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabels {
    pub probs: Matrix,
    pub hard: Vec<usize>,
    pub confidence: Vec<f64>,
    pub threshold: f64,
}

impl PseudoLabels {
    pub fn from_probs(probs: Matrix, threshold: f64) -> Self {
        let hard = probs.row_argmax();
        let confidence = hard
            .iter()
            .enumerate()
            .map(|(i, &c)| probs.get(i, c))
            .collect();
        Self {
            probs,
            hard,
            confidence,
            threshold,
        }
    }

    pub fn is_confident(&self, node: usize) -> bool {
        self.confidence[node] >= self.threshold
    }
}

/// How the interpolation weight of each pair is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// Drawn per pair from a symmetric `Beta(a, a)`.
    Beta { a: f64 },
    Fixed { value: f64 },
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        LambdaPolicy::Beta { a: 1.0 }
    }
}

impl LambdaPolicy {
    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<f64> {
        match *self {
            LambdaPolicy::Fixed { value } if (0.0..=1.0).contains(&value) => Ok(value),
            LambdaPolicy::Fixed { value } => Err(Error::InvalidArgument(format!(
                "mixup weight {value} outside [0, 1]"
            ))),
            LambdaPolicy::Beta { a } => {
                let beta = Beta::new(a, a).map_err(|e| {
                    Error::InvalidArgument(format!("Beta({a}, {a}): {e}"))
                })?;
                Ok(beta.sample(rng))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmaConfig {
    pub hop_radius: usize,
    /// Sharpening temperature in `(0, 1]`.
    pub beta: f64,
    pub threshold: f64,
    pub lambda: LambdaPolicy,
}

/// Unlabelled nodes outside the `r`-hop neighbourhood of every labelled node.
pub fn candidate_set(hoods: &Neighborhoods, labeled: &[usize]) -> Vec<usize> {
    let n = hoods.sets.len();
    let mut excluded = vec![false; n];
    for &i in labeled {
        excluded[i] = true;
        for &j in &hoods.sets[i] {
            excluded[j] = true;
        }
    }
    (0..n).filter(|&j| !excluded[j]).collect()
}

/// Labelled nodes and admitted candidates of one class.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub class: usize,
    pub labeled: Vec<usize>,
    pub candidates: Vec<usize>,
}

/// Splits labelled nodes by their label and candidates by their pseudo label;
/// candidates below the confidence threshold are dropped.
pub fn class_partition(
    labeled: &[usize],
    candidates: &[usize],
    labels: &[Option<usize>],
    pseudo: &PseudoLabels,
    num_classes: usize,
) -> Result<Vec<ClassPartition>> {
    let mut parts: Vec<ClassPartition> = (0..num_classes)
        .map(|class| ClassPartition {
            class,
            ..Default::default()
        })
        .collect();
    for &i in labeled {
        let c = labels[i].ok_or_else(|| Error::InvalidGraph(format!("labelled node {i} has no label")))?;
        parts
            .get_mut(c)
            .ok_or_else(|| Error::InvalidGraph(format!("class {c} out of range")))?
            .labeled
            .push(i);
    }
    for &j in candidates {
        if pseudo.is_confident(j) {
            if let Some(p) = parts.get_mut(pseudo.hard[j]) {
                p.candidates.push(j);
            }
        }
    }
    for p in &mut parts {
        p.labeled.sort_unstable();
        p.candidates.sort_unstable();
    }
    Ok(parts)
}

/// Per-node label used for neighbourhood statistics: the training label for
/// labelled nodes, the pseudo label everywhere else.
pub fn effective_labels(labeled: &[usize], labels: &[Option<usize>], pseudo: &PseudoLabels) -> Vec<usize> {
    let mut out = pseudo.hard.clone();
    for &i in labeled {
        if let Some(c) = labels[i] {
            out[i] = c;
        }
    }
    out
}

/// Mean one-hot label of each listed node's 1-hop neighbours, one row per
/// node in `nodes`. Isolated nodes get the uniform distribution.
pub fn neighborhood_label_distribution(
    neighbors: &[Vec<usize>],
    node_labels: &[usize],
    num_classes: usize,
    nodes: &[usize],
) -> Matrix {
    let mut f = Matrix::zeros(nodes.len(), num_classes);
    for (row, &i) in nodes.iter().enumerate() {
        let nb = &neighbors[i];
        let out = f.row_mut(row);
        if nb.is_empty() {
            out.iter_mut().for_each(|v| *v = 1.0 / num_classes as f64);
            continue;
        }
        for &j in nb {
            out[node_labels[j]] += 1.0;
        }
        let deg = nb.len() as f64;
        out.iter_mut().for_each(|v| *v /= deg);
    }
    f
}

/// `f_c^(1/β) / Σ_j f_j^(1/β)`.
pub fn sharpen(dist: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("sharpening temperature {beta} not in (0, 1]")));
    }
    if dist.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("distribution has negative or non-finite mass".into()));
    }
    let exponent = 1.0 / beta;
    let powered: Vec<f64> = dist.iter().map(|&v| v.powf(exponent)).collect();
    let total: f64 = powered.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("cannot sharpen an all-zero distribution".into()));
    }
    Ok(powered.into_iter().map(|v| v / total).collect())
}

pub fn sharpen_rows(f: &Matrix, beta: f64) -> Result<Matrix> {
    let mut out = Matrix::zeros(f.rows(), f.cols());
    for i in 0..f.rows() {
        out.row_mut(i).copy_from_slice(&sharpen(f.row(i), beta)?);
    }
    Ok(out)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine similarity between every labelled row and every candidate row.
pub fn nld_similarity(labeled_rows: &Matrix, candidate_rows: &Matrix) -> Result<Matrix> {
    if labeled_rows.cols() != candidate_rows.cols() {
        return Err(Error::shape("nld_similarity", labeled_rows.shape(), candidate_rows.shape()));
    }
    Ok(Matrix::from_fn(labeled_rows.rows(), candidate_rows.rows(), |i, j| {
        cosine(labeled_rows.row(i), candidate_rows.row(j))
    }))
}

/// One selected mixup pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixPair {
    pub labeled: usize,
    pub candidate: usize,
    pub class: usize,
    pub similarity: f64,
    pub lambda: f64,
}

/// Similarity matrix of one class together with the node ids of its rows and
/// columns (both ascending).
#[derive(Clone, Debug)]
pub struct ClassSimilarity {
    pub class: usize,
    pub labeled: Vec<usize>,
    pub candidates: Vec<usize>,
    pub similarity: Matrix,
}

/// Similarities closer than this are treated as equal when selecting pairs.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// The highest-similarity pair of every class; ties (within
/// [`TIE_TOLERANCE`]) go to the smallest `(labelled, candidate)` node ids.
/// Classes with an empty side yield nothing.
/// The returned pairs carry `lambda = 1.0` until weights are drawn.
pub fn select_pairs(classes: &[ClassSimilarity]) -> Vec<MixPair> {
    let mut pairs = Vec::new();
    for cs in classes {
        let mut best: Option<(usize, usize, f64)> = None;
        // rows/cols ascending, so only a clear improvement displaces the first maximum
        for (a, _) in cs.labeled.iter().enumerate() {
            for (b, _) in cs.candidates.iter().enumerate() {
                let s = cs.similarity.get(a, b);
                if best.is_none_or(|(_, _, bs)| s > bs + TIE_TOLERANCE) {
                    best = Some((a, b, s));
                }
            }
        }
        if let Some((a, b, s)) = best {
            pairs.push(MixPair {
                labeled: cs.labeled[a],
                candidate: cs.candidates[b],
                class: cs.class,
                similarity: s,
                lambda: 1.0,
            });
        }
    }
    pairs
}

/// Copy of `x` where row `i` of every pair becomes `λ x_i + (1 - λ) x_j`.
pub fn mix_features(x: &Matrix, pairs: &[MixPair]) -> Result<Matrix> {
    let mut out = x.clone();
    for p in pairs {
        check_lambda(p.lambda)?;
        let (xi, xj) = (x.row(p.labeled), x.row(p.candidate));
        let mixed: Vec<f64> = xi
            .iter()
            .zip(xj)
            .map(|(a, b)| p.lambda * a + (1.0 - p.lambda) * b)
            .collect();
        out.row_mut(p.labeled).copy_from_slice(&mixed);
    }
    Ok(out)
}

/// Interpolates row and column `i` of the adjacency with row and column `j`
/// of the original matrix for every pair, then symmetrises.
pub fn mix_structure(adj: &Matrix, pairs: &[MixPair]) -> Result<Matrix> {
    let n = adj.rows();
    let mut seen = vec![false; n];
    for p in pairs {
        check_lambda(p.lambda)?;
        if std::mem::replace(&mut seen[p.labeled], true) {
            return Err(Error::InvalidArgument(format!(
                "node {} appears in more than one mixup pair",
                p.labeled
            )));
        }
    }
    let mut work = adj.clone();
    for p in pairs {
        let (i, j, lam) = (p.labeled, p.candidate, p.lambda);
        for c in 0..n {
            work.set(i, c, lam * adj.get(i, c) + (1.0 - lam) * adj.get(j, c));
        }
        for r in 0..n {
            work.set(r, i, lam * adj.get(r, i) + (1.0 - lam) * adj.get(r, j));
        }
    }
    let mut out = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out.set(r, c, 0.5 * (work.get(r, c) + work.get(c, r)));
        }
    }
    Ok(out)
}

fn check_lambda(l: f64) -> Result<()> {
    if (0.0..=1.0).contains(&l) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("mixup weight {l} outside [0, 1]")))
    }
}

/// Outcome of one refresh.
#[derive(Clone, Debug)]
pub struct MixupPlan {
    pub pairs: Vec<MixPair>,
    pub features: Matrix,
    pub adjacency: Matrix,
    pub num_candidates: usize,
    pub num_admitted: usize,
    /// Why no pair was produced, if none was.
    pub skipped: Option<String>,
}

impl MixupPlan {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Runs the full triple sampling and mixing against the pristine `graph`.
pub fn build_plan(
    graph: &Graph,
    hoods: &Neighborhoods,
    pseudo: &PseudoLabels,
    cfg: &PmaConfig,
    rng: &mut dyn RngCore,
) -> Result<MixupPlan> {
    let labeled = &graph.split.train;
    let candidates = candidate_set(hoods, labeled);
    let empty = |reason: String, admitted| MixupPlan {
        pairs: Vec::new(),
        features: graph.features.clone(),
        adjacency: graph.adjacency.clone(),
        num_candidates: candidates.len(),
        num_admitted: admitted,
        skipped: Some(reason),
    };
    if candidates.is_empty() {
        log::info!("no mixup candidates beyond {} hops; augmentation skipped", hoods.radius);
        return Ok(empty("no candidate beyond the hop radius".into(), 0));
    }

    let parts = class_partition(labeled, &candidates, &graph.labels, pseudo, graph.num_classes)?;
    let admitted = parts.iter().map(|p| p.candidates.len()).sum();
    let neighbors = graph.neighbor_lists();
    let node_labels = effective_labels(labeled, &graph.labels, pseudo);

    let mut classes = Vec::new();
    for p in parts.into_iter().filter(|p| !p.labeled.is_empty() && !p.candidates.is_empty()) {
        let fl = neighborhood_label_distribution(&neighbors, &node_labels, graph.num_classes, &p.labeled);
        let fm = neighborhood_label_distribution(&neighbors, &node_labels, graph.num_classes, &p.candidates);
        let similarity = nld_similarity(&sharpen_rows(&fl, cfg.beta)?, &sharpen_rows(&fm, cfg.beta)?)?;
        classes.push(ClassSimilarity {
            class: p.class,
            labeled: p.labeled,
            candidates: p.candidates,
            similarity,
        });
    }
    let mut pairs = select_pairs(&classes);
    if pairs.is_empty() {
        log::info!("no confident candidate shares a class with a labelled node; augmentation skipped");
        return Ok(empty("no class has both labelled nodes and confident candidates".into(), admitted));
    }
    for p in &mut pairs {
        p.lambda = cfg.lambda.sample(rng)?;
    }
    let features = mix_features(&graph.features, &pairs)?;
    let adjacency = mix_structure(&graph.adjacency, &pairs)?;
    Ok(MixupPlan {
        pairs,
        features,
        adjacency,
        num_candidates: candidates.len(),
        num_admitted: admitted,
        skipped: None,
    })
}

/// Constraint verdicts for one selected pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub labeled: usize,
    pub candidate: usize,
    pub candidate_unlabeled: bool,
    pub beyond_radius: bool,
    pub label_consistent: bool,
    pub confident: bool,
    pub most_similar: bool,
}

impl PairVerdict {
    pub fn ok(&self) -> bool {
        self.candidate_unlabeled
            && self.beyond_radius
            && self.label_consistent
            && self.confident
            && self.most_similar
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanVerdict {
    pub pairs: Vec<PairVerdict>,
    pub one_pair_per_class: bool,
    pub adjacency_symmetric: bool,
    pub adjacency_in_unit_range: bool,
    pub untouched_rows_identical: bool,
    pub ok: bool,
}

fn bfs_distances(neighbors: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; neighbors.len()];
    dist[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &v in &neighbors[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

/// Re-derives every constraint of a plan by brute force, without going
/// through the neighbourhood sets or partitions used to build it.
pub fn verify_plan(graph: &Graph, plan: &MixupPlan, pseudo: &PseudoLabels, cfg: &PmaConfig) -> PlanVerdict {
    let n = graph.num_nodes();
    let k = graph.num_classes;
    let neighbors = graph.neighbor_lists();
    let train = &graph.split.train;
    let mut is_train = vec![false; n];
    for &i in train {
        is_train[i] = true;
    }
    let dists: Vec<Vec<usize>> = train.iter().map(|&i| bfs_distances(&neighbors, i)).collect();
    let label_of = |j: usize| -> usize {
        if is_train[j] {
            graph.labels[j].unwrap_or(usize::MAX)
        } else {
            pseudo.hard[j]
        }
    };
    let nld = |i: usize| -> Vec<f64> {
        let nb = &neighbors[i];
        let mut f = vec![0.0; k];
        if nb.is_empty() {
            return vec![1.0 / k as f64; k];
        }
        for &j in nb {
            f[label_of(j)] += 1.0 / nb.len() as f64;
        }
        let p: Vec<f64> = f.iter().map(|v| v.powf(1.0 / cfg.beta)).collect();
        let s: f64 = p.iter().sum();
        p.into_iter().map(|v| v / s).collect()
    };
    let eligible = |j: usize, c: usize| -> bool {
        !is_train[j]
            && dists.iter().all(|d| d[j] > cfg.hop_radius)
            && pseudo.hard[j] == c
            && pseudo.confidence[j] >= pseudo.threshold
    };

    let mut verdicts = Vec::new();
    for p in &plan.pairs {
        let (i, j, c) = (p.labeled, p.candidate, p.class);
        let mut best = f64::NEG_INFINITY;
        for a in (0..n).filter(|&a| is_train[a] && graph.labels[a] == Some(c)) {
            let fa = nld(a);
            for b in (0..n).filter(|&b| eligible(b, c)) {
                best = best.max(cosine(&fa, &nld(b)));
            }
        }
        let chosen = cosine(&nld(i), &nld(j));
        verdicts.push(PairVerdict {
            labeled: i,
            candidate: j,
            candidate_unlabeled: !is_train[j],
            beyond_radius: dists.iter().all(|d| d[j] > cfg.hop_radius),
            label_consistent: is_train[i] && graph.labels[i] == Some(c) && pseudo.hard[j] == c,
            confident: pseudo.confidence[j] >= pseudo.threshold,
            most_similar: (chosen - best).abs() <= 2.0 * TIE_TOLERANCE
                && (chosen - p.similarity).abs() <= TIE_TOLERANCE,
        });
    }

    let mut classes: Vec<usize> = plan.pairs.iter().map(|p| p.class).collect();
    classes.sort_unstable();
    let one_pair_per_class = classes.windows(2).all(|w| w[0] != w[1]);
    let a = &plan.adjacency;
    let adjacency_symmetric = a.is_symmetric(1e-12);
    let adjacency_in_unit_range = a.as_slice().iter().all(|v| (0.0..=1.0).contains(v));
    let mixed: Vec<usize> = plan.pairs.iter().map(|p| p.labeled).collect();
    let untouched_rows_identical = (0..n)
        .filter(|i| !mixed.contains(i))
        .all(|i| plan.features.row(i) == graph.features.row(i));

    let ok = verdicts.iter().all(PairVerdict::ok)
        && one_pair_per_class
        && adjacency_symmetric
        && adjacency_in_unit_range
        && untouched_rows_identical;
    PlanVerdict {
        pairs: verdicts,
        one_pair_per_class,
        adjacency_symmetric,
        adjacency_in_unit_range,
        untouched_rows_identical,
        ok,
    }
}

/// Serialisable record of one refresh, written as `mixup_plan.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanDump {
    pub epoch: usize,
    pub pairs: Vec<MixPair>,
    pub num_candidates: usize,
    pub num_admitted: usize,
    pub skipped: Option<String>,
    pub verdict: Option<PlanVerdict>,
}
