//! Shared helpers for the integration tests: finite differences, random
//! graphs and brute-force reference implementations.

#![allow(dead_code)]

use std::collections::VecDeque;

use comgrl::numerics::{Matrix, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Matrix entries bounded away from zero, so rectifiers stay differentiable
/// under finite-difference perturbations.
pub fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let m = rng.random_range(0.1..1.0);
        if rng.random::<bool>() { m } else { -m }
    })
}

/// Relative error `‖a − b‖ / max(‖a‖, ‖b‖)`, with 0 when both vanish.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    let diff: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
    let na: f64 = a.as_slice().iter().map(|x| x * x).sum();
    let nb: f64 = b.as_slice().iter().map(|x| x * x).sum();
    let scale = na.max(nb).sqrt();
    if scale < 1e-300 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

/// Worst relative error between reverse-mode and central-difference
/// gradients of the scalar `f` with respect to each of `inputs`.
pub fn gradient_check<F>(inputs: &[Matrix], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eps = 1e-6;
    let eval = |xs: &[Matrix]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.scalar(out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
    let out = f(&mut tape, &vars);
    tape.backward(out).unwrap();

    let mut worst = 0.0f64;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]).cloned().unwrap_or_else(|| Matrix::zeros(x.rows(), x.cols()));
        let mut numeric = Matrix::zeros(x.rows(), x.cols());
        let mut xs = inputs.to_vec();
        for idx in 0..x.len() {
            let orig = x.as_slice()[idx];
            xs[k].as_mut_slice()[idx] = orig + eps;
            let up = eval(&xs);
            xs[k].as_mut_slice()[idx] = orig - eps;
            let down = eval(&xs);
            xs[k].as_mut_slice()[idx] = orig;
            numeric.as_mut_slice()[idx] = (up - down) / (2.0 * eps);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// `Σ (y ⊙ R)` for a fixed random `R`, turning any matrix output into a
/// scalar whose gradient exercises every entry.
pub fn project(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let (r, c) = tape.shape(y);
    let w = random_matrix(&mut rng(seed ^ 0xabcdef), r, c, 1.0);
    let w = tape.constant(w);
    let h = tape.hadamard(y, w).unwrap();
    tape.sum(h)
}

/// Symmetric 0/1 adjacency with edge probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    a
}

/// `(D^{-1/2} (A + I) D^{-1/2})^r` by plain dense products.
pub fn dense_normalized_power(a: &Matrix, r: usize) -> Matrix {
    let n = a.rows();
    let mut tilde = a.clone();
    for i in 0..n {
        tilde.set(i, i, tilde.get(i, i) + 1.0);
    }
    let deg: Vec<f64> = (0..n).map(|i| tilde.row(i).iter().sum()).collect();
    let norm = Matrix::from_fn(n, n, |i, j| tilde.get(i, j) / (deg[i] * deg[j]).sqrt());
    let mut out = Matrix::identity(n);
    for _ in 0..r {
        out = naive_matmul(&out, &norm);
    }
    out
}

pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
}

/// Hop distances from `src`, `usize::MAX` where unreachable.
pub fn bfs(a: &Matrix, src: usize) -> Vec<usize> {
    let n = a.rows();
    let mut d = vec![usize::MAX; n];
    d[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for v in 0..n {
            if a.get(u, v) != 0.0 && d[v] == usize::MAX {
                d[v] = d[u] + 1;
                q.push_back(v);
            }
        }
    }
    d
}

/// Nodes within `r` hops of `i`, excluding `i`.
pub fn within_hops(a: &Matrix, i: usize, r: usize) -> Vec<usize> {
    bfs(a, i)
        .iter()
        .enumerate()
        .filter(|&(j, &d)| j != i && d <= r)
        .map(|(j, _)| j)
        .collect()
}

/// Contrastive loss by explicit double loops.
pub fn contrastive_oracle(x: &Matrix, s: &Matrix, tau: f64, log_form: bool) -> f64 {
    let n = x.rows();
    let norm: Vec<f64> = (0..n).map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let cos = |i: usize, j: usize| {
        if norm[i] == 0.0 || norm[j] == 0.0 {
            0.0
        } else {
            x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum::<f64>() / (norm[i] * norm[j])
        }
    };
    let mut total = 0.0;
    for i in 0..n {
        let denom: f64 = (0..n).map(|k| (cos(i, k) / tau).exp()).sum();
        let mass: f64 = (0..n).map(|j| s.get(i, j) * (cos(i, j) / tau).exp() / denom).sum();
        if log_form {
            if (0..n).any(|j| s.get(i, j) > 0.0) {
                total += mass.ln();
            }
        } else {
            total += mass;
        }
    }
    -total / n as f64
}

/// Finite-difference errors of every differentiable primitive and of the
/// loss-level compositions built from them, on inputs drawn from `seed`.
pub fn primitive_checks(seed: u64) -> Vec<(&'static str, f64)> {
    use comgrl::gmsa::{cross_entropy_loss, efficient_attention, standard_attention};
    use comgrl::graph::contrast_from_adjacency;
    use comgrl::lgcl::{contrastive_loss, ContrastiveForm};

    let mut g = rng(seed);
    let a = random_matrix(&mut g, 4, 3, 1.0);
    let b = random_matrix(&mut g, 3, 5, 1.0);
    let c = random_matrix(&mut g, 4, 3, 1.0);
    let kinked = away_from_zero(&mut g, 4, 3);
    let gamma = random_matrix(&mut g, 1, 3, 1.0);
    let beta = random_matrix(&mut g, 1, 3, 1.0);
    let positive = Matrix::from_fn(4, 3, |_, _| g.random_range(0.1..2.0));
    let z = random_matrix(&mut g, 6, 4, 1.0);
    let wq = random_matrix(&mut g, 4, 2, 1.0);
    let wk = random_matrix(&mut g, 4, 2, 1.0);
    let wv = random_matrix(&mut g, 4, 2, 1.0);
    let adj = random_graph(&mut g, 6, 0.5);
    let coeffs = contrast_from_adjacency(&adj, 2).unwrap();
    let logits = random_matrix(&mut g, 6, 3, 1.0);
    let targets = Matrix::from_fn(6, 3, |i, j| if i % 2 == 0 && j == i % 3 { 1.0 } else { 0.0 });
    let s = seed;

    let mut out = vec![
        ("matmul", gradient_check(&[a.clone(), b.clone()], |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            project(t, y, s)
        })),
        ("transpose", gradient_check(&[a.clone()], |t, v| {
            let y = t.transpose(v[0]);
            project(t, y, s)
        })),
        ("add", gradient_check(&[a.clone(), c.clone()], |t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            project(t, y, s)
        })),
        ("hadamard", gradient_check(&[a.clone(), c.clone()], |t, v| {
            let y = t.hadamard(v[0], v[1]).unwrap();
            project(t, y, s)
        })),
        ("scale", gradient_check(&[a.clone()], |t, v| {
            let y = t.scale(v[0], -1.7);
            project(t, y, s)
        })),
        ("row_softmax", gradient_check(&[a.clone()], |t, v| {
            let y = t.row_softmax(v[0]);
            project(t, y, s)
        })),
        ("col_softmax", gradient_check(&[a.clone()], |t, v| {
            let y = t.col_softmax(v[0]);
            project(t, y, s)
        })),
        ("leaky_relu", gradient_check(&[kinked.clone()], |t, v| {
            let y = t.leaky_relu(v[0], 0.01);
            project(t, y, s)
        })),
        ("relu", gradient_check(&[kinked.clone()], |t, v| {
            let y = t.relu(v[0]);
            project(t, y, s)
        })),
        ("layer_norm", gradient_check(&[a.clone(), gamma, beta], |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2]).unwrap();
            project(t, y, s)
        })),
        ("hconcat", gradient_check(&[a.clone(), c.clone()], |t, v| {
            let y = t.hconcat(&[v[0], v[1]]).unwrap();
            project(t, y, s)
        })),
        ("dropout", gradient_check(&[a.clone()], |t, v| {
            let y = t.dropout(v[0], 0.4, &mut rng(s)).unwrap();
            project(t, y, s)
        })),
        ("row_normalize", gradient_check(&[a.clone()], |t, v| {
            let y = t.row_normalize(v[0]);
            project(t, y, s)
        })),
        ("cosine_similarity", gradient_check(&[a.clone(), c.clone()], |t, v| {
            let y = t.cosine_similarity(v[0], v[1]).unwrap();
            project(t, y, s)
        })),
        ("sum", gradient_check(&[a.clone()], |t, v| t.sum(v[0]))),
        ("row_sum", gradient_check(&[a.clone()], |t, v| {
            let y = t.row_sum(v[0]);
            project(t, y, s)
        })),
        ("log_clamped", gradient_check(&[positive], |t, v| {
            let y = t.log_clamped(v[0], 1e-12);
            project(t, y, s)
        })),
        ("efficient_attention", gradient_check(&[z.clone(), wq.clone(), wk.clone(), wv.clone()], |t, v| {
            let y = efficient_attention(t, v[0], v[1], v[2], v[3]).unwrap();
            project(t, y, s)
        })),
        ("standard_attention", gradient_check(&[z.clone(), wq, wk, wv], |t, v| {
            let y = standard_attention(t, v[0], v[1], v[2], v[3]).unwrap();
            project(t, y, s)
        })),
        ("cross_entropy", gradient_check(&[logits], |t, v| {
            let p = t.row_softmax(v[0]);
            cross_entropy_loss(t, p, &targets).unwrap()
        })),
    ];
    for (name, form) in [("contrastive_ratio", ContrastiveForm::Ratio), ("contrastive_log", ContrastiveForm::Log)] {
        out.push((name, gradient_check(&[z.clone()], |t, v| {
            contrastive_loss(t, v[0], &coeffs, 0.7, form).unwrap()
        })));
    }
    out
}

/// Finite-difference spot check of the full two-layer model: up to eight
/// entries per parameter matrix, combined loss `L_ce + α L_con` with dropout
/// active under a fixed mask. Returns the relative error over all sampled
/// entries.
pub fn end_to_end_check(seed: u64) -> f64 {
    use comgrl::gmsa::{cross_entropy_loss, target_matrix};
    use comgrl::graph::contrast_from_adjacency;
    use comgrl::lgcl::{contrastive_loss, ContrastiveForm};
    use comgrl::model::{ComGrlModel, ModelShape};
    use comgrl::numerics::Mode;
    use comgrl::AttentionKind;

    let mut g = rng(seed);
    let (n, d, k) = (10, 5, 3);
    let x = random_matrix(&mut g, n, d, 1.0);
    let adj = random_graph(&mut g, n, 0.3);
    let coeffs = contrast_from_adjacency(&adj, 2).unwrap();
    let nodes: Vec<usize> = (0..n).step_by(2).collect();
    let labels: Vec<usize> = nodes.iter().map(|i| i % k).collect();
    let targets = target_matrix(n, k, &nodes, &labels).unwrap();
    let form = if seed % 2 == 0 { ContrastiveForm::Log } else { ContrastiveForm::Ratio };
    let shape = ModelShape {
        input_dim: d,
        hidden: 8,
        heads: 2,
        layers: 2,
        classes: k,
        lgcl: true,
        gmsa: true,
        attention: AttentionKind::Efficient,
    };
    let mut model = ComGrlModel::new(&shape, &mut g).unwrap();

    let loss = |model: &ComGrlModel, tape: &mut Tape| -> Var {
        let mut drop_rng = rng(seed + 100);
        let mut mode = Mode::Train {
            dropout: 0.2,
            rng: &mut drop_rng,
        };
        let out = model.forward(tape, &x, &mut mode).unwrap();
        let ce = cross_entropy_loss(tape, out.probs, &targets).unwrap();
        let con = contrastive_loss(tape, out.embedding, &coeffs, 0.5, form).unwrap();
        let con = tape.scale(con, 1.5);
        tape.add(ce, con).unwrap()
    };

    let mut tape = Tape::new();
    let l = loss(&model, &mut tape);
    tape.backward(l).unwrap();
    model.store.zero_grad();
    model.store.collect_grads(&tape);

    let eps = 1e-6;
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        let len = model.store.value(id).len();
        let grad = model.store.get(id).grad.clone().unwrap_or_else(|| Matrix::zeros(1, len));
        for _ in 0..len.min(8) {
            let idx = g.random_range(0..len);
            let orig = model.store.value(id).as_slice()[idx];
            let mut eval = |v: f64| {
                model.store.get_mut(id).value.as_mut_slice()[idx] = v;
                let mut t = Tape::new();
                let l = loss(&model, &mut t);
                t.scalar(l)
            };
            let up = eval(orig + eps);
            let down = eval(orig - eps);
            model.store.get_mut(id).value.as_mut_slice()[idx] = orig;
            analytic.push(grad.as_slice()[idx]);
            numeric.push((up - down) / (2.0 * eps));
        }
    }
    let m = analytic.len();
    relative_error(
        &Matrix::from_vec(m, 1, analytic).unwrap(),
        &Matrix::from_vec(m, 1, numeric).unwrap(),
    )
}

/// Outcome of comparing one implementation against its reference.
pub struct OracleResult {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

fn real(name: &'static str, err: f64) -> OracleResult {
    OracleResult {
        name,
        ok: err <= 1e-8,
        detail: format!("max error {err:e}"),
    }
}

fn exact(name: &'static str, mismatches: usize) -> OracleResult {
    OracleResult {
        name,
        ok: mismatches == 0,
        detail: format!("{mismatches} mismatches"),
    }
}

/// Random labelled graph of at most 200 nodes, sparse enough that some
/// nodes lie beyond one hop of every labelled node.
pub fn random_labeled_graph(seed: u64) -> comgrl::Graph {
    let mut g = rng(seed);
    let n = g.random_range(20..=200);
    let k = g.random_range(2..=5);
    let avg_degree = g.random_range(1.0..4.0);
    let adjacency = random_graph(&mut g, n, avg_degree / n as f64);
    let features = random_matrix(&mut g, n, 6, 1.0);
    let labels: Vec<Option<usize>> = (0..n).map(|_| Some(g.random_range(0..k))).collect();
    let mut train = Vec::new();
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == Some(c)).collect();
        if members.is_empty() {
            continue;
        }
        for _ in 0..2 {
            let i = members[g.random_range(0..members.len())];
            if !train.contains(&i) {
                train.push(i);
            }
        }
    }
    train.sort_unstable();
    let num_classes = labels.iter().flatten().max().unwrap() + 1;
    comgrl::Graph {
        features,
        adjacency,
        labels,
        num_classes,
        split: comgrl::Split {
            train,
            ..Default::default()
        },
    }
}

/// Random pseudo labels: each row puts most mass on one class, with about
/// half of the rows above `threshold`.
pub fn random_pseudo(g: &mut ChaCha8Rng, n: usize, k: usize, threshold: f64) -> comgrl::PseudoLabels {
    let probs = Matrix::from_fn(n, k, |_, _| 0.0);
    let mut probs = probs;
    for i in 0..n {
        let top = g.random_range(0..k);
        let peak = if g.random::<bool>() {
            g.random_range(threshold..1.0)
        } else {
            g.random_range(1.0 / k as f64..threshold)
        };
        for c in 0..k {
            let v = if c == top { peak } else { (1.0 - peak) / (k - 1) as f64 };
            probs.set(i, c, v);
        }
    }
    comgrl::PseudoLabels::from_probs(probs, threshold)
}

fn brute_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let d = (dot(a, a) * dot(b, b)).sqrt();
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}

fn brute_sharpen(f: &[f64], beta: f64) -> Vec<f64> {
    let p: Vec<f64> = f.iter().map(|&v| if v == 0.0 { 0.0 } else { (v.ln() / beta).exp() }).collect();
    let s: f64 = p.iter().sum();
    p.iter().map(|v| v / s).collect()
}

/// Every structural and sampling routine against an independent reference
/// on one random graph.
pub fn oracle_checks(seed: u64) -> Vec<OracleResult> {
    use comgrl::graph::{contrast_coefficients, normalized_adjacency_power, r_hop_neighborhood};
    use comgrl::lgcl::{contrastive_loss, ContrastiveForm};
    use comgrl::pma::{
        build_plan, candidate_set, mix_features, mix_structure, neighborhood_label_distribution,
        nld_similarity, sharpen, LambdaPolicy, PmaConfig,
    };

    let graph = random_labeled_graph(seed);
    let mut g = rng(seed ^ 0x5eed);
    let n = graph.num_nodes();
    let k = graph.num_classes;
    let adj = &graph.adjacency;
    let mut out = Vec::new();

    // normalised adjacency powers and neighbourhoods for every radius in use
    let (mut a_err, mut hood_mismatch) = (0.0f64, 0);
    for r in 1..=4 {
        let fast = normalized_adjacency_power(adj, r).unwrap();
        a_err = a_err.max(fast.max_abs_diff(&dense_normalized_power(adj, r)));
        let hoods = r_hop_neighborhood(adj, r).unwrap();
        hood_mismatch += (0..n).filter(|&i| hoods.sets[i] != within_hops(adj, i, r)).count();
    }
    out.push(real("normalized_adjacency_power", a_err));
    out.push(exact("r_hop_neighborhood", hood_mismatch));

    // contrastive coefficients and loss
    let r = g.random_range(1..=3);
    let dense = dense_normalized_power(adj, r);
    let s_oracle = Matrix::from_fn(n, n, |i, j| {
        if within_hops(adj, i, r).contains(&j) { dense.get(i, j) } else { 0.0 }
    });
    let coeffs = contrast_coefficients(
        &normalized_adjacency_power(adj, r).unwrap(),
        &r_hop_neighborhood(adj, r).unwrap(),
    )
    .unwrap();
    out.push(real("contrast_coefficients", coeffs.matrix.max_abs_diff(&s_oracle)));
    let emb = random_matrix(&mut g, n, 8, 1.0);
    let tau = g.random_range(0.2..2.0);
    let mut con_err = 0.0f64;
    for (form, log_form) in [(ContrastiveForm::Ratio, false), (ContrastiveForm::Log, true)] {
        let mut tape = Tape::new();
        let x = tape.constant(emb.clone());
        let l = contrastive_loss(&mut tape, x, &coeffs, tau, form).unwrap();
        con_err = con_err.max((tape.scalar(l) - contrastive_oracle(&emb, &s_oracle, tau, log_form)).abs());
    }
    out.push(real("contrastive_loss", con_err));

    // candidate set
    let hop = 1;
    let hoods = r_hop_neighborhood(adj, hop).unwrap();
    let labeled = &graph.split.train;
    let fast = candidate_set(&hoods, labeled);
    let dists: Vec<Vec<usize>> = labeled.iter().map(|&i| bfs(adj, i)).collect();
    let brute: Vec<usize> = (0..n)
        .filter(|j| !labeled.contains(j) && dists.iter().all(|d| d[*j] > hop))
        .collect();
    out.push(exact("candidate_set", if fast == brute { 0 } else { 1 }));

    // neighbourhood label distributions
    let threshold = 0.7;
    let pseudo = random_pseudo(&mut g, n, k, threshold);
    let node_label = |j: usize| if labeled.contains(&j) { graph.labels[j].unwrap() } else { pseudo.hard[j] };
    let eff: Vec<usize> = (0..n).map(node_label).collect();
    let all: Vec<usize> = (0..n).collect();
    let nld = neighborhood_label_distribution(&graph.neighbor_lists(), &eff, k, &all);
    let brute_nld = Matrix::from_fn(n, k, |i, c| {
        let deg = (0..n).filter(|&j| adj.get(i, j) != 0.0).count();
        if deg == 0 {
            return 1.0 / k as f64;
        }
        (0..n).filter(|&j| adj.get(i, j) != 0.0 && node_label(j) == c).count() as f64 / deg as f64
    });
    out.push(real("neighborhood_label_distribution", nld.max_abs_diff(&brute_nld)));

    // sharpening
    let beta = g.random_range(0.2..1.0);
    let mut sh_err = 0.0f64;
    let mut sharp = Matrix::zeros(n, k);
    for i in 0..n {
        let s = sharpen(nld.row(i), beta).unwrap();
        for (a, b) in s.iter().zip(brute_sharpen(brute_nld.row(i), beta)) {
            sh_err = sh_err.max((a - b).abs());
        }
        sharp.row_mut(i).copy_from_slice(&s);
    }
    out.push(real("sharpen", sh_err));

    // per-class similarity matrix
    let rows: Vec<usize> = labeled.clone();
    let cols: Vec<usize> = (0..n).filter(|j| !labeled.contains(j)).collect();
    let sim = nld_similarity(&sharp.select_rows(&rows), &sharp.select_rows(&cols)).unwrap();
    let brute_sim = Matrix::from_fn(rows.len(), cols.len(), |a, b| {
        brute_cos(&brute_sharpen(brute_nld.row(rows[a]), beta), &brute_sharpen(brute_nld.row(cols[b]), beta))
    });
    out.push(real("nld_similarity", sim.max_abs_diff(&brute_sim)));

    // pair selection
    let cfg = PmaConfig {
        hop_radius: hop,
        beta,
        threshold,
        lambda: LambdaPolicy::Fixed { value: 0.6 },
    };
    let plan = build_plan(&graph, &hoods, &pseudo, &cfg, &mut g).unwrap();
    let mut expected = Vec::new();
    for c in 0..k {
        let mut best: Option<(usize, usize, f64)> = None;
        for &i in labeled.iter().filter(|&&i| graph.labels[i] == Some(c)) {
            let fi = brute_sharpen(brute_nld.row(i), beta);
            for &j in brute.iter().filter(|&&j| pseudo.hard[j] == c && pseudo.confidence[j] >= threshold) {
                let s = brute_cos(&fi, &brute_sharpen(brute_nld.row(j), beta));
                if best.map_or(true, |(_, _, b)| s > b + 1e-12) {
                    best = Some((i, j, s));
                }
            }
        }
        if let Some(b) = best {
            expected.push(b);
        }
    }
    let same_pairs = plan.pairs.len() == expected.len()
        && plan.pairs.iter().zip(&expected).all(|(p, &(i, j, s))| {
            p.labeled == i && p.candidate == j && (p.similarity - s).abs() <= 1e-8
        });
    out.push(exact("mixup_pairs", if same_pairs { 0 } else { 1 }));

    // mixing
    let x = &graph.features;
    let mixed = mix_features(x, &plan.pairs).unwrap();
    let brute_x = Matrix::from_fn(n, x.cols(), |i, d| match plan.pairs.iter().find(|p| p.labeled == i) {
        Some(p) => p.lambda * x.get(p.labeled, d) + (1.0 - p.lambda) * x.get(p.candidate, d),
        None => x.get(i, d),
    });
    out.push(real("mix_features", mixed.max_abs_diff(&brute_x)));
    let a_mix = mix_structure(adj, &plan.pairs).unwrap();
    let pair_of = |i: usize| plan.pairs.iter().find(|p| p.labeled == i);
    let interp = |r: usize, c: usize| -> f64 {
        // value a working copy holds at (r, c) after all row/column writes
        if let Some(p) = pair_of(c) {
            p.lambda * adj.get(r, c) + (1.0 - p.lambda) * adj.get(r, p.candidate)
        } else if let Some(p) = pair_of(r) {
            p.lambda * adj.get(r, c) + (1.0 - p.lambda) * adj.get(p.candidate, c)
        } else {
            adj.get(r, c)
        }
    };
    let brute_a = Matrix::from_fn(n, n, |r, c| 0.5 * (interp(r, c) + interp(c, r)));
    out.push(real("mix_structure", a_mix.max_abs_diff(&brute_a)));
    out
}
