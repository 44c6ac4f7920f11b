//! Two-stage training: supervised plus contrastive pre-training on the
//! original graph, then fine-tuning on mixup-augmented inputs that are
//! refreshed from the model's own pseudo labels.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{inject_graph_noise, inject_label_noise, GraphNoiseMode, GraphNoiseOutcome};
use crate::error::{Error, Result};
use crate::gmsa::{cross_entropy_loss, target_matrix, AttentionKind};
use crate::graph::{contrast_from_adjacency, r_hop_neighborhood, ContrastCoefficients, Graph, Neighborhoods};
use crate::lgcl::{contrastive_loss, ContrastiveForm};
use crate::model::{ComGrlModel, Components, ModelShape};
use crate::numerics::{Adam, AdamConfig, Matrix, Mode, Tape, Var};
use crate::pma::{build_plan, verify_plan, LambdaPolicy, PlanDump, PmaConfig, PseudoLabels};

const STREAM_INIT: u64 = 0;
const STREAM_DROPOUT: u64 = 1;
const STREAM_MIXUP: u64 = 2;
/// Stream reserved for noise injection so it never collides with training.
pub const STREAM_NOISE: u64 = 3;

/// Independent, reproducible generator for one purpose of one run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the contrastive term.
    pub alpha: f64,
    pub tau: f64,
    pub hop_radius: usize,
    pub beta: f64,
    pub lambda: LambdaPolicy,
    pub threshold: f64,
    pub pretrain_epochs: usize,
    pub total_epochs: usize,
    pub lr: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    pub heads: usize,
    pub layers: usize,
    pub hidden: usize,
    pub refresh_interval: usize,
    pub contrastive: ContrastiveForm,
    pub attention: AttentionKind,
    pub components: Components,
    /// Re-verify every mixup plan by brute force and keep the dumps.
    pub check_plans: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset("cora").expect("cora preset")
    }
}

/// Per-dataset settings: `(α, τ, r, T_pre, T_total, lr, dropout)`.
const PRESETS: &[(&str, (f64, f64, usize, usize, usize, f64, f64))] = &[
    ("cora", (1.0, 1.8, 4, 300, 500, 5e-4, 0.4)),
    ("citeseer", (0.1, 0.7, 4, 100, 1000, 3e-4, 0.4)),
    ("pubmed", (1.0, 1.0, 4, 300, 1000, 4e-4, 0.4)),
    ("coauthor-cs", (1.0, 1.8, 4, 20, 600, 2e-4, 0.1)),
    ("coauthor-physics", (2.0, 1.0, 4, 300, 1000, 4e-4, 0.1)),
    ("cora-full", (1.0, 2.2, 3, 40, 400, 4e-4, 0.4)),
];

impl TrainConfig {
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn preset(name: &str) -> Option<Self> {
        let &(_, (alpha, tau, hop_radius, pretrain_epochs, total_epochs, lr, dropout)) =
            PRESETS.iter().find(|(n, _)| n.eq_ignore_ascii_case(name))?;
        Some(Self {
            alpha,
            tau,
            hop_radius,
            beta: 0.5,
            lambda: LambdaPolicy::default(),
            threshold: 0.8,
            pretrain_epochs,
            total_epochs,
            lr,
            dropout,
            weight_decay: 0.0,
            heads: 8,
            layers: 2,
            hidden: 128,
            refresh_interval: 1,
            contrastive: ContrastiveForm::default(),
            attention: AttentionKind::default(),
            components: Components::default(),
            check_plans: false,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha must be nonnegative, got {}", self.alpha));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.hop_radius == 0 {
            return bad("hop_radius must be at least 1".into());
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold must lie in [0, 1], got {}", self.threshold));
        }
        if self.pretrain_epochs > self.total_epochs {
            return bad(format!(
                "pretrain_epochs {} exceeds total_epochs {}",
                self.pretrain_epochs, self.total_epochs
            ));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("lr must be positive and weight_decay nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad(format!("hidden {} must be a positive multiple of heads {}", self.hidden, self.heads));
        }
        if self.refresh_interval == 0 {
            return bad("refresh_interval must be at least 1".into());
        }
        match self.lambda {
            LambdaPolicy::Beta { a } if !(a > 0.0) => bad(format!("Beta parameter must be positive, got {a}")),
            LambdaPolicy::Fixed { value } if !(0.0..=1.0).contains(&value) => {
                bad(format!("fixed mixup weight must lie in [0, 1], got {value}"))
            }
            _ => Ok(()),
        }
    }

    fn contrastive_active(&self) -> bool {
        self.components.lgcl && self.alpha > 0.0
    }
}

/// Model variants compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoLgcl,
    NoGmsa,
    NoPma,
    /// Encoder and classifier only, trained on cross-entropy alone.
    Mlp,
}

impl Variant {
    pub const ABLATIONS: [Variant; 4] = [Variant::Full, Variant::NoLgcl, Variant::NoGmsa, Variant::NoPma];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoLgcl => "no-lgcl",
            Variant::NoGmsa => "no-gmsa",
            Variant::NoPma => "no-pma",
            Variant::Mlp => "mlp",
        }
    }

    /// `cfg` with this variant's components switched off.
    pub fn apply(self, cfg: &TrainConfig) -> TrainConfig {
        let mut out = cfg.clone();
        let c = &mut out.components;
        match self {
            Variant::Full => {}
            Variant::NoLgcl => c.lgcl = false,
            Variant::NoGmsa => c.gmsa = false,
            Variant::NoPma => c.pma = false,
            Variant::Mlp => {
                *c = Components {
                    lgcl: true,
                    gmsa: false,
                    pma: false,
                };
                out.alpha = 0.0;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    Finetune,
}

/// Metrics of one epoch. Losses are sums over the nodes of the split;
/// accuracies are percentages measured in evaluation mode on the original
/// inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub stage: Stage,
    pub loss: f64,
    pub ce_loss: f64,
    pub contrastive_loss: Option<f64>,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub mixup_pairs: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSettings {
    pub lnr: f64,
    pub gnr: f64,
    pub flipped_labels: usize,
    pub graph: GraphNoiseOutcome,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MixupStats {
    pub refreshes: usize,
    pub empty_refreshes: usize,
    pub total_pairs: usize,
    /// Every refresh came back empty, so fine-tuning ran without augmentation.
    pub never_applied: bool,
    /// Outcome of the brute-force plan checks, when enabled.
    pub checks_passed: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub variant: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub noise: NoiseSettings,
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose validation accuracy was best (last epoch without a validation split).
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<f64>,
    /// Test accuracy at `best_epoch`; absent without a test split.
    pub test_acc: Option<f64>,
    /// Validation accuracy at the end of pre-training.
    pub pretrain_val_acc: Option<f64>,
    pub mixup: MixupStats,
    pub wall_time_secs: f64,
}

impl ExperimentReport {
    /// The report with timing removed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

/// `L_ce + α L_con`.
pub fn total_loss(tape: &mut Tape, ce: Var, con: Option<Var>, alpha: f64) -> Result<Var> {
    match con {
        Some(c) if alpha != 0.0 => {
            let weighted = tape.scale(c, alpha);
            tape.add(ce, weighted)
        }
        _ => Ok(ce),
    }
}

/// Percentage of `nodes` whose argmax prediction equals their label.
pub fn accuracy(probs: &Matrix, labels: &[Option<usize>], nodes: &[usize], split: &'static str) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptySplit(split));
    }
    let pred = probs.row_argmax();
    let correct = nodes.iter().filter(|&&i| labels[i] == Some(pred[i])).count();
    Ok(100.0 * correct as f64 / nodes.len() as f64)
}

/// Evaluation-mode accuracy of `model` on `nodes`.
pub fn evaluate(model: &ComGrlModel, graph: &Graph, nodes: &[usize]) -> Result<f64> {
    accuracy(&model.predict(&graph.features)?, &graph.labels, nodes, "evaluation")
}

fn summed_ce(probs: &Matrix, labels: &[Option<usize>], nodes: &[usize]) -> f64 {
    nodes
        .iter()
        .filter_map(|&i| labels[i].map(|c| -probs.get(i, c).max(crate::gmsa::PROB_FLOOR).ln()))
        .sum()
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: ExperimentReport,
    pub model: ComGrlModel,
    /// Plan dumps from every refresh, kept when `check_plans` is set.
    pub plans: Vec<PlanDump>,
}

/// State of one training run.
pub struct Trainer<'g> {
    graph: &'g Graph,
    cfg: TrainConfig,
    model: ComGrlModel,
    adam: Adam,
    targets: Matrix,
    base_coeffs: Option<ContrastCoefficients>,
    hoods: Option<Neighborhoods>,
    dropout_rng: ChaCha8Rng,
    mixup_rng: ChaCha8Rng,
    epoch: usize,
    epochs: Vec<EpochMetrics>,
    latest_probs: Matrix,
    mixup: MixupStats,
    plans: Vec<PlanDump>,
}

impl<'g> Trainer<'g> {
    pub fn new(graph: &'g Graph, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        graph.validate()?;
        let shape = ModelShape {
            input_dim: graph.feature_dim(),
            hidden: cfg.hidden,
            heads: cfg.heads,
            layers: cfg.layers,
            classes: graph.num_classes,
            lgcl: cfg.components.lgcl,
            gmsa: cfg.components.gmsa,
            attention: cfg.attention,
        };
        let model = ComGrlModel::new(&shape, &mut stream_rng(cfg.seed, STREAM_INIT))?;
        let adam = Adam::new(
            AdamConfig {
                weight_decay: cfg.weight_decay,
                ..AdamConfig::with_lr(cfg.lr)
            },
            &model.store,
        );
        let train = &graph.split.train;
        let train_labels = train.iter().map(|&i| graph.label(i)).collect::<Result<Vec<_>>>()?;
        let targets = target_matrix(graph.num_nodes(), graph.num_classes, train, &train_labels)?;
        let base_coeffs = if cfg.contrastive_active() {
            Some(contrast_from_adjacency(&graph.adjacency, cfg.hop_radius)?)
        } else {
            None
        };
        let hoods = if cfg.components.pma {
            Some(r_hop_neighborhood(&graph.adjacency, cfg.hop_radius)?)
        } else {
            None
        };
        let latest_probs = model.predict(&graph.features)?;
        Ok(Self {
            graph,
            cfg: cfg.clone(),
            model,
            adam,
            targets,
            base_coeffs,
            hoods,
            dropout_rng: stream_rng(cfg.seed, STREAM_DROPOUT),
            mixup_rng: stream_rng(cfg.seed, STREAM_MIXUP),
            epoch: 0,
            epochs: Vec::new(),
            latest_probs,
            mixup: MixupStats::default(),
            plans: Vec::new(),
        })
    }

    pub fn model(&self) -> &ComGrlModel {
        &self.model
    }

    pub fn epochs(&self) -> &[EpochMetrics] {
        &self.epochs
    }

    /// Runs the pre-training epochs on the original graph and returns the
    /// resulting pseudo labels.
    pub fn pretrain(&mut self) -> Result<PseudoLabels> {
        let coeffs = self.base_coeffs.take();
        let mut result = Ok(());
        while result.is_ok() && self.epoch < self.cfg.pretrain_epochs {
            result = self.step(Stage::Pretrain, None, coeffs.as_ref(), 0);
        }
        self.base_coeffs = coeffs;
        result.map(|_| self.pseudo_labels())
    }

    /// Classifier snapshot on the original inputs.
    pub fn pseudo_labels(&self) -> PseudoLabels {
        PseudoLabels::from_probs(self.latest_probs.clone(), self.cfg.threshold)
    }

    /// Runs the remaining epochs. With mixup enabled the plan is rebuilt
    /// every `refresh_interval` epochs from the latest pseudo labels, the
    /// first time from `pseudo`.
    pub fn finetune(&mut self, pseudo: PseudoLabels) -> Result<()> {
        let mut pseudo = Some(pseudo);
        let mut features: Option<Matrix> = None;
        let mut coeffs = self.base_coeffs.clone();
        let mut pairs = 0;
        let start = self.epoch;
        while self.epoch < self.cfg.total_epochs {
            if self.cfg.components.pma && (self.epoch - start) % self.cfg.refresh_interval == 0 {
                let snapshot = pseudo.take().unwrap_or_else(|| self.pseudo_labels());
                let (f, c, p) = self.refresh(&snapshot)?;
                features = f;
                coeffs = c;
                pairs = p;
            }
            self.step(Stage::Finetune, features.as_ref(), coeffs.as_ref(), pairs)?;
        }
        if self.mixup.refreshes > 0 && self.mixup.empty_refreshes == self.mixup.refreshes {
            self.mixup.never_applied = true;
            log::warn!("every mixup refresh was empty; fine-tuning ran without augmentation");
        }
        Ok(())
    }

    /// Builds a new plan; the returned inputs replace the previous ones as a whole.
    #[allow(clippy::type_complexity)]
    fn refresh(&mut self, pseudo: &PseudoLabels) -> Result<(Option<Matrix>, Option<ContrastCoefficients>, usize)> {
        let pma = PmaConfig {
            hop_radius: self.cfg.hop_radius,
            beta: self.cfg.beta,
            threshold: self.cfg.threshold,
            lambda: self.cfg.lambda,
        };
        let hoods = self.hoods.as_ref().expect("neighbourhoods exist when mixup is on");
        let plan = build_plan(self.graph, hoods, pseudo, &pma, &mut self.mixup_rng)?;
        self.mixup.refreshes += 1;
        self.mixup.total_pairs += plan.pairs.len();
        if plan.is_empty() {
            self.mixup.empty_refreshes += 1;
        }
        if self.cfg.check_plans {
            let verdict = verify_plan(self.graph, &plan, pseudo, &pma);
            let passed = self.mixup.checks_passed.unwrap_or(true) && verdict.ok;
            if !verdict.ok {
                log::error!("mixup plan at epoch {} violates its constraints", self.epoch);
            }
            self.mixup.checks_passed = Some(passed);
            self.plans.push(PlanDump {
                epoch: self.epoch,
                pairs: plan.pairs.clone(),
                num_candidates: plan.num_candidates,
                num_admitted: plan.num_admitted,
                skipped: plan.skipped.clone(),
                verdict: Some(verdict),
            });
        }
        if plan.is_empty() {
            return Ok((None, self.base_coeffs.clone(), 0));
        }
        let coeffs = if self.cfg.contrastive_active() {
            Some(contrast_from_adjacency(&plan.adjacency, self.cfg.hop_radius)?)
        } else {
            None
        };
        let pairs = plan.pairs.len();
        Ok((Some(plan.features), coeffs, pairs))
    }

    fn step(
        &mut self,
        stage: Stage,
        features: Option<&Matrix>,
        coeffs: Option<&ContrastCoefficients>,
        mixup_pairs: usize,
    ) -> Result<()> {
        let graph = self.graph;
        let features = features.unwrap_or(&graph.features);
        let mut tape = Tape::new();
        let mut mode = Mode::Train {
            dropout: self.cfg.dropout,
            rng: &mut self.dropout_rng,
        };
        let out = self.model.forward(&mut tape, features, &mut mode)?;
        let ce = cross_entropy_loss(&mut tape, out.probs, &self.targets)?;
        let con = match coeffs {
            Some(c) if self.cfg.contrastive_active() => Some(contrastive_loss(
                &mut tape,
                out.embedding,
                c,
                self.cfg.tau,
                self.cfg.contrastive,
            )?),
            _ => None,
        };
        let loss = total_loss(&mut tape, ce, con, self.cfg.alpha)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Divergence {
                epoch: self.epoch,
                seed: self.cfg.seed,
                loss: value,
            });
        }
        tape.backward(loss)?;
        self.model.store.zero_grad();
        self.model.store.collect_grads(&tape);
        self.adam.step(&mut self.model.store);

        let probs = self.model.predict(&graph.features)?;
        let split = &graph.split;
        let opt = |nodes: &[usize]| -> Option<f64> {
            (!nodes.is_empty()).then(|| accuracy(&probs, &graph.labels, nodes, "").unwrap_or(0.0))
        };
        self.epochs.push(EpochMetrics {
            epoch: self.epoch,
            stage,
            loss: value,
            ce_loss: tape.scalar(ce),
            contrastive_loss: con.map(|c| tape.scalar(c)),
            train_acc: accuracy(&probs, &graph.labels, &split.train, "train")?,
            val_loss: (!split.val.is_empty()).then(|| summed_ce(&probs, &graph.labels, &split.val)),
            val_acc: opt(&split.val),
            test_acc: opt(&split.test),
            mixup_pairs,
        });
        self.latest_probs = probs;
        self.epoch += 1;
        Ok(())
    }

    /// Assembles the report; `variant` and `noise` are echoed verbatim.
    pub fn finish(self, variant: &str, noise: NoiseSettings, wall_time_secs: f64) -> TrainOutcome {
        let best = if self.graph.split.val.is_empty() {
            self.epochs.last()
        } else {
            let mut best: Option<&EpochMetrics> = None;
            for m in &self.epochs {
                if best.map_or(true, |b| m.val_acc > b.val_acc) {
                    best = Some(m);
                }
            }
            best
        };
        let pretrain_val_acc = self
            .cfg
            .pretrain_epochs
            .checked_sub(1)
            .and_then(|e| self.epochs.get(e))
            .and_then(|m| m.val_acc);
        let report = ExperimentReport {
            variant: variant.to_string(),
            seed: self.cfg.seed,
            config: self.cfg.clone(),
            noise,
            best_epoch: best.map(|m| m.epoch),
            best_val_acc: best.and_then(|m| m.val_acc),
            test_acc: best.and_then(|m| m.test_acc),
            pretrain_val_acc,
            epochs: self.epochs,
            mixup: self.mixup,
            wall_time_secs,
        };
        TrainOutcome {
            report,
            model: self.model,
            plans: self.plans,
        }
    }
}

/// Corrupts training labels and edges with generators derived from `seed`.
/// Zero ratios return the graph unchanged.
pub fn apply_noise(
    graph: &Graph,
    lnr: f64,
    gnr: f64,
    mode: GraphNoiseMode,
    seed: u64,
) -> Result<(Graph, NoiseSettings)> {
    let mut settings = NoiseSettings {
        lnr,
        gnr,
        ..NoiseSettings::default()
    };
    if lnr == 0.0 && gnr == 0.0 {
        return Ok((graph.clone(), settings));
    }
    let mut rng = stream_rng(seed, STREAM_NOISE);
    let (label_seed, graph_seed) = (rng.next_u64(), rng.next_u64());
    let (g, flipped) = inject_label_noise(graph, lnr, label_seed)?;
    let (g, outcome) = inject_graph_noise(&g, gnr, mode, graph_seed)?;
    settings.flipped_labels = flipped;
    settings.graph = outcome;
    Ok((g, settings))
}

/// Pre-trains, fine-tunes and reports in one call.
pub fn train(graph: &Graph, cfg: &TrainConfig, variant: &str, noise: NoiseSettings) -> Result<TrainOutcome> {
    let start = Instant::now();
    let mut trainer = Trainer::new(graph, cfg)?;
    let pseudo = trainer.pretrain()?;
    trainer.finetune(pseudo)?;
    Ok(trainer.finish(variant, noise, start.elapsed().as_secs_f64()))
}
