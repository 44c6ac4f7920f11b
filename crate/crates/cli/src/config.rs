//! Command-line flags, the JSON config file and how they combine.
//!
//! Values are resolved in three layers: the named preset (default `cora`),
//! then the config file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use comgrl::{
    AttentionKind, ContrastiveForm, GraphNoiseMode, LambdaPolicy, SbmSpec, TrainConfig,
};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "comgrl", version, about = "Graph node classification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on one dataset for every seed and write per-seed reports plus an aggregate.
    Train(RunArgs),
    /// Train the full model and each ablation variant on shared seeds.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Also train the encoder-plus-classifier baseline.
        #[arg(long)]
        with_mlp: bool,
    },
    /// Inject label and structure noise once per seed, then train.
    Noise(RunArgs),
    /// Sample a block-model graph and write it in the dataset format.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (edges.txt, features.txt, labels.txt, split.txt).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Use a generated block-model graph instead of a dataset directory.
    #[arg(long)]
    pub sbm: bool,
    /// Named hyperparameter preset.
    #[arg(long)]
    pub preset: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub disable_lgcl: bool,
    #[arg(long)]
    pub disable_gmsa: bool,
    #[arg(long)]
    pub disable_pma: bool,
    /// Fraction of training labels to corrupt.
    #[arg(long)]
    pub lnr: Option<f64>,
    /// Number of spurious edges to add, as a fraction of the edge count.
    #[arg(long)]
    pub gnr: Option<f64>,
    #[arg(long, value_parser = parse_noise_mode)]
    pub noise_mode: Option<GraphNoiseMode>,
    #[arg(long)]
    pub refresh_interval: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Use the log form of the contrastive loss.
    #[arg(long)]
    pub log_contrastive: bool,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub total_epochs: Option<usize>,
    /// Verify every mixup plan by brute force and write mixup_plan.json.
    #[arg(long)]
    pub check_plans: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON file with an `sbm` block (other keys are accepted and ignored).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_noise_mode(s: &str) -> Result<GraphNoiseMode, String> {
    match s {
        "additive" => Ok(GraphNoiseMode::Additive),
        "rewire" => Ok(GraphNoiseMode::Rewire),
        _ => Err(format!("unknown noise mode {s:?} (additive or rewire)")),
    }
}

/// Every key the config file may contain.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub dataset: Option<PathBuf>,
    pub sbm: Option<SbmSpec>,
    pub seeds: Option<Vec<u64>>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub hop_radius: Option<usize>,
    pub beta: Option<f64>,
    pub lambda: Option<LambdaPolicy>,
    pub threshold: Option<f64>,
    pub pretrain_epochs: Option<usize>,
    pub total_epochs: Option<usize>,
    pub lr: Option<f64>,
    pub dropout: Option<f64>,
    pub weight_decay: Option<f64>,
    pub heads: Option<usize>,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub refresh_interval: Option<usize>,
    pub contrastive: Option<ContrastiveForm>,
    pub attention: Option<AttentionKind>,
    pub disable_lgcl: Option<bool>,
    pub disable_gmsa: Option<bool>,
    pub disable_pma: Option<bool>,
    pub check_plans: Option<bool>,
    pub lnr: Option<f64>,
    pub gnr: Option<f64>,
    pub noise_mode: Option<GraphNoiseMode>,
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Clone, Debug)]
pub enum Source {
    Dataset(PathBuf),
    Sbm(SbmSpec),
}

#[derive(Clone, Debug)]
pub struct NoiseRequest {
    pub lnr: f64,
    pub gnr: f64,
    pub mode: GraphNoiseMode,
}

impl NoiseRequest {
    pub fn is_none(&self) -> bool {
        self.lnr == 0.0 && self.gnr == 0.0
    }
}

/// Fully resolved run description.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub source: Source,
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub noise: NoiseRequest,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })+
    };
}

pub fn resolve(args: &RunArgs) -> Result<RunSpec> {
    let file = match &args.config {
        Some(p) => FileConfig::read(p)?,
        None => FileConfig::default(),
    };
    let preset = args.preset.clone().or(file.preset.clone()).unwrap_or_else(|| "cora".into());
    let Some(mut cfg) = TrainConfig::preset(&preset) else {
        let known: Vec<_> = TrainConfig::preset_names().collect();
        bail!("unknown preset {preset:?} (known: {})", known.join(", "));
    };
    overlay!(
        cfg, file, alpha, tau, hop_radius, beta, lambda, threshold, pretrain_epochs, total_epochs, lr,
        dropout, weight_decay, heads, layers, hidden, refresh_interval, contrastive, attention,
        check_plans
    );
    let c = &mut cfg.components;
    c.lgcl &= !(file.disable_lgcl.unwrap_or(false) || args.disable_lgcl);
    c.gmsa &= !(file.disable_gmsa.unwrap_or(false) || args.disable_gmsa);
    c.pma &= !(file.disable_pma.unwrap_or(false) || args.disable_pma);
    overlay!(cfg, args, refresh_interval, threshold, pretrain_epochs, total_epochs);
    if args.log_contrastive {
        cfg.contrastive = ContrastiveForm::Log;
    }
    cfg.check_plans |= args.check_plans;
    cfg.validate()?;

    let source = match (args.dataset.clone().or(file.dataset.clone()), args.sbm || file.sbm.is_some()) {
        (Some(_), true) => bail!("give either a dataset directory or a block-model spec, not both"),
        (Some(dir), false) => Source::Dataset(dir),
        (None, true) => Source::Sbm(file.sbm.clone().unwrap_or_default()),
        (None, false) => bail!("no input graph: pass --dataset DIR or --sbm"),
    };

    let seeds = args.seeds.clone().or(file.seeds.clone()).unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        bail!("at least one seed is required");
    }
    let noise = NoiseRequest {
        lnr: args.lnr.or(file.lnr).unwrap_or(0.0),
        gnr: args.gnr.or(file.gnr).unwrap_or(0.0),
        mode: args.noise_mode.or(file.noise_mode).unwrap_or_default(),
    };
    if !(0.0..=1.0).contains(&noise.lnr) || !(noise.gnr >= 0.0) {
        bail!("need 0 <= lnr <= 1 and gnr >= 0");
    }
    Ok(RunSpec {
        source,
        config: cfg,
        seeds,
        out: args.out.clone(),
        noise,
    })
}

pub fn resolve_sbm(args: &GenArgs) -> Result<SbmSpec> {
    let mut spec = match &args.config {
        Some(p) => FileConfig::read(p)?.sbm.unwrap_or_default(),
        None => SbmSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}
