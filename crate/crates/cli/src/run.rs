//! Subcommand execution and report writing.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use comgrl::trainer::apply_noise;
use comgrl::{generate_sbm, load_dataset, train, write_dataset, Graph, Variant};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{resolve, resolve_sbm, Cli, Command, NoiseRequest, RunSpec, Source};

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let spec = resolve(&args)?;
            if !spec.noise.is_none() {
                log::warn!("train ignores --lnr/--gnr; use the noise subcommand");
            }
            let base = load_source(&spec.source)?;
            run_variant(&spec, &base, None, "train", &spec.noise.clone_zeroed(), &spec.out)
        }
        Command::Noise(args) => {
            let spec = resolve(&args)?;
            let base = load_source(&spec.source)?;
            run_variant(&spec, &base, None, "noise", &spec.noise, &spec.out)
        }
        Command::Ablate { run, with_mlp } => {
            let spec = resolve(&run)?;
            let base = load_source(&spec.source)?;
            let mut variants = Variant::ABLATIONS.to_vec();
            if with_mlp {
                variants.push(Variant::Mlp);
            }
            for v in variants {
                run_variant(&spec, &base, Some(v), v.name(), &spec.noise, &spec.out.join(v.name()))?;
            }
            Ok(())
        }
        Command::Gen(args) => {
            let sbm = resolve_sbm(&args)?;
            let graph = generate_sbm(&sbm)?;
            write_dataset(&graph, &args.out)?;
            println!(
                "wrote {} nodes, {} edges, {} classes to {}",
                graph.num_nodes(),
                graph.num_edges(),
                graph.num_classes,
                args.out.display()
            );
            Ok(())
        }
    }
}

impl NoiseRequest {
    fn clone_zeroed(&self) -> NoiseRequest {
        NoiseRequest {
            lnr: 0.0,
            gnr: 0.0,
            mode: self.mode,
        }
    }
}

fn load_source(source: &Source) -> Result<Graph> {
    match source {
        Source::Dataset(dir) => load_dataset(dir).with_context(|| format!("loading {}", dir.display())),
        Source::Sbm(spec) => Ok(generate_sbm(spec)?),
    }
}

#[derive(Debug, Serialize)]
struct SeedFailure {
    seed: u64,
    error: String,
}

#[derive(Debug, Serialize)]
struct Aggregate {
    variant: String,
    seeds: Vec<u64>,
    survivors: Vec<u64>,
    failures: Vec<SeedFailure>,
    test_acc: Vec<f64>,
    mean: Option<f64>,
    /// Sample standard deviation; absent with fewer than two values.
    std: Option<f64>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n > 1).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    (Some(mean), std)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run_variant(
    spec: &RunSpec,
    base: &Graph,
    variant: Option<Variant>,
    name: &str,
    noise: &NoiseRequest,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let cfg = match variant {
        Some(v) => v.apply(&spec.config),
        None => spec.config.clone(),
    };
    let results: Vec<(u64, Result<comgrl::TrainOutcome>)> = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<comgrl::TrainOutcome> {
                let (graph, settings) = apply_noise(base, noise.lnr, noise.gnr, noise.mode, seed)?;
                let cfg = comgrl::TrainConfig { seed, ..cfg.clone() };
                Ok(train(&graph, &cfg, name, settings)?)
            };
            (seed, run())
        })
        .collect();

    let mut agg = Aggregate {
        variant: name.to_string(),
        seeds: spec.seeds.clone(),
        survivors: Vec::new(),
        failures: Vec::new(),
        test_acc: Vec::new(),
        mean: None,
        std: None,
    };
    for (seed, result) in results {
        match result {
            Ok(outcome) => {
                let dir = out.join(format!("seed_{seed}"));
                fs::create_dir_all(&dir)?;
                write_json(&dir.join("report.json"), &outcome.report)?;
                if !outcome.plans.is_empty() {
                    write_json(&dir.join("mixup_plan.json"), &outcome.plans)?;
                }
                agg.survivors.push(seed);
                if let Some(acc) = outcome.report.test_acc {
                    agg.test_acc.push(acc);
                }
                log::info!("{name} seed {seed}: test accuracy {:?}", outcome.report.test_acc);
            }
            Err(e) => {
                log::error!("{name} seed {seed} failed: {e:#}");
                agg.failures.push(SeedFailure {
                    seed,
                    error: format!("{e:#}"),
                });
            }
        }
    }
    (agg.mean, agg.std) = mean_std(&agg.test_acc);
    write_json(&out.join("aggregate.json"), &agg)?;
    match (agg.mean, agg.std) {
        (Some(m), Some(s)) => println!("{name}: test accuracy {m:.2} ± {s:.2} over {} seeds", agg.test_acc.len()),
        (Some(m), None) => println!("{name}: test accuracy {m:.2} (1 seed)"),
        _ => println!("{name}: no test accuracy ({} failed seeds)", agg.failures.len()),
    }
    if agg.survivors.is_empty() {
        anyhow::bail!("every seed failed");
    }
    Ok(())
}
