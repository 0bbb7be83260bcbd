//! Command implementations. Every command validates its configuration and
//! reads all inputs before writing anything, so a failed run leaves no
//! partial outputs behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use adl_core::benchmarks::{
    self, gen_identifiability, gen_planted, gen_plausibility, BenchScore, PlantedConfig,
};
use adl_core::distill::distill;
use adl_core::io::{self, save_candidates, save_model, write_adlm, CandidatesSidecar, Dtype};
use adl_core::metrics::{compute_report, stability_protocol, MetricsReport, PairStability};
use adl_core::rng::Rng;
use adl_core::training::train;
use adl_core::{Error, Matrix, Result};

use crate::config::{
    load_config, load_matrix, resolve_dict_kind, BenchKind, GenKind, RunConfig,
};

pub struct CommonArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn out_dir(args: &CommonArgs, config: &RunConfig) -> Result<PathBuf> {
    args.out
        .clone()
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| Error::InvalidInput("no output directory: set --out or out_dir".into()))
}

fn require_data(config: &RunConfig) -> Result<Matrix> {
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config is missing the data path".into()))?;
    if !path.exists() {
        return Err(Error::InvalidInput(format!("input file {path:?} does not exist")));
    }
    load_matrix(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn cmd_train(args: &CommonArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let section = config
        .train
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config is missing the train section".into()))?;
    let out = out_dir(args, &config)?;
    let a = require_data(&config)?;

    let mut train_cfg = section.to_config();
    if let Some(seed) = args.seed {
        train_cfg.seed = seed;
    }
    let dict_kind = resolve_dict_kind(&config, section, &a)?;
    let output = train(&a, &train_cfg, section.variant, dict_kind)?;

    let a_std = output.model.standardizer.apply(&a)?;
    let report = compute_report(&a_std, &output.model, train_cfg.seed)?;

    fs::create_dir_all(&out)?;
    save_model(&out.join("model"), &output.model)?;
    io::write_training_curve_csv(&out.join("training_curve.csv"), &output.curve)?;
    write_json(&out.join("metrics.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct StabilityDocument {
    mean_stability: f64,
    pairs: Vec<PairStability>,
    reports: Vec<MetricsReport>,
}

pub fn cmd_stability(args: &CommonArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let section = config
        .train
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config is missing the train section".into()))?;
    let seeds = &config
        .stability
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config is missing the stability section".into()))?
        .seeds;
    let out = out_dir(args, &config)?;
    let a = require_data(&config)?;

    let train_cfg = section.to_config();
    let dict_kind = resolve_dict_kind(&config, section, &a)?;
    let outcome = stability_protocol(&a, &train_cfg, section.variant, &dict_kind, seeds)?;

    let mut reports = Vec::new();
    for (model, &seed) in outcome.models.iter().zip(seeds) {
        let a_std = model.standardizer.apply(&a)?;
        reports.push(compute_report(&a_std, model, seed)?);
    }
    let document = StabilityDocument {
        mean_stability: outcome.mean_stability,
        pairs: outcome.pairs,
        reports,
    };
    fs::create_dir_all(&out)?;
    write_json(&out.join("stability.json"), &document)?;
    Ok(())
}

pub fn cmd_bench(args: &CommonArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let section = config
        .bench
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config is missing the bench section".into()))?;
    if section.methods.is_empty() {
        return Err(Error::InvalidInput("bench method list is empty".into()));
    }
    let out = out_dir(args, &config)?;

    let mut train_cfg = config
        .train
        .as_ref()
        .map(|t| t.to_config())
        .unwrap_or_default();
    if let Some(seed) = args.seed {
        train_cfg.seed = seed;
    }
    let distill_cfg = config.distill.clone().unwrap_or_default();
    let rasae_delta = section.rasae_delta.unwrap_or(0.1);

    let scores: Vec<BenchScore> = match section.kind {
        BenchKind::Identifiability => {
            let run = benchmarks::IdentifiabilityRun {
                c: section.c,
                d: section.d,
                n: section.n,
                objects_per_image: section.objects_per_image.unwrap_or(4),
                noise_std: section.noise_std,
                data_seed: section.data_seed,
                methods: section.methods.clone(),
                train: train_cfg,
                distill: distill_cfg,
                rasae_delta,
            };
            benchmarks::run_identifiability(&run)?
        }
        BenchKind::Plausibility => {
            let run = benchmarks::PlausibilityRun {
                c: section.c,
                d: section.d,
                n: section.n,
                sparsity: section.sparsity.unwrap_or(4),
                noise_std: section.noise_std,
                data_seed: section.data_seed,
                methods: section.methods.clone(),
                dict_sizes: section
                    .dict_sizes
                    .clone()
                    .unwrap_or_else(|| vec![section.d]),
                train: train_cfg,
                distill: distill_cfg,
                rasae_delta,
            };
            benchmarks::run_plausibility(&run)?
        }
    };

    let mut csv = String::from("method,k,score\n");
    for s in &scores {
        csv.push_str(&format!("{},{},{}\n", s.method, s.k, s.score));
    }
    fs::create_dir_all(&out)?;
    fs::write(out.join("bench.csv"), csv)?;
    write_json(&out.join("bench.json"), &scores)?;
    Ok(())
}

pub fn cmd_distill(args: &CommonArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let mut distill_cfg = config
        .distill
        .clone()
        .ok_or_else(|| Error::InvalidInput("config is missing the distill section".into()))?;
    if let Some(seed) = args.seed {
        distill_cfg.seed = seed;
    }
    let out = out_dir(args, &config)?;
    let data_path = config
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config is missing the data path".into()))?;
    if !data_path.exists() {
        return Err(Error::InvalidInput(format!(
            "input file {data_path:?} does not exist"
        )));
    }
    let raw_bytes = fs::read(data_path)?;
    let a = load_matrix(data_path)?;

    let candidates = distill(&a, &distill_cfg)?;
    let sidecar = CandidatesSidecar {
        n_prime: distill_cfg.n_prime,
        seed: distill_cfg.seed,
        source_digest: io::sha256_hex(&raw_bytes),
    };
    save_candidates(&out, &candidates, &sidecar)?;
    Ok(())
}

pub fn cmd_metrics(args: &CommonArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let model_dir = config
        .model
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config is missing the model path".into()))?;
    let out = out_dir(args, &config)?;
    let a = require_data(&config)?;
    let model = io::load_model(model_dir)?;
    let a_std = model.standardizer.apply(&a)?;
    let report = compute_report(&a_std, &model, args.seed.unwrap_or(0))?;
    fs::create_dir_all(&out)?;
    write_json(&out.join("metrics.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct GenManifest {
    kind: String,
    c: usize,
    d: usize,
    n: usize,
    noise_std: f64,
    seed: u64,
    files: Vec<String>,
}

pub fn cmd_gen(args: &CommonArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let section = config
        .gen
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config is missing the gen section".into()))?;
    let out = out_dir(args, &config)?;
    let seed = args.seed.unwrap_or(section.seed);
    let mut rng = Rng::new(seed);

    let (files, kind_name): (Vec<(String, Matrix)>, &str) = match section.kind {
        GenKind::Planted => {
            let cfg = PlantedConfig {
                num_directions: section.c,
                d: section.d,
                n: section.n,
                support: section.support.ok_or_else(|| {
                    Error::InvalidInput("planted generation needs the support field".into())
                })?,
                noise_std: section.noise_std,
                paired: section.paired,
            };
            let (x, directions) = gen_planted(&cfg, &mut rng)?;
            (
                vec![
                    ("data.adlm".into(), x),
                    ("directions.adlm".into(), directions),
                ],
                "planted",
            )
        }
        GenKind::Identifiability => {
            let dataset = gen_identifiability(
                section.c,
                section.d,
                section.n,
                section.objects_per_image.unwrap_or(4),
                section.noise_std,
                &mut rng,
            )?;
            (
                vec![
                    ("data.adlm".into(), dataset.x),
                    ("labels.adlm".into(), dataset.y),
                    ("prototypes.adlm".into(), dataset.prototypes),
                ],
                "identifiability",
            )
        }
        GenKind::Plausibility => {
            let (x, truth) = gen_plausibility(
                section.c,
                section.d,
                section.n,
                section.support.unwrap_or(4),
                section.noise_std,
                &mut rng,
            )?;
            (
                vec![
                    ("data.adlm".into(), x),
                    ("directions.adlm".into(), truth.directions),
                ],
                "plausibility",
            )
        }
    };

    fs::create_dir_all(&out)?;
    for (name, matrix) in &files {
        write_adlm(&out.join(name), matrix, Dtype::F64)?;
    }
    let manifest = GenManifest {
        kind: kind_name.into(),
        c: section.c,
        d: section.d,
        n: section.n,
        noise_std: section.noise_std,
        seed,
        files: files.iter().map(|(n, _)| n.clone()).collect(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(())
}

pub fn cmd_import_csv(input: &Path, output: &Path) -> Result<()> {
    let m = adl_core::io::read_csv_matrix(input)?;
    write_adlm(output, &m, Dtype::F64)?;
    Ok(())
}

/// Exit code for an error: numerical failures get 3, everything else is a
/// usage or configuration problem and gets 2.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::TrainingDiverged { .. }
        | Error::UndefinedMetric(_)
        | Error::UndefinedClass { .. } => 3,
        _ => 2,
    }
}
