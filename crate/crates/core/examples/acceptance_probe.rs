//! Measurement probe for the acceptance-scale experiments (not part of the
//! test suite). Prints stability/R2/accuracy numbers and wall times so the
//! acceptance thresholds can be pinned with margin.

use std::time::Instant;

use adl_core::benchmarks::{gen_planted, Method, PlantedConfig};
use adl_core::distill::{distill_standardized, DistillConfig};
use adl_core::matrix::Matrix;
use adl_core::metrics::{r2, stability};
use adl_core::rng::Rng;
use adl_core::dictionaries::Dictionary;
use adl_core::metrics::ood_score;
use adl_core::training::{
    standardize_fit, train_standardized, DictKind, TrainConfig, Variant,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("stab");
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(15);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let batch: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(256);
    let noise: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let support: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(8);

    match which {
        "stab" => stability_probe(epochs, lr, batch, noise, support),
        "ident" => identifiability_probe(epochs, lr, batch),
        "plaus" => plausibility_probe(epochs, lr, batch),
        other => eprintln!("unknown probe {other}"),
    }
}

fn clustered_directions(
    clusters: usize,
    per_cluster: usize,
    d: usize,
    spread: f64,
    rng: &mut Rng,
) -> Matrix {
    let mut rows = Vec::new();
    for _ in 0..clusters {
        let center: Vec<f64> = (0..d).map(|_| rng.normal(0.0, 1.0)).collect();
        let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
        let center: Vec<f64> = center.iter().map(|v| v / norm).collect();
        for _ in 0..per_cluster {
            let mut dir: Vec<f64> = center
                .iter()
                .map(|&c| c + spread * rng.normal(0.0, 1.0))
                .collect();
            let n2 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in dir.iter_mut() {
                *v /= n2;
            }
            rows.push(dir);
        }
    }
    Matrix::from_rows(&rows).unwrap()
}

fn planted_from_directions(
    directions: &Matrix,
    n: usize,
    max_support: usize,
    noise: f64,
    rng: &mut Rng,
) -> Matrix {
    let jitter: f64 = std::env::var("JITTER")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0.0);
    let c = directions.rows();
    let d = directions.cols();
    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        let support = 1 + rng.index(max_support);
        for s in rng.distinct_indices(c, support) {
            let g = rng.uniform_in(0.5, 1.5);
            if jitter > 0.0 {
                let mut dir: Vec<f64> = directions
                    .row(s)
                    .iter()
                    .map(|&p| p + jitter * rng.normal(0.0, 1.0))
                    .collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (v, dv) in x.row_mut(i).iter_mut().zip(&dir) {
                    *v += g * dv / norm;
                }
            } else {
                for (v, &p) in x.row_mut(i).iter_mut().zip(directions.row(s)) {
                    *v += g * p;
                }
            }
        }
        for v in x.row_mut(i) {
            *v += rng.normal(0.0, noise);
        }
    }
    x
}

fn stability_probe(epochs: usize, lr: f64, batch: usize, noise: f64, support: usize) {
    let t0 = Instant::now();
    let clustered: bool = std::env::var("CLUSTERED").is_ok();
    let spread: f64 = std::env::var("SPREAD").ok().and_then(|v| v.parse().ok()).unwrap_or(0.25);
    let cfg = PlantedConfig {
        num_directions: 96,
        d: 64,
        n: 10_000,
        support,
        noise_std: noise,
        paired: false,
    };
    let varsup: bool = std::env::var("VARSUP").is_ok();
    let a = if clustered {
        let mut rng = Rng::new(7);
        let dirs = clustered_directions(24, 4, 64, spread, &mut rng);
        println!("clustered directions, spread={spread}");
        planted_from_directions(&dirs, 10_000, support, noise, &mut rng)
    } else if varsup {
        let mut rng = Rng::new(7);
        let (_, dirs) = gen_planted(&PlantedConfig { n: 1, ..cfg.clone() }, &mut rng).unwrap();
        println!("variable support 1..={support}");
        planted_from_directions(&dirs, 10_000, support, noise, &mut rng)
    } else {
        gen_planted(&cfg, &mut Rng::new(7)).unwrap().0
    };
    let (standardizer, a_std) = standardize_fit(&a).unwrap();
    println!("data generated in {:.1?}", t0.elapsed());

    let td = Instant::now();
    let candidates = distill_standardized(
        &a_std,
        &DistillConfig {
            n_prime: 512,
            kmeans_iters: 25,
            seed: 0,
        },
    )
    .unwrap();
    println!("distilled 512 centroids in {:.1?}", td.elapsed());

    let train_cfg = TrainConfig {
        epochs,
        batch_size: batch,
        learning_rate: lr,
        dict_size: Some(128),
        top_k: 8,
        ..TrainConfig::default()
    };

    let seeds = [0u64, 1, 2, 3];
    let family_filter = std::env::var("FAMILIES").unwrap_or_default();
    let mut atoms_by_method: Vec<(String, Vec<Matrix>, Vec<f64>)> = Vec::new();
    for (name, variant, kind, delta) in [
        ("topk-free", Variant::TopK, None, 0.0),
        ("asae-d0", Variant::TopK, Some(&candidates), 0.0),
        ("rasae-d0.1", Variant::TopK, Some(&candidates), 0.1),
    ] {
        if !family_filter.is_empty() && !family_filter.contains(name.split('-').next().unwrap()) {
            continue;
        }
        let mut atoms = Vec::new();
        let mut r2s = Vec::new();
        let tm = Instant::now();
        for &seed in &seeds {
            let mut cfg = train_cfg.clone();
            cfg.seed = seed;
            cfg.delta = delta;
            let kind = match kind {
                None => DictKind::Free,
                Some(c) => DictKind::Archetypal {
                    candidates: c.clone(),
                },
            };
            let out =
                train_standardized(&a_std, standardizer.clone(), &cfg, variant, kind).unwrap();
            let recon = out.model.reconstruct(&a_std).unwrap();
            r2s.push(r2(&a_std, &recon).unwrap());
            if seed == 0 {
                if let Dictionary::Archetypal(arch) = &out.model.dictionary {
                    let max_w: Vec<f64> = (0..arch.weights.rows())
                        .map(|i| arch.weights.row(i).iter().cloned().fold(0.0, f64::max))
                        .collect();
                    let mean_max = max_w.iter().sum::<f64>() / max_w.len() as f64;
                    println!(
                        "  [seed 0] mean max W row weight: {mean_max:.3}, ood: {:.3}",
                        ood_score(&out.model.atoms(), &a_std).unwrap()
                    );
                } else {
                    println!(
                        "  [seed 0] ood: {:.3}",
                        ood_score(&out.model.atoms(), &a_std).unwrap()
                    );
                }
            }
            atoms.push(out.model.atoms());
        }
        let mut pair_sum = 0.0;
        let mut pairs = 0;
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                pair_sum += stability(&atoms[i], &atoms[j]).unwrap();
                pairs += 1;
            }
        }
        println!(
            "{name}: stability={:.4} r2(mean)={:.4} r2s={:?} [{:.1?} for 4 models]",
            pair_sum / pairs as f64,
            r2s.iter().sum::<f64>() / r2s.len() as f64,
            r2s.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            tm.elapsed()
        );
        atoms_by_method.push((name.to_string(), atoms, r2s));
    }
    println!("total {:.1?} (epochs={epochs} lr={lr} batch={batch} noise={noise} support={support})", t0.elapsed());
}

fn identifiability_probe(epochs: usize, lr: f64, batch: usize) {
    let t0 = Instant::now();
    let run = adl_core::benchmarks::IdentifiabilityRun {
        c: 12,
        d: 64,
        n: 4000,
        objects_per_image: 4,
        noise_std: 0.05,
        data_seed: 7,
        methods: vec![Method::TopK, Method::ASae],
        train: TrainConfig {
            epochs,
            batch_size: batch,
            learning_rate: lr,
            top_k: 4,
            ..TrainConfig::default()
        },
        distill: DistillConfig {
            n_prime: 512,
            kmeans_iters: 25,
            seed: 0,
        },
        rasae_delta: 0.1,
    };
    let scores = adl_core::benchmarks::run_identifiability(&run).unwrap();
    for s in &scores {
        println!("{}: acc={:.4}", s.method, s.score);
    }
    println!("total {:.1?} (epochs={epochs} lr={lr} batch={batch})", t0.elapsed());
}

fn plausibility_probe(epochs: usize, lr: f64, batch: usize) {
    let t0 = Instant::now();
    let run = adl_core::benchmarks::PlausibilityRun {
        c: 32,
        d: 64,
        n: 4000,
        sparsity: 4,
        noise_std: 0.05,
        data_seed: 7,
        methods: vec![Method::TopK, Method::RaSae],
        dict_sizes: vec![64, 128],
        train: TrainConfig {
            epochs,
            batch_size: batch,
            learning_rate: lr,
            top_k: 4,
            ..TrainConfig::default()
        },
        distill: DistillConfig {
            n_prime: 512,
            kmeans_iters: 25,
            seed: 0,
        },
        rasae_delta: 0.1,
    };
    let scores = adl_core::benchmarks::run_plausibility(&run).unwrap();
    for s in &scores {
        println!("{} k={}: plausibility={:.4}", s.method, s.k, s.score);
    }
    println!("total {:.1?} (epochs={epochs} lr={lr} batch={batch})", t0.elapsed());
}
