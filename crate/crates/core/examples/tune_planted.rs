use adl_core::matrix::Matrix;
use adl_core::rng::Rng;
use adl_core::training::{standardize_fit, train, DictKind, TrainConfig, Variant};

fn planted(n: usize, d: usize, c: usize, support: usize, noise: f64, rng: &mut Rng) -> Matrix {
    // Directions come in +/- pairs so the population mean is zero and
    // standardization only rescales.
    let half = Matrix::from_vec(c / 2, d, (0..c / 2 * d).map(|_| rng.normal(0.0, 1.0)).collect())
        .unwrap()
        .normalize_rows();
    let mut protos = Matrix::zeros(c, d);
    for i in 0..c / 2 {
        protos.row_mut(2 * i).copy_from_slice(half.row(i));
        for (v, &h) in protos.row_mut(2 * i + 1).iter_mut().zip(half.row(i)) {
            *v = -h;
        }
    }
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let sel = rng.distinct_indices(c, support);
        let mut row = vec![0.0; d];
        for &s in &sel {
            let g = rng.uniform_in(0.5, 1.5);
            for (r, &p) in row.iter_mut().zip(protos.row(s)) {
                *r += g * p;
            }
        }
        for r in row.iter_mut() {
            *r += rng.normal(0.0, noise);
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows).unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(40);
    let batch: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(128);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(3e-3);
    let k: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(24);
    let c: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(24);

    let mut rng = Rng::new(2025);
    let a = planted(600, 12, c, 3, 0.02, &mut rng);
    let config = TrainConfig {
        epochs,
        batch_size: batch,
        learning_rate: lr,
        dict_size: Some(k),
        top_k: 3,
        seed: 1,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let out = train(&a, &config, Variant::TopK, DictKind::Free).unwrap();
    let (_, a_std) = standardize_fit(&a).unwrap();
    let recon = out.model.reconstruct(&a_std).unwrap();
    let r2 = adl_core::metrics::r2(&a_std, &recon).unwrap();
    println!(
        "epochs={epochs} batch={batch} lr={lr} k={k} c={c} -> R2={r2:.4}  ({:.2?})",
        t0.elapsed()
    );
}
