//! Scratch profiling harness for the selector workloads that dominate the
//! simulation budget. Not part of the library.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uvsplit::linmodel::{estimate_sigma2, gen_design, gen_noise, SigmaMode};
use uvsplit::select::{knockoff_filter, stability_select};

fn cell(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gen_design(n, p, 0.0, &mut rng).unwrap();
    let mut beta = DVector::zeros(p);
    for j in 0..10 {
        beta[(j * p) / 10] = if j % 2 == 0 { 0.6 } else { -0.6 };
    }
    let y = &x * &beta + gen_noise(n, &mut rng);
    (x, y)
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    for &(n, p) in &[(200usize, 400usize), (200, 1000)] {
        let (x, y) = cell(n, p, 1);
        let t = Instant::now();
        let s2 = estimate_sigma2(&x, &y, SigmaMode::HighDim, &mut rng).unwrap();
        println!(
            "sigma2 high-dim n={n} p={p}: {:.3}s (value {s2:.3})",
            t.elapsed().as_secs_f64()
        );
    }

    for &(n, p) in &[(200usize, 1000usize), (100, 1000), (200, 400), (100, 400), (200, 200)] {
        let (x, y) = cell(n, p, 2);
        let t = Instant::now();
        let out = stability_select(&x, &y, 3.0, 0.7, 50, &mut rng).unwrap();
        println!(
            "stability n={n} p={p}: {:.3}s (|s|={})",
            t.elapsed().as_secs_f64(),
            out.s.len()
        );
    }

    for &(n, p) in &[(200usize, 30usize), (200, 50), (100, 30), (100, 50), (150, 30)] {
        let (x, y) = cell(n, p, 3);
        let t = Instant::now();
        let out = knockoff_filter(&x, &y, 0.3, 1, &mut rng).unwrap();
        println!(
            "knockoff n={n} p={p}: {:.3}s (|s|={})",
            t.elapsed().as_secs_f64(),
            out.s.len()
        );
    }
}
