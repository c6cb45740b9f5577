//! Scratch probe: lambda choice and beta_3 hit rate of the knockoff filter
//! on the stability-study DS arm (n1 = 100, p = 50, rho = 0.5, staircase
//! beta), plus hit-rate sensitivity to a fixed penalty.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uvsplit::linmodel::{gen_design, gen_noise};
use uvsplit::select::{knockoff_filter, knockoff_threshold, lasso_cd};
use uvsplit::split::simple_split;

fn standardize_pair(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let y_c = y.add_scalar(-y.mean());
    let mut xs = x.clone();
    for j in 0..xs.ncols() {
        let norm = xs.column(j).norm();
        xs.column_mut(j).scale_mut(1.0 / norm);
    }
    (xs, y_c)
}

fn staircase(p: usize) -> DVector<f64> {
    let mut b = DVector::zeros(p);
    for i in 0..10 {
        b[i] = (10 - i) as f64 / 10.0;
    }
    b
}

fn main() {
    let (n, p, rho, f) = (200usize, 50usize, 0.5f64, 0.5f64);
    let beta = staircase(p);
    let mut rng = ChaCha8Rng::seed_from_u64(7001);
    let datasets = 8;
    let splits = 25;

    let mut lambdas = Vec::new();
    let mut hits_cv = 0u32;
    let mut total = 0u32;
    for _ in 0..datasets {
        let x = gen_design(n, p, rho, &mut rng).unwrap();
        let y = &x * &beta + gen_noise(n, &mut rng);
        for _ in 0..splits {
            let plan = simple_split(n, f, &mut rng).unwrap();
            let idx = &plan.selection_idx;
            let x1 = DMatrix::from_fn(idx.len(), p, |i, j| x[(idx[i], j)]);
            let y1 = DVector::from_fn(idx.len(), |i, _| y[idx[i]]);
            let out = knockoff_filter(&x1, &y1, 0.3, 1, &mut rng).unwrap();
            lambdas.push(out.diagnostics["lambda"][0]);
            if out.s.contains(&2) {
                hits_cv += 1;
            }
            total += 1;
        }
    }
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "cv arm: beta3 hit rate {:.3}, lambda quartiles {:.4} {:.4} {:.4}",
        f64::from(hits_cv) / f64::from(total),
        lambdas[lambdas.len() / 4],
        lambdas[lambdas.len() / 2],
        lambdas[3 * lambdas.len() / 4],
    );

    // Fixed-penalty variants of the same statistic on the same draws.
    for lam_frac in [0.5, 0.2, 0.1, 0.05, 0.02, 0.005, 0.001] {
        let mut rng = ChaCha8Rng::seed_from_u64(7001);
        let mut hits = 0u32;
        let mut total = 0u32;
        for _ in 0..datasets {
            let x = gen_design(n, p, rho, &mut rng).unwrap();
            let y = &x * &beta + gen_noise(n, &mut rng);
            for _ in 0..splits {
                let plan = simple_split(n, f, &mut rng).unwrap();
                let idx = &plan.selection_idx;
                let x1 = DMatrix::from_fn(idx.len(), p, |i, j| x[(idx[i], j)]);
                let y1 = DVector::from_fn(idx.len(), |i, _| y[idx[i]]);
                let (xs, y_c) = standardize_pair(&x1, &y1);
                let xt = uvsplit::select::knockoff_construct(&xs).unwrap();
                let n1 = xs.nrows();
                let mut aug = DMatrix::zeros(n1, 2 * p);
                aug.view_mut((0, 0), (n1, p)).copy_from(&xs);
                aug.view_mut((0, p), (n1, p)).copy_from(&xt);
                let lmax = (0..2 * p)
                    .map(|j| aug.column(j).dot(&y_c).abs() / n1 as f64)
                    .fold(0.0f64, f64::max);
                let fit = lasso_cd(&aug, &y_c, lam_frac * lmax, None).unwrap();
                let w: Vec<f64> = (0..p)
                    .map(|j| fit.coef[j].abs() - fit.coef[j + p].abs())
                    .collect();
                let t = knockoff_threshold(&w, 0.3, 1);
                if w[2] >= t {
                    hits += 1;
                }
                total += 1;
            }
        }
        println!(
            "fixed lambda = {lam_frac:.3} * lmax: beta3 hit rate {:.3}",
            f64::from(hits) / f64::from(total)
        );
    }
}
