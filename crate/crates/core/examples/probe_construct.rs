//! Scratch probe: equi-correlated construction diagnostics on the stability
//! DS arm shape (100 x 50, rho = 0.5): s value, Gram identity residuals, and
//! the statistic separation it implies.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uvsplit::linmodel::{gen_design, gen_noise};
use uvsplit::select::knockoff_construct;

fn main() {
    let (n1, p, rho) = (100usize, 50usize, 0.5f64);
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let x = gen_design(n1, p, rho, &mut rng).unwrap();
    let mut xs = x.clone();
    for j in 0..p {
        let norm = xs.column(j).norm();
        xs.column_mut(j).scale_mut(1.0 / norm);
    }
    let sigma = xs.tr_mul(&xs);
    let eig = nalgebra::SymmetricEigen::new(sigma.clone());
    let lmin = eig.eigenvalues.min();
    let s = (2.0 * lmin).min(1.0);
    println!("lambda_min = {lmin:.5}, s_eq = {s:.5}");

    let xt = knockoff_construct(&x).unwrap();
    let g1 = xt.tr_mul(&xt) - &sigma;
    let mut g2 = xs.tr_mul(&xt) - &sigma;
    for j in 0..p {
        g2[(j, j)] += s;
    }
    println!(
        "identity residuals: |Xt'Xt - Sigma| = {:.2e}, |X'Xt - (Sigma - sI)| = {:.2e}",
        g1.amax(),
        g2.amax()
    );

    // Observable separation: (x_j - xt_j)' y for the staircase signal.
    let mut beta = DVector::zeros(p);
    for i in 0..10 {
        beta[i] = (10 - i) as f64 / 10.0;
    }
    let y = &x * &beta + gen_noise(n1, &mut rng);
    let norm3 = x.column(2).norm();
    let d = (xs.column(2) - xt.column(2)).clone_owned();
    println!(
        "beta3 contrast: mean term s*beta3*|x3| = {:.4}, sd term sqrt(2s) = {:.4}, observed d'y = {:.4}",
        s * 0.8 * norm3,
        (2.0 * s).sqrt(),
        d.dot(&y)
    );
}
