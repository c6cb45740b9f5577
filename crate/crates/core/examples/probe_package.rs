//! Scratch probe: full reference-package statistic emulation (pair swap,
//! column re-centering/SD-scaling, 500-point grid to lambda_max/2000,
//! lambda.min coefficients from an objective-change-stopped coordinate
//! descent), crossed with the equi and barrier-SDP constructions, on the
//! stability protocol (n1 = 100, p = 50, rho = 0.5, staircase beta).

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uvsplit::linmodel::{estimate_sigma2, gen_design, gen_noise, SigmaMode};
use uvsplit::select::knockoff_threshold;
use uvsplit::split::{randomised_split, simple_split};

fn staircase(p: usize) -> DVector<f64> {
    let mut b = DVector::zeros(p);
    for i in 0..10 {
        b[i] = (10 - i) as f64 / 10.0;
    }
    b
}

fn unit_norm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut xs = x.clone();
    for j in 0..xs.ncols() {
        let norm = xs.column(j).norm();
        xs.column_mut(j).scale_mut(1.0 / norm);
    }
    xs
}

fn solve_sdp_barrier(sigma: &DMatrix<f64>) -> DVector<f64> {
    let p = sigma.ncols();
    let eig = nalgebra::SymmetricEigen::new(sigma.clone());
    let s_eq = (2.0 * eig.eigenvalues.min()).min(1.0);
    let mut s = DVector::from_element(p, 0.5 * s_eq.max(1e-6).min(1.0));
    let mut mu = 1.0f64;
    let a_of = |s: &DVector<f64>| {
        let mut a = sigma * 2.0;
        for j in 0..p {
            a[(j, j)] -= s[j];
        }
        a
    };
    let barrier = |s: &DVector<f64>| -> Option<f64> {
        let chol = a_of(s).cholesky()?;
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let mut v = logdet;
        for j in 0..p {
            if s[j] <= 0.0 || s[j] >= 1.0 {
                return None;
            }
            v += s[j].ln() + (1.0 - s[j]).ln();
        }
        Some(v)
    };
    while mu > 1e-9 {
        for _newton in 0..50 {
            let a = a_of(&s);
            let chol = match a.cholesky() {
                Some(c) => c,
                None => return s,
            };
            let m = chol.inverse();
            let mut grad = DVector::zeros(p);
            let mut hess = DMatrix::zeros(p, p);
            for j in 0..p {
                grad[j] = 1.0 - mu * m[(j, j)] + mu / s[j] - mu / (1.0 - s[j]);
                for k in 0..p {
                    hess[(j, k)] = mu * m[(j, k)] * m[(j, k)];
                }
                hess[(j, j)] += mu * (1.0 / (s[j] * s[j]) + 1.0 / ((1.0 - s[j]) * (1.0 - s[j])));
            }
            let delta = match hess.cholesky() {
                Some(h) => h.solve(&grad),
                None => return s,
            };
            if delta.amax() < 1e-10 {
                break;
            }
            let f0 = s.iter().sum::<f64>() + mu * barrier(&s).unwrap_or(f64::NEG_INFINITY);
            let mut t = 1.0f64;
            let mut improved = false;
            for _ in 0..40 {
                let cand = &s + &delta * t;
                if let Some(b) = barrier(&cand) {
                    let f = cand.iter().sum::<f64>() + mu * b;
                    if f > f0 {
                        s = cand;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        mu /= 5.0;
    }
    s
}

fn construct_with_s(xs: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let n = xs.nrows();
    let p = xs.ncols();
    let sigma = xs.tr_mul(xs);
    let chol = sigma.clone().cholesky().expect("Sigma positive definite");
    let d = DMatrix::from_diagonal(s);
    let sigma_inv_d = chol.solve(&d);
    let mut b = &d * 2.0 - &d * &sigma_inv_d;
    b = (&b + b.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(b);
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let c = DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let mut v: Vec<DVector<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let mut r = xs.column(j).clone_owned();
        for _ in 0..2 {
            for q in &v {
                let c = q.dot(&r);
                r -= q * c;
            }
        }
        v.push(r.normalize());
    }
    let mut u: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut i = 0;
    while u.len() < p && i < n {
        let mut r = DVector::zeros(n);
        r[i] = 1.0;
        for _ in 0..2 {
            for q in v.iter().chain(u.iter()) {
                let c = q.dot(&r);
                r -= q * c;
            }
        }
        let norm = r.norm();
        if norm > 1e-8 {
            u.push(r / norm);
        }
        i += 1;
    }
    assert_eq!(u.len(), p, "complement basis incomplete");
    let u_mat = DMatrix::from_columns(&u);
    xs * (DMatrix::identity(p, p) - sigma_inv_d) + u_mat * c
}

fn loose_cd(
    gram: &DMatrix<f64>,
    xty: &DVector<f64>,
    n: usize,
    lambda: f64,
    warm: &DVector<f64>,
    null_dev: f64,
    thresh: f64,
) -> DVector<f64> {
    let p2 = gram.ncols();
    let mut beta = warm.clone();
    let mut grad = xty - gram * &beta;
    for _pass in 0..2000 {
        let mut max_delta = 0.0f64;
        for j in 0..p2 {
            let old = beta[j];
            let raw = grad[j] / n as f64 + old * gram[(j, j)] / n as f64;
            let thr = raw.abs() - lambda;
            let new = if thr <= 0.0 {
                0.0
            } else {
                thr.copysign(raw) / (gram[(j, j)] / n as f64)
            };
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                grad -= gram.column(j) * delta;
                let change = gram[(j, j)] * delta * delta / n as f64;
                max_delta = max_delta.max(change);
            }
        }
        if max_delta < thresh * null_dev {
            break;
        }
    }
    beta
}

/// cv.glmnet emulation: 10 folds, 500-point grid from lambda_max down to
/// lambda_max/2000 (exponent k/nlambda), lambda.min, full-data coefficients.
fn package_cv(aug: &DMatrix<f64>, y: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
    let n = aug.nrows();
    let p2 = aug.ncols();
    let lmax = (0..p2)
        .map(|j| aug.column(j).dot(y).abs() / n as f64)
        .fold(0.0f64, f64::max);
    let nlambda = 500usize;
    let ratio = 1.0 / 2000.0f64;
    let grid: Vec<f64> = (0..nlambda)
        .map(|k| lmax * ratio.powf(k as f64 / nlambda as f64))
        .collect();
    let null_dev = y.norm_squared() / n as f64;
    let thresh = 1e-7;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut mse = vec![0.0f64; grid.len()];
    for fold in 0..10 {
        let test: Vec<usize> = order.iter().copied().skip(fold).step_by(10).collect();
        let train: Vec<usize> = order
            .iter()
            .copied()
            .filter(|i| !test.contains(i))
            .collect();
        let xtr = DMatrix::from_fn(train.len(), p2, |i, j| aug[(train[i], j)]);
        let ytr = DVector::from_fn(train.len(), |i, _| y[train[i]]);
        let xte = DMatrix::from_fn(test.len(), p2, |i, j| aug[(test[i], j)]);
        let yte = DVector::from_fn(test.len(), |i, _| y[test[i]]);
        let gram = xtr.tr_mul(&xtr);
        let xty = xtr.tr_mul(&ytr);
        let nd = ytr.norm_squared() / train.len() as f64;
        let mut warm = DVector::zeros(p2);
        for (k, &lam) in grid.iter().enumerate() {
            warm = loose_cd(&gram, &xty, train.len(), lam, &warm, nd, thresh);
            let resid = &yte - &xte * &warm;
            mse[k] += resid.norm_squared() / test.len() as f64;
        }
    }
    let best = mse
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
        .unwrap();
    let gram = aug.tr_mul(aug);
    let xty = aug.tr_mul(y);
    let mut warm = DVector::zeros(p2);
    for &lam in grid.iter().take(best + 1) {
        warm = loose_cd(&gram, &xty, n, lam, &warm, null_dev, thresh);
    }
    warm
}

enum Construction {
    Equi,
    SdpBarrier,
}

/// Full package-statistic pipeline; returns true when beta_3 is selected.
fn package_hit(
    x1: &DMatrix<f64>,
    y1: &DVector<f64>,
    construction: &Construction,
    rng: &mut impl Rng,
) -> bool {
    let p = x1.ncols();
    let n = x1.nrows();
    let xs = unit_norm(x1);
    let sigma = xs.tr_mul(&xs);
    let s = match construction {
        Construction::SdpBarrier => solve_sdp_barrier(&sigma),
        Construction::Equi => {
            let eig = nalgebra::SymmetricEigen::new(sigma.clone());
            let s_eq = (2.0 * eig.eigenvalues.min()).min(1.0);
            DVector::from_element(p, s_eq)
        }
    };
    let xt = construct_with_s(&xs, &s);

    // Pair swap.
    let swap: Vec<bool> = (0..p).map(|_| rng.gen::<bool>()).collect();
    let mut aug = DMatrix::zeros(n, 2 * p);
    for j in 0..p {
        let (orig, knock) = if swap[j] {
            (xt.column(j), xs.column(j))
        } else {
            (xs.column(j), xt.column(j))
        };
        aug.column_mut(j).copy_from(&orig);
        aug.column_mut(j + p).copy_from(&knock);
    }

    // scale(): center each column, divide by its sample SD (n-1 denominator).
    for j in 0..2 * p {
        let mut col = aug.column_mut(j);
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n as f64 - 1.0)).sqrt();
        col.scale_mut(1.0 / sd);
    }
    let y_c = y1.add_scalar(-y1.mean());

    let coefs = package_cv(&aug, &y_c, rng);
    let w: Vec<f64> = (0..p)
        .map(|j| {
            let raw = coefs[j].abs() - coefs[j + p].abs();
            if swap[j] {
                -raw
            } else {
                raw
            }
        })
        .collect();
    let t = knockoff_threshold(&w, 0.3, 1);
    w[2] >= t
}

fn main() {
    let (n, p, rho) = (200usize, 50usize, 0.5f64);
    let beta = staircase(p);
    let datasets = 8;
    let splits = 25;

    for (label, construction) in [
        ("sdpb+pkg", Construction::SdpBarrier),
        ("equi+pkg", Construction::Equi),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(7001);
        let (mut hits_ds, mut hits_r, mut total) = (0u32, 0u32, 0u32);
        for _ in 0..datasets {
            let x = gen_design(n, p, rho, &mut rng).unwrap();
            let y = &x * &beta + gen_noise(n, &mut rng);
            let sigma2 = estimate_sigma2(&x, &y, SigmaMode::Auto, &mut rng).unwrap();
            for _ in 0..splits {
                let plan = simple_split(n, 0.5, &mut rng).unwrap();
                let idx = &plan.selection_idx;
                let x1 = DMatrix::from_fn(idx.len(), p, |i, j| x[(idx[i], j)]);
                let y1 = DVector::from_fn(idx.len(), |i, _| y[idx[i]]);
                if package_hit(&x1, &y1, &construction, &mut rng) {
                    hits_ds += 1;
                }
                let uv = randomised_split(&y, 0.5, sigma2.sqrt(), &mut rng).unwrap();
                if package_hit(&x, &uv.u, &construction, &mut rng) {
                    hits_r += 1;
                }
                total += 1;
            }
            eprint!(".");
        }
        eprintln!();
        println!(
            "{label}: beta3 DS {:.3}, R {:.3} over {total} draws",
            f64::from(hits_ds) / f64::from(total),
            f64::from(hits_r) / f64::from(total),
        );
    }
}
