//! Variable selection on the selection portion of the data: an
//! l1-penalised least-squares solver (cyclic coordinate descent with
//! cross-validated tuning), the fixed-X knockoff filter in its
//! equi-correlated variant, and stability selection.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linmodel::{take_columns, take_entries, take_rows};

/// Stationarity tolerance guaranteed by every returned [`LassoFit`]:
/// `|X_j'(y - X beta)| / n <= lambda + KKT_TOL`, with equality within
/// `KKT_TOL` on the support.
pub const KKT_TOL: f64 = 1e-7;

/// Coordinate-sweep budget before the solver reports failure.
pub const MAX_SWEEPS: usize = 100_000;

/// Number of points on the penalty grid, log-spaced over [`GRID_SPAN`].
const N_GRID: usize = 100;
/// Ratio of the smallest grid penalty to the largest.
const GRID_SPAN: f64 = 1e-3;

/// Which algorithm produced a [`SelectionOutcome`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorTag {
    Knockoff,
    Stability,
    LassoSupport,
}

/// A selected index set together with the selector's working quantities
/// (named vectors: knockoff statistics and threshold, stability
/// frequencies, tuned penalties).
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    /// Sorted selected column indices.
    pub s: Vec<usize>,
    pub selector_tag: SelectorTag,
    pub diagnostics: BTreeMap<String, Vec<f64>>,
}

/// Solution of the penalised least-squares problem
/// `min (1/2n)||y - X beta||^2 + lambda ||beta||_1`.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub lambda: f64,
    pub coef: DVector<f64>,
    /// Coordinate sweeps spent.
    pub n_iter: usize,
    pub converged: bool,
}

/// Indices with a nonzero coefficient. Coordinate descent produces exact
/// zeros, so no thresholding is applied.
pub fn support(coef: &DVector<f64>) -> Vec<usize> {
    coef.iter()
        .enumerate()
        .filter(|&(_, &c)| c != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Smallest penalty with a guaranteed null solution: `max_j |X_j'y| / n`.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|j| x.column(j).dot(y).abs() / n)
        .fold(0.0, f64::max)
}

fn log_grid(lmax: f64) -> Vec<f64> {
    (0..N_GRID)
        .map(|k| lmax * GRID_SPAN.powf(k as f64 / (N_GRID - 1) as f64))
        .collect()
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// One cyclic pass over `coords` (all columns when `None`); returns the
/// largest gradient-scale coefficient change.
fn cd_sweep(
    x: &DMatrix<f64>,
    r: &mut DVector<f64>,
    beta: &mut DVector<f64>,
    col_sq: &[f64],
    lambda: f64,
    coords: Option<&[usize]>,
) -> f64 {
    let n = x.nrows() as f64;
    let mut max_change = 0.0f64;
    let mut update = |j: usize, r: &mut DVector<f64>, beta: &mut DVector<f64>| {
        let grad = x.column(j).dot(r) / n;
        let z = beta[j] * col_sq[j] + grad;
        let new = soft_threshold(z, lambda) / col_sq[j];
        let delta = new - beta[j];
        if delta != 0.0 {
            r.axpy(-delta, &x.column(j), 1.0);
            beta[j] = new;
            max_change = max_change.max(delta.abs() * col_sq[j]);
        }
    };
    match coords {
        Some(list) => {
            for &j in list {
                update(j, r, beta);
            }
        }
        None => {
            for j in 0..x.ncols() {
                update(j, r, beta);
            }
        }
    }
    max_change
}

/// Try to land `beta` exactly on the minimiser reachable from its current
/// sign pattern: solve the sign-fixed stationarity system
/// `X_A'X_A b = X_A'y - n lambda sign(beta_A)` on the support `A`. When the
/// solution flips a sign, move along the segment toward it only up to the
/// first zero crossing — the sign-fixed objective coincides with the true
/// one on that stretch and decreases monotonically toward its minimiser —
/// zero out the crossing coordinates, and re-solve on the smaller support.
///
/// Returns true when a consistent solve lands (stationarity then holds
/// exactly on the support). Returns false when the support is empty, a Gram
/// factorisation fails, or the step budget runs out; `beta` and `r` are
/// left mutually consistent either way and descent resumes from them.
fn support_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    gram: Option<&DMatrix<f64>>,
    beta: &mut DVector<f64>,
    r: &mut DVector<f64>,
) -> bool {
    let n_lambda = x.nrows() as f64 * lambda;
    let mut a = support(beta);
    let mut moved = false;
    let landed = 'steps: {
        for _ in 0..12 {
            if a.is_empty() {
                break 'steps false;
            }
            let xa = take_columns(x, &a);
            let gram_aa = match gram {
                Some(g) => {
                    DMatrix::from_fn(a.len(), a.len(), |i, k| g[(a[i], a[k])])
                }
                None => xa.tr_mul(&xa),
            };
            let Some(chol) = Cholesky::new(gram_aa) else {
                break 'steps false;
            };
            let mut rhs = xa.tr_mul(y);
            for (k, &j) in a.iter().enumerate() {
                rhs[k] -= n_lambda * beta[j].signum();
            }
            let b = chol.solve(&rhs);
            // Fraction of the segment toward `b` at which each flipping
            // coordinate crosses zero; None where the sign is kept.
            let cross: Vec<Option<f64>> = a
                .iter()
                .enumerate()
                .map(|(k, &j)| {
                    if b[k] == 0.0 || b[k].signum() != beta[j].signum() {
                        Some(beta[j] / (beta[j] - b[k]))
                    } else {
                        None
                    }
                })
                .collect();
            let t_star = cross.iter().flatten().fold(1.0f64, |m, &t| m.min(t));
            moved = true;
            if t_star >= 1.0 {
                for (k, &j) in a.iter().enumerate() {
                    beta[j] = b[k];
                }
                break 'steps true;
            }
            let mut survivors = Vec::with_capacity(a.len());
            for (k, &j) in a.iter().enumerate() {
                if cross[k].is_some_and(|t| t <= t_star * (1.0 + 1e-12)) {
                    beta[j] = 0.0;
                } else {
                    beta[j] += t_star * (b[k] - beta[j]);
                    survivors.push(j);
                }
            }
            a = survivors;
        }
        false
    };
    if moved {
        *r = y - x * &*beta;
    }
    landed
}

/// Stationarity violation of coordinate `j`: slack of `|X_j'r|/n <= lambda`
/// off the support, distance of `X_j'r/n` from `lambda * sign(beta_j)` on it.
fn coordinate_violation(
    x: &DMatrix<f64>,
    r: &DVector<f64>,
    beta: &DVector<f64>,
    lambda: f64,
    j: usize,
) -> f64 {
    let c = x.column(j).dot(r) / x.nrows() as f64;
    if beta[j] > 0.0 {
        (c - lambda).abs()
    } else if beta[j] < 0.0 {
        (c + lambda).abs()
    } else {
        (c.abs() - lambda).max(0.0)
    }
}

fn kkt_violation_over(
    x: &DMatrix<f64>,
    r: &DVector<f64>,
    beta: &DVector<f64>,
    lambda: f64,
    coords: &[usize],
) -> f64 {
    coords
        .iter()
        .map(|&j| coordinate_violation(x, r, beta, lambda, j))
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent for
/// `min (1/2n)||y - X beta||^2 + lambda ||beta||_1`.
///
/// A working set of movable coordinates is grown by stationarity violators
/// and iterated to joint stationarity, with direct sign-fixed solves taking
/// over when plain descent crawls; the fit is returned once the worst
/// violation over all columns is comfortably inside [`KKT_TOL`]. `init`
/// warm starts the coefficients. Deterministic given its inputs.
pub fn lasso_cd(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    init: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    // Converge to a tenth of the advertised tolerance so the guarantee
    // holds with headroom.
    cd_solve(x, y, lambda, init, 0.1 * KKT_TOL)
}

/// Loose stationarity target for throwaway fits inside cross-validation and
/// subsampling paths, where full precision buys nothing: out-of-fold error
/// curves and support orderings are insensitive to coefficient errors far
/// smaller than their own sampling noise.
fn path_target(lambda: f64) -> f64 {
    (1e-3 * lambda).max(0.1 * KKT_TOL)
}

fn cd_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    init: Option<&DVector<f64>>,
    target: f64,
) -> Result<LassoFit> {
    cd_solve_with_gram(x, y, lambda, init, target, None)
}

/// `gram`, when supplied, must equal `X'X`; it spares the direct solves
/// inside [`support_solve`] from recomputing support Gram blocks, which
/// pays off when one design is solved at many penalties.
fn cd_solve_with_gram(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    init: Option<&DVector<f64>>,
    target: f64,
    gram: Option<&DMatrix<f64>>,
) -> Result<LassoFit> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "X has {n} rows but y has {} entries",
            y.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::DomainError(format!(
            "penalty lambda = {lambda} must be finite and nonnegative"
        )));
    }
    let n_f = n as f64;
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / n_f).collect();
    if let Some(j) = col_sq.iter().position(|&c| c <= 0.0) {
        return Err(Error::DomainError(format!("column {j} is identically zero")));
    }
    let mut beta = match init {
        Some(b) if b.len() == p => b.clone(),
        Some(b) => {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} entries for {p} columns",
                b.len()
            )))
        }
        None => DVector::zeros(p),
    };
    let mut r = y - x * &beta;

    // Coordinates outside the working set stay frozen at zero. A coordinate
    // joins the set when it violates stationarity and never leaves, even if
    // its coefficient returns to zero: restricting the sweeps to a fixed,
    // growing set lets the restricted problem be solved to joint
    // stationarity, where alternating full passes with support-only passes
    // can cycle forever (the full pass nudges a violator into the support,
    // the support pass hands its contribution back to correlated columns
    // and ejects it, and the float state repeats exactly).
    let mut in_working = vec![false; p];
    let mut working: Vec<usize> = Vec::with_capacity(p.min(n));
    for j in 0..p {
        if beta[j] != 0.0 {
            in_working[j] = true;
            working.push(j);
        }
    }

    let mut sweeps = 0usize;
    let mut solve_budget = 20usize;
    loop {
        // Sweeps since the working set last changed; drives the direct-solve
        // schedule below.
        let mut round_sweeps = 0usize;
        while !working.is_empty() && sweeps < MAX_SWEEPS {
            let change = cd_sweep(x, &mut r, &mut beta, &col_sq, lambda, Some(&working));
            sweeps += 1;
            round_sweeps += 1;
            if change <= 0.1 * target
                && kkt_violation_over(x, &r, &beta, lambda, &working) <= 0.5 * target
            {
                break;
            }
            // Once the support has had a couple of sweeps to settle, jump
            // toward the exact minimiser for the current sign pattern:
            // near-saturated supports (|support| close to n) make plain
            // coordinate descent crawl, while a few Cholesky solves of the
            // sign-fixed stationarity system land on the answer directly.
            if solve_budget > 0 && round_sweeps.is_power_of_two() && round_sweeps >= 2 {
                solve_budget -= 1;
                if support_solve(x, y, lambda, gram, &mut beta, &mut r) {
                    break;
                }
            }
        }
        // Incremental residual updates accumulate rounding error over many
        // sweeps; refresh before judging stationarity (later passes then
        // also work from the exact residual).
        r = y - x * &beta;
        let mut violation = 0.0f64;
        for j in 0..p {
            let v = coordinate_violation(x, &r, &beta, lambda, j);
            violation = violation.max(v);
            if v > target && !in_working[j] {
                in_working[j] = true;
                working.push(j);
            }
        }
        if violation <= target {
            return Ok(LassoFit {
                lambda,
                coef: beta,
                n_iter: sweeps,
                converged: true,
            });
        }
        if sweeps >= MAX_SWEEPS {
            if violation <= 10.0 * target {
                return Ok(LassoFit {
                    lambda,
                    coef: beta,
                    n_iter: sweeps,
                    converged: true,
                });
            }
            return Err(Error::NoConvergence {
                iterations: sweeps,
                residual: violation,
            });
        }
    }
}

fn sample_without_replacement<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m.min(n.saturating_sub(1)) {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx
}

/// Cross-validated lasso: 100 log-spaced penalties from `lambda_max` down
/// three decades, out-of-fold squared error minimised over the grid, final
/// fit on the full data at the chosen penalty. Fold assignment consumes
/// `rng`; the path is warm-started from one grid point to the next. Ties in
/// the error curve resolve toward the larger (sparser) penalty.
pub fn lasso_cv<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    n_folds: usize,
    rng: &mut R,
) -> Result<(f64, LassoFit)> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "X has {n} rows but y has {} entries",
            y.len()
        )));
    }
    if n_folds < 2 || n_folds > n {
        return Err(Error::DomainError(format!(
            "n_folds = {n_folds} must lie in [2, {n}]"
        )));
    }
    let lmax = lambda_max(x, y);
    if lmax == 0.0 {
        // y is orthogonal to every column; the null fit is optimal at any
        // penalty.
        return Ok((
            0.0,
            LassoFit {
                lambda: 0.0,
                coef: DVector::zeros(p),
                n_iter: 0,
                converged: true,
            },
        ));
    }
    let grid = log_grid(lmax);

    // The full-data Gram, downdated by each fold's test rows, spares the
    // folds their own X'X products. Skipped for very wide designs where the
    // p-by-p matrix would dominate memory.
    let gram_full = (p <= 2000).then(|| x.tr_mul(x));

    let shuffled = sample_without_replacement(n, n, rng);
    let base = n / n_folds;
    let rem = n % n_folds;
    let mut cv_err = vec![0.0f64; grid.len()];
    let mut start = 0usize;
    for f in 0..n_folds {
        let size = base + usize::from(f < rem);
        let test = &shuffled[start..start + size];
        start += size;
        let mut is_test = vec![false; n];
        for &i in test {
            is_test[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
        let x_tr = take_rows(x, &train);
        let y_tr = take_entries(y, &train);
        let gram_tr = gram_full.as_ref().map(|g| {
            let x_te = take_rows(x, test);
            g - x_te.tr_mul(&x_te)
        });
        let mut warm: Option<DVector<f64>> = None;
        for (k, &lam) in grid.iter().enumerate() {
            let fit = cd_solve_with_gram(
                &x_tr,
                &y_tr,
                lam,
                warm.as_ref(),
                path_target(lam),
                gram_tr.as_ref(),
            )?;
            let supp = support(&fit.coef);
            for &i in test {
                let mut pred = 0.0;
                for &j in &supp {
                    pred += fit.coef[j] * x[(i, j)];
                }
                let e = y[i] - pred;
                cv_err[k] += e * e;
            }
            warm = Some(fit.coef);
        }
    }

    let mut best = 0usize;
    for k in 1..grid.len() {
        if cv_err[k] < cv_err[best] {
            best = k;
        }
    }
    let mut warm: Option<DVector<f64>> = None;
    for &lam in &grid[..best] {
        let f = cd_solve_with_gram(x, y, lam, warm.as_ref(), path_target(lam), gram_full.as_ref())?;
        warm = Some(f.coef);
    }
    let fit = cd_solve_with_gram(x, y, grid[best], warm.as_ref(), 0.1 * KKT_TOL, gram_full.as_ref())?;
    Ok((grid[best], fit))
}

/// Centers `y` and rescales every column of `X` to unit Euclidean norm.
fn standardize(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows but y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    let y_c = y.add_scalar(-y.mean());
    let mut xs = x.clone();
    for j in 0..xs.ncols() {
        let norm = xs.column(j).norm();
        if norm <= 0.0 {
            return Err(Error::DomainError(format!("column {j} is identically zero")));
        }
        xs.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok((xs, y_c))
}

/// Orthonormal `n x want` basis of directions orthogonal to the columns of
/// `xs`, built deterministically by twice-reorthogonalised Gram-Schmidt over
/// the canonical basis vectors.
fn orthonormal_complement(xs: &DMatrix<f64>, want: usize) -> Result<DMatrix<f64>> {
    let n = xs.nrows();
    let q1 = xs.clone().qr().q();
    let q1t = q1.transpose();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(want);
    for i in 0..n {
        if cols.len() == want {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for _ in 0..2 {
            let proj = &q1 * (&q1t * &v);
            v -= proj;
            for u in &cols {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    if cols.len() < want {
        return Err(Error::RankDeficient(format!(
            "found only {} of {want} directions orthogonal to the design",
            cols.len()
        )));
    }
    let mut out = DMatrix::zeros(n, want);
    for (k, u) in cols.iter().enumerate() {
        out.set_column(k, u);
    }
    Ok(out)
}

/// Equi-correlated fixed-X knockoff copy.
///
/// Columns are normalized to unit norm internally; with `Sigma = X'X` of the
/// normalized design, the returned matrix satisfies `Xt'Xt = Sigma` and
/// `X'Xt = Sigma - s*I` with `s = min(2 lambda_min(Sigma), 1)`, both to high
/// accuracy. Deterministic given `X`.
pub fn knockoff_construct(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let p = x.ncols();
    if p == 0 {
        return Err(Error::DomainError("design has no columns".into()));
    }
    if n < 2 * p {
        return Err(Error::DomainError(format!(
            "knockoff construction needs n >= 2p, got n = {n}, p = {p}"
        )));
    }
    let mut xs = x.clone();
    for j in 0..p {
        let norm = xs.column(j).norm();
        if norm <= 0.0 {
            return Err(Error::DomainError(format!("column {j} is identically zero")));
        }
        xs.column_mut(j).scale_mut(1.0 / norm);
    }
    let sigma = xs.tr_mul(&xs);
    let eig = SymmetricEigen::new(sigma);
    let lmin = eig.eigenvalues.min();
    if lmin <= 1e-10 {
        return Err(Error::RankDeficient(format!(
            "smallest Gram eigenvalue {lmin:.3e} is not positive"
        )));
    }
    let s = (2.0 * lmin).min(1.0);
    let q = &eig.eigenvectors;
    // X (I - s Sigma^{-1}): shrink along each eigenvector by 1 - s/lambda.
    let m = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 - s / l)) * q.transpose();
    // C'C = 2sI - s^2 Sigma^{-1}; the diagonal is clamped at zero because the
    // equi-correlated choice puts the smallest eigenvalue exactly on the
    // positive-semidefinite boundary.
    let c = DMatrix::from_diagonal(
        &eig.eigenvalues
            .map(|l| (2.0 * s - s * s / l).max(0.0).sqrt()),
    ) * q.transpose();
    let ut = orthonormal_complement(&xs, p)?;
    Ok(&xs * m + ut * c)
}

/// Smallest `t` among the positive values of `|W|` at which the estimated
/// false-discovery proportion `(offset + #{W <= -t}) / max(1, #{W >= t})`
/// drops to `q`; infinity when no candidate qualifies.
pub fn knockoff_threshold(w: &[f64], q: f64, offset: usize) -> f64 {
    let mut candidates: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("W statistics are finite"));
    candidates.dedup();
    for t in candidates {
        let neg = w.iter().filter(|&&v| v <= -t).count();
        let pos = w.iter().filter(|&&v| v >= t).count();
        if (offset + neg) as f64 / pos.max(1) as f64 <= q {
            return t;
        }
    }
    f64::INFINITY
}

/// Fixed-X knockoff filter with the lasso coefficient-difference statistic
/// `W_j = |b_j| - |b_{j+p}|` at the cross-validated penalty on the augmented
/// design. `offset = 1` controls the false discovery rate at `q`; `offset =
/// 0` controls the modified version. `rng` drives only the fold assignment.
pub fn knockoff_filter<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    q: f64,
    offset: usize,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::DomainError(format!(
            "target rate q = {q} outside (0, 1)"
        )));
    }
    if offset > 1 {
        return Err(Error::DomainError(format!("offset {offset} must be 0 or 1")));
    }
    let n = x.nrows();
    let p = x.ncols();
    let (xs, y_c) = standardize(x, y)?;
    let xt = knockoff_construct(&xs)?;
    let mut aug = DMatrix::zeros(n, 2 * p);
    aug.view_mut((0, 0), (n, p)).copy_from(&xs);
    aug.view_mut((0, p), (n, p)).copy_from(&xt);
    let (lambda_hat, fit) = lasso_cv(&aug, &y_c, 10.min(n), rng)?;
    let w: Vec<f64> = (0..p)
        .map(|j| fit.coef[j].abs() - fit.coef[j + p].abs())
        .collect();
    let threshold = knockoff_threshold(&w, q, offset);
    let s: Vec<usize> = (0..p).filter(|&j| w[j] >= threshold).collect();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("W".to_string(), w);
    diagnostics.insert("threshold".to_string(), vec![threshold]);
    diagnostics.insert("lambda".to_string(), vec![lambda_hat]);
    Ok(SelectionOutcome {
        s,
        selector_tag: SelectorTag::Knockoff,
        diagnostics,
    })
}

/// Per-subsample selection size from the expected-false-positives bound:
/// `q = floor(sqrt(pfer * (2 cutoff - 1) * p))`.
pub fn stability_q(p: usize, pfer: f64, cutoff: f64) -> Result<usize> {
    if !(cutoff > 0.5 && cutoff < 1.0) {
        return Err(Error::DomainError(format!(
            "cutoff {cutoff} outside (0.5, 1)"
        )));
    }
    if !(pfer > 0.0) {
        return Err(Error::DomainError(format!("pfer {pfer} must be positive")));
    }
    let q = (pfer * (2.0 * cutoff - 1.0) * p as f64).sqrt().floor() as usize;
    if q < 1 {
        return Err(Error::DomainError(format!(
            "bound gives an empty per-subsample selection (pfer = {pfer}, cutoff = {cutoff}, p = {p})"
        )));
    }
    Ok(q.min(p))
}

/// First `q` support entrants along the penalty grid, walked from the null
/// end with warm starts. When one grid step brings in more variables than
/// the remaining budget, the step's entrants are ranked by coefficient
/// magnitude (ties toward the lower index).
fn path_entrants(x: &DMatrix<f64>, y: &DVector<f64>, q: usize) -> Result<Vec<usize>> {
    let p = x.ncols();
    let lmax = lambda_max(x, y);
    if lmax == 0.0 {
        return Ok(Vec::new());
    }
    let grid = log_grid(lmax);
    let mut beta = DVector::zeros(p);
    let mut seen = vec![false; p];
    let mut entered: Vec<usize> = Vec::with_capacity(q);
    for &lam in &grid {
        let fit = cd_solve(x, y, lam, Some(&beta), path_target(lam))?;
        beta = fit.coef;
        let mut new: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0 && !seen[j]).collect();
        if entered.len() + new.len() >= q {
            new.sort_by(|&a, &b| {
                beta[b]
                    .abs()
                    .partial_cmp(&beta[a].abs())
                    .expect("coefficients are finite")
                    .then(a.cmp(&b))
            });
            for j in new.into_iter().take(q - entered.len()) {
                seen[j] = true;
                entered.push(j);
            }
            break;
        }
        for j in new {
            seen[j] = true;
            entered.push(j);
        }
    }
    Ok(entered)
}

/// Fraction of `b` half-subsamples on which each variable is among the first
/// `q_entrants` to enter the lasso path. Operates on the data as given.
pub fn stability_frequencies<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    q_entrants: usize,
    b: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "X has {n} rows but y has {} entries",
            y.len()
        )));
    }
    if n < 2 {
        return Err(Error::DomainError("need at least 2 observations".into()));
    }
    if q_entrants < 1 || q_entrants > p {
        return Err(Error::DomainError(format!(
            "q_entrants = {q_entrants} must lie in [1, {p}]"
        )));
    }
    if b < 1 {
        return Err(Error::DomainError("need at least one subsample".into()));
    }
    let m = n / 2;
    let mut counts = vec![0usize; p];
    for _ in 0..b {
        let sub = sample_without_replacement(n, m, rng);
        let x_s = take_rows(x, &sub);
        let y_s = take_entries(y, &sub);
        for j in path_entrants(&x_s, &y_s, q_entrants)? {
            counts[j] += 1;
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / b as f64).collect())
}

/// Stability selection: `b` subsamples of size `n/2` without replacement,
/// first-entrants selection frequency per variable, and the cutoff rule
/// `s = {j : freq_j >= cutoff}` with the per-subsample size tied to the
/// expected number of false discoveries `pfer`.
pub fn stability_select<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    pfer: f64,
    cutoff: f64,
    b: usize,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    if b < 10 {
        return Err(Error::DomainError(format!(
            "b = {b} subsamples is too few to estimate frequencies (need >= 10)"
        )));
    }
    let p = x.ncols();
    let q = stability_q(p, pfer, cutoff)?;
    let (xs, y_c) = standardize(x, y)?;
    let freq = stability_frequencies(&xs, &y_c, q, b, rng)?;
    let s: Vec<usize> = (0..p).filter(|&j| freq[j] >= cutoff - 1e-12).collect();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("freq".to_string(), freq);
    diagnostics.insert("q".to_string(), vec![q as f64]);
    diagnostics.insert("cutoff".to_string(), vec![cutoff]);
    Ok(SelectionOutcome {
        s,
        selector_tag: SelectorTag::Stability,
        diagnostics,
    })
}

/// Wraps the support of a penalised fit as a selection outcome.
pub fn lasso_support_outcome(fit: &LassoFit) -> SelectionOutcome {
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("lambda".to_string(), vec![fit.lambda]);
    SelectionOutcome {
        s: support(&fit.coef),
        selector_tag: SelectorTag::LassoSupport,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::{gen_design, gen_noise, ols_fit};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn response(
        x: &DMatrix<f64>,
        beta: &[f64],
        sigma: f64,
        r: &mut ChaCha8Rng,
    ) -> DVector<f64> {
        let b = DVector::from_column_slice(beta);
        x * b + sigma * gen_noise(x.nrows(), r)
    }

    #[test]
    fn lambda_zero_matches_ols() {
        let mut r = rng(1);
        let x = gen_design(50, 5, 0.3, &mut r).unwrap();
        let y = response(&x, &[1.0, -2.0, 0.5, 0.0, 3.0], 1.0, &mut r);
        let fit = lasso_cd(&x, &y, 0.0, None).unwrap();
        let ols = ols_fit(&x, &y).unwrap();
        assert!((&fit.coef - &ols.coef).amax() < 1e-6);
    }

    #[test]
    fn lambda_at_or_above_max_gives_null_fit() {
        let mut r = rng(2);
        let x = gen_design(40, 6, 0.0, &mut r).unwrap();
        let y = response(&x, &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0], 1.0, &mut r);
        let lmax = lambda_max(&x, &y);
        for lam in [lmax, 1.01 * lmax, 10.0 * lmax] {
            let fit = lasso_cd(&x, &y, lam, None).unwrap();
            assert!(fit.coef.iter().all(|&c| c == 0.0), "lambda = {lam}");
        }
    }

    #[test]
    fn soft_threshold_oracle_on_orthonormal_design() {
        // X'X = n I, so each coordinate solves independently:
        // coef_j = soft(X_j'y / n, lambda).
        let mut r = rng(3);
        let n = 64;
        let p = 8;
        let raw = gen_design(n, p, 0.0, &mut r).unwrap();
        let x = raw.qr().q() * (n as f64).sqrt();
        let gram = x.tr_mul(&x);
        assert!((&gram - DMatrix::from_diagonal_element(p, p, n as f64)).amax() < 1e-8);
        let y = response(&x, &[0.8, -0.5, 0.3, 0.0, 0.0, 0.1, -0.05, 0.0], 1.0, &mut r);
        let lmax = lambda_max(&x, &y);
        for factor in [0.05, 0.2, 0.5, 0.9] {
            let lam = factor * lmax;
            let fit = lasso_cd(&x, &y, lam, None).unwrap();
            for j in 0..p {
                let want = soft_threshold(x.column(j).dot(&y) / n as f64, lam);
                assert!(
                    (fit.coef[j] - want).abs() < 1e-6,
                    "j = {j}, factor = {factor}"
                );
            }
        }
    }

    #[test]
    fn kkt_conditions_hold_on_random_instances() {
        let mut r = rng(4);
        for rep in 0..20 {
            let x = gen_design(60, 20, 0.3, &mut r).unwrap();
            let mut beta = vec![0.0; 20];
            beta[0] = 1.5;
            beta[3] = -1.0;
            beta[7] = 0.5;
            let y = response(&x, &beta, 1.0, &mut r);
            let lam = 0.3 * lambda_max(&x, &y);
            let fit = lasso_cd(&x, &y, lam, None).unwrap();
            let resid = &y - &x * &fit.coef;
            for j in 0..20 {
                let c = x.column(j).dot(&resid) / 60.0;
                if fit.coef[j] != 0.0 {
                    assert!(
                        (c - lam * fit.coef[j].signum()).abs() <= KKT_TOL,
                        "rep {rep}: support coordinate {j} off stationarity"
                    );
                } else {
                    assert!(
                        c.abs() <= lam + KKT_TOL,
                        "rep {rep}: null coordinate {j} violates the bound"
                    );
                }
            }
        }
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let mut r = rng(5);
        let x = gen_design(80, 10, 0.5, &mut r).unwrap();
        let y = response(&x, &[2.0, -1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0, &mut r);
        let lam = 0.1 * lambda_max(&x, &y);
        let cold = lasso_cd(&x, &y, lam, None).unwrap();
        let other = lasso_cd(&x, &y, 2.0 * lam, None).unwrap();
        let warm = lasso_cd(&x, &y, lam, Some(&other.coef)).unwrap();
        assert!((&cold.coef - &warm.coef).amax() < 1e-6);
    }

    #[test]
    fn cv_finds_signal_and_is_deterministic() {
        let mut r = rng(6);
        let x = gen_design(100, 10, 0.0, &mut r).unwrap();
        let mut beta = vec![0.0; 10];
        beta[0] = 5.0;
        let y = response(&x, &beta, 1.0, &mut r);
        let (l1, f1) = lasso_cv(&x, &y, 10, &mut rng(42)).unwrap();
        let (l2, f2) = lasso_cv(&x, &y, 10, &mut rng(42)).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(f1.coef, f2.coef);
        assert!(f1.coef[0] != 0.0, "strong signal missed");
        assert!(l1 > 0.0 && l1 <= lambda_max(&x, &y) * (1.0 + 1e-12));
    }

    #[test]
    fn cv_rejects_bad_fold_counts() {
        let mut r = rng(7);
        let x = gen_design(20, 3, 0.0, &mut r).unwrap();
        let y = response(&x, &[1.0, 0.0, 0.0], 1.0, &mut r);
        assert!(lasso_cv(&x, &y, 1, &mut r).is_err());
        assert!(lasso_cv(&x, &y, 21, &mut r).is_err());
    }

    #[test]
    fn knockoff_orthonormal_design() {
        let mut r = rng(8);
        let q = gen_design(40, 10, 0.0, &mut r).unwrap().qr().q();
        let xt = knockoff_construct(&q).unwrap();
        // Sigma = I gives s = 1: knockoffs orthogonal to the original design
        // and themselves orthonormal.
        assert!((q.tr_mul(&xt)).amax() < 1e-8);
        assert!((xt.tr_mul(&xt) - DMatrix::identity(10, 10)).amax() < 1e-8);
    }

    #[test]
    fn knockoff_gram_identities_on_correlated_design() {
        let mut r = rng(9);
        let x = gen_design(200, 30, 0.5, &mut r).unwrap();
        let mut xs = x.clone();
        for j in 0..30 {
            let norm = xs.column(j).norm();
            xs.column_mut(j).scale_mut(1.0 / norm);
        }
        let sigma = xs.tr_mul(&xs);
        let lmin = SymmetricEigen::new(sigma.clone()).eigenvalues.min();
        let s = (2.0 * lmin).min(1.0);
        let xt = knockoff_construct(&x).unwrap();
        assert!((xt.tr_mul(&xt) - &sigma).amax() < 1e-8);
        let mut shifted = sigma.clone();
        for j in 0..30 {
            shifted[(j, j)] -= s;
        }
        assert!((xs.tr_mul(&xt) - shifted).amax() < 1e-8);
    }

    #[test]
    fn knockoff_rejects_bad_designs() {
        let mut r = rng(10);
        let x = gen_design(40, 30, 0.0, &mut r).unwrap();
        assert!(matches!(
            knockoff_construct(&x),
            Err(Error::DomainError(_))
        ));
        let mut dup = gen_design(100, 4, 0.0, &mut r).unwrap();
        let c0 = dup.column(0).clone_owned();
        dup.set_column(1, &c0);
        assert!(matches!(
            knockoff_construct(&dup),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn knockoff_threshold_hand_example() {
        let w = [3.0, 2.0, 1.0, -1.0];
        assert_eq!(knockoff_threshold(&w, 0.5, 0), 1.0);
        assert_eq!(knockoff_threshold(&w, 0.5, 1), 2.0);
        assert_eq!(knockoff_threshold(&w, 0.01, 1), f64::INFINITY);
        assert_eq!(knockoff_threshold(&[0.0, 0.0], 0.5, 0), f64::INFINITY);
    }

    #[test]
    fn knockoff_filter_recovers_strong_signals() {
        let mut r = rng(11);
        let x = gen_design(200, 20, 0.0, &mut r).unwrap();
        let mut beta = vec![0.0; 20];
        for b in beta.iter_mut().take(5) {
            *b = 2.0;
        }
        let y = response(&x, &beta, 1.0, &mut r);
        let out = knockoff_filter(&x, &y, 0.3, 1, &mut rng(100)).unwrap();
        assert_eq!(out.selector_tag, SelectorTag::Knockoff);
        let hits = out.s.iter().filter(|&&j| j < 5).count();
        assert!(hits >= 3, "selected {:?}", out.s);
        let w = &out.diagnostics["W"];
        let t = out.diagnostics["threshold"][0];
        let from_diag: Vec<usize> = (0..20).filter(|&j| w[j] >= t).collect();
        assert_eq!(out.s, from_diag);
    }

    #[test]
    fn knockoff_filter_is_sign_symmetric_in_y() {
        let mut r = rng(12);
        let x = gen_design(120, 10, 0.3, &mut r).unwrap();
        let mut beta = vec![0.0; 10];
        beta[2] = 1.5;
        let y = response(&x, &beta, 1.0, &mut r);
        let a = knockoff_filter(&x, &y, 0.3, 1, &mut rng(7)).unwrap();
        let b = knockoff_filter(&x, &(-&y), 0.3, 1, &mut rng(7)).unwrap();
        assert_eq!(a.s, b.s);
    }

    #[test]
    fn stability_q_formula() {
        assert_eq!(stability_q(400, 3.0, 0.7).unwrap(), 21);
        assert_eq!(stability_q(200, 3.0, 0.7).unwrap(), 15);
        assert_eq!(stability_q(1000, 3.0, 0.7).unwrap(), 34);
        assert!(stability_q(200, 3.0, 0.5).is_err());
        assert!(stability_q(200, 3.0, 1.0).is_err());
        assert!(stability_q(200, 0.0, 0.7).is_err());
        assert!(stability_q(1, 0.1, 0.51).is_err());
    }

    #[test]
    fn stability_frequencies_monotone_in_entrant_budget() {
        let mut r = rng(13);
        let x = gen_design(80, 20, 0.0, &mut r).unwrap();
        let mut beta = vec![0.0; 20];
        beta[0] = 3.0;
        beta[1] = 2.0;
        beta[2] = 1.5;
        let y = response(&x, &beta, 1.0, &mut r);
        let f3 = stability_frequencies(&x, &y, 3, 20, &mut rng(55)).unwrap();
        let f6 = stability_frequencies(&x, &y, 6, 20, &mut rng(55)).unwrap();
        for j in 0..20 {
            assert!(f6[j] >= f3[j] - 1e-15, "frequency shrank at {j}");
        }
    }

    #[test]
    fn stability_select_consistent_with_frequencies() {
        let mut r = rng(14);
        let x = gen_design(100, 20, 0.0, &mut r).unwrap();
        let mut beta = vec![0.0; 20];
        beta[0] = 3.0;
        beta[1] = 3.0;
        beta[2] = 3.0;
        let y = response(&x, &beta, 1.0, &mut r);
        let out = stability_select(&x, &y, 3.0, 0.7, 20, &mut rng(99)).unwrap();
        assert_eq!(out.selector_tag, SelectorTag::Stability);
        let freq = &out.diagnostics["freq"];
        let from_diag: Vec<usize> = (0..20).filter(|&j| freq[j] >= 0.7 - 1e-12).collect();
        assert_eq!(out.s, from_diag);
        for j in 0..3 {
            assert!(out.s.contains(&j), "strong signal {j} missed: {:?}", out.s);
        }
    }

    #[test]
    fn stability_select_rejects_bad_parameters() {
        let mut r = rng(15);
        let x = gen_design(40, 10, 0.0, &mut r).unwrap();
        let y = response(&x, &[1.0; 10], 1.0, &mut r);
        assert!(stability_select(&x, &y, 3.0, 0.5, 20, &mut r).is_err());
        assert!(stability_select(&x, &y, -1.0, 0.7, 20, &mut r).is_err());
        assert!(stability_select(&x, &y, 3.0, 0.7, 5, &mut r).is_err());
    }

    #[test]
    fn support_and_outcome_helpers() {
        let coef = DVector::from_column_slice(&[0.0, 1.5, 0.0, -0.2]);
        assert_eq!(support(&coef), vec![1, 3]);
        let fit = LassoFit {
            lambda: 0.3,
            coef,
            n_iter: 5,
            converged: true,
        };
        let out = lasso_support_outcome(&fit);
        assert_eq!(out.s, vec![1, 3]);
        assert_eq!(out.selector_tag, SelectorTag::LassoSupport);
        assert_eq!(out.diagnostics["lambda"], vec![0.3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn kkt_property(seed in 0u64..10_000, frac in 0.02f64..0.95) {
            let mut r = rng(seed);
            let n = 30 + (seed % 30) as usize;
            let p = 3 + (seed % 6) as usize;
            let x = gen_design(n, p, 0.3, &mut r).unwrap();
            let beta = DVector::from_fn(p, |j, _| if j % 2 == 0 { 1.0 } else { 0.0 });
            let y = &x * beta + gen_noise(n, &mut r);
            let lam = frac * lambda_max(&x, &y);
            let fit = lasso_cd(&x, &y, lam, None).unwrap();
            let resid = &y - &x * &fit.coef;
            for j in 0..p {
                let c = x.column(j).dot(&resid) / n as f64;
                if fit.coef[j] != 0.0 {
                    prop_assert!((c - lam * fit.coef[j].signum()).abs() <= KKT_TOL);
                } else {
                    prop_assert!(c.abs() <= lam + KKT_TOL);
                }
            }
        }

        #[test]
        fn uv_agnostic_threshold_never_exceeds_candidates(
            ws in proptest::collection::vec(-3.0f64..3.0, 1..12),
            q in 0.05f64..0.95,
            offset in 0usize..2,
        ) {
            let t = knockoff_threshold(&ws, q, offset);
            if t.is_finite() {
                // The threshold is one of the positive candidate magnitudes
                // and satisfies the estimated-FDP bound.
                prop_assert!(ws.iter().any(|&w| (w.abs() - t).abs() < 1e-15 && w != 0.0));
                let neg = ws.iter().filter(|&&w| w <= -t).count();
                let pos = ws.iter().filter(|&&w| w >= t).count();
                prop_assert!((offset + neg) as f64 / pos.max(1) as f64 <= q);
            }
        }
    }

    #[test]
    fn null_response_yields_null_cv_fit() {
        let mut r = rng(16);
        let x = gen_design(30, 5, 0.0, &mut r).unwrap();
        let y = DVector::zeros(30);
        let (lam, fit) = lasso_cv(&x, &y, 5, &mut r).unwrap();
        assert_eq!(lam, 0.0);
        assert!(fit.coef.iter().all(|&c| c == 0.0));
        let _: f64 = r.sample(StandardNormal);
    }
}
