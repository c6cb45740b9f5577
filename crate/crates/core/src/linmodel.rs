//! Dense linear-model numerics shared by the rest of the crate: least
//! squares, projection parameters and contrasts, noise-variance estimation,
//! and Gaussian design generation.
//!
//! Index sets select columns of the design matrix and are always 0-based,
//! strictly increasing `usize` slices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::select;

/// Relative threshold on the pivoted-QR diagonal below which a matrix is
/// declared rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Response, fixed design, and (for simulated data) the generating truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub mu: Option<DVector<f64>>,
    pub beta: Option<DVector<f64>>,
    pub sigma2: Option<f64>,
}

impl Dataset {
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        mu: Option<DVector<f64>>,
        beta: Option<DVector<f64>>,
        sigma2: Option<f64>,
    ) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "len(y) = {} but design has {} rows",
                y.len(),
                n
            )));
        }
        if let Some(m) = &mu {
            if m.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "len(mu) = {} but design has {} rows",
                    m.len(),
                    n
                )));
            }
        }
        if let Some(b) = &beta {
            if b.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "len(beta) = {} but design has {} columns",
                    b.len(),
                    p
                )));
            }
        }
        if let Some(s2) = sigma2 {
            if !(s2 > 0.0) {
                return Err(Error::DomainError(format!("sigma2 = {s2} must be positive")));
            }
        }
        if let (Some(m), Some(b)) = (&mu, &beta) {
            let fitted = &x * b;
            let scale = 1.0 + m.norm();
            if (m - &fitted).norm() > 1e-8 * scale {
                return Err(Error::DomainError(
                    "mu and beta are both present but mu != X*beta".into(),
                ));
            }
        }
        Ok(Self { y, x, mu, beta, sigma2 })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Which design matrix a projection parameter refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignTag {
    FullDesign,
    HoldoutDesign,
}

/// Best linear approximation of a mean vector in a selected submodel.
#[derive(Debug, Clone)]
pub struct ProjectionTarget {
    /// Selected columns, 0-based, strictly increasing.
    pub indices: Vec<usize>,
    /// One coefficient per selected column.
    pub values: DVector<f64>,
    pub design: DesignTag,
}

/// A linear functional `eta' mu` of the mean vector.
#[derive(Debug, Clone)]
pub struct Contrast {
    pub eta: DVector<f64>,
    /// Cached Euclidean norm of `eta`.
    pub norm: f64,
}

impl Contrast {
    pub fn new(eta: DVector<f64>) -> Result<Self> {
        let norm = eta.norm();
        if !(norm > 0.0) {
            return Err(Error::DomainError("contrast has zero norm".into()));
        }
        Ok(Self { eta, norm })
    }
}

/// Output of [`ols_fit`].
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Residual variance `RSS / (n - p)`.
    pub sigma2_hat: f64,
}

fn check_index_set(s: &[usize], p: usize) -> Result<()> {
    if s.is_empty() {
        return Err(Error::EmptySelection);
    }
    for w in s.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::DomainError(
                "index set must be strictly increasing".into(),
            ));
        }
    }
    if *s.last().unwrap() >= p {
        return Err(Error::DomainError(format!(
            "index {} out of range for {} columns",
            s.last().unwrap(),
            p
        )));
    }
    Ok(())
}

/// Extract the selected columns of `x` as a new matrix.
pub fn take_columns(x: &DMatrix<f64>, s: &[usize]) -> DMatrix<f64> {
    x.select_columns(s.iter())
}

/// Extract the selected rows of `x` as a new matrix.
pub fn take_rows(x: &DMatrix<f64>, r: &[usize]) -> DMatrix<f64> {
    x.select_rows(r.iter())
}

/// Subset of a vector at the given positions.
pub fn take_entries(v: &DVector<f64>, r: &[usize]) -> DVector<f64> {
    DVector::from_iterator(r.len(), r.iter().map(|&i| v[i]))
}

/// Pivoted-QR least squares solver kept private behind the public fit
/// functions; also exposes Gram solves for the projection operations.
struct QrLs {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    /// Column permutation: original column `perm[k]` maps to pivoted column `k`.
    perm: Vec<usize>,
}

impl QrLs {
    fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n < p {
            return Err(Error::DimensionMismatch(format!(
                "least squares needs rows >= cols, got {n} x {p}"
            )));
        }
        let qr = x.clone().col_piv_qr();
        let r = qr.r();
        let mut dmax = 0.0f64;
        let mut dmin = f64::INFINITY;
        for k in 0..p {
            let d = r[(k, k)].abs();
            dmax = dmax.max(d);
            dmin = dmin.min(d);
        }
        if !(dmax > 0.0) || dmin < RANK_TOL * dmax {
            return Err(Error::RankDeficient(format!(
                "pivoted QR diagonal ratio {:.3e} below {RANK_TOL:.0e}",
                if dmax > 0.0 { dmin / dmax } else { 0.0 }
            )));
        }
        // Recover the explicit column permutation from the sequence by
        // applying it to the identity arrangement.
        let mut perm: Vec<usize> = (0..p).collect();
        let mut pm = DMatrix::<f64>::identity(p, p);
        qr.p().permute_columns(&mut pm);
        for k in 0..p {
            for i in 0..p {
                if pm[(i, k)] == 1.0 {
                    perm[k] = i;
                    break;
                }
            }
        }
        Ok(Self { q: qr.q(), r: qr.r(), perm })
    }

    /// Minimum-norm residual solution of `X b = y`.
    fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let qty = self.q.transpose() * y;
        let z = self
            .r
            .solve_upper_triangular(&qty)
            .expect("triangular solve after rank check");
        self.unpermute(&z)
    }

    /// `(X'X)^{-1} b` via two triangular solves on the pivoted factor.
    fn solve_gram(&self, b: &DVector<f64>) -> DVector<f64> {
        let p = self.perm.len();
        let mut bp = DVector::zeros(p);
        for k in 0..p {
            bp[k] = b[self.perm[k]];
        }
        let u = self
            .r
            .transpose()
            .solve_lower_triangular(&bp)
            .expect("triangular solve after rank check");
        let z = self
            .r
            .solve_upper_triangular(&u)
            .expect("triangular solve after rank check");
        self.unpermute(&z)
    }

    fn unpermute(&self, z: &DVector<f64>) -> DVector<f64> {
        let p = self.perm.len();
        let mut out = DVector::zeros(p);
        for k in 0..p {
            out[self.perm[k]] = z[k];
        }
        out
    }
}

/// Ordinary least squares via pivoted QR.
///
/// Requires `rows > cols` and a numerically full-rank design.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "len(y) = {} but design has {n} rows",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::DimensionMismatch(format!(
            "ols needs rows > cols, got {n} x {p}"
        )));
    }
    let qr = QrLs::new(x)?;
    let coef = qr.solve(y);
    let residuals = y - x * &coef;
    let rss = residuals.norm_squared();
    Ok(OlsFit {
        coef,
        residuals,
        sigma2_hat: rss / (n - p) as f64,
    })
}

/// Diagonal of `(X'X)^{-1}`: the unscaled sampling variances of the least
/// squares coefficients.
pub fn gram_inverse_diag(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let qr = QrLs::new(x)?;
    let p = x.ncols();
    let mut out = DVector::zeros(p);
    for j in 0..p {
        let mut ej = DVector::zeros(p);
        ej[j] = 1.0;
        out[j] = qr.solve_gram(&ej)[j];
    }
    Ok(out)
}

/// Coefficients of the best linear approximation of `mu` by the selected
/// columns: `{X(s)'X(s)}^{-1} X(s)' mu`.
pub fn projection_parameter(
    x: &DMatrix<f64>,
    s: &[usize],
    mu: &DVector<f64>,
    design: DesignTag,
) -> Result<ProjectionTarget> {
    check_index_set(s, x.ncols())?;
    if mu.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "len(mu) = {} but design has {} rows",
            mu.len(),
            x.nrows()
        )));
    }
    if s.len() > x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "selected {} columns exceed {} rows",
            s.len(),
            x.nrows()
        )));
    }
    let xs = take_columns(x, s);
    let qr = QrLs::new(&xs)?;
    Ok(ProjectionTarget {
        indices: s.to_vec(),
        values: qr.solve(mu),
        design,
    })
}

/// Single projection coefficient computed through its residual-regression
/// form: the projection of `mu` onto the residual of the `i`-th selected
/// column regressed on the other selected columns.
///
/// `i` is a position within `s`, not a column index.
pub fn projection_residual_form(
    x: &DMatrix<f64>,
    s: &[usize],
    i: usize,
    mu: &DVector<f64>,
) -> Result<f64> {
    check_index_set(s, x.ncols())?;
    if s.len() < 2 {
        return Err(Error::DomainError(
            "residual form needs at least two selected columns".into(),
        ));
    }
    if i >= s.len() {
        return Err(Error::DomainError(format!(
            "position {i} out of range for {} selected columns",
            s.len()
        )));
    }
    let xs = take_columns(x, s);
    // Full-rank check on the whole selected block, not just the reduced one.
    QrLs::new(&xs)?;
    let xi = xs.column(i).into_owned();
    let others: Vec<usize> = (0..s.len()).filter(|&k| k != i).collect();
    let x_rest = xs.select_columns(others.iter());
    let qr = QrLs::new(&x_rest)?;
    let fitted = &x_rest * qr.solve(&xi);
    let r_i = xi - fitted;
    let denom = r_i.norm_squared();
    if !(denom > 0.0) {
        return Err(Error::RankDeficient(
            "selected column lies in the span of the others".into(),
        ));
    }
    Ok(r_i.dot(mu) / denom)
}

/// Contrast vector `X(s) {X(s)'X(s)}^{-1} e_j` whose inner product with any
/// mean vector is the `j`-th projection coefficient. `j` is a position in `s`.
pub fn projection_contrast(x: &DMatrix<f64>, s: &[usize], j: usize) -> Result<Contrast> {
    check_index_set(s, x.ncols())?;
    if j >= s.len() {
        return Err(Error::DomainError(format!(
            "position {j} out of range for {} selected columns",
            s.len()
        )));
    }
    let xs = take_columns(x, s);
    let qr = QrLs::new(&xs)?;
    let mut ej = DVector::zeros(s.len());
    ej[j] = 1.0;
    let w = qr.solve_gram(&ej);
    Contrast::new(&xs * w)
}

/// How the noise variance is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    /// Classical residual variance when `p < n/4`, high-dimensional otherwise.
    Auto,
    /// `RSS / (n - p)` from a full OLS fit.
    Classical,
    /// `RSS / (n - s_hat)` from a cross-validated lasso fit.
    HighDim,
}

/// Noise-variance estimate.
///
/// The high-dimensional branch tunes a lasso by cross-validation and uses its
/// residual sum of squares with a support-size degrees-of-freedom correction.
/// Cross-validation folds are drawn from `rng`, so the estimate is replayable.
pub fn estimate_sigma2<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    mode: SigmaMode,
    rng: &mut R,
) -> Result<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let mode = match mode {
        SigmaMode::Auto => {
            if 4 * p < n {
                SigmaMode::Classical
            } else {
                SigmaMode::HighDim
            }
        }
        m => m,
    };
    match mode {
        SigmaMode::Classical => {
            if p >= n {
                return Err(Error::DimensionMismatch(format!(
                    "classical variance estimate needs p < n, got {n} x {p}"
                )));
            }
            Ok(ols_fit(x, y)?.sigma2_hat)
        }
        SigmaMode::HighDim => {
            let (_, fit) = select::lasso_cv(x, y, 5, rng)?;
            let support = fit.coef.iter().filter(|&&c| c != 0.0).count();
            if support >= n {
                return Err(Error::DegenerateFit(format!(
                    "lasso support {support} leaves no degrees of freedom out of {n}"
                )));
            }
            let rss = (y - x * &fit.coef).norm_squared();
            Ok(rss / (n - support) as f64)
        }
        SigmaMode::Auto => unreachable!(),
    }
}

/// Design sampler with rows i.i.d. `N(0, Gamma)`, `Gamma_ij = rho^|i-j|`.
///
/// Rows are realised by applying the closed-form Cholesky factor of the
/// Toeplitz covariance to a standard normal vector, evaluated as the
/// equivalent first-order recursion so each row costs `O(p)`.
#[derive(Debug, Clone)]
pub struct ToeplitzDesign {
    p: usize,
    rho: f64,
    scale: f64,
}

impl ToeplitzDesign {
    pub fn new(p: usize, rho: f64) -> Result<Self> {
        if p < 1 {
            return Err(Error::DomainError("p must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::DomainError(format!("rho = {rho} outside [0, 1)")));
        }
        Ok(Self {
            p,
            rho,
            scale: (1.0 - rho * rho).sqrt(),
        })
    }

    /// The covariance matrix the rows are drawn from.
    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| {
            self.rho.powi((i as i64 - j as i64).unsigned_abs() as i32)
        })
    }

    /// Lower-triangular Cholesky factor of [`Self::covariance`], in closed form.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| {
            if j > i {
                0.0
            } else if j == 0 {
                self.rho.powi(i as i32)
            } else {
                self.scale * self.rho.powi((i - j) as i32)
            }
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(n, self.p);
        for i in 0..n {
            let mut prev = 0.0;
            for j in 0..self.p {
                let e: f64 = rng.sample(StandardNormal);
                let v = if j == 0 { e } else { self.rho * prev + self.scale * e };
                x[(i, j)] = v;
                prev = v;
            }
        }
        x
    }
}

/// `n x p` design with rows i.i.d. `N(0, Gamma)`, `Gamma_ij = rho^|i-j|`.
pub fn gen_design<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if n < 1 {
        return Err(Error::DomainError("n must be at least 1".into()));
    }
    Ok(ToeplitzDesign::new(p, rho)?.sample(n, rng))
}

/// Standard normal vector of length `n`.
pub fn gen_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn ols_identity_design() {
        // 2x2 identity fit is exact but n = p, so embed in a 3x2 design with a
        // zero row removed: use the literal example instead via augmented rows.
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![3.0, -1.0, 0.0]);
        let fit = ols_fit(&x, &y).unwrap();
        assert!((fit.coef[0] - 3.0).abs() < 1e-12);
        assert!((fit.coef[1] + 1.0).abs() < 1e-12);
        assert!(fit.residuals.norm() < 1e-12);
    }

    #[test]
    fn ols_sample_mean() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let fit = ols_fit(&x, &y).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-12);
        assert!((fit.sigma2_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        let mut r = rng(7);
        for _ in 0..20 {
            let x = gen_design(50, 5, 0.3, &mut r).unwrap();
            let y = gen_noise(50, &mut r);
            let fit = ols_fit(&x, &y).unwrap();
            // Oracle: explicit inversion of the Gram matrix.
            let gram = x.transpose() * &x;
            let oracle = gram.try_inverse().unwrap() * x.transpose() * &y;
            assert!((&fit.coef - &oracle).amax() < 1e-10);
            // Residual orthogonality.
            let xtres = x.transpose() * &fit.residuals;
            assert!(xtres.amax() <= 1e-8 * y.norm());
        }
    }

    #[test]
    fn gram_inverse_diag_matches_direct_inverse() {
        let mut r = rng(21);
        for _ in 0..10 {
            let x = gen_design(30, 6, 0.4, &mut r).unwrap();
            let diag = gram_inverse_diag(&x).unwrap();
            let inv = (x.transpose() * &x).try_inverse().unwrap();
            for j in 0..6 {
                assert!((diag[j] - inv[(j, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ols_rejects_rank_deficient() {
        let mut x = DMatrix::zeros(6, 3);
        let mut r = rng(3);
        for i in 0..6 {
            let v: f64 = r.sample(StandardNormal);
            x[(i, 0)] = v;
            x[(i, 1)] = 2.0 * v;
            x[(i, 2)] = r.sample(StandardNormal);
        }
        let y = gen_noise(6, &mut r);
        assert!(matches!(ols_fit(&x, &y), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn ols_shape_checks() {
        let x = DMatrix::zeros(3, 2);
        let y = DVector::zeros(4);
        assert!(matches!(ols_fit(&x, &y), Err(Error::DimensionMismatch(_))));
        let x = DMatrix::zeros(2, 2);
        let y = DVector::zeros(2);
        assert!(matches!(ols_fit(&x, &y), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn projection_single_column() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let mu = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let t = projection_parameter(&x, &[0], &mu, DesignTag::FullDesign).unwrap();
        // Scalar least squares: (1*1 + 0*2 + 1*3) / (1 + 0 + 1).
        assert!((t.values[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_recovers_linear_model() {
        let mut r = rng(11);
        let x = gen_design(20, 6, 0.5, &mut r).unwrap();
        let s = vec![1, 3, 4];
        let b = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let mu = take_columns(&x, &s) * &b;
        let t = projection_parameter(&x, &s, &mu, DesignTag::FullDesign).unwrap();
        assert!((&t.values - &b).amax() < 1e-10);
    }

    #[test]
    fn projection_square_invertible() {
        let mut r = rng(13);
        let x = gen_design(4, 4, 0.2, &mut r).unwrap();
        let mu = gen_noise(4, &mut r);
        let t = projection_parameter(&x, &[0, 1, 2, 3], &mu, DesignTag::FullDesign).unwrap();
        let oracle = x.clone().try_inverse().unwrap() * &mu;
        assert!((&t.values - &oracle).amax() < 1e-9);
    }

    #[test]
    fn projection_empty_selection() {
        let x = DMatrix::zeros(3, 2);
        let mu = DVector::zeros(3);
        assert!(matches!(
            projection_parameter(&x, &[], &mu, DesignTag::FullDesign),
            Err(Error::EmptySelection)
        ));
    }

    #[test]
    fn residual_form_orthogonal_columns() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let mu = DVector::from_vec(vec![1.0, 3.0, 2.0, 0.0]);
        // Orthogonal columns: the residual is the column itself.
        let v = projection_residual_form(&x, &[0, 1], 0, &mu).unwrap();
        let col = x.column(0);
        assert!((v - col.dot(&mu) / col.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn residual_form_matches_projection_parameter() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let mu = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let full = projection_parameter(&x, &[0, 1], &mu, DesignTag::FullDesign).unwrap();
        for i in 0..2 {
            let v = projection_residual_form(&x, &[0, 1], i, &mu).unwrap();
            assert!((v - full.values[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_form_random_agreement() {
        let mut r = rng(17);
        for _ in 0..20 {
            let x = gen_design(40, 8, 0.4, &mut r).unwrap();
            let s = vec![0, 2, 5, 6, 7];
            let mu = gen_noise(40, &mut r);
            let full = projection_parameter(&x, &s, &mu, DesignTag::FullDesign).unwrap();
            for i in 0..s.len() {
                let v = projection_residual_form(&x, &s, i, &mu).unwrap();
                let denom = full.values[i].abs().max(1.0);
                assert!((v - full.values[i]).abs() / denom < 1e-8);
            }
        }
    }

    #[test]
    fn residual_form_duplicate_column() {
        let mut r = rng(19);
        let base = gen_design(10, 3, 0.0, &mut r).unwrap();
        let mut x = DMatrix::zeros(10, 4);
        x.view_mut((0, 0), (10, 3)).copy_from(&base);
        x.set_column(3, &base.column(1));
        let mu = gen_noise(10, &mut r);
        assert!(matches!(
            projection_residual_form(&x, &[1, 3], 0, &mu),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn contrast_orthonormal_is_column() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let c = projection_contrast(&x, &[0, 1], 1).unwrap();
        assert!((&c.eta - &x.column(1).into_owned()).amax() < 1e-12);
    }

    #[test]
    fn contrast_single_column() {
        let mut r = rng(23);
        let x = gen_design(12, 4, 0.3, &mut r).unwrap();
        let c = projection_contrast(&x, &[2], 0).unwrap();
        let col = x.column(2).into_owned();
        assert!((&c.eta - &col / col.norm_squared()).amax() < 1e-12);
    }

    #[test]
    fn contrast_defining_identity() {
        let mut r = rng(29);
        for _ in 0..10 {
            let x = gen_design(30, 5, 0.4, &mut r).unwrap();
            let s = vec![0, 2, 4];
            for j in 0..s.len() {
                let c = projection_contrast(&x, &s, j).unwrap();
                let xs = take_columns(&x, &s);
                let etx = xs.transpose() * &c.eta;
                for k in 0..s.len() {
                    let want = if k == j { 1.0 } else { 0.0 };
                    assert!((etx[k] - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn contrast_evaluates_projection_component() {
        let mut r = rng(31);
        let x = gen_design(25, 6, 0.2, &mut r).unwrap();
        let s = vec![1, 2, 5];
        for _ in 0..5 {
            let mu = gen_noise(25, &mut r);
            let t = projection_parameter(&x, &s, &mu, DesignTag::FullDesign).unwrap();
            for j in 0..s.len() {
                let c = projection_contrast(&x, &s, j).unwrap();
                assert!((c.eta.dot(&mu) - t.values[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sigma2_noiseless_is_zero() {
        let mut r = rng(37);
        let x = gen_design(30, 4, 0.0, &mut r).unwrap();
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0]);
        let y = &x * &beta;
        let s2 = estimate_sigma2(&x, &y, SigmaMode::Classical, &mut r).unwrap();
        assert!(s2 < 1e-20);
    }

    #[test]
    fn sigma2_auto_threshold() {
        // p < n/4 picks the classical estimator; at the boundary it must not.
        let mut r = rng(41);
        let x = gen_design(40, 9, 0.0, &mut r).unwrap();
        let y = gen_noise(40, &mut r);
        let classical = estimate_sigma2(&x, &y, SigmaMode::Classical, &mut rng(1)).unwrap();
        let auto = estimate_sigma2(&x, &y, SigmaMode::Auto, &mut rng(1)).unwrap();
        assert_eq!(classical, auto);
        let x = gen_design(36, 9, 0.0, &mut r).unwrap();
        let y = gen_noise(36, &mut r);
        let auto = estimate_sigma2(&x, &y, SigmaMode::Auto, &mut rng(2)).unwrap();
        let classical = estimate_sigma2(&x, &y, SigmaMode::Classical, &mut rng(2)).unwrap();
        // 9 == 36/4: auto must take the high-dimensional branch.
        assert_ne!(auto, classical);
    }

    #[test]
    fn toeplitz_covariance_p3() {
        let d = ToeplitzDesign::new(3, 0.5).unwrap();
        let g = d.covariance();
        let want = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0],
        );
        assert!((&g - &want).amax() < 1e-15);
        // The closed-form factor reproduces the covariance.
        let l = d.cholesky_factor();
        assert!((&l * l.transpose() - &g).amax() < 1e-12);
    }

    #[test]
    fn gen_design_deterministic() {
        let a = gen_design(10, 4, 0.5, &mut rng(99)).unwrap();
        let b = gen_design(10, 4, 0.5, &mut rng(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gen_design_rejects_bad_rho() {
        assert!(gen_design(5, 2, 1.0, &mut rng(1)).is_err());
        assert!(gen_design(5, 2, -0.1, &mut rng(1)).is_err());
    }

    #[test]
    fn dataset_invariants() {
        let mut r = rng(43);
        let x = gen_design(10, 3, 0.0, &mut r).unwrap();
        let beta = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let mu = &x * &beta;
        let y = &mu + gen_noise(10, &mut r);
        assert!(Dataset::new(y.clone(), x.clone(), Some(mu.clone()), Some(beta.clone()), Some(1.0)).is_ok());
        let bad_mu = mu + DVector::from_element(10, 1.0);
        assert!(Dataset::new(y.clone(), x.clone(), Some(bad_mu), Some(beta), None).is_err());
        assert!(Dataset::new(DVector::zeros(9), x, None, None, None).is_err());
    }
}
