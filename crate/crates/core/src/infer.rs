//! Post-selection confidence intervals: the face-value baseline, hold-out
//! data-splitting intervals, randomised hold-out intervals, and plug-in
//! intervals for projection parameters. All intervals are equal-tailed.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::linmodel::{gram_inverse_diag, ols_fit, take_columns};

/// Which interval construction produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    FaceValue,
    DsHoldout,
    Randomised,
}

/// Which parameter the intervals are quoted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetTag {
    /// Coefficients of the full linear model.
    FullCoef,
    /// Projection of the full-design mean onto the selected columns.
    ProjectionFullDesign,
    /// Projection of the inference-design mean onto the selected columns.
    ProjectionHoldoutDesign,
}

/// One equal-tailed interval for the coordinate at `index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalRecord {
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
}

impl IntervalRecord {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// A set of marginal confidence intervals, one per selected coordinate.
#[derive(Debug, Clone)]
pub struct IntervalReport {
    pub records: Vec<IntervalRecord>,
    /// Nominal coverage `1 - alpha`.
    pub level: f64,
    pub method_tag: MethodTag,
    pub target_tag: TargetTag,
    /// Noise scale the widths were computed from.
    pub sigma_used: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::DomainError(format!("alpha = {alpha} outside (0, 1)")));
    }
    Ok(())
}

fn check_selected(s: &[usize], p: usize) -> Result<()> {
    for w in s.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::DomainError(
                "selected set must be strictly increasing".into(),
            ));
        }
    }
    if let Some(&last) = s.last() {
        if last >= p {
            return Err(Error::DomainError(format!(
                "selected index {last} out of range for {p} columns"
            )));
        }
    }
    Ok(())
}

fn normal_quantile(alpha: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0)
}

fn t_quantile(alpha: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("dof is positive")
        .inverse_cdf(1.0 - alpha / 2.0)
}

/// Classical equal-tailed t-intervals for the coefficients in `s` from a
/// full-model fit of `y` on `x`.
fn t_intervals(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    s: &[usize],
    alpha: f64,
    method_tag: MethodTag,
) -> Result<IntervalReport> {
    check_alpha(alpha)?;
    check_selected(s, x.ncols())?;
    let (n, p) = (x.nrows(), x.ncols());
    let fit = ols_fit(x, y)?;
    let sigma = fit.sigma2_hat.sqrt();
    let gdiag = gram_inverse_diag(x)?;
    let q = t_quantile(alpha, (n - p) as f64);
    let records = s
        .iter()
        .map(|&j| {
            let half = q * sigma * gdiag[j].sqrt();
            IntervalRecord {
                index: j,
                lower: fit.coef[j] - half,
                upper: fit.coef[j] + half,
            }
        })
        .collect();
    Ok(IntervalReport {
        records,
        level: 1.0 - alpha,
        method_tag,
        target_tag: TargetTag::FullCoef,
        sigma_used: sigma,
    })
}

/// Face-value intervals: classical t-intervals computed on the same data the
/// selection was run on. This is the deliberately biased baseline.
pub fn ci_coef_face_value(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    s: &[usize],
    alpha: f64,
) -> Result<IntervalReport> {
    t_intervals(x, y, s, alpha, MethodTag::FaceValue)
}

/// Hold-out intervals: classical t-intervals computed on the inference half
/// `(X2, y2)` of a data split, which the selection never saw.
pub fn ci_coef_ds(
    x2: &DMatrix<f64>,
    y2: &DVector<f64>,
    s: &[usize],
    alpha: f64,
) -> Result<IntervalReport> {
    t_intervals(x2, y2, s, alpha, MethodTag::DsHoldout)
}

/// Randomised hold-out intervals from the inference randomisation `v`:
/// studentised normal intervals around `e_j'(X'X)^{-1}X'v` with standard
/// error `(1 + 1/gamma^2)^{1/2} * sigma_hat * [e_j'(X'X)^{-1}e_j]^{1/2}`.
pub fn ci_coef_randomised(
    x: &DMatrix<f64>,
    v: &DVector<f64>,
    s: &[usize],
    gamma: f64,
    sigma_hat: f64,
    alpha: f64,
) -> Result<IntervalReport> {
    check_alpha(alpha)?;
    check_selected(s, x.ncols())?;
    if !(gamma > 0.0) {
        return Err(Error::DomainError(format!("gamma = {gamma} must be positive")));
    }
    if !(sigma_hat > 0.0) {
        return Err(Error::DomainError(format!(
            "sigma_hat = {sigma_hat} must be positive"
        )));
    }
    let fit = ols_fit(x, v)?;
    let gdiag = gram_inverse_diag(x)?;
    let inflate = (1.0 + 1.0 / (gamma * gamma)).sqrt();
    let q = normal_quantile(alpha);
    let records = s
        .iter()
        .map(|&j| {
            let half = q * inflate * sigma_hat * gdiag[j].sqrt();
            IntervalRecord {
                index: j,
                lower: fit.coef[j] - half,
                upper: fit.coef[j] + half,
            }
        })
        .collect();
    Ok(IntervalReport {
        records,
        level: 1.0 - alpha,
        method_tag: MethodTag::Randomised,
        target_tag: TargetTag::FullCoef,
        sigma_used: sigma_hat,
    })
}

/// Plug-in intervals for the projection of the mean of `y_inf` onto the
/// selected columns of `x_inf`.
///
/// `variance_inflation` is 1 when `y_inf` carries noise variance
/// `sigma_hd^2` (hold-out data; the target is the inference-design
/// projection) and `1 + 1/gamma^2` for the inference randomisation `V`
/// (the target is the full-design projection); the reported method tag
/// follows that convention, and face-value callers re-tag the report.
pub fn ci_projection(
    x_inf: &DMatrix<f64>,
    y_inf: &DVector<f64>,
    s: &[usize],
    alpha: f64,
    sigma_hd: f64,
    variance_inflation: f64,
) -> Result<IntervalReport> {
    check_alpha(alpha)?;
    check_selected(s, x_inf.ncols())?;
    if s.is_empty() {
        return Err(Error::EmptySelection);
    }
    if !(sigma_hd > 0.0) {
        return Err(Error::DomainError(format!(
            "sigma_hd = {sigma_hd} must be positive"
        )));
    }
    if !(variance_inflation >= 1.0) {
        return Err(Error::DomainError(format!(
            "variance_inflation = {variance_inflation} must be >= 1"
        )));
    }
    let xs = take_columns(x_inf, s);
    let fit = ols_fit(&xs, y_inf)?;
    let gdiag = gram_inverse_diag(&xs)?;
    let q = normal_quantile(alpha);
    let scale = variance_inflation.sqrt() * sigma_hd;
    let records = s
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let half = q * scale * gdiag[i].sqrt();
            IntervalRecord {
                index: j,
                lower: fit.coef[i] - half,
                upper: fit.coef[i] + half,
            }
        })
        .collect();
    let (method_tag, target_tag) = if variance_inflation > 1.0 {
        (MethodTag::Randomised, TargetTag::ProjectionFullDesign)
    } else {
        (MethodTag::DsHoldout, TargetTag::ProjectionHoldoutDesign)
    };
    Ok(IntervalReport {
        records,
        level: 1.0 - alpha,
        method_tag,
        target_tag,
        sigma_used: sigma_hd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::{gen_design, gen_noise, projection_parameter, DesignTag};
    use crate::split::{gamma_from_fraction, randomised_split};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn face_value_has_nominal_coverage_without_selection() {
        // Under a fixed coordinate set the t-intervals are classical.
        let mut r = rng(1);
        let n = 50;
        let p = 5;
        let x = gen_design(n, p, 0.3, &mut r).unwrap();
        let beta = DVector::from_column_slice(&[1.0, -0.5, 0.0, 0.25, 2.0]);
        let mu = &x * &beta;
        let s = vec![0, 2, 4];
        let reps = 5000;
        let mut hits = vec![0usize; s.len()];
        for _ in 0..reps {
            let y = &mu + gen_noise(n, &mut r);
            let rep = ci_coef_face_value(&x, &y, &s, 0.1).unwrap();
            for (k, rec) in rep.records.iter().enumerate() {
                assert_eq!(rec.index, s[k]);
                assert!(rec.lower <= rec.upper);
                if rec.covers(beta[rec.index]) {
                    hits[k] += 1;
                }
            }
        }
        for (k, h) in hits.iter().enumerate() {
            let cov = *h as f64 / reps as f64;
            assert!((cov - 0.9).abs() <= 0.015, "coordinate {k}: coverage {cov}");
        }
    }

    #[test]
    fn randomised_has_nominal_coverage_without_selection() {
        let mut r = rng(2);
        let n = 60;
        let p = 4;
        let x = gen_design(n, p, 0.0, &mut r).unwrap();
        let beta = DVector::from_column_slice(&[1.0, 0.0, -1.0, 0.5]);
        let mu = &x * &beta;
        let f = 0.5;
        let gamma = gamma_from_fraction(f).unwrap();
        let s = vec![0, 1];
        let reps = 5000;
        let mut hits = vec![0usize; s.len()];
        for _ in 0..reps {
            let y = &mu + gen_noise(n, &mut r);
            let uv = randomised_split(&y, f, 1.0, &mut r).unwrap();
            let rep = ci_coef_randomised(&x, &uv.v, &s, gamma, 1.0, 0.1).unwrap();
            for (k, rec) in rep.records.iter().enumerate() {
                if rec.covers(beta[rec.index]) {
                    hits[k] += 1;
                }
            }
        }
        for (k, h) in hits.iter().enumerate() {
            let cov = *h as f64 / reps as f64;
            assert!((cov - 0.9).abs() <= 0.015, "coordinate {k}: coverage {cov}");
        }
    }

    #[test]
    fn projection_has_nominal_coverage_without_selection() {
        // Known sigma, no selection: plug-in projection intervals are exact
        // z-intervals for the projection parameter.
        let mut r = rng(3);
        let n = 40;
        let p = 6;
        let x = gen_design(n, p, 0.5, &mut r).unwrap();
        let beta = DVector::from_column_slice(&[1.0, -1.0, 0.5, -0.5, 0.2, -0.2]);
        let mu = &x * &beta;
        let s = vec![0, 3];
        let target = projection_parameter(&x, &s, &mu, DesignTag::FullDesign).unwrap();
        let reps = 5000;
        let mut hits = vec![0usize; s.len()];
        for _ in 0..reps {
            let y = &mu + gen_noise(n, &mut r);
            let rep = ci_projection(&x, &y, &s, 0.1, 1.0, 1.0).unwrap();
            for (k, rec) in rep.records.iter().enumerate() {
                assert_eq!(rec.index, s[k]);
                if rec.covers(target.values[k]) {
                    hits[k] += 1;
                }
            }
        }
        for (k, h) in hits.iter().enumerate() {
            let cov = *h as f64 / reps as f64;
            assert!((cov - 0.9).abs() <= 0.015, "coordinate {k}: coverage {cov}");
        }
    }

    #[test]
    fn ds_intervals_zero_width_on_noiseless_data() {
        let mut r = rng(4);
        let x = gen_design(30, 3, 0.0, &mut r).unwrap();
        let beta = DVector::from_column_slice(&[2.0, -1.0, 0.5]);
        let y = &x * &beta;
        let rep = ci_coef_ds(&x, &y, &[0, 1, 2], 0.1).unwrap();
        assert_eq!(rep.method_tag, MethodTag::DsHoldout);
        for rec in &rep.records {
            assert!(rec.length() < 1e-10);
            let mid = 0.5 * (rec.lower + rec.upper);
            assert!((mid - beta[rec.index]).abs() < 1e-10);
        }
    }

    #[test]
    fn randomised_width_approaches_classical_as_gamma_grows() {
        let mut r = rng(5);
        let x = gen_design(50, 4, 0.2, &mut r).unwrap();
        let y = gen_noise(50, &mut r);
        let gdiag = gram_inverse_diag(&x).unwrap();
        let z = normal_quantile(0.1);
        let classical = 2.0 * z * gdiag[1].sqrt();
        let rep = ci_coef_randomised(&x, &y, &[1], 1e6, 1.0, 0.1).unwrap();
        assert!((rep.records[0].length() / classical - 1.0).abs() < 1e-9);
    }

    #[test]
    fn widths_scale_linearly_in_sigma_and_shrink_with_alpha() {
        let mut r = rng(6);
        let x = gen_design(40, 4, 0.0, &mut r).unwrap();
        let y = gen_noise(40, &mut r);
        let s = vec![0, 2];
        let w1 = ci_coef_randomised(&x, &y, &s, 1.0, 1.0, 0.1).unwrap();
        let w2 = ci_coef_randomised(&x, &y, &s, 1.0, 2.0, 0.1).unwrap();
        for (a, b) in w1.records.iter().zip(&w2.records) {
            assert!((b.length() / a.length() - 2.0).abs() < 1e-12);
        }
        let narrow = ci_coef_face_value(&x, &y, &s, 0.2).unwrap();
        let wide = ci_coef_face_value(&x, &y, &s, 0.05).unwrap();
        for (a, b) in narrow.records.iter().zip(&wide.records) {
            assert!(b.length() > a.length());
        }
    }

    #[test]
    fn randomised_shorter_than_ds_at_matched_fraction() {
        // With p/n close to 1 - f, the hold-out fit loses many degrees of
        // freedom and the randomised intervals win on average length.
        let mut r = rng(7);
        let n = 40;
        let p = 10;
        let f = 0.5;
        let gamma = gamma_from_fraction(f).unwrap();
        let x = gen_design(n, p, 0.0, &mut r).unwrap();
        let s: Vec<usize> = (0..p).collect();
        let reps = 200;
        let mut len_ds = 0.0;
        let mut len_r = 0.0;
        for _ in 0..reps {
            let y = gen_noise(n, &mut r);
            let uv = randomised_split(&y, f, 1.0, &mut r).unwrap();
            let half: Vec<usize> = (0..n / 2).collect();
            let x2 = crate::linmodel::take_rows(&x, &half);
            let y2 = crate::linmodel::take_entries(&y, &half);
            let ds = ci_coef_ds(&x2, &y2, &s, 0.1).unwrap();
            let rz = ci_coef_randomised(&x, &uv.v, &s, gamma, 1.0, 0.1).unwrap();
            len_ds += ds.records.iter().map(IntervalRecord::length).sum::<f64>();
            len_r += rz.records.iter().map(IntervalRecord::length).sum::<f64>();
        }
        assert!(
            len_r < len_ds,
            "mean lengths: randomised {len_r} vs hold-out {len_ds}"
        );
    }

    #[test]
    fn projection_tags_follow_inflation() {
        let mut r = rng(8);
        let x = gen_design(30, 5, 0.0, &mut r).unwrap();
        let y = gen_noise(30, &mut r);
        let ds = ci_projection(&x, &y, &[1, 3], 0.1, 1.0, 1.0).unwrap();
        assert_eq!(ds.method_tag, MethodTag::DsHoldout);
        assert_eq!(ds.target_tag, TargetTag::ProjectionHoldoutDesign);
        let rz = ci_projection(&x, &y, &[1, 3], 0.1, 1.0, 2.0).unwrap();
        assert_eq!(rz.method_tag, MethodTag::Randomised);
        assert_eq!(rz.target_tag, TargetTag::ProjectionFullDesign);
        // Inflation scales widths by its square root exactly.
        for (a, b) in ds.records.iter().zip(&rz.records) {
            assert!((b.length() / a.length() - 2.0f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_errors() {
        let mut r = rng(9);
        let x = gen_design(20, 4, 0.0, &mut r).unwrap();
        let y = gen_noise(20, &mut r);
        assert!(ci_coef_face_value(&x, &y, &[0], 0.0).is_err());
        assert!(ci_coef_face_value(&x, &y, &[4], 0.1).is_err());
        assert!(ci_coef_face_value(&x, &y, &[1, 1], 0.1).is_err());
        assert!(ci_coef_randomised(&x, &y, &[0], 0.0, 1.0, 0.1).is_err());
        assert!(ci_coef_randomised(&x, &y, &[0], 1.0, 0.0, 0.1).is_err());
        assert!(matches!(
            ci_projection(&x, &y, &[], 0.1, 1.0, 1.0),
            Err(Error::EmptySelection)
        ));
        assert!(ci_projection(&x, &y, &[0], 0.1, 1.0, 0.5).is_err());
        // Hold-out design too small for the model: rank machinery refuses.
        let tiny: Vec<usize> = (0..3).collect();
        let x2 = crate::linmodel::take_rows(&x, &tiny);
        let y2 = crate::linmodel::take_entries(&y, &tiny);
        assert!(ci_coef_ds(&x2, &y2, &[0], 0.1).is_err());
    }

    #[test]
    fn empty_selection_gives_empty_coef_report() {
        let mut r = rng(10);
        let x = gen_design(20, 3, 0.0, &mut r).unwrap();
        let y = gen_noise(20, &mut r);
        let rep = ci_coef_face_value(&x, &y, &[], 0.1).unwrap();
        assert!(rep.records.is_empty());
        assert_eq!(rep.level, 0.9);
    }
}
