//! Fisher-information accounting for the Gaussian linear model: how a data
//! split divides the information matrix, the four optimality criteria, and a
//! numerical verifier for the strict inequality that favours additive
//! randomisation over every constant-inclusion data split.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linmodel::take_rows;
use crate::split::{coin_flip_split, simple_split, stratified_split, SplitPlan};

/// Enumeration replaces Monte Carlo whenever the number of distinct splits
/// is at most this.
const EXHAUSTIVE_LIMIT: usize = 10_000;

/// The information matrices of the two halves of a data split.
#[derive(Debug, Clone)]
pub struct InfoSplit {
    pub info_selection: DMatrix<f64>,
    pub info_inference: DMatrix<f64>,
    pub info_full: DMatrix<f64>,
}

/// An optimality criterion evaluated on an inverse-information matrix.
#[derive(Debug, Clone)]
pub enum PhiCriterion {
    /// Total variance: `tr(A)`.
    Trace,
    /// Variance of a fixed contrast: `v'Av`.
    QuadraticForm(DVector<f64>),
    /// Worst coordinate variance: `max_i A_ii`.
    MaxDiag,
    /// Worst variance over unit contrasts: `lambda_max(A)`.
    MaxEigenvalue,
}

/// A constant-inclusion splitting rule for the Proposition-1 comparison.
#[derive(Debug, Clone)]
pub enum SplittingStrategy {
    /// Uniformly random subset of the target size.
    Simple,
    /// A fixed partition labelled selection/inference by a fair coin; the
    /// inclusion probability is 1/2 regardless of the subset size.
    CoinFlip { subset: Vec<usize> },
    /// `per_group` uniform draws from each of the equal-size `groups`.
    Stratified {
        groups: Vec<Vec<usize>>,
        per_group: usize,
    },
}

/// Output of [`verify_proposition1`]: criterion values for the randomised
/// information split (`lhs_*`), the data-split averages (`rhs_*`), their
/// gaps, and the intermediate Jensen quantity from the proof.
#[derive(Debug, Clone)]
pub struct Prop1Report {
    /// phi of `(1/f) I_Y^{-1}` — the randomised scheme's selection-side value.
    pub lhs_sel: f64,
    /// Average of phi of `I_R^{-1}` over splits.
    pub rhs_sel: f64,
    pub lhs_inf: f64,
    pub rhs_inf: f64,
    /// `rhs - lhs`; positive under the hypothesis of the inequality.
    pub margin_sel: f64,
    pub margin_inf: f64,
    /// Monte Carlo standard errors of the rhs averages (zero when exhaustive).
    pub se_sel: f64,
    pub se_inf: f64,
    /// phi of the averaged inverse information, separating the
    /// harmonic-arithmetic step from the Jensen step.
    pub jensen_sel: f64,
    pub jensen_inf: f64,
    /// True when every sampled split carried identical information — the
    /// case excluded by the hypothesis, where the margins vanish.
    pub degenerate: bool,
    /// True when all distinct splits were enumerated instead of sampled.
    pub exhaustive: bool,
    pub n_draws: usize,
}

fn pd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::new(a.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::RankDeficient("information block is not positive definite".into()))
}

/// Information matrices `X_r'X_r / sigma2` for the two halves of `plan`.
pub fn gaussian_info_split(
    x: &DMatrix<f64>,
    plan: &SplitPlan,
    sigma2: f64,
) -> Result<InfoSplit> {
    if !(sigma2 > 0.0) {
        return Err(Error::DomainError(format!(
            "sigma2 = {sigma2} must be positive"
        )));
    }
    if plan.n() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "plan covers {} observations but the design has {} rows",
            plan.n(),
            x.nrows()
        )));
    }
    let xr = take_rows(x, &plan.selection_idx);
    let xc = take_rows(x, &plan.inference_idx);
    let info_selection = xr.tr_mul(&xr) / sigma2;
    let info_inference = xc.tr_mul(&xc) / sigma2;
    pd_inverse(&info_selection)?;
    pd_inverse(&info_inference)?;
    Ok(InfoSplit {
        info_selection,
        info_inference,
        info_full: x.tr_mul(x) / sigma2,
    })
}

/// Evaluates an optimality criterion on a symmetric positive-definite matrix.
pub fn phi_eval(a: &DMatrix<f64>, criterion: &PhiCriterion) -> Result<f64> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {p} x {}",
            a.ncols()
        )));
    }
    let asym = (a - a.transpose()).amax();
    if asym > 1e-8 * (1.0 + a.amax()) {
        return Err(Error::DomainError(format!(
            "matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    if Cholesky::new(a.clone()).is_none() {
        return Err(Error::DomainError("matrix is not positive definite".into()));
    }
    match criterion {
        PhiCriterion::Trace => Ok(a.trace()),
        PhiCriterion::QuadraticForm(v) => {
            if v.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "contrast has {} entries for a {p} x {p} matrix",
                    v.len()
                )));
            }
            Ok((v.transpose() * a * v)[(0, 0)])
        }
        PhiCriterion::MaxDiag => Ok((0..p).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max)),
        PhiCriterion::MaxEigenvalue => Ok(SymmetricEigen::new(a.clone()).eigenvalues.max()),
    }
}

/// All `k`-subsets of `{0..n}` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        let mut i = k;
        while i > 0 && c[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        c[i - 1] += 1;
        for j in i..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

/// Binomial coefficient, saturating just above `cap`.
fn binomial_capped(n: usize, k: usize, cap: usize) -> usize {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
        if acc > 2.0 * cap as f64 {
            return cap + 1;
        }
    }
    acc.round() as usize
}

fn check_subset(subset: &[usize], n: usize) -> Result<()> {
    if subset.is_empty() || subset.len() >= n {
        return Err(Error::DomainError(
            "coin-flip set must be a proper non-empty subset".into(),
        ));
    }
    for w in subset.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::DomainError(
                "coin-flip set must be strictly increasing".into(),
            ));
        }
    }
    if *subset.last().unwrap() >= n {
        return Err(Error::DomainError("coin-flip set index out of range".into()));
    }
    Ok(())
}

fn check_groups(groups: &[Vec<usize>], per_group: usize, n: usize) -> Result<usize> {
    if groups.is_empty() {
        return Err(Error::DomainError("no groups given".into()));
    }
    let g = groups[0].len();
    if groups.iter().any(|grp| grp.len() != g) {
        return Err(Error::DomainError("groups must have equal sizes".into()));
    }
    if per_group < 1 || per_group >= g {
        return Err(Error::DomainError(format!(
            "per-group draw {per_group} must satisfy 1 <= m < {g}"
        )));
    }
    let mut seen = vec![false; n];
    let mut total = 0usize;
    for grp in groups {
        for &i in grp {
            if i >= n || seen[i] {
                return Err(Error::DomainError(
                    "groups must partition the index range".into(),
                ));
            }
            seen[i] = true;
            total += 1;
        }
    }
    if total != n {
        return Err(Error::DomainError(
            "groups must partition the index range".into(),
        ));
    }
    Ok(g)
}

/// Validates that `strategy` gives every observation inclusion probability
/// exactly `f`, and enumerates the distinct selection sets when there are at
/// most [`EXHAUSTIVE_LIMIT`] of them.
fn enumerate_selections(
    strategy: &SplittingStrategy,
    n: usize,
    f: f64,
) -> Result<Option<Vec<Vec<usize>>>> {
    match strategy {
        SplittingStrategy::Simple => {
            let kf = f * n as f64;
            let k = kf.round();
            if (kf - k).abs() > 1e-9 || k < 1.0 || k as usize >= n {
                return Err(Error::DomainError(format!(
                    "simple splitting at f = {f} cannot give inclusion probability f with n = {n}"
                )));
            }
            let k = k as usize;
            if binomial_capped(n, k, EXHAUSTIVE_LIMIT) <= EXHAUSTIVE_LIMIT {
                Ok(Some(combinations(n, k)))
            } else {
                Ok(None)
            }
        }
        SplittingStrategy::CoinFlip { subset } => {
            if (f - 0.5).abs() > 1e-12 {
                return Err(Error::DomainError(format!(
                    "coin-flip splitting has inclusion probability 1/2, not f = {f}"
                )));
            }
            check_subset(subset, n)?;
            let complement: Vec<usize> = {
                let mut in_a = vec![false; n];
                for &i in subset {
                    in_a[i] = true;
                }
                (0..n).filter(|&i| !in_a[i]).collect()
            };
            Ok(Some(vec![subset.clone(), complement]))
        }
        SplittingStrategy::Stratified { groups, per_group } => {
            let g = check_groups(groups, *per_group, n)?;
            if (f - *per_group as f64 / g as f64).abs() > 1e-12 {
                return Err(Error::DomainError(format!(
                    "stratified splitting with {per_group} of {g} per group has inclusion probability {}, not f = {f}",
                    *per_group as f64 / g as f64
                )));
            }
            let per_group_count = binomial_capped(g, *per_group, EXHAUSTIVE_LIMIT);
            let mut total = 1usize;
            for _ in 0..groups.len() {
                total = total.saturating_mul(per_group_count);
                if total > EXHAUSTIVE_LIMIT {
                    return Ok(None);
                }
            }
            // Cartesian product of per-group position choices.
            let position_sets = combinations(g, *per_group);
            let mut outcomes: Vec<Vec<usize>> = vec![Vec::new()];
            for grp in groups {
                let mut next = Vec::with_capacity(outcomes.len() * position_sets.len());
                for partial in &outcomes {
                    for positions in &position_sets {
                        let mut sel = partial.clone();
                        sel.extend(positions.iter().map(|&k| grp[k]));
                        next.push(sel);
                    }
                }
                outcomes = next;
            }
            for sel in &mut outcomes {
                sel.sort_unstable();
            }
            Ok(Some(outcomes))
        }
    }
}

struct SideAccumulator {
    phi_sum: f64,
    phi_sumsq: f64,
    inv_sum: DMatrix<f64>,
}

impl SideAccumulator {
    fn new(p: usize) -> Self {
        Self {
            phi_sum: 0.0,
            phi_sumsq: 0.0,
            inv_sum: DMatrix::zeros(p, p),
        }
    }

    fn add(&mut self, gram: &DMatrix<f64>, criterion: &PhiCriterion) -> Result<()> {
        let inv = pd_inverse(gram)?;
        let phi = phi_eval(&inv, criterion)?;
        self.phi_sum += phi;
        self.phi_sumsq += phi * phi;
        self.inv_sum += inv;
        Ok(())
    }

    fn finish(self, n: usize, exhaustive: bool, criterion: &PhiCriterion) -> Result<(f64, f64, f64)> {
        let m = n as f64;
        let mean = self.phi_sum / m;
        let se = if exhaustive || n < 2 {
            0.0
        } else {
            let var = (self.phi_sumsq / m - mean * mean).max(0.0) * m / (m - 1.0);
            (var / m).sqrt()
        };
        let jensen = phi_eval(&(self.inv_sum / m), criterion)?;
        Ok((mean, se, jensen))
    }
}

/// Compares the randomised information split against a constant-inclusion
/// data-splitting strategy for one optimality criterion.
///
/// The selection side compares `phi((1/f) I_Y^{-1})` with the average of
/// `phi(I_R^{-1})` over splits, the inference side likewise with `1/(1-f)`;
/// under the strict inequality both margins are positive whenever the splits
/// are not all information-identical. All distinct splits are enumerated
/// when there are at most 10^4 of them (`n_mc` is then ignored and the
/// standard errors are zero); otherwise `n_mc` splits are sampled from
/// `rng`. The noise variance only scales both sides, so it is fixed at 1.
pub fn verify_proposition1<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    strategy: &SplittingStrategy,
    f: f64,
    criterion: &PhiCriterion,
    n_mc: usize,
    rng: &mut R,
) -> Result<Prop1Report> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::DomainError(format!("fraction {f} outside (0, 1)")));
    }
    let n = x.nrows();
    let p = x.ncols();
    let gram_full = x.tr_mul(x);
    let inv_full = pd_inverse(&gram_full)?;
    let lhs_sel = phi_eval(&(&inv_full / f), criterion)?;
    let lhs_inf = phi_eval(&(&inv_full / (1.0 - f)), criterion)?;

    let enumerated = enumerate_selections(strategy, n, f)?;
    let exhaustive = enumerated.is_some();
    let mut sel_acc = SideAccumulator::new(p);
    let mut inf_acc = SideAccumulator::new(p);
    let mut first_gram: Option<DMatrix<f64>> = None;
    let mut degenerate = true;
    let mut n_draws = 0usize;

    let mut consume = |selection: &[usize]| -> Result<()> {
        let xr = take_rows(x, selection);
        let gram_sel = xr.tr_mul(&xr);
        let gram_inf = &gram_full - &gram_sel;
        match &first_gram {
            None => first_gram = Some(gram_sel.clone()),
            Some(first) => {
                if (&gram_sel - first).amax() > 1e-10 * (1.0 + first.amax()) {
                    degenerate = false;
                }
            }
        }
        sel_acc.add(&gram_sel, criterion)?;
        inf_acc.add(&gram_inf, criterion)?;
        Ok(())
    };

    match enumerated {
        Some(selections) => {
            n_draws = selections.len();
            for sel in &selections {
                consume(sel)?;
            }
        }
        None => {
            if n_mc < 2 {
                return Err(Error::DomainError(format!(
                    "n_mc = {n_mc} is too few draws for a Monte Carlo comparison"
                )));
            }
            for _ in 0..n_mc {
                let plan = match strategy {
                    SplittingStrategy::Simple => simple_split(n, f, rng)?,
                    SplittingStrategy::CoinFlip { subset } => coin_flip_split(n, subset, rng)?,
                    SplittingStrategy::Stratified { groups, per_group } => {
                        stratified_split(groups, *per_group, rng)?
                    }
                };
                consume(&plan.selection_idx)?;
                n_draws += 1;
            }
        }
    }
    drop(consume);

    let (rhs_sel, se_sel, jensen_sel) = sel_acc.finish(n_draws, exhaustive, criterion)?;
    let (rhs_inf, se_inf, jensen_inf) = inf_acc.finish(n_draws, exhaustive, criterion)?;
    Ok(Prop1Report {
        lhs_sel,
        rhs_sel,
        lhs_inf,
        rhs_inf,
        margin_sel: rhs_sel - lhs_sel,
        margin_inf: rhs_inf - lhs_inf,
        se_sel,
        se_inf,
        jensen_sel,
        jensen_inf,
        degenerate,
        exhaustive,
        n_draws,
    })
}
