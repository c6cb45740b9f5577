//! CLI wrapper around the Fisher-information comparison: evaluates the
//! strict inequality between the randomised information split and a
//! constant-inclusion data-splitting strategy for all four optimality
//! criteria on one sampled design.

use nalgebra::DVector;

use uvsplit::fisher::{verify_proposition1, PhiCriterion, Prop1Report, SplittingStrategy};
use uvsplit::linmodel::gen_design;

use crate::error::{SimError, SimResult};
use crate::streams::rep_rng;
use crate::table::ResultTable;

/// Splitting strategies constructible from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StrategyKind {
    /// Uniformly random subset of size round(f*n).
    Simple,
    /// A fixed partition labelled by a fair coin (f = 1/2 only).
    CoinFlip,
    /// Consecutive equal-size groups, round(f*g) draws per group.
    Stratified,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Simple => "simple",
            StrategyKind::CoinFlip => "coin_flip",
            StrategyKind::Stratified => "stratified",
        }
    }
}

/// Parameters of one verification run.
#[derive(Debug, Clone)]
pub struct Prop1Params {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub f: f64,
    pub strategy: StrategyKind,
    /// Monte Carlo draws when the splits cannot be enumerated.
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for Prop1Params {
    fn default() -> Self {
        Self {
            n: 40,
            p: 3,
            rho: 0.0,
            f: 0.5,
            strategy: StrategyKind::Simple,
            n_mc: 10_000,
            seed: 1203,
        }
    }
}

/// The four criteria in report order, with a deterministic contrast for the
/// quadratic form: the normalized all-ones direction.
fn criteria(p: usize) -> Vec<(&'static str, PhiCriterion)> {
    let ones = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    vec![
        ("trace", PhiCriterion::Trace),
        ("quadratic_form", PhiCriterion::QuadraticForm(ones)),
        ("max_diag", PhiCriterion::MaxDiag),
        ("max_eigenvalue", PhiCriterion::MaxEigenvalue),
    ]
}

/// Builds the concrete splitting strategy, or a config error when the
/// requested fraction cannot be realised by the strategy shape.
pub fn build_strategy(kind: StrategyKind, n: usize, f: f64) -> SimResult<SplittingStrategy> {
    let n1f = f * n as f64;
    let n1 = n1f.round();
    match kind {
        StrategyKind::Simple => {
            if (n1f - n1).abs() > 1e-9 || n1 < 1.0 || n1 as usize >= n {
                return Err(SimError::Config(format!(
                    "simple splitting needs an integral selection size, got f*n = {n1f}"
                )));
            }
            Ok(SplittingStrategy::Simple)
        }
        StrategyKind::CoinFlip => {
            if (f - 0.5).abs() > 1e-12 {
                return Err(SimError::Config(format!(
                    "coin-flip splitting has inclusion probability 1/2, not f = {f}"
                )));
            }
            Ok(SplittingStrategy::CoinFlip {
                subset: (0..n / 2).collect(),
            })
        }
        StrategyKind::Stratified => {
            let g = (2..=n.min(24))
                .find(|&g| n % g == 0 && (f * g as f64 - (f * g as f64).round()).abs() < 1e-9 && {
                    let m = (f * g as f64).round() as usize;
                    m >= 1 && m < g
                })
                .ok_or_else(|| {
                    SimError::Config(format!(
                        "no group size up to 24 divides n = {n} and realises f = {f}"
                    ))
                })?;
            let per_group = (f * g as f64).round() as usize;
            let groups = (0..n / g)
                .map(|k| (k * g..(k + 1) * g).collect())
                .collect();
            Ok(SplittingStrategy::Stratified { groups, per_group })
        }
    }
}

/// One criterion's comparison.
#[derive(Debug, Clone)]
pub struct Prop1Row {
    pub criterion: &'static str,
    pub report: Prop1Report,
}

/// Output of a verification run.
#[derive(Debug, Clone)]
pub struct Prop1Output {
    pub rows: Vec<Prop1Row>,
    pub table: ResultTable,
}

/// Samples one design and evaluates the inequality for all four criteria.
pub fn run_prop1(params: &Prop1Params) -> SimResult<Prop1Output> {
    if params.p < 1 || params.n < params.p + 2 {
        return Err(SimError::Config(format!(
            "need n >= p + 2 for both halves to be informative, got n = {}, p = {}",
            params.n, params.p
        )));
    }
    if !(0.0..1.0).contains(&params.rho) {
        return Err(SimError::Config(format!(
            "rho = {} outside [0, 1)",
            params.rho
        )));
    }
    if !(params.f > 0.0 && params.f < 1.0) {
        return Err(SimError::Config(format!(
            "f = {} outside (0, 1)",
            params.f
        )));
    }
    let strategy = build_strategy(params.strategy, params.n, params.f)?;
    let cell = format!(
        "prop1/n={}/p={}/rho={}/f={}/{}",
        params.n,
        params.p,
        params.rho,
        params.f,
        params.strategy.name()
    );
    let x = gen_design(
        params.n,
        params.p,
        params.rho,
        &mut rep_rng(params.seed, &format!("{cell}/design"), 0, 0),
    )?;

    let mut rows = Vec::new();
    for (rep_index, (name, criterion)) in criteria(params.p).into_iter().enumerate() {
        let mut rng = rep_rng(params.seed, &cell, rep_index as u64, 0);
        let report = verify_proposition1(&x, &strategy, params.f, &criterion, params.n_mc, &mut rng)?;
        rows.push(Prop1Row {
            criterion: name,
            report,
        });
    }
    let table = prop1_table(params, &rows);
    Ok(Prop1Output { rows, table })
}

fn prop1_table(params: &Prop1Params, rows: &[Prop1Row]) -> ResultTable {
    let columns = vec![
        "n",
        "p",
        "rho",
        "f",
        "strategy",
        "criterion",
        "exhaustive",
        "n_draws",
        "lhs_sel",
        "rhs_sel",
        "margin_sel",
        "se_sel",
        "jensen_sel",
        "lhs_inf",
        "rhs_inf",
        "margin_inf",
        "se_inf",
        "jensen_inf",
        "degenerate",
    ];
    let mut t = ResultTable::new("prop1", columns);
    for row in rows {
        let r = &row.report;
        t.push(vec![
            params.n.into(),
            params.p.into(),
            params.rho.into(),
            params.f.into(),
            params.strategy.name().into(),
            row.criterion.into(),
            i64::from(r.exhaustive).into(),
            r.n_draws.into(),
            r.lhs_sel.into(),
            r.rhs_sel.into(),
            r.margin_sel.into(),
            r.se_sel.into(),
            r.jensen_sel.into(),
            r.lhs_inf.into(),
            r.rhs_inf.into(),
            r.margin_inf.into(),
            r.se_inf.into(),
            r.jensen_inf.into(),
            i64::from(r.degenerate).into(),
        ]);
    }
    t
}
