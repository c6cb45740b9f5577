//! Coverage and length of confidence intervals for selected full-model
//! coefficients in the low-dimensional regime: the face-value baseline
//! (classical intervals on the full data, ignoring selection) against the
//! hold-out constructions (classical intervals on the inference half for
//! data splitting; studentised normal intervals from `V` for randomisation).

use nalgebra::DVector;

use uvsplit::infer::{ci_coef_ds, ci_coef_face_value, ci_coef_randomised, IntervalReport};
use uvsplit::linmodel::{estimate_sigma2, gen_design, gen_noise, SigmaMode};
use uvsplit::split::{duplex_split, randomised_split};

use crate::config::ExperimentConfig;
use crate::error::SimResult;
use crate::table::{Cell, ResultTable};

use super::{apply_selector, binomial_se, cell_columns, cell_values, collect_reps, split_data, RunArtifacts};

/// Effect-size bins |beta_i| in {0, 0.2, 0.5, 1}.
pub const BIN_VALUES: [f64; 4] = [0.0, 0.2, 0.5, 1.0];

/// Pipelines (how information was split) and methods (which intervals).
const SPLITS: [&str; 2] = ["DS", "R"];
const METHODS: [&str; 2] = ["FV", "HD"];

/// The fixed coefficient vector (1, -1, 0.5, -0.5, 0.2, -0.2, 0, ..., 0).
pub fn paired_beta(p: usize) -> DVector<f64> {
    let mut beta = DVector::zeros(p);
    let values = [1.0, -1.0, 0.5, -0.5, 0.2, -0.2];
    for (i, &v) in values.iter().enumerate().take(p) {
        beta[i] = v;
    }
    beta
}

/// Bin index of a coefficient magnitude, exact on the four grid values.
pub(crate) fn bin_of(beta_i: f64) -> usize {
    match (beta_i.abs() * 10.0).round() as i64 {
        0 => 0,
        2 => 1,
        5 => 2,
        10 => 3,
        other => panic!("coefficient magnitude {other}/10 is off the bin grid"),
    }
}

/// Interval tallies of one replication: hits/totals and summed lengths per
/// (pipeline, method, bin).
#[derive(Default, Clone)]
struct CoverageRep {
    hits: [[[u64; 4]; 2]; 2],
    totals: [[[u64; 4]; 2]; 2],
    length_sums: [[[f64; 4]; 2]; 2],
}

impl CoverageRep {
    fn absorb(&mut self, split: usize, method: usize, beta: &DVector<f64>, report: &IntervalReport) {
        for rec in &report.records {
            let b = bin_of(beta[rec.index]);
            self.totals[split][method][b] += 1;
            if rec.covers(beta[rec.index]) {
                self.hits[split][method][b] += 1;
            }
            self.length_sums[split][method][b] += rec.length();
        }
    }
}

/// One (pipeline, method, bin) summary row.
#[derive(Debug, Clone, Copy)]
pub struct CoverageCell {
    pub coverage: f64,
    pub se: f64,
    pub n_intervals: u64,
    pub mean_length: f64,
}

/// Summary of one coefficient-coverage cell, indexed by
/// `[split: DS, R][method: FV, HD][bin]`.
#[derive(Debug, Clone)]
pub struct CoverageCoefOutput {
    pub cells: [[[CoverageCell; 4]; 2]; 2],
    pub artifacts: RunArtifacts,
}

impl CoverageCoefOutput {
    /// Convenience accessor by names: split in {"DS","R"}, method in
    /// {"FV","HD"}, bin over [`BIN_VALUES`].
    pub fn cell(&self, split: &str, method: &str, bin: usize) -> CoverageCell {
        let s = SPLITS.iter().position(|&v| v == split).expect("split name");
        let m = METHODS.iter().position(|&v| v == method).expect("method name");
        self.cells[s][m][bin]
    }
}

/// Runs the coefficient-coverage study for one cell.
///
/// Per replication: one DUPLEX split and one `(U, V)` decomposition; the
/// selector runs on the selection half (DS pipeline) and on `U` (R
/// pipeline). Each pipeline gets face-value intervals (classical, full
/// data) and hold-out intervals (classical on the inference half for DS;
/// studentised `V`-based for R), all for the coefficients it selected.
pub fn run_coverage_coef(cfg: &ExperimentConfig) -> SimResult<CoverageCoefOutput> {
    cfg.validate()?;
    let beta = paired_beta(cfg.p);
    let cell = cfg.cell_id();
    let (reps, resampled) = collect_reps(cfg, &cell, cfg.n_reps, |_rep, rng| {
        let x = gen_design(cfg.n, cfg.p, cfg.rho, rng)?;
        let y = &x * &beta + gen_noise(cfg.n, rng);
        let sigma2 = estimate_sigma2(&x, &y, SigmaMode::Auto, rng)?;
        let plan = duplex_split(&x, cfg.f)?;
        let uv = randomised_split(&y, cfg.f, sigma2.sqrt(), rng)?;
        let (x1, y1, x2, y2) = split_data(&x, &y, &plan);
        let s_ds = apply_selector(cfg, &x1, &y1, rng)?;
        let s_r = apply_selector(cfg, &x, &uv.u, rng)?;

        let mut tally = CoverageRep::default();
        tally.absorb(0, 0, &beta, &ci_coef_face_value(&x, &y, &s_ds, cfg.alpha)?);
        tally.absorb(0, 1, &beta, &ci_coef_ds(&x2, &y2, &s_ds, cfg.alpha)?);
        tally.absorb(1, 0, &beta, &ci_coef_face_value(&x, &y, &s_r, cfg.alpha)?);
        tally.absorb(
            1,
            1,
            &beta,
            &ci_coef_randomised(&x, &uv.v, &s_r, uv.gamma, sigma2.sqrt(), cfg.alpha)?,
        );
        Ok(tally)
    })?;

    let mut total = CoverageRep::default();
    for r in &reps {
        for s in 0..2 {
            for m in 0..2 {
                for b in 0..4 {
                    total.hits[s][m][b] += r.hits[s][m][b];
                    total.totals[s][m][b] += r.totals[s][m][b];
                    total.length_sums[s][m][b] += r.length_sums[s][m][b];
                }
            }
        }
    }
    let cells = std::array::from_fn(|s| {
        std::array::from_fn(|m| {
            std::array::from_fn(|b| {
                let n = total.totals[s][m][b];
                let coverage = total.hits[s][m][b] as f64 / n.max(1) as f64;
                CoverageCell {
                    coverage,
                    se: binomial_se(coverage, n),
                    n_intervals: n,
                    mean_length: total.length_sums[s][m][b] / n.max(1) as f64,
                }
            })
        })
    });
    let mut output = CoverageCoefOutput {
        cells,
        artifacts: RunArtifacts {
            tables: Vec::new(),
            resampled,
            n_reps: cfg.n_reps,
        },
    };
    output.artifacts.tables = vec![coverage_table(cfg, &output.cells, "coverage_coef")];
    Ok(output)
}

/// Long-format table shared with the projection study: one row per
/// (split, method, bin) with coverage, its binomial standard error, the
/// interval count, and the mean length.
pub(crate) fn coverage_table(
    cfg: &ExperimentConfig,
    cells: &[[[CoverageCell; 4]; 2]; 2],
    name: &str,
) -> ResultTable {
    let mut columns = cell_columns();
    columns.extend([
        "reps",
        "split",
        "method",
        "beta_abs",
        "n_intervals",
        "coverage",
        "se",
        "mean_length",
    ]);
    let mut t = ResultTable::new(name, columns);
    for (s, split) in SPLITS.iter().enumerate() {
        for (m, method) in METHODS.iter().enumerate() {
            for (b, &value) in BIN_VALUES.iter().enumerate() {
                let c = cells[s][m][b];
                let mut row = cell_values(cfg);
                row.extend([
                    cfg.n_reps.into(),
                    (*split).into(),
                    (*method).into(),
                    value.into(),
                    c.n_intervals.into(),
                    if c.n_intervals == 0 { Cell::Null } else { c.coverage.into() },
                    if c.n_intervals == 0 { Cell::Null } else { c.se.into() },
                    if c.n_intervals == 0 { Cell::Null } else { c.mean_length.into() },
                ]);
                t.push(row);
            }
        }
    }
    t
}
