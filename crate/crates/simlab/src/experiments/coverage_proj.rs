//! Coverage and length of confidence intervals for projection parameters
//! when the covariate count exceeds the sample size. The data-splitting
//! target is the hold-out projection `beta_s(X2)`; the randomisation target
//! is the full-design projection `beta_s(X)`; face-value intervals are
//! computed on the full data for whichever set the pipeline selected, with
//! the full-design projection as their target. The noise scale is the
//! high-dimensional estimate throughout.

use nalgebra::{DMatrix, DVector};

use uvsplit::infer::{ci_projection, IntervalReport};
use uvsplit::linmodel::{
    estimate_sigma2, gen_design, gen_noise, projection_parameter, DesignTag, SigmaMode,
};
use uvsplit::split::{duplex_split, randomised_split};

use crate::config::ExperimentConfig;
use crate::error::SimResult;
use crate::table::{Cell, ResultTable};

use super::coverage_coef::{coverage_table, paired_beta, CoverageCell};
use super::{apply_selector, binomial_se, cell_columns, cell_values, collect_reps, split_data, RunArtifacts};

/// Largest selected-set size the length table reports.
pub const MAX_SIZE: usize = 8;

/// Per-replication tallies. Coverage is pooled over intervals; lengths are
/// averaged within the replication's selected set first, then pooled per
/// set size, so sets of every size weigh equally.
#[derive(Default, Clone)]
struct ProjectionRep {
    hits: [[[u64; 4]; 2]; 2],
    totals: [[[u64; 4]; 2]; 2],
    length_sums: [[[f64; 4]; 2]; 2],
    size_length: [[f64; MAX_SIZE]; 2],
    size_count: [[u64; MAX_SIZE]; 2],
}

impl ProjectionRep {
    /// Pools one report's intervals into the coverage bins. `beta` supplies
    /// the full-model magnitudes the columns are indexed by; `target` holds
    /// the projection coefficients the intervals are quoted for.
    fn absorb_coverage(
        &mut self,
        split: usize,
        method: usize,
        beta: &DVector<f64>,
        target: &DVector<f64>,
        report: &IntervalReport,
    ) {
        for (i, rec) in report.records.iter().enumerate() {
            let b = super::coverage_coef::bin_of(beta[rec.index]);
            self.totals[split][method][b] += 1;
            if rec.covers(target[i]) {
                self.hits[split][method][b] += 1;
            }
            self.length_sums[split][method][b] += rec.length();
        }
    }

    /// Records the replication-mean interval length of a hold-out report
    /// under its selected-set size.
    fn absorb_length(&mut self, split: usize, report: &IntervalReport) {
        let size = report.records.len();
        if size == 0 || size > MAX_SIZE {
            return;
        }
        let mean = report.records.iter().map(|r| r.length()).sum::<f64>() / size as f64;
        self.size_length[split][size - 1] += mean;
        self.size_count[split][size - 1] += 1;
    }
}

/// Summary of one projection-coverage cell.
#[derive(Debug, Clone)]
pub struct CoverageProjOutput {
    /// Coverage cells indexed by `[split: DS, R][method: FV, HD][bin]`.
    pub cells: [[[CoverageCell; 4]; 2]; 2],
    /// Mean hold-out interval length per selected-set size 1..=MAX_SIZE,
    /// `None` where a size never occurred; indexed by `[split]`.
    pub mean_length_by_size: [[Option<f64>; MAX_SIZE]; 2],
    /// Selected sets of each size observed, per split.
    pub sets_by_size: [[u64; MAX_SIZE]; 2],
    pub artifacts: RunArtifacts,
}

impl CoverageProjOutput {
    pub fn cell(&self, split: &str, method: &str, bin: usize) -> CoverageCell {
        let s = ["DS", "R"].iter().position(|&v| v == split).expect("split name");
        let m = ["FV", "HD"].iter().position(|&v| v == method).expect("method name");
        self.cells[s][m][bin]
    }
}

fn target_values(
    x: &DMatrix<f64>,
    s: &[usize],
    mu: &DVector<f64>,
    design: DesignTag,
) -> uvsplit::Result<DVector<f64>> {
    Ok(projection_parameter(x, s, mu, design)?.values)
}

/// Runs the projection-coverage study for one cell (stability selection;
/// p may exceed n).
pub fn run_coverage_projection(cfg: &ExperimentConfig) -> SimResult<CoverageProjOutput> {
    cfg.validate()?;
    let beta = paired_beta(cfg.p);
    let cell = cfg.cell_id();
    let (reps, resampled) = collect_reps(cfg, &cell, cfg.n_reps, |_rep, rng| {
        let x = gen_design(cfg.n, cfg.p, cfg.rho, rng)?;
        let mu = &x * &beta;
        let y = &mu + gen_noise(cfg.n, rng);
        let sigma2_hd = estimate_sigma2(&x, &y, SigmaMode::HighDim, rng)?;
        let sigma_hd = sigma2_hd.sqrt();
        let plan = duplex_split(&x, cfg.f)?;
        let uv = randomised_split(&y, cfg.f, sigma_hd, rng)?;
        let (x1, y1, x2, y2) = split_data(&x, &y, &plan);
        let mu2 = &x2 * &beta;
        let s_ds = apply_selector(cfg, &x1, &y1, rng)?;
        let s_r = apply_selector(cfg, &x, &uv.u, rng)?;
        let inflation = 1.0 + 1.0 / (uv.gamma * uv.gamma);

        let mut tally = ProjectionRep::default();
        if !s_ds.is_empty() {
            let full_target = target_values(&x, &s_ds, &mu, DesignTag::FullDesign)?;
            let fv = ci_projection(&x, &y, &s_ds, cfg.alpha, sigma_hd, 1.0)?;
            tally.absorb_coverage(0, 0, &beta, &full_target, &fv);

            let holdout_target = target_values(&x2, &s_ds, &mu2, DesignTag::HoldoutDesign)?;
            let hd = ci_projection(&x2, &y2, &s_ds, cfg.alpha, sigma_hd, 1.0)?;
            tally.absorb_coverage(0, 1, &beta, &holdout_target, &hd);
            tally.absorb_length(0, &hd);
        }
        if !s_r.is_empty() {
            let full_target = target_values(&x, &s_r, &mu, DesignTag::FullDesign)?;
            let fv = ci_projection(&x, &y, &s_r, cfg.alpha, sigma_hd, 1.0)?;
            tally.absorb_coverage(1, 0, &beta, &full_target, &fv);

            let hd = ci_projection(&x, &uv.v, &s_r, cfg.alpha, sigma_hd, inflation)?;
            tally.absorb_coverage(1, 1, &beta, &full_target, &hd);
            tally.absorb_length(1, &hd);
        }
        Ok(tally)
    })?;

    let mut total = ProjectionRep::default();
    for r in &reps {
        for s in 0..2 {
            for m in 0..2 {
                for b in 0..4 {
                    total.hits[s][m][b] += r.hits[s][m][b];
                    total.totals[s][m][b] += r.totals[s][m][b];
                    total.length_sums[s][m][b] += r.length_sums[s][m][b];
                }
            }
            for k in 0..MAX_SIZE {
                total.size_length[s][k] += r.size_length[s][k];
                total.size_count[s][k] += r.size_count[s][k];
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
    let mean_length_by_size = std::array::from_fn(|s| {
        std::array::from_fn(|k| {
            (total.size_count[s][k] > 0)
                .then(|| total.size_length[s][k] / total.size_count[s][k] as f64)
        })
    });
    let mut output = CoverageProjOutput {
        cells,
        mean_length_by_size,
        sets_by_size: total.size_count,
        artifacts: RunArtifacts {
            tables: Vec::new(),
            resampled,
            n_reps: cfg.n_reps,
        },
    };
    output.artifacts.tables = vec![
        coverage_table(cfg, &output.cells, "coverage_projection"),
        length_table(cfg, &output),
    ];
    Ok(output)
}

/// Hold-out interval lengths per selected-set size; empty cells stay null.
fn length_table(cfg: &ExperimentConfig, out: &CoverageProjOutput) -> ResultTable {
    let mut columns = cell_columns();
    columns.extend(["reps", "split", "set_size", "n_sets", "mean_length"]);
    let mut t = ResultTable::new("projection_lengths", columns);
    for (s, split) in ["DS", "R"].iter().enumerate() {
        for k in 0..MAX_SIZE {
            let mut row = cell_values(cfg);
            row.extend([
                cfg.n_reps.into(),
                (*split).into(),
                (k + 1).into(),
                out.sets_by_size[s][k].into(),
                Cell::from(out.mean_length_by_size[s][k]),
            ]);
            t.push(row);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_pooling_weighs_sets_not_intervals() {
        let mut rep = ProjectionRep::default();
        let report = |lengths: &[f64]| IntervalReport {
            records: lengths
                .iter()
                .enumerate()
                .map(|(i, &l)| uvsplit::infer::IntervalRecord {
                    index: i,
                    lower: 0.0,
                    upper: l,
                })
                .collect(),
            level: 0.9,
            method_tag: uvsplit::infer::MethodTag::DsHoldout,
            target_tag: uvsplit::infer::TargetTag::ProjectionHoldoutDesign,
            sigma_used: 1.0,
        };
        rep.absorb_length(0, &report(&[1.0, 3.0]));
        rep.absorb_length(0, &report(&[5.0, 7.0]));
        rep.absorb_length(0, &report(&[2.0; 9])); // above MAX_SIZE: ignored
        assert_eq!(rep.size_count[0][1], 2);
        assert_eq!(rep.size_length[0][1], 2.0 + 6.0);
        assert_eq!(rep.size_count[0].iter().sum::<u64>(), 2);
    }
}
