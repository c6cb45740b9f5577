//! Selection stability: for fixed datasets, how strongly the selected set
//! depends on the ancillary randomness — the choice of the split for data
//! splitting, the artificial noise draw for randomisation. DUPLEX is
//! deterministic, so the splits here are simple random splits.

use nalgebra::DVector;

use uvsplit::linmodel::{estimate_sigma2, gen_design, gen_noise, SigmaMode};
use uvsplit::split::{randomised_split, simple_split};

use crate::config::ExperimentConfig;
use crate::error::SimResult;
use crate::table::ResultTable;

use super::{apply_selector, cell_columns, cell_values, collect_reps, mean_sd, split_data, RunArtifacts};

/// Active coefficients tracked: beta = (1, 0.9, ..., 0.1, 0, ..., 0).
const K_ACTIVE: usize = 10;

/// Splits sampled per dataset, and noise draws likewise.
const DRAWS: usize = 50;

/// The fixed staircase coefficient vector of the stability study.
pub fn staircase_beta(p: usize) -> DVector<f64> {
    let mut beta = DVector::zeros(p);
    for i in 0..K_ACTIVE.min(p) {
        beta[i] = (K_ACTIVE - i) as f64 / 10.0;
    }
    beta
}

/// Estimated selection probabilities of one dataset: `Pr(i in S | Y, X)`
/// per active coordinate, under resampled splits (DS) and noise draws (R).
struct StabilityRep {
    prob_ds: [f64; K_ACTIVE],
    prob_r: [f64; K_ACTIVE],
}

/// Summary of one stability cell: mean and standard deviation, across
/// datasets, of the estimated selection probabilities.
#[derive(Debug, Clone)]
pub struct StabilityOutput {
    pub mean_ds: [f64; K_ACTIVE],
    pub sd_ds: [f64; K_ACTIVE],
    pub mean_r: [f64; K_ACTIVE],
    pub sd_r: [f64; K_ACTIVE],
    pub artifacts: RunArtifacts,
}

/// Runs the stability study: `n_reps` datasets, each probed with `DRAWS`
/// simple splits and `DRAWS` randomisation draws.
pub fn run_stability(cfg: &ExperimentConfig) -> SimResult<StabilityOutput> {
    cfg.validate()?;
    let beta = staircase_beta(cfg.p);
    let cell = cfg.cell_id();
    let (reps, resampled) = collect_reps(cfg, &cell, cfg.n_reps, |_rep, rng| {
        let x = gen_design(cfg.n, cfg.p, cfg.rho, rng)?;
        let y = &x * &beta + gen_noise(cfg.n, rng);
        let sigma2 = estimate_sigma2(&x, &y, SigmaMode::Auto, rng)?;
        let mut hits_ds = [0u32; K_ACTIVE];
        let mut hits_r = [0u32; K_ACTIVE];
        for _ in 0..DRAWS {
            let plan = simple_split(cfg.n, cfg.f, rng)?;
            let (x1, y1, _, _) = split_data(&x, &y, &plan);
            for j in apply_selector(cfg, &x1, &y1, rng)? {
                if j < K_ACTIVE {
                    hits_ds[j] += 1;
                }
            }
        }
        for _ in 0..DRAWS {
            let uv = randomised_split(&y, cfg.f, sigma2.sqrt(), rng)?;
            for j in apply_selector(cfg, &x, &uv.u, rng)? {
                if j < K_ACTIVE {
                    hits_r[j] += 1;
                }
            }
        }
        Ok(StabilityRep {
            prob_ds: std::array::from_fn(|i| f64::from(hits_ds[i]) / DRAWS as f64),
            prob_r: std::array::from_fn(|i| f64::from(hits_r[i]) / DRAWS as f64),
        })
    })?;

    let collect = |get: fn(&StabilityRep) -> [f64; K_ACTIVE], i: usize| -> Vec<f64> {
        reps.iter().map(|r| get(r)[i]).collect()
    };
    let mut output = StabilityOutput {
        mean_ds: [0.0; K_ACTIVE],
        sd_ds: [0.0; K_ACTIVE],
        mean_r: [0.0; K_ACTIVE],
        sd_r: [0.0; K_ACTIVE],
        artifacts: RunArtifacts {
            tables: Vec::new(),
            resampled,
            n_reps: cfg.n_reps,
        },
    };
    for i in 0..K_ACTIVE {
        (output.mean_ds[i], output.sd_ds[i]) = mean_sd(&collect(|r| r.prob_ds, i));
        (output.mean_r[i], output.sd_r[i]) = mean_sd(&collect(|r| r.prob_r, i));
    }
    output.artifacts.tables = vec![probability_table(cfg, &beta, &output)];
    Ok(output)
}

/// Long-format table: one row per (method, active coordinate).
fn probability_table(
    cfg: &ExperimentConfig,
    beta: &DVector<f64>,
    out: &StabilityOutput,
) -> ResultTable {
    let mut columns = cell_columns();
    columns.extend([
        "datasets",
        "draws",
        "method",
        "coef_index",
        "beta",
        "mean",
        "sd",
    ]);
    let mut t = ResultTable::new("stability_probabilities", columns);
    for (method, means, sds) in [
        ("DS", &out.mean_ds, &out.sd_ds),
        ("R", &out.mean_r, &out.sd_r),
    ] {
        for i in 0..K_ACTIVE {
            let mut row = cell_values(cfg);
            row.extend([
                cfg.n_reps.into(),
                DRAWS.into(),
                method.into(),
                i.into(),
                beta[i].into(),
                means[i].into(),
                sds[i].into(),
            ]);
            t.push(row);
        }
    }
    t
}
