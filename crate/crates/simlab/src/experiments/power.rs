//! Selection power: true positive rates of the configured selector applied
//! to the full data, to the DUPLEX selection half, and to the randomised
//! selection copy `U`, plus per-effect-size power curves.

use nalgebra::DVector;

use uvsplit::linmodel::{estimate_sigma2, gen_design, gen_noise, SigmaMode};
use uvsplit::split::{duplex_split, randomised_split};

use crate::betagen::gen_beta;
use crate::config::ExperimentConfig;
use crate::error::SimResult;
use crate::table::ResultTable;

use super::{apply_selector, cell_columns, cell_values, collect_reps, split_data, RunArtifacts};

/// Active coefficients per replication.
const K_ACTIVE: usize = 10;

/// The three selection inputs compared, in table order.
const METHODS: [&str; 3] = ["full", "DS", "R"];

/// Per-replication tally: correct discoveries per method, and per-bin
/// (selected, present) counts over the ten effect sizes 0.1..=1.0.
struct PowerRep {
    correct: [u64; 3],
    bin_hits: [[u64; 10]; 3],
    bin_totals: [u64; 10],
}

/// Effect-size bin of an active coefficient (0.1 -> 0, ..., 1.0 -> 9).
fn effect_bin(value: f64) -> usize {
    (value.abs() * 10.0).round() as usize - 1
}

fn tally(beta: &DVector<f64>, selections: [&[usize]; 3]) -> PowerRep {
    let mut rep = PowerRep {
        correct: [0; 3],
        bin_hits: [[0; 10]; 3],
        bin_totals: [0; 10],
    };
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    for &j in &active {
        rep.bin_totals[effect_bin(beta[j])] += 1;
    }
    for (m, s) in selections.iter().enumerate() {
        for &j in s.iter() {
            if beta[j] != 0.0 {
                rep.correct[m] += 1;
                rep.bin_hits[m][effect_bin(beta[j])] += 1;
            }
        }
    }
    rep
}

/// Summary of one power cell.
#[derive(Debug, Clone)]
pub struct PowerOutput {
    /// True positive rate of full-data, split, and randomised selection.
    pub tpr: [f64; 3],
    /// `tpr[DS] / tpr[full]`.
    pub ratio_ds: f64,
    /// `tpr[R] / tpr[full]`.
    pub ratio_r: f64,
    /// Power per effect-size bin 0.1..=1.0, per method.
    pub power: [[f64; 10]; 3],
    /// Active coefficients observed per bin.
    pub bin_totals: [u64; 10],
    pub artifacts: RunArtifacts,
}

/// Runs the power study for one cell.
///
/// Each replication draws `beta` (ten active coefficients), a Toeplitz
/// design, and a response; estimates the noise variance; forms the DUPLEX
/// split and the `(U, V)` decomposition calibrated to the same fraction; and
/// runs the selector three times: on `(X, Y)`, on the selection half, and on
/// `(X, U)`.
pub fn run_power(cfg: &ExperimentConfig) -> SimResult<PowerOutput> {
    cfg.validate()?;
    let cell = cfg.cell_id();
    let (reps, resampled) = collect_reps(cfg, &cell, cfg.n_reps, |_rep, rng| {
        let beta = gen_beta(cfg.p, K_ACTIVE, rng)?;
        let x = gen_design(cfg.n, cfg.p, cfg.rho, rng)?;
        let y = &x * &beta + gen_noise(cfg.n, rng);
        let sigma2 = estimate_sigma2(&x, &y, SigmaMode::Auto, rng)?;
        let plan = duplex_split(&x, cfg.f)?;
        let uv = randomised_split(&y, cfg.f, sigma2.sqrt(), rng)?;
        let s_full = apply_selector(cfg, &x, &y, rng)?;
        let (x1, y1, _, _) = split_data(&x, &y, &plan);
        let s_ds = apply_selector(cfg, &x1, &y1, rng)?;
        let s_r = apply_selector(cfg, &x, &uv.u, rng)?;
        Ok(tally(&beta, [&s_full, &s_ds, &s_r]))
    })?;

    let mut correct = [0u64; 3];
    let mut bin_hits = [[0u64; 10]; 3];
    let mut bin_totals = [0u64; 10];
    for r in &reps {
        for m in 0..3 {
            correct[m] += r.correct[m];
            for b in 0..10 {
                bin_hits[m][b] += r.bin_hits[m][b];
            }
        }
        for b in 0..10 {
            bin_totals[b] += r.bin_totals[b];
        }
    }
    let active_total = (cfg.n_reps * K_ACTIVE) as f64;
    let tpr = std::array::from_fn(|m| correct[m] as f64 / active_total);
    let power = std::array::from_fn(|m| {
        std::array::from_fn(|b| {
            if bin_totals[b] == 0 {
                f64::NAN
            } else {
                bin_hits[m][b] as f64 / bin_totals[b] as f64
            }
        })
    });

    let mut output = PowerOutput {
        tpr,
        ratio_ds: tpr[1] / tpr[0],
        ratio_r: tpr[2] / tpr[0],
        power,
        bin_totals,
        artifacts: RunArtifacts {
            tables: Vec::new(),
            resampled,
            n_reps: cfg.n_reps,
        },
    };
    output.artifacts.tables = vec![tpr_table(cfg, &output), curve_table(cfg, &output)];
    Ok(output)
}

fn tpr_table(cfg: &ExperimentConfig, out: &PowerOutput) -> ResultTable {
    let mut columns = cell_columns();
    columns.extend([
        "reps",
        "resampled",
        "tpr_full",
        "tpr_ds",
        "tpr_r",
        "ratio_ds",
        "ratio_r",
    ]);
    let mut t = ResultTable::new("power_tpr", columns);
    let mut row = cell_values(cfg);
    row.extend([
        cfg.n_reps.into(),
        (out.artifacts.resampled as i64).into(),
        out.tpr[0].into(),
        out.tpr[1].into(),
        out.tpr[2].into(),
        out.ratio_ds.into(),
        out.ratio_r.into(),
    ]);
    t.push(row);
    t
}

/// Long-format power curves: one row per (method, effect size).
fn curve_table(cfg: &ExperimentConfig, out: &PowerOutput) -> ResultTable {
    let mut columns = cell_columns();
    columns.extend(["method", "beta_abs", "power", "n_coefficients"]);
    let mut t = ResultTable::new("power_curves", columns);
    for (m, name) in METHODS.iter().enumerate() {
        for b in 0..10 {
            let mut row = cell_values(cfg);
            row.extend([
                (*name).into(),
                ((b + 1) as f64 / 10.0).into(),
                out.power[m][b].into(),
                out.bin_totals[b].into(),
            ]);
            t.push(row);
        }
    }
    t
}
