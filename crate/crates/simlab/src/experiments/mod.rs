//! The Monte Carlo studies. Each experiment maps replications over worker
//! threads, reduces the indexed partial results in replication order, and
//! reports summary statistics plus CSV-ready tables.
//!
//! Failed replications (a selector or decomposition error) are redrawn from
//! the attempt-indexed stream of the same replication and counted; runs are
//! expected to stay under a 1% resample rate.

pub mod coverage_coef;
pub mod coverage_proj;
pub mod power;
pub mod prop1;
pub mod stability;
pub mod theorem1;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uvsplit::linmodel::{take_entries, take_rows};
use uvsplit::select::{knockoff_filter, stability_select};
use uvsplit::split::SplitPlan;

use crate::config::{ExperimentConfig, Selector};
use crate::error::{SimError, SimResult};
use crate::streams::rep_rng;
use crate::table::{RunMeta, ResultTable};

/// Attempts per replication before the run is declared numerically broken.
const MAX_ATTEMPTS: u32 = 20;

/// Knockoff threshold offset 1 targets the plain false discovery rate.
const KNOCKOFF_OFFSET: usize = 1;

/// Output bundle every experiment produces alongside its summary fields.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub tables: Vec<ResultTable>,
    pub resampled: u64,
    pub n_reps: usize,
}

impl RunArtifacts {
    pub fn resample_rate(&self) -> f64 {
        self.resampled as f64 / self.n_reps.max(1) as f64
    }

    /// Sidecar metadata for this run.
    pub fn meta(&self, cfg: &ExperimentConfig, elapsed_seconds: f64) -> RunMeta {
        RunMeta {
            experiment: cfg.experiment.name().to_string(),
            version: crate::table::version_string(),
            seed: cfg.seed,
            config: cfg.to_json(),
            n_reps: self.n_reps,
            resampled: self.resampled,
            resample_rate: self.resample_rate(),
            elapsed_seconds,
            tables: self.tables.iter().map(|t| t.name.clone()).collect(),
        }
    }
}

/// Runs one replication body, redrawing its stream on failure. Returns the
/// value and the number of resamples spent (0 on first success).
fn with_resample<T>(
    seed: u64,
    cell: &str,
    rep: usize,
    body: impl Fn(&mut ChaCha8Rng) -> uvsplit::Result<T>,
) -> SimResult<(T, u32)> {
    let mut last: Option<uvsplit::Error> = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rep_rng(seed, cell, rep as u64, attempt);
        match body(&mut rng) {
            Ok(t) => return Ok((t, attempt)),
            Err(e) => last = Some(e),
        }
    }
    Err(SimError::Replication {
        rep,
        attempts: MAX_ATTEMPTS,
        source: last.expect("at least one attempt ran"),
    })
}

/// Maps `job` over `0..n` using `workers` threads and merges the results in
/// index order, so the outcome is independent of the schedule.
fn parallel_map<T, F>(workers: usize, n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(job).collect();
    }
    let workers = workers.min(n);
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let job = &job;
                scope.spawn(move || {
                    (w..n)
                        .step_by(workers)
                        .map(|i| (i, job(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for handle in handles {
            for (i, value) in handle.join().expect("worker thread panicked") {
                slots[i] = Some(value);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every index was computed"))
        .collect()
}

/// Fans the replication body out across workers with per-replication
/// resampling; returns the outcomes in replication order plus the total
/// resample count. The first failing replication (in index order), if any,
/// decides the error.
pub(crate) fn collect_reps<T: Send>(
    cfg: &ExperimentConfig,
    cell: &str,
    n_reps: usize,
    body: impl Fn(usize, &mut ChaCha8Rng) -> uvsplit::Result<T> + Sync,
) -> SimResult<(Vec<T>, u64)> {
    let results = parallel_map(cfg.workers, n_reps, |rep| {
        with_resample(cfg.seed, cell, rep, |rng| body(rep, rng))
    });
    let mut out = Vec::with_capacity(n_reps);
    let mut resampled = 0u64;
    for r in results {
        let (t, attempts) = r?;
        out.push(t);
        resampled += u64::from(attempts);
    }
    Ok((out, resampled))
}

/// Runs the configured selector and returns the selected index set.
pub(crate) fn apply_selector<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    rng: &mut R,
) -> uvsplit::Result<Vec<usize>> {
    match cfg.selector {
        Selector::Knockoff => {
            knockoff_filter(x, y, cfg.knockoff_q, KNOCKOFF_OFFSET, rng).map(|o| o.s)
        }
        Selector::Stability => {
            stability_select(x, y, cfg.pfer, cfg.cutoff, cfg.b, rng).map(|o| o.s)
        }
    }
}

/// The two halves of a data split as submatrices/subvectors.
pub(crate) fn split_data(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    plan: &SplitPlan,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    (
        take_rows(x, &plan.selection_idx),
        take_entries(y, &plan.selection_idx),
        take_rows(x, &plan.inference_idx),
        take_entries(y, &plan.inference_idx),
    )
}

/// Standard error of a binomial proportion estimate.
pub(crate) fn binomial_se(p_hat: f64, m: u64) -> f64 {
    if m == 0 {
        return f64::NAN;
    }
    (p_hat * (1.0 - p_hat) / m as f64).sqrt()
}

/// Sample mean and standard deviation (ddof = 1).
pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (m - 1) as f64).sqrt())
}

/// Leading columns shared by every table row: the experiment cell.
pub(crate) fn cell_columns() -> Vec<&'static str> {
    vec!["selector", "n", "p", "rho", "f"]
}

pub(crate) fn cell_values(cfg: &ExperimentConfig) -> Vec<crate::table::Cell> {
    vec![
        cfg.selector.name().into(),
        cfg.n.into(),
        cfg.p.into(),
        cfg.rho.into(),
        cfg.f.into(),
    ]
}
