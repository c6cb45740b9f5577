//! Experiment configuration: defaults per experiment, TOML config files,
//! CLI overrides, and the invariants that make a cell runnable.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

/// The five Monte Carlo studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// True-positive-rate comparison of full-data, split, and randomised
    /// selection.
    Power,
    /// Selection probabilities under resampled splits and noise draws for
    /// fixed datasets.
    Stability,
    /// Coverage and length of intervals for selected full-model coefficients.
    CoverageCoef,
    /// Coverage and length of intervals for projection parameters when
    /// p exceeds n.
    CoverageProjection,
    /// Conditional normality of the randomised pivot under non-normal errors.
    Theorem1,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Power => "power",
            Experiment::Stability => "stability",
            Experiment::CoverageCoef => "coverage_coef",
            Experiment::CoverageProjection => "coverage_projection",
            Experiment::Theorem1 => "theorem1",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which selection algorithm a cell runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Fixed-X knockoff filter (needs n >= 2p).
    Knockoff,
    /// Stability selection paired with the lasso.
    Stability,
}

impl Selector {
    pub fn name(self) -> &'static str {
        match self {
            Selector::Knockoff => "knockoff",
            Selector::Stability => "stability",
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One experiment cell: data-generating parameters, selector tuning, and
/// run plumbing. Build it with [`ExperimentConfig::resolve`], which layers
/// config-file and CLI patches over per-experiment defaults and validates
/// the result.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Observations per replication.
    pub n: usize,
    /// Covariates.
    pub p: usize,
    /// Toeplitz design correlation, `Gamma_ij = rho^|i-j|`.
    pub rho: f64,
    /// Fraction of sample information allocated to selection.
    pub f: f64,
    pub selector: Selector,
    /// Replications (datasets for the stability study; replications per
    /// sample size for the pivot study).
    pub n_reps: usize,
    /// Interval miscoverage level; intervals are quoted at `1 - alpha`.
    pub alpha: f64,
    /// Master seed; every replication derives its own stream from it.
    pub seed: u64,
    /// Knockoff FDR target.
    pub knockoff_q: f64,
    /// Stability-selection bound on the expected number of false discoveries.
    pub pfer: f64,
    /// Stability-selection frequency cutoff.
    pub cutoff: f64,
    /// Stability-selection subsample count.
    pub b: usize,
    /// Directory the tables and sidecar are written to.
    pub output_path: PathBuf,
    /// Worker threads for the replication fan-out.
    pub workers: usize,
}

/// A partial configuration: a parsed config file or the set of CLI flags.
/// Unknown keys in a config file are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub experiment: Option<Experiment>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub rho: Option<f64>,
    pub f: Option<f64>,
    pub selector: Option<Selector>,
    pub n_reps: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub knockoff_q: Option<f64>,
    pub pfer: Option<f64>,
    pub cutoff: Option<f64>,
    pub b: Option<usize>,
    pub output_path: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ConfigPatch {
    pub fn from_toml_str(text: &str) -> SimResult<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(format!("config file: {e}")))
    }

    pub fn from_toml_file(path: &Path) -> SimResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SimError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }
}

fn default_selector(experiment: Experiment) -> Selector {
    match experiment {
        Experiment::Power | Experiment::Stability | Experiment::CoverageCoef => Selector::Knockoff,
        Experiment::CoverageProjection | Experiment::Theorem1 => Selector::Stability,
    }
}

fn default_p(experiment: Experiment, selector: Selector) -> usize {
    match (experiment, selector) {
        (Experiment::Power, Selector::Knockoff) => 30,
        (Experiment::Power, Selector::Stability) => 1000,
        (Experiment::Stability, Selector::Knockoff) => 50,
        (Experiment::Stability, Selector::Stability) => 400,
        (Experiment::CoverageCoef, _) => 30,
        (Experiment::CoverageProjection, _) => 400,
        (Experiment::Theorem1, _) => 5,
    }
}

fn default_reps(experiment: Experiment) -> usize {
    match experiment {
        Experiment::Power => 300,
        Experiment::Stability => 100,
        Experiment::CoverageCoef | Experiment::CoverageProjection => 2000,
        Experiment::Theorem1 => 3000,
    }
}

fn default_rho(experiment: Experiment) -> f64 {
    match experiment {
        Experiment::Stability => 0.5,
        _ => 0.0,
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for one experiment (replication counts sized for
    /// minutes-per-cell runs; the reference studies used larger counts).
    pub fn defaults(experiment: Experiment) -> Self {
        let selector = default_selector(experiment);
        Self {
            experiment,
            n: 200,
            p: default_p(experiment, selector),
            rho: default_rho(experiment),
            f: 0.5,
            selector,
            n_reps: default_reps(experiment),
            alpha: 0.1,
            seed: 1203,
            knockoff_q: 0.3,
            pfer: 3.0,
            cutoff: 0.7,
            b: 50,
            output_path: PathBuf::from("results"),
            workers: 1,
        }
    }

    /// Layers `patches` (config file first, CLI flags last, later wins) over
    /// the defaults for `experiment` and validates the result. A patch that
    /// names a different experiment is a configuration error. The default
    /// for `p` follows the final selector choice unless `p` is given
    /// explicitly.
    pub fn resolve(experiment: Experiment, patches: &[ConfigPatch]) -> SimResult<Self> {
        for patch in patches {
            if let Some(e) = patch.experiment {
                if e != experiment {
                    return Err(SimError::Config(format!(
                        "config file names experiment {e} but the command runs {experiment}"
                    )));
                }
            }
        }
        macro_rules! pick {
            ($field:ident) => {
                patches.iter().rev().find_map(|p| p.$field)
            };
        }

        let mut cfg = Self::defaults(experiment);
        if let Some(v) = pick!(selector) {
            cfg.selector = v;
            cfg.p = default_p(experiment, v);
        }
        if let Some(v) = pick!(n) {
            cfg.n = v;
        }
        if let Some(v) = pick!(p) {
            cfg.p = v;
        }
        if let Some(v) = pick!(rho) {
            cfg.rho = v;
        }
        if let Some(v) = pick!(f) {
            cfg.f = v;
        }
        if let Some(v) = pick!(n_reps) {
            cfg.n_reps = v;
        }
        if let Some(v) = pick!(alpha) {
            cfg.alpha = v;
        }
        if let Some(v) = pick!(seed) {
            cfg.seed = v;
        }
        if let Some(v) = pick!(knockoff_q) {
            cfg.knockoff_q = v;
        }
        if let Some(v) = pick!(pfer) {
            cfg.pfer = v;
        }
        if let Some(v) = pick!(cutoff) {
            cfg.cutoff = v;
        }
        if let Some(v) = pick!(b) {
            cfg.b = v;
        }
        if let Some(v) = patches.iter().rev().find_map(|p| p.output_path.clone()) {
            cfg.output_path = v;
        }
        if let Some(v) = pick!(workers) {
            cfg.workers = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Selection-set size `round(f * n)` implied by this cell.
    pub fn selection_rows(&self) -> usize {
        (self.f * self.n as f64 + 0.5).floor() as usize
    }

    /// Checks the cell's invariants; errors map to exit code 1.
    pub fn validate(&self) -> SimResult<()> {
        let fail = |msg: String| Err(SimError::Config(msg));
        if self.n < 8 {
            return fail(format!("n = {} is too small (need n >= 8)", self.n));
        }
        if self.p < 1 {
            return fail("p must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return fail(format!("rho = {} outside [0, 1)", self.rho));
        }
        if !(self.f > 0.0 && self.f < 1.0) {
            return fail(format!("f = {} outside (0, 1)", self.f));
        }
        let n1 = self.selection_rows();
        if n1 < 1 || n1 >= self.n {
            return fail(format!(
                "f = {} leaves an empty split for n = {}",
                self.f, self.n
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha = {} outside (0, 1)", self.alpha));
        }
        if self.n_reps < 1 {
            return fail("n_reps must be at least 1".into());
        }
        if !(self.knockoff_q > 0.0 && self.knockoff_q < 1.0) {
            return fail(format!("knockoff_q = {} outside (0, 1)", self.knockoff_q));
        }
        if !(self.pfer > 0.0) {
            return fail(format!("pfer = {} must be positive", self.pfer));
        }
        if !(self.cutoff > 0.5 && self.cutoff < 1.0) {
            return fail(format!("cutoff = {} outside (0.5, 1)", self.cutoff));
        }
        if self.b < 10 {
            return fail(format!("b = {} subsamples is too few (need >= 10)", self.b));
        }
        if self.workers < 1 || self.workers > 256 {
            return fail(format!("workers = {} outside [1, 256]", self.workers));
        }

        let splits_data = matches!(
            self.experiment,
            Experiment::Power | Experiment::Stability | Experiment::CoverageCoef
        );
        if self.selector == Selector::Knockoff && self.experiment != Experiment::Theorem1 {
            if self.n < 2 * self.p {
                return fail(format!(
                    "the knockoff selector needs n >= 2p, got n = {}, p = {}",
                    self.n, self.p
                ));
            }
            if splits_data && n1 < 2 * self.p {
                return fail(format!(
                    "the knockoff selector on the selection half needs round(f*n) >= 2p, \
                     got {} rows for p = {}",
                    n1, self.p
                ));
            }
        }

        match self.experiment {
            Experiment::Power | Experiment::Stability => {
                if self.p < 10 {
                    return fail(format!(
                        "the {} study uses 10 active coefficients and needs p >= 10, got {}",
                        self.experiment, self.p
                    ));
                }
            }
            Experiment::CoverageCoef => {
                if self.p < 6 {
                    return fail(format!(
                        "the coefficient-coverage study needs p >= 6, got {}",
                        self.p
                    ));
                }
                if self.n - n1 <= self.p {
                    return fail(format!(
                        "hold-out inference needs n - round(f*n) > p, got {} rows for p = {}",
                        self.n - n1,
                        self.p
                    ));
                }
            }
            Experiment::CoverageProjection => {
                if self.selector != Selector::Stability {
                    return fail(
                        "the projection study runs stability selection only; \
                         the knockoff needs n >= 2p, which fails when p > n"
                            .into(),
                    );
                }
                if self.p < 6 {
                    return fail(format!(
                        "the projection-coverage study needs p >= 6, got {}",
                        self.p
                    ));
                }
            }
            Experiment::Theorem1 => {
                if !(2..=20).contains(&self.p) {
                    return fail(format!(
                        "the pivot study runs at small fixed p in [2, 20], got {}",
                        self.p
                    ));
                }
            }
        }
        Ok(())
    }

    /// Stable identifier of the statistical cell, used to derive rng
    /// streams. Run plumbing (seed, worker count, output path, replication
    /// count) stays out of it, so extending a run keeps earlier streams.
    pub fn cell_id(&self) -> String {
        format!(
            "{}/n={}/p={}/rho={}/f={}/{}/q={}/pfer={}/cutoff={}/b={}/alpha={}",
            self.experiment,
            self.n,
            self.p,
            self.rho,
            self.f,
            self.selector,
            self.knockoff_q,
            self.pfer,
            self.cutoff,
            self.b,
            self.alpha
        )
    }

    /// Config echo for the metadata sidecar.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
