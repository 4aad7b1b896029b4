//! Utility metrics and the Monte-Carlo experiment runner.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    decentral_ru, local_ru, shuffle_ru, Algorithm, Bound, BudgetSpec, Estimate, RunOptions,
};
use crate::graph::{exact_stats, generate_ba, load_edge_list_file, Graph, GraphStats, LoadOptions};
use crate::rng::{splitmix64, TrialRng};
use crate::shuffle::TabulatedBound;

/// Denominator convention for the relative error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReMode {
    /// `|q̂ - q| / max(|q|, η)`.
    #[default]
    Guarded,
    /// `|q̂ - q| / min(q, η)`, taken literally (negative for negative `q`).
    PaperLiteral,
}

/// `η = n / 1000`.
pub fn eta(n: usize) -> f64 {
    n as f64 / 1000.0
}

/// `|estimate - truth| / max(|truth|, n/1000)`.
pub fn relative_error(estimate: f64, truth: f64, n: usize) -> f64 {
    relative_error_with(estimate, truth, n, ReMode::Guarded)
}

pub fn relative_error_with(estimate: f64, truth: f64, n: usize, mode: ReMode) -> f64 {
    let eta = eta(n);
    let denom = match mode {
        ReMode::Guarded => truth.abs().max(eta),
        ReMode::PaperLiteral => truth.min(eta),
    };
    (estimate - truth).abs() / denom
}

/// Mean squared deviation from `truth`.
pub fn empirical_mse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidParameter("MSE of an empty sample".into()));
    }
    Ok(estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64)
}

/// Fraction of estimates whose sign matches `truth`'s; zero estimates count
/// as wrong.
pub fn sign_accuracy(estimates: &[f64], truth: f64) -> Result<f64> {
    if truth == 0.0 || truth.is_nan() {
        return Err(Error::UndefinedSign);
    }
    if estimates.is_empty() {
        return Err(Error::InvalidParameter("sign accuracy of an empty sample".into()));
    }
    let correct = estimates
        .iter()
        .filter(|&&e| e != 0.0 && (e > 0.0) == (truth > 0.0))
        .count();
    Ok(correct as f64 / estimates.len() as f64)
}

/// Second-order Taylor approximations of `E[X/Y]` and `V[X/Y]`:
///
/// ```text
/// E[X/Y] ≈ EX/EY - Cov/EY² + EX·VY/EY³
/// V[X/Y] ≈ VX/EY² - 2·EX·Cov/EY³ + EX²·VY/EY⁴
/// ```
pub fn ratio_moment_approx(ex: f64, ey: f64, vx: f64, vy: f64, cov: f64) -> Result<(f64, f64)> {
    if ey == 0.0 {
        return Err(Error::InvalidParameter("E[Y] = 0 in a ratio approximation".into()));
    }
    let mean = ex / ey - cov / ey.powi(2) + ex * vy / ey.powi(3);
    let var = vx / ey.powi(2) - 2.0 * ex * cov / ey.powi(3) + ex * ex * vy / ey.powi(4);
    Ok((mean, var))
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { 0.5 * (v[mid - 1] + v[mid]) } else { v[mid] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    File {
        path: PathBuf,
        #[serde(default)]
        load: LoadOptions,
    },
    Ba {
        n: usize,
        m: usize,
        seed: u64,
    },
}

impl GraphSource {
    pub fn load(&self) -> Result<Graph> {
        match self {
            GraphSource::File { path, load } => Ok(load_edge_list_file(path, load)?.graph),
            GraphSource::Ba { n, m, seed } => generate_ba(*n, *m, *seed),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            GraphSource::File { path, .. } => format!("file:{}", path.display()),
            GraphSource::Ba { n, m, seed } => format!("ba:n={n},m={m},seed={seed}"),
        }
    }
}

/// Budget splits applied at every grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Splits {
    /// Local: `ε₁ = f·ε`, `ε₂ = (1-f)·ε`.
    pub local_eps1_fraction: f64,
    pub shuffle_alpha: f64,
    /// Decentral: `ε₁ = f·ε`, `ε₂ = (1-f)·ε`.
    pub decentral_eps1_fraction: f64,
}

impl Default for Splits {
    fn default() -> Self {
        Splits {
            local_eps1_fraction: 0.6,
            shuffle_alpha: 0.4,
            decentral_eps1_fraction: 0.4,
        }
    }
}

impl Splits {
    pub fn budget(&self, algorithm: Algorithm, epsilon: f64, delta: f64) -> Result<BudgetSpec> {
        match algorithm {
            Algorithm::Local => {
                let f = self.local_eps1_fraction;
                BudgetSpec::local(f * epsilon, (1.0 - f) * epsilon)
            }
            Algorithm::Shuffle => BudgetSpec::shuffle(epsilon, self.shuffle_alpha, delta),
            Algorithm::Decentral => {
                let f = self.decentral_eps1_fraction;
                BudgetSpec::decentral(f * epsilon, (1.0 - f) * epsilon, delta)
            }
        }
    }
}

pub const DEFAULT_EPSILONS: [f64; 8] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}
fn default_epsilons() -> Vec<f64> {
    DEFAULT_EPSILONS.to_vec()
}
fn default_delta() -> f64 {
    1e-8
}
fn default_trials_re() -> usize {
    20
}
fn default_trials_sign() -> usize {
    100
}

/// An experiment grid. JSON form mirrors the field names; everything but
/// `graph` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub graph: GraphSource,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub splits: Splits,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Trials entering the relative-error and MSE aggregates.
    #[serde(default = "default_trials_re")]
    pub trials_re: usize,
    /// Trials entering the sign accuracy.
    #[serde(default = "default_trials_sign")]
    pub trials_sign: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses rayon's global pool. Never affects results.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub re_mode: ReMode,
    #[serde(default)]
    pub m_override: Option<u64>,
    /// `epsilon0,epsilon` table replacing the closed-form shuffle bound.
    #[serde(default)]
    pub bound_table: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(graph: GraphSource) -> Self {
        ExperimentSpec {
            graph,
            algorithms: default_algorithms(),
            epsilons: default_epsilons(),
            splits: Splits::default(),
            delta: default_delta(),
            trials_re: default_trials_re(),
            trials_sign: default_trials_sign(),
            seed: 0,
            threads: None,
            re_mode: ReMode::Guarded,
            m_override: None,
            bound_table: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |field: String, why: &str| Err(Error::InvalidParameter(format!("{field}: {why}")));
        if self.algorithms.is_empty() {
            return invalid("algorithms".into(), "must not be empty");
        }
        if self.epsilons.is_empty() {
            return invalid("epsilons".into(), "must not be empty");
        }
        for (k, &e) in self.epsilons.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                return invalid(format!("epsilons[{k}]"), &format!("must be finite and > 0, got {e}"));
            }
        }
        if self.trials_re == 0 {
            return invalid("trials_re".into(), "must be >= 1");
        }
        if self.trials_sign == 0 {
            return invalid("trials_sign".into(), "must be >= 1");
        }
        if self.threads == Some(0) {
            return invalid("threads".into(), "must be >= 1");
        }
        let s = &self.splits;
        for (name, v) in [
            ("splits.local_eps1_fraction", s.local_eps1_fraction),
            ("splits.shuffle_alpha", s.shuffle_alpha),
            ("splits.decentral_eps1_fraction", s.decentral_eps1_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return invalid(name.into(), &format!("must lie in (0, 1), got {v}"));
            }
        }
        let needs_delta = self.algorithms.iter().any(|a| *a != Algorithm::Local);
        if needs_delta && !(self.delta > 0.0 && self.delta < 1.0) {
            return invalid("delta".into(), &format!("must lie in (0, 1), got {}", self.delta));
        }
        if self.m_override == Some(0) {
            return invalid("m_override".into(), "must be >= 1");
        }
        Ok(())
    }

    fn trials_per_cell(&self) -> usize {
        self.trials_re.max(self.trials_sign)
    }
}

/// Seed of one trial: a fixed hash of `(base seed, algorithm, ε index, trial)`.
pub fn trial_seed(base: u64, algorithm: Algorithm, epsilon_index: usize, trial: usize) -> u64 {
    let mut h = splitmix64(base ^ 0x243f_6a88_85a3_08d3);
    for word in [algorithm as u64 + 1, epsilon_index as u64, trial as u64] {
        h = splitmix64(h ^ word);
    }
    h
}

/// Runs one protocol with explicit options.
pub fn run_protocol(
    algorithm: Algorithm,
    g: &Graph,
    budget: &BudgetSpec,
    rng: TrialRng,
    options: &RunOptions,
) -> Result<Estimate> {
    match algorithm {
        Algorithm::Local => local_ru(g, budget, rng, options),
        Algorithm::Shuffle => shuffle_ru(g, budget, rng, options),
        Algorithm::Decentral => decentral_ru(g, budget, rng, options),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub q_hat: Option<f64>,
    pub re: Option<f64>,
    pub sign_correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub algorithm: Algorithm,
    pub epsilon: f64,
    /// Local budget used by the shuffle protocol at this `ε`.
    pub epsilon0: Option<f64>,
    pub trials: Vec<TrialRecord>,
    pub mean_re: Option<f64>,
    pub median_re: Option<f64>,
    pub mse: Option<f64>,
    pub sign_accuracy: Option<f64>,
    pub failures: usize,
    pub partial: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl CellResult {
    pub fn estimates(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.q_hat).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub graph: String,
    pub graph_digest: String,
    pub stats: GraphStats,
    pub seed: u64,
    pub trials_re: usize,
    pub trials_sign: usize,
    pub delta: f64,
    pub re_mode: ReMode,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub provenance: Provenance,
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn cell(&self, algorithm: Algorithm, epsilon: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.algorithm == algorithm && c.epsilon == epsilon)
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| !c.partial)
    }
}

/// Order-sensitive digest of the canonical edge list.
pub fn graph_digest(g: &Graph) -> String {
    let mut h = splitmix64(g.num_nodes() as u64);
    for (i, j) in g.edges() {
        h = splitmix64(h ^ ((i as u64) << 32 | j as u64));
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_experiment_with_progress(spec, &|_| {})
}

/// Runs every `(algorithm, ε)` cell. `on_progress` is called after each
/// trial from worker threads, in no particular order.
pub fn run_experiment_with_progress(
    spec: &ExperimentSpec,
    on_progress: &(dyn Fn(Progress) + Sync),
) -> Result<ExperimentResult> {
    spec.validate()?;
    let graph = spec.graph.load()?;
    match spec.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| run_on_graph(spec, &graph, on_progress))
        }
        None => run_on_graph(spec, &graph, on_progress),
    }
}

/// Like [`run_experiment_with_progress`] but on an already loaded graph;
/// `spec.graph` is only recorded in the provenance.
pub fn run_on_graph(
    spec: &ExperimentSpec,
    graph: &Graph,
    on_progress: &(dyn Fn(Progress) + Sync),
) -> Result<ExperimentResult> {
    spec.validate()?;
    let stats = exact_stats(graph)?;
    let truth = stats.r_u;
    let n = graph.num_nodes();
    let bound = match &spec.bound_table {
        Some(path) => Bound::Tabulated(Arc::new(TabulatedBound::from_file(path)?)),
        None => Bound::ClosedForm,
    };
    let options = RunOptions {
        m_override: spec.m_override,
        bound,
        ..RunOptions::default()
    };

    let per_cell = spec.trials_per_cell();
    let cells: Vec<(Algorithm, usize, f64)> = spec
        .algorithms
        .iter()
        .flat_map(|&a| spec.epsilons.iter().enumerate().map(move |(k, &e)| (a, k, e)))
        .collect();
    let total = cells.len() * per_cell;
    let done = AtomicUsize::new(0);

    let run_trial = |&(algorithm, eps_index, epsilon): &(Algorithm, usize, f64), trial: usize| {
        let seed = trial_seed(spec.seed, algorithm, eps_index, trial);
        let started = Instant::now();
        let outcome = spec
            .splits
            .budget(algorithm, epsilon, spec.delta)
            .and_then(|budget| run_protocol(algorithm, graph, &budget, TrialRng::from_seed(seed), &options));
        let elapsed = started.elapsed();
        let completed = done.fetch_add(1, Ordering::Relaxed) + 1;
        on_progress(Progress { completed, total });
        let record = match &outcome {
            Ok(est) => TrialRecord {
                trial,
                seed,
                q_hat: Some(est.q_hat),
                re: Some(relative_error_with(est.q_hat, truth, n, spec.re_mode)),
                sign_correct: (truth != 0.0).then_some(est.q_hat != 0.0 && (est.q_hat > 0.0) == (truth > 0.0)),
                error: None,
            },
            Err(e) => TrialRecord {
                trial,
                seed,
                q_hat: None,
                re: None,
                sign_correct: None,
                error: Some(e.to_string()),
            },
        };
        (record, outcome.ok().and_then(|e| e.epsilon0), elapsed)
    };

    let flat: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..per_cell).map(move |t| (c, t)))
        .collect();
    let outputs: Vec<_> = flat
        .par_iter()
        .map(|&(c, t)| run_trial(&cells[c], t))
        .collect();

    let mut results = Vec::with_capacity(cells.len());
    for (c, &(algorithm, _, epsilon)) in cells.iter().enumerate() {
        let chunk = &outputs[c * per_cell..(c + 1) * per_cell];
        let trials: Vec<TrialRecord> = chunk.iter().map(|(r, _, _)| r.clone()).collect();
        let epsilon0 = chunk.iter().find_map(|(_, e0, _)| *e0);
        let wall_time = chunk.iter().map(|(_, _, d)| *d).sum();
        results.push(aggregate(algorithm, epsilon, epsilon0, trials, truth, spec, wall_time));
    }

    Ok(ExperimentResult {
        provenance: Provenance {
            graph: spec.graph.describe(),
            graph_digest: graph_digest(graph),
            stats,
            seed: spec.seed,
            trials_re: spec.trials_re,
            trials_sign: spec.trials_sign,
            delta: spec.delta,
            re_mode: spec.re_mode,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        cells: results,
    })
}

fn aggregate(
    algorithm: Algorithm,
    epsilon: f64,
    epsilon0: Option<f64>,
    trials: Vec<TrialRecord>,
    truth: f64,
    spec: &ExperimentSpec,
    wall_time: Duration,
) -> CellResult {
    let re_window = &trials[..spec.trials_re.min(trials.len())];
    let sign_window = &trials[..spec.trials_sign.min(trials.len())];
    let res: Vec<f64> = re_window.iter().filter_map(|t| t.re).collect();
    let re_estimates: Vec<f64> = re_window.iter().filter_map(|t| t.q_hat).collect();
    let sign_estimates: Vec<f64> = sign_window.iter().filter_map(|t| t.q_hat).collect();
    let failures = trials.iter().filter(|t| t.error.is_some()).count();
    CellResult {
        algorithm,
        epsilon,
        epsilon0,
        mean_re: (!res.is_empty()).then(|| res.iter().sum::<f64>() / res.len() as f64),
        median_re: median(&res),
        mse: empirical_mse(&re_estimates, truth).ok(),
        sign_accuracy: sign_accuracy(&sign_estimates, truth).ok(),
        failures,
        partial: failures > 0,
        trials,
        wall_time,
    }
}

#[derive(Serialize)]
struct TrialRow<'a> {
    algorithm: &'a str,
    epsilon: f64,
    trial: usize,
    q_hat: Option<f64>,
    re: Option<f64>,
    sign_correct: Option<u8>,
    seed: u64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    algorithm: &'a str,
    epsilon: f64,
    mean_re: Option<f64>,
    mse: Option<f64>,
    sign_accuracy: Option<f64>,
    trials: usize,
}

/// `algorithm,epsilon,trial,q_hat,re,sign_correct,seed`, one row per trial.
pub fn write_trials_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for cell in &result.cells {
        for t in &cell.trials {
            w.serialize(TrialRow {
                algorithm: cell.algorithm.name(),
                epsilon: cell.epsilon,
                trial: t.trial,
                q_hat: t.q_hat,
                re: t.re,
                sign_correct: t.sign_correct.map(u8::from),
                seed: t.seed,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `algorithm,epsilon,mean_re,mse,sign_accuracy,trials`, one row per cell.
pub fn write_summary_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for cell in &result.cells {
        w.serialize(SummaryRow {
            algorithm: cell.algorithm.name(),
            epsilon: cell.epsilon,
            mean_re: cell.mean_re,
            mse: cell.mse,
            sign_accuracy: cell.sign_accuracy,
            trials: cell.trials.len(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(result: &ExperimentResult, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, result)?;
    writeln!(out)?;
    Ok(())
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub trials_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub json: PathBuf,
}

/// Writes `trials.csv`, `summary.csv` and `result.json` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir)?;
    let files = OutputFiles {
        trials_csv: dir.join("trials.csv"),
        summary_csv: dir.join("summary.csv"),
        json: dir.join("result.json"),
    };
    write_trials_csv(result, std::fs::File::create(&files.trials_csv)?)?;
    write_summary_csv(result, std::fs::File::create(&files.summary_csv)?)?;
    write_json(result, std::io::BufWriter::new(std::fs::File::create(&files.json)?))?;
    Ok(files)
}
