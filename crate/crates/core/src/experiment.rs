//! Seeded Monte Carlo trials and parameter sweeps.
//!
//! Every trial derives its own seed from `(master_seed, trial, K, L)`, so a
//! sweep gives the same rows whatever order or thread count it runs with.
//! Rows are always returned in `(solver, K, L, trial)` order.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lc::{biht_lc, bsl0_lc};
use crate::omp::{crossing_measurements, omp_solve};
use crate::onebit::{biht_zc, bsl0_zc, BihtParams, Bsl0Params, SolveTrace};
use crate::operator::SensingOperator;
use crate::sampling::{
    build_phi, encode_lc_events, lc_measure, sign_measure, uniform_levels, MeasurementEnsemble,
};
use crate::signal::{
    dynamic_range, random_sparse_coeffs, reconstruction_snr, uniform_sample, CoeffVector,
    SignalSpec, SNR_CAP_DB,
};

/// Harmonic band used by the octave-band comparison.
pub const OCTAVE_BAND: (usize, usize) = (201, 400);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fig1ZcSweep,
    Fig2LcSweep,
    Fig3OctaveBand,
    Single,
}

impl Mode {
    pub fn from_short(name: &str) -> Option<Self> {
        match name {
            "fig1" | "fig1_zc_sweep" => Some(Self::Fig1ZcSweep),
            "fig2" | "fig2_lc_sweep" => Some(Self::Fig2LcSweep),
            "fig3" | "fig3_octave_band" => Some(Self::Fig3OctaveBand),
            "single" => Some(Self::Single),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverId {
    Bsl0,
    Biht,
    BihtLc,
    Bsl0Lc,
    Omp,
}

impl SolverId {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bsl0 => "bsl0",
            Self::Biht => "biht",
            Self::BihtLc => "biht_lc",
            Self::Bsl0Lc => "bsl0_lc",
            Self::Omp => "omp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Self::Bsl0,
            Self::Biht,
            Self::BihtLc,
            Self::Bsl0Lc,
            Self::Omp,
        ]
        .into_iter()
        .find(|s| s.name() == name)
    }

    /// Zero-crossing solvers report the scale-invariant SNR.
    pub fn is_zero_crossing(self) -> bool {
        matches!(self, Self::Bsl0 | Self::Biht)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub spec: SignalSpec,
    #[serde(rename = "K_list")]
    pub k_list: Vec<usize>,
    #[serde(rename = "L_list")]
    pub l_list: Vec<usize>,
    pub solvers: Vec<SolverId>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub bsl0: Bsl0Params,
    /// `sparsity` is overwritten by each sweep point's K.
    #[serde(default)]
    pub biht: BihtParams,
    #[serde(default = "default_threshold")]
    pub success_threshold_db: f64,
    #[serde(default)]
    pub include_dc: bool,
    /// Write measured wall time; off keeps result files reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_threshold() -> f64 {
    20.0
}

impl ExperimentConfig {
    /// Default configuration for a mode, with the signal model at its
    /// standard defaults (N = 500, w0 = 10, d = 2 s, T = 0.5 ms).
    pub fn for_mode(mode: Mode) -> Self {
        let base = Self {
            mode,
            spec: SignalSpec::standard(),
            k_list: vec![1, 2, 5, 10, 20, 50],
            l_list: vec![0],
            solvers: vec![SolverId::Bsl0, SolverId::Biht],
            trials: 20,
            master_seed: 1,
            bsl0: Bsl0Params::default(),
            biht: BihtParams::default(),
            success_threshold_db: default_threshold(),
            include_dc: false,
            record_wall_time: false,
        };
        match mode {
            Mode::Fig1ZcSweep => base,
            Mode::Fig2LcSweep => Self {
                k_list: vec![10],
                l_list: vec![2, 4, 8],
                solvers: vec![SolverId::BihtLc, SolverId::Bsl0Lc],
                trials: 50,
                ..base
            },
            Mode::Fig3OctaveBand => Self {
                spec: SignalSpec {
                    band: OCTAVE_BAND,
                    ..base.spec
                },
                k_list: vec![2, 5, 10, 20],
                l_list: vec![8],
                solvers: vec![SolverId::Bsl0, SolverId::Biht, SolverId::Omp],
                trials: 50,
                ..base
            },
            Mode::Single => Self {
                k_list: vec![5],
                l_list: vec![4],
                solvers: vec![
                    SolverId::Bsl0,
                    SolverId::Biht,
                    SolverId::BihtLc,
                    SolverId::Bsl0Lc,
                    SolverId::Omp,
                ],
                trials: 1,
                ..base
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Signal model actually used; the octave-band mode pins the band.
    pub fn effective_spec(&self) -> SignalSpec {
        match self.mode {
            Mode::Fig3OctaveBand => SignalSpec {
                band: OCTAVE_BAND,
                ..self.spec
            },
            _ => self.spec,
        }
    }

    /// Level counts actually swept; the zero-crossing sweep ignores `L_list`.
    pub fn effective_l_list(&self) -> Vec<usize> {
        match self.mode {
            Mode::Fig1ZcSweep => vec![0],
            _ => self.l_list.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.effective_spec();
        spec.validate()?;
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.k_list.is_empty() || self.l_list.is_empty() {
            return invalid("K_list and L_list must be non-empty");
        }
        let lo = if self.include_dc {
            spec.band.0
        } else {
            spec.band.0.max(1)
        };
        let width = spec.band.1.saturating_sub(lo) + 1;
        if let Some(k) = self.k_list.iter().find(|&&k| k == 0 || k > width) {
            return invalid(format!("K = {k} outside 1..={width}"));
        }
        if let Some(l) = self.l_list.iter().find(|&&l| l % 2 != 0) {
            return invalid(format!("L = {l} must be even"));
        }
        if !self.success_threshold_db.is_finite() {
            return invalid("success threshold must be finite");
        }
        self.bsl0.validate()?;
        Ok(())
    }

    pub fn expected_rows(&self) -> usize {
        self.k_list.len() * self.effective_l_list().len() * self.trials * self.solvers.len()
    }
}

/// One solver run on one generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub solver: SolverId,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub trial: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub sign_consistency: f64,
    pub iterations: usize,
    pub wall_time: f64,
    /// Solver error, if the run failed; not part of the CSV.
    #[serde(skip)]
    pub error: Option<String>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit seed for one sweep point.
pub fn trial_seed(master_seed: u64, trial: usize, k: usize, l: usize) -> u64 {
    [trial as u64, k as u64, l as u64]
        .into_iter()
        .fold(splitmix64(master_seed), |h, v| splitmix64(h ^ v))
}

/// A configured experiment with its measurement matrix built once.
pub struct Experiment {
    config: ExperimentConfig,
    spec: SignalSpec,
    phi: Arc<DMatrix<f64>>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.effective_spec();
        let phi = Arc::new(build_phi(&spec));
        Ok(Self { config, spec, phi })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Runs every configured solver on instance `trial` of sweep point `(k, l)`.
    pub fn run_trial(&self, k: usize, l: usize, trial: usize) -> Vec<TrialResult> {
        let seed = trial_seed(self.config.master_seed, trial, k, l);
        let instance = Instance::generate(&self.spec, k, l, self.config.include_dc, seed);
        self.config
            .solvers
            .iter()
            .map(|&solver| {
                let start = Instant::now();
                let outcome = instance
                    .as_ref()
                    .map_err(|e| Error::InvalidArgument(e.to_string()))
                    .and_then(|inst| self.run_solver(solver, inst, k));
                let wall_time = if self.config.record_wall_time {
                    start.elapsed().as_secs_f64()
                } else {
                    0.0
                };
                let mut row = TrialResult {
                    solver,
                    k,
                    l,
                    trial,
                    seed,
                    snr_db: -SNR_CAP_DB,
                    sign_consistency: 0.0,
                    iterations: 0,
                    wall_time,
                    error: None,
                };
                match outcome {
                    Ok(o) => {
                        row.snr_db = o.snr_db;
                        row.sign_consistency = o.sign_consistency;
                        row.iterations = o.iterations;
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                row
            })
            .collect()
    }

    fn run_solver(&self, solver: SolverId, inst: &Instance, k: usize) -> Result<SolverOutcome> {
        let cfg = &self.config;
        let biht = BihtParams {
            sparsity: k,
            ..cfg.biht.clone()
        };
        let trace = match solver {
            SolverId::Bsl0 => bsl0_zc(&inst.zc_ensemble(&self.phi)?, &cfg.bsl0)?,
            SolverId::Biht => biht_zc(&inst.zc_ensemble(&self.phi)?, &biht)?,
            SolverId::BihtLc => biht_lc(&inst.lc_ensemble(&self.phi)?, &biht)?,
            SolverId::Bsl0Lc => bsl0_lc(&inst.lc_ensemble(&self.phi)?, &cfg.bsl0)?,
            SolverId::Omp => return self.run_omp(inst, k),
        };
        SolverOutcome::from_trace(&trace, &inst.coeffs, solver.is_zero_crossing())
    }

    fn run_omp(&self, inst: &Instance, k: usize) -> Result<SolverOutcome> {
        let stream = encode_lc_events(&inst.samples, &inst.levels, self.spec.sample_period)?;
        let set = crossing_measurements(&stream, &self.spec)?;
        let solution = omp_solve(&set, k)?;
        let ensemble = inst.lc_ensemble(&self.phi)?;
        let augmented: Vec<f64> = solution
            .coeffs
            .0
            .iter()
            .copied()
            .chain(std::iter::repeat_n(-1.0, inst.levels.len()))
            .collect();
        let consistency = ensemble
            .signs
            .agreement(&ensemble.operator().apply(&augmented));
        Ok(SolverOutcome {
            snr_db: reconstruction_snr(&inst.coeffs, &solution.coeffs, false)?,
            sign_consistency: consistency,
            iterations: solution.support.len(),
        })
    }

    /// Full cross product `K x L x trials x solvers` using up to `threads` workers.
    pub fn sweep(&self, threads: usize) -> Result<Vec<TrialResult>> {
        let points: Vec<(usize, usize, usize)> = self
            .config
            .k_list
            .iter()
            .flat_map(|&k| {
                self.config
                    .effective_l_list()
                    .into_iter()
                    .flat_map(move |l| (0..self.config.trials).map(move |t| (k, l, t)))
            })
            .collect();

        let run = || -> Vec<TrialResult> {
            points
                .par_iter()
                .flat_map_iter(|&(k, l, t)| self.run_trial(k, l, t))
                .collect()
        };
        let mut rows = if threads <= 1 {
            points
                .iter()
                .flat_map(|&(k, l, t)| self.run_trial(k, l, t))
                .collect()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
                .install(run)
        };
        self.sort_rows(&mut rows);
        Ok(rows)
    }

    fn sort_rows(&self, rows: &mut [TrialResult]) {
        let cfg = &self.config;
        let pos =
            |list: &[usize], v: usize| list.iter().position(|&x| x == v).unwrap_or(usize::MAX);
        let l_list = cfg.effective_l_list();
        rows.sort_by_key(|r| {
            (
                cfg.solvers
                    .iter()
                    .position(|&s| s == r.solver)
                    .unwrap_or(usize::MAX),
                pos(&cfg.k_list, r.k),
                pos(&l_list, r.l),
                r.trial,
            )
        });
    }
}

/// One generated signal with both measurement flavours available.
struct Instance {
    coeffs: CoeffVector,
    samples: Vec<f64>,
    levels: Vec<f64>,
    spec: SignalSpec,
}

impl Instance {
    fn generate(
        spec: &SignalSpec,
        k: usize,
        l: usize,
        include_dc: bool,
        seed: u64,
    ) -> Result<Self> {
        let coeffs = random_sparse_coeffs(spec, k, include_dc, seed)?;
        let samples = uniform_sample(&coeffs, spec);
        let levels = uniform_levels(dynamic_range(&samples)?, l)?;
        Ok(Self {
            coeffs,
            samples,
            levels,
            spec: *spec,
        })
    }

    fn zc_ensemble(&self, phi: &Arc<DMatrix<f64>>) -> Result<MeasurementEnsemble> {
        MeasurementEnsemble::zc(self.spec, phi.clone(), sign_measure(&self.samples))
    }

    fn lc_ensemble(&self, phi: &Arc<DMatrix<f64>>) -> Result<MeasurementEnsemble> {
        MeasurementEnsemble::lc(
            self.spec,
            phi.clone(),
            self.levels.clone(),
            lc_measure(&self.samples, &self.levels),
        )
    }
}

struct SolverOutcome {
    snr_db: f64,
    sign_consistency: f64,
    iterations: usize,
}

impl SolverOutcome {
    fn from_trace(trace: &SolveTrace, truth: &CoeffVector, scale_invariant: bool) -> Result<Self> {
        Ok(Self {
            snr_db: reconstruction_snr(truth, &trace.estimate, scale_invariant)?,
            sign_consistency: trace.sign_consistency,
            iterations: trace.iterations,
        })
    }
}

/// Success rate of one `(solver, K, L)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub solver: SolverId,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
}

/// Fraction of rows per `(solver, K, L)` with `snr_db > threshold_db`.
pub fn success_probability(rows: &[TrialResult], threshold_db: f64) -> Result<Vec<GroupRate>> {
    if rows.is_empty() {
        return invalid("no result rows");
    }
    let mut groups: BTreeMap<(SolverId, usize, usize), (usize, usize)> = BTreeMap::new();
    for r in rows {
        let entry = groups.entry((r.solver, r.k, r.l)).or_default();
        entry.0 += 1;
        if r.snr_db > threshold_db {
            entry.1 += 1;
        }
    }
    Ok(groups
        .into_iter()
        .map(|((solver, k, l), (trials, successes))| GroupRate {
            solver,
            k,
            l,
            trials,
            successes,
            rate: successes as f64 / trials as f64,
        })
        .collect())
}

/// Mean SNR per `(solver, K, L)` group.
pub fn mean_snr(rows: &[TrialResult]) -> BTreeMap<(SolverId, usize, usize), f64> {
    let mut acc: BTreeMap<(SolverId, usize, usize), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.solver, r.k, r.l)).or_default();
        e.0 += r.snr_db;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(key, (sum, n))| (key, sum / n as f64))
        .collect()
}
