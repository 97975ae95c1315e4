use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use lcsparse::experiment::{success_probability, Experiment, ExperimentConfig, Mode, SolverId};
use lcsparse::lc::{biht_lc, bsl0_lc};
use lcsparse::omp::{crossing_measurements, omp_solve};
use lcsparse::onebit::{biht_zc, bsl0_zc, BihtParams, Bsl0Params};
use lcsparse::report::{rates_to_csv, results_from_csv, results_to_csv, snr_plot, success_plot};
use lcsparse::sampling::{
    build_phi, decode_lc_events, encode_lc_events, uniform_levels, LcEventStream,
    MeasurementEnsemble,
};
use lcsparse::signal::{
    dynamic_range, random_sparse_coeffs, reconstruction_snr, uniform_sample, CoeffVector,
    SignalSpec,
};
use lcsparse::Error;

#[derive(Parser)]
#[command(
    name = "lcsparse",
    version,
    about = "Sparse harmonic reconstruction from zero and level crossings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random sparse signal and its crossing event stream.
    Gen {
        /// Signal model JSON; defaults to N=500, w0=10, d=2, T=0.5 ms.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Even number L; L + 1 levels are placed. L = 0 records zero crossings.
        #[arg(long, default_value_t = 0)]
        levels: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Reconstruct one instance from an event stream.
    Solve {
        /// Event stream written by `gen`.
        #[arg(long)]
        input: PathBuf,
        /// Signal model JSON; defaults to the model used by `gen`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        solver: SolverArg,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Reference coefficients (sparse JSON) for an SNR report.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a Monte Carlo sweep.
    Experiment {
        /// Experiment config JSON; `--mode` defaults are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Render plots and success rates from a results CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        threshold: f64,
        /// Harmonic band width used for the sparsity factor K / width.
        #[arg(long, default_value_t = 500)]
        band_width: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fig1,
    Fig2,
    Fig3,
    Single,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fig1 => Mode::Fig1ZcSweep,
            ModeArg::Fig2 => Mode::Fig2LcSweep,
            ModeArg::Fig3 => Mode::Fig3OctaveBand,
            ModeArg::Single => Mode::Single,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Bsl0,
    Biht,
    BihtLc,
    Bsl0Lc,
    Omp,
}

impl From<SolverArg> for SolverId {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Bsl0 => SolverId::Bsl0,
            SolverArg::Biht => SolverId::Biht,
            SolverArg::BihtLc => SolverId::BihtLc,
            SolverArg::Bsl0Lc => SolverId::Bsl0Lc,
            SolverArg::Omp => SolverId::Omp,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            config,
            seed,
            k,
            levels,
            out,
        } => generate(config.as_deref(), seed, k, levels, &out),
        Command::Solve {
            input,
            config,
            solver,
            k,
            truth,
            out,
        } => solve(
            &input,
            config.as_deref(),
            solver.into(),
            k,
            truth.as_deref(),
            &out,
        ),
        Command::Experiment {
            config,
            mode,
            seed,
            threads,
            out,
        } => experiment(config.as_deref(), mode, seed, threads, &out),
        Command::Report {
            input,
            threshold,
            band_width,
            out,
        } => report(&input, threshold, band_width, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => 3,
                _ => 2,
            })
        }
    }
}

fn read(path: &Path) -> lcsparse::Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> lcsparse::Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_spec(path: Option<&Path>) -> lcsparse::Result<SignalSpec> {
    let spec = match path {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => SignalSpec::standard(),
    };
    spec.validate()?;
    Ok(spec)
}

fn generate(
    config: Option<&Path>,
    seed: u64,
    k: usize,
    l: usize,
    out: &Path,
) -> lcsparse::Result<()> {
    let spec = load_spec(config)?;
    let coeffs = random_sparse_coeffs(&spec, k, false, seed)?;
    let samples = uniform_sample(&coeffs, &spec);
    let levels = if l == 0 {
        vec![0.0]
    } else {
        uniform_levels(dynamic_range(&samples)?, l)?
    };
    let stream = encode_lc_events(&samples, &levels, spec.sample_period)?;
    write(out, "spec.json", &serde_json::to_string_pretty(&spec)?)?;
    write(out, "coeffs.json", &coeffs.to_sparse_json()?)?;
    write(out, "coeffs.csv", &format!("{}\n", coeffs.to_csv_row()))?;
    write(out, "events.txt", &stream.to_text())?;
    println!("{} events on {} levels", stream.events.len(), levels.len());
    Ok(())
}

fn solve(
    input: &Path,
    config: Option<&Path>,
    solver: SolverId,
    k: usize,
    truth: Option<&Path>,
    out: &Path,
) -> lcsparse::Result<()> {
    let spec = match config {
        Some(_) => load_spec(config)?,
        None => {
            let beside = input.with_file_name("spec.json");
            load_spec(beside.exists().then_some(beside.as_path()))?
        }
    };
    let stream = LcEventStream::from_text(&read(input)?)?;
    if stream.num_samples != spec.num_samples() {
        return Err(Error::InvalidArgument(format!(
            "stream has {} samples, signal model expects {}",
            stream.num_samples,
            spec.num_samples()
        )));
    }
    let signs = decode_lc_events(&stream)?;
    let phi = Arc::new(build_phi(&spec));
    let biht = BihtParams::with_sparsity(k);
    let bsl0 = Bsl0Params::default();

    let (estimate, trace_json) = match solver {
        SolverId::Bsl0 | SolverId::Biht => {
            if stream.levels != [0.0] {
                return Err(Error::InvalidArgument(
                    "zero-crossing solvers need a stream recorded at the single level 0".into(),
                ));
            }
            let ens = MeasurementEnsemble::zc(spec, phi, signs)?;
            let trace = if solver == SolverId::Bsl0 {
                bsl0_zc(&ens, &bsl0)?
            } else {
                biht_zc(&ens, &biht)?
            };
            (trace.estimate.clone(), trace.to_json()?)
        }
        SolverId::BihtLc | SolverId::Bsl0Lc => {
            let ens = MeasurementEnsemble::lc(spec, phi, stream.levels.clone(), signs)?;
            let trace = if solver == SolverId::BihtLc {
                biht_lc(&ens, &biht)?
            } else {
                bsl0_lc(&ens, &bsl0)?
            };
            (trace.estimate.clone(), trace.to_json()?)
        }
        SolverId::Omp => {
            let sol = omp_solve(&crossing_measurements(&stream, &spec)?, k)?;
            let json = serde_json::to_string_pretty(&sol)?;
            (sol.coeffs, json)
        }
    };
    write(out, "trace.json", &trace_json)?;
    write(out, "estimate.json", &estimate.to_sparse_json()?)?;
    if let Some(path) = truth {
        let reference = CoeffVector::from_sparse_json(&read(path)?, spec.num_coeffs())?;
        let snr = reconstruction_snr(&reference, &estimate, solver.is_zero_crossing())?;
        println!("snr_db {snr:.3}");
    }
    Ok(())
}

fn experiment(
    config: Option<&Path>,
    mode: Option<ModeArg>,
    seed: Option<u64>,
    threads: usize,
    out: &Path,
) -> lcsparse::Result<()> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::from_json(&read(p)?)?,
        None => ExperimentConfig::for_mode(mode.map(Mode::from).unwrap_or(Mode::Single)),
    };
    if let (Some(_), Some(m)) = (config, mode) {
        cfg.mode = m.into();
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let exp = Experiment::new(cfg.clone())?;
    eprintln!("running {} rows", cfg.expected_rows());
    let rows = exp.sweep(threads.max(1))?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {} K={} L={} trial {} failed: {}",
            r.solver.name(),
            r.k,
            r.l,
            r.trial,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let rates = success_probability(&rows, cfg.success_threshold_db)?;
    write(out, "config.json", &serde_json::to_string_pretty(&cfg)?)?;
    write(out, "results.csv", &results_to_csv(&rows))?;
    write(out, "rates.csv", &rates_to_csv(&rates))?;
    write(out, "snr.svg", &snr_plot(&rows))?;
    let width = cfg.effective_spec().band_width();
    write(
        out,
        "success.svg",
        &success_plot(&rows, cfg.success_threshold_db, width)?,
    )?;
    Ok(())
}

fn report(input: &Path, threshold: f64, band_width: usize, out: &Path) -> lcsparse::Result<()> {
    if band_width == 0 {
        return Err(Error::InvalidArgument("band width must be positive".into()));
    }
    let rows = results_from_csv(&read(input)?)?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument("results file has no rows".into()));
    }
    write(
        out,
        "rates.csv",
        &rates_to_csv(&success_probability(&rows, threshold)?),
    )?;
    write(out, "snr.svg", &snr_plot(&rows))?;
    write(
        out,
        "success.svg",
        &success_plot(&rows, threshold, band_width)?,
    )?;
    Ok(())
}
