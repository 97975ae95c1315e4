//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test --release --test acceptance`, or a subset
//! by number: `cargo test --release --test acceptance -- 3 5`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lcsparse::experiment::{
    mean_snr, success_probability, trial_seed, Experiment, ExperimentConfig, Mode, SolverId,
};
use lcsparse::lc::{biht_lc, bsl0_lc};
use lcsparse::onebit::{
    biht_zc, bsl0_gradient, bsl0_zc, f_sigma, BihtParams, Bsl0Params, GradientForm, SolveTrace,
    SparsityStep,
};
use lcsparse::operator::{DenseOperator, SensingOperator};
use lcsparse::report::results_to_csv;
use lcsparse::sampling::{
    build_phi, build_phi_prime, lc_measure, sign_measure, uniform_levels, MeasurementEnsemble,
    SignVector,
};
use lcsparse::signal::{
    dynamic_range, random_sparse_coeffs, uniform_sample, CoeffVector, SignalSpec,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Verdict,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "gradient vs finite differences",
            budget: secs(5),
            run: gradient_fd,
        },
        Criterion {
            id: 2,
            name: "stacking identity",
            budget: secs(5),
            run: stacking_identity,
        },
        Criterion {
            id: 3,
            name: "tiny-scale oracle support",
            budget: secs(120),
            run: tiny_oracle,
        },
        Criterion {
            id: 4,
            name: "BSL0 sign consistency at full scale",
            budget: secs(600),
            run: bsl0_consistency,
        },
        Criterion {
            id: 5,
            name: "LC SNR increases with L",
            budget: secs(1800),
            run: lc_trend,
        },
        Criterion {
            id: 6,
            name: "octave-band success trend",
            budget: secs(2700),
            run: octave_band,
        },
        Criterion {
            id: 7,
            name: "sweep determinism",
            budget: secs(1200),
            run: determinism,
        },
        Criterion {
            id: 8,
            name: "LC feasibility and sparsity invariants",
            budget: secs(600),
            run: invariants,
        },
    ];
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();

    let mut failures = 0;
    for c in criteria
        .iter()
        .filter(|c| wanted.is_empty() || wanted.contains(&c.id))
    {
        let start = Instant::now();
        let v = (c.run)();
        let took = start.elapsed();
        let in_time = took <= c.budget;
        let pass = v.pass && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {}: {} - {}: {}; {:.1}s of {}s budget{}",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            v.detail,
            took.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { " (over budget)" }
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn tiny_spec() -> SignalSpec {
    SignalSpec::new(10, 10.0, 1.99, 0.01, (1, 10)).unwrap()
}

fn gradient_fd() -> Verdict {
    let n = 16;
    let zero = DMatrix::<f64>::zeros(1, n);
    let op = DenseOperator(&zero);
    let y = SignVector(vec![1]);
    let theta = 0.3;
    let form = GradientForm {
        sparsity_step: SparsityStep::Gradient,
        penalty: Some(true),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for sigma in [0.1, 0.01] {
        let cost = |a: &[f64]| {
            let e = a.iter().map(|v| v * v).sum::<f64>() - 1.0;
            f_sigma(a, sigma).unwrap() + theta * e * e
        };
        for _ in 0..100 {
            let a: Vec<f64> = (0..n)
                .map(|_| rng.random_range(-3.0 * sigma..3.0 * sigma))
                .collect();
            let g = bsl0_gradient(&a, &op, &y, sigma, 0.0, theta, form).unwrap();
            let h = 1e-5 * sigma;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                let mut p = a.clone();
                let mut m = a.clone();
                p[i] += h;
                m[i] -= h;
                let fd = (cost(&p) - cost(&m)) / (2.0 * h);
                num += (g[i] - fd).powi(2);
                den += g[i].powi(2);
            }
            worst = worst.max((num / den).sqrt());
        }
    }
    verdict(
        worst <= 1e-6,
        format!("worst relative error {worst:.2e} over 200 points"),
    )
}

fn stacking_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for i in 0..100 {
        let n_max = rng.random_range(2..=50);
        let m = rng.random_range(20..200);
        let t = 0.002;
        let spec = SignalSpec::new(n_max, 10.0, (m - 1) as f64 * t, t, (1, n_max)).unwrap();
        let l = [2, 4, 8][i % 3];
        let k = rng.random_range(1..=n_max.min(5));
        let a = random_sparse_coeffs(&spec, k, false, rng.random()).unwrap();
        let phi = build_phi(&spec);
        let x: Vec<f64> = (&phi * nalgebra::DVector::from_column_slice(&a.0))
            .iter()
            .copied()
            .collect();
        let levels = uniform_levels(dynamic_range(&x).unwrap(), l).unwrap();
        let pp = build_phi_prime(&phi, &levels).unwrap();
        let mut a_prime = a.0.clone();
        a_prime.extend(std::iter::repeat_n(-1.0, l + 1));
        let xp: Vec<f64> = (&pp * nalgebra::DVector::from_vec(a_prime))
            .iter()
            .copied()
            .collect();
        if lc_measure(&x, &levels) != sign_measure(&xp) {
            mismatches += 1;
        }
    }
    verdict(
        mismatches == 0,
        format!("{mismatches}/100 instances differ"),
    )
}

/// Best single-column candidate by sign consistency over an amplitude grid.
fn oracle_support(ens: &MeasurementEnsemble, amp_max: f64) -> usize {
    let op = ens.operator();
    let cols = ens.spec.num_coeffs();
    let slots = ens.level_slots();
    let grid: Vec<f64> = (0..1000)
        .map(|i| -amp_max + 2.0 * amp_max * (i as f64 + 0.5) / 1000.0)
        .collect();
    let mut best = (0, -1.0);
    for n in 0..cols {
        for &amp in &grid {
            let mut v = vec![0.0; op.cols()];
            v[n] = amp;
            for s in 0..slots {
                v[cols + s] = -1.0;
            }
            let c = ens.signs.agreement(&op.apply(&v));
            if c > best.1 {
                best = (n, c);
            }
        }
    }
    best.0
}

fn top_index(est: &CoeffVector) -> usize {
    let mut best = 0;
    for (i, v) in est.0.iter().enumerate() {
        if v.abs() > est.0[best].abs() {
            best = i;
        }
    }
    best
}

fn tiny_lc_ensemble(
    spec: SignalSpec,
    phi: &Arc<DMatrix<f64>>,
    a: &CoeffVector,
    l: usize,
) -> MeasurementEnsemble {
    let samples = uniform_sample(a, &spec);
    let levels = uniform_levels(dynamic_range(&samples).unwrap(), l).unwrap();
    MeasurementEnsemble::measure_lc(spec, phi.clone(), a, levels).unwrap()
}

fn tiny_oracle() -> Verdict {
    let spec = tiny_spec();
    let phi = Arc::new(build_phi(&spec));
    let trials = 200;
    let mut hits = [0usize; 4];
    for seed in 0..trials as u64 {
        let a = random_sparse_coeffs(&spec, 1, false, seed).unwrap();
        let zc = MeasurementEnsemble::measure_zc(spec, phi.clone(), &a).unwrap();
        let lc = tiny_lc_ensemble(spec, &phi, &a, 4);
        let zc_oracle = oracle_support(&zc, 1.0);
        let lc_oracle = oracle_support(&lc, 2.0);
        let biht = BihtParams::with_sparsity(1);
        let bsl0 = Bsl0Params::default();
        let picks = [
            (top_index(&biht_zc(&zc, &biht).unwrap().estimate), zc_oracle),
            (top_index(&bsl0_zc(&zc, &bsl0).unwrap().estimate), zc_oracle),
            (top_index(&biht_lc(&lc, &biht).unwrap().estimate), lc_oracle),
            (top_index(&bsl0_lc(&lc, &bsl0).unwrap().estimate), lc_oracle),
        ];
        for (h, (got, want)) in hits.iter_mut().zip(picks) {
            if got == want {
                *h += 1;
            }
        }
    }
    let names = ["biht_zc", "bsl0_zc", "biht_lc", "bsl0_lc"];
    let need = (0.95 * trials as f64).ceil() as usize;
    let detail = names
        .iter()
        .zip(hits)
        .map(|(n, h)| format!("{n} {h}/{trials}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(hits.iter().all(|&h| h >= need), detail)
}

fn bsl0_consistency() -> Verdict {
    let spec = SignalSpec::standard();
    let phi = Arc::new(build_phi(&spec));
    let params = Bsl0Params::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [1, 2, 5, 10] {
        let mut good = 0;
        for trial in 0..20 {
            let a = random_sparse_coeffs(&spec, k, false, trial_seed(4, trial, k, 0)).unwrap();
            let ens = MeasurementEnsemble::measure_zc(spec, phi.clone(), &a).unwrap();
            if bsl0_zc(&ens, &params).unwrap().sign_consistency >= 0.99 {
                good += 1;
            }
        }
        pass &= good >= 16;
        parts.push(format!("K={k} {good}/20"));
    }
    verdict(pass, parts.join(", "))
}

fn lc_trend() -> Verdict {
    let exp = Experiment::new(ExperimentConfig::for_mode(Mode::Fig2LcSweep)).unwrap();
    let rows = exp.sweep(1).unwrap();
    let means = mean_snr(&rows);
    let mut pass = true;
    let mut parts = Vec::new();
    for solver in [SolverId::BihtLc, SolverId::Bsl0Lc] {
        let series: Vec<f64> = [2, 4, 8].iter().map(|&l| means[&(solver, 10, l)]).collect();
        pass &= series.windows(2).all(|w| w[1] > w[0]);
        parts.push(format!(
            "{} {:.1}/{:.1}/{:.1} dB",
            solver.name(),
            series[0],
            series[1],
            series[2]
        ));
    }
    verdict(pass, format!("mean SNR at L=2/4/8: {}", parts.join(", ")))
}

fn baseline_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/fig3_baseline.csv")
}

fn octave_band() -> Verdict {
    let cfg = ExperimentConfig::for_mode(Mode::Fig3OctaveBand);
    let exp = Experiment::new(cfg.clone()).unwrap();
    let rows = exp.sweep(1).unwrap();
    let rates = success_probability(&rows, cfg.success_threshold_db).unwrap();
    let rate = |s: SolverId, k: usize| {
        rates
            .iter()
            .find(|g| g.solver == s && g.k == k)
            .map(|g| g.rate)
            .unwrap_or(0.0)
    };
    let ks = &cfg.k_list;
    let largest = *ks.last().unwrap();
    let mut parts = Vec::new();
    let mut trend_ok = true;
    for s in [SolverId::Bsl0, SolverId::Biht] {
        let series: Vec<f64> = ks.iter().map(|&k| rate(s, k)).collect();
        trend_ok &= series.windows(2).all(|w| w[1] <= w[0]);
        parts.push(format!("{} {:?}", s.name(), series));
    }
    let omp: Vec<f64> = ks.iter().map(|&k| rate(SolverId::Omp, k)).collect();
    parts.push(format!("omp {omp:?}"));
    let omp_ok = [SolverId::Bsl0, SolverId::Biht]
        .iter()
        .all(|&s| rate(SolverId::Omp, largest) > rate(s, largest));

    let csv = results_to_csv(&rows);
    let path = baseline_path();
    let baseline = match std::fs::read_to_string(&path) {
        Ok(frozen) if frozen == csv => "matches frozen baseline",
        Ok(_) => {
            return verdict(
                false,
                format!("{}; differs from frozen baseline", parts.join(", ")),
            )
        }
        Err(_) => {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &csv).unwrap();
            "baseline frozen on this run"
        }
    };
    verdict(
        trend_ok && omp_ok,
        format!(
            "success rates at K/200 = 0.01/0.025/0.05/0.1: {}; 1-bit non-increasing: {trend_ok}; \
             omp ahead at largest factor: {omp_ok}; {baseline}",
            parts.join(", ")
        ),
    )
}

fn determinism() -> Verdict {
    let cfg = ExperimentConfig::for_mode(Mode::Fig1ZcSweep);
    let first = results_to_csv(&Experiment::new(cfg.clone()).unwrap().sweep(1).unwrap());
    let second = results_to_csv(&Experiment::new(cfg).unwrap().sweep(1).unwrap());
    verdict(
        first == second,
        format!("{} CSV bytes, identical: {}", first.len(), first == second),
    )
}

fn check_trace(trace: &SolveTrace, k: Option<usize>) -> bool {
    !trace.history.is_empty()
        && trace
            .history
            .iter()
            .all(|r| r.feasible == Some(true) && k.is_none_or(|k| r.head_nnz <= k))
}

fn invariants() -> Verdict {
    let mut checked = 0;
    let mut bad = 0;
    let mut run = |ens: &MeasurementEnsemble, k: usize| {
        let biht = BihtParams {
            sparsity: k,
            trace_iterations: true,
            ..BihtParams::default()
        };
        let bsl0 = Bsl0Params {
            trace_iterations: true,
            ..Bsl0Params::default()
        };
        for ok in [
            check_trace(&biht_lc(ens, &biht).unwrap(), Some(k)),
            check_trace(&bsl0_lc(ens, &bsl0).unwrap(), None),
        ] {
            checked += 1;
            if !ok {
                bad += 1;
            }
        }
    };

    // tiny-scale instances as in criterion 3
    let spec = tiny_spec();
    let phi = Arc::new(build_phi(&spec));
    for seed in 0..10 {
        let a = random_sparse_coeffs(&spec, 1, false, seed).unwrap();
        run(&tiny_lc_ensemble(spec, &phi, &a, 4), 1);
    }

    // full-scale instances as in criterion 5
    let cfg = ExperimentConfig::for_mode(Mode::Fig2LcSweep);
    let spec = cfg.effective_spec();
    let phi = Arc::new(build_phi(&spec));
    for trial in 0..10 {
        let l = cfg.l_list[trial % cfg.l_list.len()];
        let k = cfg.k_list[0];
        let seed = trial_seed(cfg.master_seed, trial, k, l);
        let a = random_sparse_coeffs(&spec, k, cfg.include_dc, seed).unwrap();
        let samples = uniform_sample(&a, &spec);
        let levels = uniform_levels(dynamic_range(&samples).unwrap(), l).unwrap();
        let ens = MeasurementEnsemble::measure_lc(spec, phi.clone(), &a, levels).unwrap();
        run(&ens, k);
    }
    verdict(
        bad == 0,
        format!("{bad} of {checked} traced LC runs violate an invariant"),
    )
}
