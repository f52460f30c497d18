//! Acceptance checks, one printed line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every line is shown by
//! `cargo test`; the process fails if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rydcav::bubble::{
    cutoff_deviation, evolve, evolve_at, sample_times, steady_transmission_bubble, EvolveOptions,
};
use rydcav::fitting::{
    fit_xi_series, transient_decay_time, DataPoint, FitModel, FitParam, FitProblem, Transient,
};
use rydcav::interaction::{blockade_volume, c6_d, c6_s, kappa};
use rydcav::linear::transmission_linear;
use rydcav::meanfield::{solve_self_consistent, transmission_meanfield, MeanFieldModel};
use rydcav::params::ComplexDetuning;
use rydcav::units::linewidth_from_geometry;
use rydcav::PhysicalParams;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn cavity_consistency() -> Outcome {
    // c / (2 L F) evaluated by hand: 299792458 / 0.132 / 120 Hz
    const EXACT_MHZ: f64 = 18.926_291_540_404;
    const QUOTED_MHZ: f64 = 18.94;
    let fwhm = linewidth_from_geometry(0.066, 120.0).unwrap();
    let exact = (fwhm - EXACT_MHZ).abs() < 1e-9;
    let quoted = (fwhm - QUOTED_MHZ).abs() / QUOTED_MHZ < 1e-3;
    let cavity = (fwhm - 20.0).abs() / 20.0 < 0.10;
    outcome(
        exact && quoted && cavity,
        format!(
            "FWHM = {fwhm:.4} MHz, {:.2}% from 2γ_c = 20 MHz",
            100.0 * (fwhm - 20.0).abs() / 20.0
        ),
    )
}

// ---------------------------------------------------------------- 2

fn c6_anchors() -> Outcome {
    let (s, d) = (c6_s(60), c6_d(56));
    outcome(
        s == -140.0 && d == 45.0,
        format!("c6_s(60) = {s}, c6_d(56) = {d} GHz·μm⁶"),
    )
}

// ---------------------------------------------------------------- 3

fn random_params(rng: &mut ChaCha8Rng) -> PhysicalParams {
    let mut p = PhysicalParams::s_state(rng.random_range(50..90));
    p.ensemble.cooperativity = rng.random_range(0.0..20.0);
    p.ensemble.gamma_e = rng.random_range(1.0..6.0);
    p.cavity.gamma_c = rng.random_range(2.0..20.0);
    p.rydberg.gamma_r = rng.random_range(0.02..1.0);
    p.drive.omega_cf = rng.random_range(0.0..10.0);
    p.drive.delta_cf = rng.random_range(-2.0..2.0);
    p.drive.delta_p = rng.random_range(-30.0..30.0);
    p.drive.alpha = rng.random_range(0.1..20.0);
    p
}

fn linear_limit_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let mut p = random_params(&mut rng);
        p.rydberg.c6_override = Some(0.0);
        let nonlinear = transmission_meanfield(&p).unwrap();
        let linear = transmission_linear(&p, p.drive.delta_p).unwrap();
        worst = worst.max((nonlinear - linear).abs() / linear);
    }
    outcome(
        worst <= 1e-10,
        format!("200 draws, worst relative difference {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- 4

fn empty_cavity_and_eit_limits() -> Outcome {
    let mut p = PhysicalParams::default();
    p.ensemble.cooperativity = 0.0;
    p.drive.omega_cf = 0.0;
    let empty = transmission_linear(&p, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    for &ge in &[1.0, 3.0, 6.0, 10.0, 20.0] {
        for &om in &[0.5, 2.0, 4.0, 8.0, 16.0] {
            for &gr in &[0.05, 0.2] {
                for &c in &[0.5, 5.0] {
                    let mut q = PhysicalParams::default();
                    q.ensemble.gamma_e = ge;
                    q.drive.omega_cf = om;
                    q.rydberg.gamma_r = gr;
                    q.ensemble.cooperativity = c;
                    let d = ge + om * om / (4.0 * gr);
                    let closed = (d / (d + 2.0 * ge * c)).powi(2);
                    worst = worst.max((transmission_linear(&q, 0.0).unwrap() - closed).abs());
                }
            }
        }
    }
    outcome(
        (empty - 1.0).abs() <= 1e-12 && worst <= 1e-12,
        format!(
            "|T_empty − 1| = {:.1e}, 100-point EIT grid worst {worst:.1e}",
            (empty - 1.0).abs()
        ),
    )
}

// ---------------------------------------------------------------- 5

/// Self-consistent intensity from the closed-form amplitudes, found by a
/// dense sign scan and bisection.
fn oracle_intensity(p: &PhysicalParams) -> f64 {
    let de = Complex64::new(p.drive.delta_p, p.ensemble.gamma_e);
    let dr = Complex64::new(p.drive.delta_p + p.drive.delta_cf, p.rydberg.gamma_r);
    let dc = Complex64::new(p.drive.delta_p - p.cavity.delta_bg, p.cavity.gamma_c);
    let v_b = blockade_volume(
        ComplexDetuning(de),
        ComplexDetuning(dr),
        p.drive.omega_cf,
        p.c6(),
    )
    .unwrap();
    let k = kappa(
        ComplexDetuning(de),
        ComplexDetuning(dr),
        p.drive.omega_cf,
        v_b,
        p.ensemble.cloud_volume,
    )
    .unwrap();
    let g = (2.0 * p.ensemble.gamma_e * p.cavity.gamma_c * p.ensemble.cooperativity).sqrt();
    let (om, alpha) = (p.drive.omega_cf, p.drive.alpha);
    let f = |x: f64| {
        let drx = dr + k * x;
        let e = de - om * om / (4.0 * drx);
        let a = alpha * e / (e * dc - g * g);
        let b = g * a / e;
        let c = 0.5 * om * b / drx;
        c.norm_sqr() - x
    };
    let x_max = 10.0 * (f(0.0));
    let n = 20_000;
    let mut lo = 0.0;
    let mut f_lo = f(0.0);
    for j in 1..=n {
        let hi = x_max * j as f64 / n as f64;
        let f_hi = f(hi);
        if f_lo * f_hi <= 0.0 {
            let (mut a, mut b, mut fa) = (lo, hi, f_lo);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fa * fm <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            return 0.5 * (a + b);
        }
        lo = hi;
        f_lo = f_hi;
    }
    f64::NAN
}

fn meanfield_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_x, mut worst_res): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let mut p = PhysicalParams::s_state(rng.random_range(56..=79));
        p.drive.delta_p = rng.random_range(-3.0..3.0);
        p.drive.omega_cf = rng.random_range(2.0..8.0);
        p.rydberg.gamma_r = rng.random_range(0.05..0.5);
        p.ensemble.cooperativity = rng.random_range(1.0..10.0);
        let p = p.at_photon_rate(rng.random_range(0.1..50.0));
        let s = solve_self_consistent(&p, 0.0).unwrap();
        let x = oracle_intensity(&p);
        worst_x = worst_x.max((s.x - x).abs() / x.max(1.0));
        let model = MeanFieldModel::from_params(&p).unwrap();
        for r in model.dynamical_residuals(s.a, s.b, s.c) {
            worst_res = worst_res.max(r.norm());
        }
    }
    outcome(
        worst_x <= 1e-8 && worst_res < 1e-9,
        format!("100 draws, worst |Δx|/max(x,1) = {worst_x:.1e}, worst dynamical residual {worst_res:.1e}"),
    )
}

// ---------------------------------------------------------------- 6

fn blockade_monotonicity() -> Outcome {
    const R_MAX: f64 = 50.0;
    let rates: Vec<f64> = (0..=100).map(|i| R_MAX * i as f64 / 100.0).collect();
    let curve = |n: u32| -> Vec<f64> {
        let p = PhysicalParams::s_state(n);
        let t: Vec<f64> = rates
            .iter()
            .map(|&r| transmission_meanfield(&p.at_photon_rate(r)).unwrap())
            .collect();
        t.iter().map(|v| v / t[0]).collect()
    };
    let mut monotone = true;
    let mut curves = Vec::new();
    for n in [56, 60, 70, 79] {
        let c = curve(n);
        monotone &= c.windows(2).all(|w| w[1] <= w[0]);
        curves.push(c);
    }
    let (low, high) = (&curves[0], &curves[3]);
    let steeper = (1..rates.len()).all(|i| high[i - 1] - high[i] > low[i - 1] - low[i]);
    outcome(
        monotone && steeper,
        format!(
            "T(R_max)/T(0): 56S {:.3}, 60S {:.3}, 70S {:.3}, 79S {:.3}; 79S slope steeper at all {} steps",
            curves[0][100],
            curves[1][100],
            curves[2][100],
            curves[3][100],
            rates.len() - 1
        ),
    )
}

// ---------------------------------------------------------------- 7

fn bubble_invariants() -> Outcome {
    let p = PhysicalParams::d_state(85);
    let times = sample_times(100.0, 0.5).unwrap();
    let series = evolve_at(
        &p,
        &times,
        &EvolveOptions {
            initial: None,
            check_positivity: true,
        },
    )
    .unwrap();
    let trace = series
        .samples
        .iter()
        .map(|s| s.trace_error)
        .fold(0.0, f64::max);
    let herm = series
        .samples
        .iter()
        .map(|s| s.hermiticity_error)
        .fold(0.0, f64::max);
    let min_eig = series
        .samples
        .iter()
        .filter_map(|s| s.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    let cutoff = cutoff_deviation(&p, &times, 2).unwrap();
    outcome(
        trace < 1e-8 && herm < 1e-10 && min_eig > -1e-8 && cutoff < 0.01,
        format!(
            "trace {trace:.1e}, hermiticity {herm:.1e}, min eigenvalue {min_eig:.1e}, N_max 4→6 max ΔT/T {cutoff:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 8

fn bubble_linear_reduction() -> Outcome {
    let mut p = PhysicalParams::s_state(70);
    p.rydberg.xi = 0.0;
    p.bubble.n_b_override = Some(1.0);
    let p = p.at_photon_rate(1e-4);
    let mut worst: f64 = 0.0;
    for k in 0..11 {
        let delta = -20.0 + 4.0 * k as f64;
        let q = p.at_detuning(delta);
        let steady = steady_transmission_bubble(&q, 1e-7).unwrap();
        let linear = transmission_linear(&q, delta).unwrap();
        if !steady.converged {
            return outcome(false, format!("no steady state at Δ = {delta} MHz"));
        }
        worst = worst.max((steady.transmission - linear).abs() / linear);
    }
    outcome(
        worst < 0.02,
        format!("11 detunings in ±20 MHz, worst relative deviation {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- 9

fn transient_timescale() -> Outcome {
    let p = PhysicalParams::d_state(85);
    let fit = transient_decay_time(&evolve(&p, 60.0, 0.25).unwrap()).unwrap();
    outcome(
        fit.converged && (3.0..=30.0).contains(&fit.tau),
        format!("85D, ξ = 2 MHz, 5 photons/μs: τ = {:.2} μs", fit.tau),
    )
}

// ---------------------------------------------------------------- 10

const XI_LEVELS: [(u32, f64); 4] = [(60, 1.8), (66, 2.2), (77, 2.3), (85, 1.1)];

fn xi_round_trip() -> Outcome {
    let clean: Vec<(PhysicalParams, Vec<DataPoint>)> = XI_LEVELS
        .iter()
        .map(|&(n, xi)| {
            let mut p = PhysicalParams::d_state(n);
            p.rydberg.xi = xi;
            let series = evolve(&p, 30.0, 0.5).unwrap();
            let data = series
                .samples
                .iter()
                .filter(|s| s.t > 0.0)
                .map(|s| DataPoint::new(s.t, s.transmission))
                .collect();
            p.rydberg.xi = 1.0;
            (p, data)
        })
        .collect();
    let entries = |data: Vec<Vec<DataPoint>>| -> Vec<Transient> {
        XI_LEVELS
            .iter()
            .zip(&clean)
            .zip(data)
            .map(|((&(n, _), (p, _)), d)| Transient {
                n,
                params: p.clone(),
                data: d,
            })
            .collect()
    };

    let exact = fit_xi_series(&entries(clean.iter().map(|c| c.1.clone()).collect()));
    let worst_exact = exact
        .iter()
        .zip(XI_LEVELS)
        .map(|(r, (_, xi))| {
            if r.is_ok() {
                (r.xi - xi).abs() / xi
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);

    const TRIALS: u64 = 100;
    const NOISE: f64 = 0.02;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut covered = [0usize; 4];
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + trial);
        let noisy: Vec<Vec<DataPoint>> = clean
            .iter()
            .map(|(_, data)| {
                data.iter()
                    .map(|d| {
                        let sigma = NOISE * d.y;
                        DataPoint {
                            x: d.x,
                            y: d.y + sigma * normal.sample(&mut rng),
                            weight: 1.0 / (sigma * sigma),
                        }
                    })
                    .collect()
            })
            .collect();
        for (k, (row, (_, xi))) in fit_xi_series(&entries(noisy))
            .iter()
            .zip(XI_LEVELS)
            .enumerate()
        {
            if row.is_ok() && row.ci95.is_some_and(|ci| (row.xi - xi).abs() <= ci) {
                covered[k] += 1;
            }
        }
    }
    let min_cover = *covered.iter().min().unwrap();
    outcome(
        worst_exact < 0.10 && min_cover >= 90,
        format!(
            "noiseless worst error {:.2}%; 2% noise CI coverage out of {TRIALS} for n = 60, 66, 77, 85: {:?}",
            100.0 * worst_exact,
            covered
        ),
    )
}

// ---------------------------------------------------------------- 11

const EIT_TRUTH: [f64; 4] = [10.0, 5.0, 4.0, 0.2];
const EIT_FREE: [FitParam; 4] = [
    FitParam::GammaC,
    FitParam::Cooperativity,
    FitParam::OmegaCf,
    FitParam::GammaR,
];

fn eit_problem(data: Vec<DataPoint>) -> FitProblem {
    let guess = [11.5, 4.2, 4.6, 0.26];
    EIT_FREE.iter().zip(guess).fold(
        FitProblem::new(FitModel::LinearEit, PhysicalParams::default(), data),
        |pr, (f, g)| pr.free(*f, g),
    )
}

fn eit_spectrum(noise: f64, seed: u64) -> Vec<DataPoint> {
    let mut p = PhysicalParams::default();
    for (f, v) in EIT_FREE.iter().zip(EIT_TRUTH) {
        f.set(&mut p, v);
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..=600)
        .map(|i| {
            let x = -30.0 + 0.1 * i as f64;
            let t = transmission_linear(&p, x).unwrap();
            if noise == 0.0 {
                return DataPoint::new(x, t);
            }
            let sigma = noise * t;
            DataPoint {
                x,
                y: t + sigma * normal.sample(&mut rng),
                weight: 1.0 / (sigma * sigma),
            }
        })
        .collect()
}

fn eit_round_trip() -> Outcome {
    let exact = eit_problem(eit_spectrum(0.0, 0)).fit().unwrap();
    let worst_exact = exact
        .best_fit
        .iter()
        .zip(EIT_TRUTH)
        .map(|(v, t)| ((v - t) / t).abs())
        .fold(0.0, f64::max);
    let mut worst_noisy: f64 = 0.0;
    let mut covered = [0usize; 4];
    for seed in 0..100 {
        let fit = eit_problem(eit_spectrum(0.01, 500 + seed)).fit().unwrap();
        for k in 0..4 {
            let err = (fit.best_fit[k] - EIT_TRUTH[k]).abs();
            worst_noisy = worst_noisy.max(err / EIT_TRUTH[k]);
            if fit.ci95[k].is_some_and(|ci| err <= ci) {
                covered[k] += 1;
            }
        }
    }
    let min_cover = *covered.iter().min().unwrap();
    outcome(
        exact.converged && worst_exact < 1e-6 && worst_noisy < 0.05 && min_cover >= 90,
        format!(
            "noiseless worst {worst_exact:.1e}; 1% noise worst {:.2}%, CI coverage {covered:?}/100",
            100.0 * worst_noisy
        ),
    )
}

// ---------------------------------------------------------------- 12

fn cli_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_rydcav");
    let dir = std::env::temp_dir().join(format!("rydcav-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let transient = dir.join("transient.csv");
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/eit_synthetic.csv");
    let d_state = [
        "--override",
        "rydberg.series=\"D\"",
        "--override",
        "rydberg.n=85",
        "--override",
        "rydberg.gamma_s=0.01",
        "--override",
        "drive.alpha=7.0710678118654755",
    ];
    let gen: Vec<&str> = [
        "bubble-evolve",
        "--t-end",
        "20",
        "--noise",
        "0.02",
        "--seed",
        "9",
        "--out",
    ]
    .into_iter()
    .chain([transient.to_str().unwrap()])
    .chain(d_state)
    .chain(["--override", "rydberg.xi=2"])
    .collect();
    let status = Command::new(exe).args(&gen).status().unwrap();
    if !status.success() {
        return outcome(false, "could not generate the transient fixture");
    }

    let runs: Vec<(&str, Vec<&str>)> = vec![
        (
            "linear-scan",
            vec!["linear-scan", "--noise", "0.01", "--seed", "11"],
        ),
        (
            "meanfield-scan",
            vec!["meanfield-scan", "--override", "scan.npoints=41"],
        ),
        (
            "bubble-evolve",
            vec![
                "bubble-evolve",
                "--t-end",
                "10",
                "--noise",
                "0.02",
                "--seed",
                "5",
            ],
        ),
        ("bubble-steady", vec!["bubble-steady"]),
        (
            "fit-eit",
            vec![
                "fit-eit",
                "--data",
                fixture.to_str().unwrap(),
                "--override",
                "cavity.gamma_c=12",
            ],
        ),
        (
            "fit-transient",
            [
                "fit-transient",
                "--data",
                transient.to_str().unwrap(),
                "--override",
                "rydberg.xi=1",
            ]
            .into_iter()
            .chain(d_state)
            .collect(),
        ),
        ("c6", vec!["c6", "--series", "D", "--n", "77"]),
        ("validate", vec!["validate", "--format", "json"]),
    ];
    let mut mismatched = Vec::new();
    for (name, args) in &runs {
        let first = Command::new(exe).args(args).output().unwrap();
        let second = Command::new(exe).args(args).output().unwrap();
        if !first.status.success() || first.stdout != second.stdout || first.stdout.is_empty() {
            mismatched.push(*name);
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} subcommands byte-identical across reruns", runs.len())
        } else {
            format!("differing or failing: {mismatched:?}")
        },
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        (
            "cavity linewidth consistency",
            Duration::from_millis(1),
            cavity_consistency,
        ),
        ("C6 anchors", Duration::from_millis(1), c6_anchors),
        (
            "linear-limit identity",
            Duration::from_secs(1),
            linear_limit_identity,
        ),
        (
            "empty-cavity and EIT limits",
            Duration::from_secs(1),
            empty_cavity_and_eit_limits,
        ),
        (
            "mean-field oracle equivalence",
            Duration::from_secs(30),
            meanfield_oracle,
        ),
        (
            "blockade monotonicity",
            Duration::from_secs(60),
            blockade_monotonicity,
        ),
        (
            "bubble-model invariants",
            Duration::from_secs(120),
            bubble_invariants,
        ),
        (
            "bubble linear reduction",
            Duration::from_secs(300),
            bubble_linear_reduction,
        ),
        (
            "transient timescale",
            Duration::from_secs(120),
            transient_timescale,
        ),
        ("xi round trip", Duration::from_secs(600), xi_round_trip),
        (
            "linear EIT fit round trip",
            Duration::from_secs(120),
            eit_round_trip,
        ),
        ("CLI determinism", Duration::from_secs(60), cli_determinism),
    ];
    let mut failures = 0;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = result.pass && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({}; {:.3?} of {:?}{})",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            name,
            result.detail,
            elapsed,
            budget,
            if in_time { "" } else { ", over budget" }
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
