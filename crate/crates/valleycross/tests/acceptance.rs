//! Acceptance suite: every criterion below runs at its stated tolerance
//! and prints one pass/fail line (use `--nocapture` to see them on
//! success).
//!
//! Seeds are pinned; all statistics are exactly reproducible.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use valleycross::config::{Config, ExperimentSettings, StopSettings};
use valleycross::engine::{Engine, RecordSpec, StopReason, StopSpec};
use valleycross::harness;
use valleycross::model::{ModelSpec, PhaseSpec, ScalingSpec};
use valleycross::{bdp, theory};

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn load(name: &str) -> (ModelSpec, ScalingSpec, ExperimentSettings) {
    let loaded = Config::from_path(&config_path(name)).expect("config parses");
    (
        loaded.config.model(),
        loaded.config.scaling(),
        loaded.config.experiment.clone(),
    )
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}

#[test]
fn acceptance_01_excursion_law() {
    let settings = ExperimentSettings {
        excursion_birth: 1.0,
        excursion_death: 2.0,
        excursion_runs: 100_000,
        ..ExperimentSettings::default()
    };
    let stats = harness::excursion_experiment(&settings, 42).unwrap();
    report(
        "01 excursion-law TV",
        stats.tv_distance < 0.01,
        &format!("TV over k=0..=20 is {:.5} (bound 0.01)", stats.tv_distance),
    );
    report(
        "01 excursion-law mean",
        (stats.empirical_mean - 1.0).abs() <= 0.02,
        &format!("empirical mean {:.4} vs b/(d-b) = 1 (±2%)", stats.empirical_mean),
    );
}

#[test]
fn acceptance_02_lambda_representations() {
    let mut worst = 0.0f64;
    for k in 1..=9 {
        let rho = 0.05 * k as f64;
        let closed = theory::lambda_of_rho(rho).unwrap();
        let series = theory::lambda_series(rho, 10_000);
        worst = worst.max((series - closed).abs());
    }
    report(
        "02 lambda-representations",
        worst < 1e-9,
        &format!("max |series(1e4 terms) - rho/(1-2rho)| = {worst:.2e} over rho = 0.05..0.45"),
    );
}

/// Extinction time of a linear birth-death line started from one
/// individual (independent jump-chain oracle).
fn sample_extinction_time(b: f64, d: f64, rng: &mut ChaCha12Rng) -> f64 {
    let rho = b / (b + d);
    let mut n = 1u64;
    let mut t = 0.0;
    while n > 0 {
        let rate = n as f64 * (b + d);
        let u: f64 = rng.gen::<f64>();
        t += -u.max(1e-300).ln() / rate;
        if rng.gen::<f64>() < rho {
            n += 1;
        } else {
            n -= 1;
        }
    }
    t
}

#[test]
fn acceptance_03_extinction_cdf() {
    // Both closed forms agree on a grid.
    let mut worst = 0.0f64;
    for &(b, d) in &[(0.5, 1.0), (1.0, 2.0), (0.25, 3.0), (1.9, 2.0)] {
        for i in 0..=50 {
            let t = 0.2 * i as f64;
            let a = bdp::extinction_cdf(t, b, d).unwrap();
            let s = bdp::extinction_cdf_standard(t, b, d);
            worst = worst.max((a - s).abs());
        }
    }
    report(
        "03 extinction-cdf closed-forms",
        worst < 1e-12,
        &format!("max |direct - standard| = {worst:.2e} across the (B,D,t) grid"),
    );

    // Monte Carlo against the closed form at four horizons.
    let n = 100_000usize;
    let mut rng = ChaCha12Rng::seed_from_u64(301);
    let times: Vec<f64> = (0..n)
        .map(|_| sample_extinction_time(1.0, 2.0, &mut rng))
        .collect();
    for &t in &[0.5, 1.0, 2.0, 5.0] {
        let empirical = times.iter().filter(|&&x| x <= t).count() as f64 / n as f64;
        let predicted = bdp::extinction_cdf(t, 1.0, 2.0).unwrap();
        let se = (predicted * (1.0 - predicted) / n as f64).sqrt();
        report(
            &format!("03 extinction-cdf MC t={t}"),
            (empirical - predicted).abs() <= 3.0 * se,
            &format!("empirical {empirical:.4} vs {predicted:.4} (3 SE = {:.4})", 3.0 * se),
        );
    }
}

#[test]
fn acceptance_04_survival_probability() {
    // Branching line with b=2, d_eff=1; survival decided at a threshold
    // the subcritical remainder cannot recross.
    let n = 100_000usize;
    let threshold = 1000u64;
    let mut rng = ChaCha12Rng::seed_from_u64(401);
    let mut survived = 0u64;
    for _ in 0..n {
        let mut pop = 1u64;
        while pop > 0 && pop < threshold {
            if rng.gen::<f64>() < 2.0 / 3.0 {
                pop += 1;
            } else {
                pop -= 1;
            }
        }
        if pop >= threshold {
            survived += 1;
        }
    }
    let freq = survived as f64 / n as f64;
    report(
        "04 survival-probability",
        (freq - 0.5).abs() <= 0.01,
        &format!("non-extinction frequency {freq:.4} vs (b-d)/b = 0.5 (±0.01)"),
    );
}

#[test]
fn acceptance_05_w_law() {
    let n = 100_000usize;
    let mut rng = ChaCha12Rng::seed_from_u64(501);
    let mut sum = 0.0;
    let mut zeros = 0u64;
    for _ in 0..n {
        let w = bdp::sample_w(2.0, 1.0, &mut rng).unwrap().value;
        if w == 0.0 {
            zeros += 1;
        }
        sum += w;
    }
    let mean = sum / n as f64;
    let atom = zeros as f64 / n as f64;
    report(
        "05 W-law mean",
        (mean - 1.0).abs() <= 0.02,
        &format!("E[W] = {mean:.4} (target 1 ± 0.02)"),
    );
    report(
        "05 W-law atom",
        (atom - 0.5).abs() <= 0.01,
        &format!("P(W=0) = {atom:.4} (target f/b = 0.5 ± 0.01)"),
    );
}

#[test]
fn acceptance_06_ode_limit() {
    let (model, scaling, settings) = load("logistic.json");
    let stats =
        harness::ode_comparison_experiment(&model, &scaling, &settings, 5, None).unwrap();
    let ok = stats.sup_distances.iter().filter(|&&d| d < 0.05).count();
    report(
        "06 ode-limit",
        ok >= 95,
        &format!(
            "{ok} of {} replicas stayed below sup distance 0.05 (need >= 95)",
            stats.replicas
        ),
    );
}

#[test]
fn acceptance_07_strict_valley_crossing() {
    let (model, scaling, settings) = load("strict_valley_acceptance.json");
    assert_eq!(settings.replicas, 200);
    let stats = harness::run_crossing_experiment(
        &model,
        &scaling,
        &settings,
        &StopSettings::default(),
        42,
        None,
    )
    .unwrap();
    let ratio = stats.mean_ratio.unwrap();
    report(
        "07 strict-valley mean",
        (0.5..=2.0).contains(&ratio),
        &format!(
            "empirical mean of T_inv*K*mu^2 = {:.3} vs 1/R_eff = {:.3} (ratio {ratio:.3}; finite-K bias expected)",
            stats.mean_ci.unwrap().mean,
            stats.predicted_mean_rescaled
        ),
    );
    let ks = stats.ks.unwrap();
    report(
        "07 strict-valley KS",
        ks.p_value >= 0.01,
        &format!("KS vs Exponential(R_eff): D = {:.4}, p = {:.4} (reject below 0.01)", ks.statistic, ks.p_value),
    );
    report(
        "07 strict-valley censoring",
        !stats.censoring_flagged,
        &format!("{} of 200 replicas censored", stats.censored),
    );
}

/// Exact integral of the periodic step function over `[a, b]`, by walking
/// phase boundaries.
fn step_integral(fit: &[f64], durations: &[f64], mut a: f64, b: f64) -> f64 {
    let period: f64 = durations.iter().sum();
    let mut acc = 0.0;
    while a < b - 1e-15 {
        let folded = a.rem_euclid(period);
        let mut lo = 0.0;
        let mut f = fit[fit.len() - 1];
        let mut to_boundary = period - folded;
        for (fi, d) in fit.iter().zip(durations) {
            if folded < lo + d {
                f = *fi;
                to_boundary = lo + d - folded;
                break;
            }
            lo += d;
        }
        let span = (b - a).min(to_boundary).max(1e-15);
        acc += f * span;
        a += span;
    }
    acc
}

/// Dense-grid oracle for the arrival set: evaluates the strict predicate
/// "g(t+s) > g(t) for every grid s in (0, period]" via a sliding-window
/// minimum, fully independent of the analytic interval construction.
fn grid_arrival_oracle(fit: &[f64], durations: &[f64], resolution: f64) -> Vec<bool> {
    let period: f64 = durations.iter().sum();
    let n = (period / resolution).round() as usize;
    // g at grid points over two periods, each cell integrated exactly.
    let mut g = vec![0.0f64; 2 * n + 1];
    for i in 0..2 * n {
        let x = i as f64 * resolution;
        g[i + 1] = g[i] + step_integral(fit, durations, x, x + resolution);
    }
    // Sliding minimum of g over windows (i, i+n] via a monotonic deque.
    let mut result = vec![false; n];
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    // Initialize with indices 1..=n for window of t-index 0.
    for j in 1..=n {
        while let Some(&back) = deque.back() {
            if g[back] >= g[j] {
                deque.pop_back();
            } else {
                break;
            }
        }
        deque.push_back(j);
    }
    for i in 0..n {
        // Window is (i, i+n]; deque front holds the argmin.
        while let Some(&front) = deque.front() {
            if front <= i {
                deque.pop_front();
            } else {
                break;
            }
        }
        let min = g[*deque.front().unwrap()];
        result[i] = min > g[i];
        // Extend window to (i+1, i+1+n].
        let j = i + 1 + n;
        if j < g.len() {
            while let Some(&back) = deque.back() {
                if g[back] >= g[j] {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(j);
        }
    }
    result
}

#[test]
fn acceptance_08_arrival_set_oracle() {
    let resolution = 1e-4;
    let mut rng = ChaCha12Rng::seed_from_u64(801);
    let mut worst_mismatch = 0.0f64;
    for case in 0..100 {
        let ell = rng.gen_range(1usize..=4);
        let fit: Vec<f64> = (0..ell)
            .map(|_| {
                let mag = rng.gen_range(0.1..2.0);
                if rng.gen::<bool>() {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let durations: Vec<f64> = (0..ell).map(|_| rng.gen_range(0.3..1.5)).collect();
        let analytic = theory::compute_arrival_set(&fit, &durations).unwrap();
        let grid = grid_arrival_oracle(&fit, &durations, resolution);
        // Every grid point must agree except within one step of an
        // analytic interval endpoint.
        let period: f64 = durations.iter().sum();
        let circle_dist = |x: f64, y: f64| {
            let d = (x - y).abs().rem_euclid(period);
            d.min(period - d)
        };
        let mut mismatches = 0usize;
        for (i, &in_grid) in grid.iter().enumerate() {
            let t = i as f64 * resolution;
            let in_analytic = analytic.contains(t);
            if in_grid != in_analytic {
                // Endpoints live on the circle of one period.
                let near_endpoint = analytic.intervals.iter().any(|&(a, b)| {
                    circle_dist(t, a) <= resolution + 1e-12
                        || circle_dist(t, b) <= resolution + 1e-12
                });
                if !near_endpoint {
                    mismatches += 1;
                    worst_mismatch = worst_mismatch.max(1.0);
                }
            }
        }
        assert_eq!(
            mismatches, 0,
            "case {case}: fit {fit:?}, durations {durations:?}, intervals {:?}",
            analytic.intervals
        );
    }
    report(
        "08 arrival-set oracle",
        worst_mismatch == 0.0,
        "analytic intervals match the dense-grid predicate on 100 random configs (endpoints within one grid step)",
    );
}

#[test]
fn acceptance_09_mesoscopic_equilibria() {
    let (model, scaling, settings) = load("mesoscopic.json");
    assert_eq!(settings.replicas, 20);
    let stats =
        harness::mesoscopic_experiment(&model, &scaling, &settings, 5, None).unwrap();
    let worst1 = stats.ratios.iter().map(|r| r[0]).fold(f64::NAN, |a, r| {
        if a.is_nan() || (r - 1.0).abs() > (a - 1.0).abs() {
            r
        } else {
            a
        }
    });
    report(
        "09 mesoscopic trait-1",
        (worst1 - 1.0).abs() <= 0.25,
        &format!("time-averaged N_1/(K mu a^i_1): worst phase ratio {worst1:.3} (±25%)"),
    );
    let worst2 = stats.ratios.iter().map(|r| r[1]).fold(f64::NAN, |a, r| {
        if a.is_nan() || (r - 1.0).abs() > (a - 1.0).abs() {
            r
        } else {
            a
        }
    });
    report(
        "09 mesoscopic trait-2",
        (0.5..=2.0).contains(&worst2),
        &format!("time-averaged N_2/(K mu^2 a^i_2): worst phase ratio {worst2:.3} (factor-2 band)"),
    );
}

#[test]
fn acceptance_10_resident_stability() {
    let (model, scaling, settings) = load("resident_stability.json");
    assert_eq!(settings.replicas, 100);
    assert_eq!(scaling.lambda_k, 20.0);
    let stats =
        harness::resident_stability_experiment(&model, &scaling, &settings, 5, None).unwrap();
    report(
        "10 resident-stability",
        stats.exceedance_fraction <= 0.05,
        &format!(
            "band ±0.1·n̄ exceeded in {:.0}% of replicas over 10 periods (allowed 5%)",
            stats.exceedance_fraction * 100.0
        ),
    );
}

#[test]
fn acceptance_11_pitstop_exponent() {
    let (model, scaling, settings) = load("pitstop.json");
    let stats =
        harness::pitstop_peak_experiment(&model, &scaling, &settings, 11, None).unwrap();
    let slope = stats.regression.as_ref().unwrap().slope;
    report(
        "11 pit-stop peak regression",
        (slope - 1.0).abs() <= 0.2,
        &format!(
            "log-peak slope on f*(remaining fit time) = {slope:.3} over lambda_K in {:?} ({} episodes; band 1 ± 0.2)",
            settings.lambda_sweep,
            stats.regression.as_ref().unwrap().n
        ),
    );

    // Analytic identity: the pit-stop time scale exceeds the naive
    // 1/(K mu^L R) scale by exactly lambda_K e^{-lambda_K T_1 f^1_w}.
    let pit = theory::pitstop_crossing_rate(&model, &scaling).unwrap();
    let naive = theory::strict_timescale(pit.k_mu_l, pit.rate);
    let factor = scaling.lambda_k * (-pit.peak_exponent).exp();
    let rel = (pit.timescale / naive / factor - 1.0).abs();
    report(
        "11 pit-stop timescale identity",
        rel < 1e-12,
        &format!("timescale / naive = lambda_K e^(-lambda_K T1 f1w) up to rel {rel:.2e}"),
    );

    // Full crossing-time law at the smallest feasible K, informational
    // only: the double asymptotics (K -> inf, lambda_K -> inf) are not
    // reachable at desk scale. The variant bounds the pit-stop trait's
    // own equilibrium (c_ww = 0.75) because at K = 1e3 the latent
    // macroscopic w-attractor otherwise absorbs ~15% of replicas.
    let mut small_model = model.clone();
    for phase in &mut small_model.phases {
        phase.competition[2][2] = 0.75;
    }
    let small_scaling = ScalingSpec {
        carrying_capacity: 1000,
        lambda_k: 5.0,
        ..scaling
    };
    let small_settings = ExperimentSettings {
        replicas: 30,
        ..settings
    };
    let info = harness::run_crossing_experiment(
        &small_model,
        &small_scaling,
        &small_settings,
        &StopSettings::default(),
        3,
        None,
    )
    .unwrap();
    println!(
        "ACCEPTANCE 11 pit-stop crossing (informational, K=1000): mean ratio {:.3}, KS p {:.3}, censored {} of {} — not a pass/fail criterion at desk scale",
        info.mean_ratio.unwrap(),
        info.ks.map(|k| k.p_value).unwrap_or(f64::NAN),
        info.censored,
        info.replicas
    );
}

#[test]
fn acceptance_12_engine_boundary_exactness() {
    // Single-type pure birth-death spanning one boundary at t = 1:
    // (b, d) = (1, 2), then (0.5, 1.5). The horizons are placed so the
    // two-segment composition differs from a no-switch continuation by
    // ~16 standard errors — the test genuinely discriminates the
    // boundary handling.
    let phase1 = PhaseSpec {
        duration: 1.0,
        birth: vec![1.0, 0.0],
        death: vec![2.0, 0.0],
        competition: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
    };
    let phase2 = PhaseSpec {
        duration: 1.0,
        birth: vec![0.5, 0.0],
        death: vec![1.5, 0.0],
        competition: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
    };
    let model = ModelSpec::new(1, vec![phase1, phase2]);
    let scaling = ScalingSpec {
        carrying_capacity: 1000,
        alpha: 1.5,
        lambda_k: 1.0,
    };
    let engine = Engine::new(&model, &scaling)
        .unwrap()
        .with_mutation_probability(0.0);

    let n = 100_000usize;
    let t_mid = 0.6; // inside the first segment
    let t_cross = 1.8; // spans the boundary at 1
    let mut rng = ChaCha12Rng::seed_from_u64(1201);
    let mut ext_mid = 0u64;
    let mut ext_cross = 0u64;
    let stop = StopSpec {
        max_time: t_cross,
        ..StopSpec::default()
    };
    for _ in 0..n {
        let mut state = engine.state_with_counts(vec![1, 0]);
        let result = engine.run(&mut state, &stop, &RecordSpec::default(), &mut rng);
        if result.reason == StopReason::Extinct {
            if state.time <= t_mid {
                ext_mid += 1;
            }
            if state.time <= t_cross {
                ext_cross += 1;
            }
        }
    }
    let segments = [
        bdp::BDSegment {
            birth: 1.0,
            death: 2.0,
            duration: 1.0,
        },
        bdp::BDSegment {
            birth: 0.5,
            death: 1.5,
            duration: 1.0,
        },
    ];
    for (label, count, t) in [
        ("within-segment", ext_mid, t_mid),
        ("two-segment", ext_cross, t_cross),
    ] {
        let empirical = count as f64 / n as f64;
        let predicted = bdp::extinction_cdf_piecewise(t, &segments).unwrap();
        let se = (predicted * (1.0 - predicted) / n as f64).sqrt();
        report(
            &format!("12 boundary-exactness {label}"),
            (empirical - predicted).abs() <= 3.0 * se,
            &format!(
                "P(extinct by {t}) empirical {empirical:.5} vs composed closed form {predicted:.5} (3 SE = {:.5})",
                3.0 * se
            ),
        );
    }
}
