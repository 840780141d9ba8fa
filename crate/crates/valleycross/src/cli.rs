//! Command-line front end: ties config files to theory reports, single
//! runs, experiments and the oracle self-test.
//!
//! Exit codes: 0 on success, 1 on failed criteria or validation
//! violations, 2 on malformed configuration or I/O trouble.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::config::{Config, LoadedConfig};
use crate::engine::{default_stride, Engine, RecordSpec, StopSpec};
use crate::harness::{self, ExperimentKind, ExperimentReport};
use crate::model::{self, Landscape};
use crate::{bdp, ode, stats, theory};

const EXIT_OK: i32 = 0;
const EXIT_FAILED: i32 = 1;
const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(
    name = "valleycross",
    version,
    about = "Exact simulation and rate theory for fitness-valley crossing in switching environments"
)]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; generated and printed when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replica count override.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Worker thread count for replicated experiments.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for generated files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// What to print on stdout for experiments.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the configuration against every structural invariant.
    Validate,
    /// Print fitness tables, classification and crossing-rate reports.
    Theory,
    /// Run a single replica and dump trajectory and arrival CSV files.
    Simulate,
    /// Run a replicated experiment: crossing | stability | mesoscopic |
    /// ode | pitstop-peak | excursion.
    Experiment { kind: String },
    /// Run the built-in oracle suite (no config needed).
    Selftest,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit 0.
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };

    let seed = cli.seed.unwrap_or_else(|| {
        let s: u64 = rand::thread_rng().gen();
        eprintln!("seed: {s} (generated; pass --seed {s} to reproduce)");
        s
    });

    let result = match &cli.command {
        Command::Validate => cmd_validate(&cli),
        Command::Theory => cmd_theory(&cli),
        Command::Simulate => cmd_simulate(&cli, seed),
        Command::Experiment { kind } => cmd_experiment(&cli, kind, seed),
        Command::Selftest => Ok(cmd_selftest(seed)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn load_config(cli: &Cli) -> crate::Result<LoadedConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| crate::Error::Config("--config <path> is required".into()))?;
    Config::from_path(path)
}

fn cmd_validate(cli: &Cli) -> crate::Result<i32> {
    let loaded = load_config(cli)?;
    let report = model::validate_model(&loaded.config.model(), &loaded.config.scaling());
    for v in &report.violations {
        println!("violation: {v}");
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if report.is_valid() {
        println!("ok: configuration satisfies all structural invariants");
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_FAILED)
    }
}

#[derive(Serialize)]
struct TheoryOutput {
    config_sha256: String,
    classification: String,
    fitness_table: theory::FitnessTable,
    #[serde(rename = "R_eff", skip_serializing_if = "Option::is_none")]
    r_eff: Option<f64>,
    #[serde(rename = "R_pitstop", skip_serializing_if = "Option::is_none")]
    r_pitstop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_report: Option<theory::RateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pitstop_report: Option<theory::PitstopReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    growth_profile: Option<theory::GrowthProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mesoscopic_table: Option<theory::MesoscopicTable>,
}

fn cmd_theory(cli: &Cli) -> crate::Result<i32> {
    let loaded = load_config(cli)?;
    let model = loaded.config.model();
    let scaling = loaded.config.scaling();
    model::require_valid(&model, &scaling)?;
    let (table, landscape) = model::classify(&model, &scaling)?;

    let mut out = TheoryOutput {
        config_sha256: loaded.sha256.clone(),
        classification: landscape.to_string(),
        fitness_table: table.clone(),
        r_eff: None,
        r_pitstop: None,
        rate_report: None,
        pitstop_report: None,
        growth_profile: None,
        mesoscopic_table: None,
    };
    match &landscape {
        Landscape::StrictValley => {
            let report = theory::rate_report(&model, &scaling)?;
            out.r_eff = Some(report.effective_rate);
            out.rate_report = Some(report);
        }
        Landscape::Pitstop { w } => {
            let report = theory::pitstop_crossing_rate(&model, &scaling)?;
            out.r_pitstop = Some(report.rate);
            let fit = table.resident_fitness_row(*w)?;
            out.growth_profile = Some(theory::pitstop_growth_profile(&fit, &table.durations)?);
            out.pitstop_report = Some(report);
        }
        Landscape::Unsupported { .. } => {}
    }
    out.mesoscopic_table = theory::mesoscopic_equilibria(&model, &scaling).ok();

    println!("{}", serde_json::to_string_pretty(&out).unwrap());
    Ok(EXIT_OK)
}

fn provenance_line(sha: &str, seed: u64) -> String {
    format!("# config_sha256={sha} seed={seed}")
}

fn write_file(path: &Path, contents: &str) -> crate::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(contents.as_bytes())?;
    Ok(())
}

fn cmd_simulate(cli: &Cli, seed: u64) -> crate::Result<i32> {
    let loaded = load_config(cli)?;
    let model = loaded.config.model();
    let scaling = loaded.config.scaling();
    model::require_valid(&model, &scaling)?;
    let engine = Engine::new(&model, &scaling)?;
    let mut state = engine.initial_state()?;
    let clock = model.phase_clock(&scaling);

    let mut stop: StopSpec = loaded.config.stop.to_stop_spec();
    if stop.max_time.is_infinite() {
        stop.max_time = loaded.config.experiment.horizon_periods * clock.rescaled_period();
    }
    let record = RecordSpec {
        stride: Some(
            loaded
                .config
                .experiment
                .stride
                .unwrap_or_else(|| default_stride(&scaling)),
        ),
        arrival_log: false,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let result = engine.run(&mut state, &stop, &record, &mut rng);

    std::fs::create_dir_all(&cli.out)?;
    let header = provenance_line(&loaded.sha256, seed);
    let n = model.num_types();

    let mut trajectory = String::new();
    trajectory.push_str(&header);
    trajectory.push('\n');
    trajectory.push_str("t,");
    trajectory.push_str(
        &(0..n)
            .map(|v| format!("N_{v}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    trajectory.push_str(",phase\n");
    for point in &result.observables.trajectory {
        let counts = point
            .counts
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        trajectory.push_str(&format!("{},{},{}\n", point.time, counts, point.phase));
    }
    let traj_path = cli.out.join("trajectory.csv");
    write_file(&traj_path, &trajectory)?;

    let mut arrivals = String::new();
    arrivals.push_str(&header);
    arrivals.push('\n');
    arrivals.push_str("trait,first_arrival_time\n");
    for (v, t) in result.observables.first_arrival.iter().enumerate() {
        if let Some(t) = t {
            arrivals.push_str(&format!("{v},{t}\n"));
        }
    }
    let arrivals_path = cli.out.join("arrivals.csv");
    write_file(&arrivals_path, &arrivals)?;

    println!(
        "stopped: {:?} at t = {:.4} after {} events; counts = {:?}",
        result.reason, state.time, result.events, state.counts
    );
    println!("wrote {} and {}", traj_path.display(), arrivals_path.display());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ProvenancedReport<'a> {
    config_sha256: &'a str,
    seed: u64,
    #[serde(flatten)]
    report: &'a ExperimentReport,
}

fn cmd_experiment(cli: &Cli, kind: &str, seed: u64) -> crate::Result<i32> {
    let kind: ExperimentKind = kind.parse()?;
    let loaded = load_config(cli)?;
    let model = loaded.config.model();
    let scaling = loaded.config.scaling();
    let mut settings = loaded.config.experiment.clone();
    if let Some(r) = cli.replicas {
        settings.replicas = r;
    }
    let report = harness::run_experiment(
        kind,
        &model,
        &scaling,
        &settings,
        &loaded.config.stop,
        seed,
        cli.workers,
    )?;

    std::fs::create_dir_all(&cli.out)?;
    let tagged = ProvenancedReport {
        config_sha256: &loaded.sha256,
        seed,
        report: &report,
    };
    let json = serde_json::to_string_pretty(&tagged).unwrap();
    let kind_slug = format!("{kind:?}").to_lowercase();
    let summary_path = cli.out.join(format!("{kind_slug}_summary.json"));
    write_file(&summary_path, &json)?;

    let (header, rows) = report.csv_rows();
    let mut csv = provenance_line(&loaded.sha256, seed);
    csv.push('\n');
    csv.push_str(&header);
    csv.push('\n');
    for row in rows {
        csv.push_str(&row);
        csv.push('\n');
    }
    let csv_path = cli.out.join(format!("{kind_slug}_replicas.csv"));
    write_file(&csv_path, &csv)?;

    match cli.format {
        OutputFormat::Json => println!("{json}"),
        OutputFormat::Csv => print!("{csv}"),
    }
    for c in report.criteria() {
        eprintln!(
            "{} {}: {}",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    eprintln!("wrote {} and {}", summary_path.display(), csv_path.display());
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAILED })
}

fn check(name: &str, pass: bool, detail: String, failures: &mut usize) {
    if pass {
        println!("ok   {name}: {detail}");
    } else {
        println!("FAIL {name}: {detail}");
        *failures += 1;
    }
}

/// Fast oracle suite over the closed-form layer and the integrator.
fn cmd_selftest(seed: u64) -> i32 {
    let mut failures = 0usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // Excursion-weight series against the closed form.
    let worst = (1..=9)
        .map(|k| {
            let rho = 0.05 * k as f64;
            (theory::lambda_series(rho, 10_000) - theory::lambda_of_rho(rho).unwrap()).abs()
        })
        .fold(0.0, f64::max);
    check(
        "excursion-weight-series",
        worst < 1e-9,
        format!("max |series - closed| = {worst:.2e}"),
        &mut failures,
    );

    // Excursion law normalization and mean.
    let total: f64 = (0..=300)
        .map(|k| bdp::excursion_pmf(k, 1.0, 2.0).unwrap())
        .sum();
    check(
        "excursion-pmf-normalization",
        (total - 1.0).abs() < 1e-12,
        format!("sum = {total}"),
        &mut failures,
    );

    // Monte Carlo excursions against the law.
    let mut zero = 0u64;
    let mut sum = 0u64;
    let runs = 20_000;
    for _ in 0..runs {
        let (b, _) = bdp::simulate_excursion(1.0, 2.0, &mut rng).unwrap();
        if b == 0 {
            zero += 1;
        }
        sum += b;
    }
    let p0 = zero as f64 / runs as f64;
    let mean = sum as f64 / runs as f64;
    check(
        "excursion-simulation",
        (p0 - 2.0 / 3.0).abs() < 0.01 && (mean - 1.0).abs() < 0.05,
        format!("P(B=0) = {p0:.4}, mean = {mean:.4}"),
        &mut failures,
    );

    // Both extinction forms agree on a subcritical grid.
    let mut worst = 0.0f64;
    for &(b, d) in &[(0.5, 1.0), (1.0, 2.0), (1.5, 1.7)] {
        for i in 1..=20 {
            let t = 0.3 * i as f64;
            let a = bdp::extinction_cdf(t, b, d).unwrap();
            let s = bdp::extinction_cdf_standard(t, b, d);
            worst = worst.max((a - s).abs());
        }
    }
    check(
        "extinction-closed-forms",
        worst < 1e-12,
        format!("max |direct - standard| = {worst:.2e}"),
        &mut failures,
    );

    // W sampler moments.
    let mut wsum = 0.0;
    let mut zeros = 0u64;
    for _ in 0..runs {
        let w = bdp::sample_w(2.0, 1.0, &mut rng).unwrap().value;
        if w == 0.0 {
            zeros += 1;
        }
        wsum += w;
    }
    let wmean = wsum / runs as f64;
    let atom = zeros as f64 / runs as f64;
    check(
        "w-sampler",
        (wmean - 1.0).abs() < 0.05 && (atom - 0.5).abs() < 0.015,
        format!("E[W] = {wmean:.4}, P(W=0) = {atom:.4}"),
        &mut failures,
    );

    // Survival probability equals the long-time survival of the cdf.
    let lim = 1.0 - bdp::extinction_cdf(500.0, 2.0, 1.0).unwrap();
    check(
        "survival-limit",
        (bdp::survival_probability(2.0, 1.0) - lim).abs() < 1e-9,
        format!("(b-d)/b = 0.5 vs 1 - F(inf) = {lim:.6}"),
        &mut failures,
    );

    // Integrator: logistic hitting time against the closed form.
    let phase = crate::model::PhaseSpec {
        duration: 50.0,
        birth: vec![2.0, 0.0],
        death: vec![1.0, 1.0],
        competition: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    };
    let model = crate::model::ModelSpec::new(1, vec![phase]);
    let scaling = crate::model::ScalingSpec {
        carrying_capacity: 1000,
        alpha: 1.5,
        lambda_k: 1.0,
    };
    let traj = ode::integrate(&[0.01, 0.0], 0.0, 20.0, &model, &scaling, 1e-3).unwrap();
    let t_closed = ((1.0_f64 / 0.01 - 1.0) / (1.0 / 0.99 - 1.0)).ln();
    let t_num = traj.hitting_time(0, 0.99).unwrap();
    check(
        "ode-logistic-hitting-time",
        (t_num - t_closed).abs() < 1e-6,
        format!("numeric {t_num:.8} vs closed {t_closed:.8}"),
        &mut failures,
    );
    let residual = ode::lv_derivative(&[1.0, 0.0], &model.phases[0])[0].abs();
    check(
        "ode-fixed-point",
        residual < 1e-14,
        format!("residual {residual:.2e}"),
        &mut failures,
    );

    // KS calibration on a known generator.
    let draws: Vec<f64> = (0..5000)
        .map(|_| -(rng.gen::<f64>().max(1e-12)).ln() / 3.0)
        .collect();
    let ks = stats::ks_exponential(&draws, 3.0).unwrap();
    check(
        "ks-calibration",
        ks.p_value > 0.001,
        format!("D = {:.4}, p = {:.4}", ks.statistic, ks.p_value),
        &mut failures,
    );

    if failures == 0 {
        println!("selftest: all checks passed");
        EXIT_OK
    } else {
        println!("selftest: {failures} check(s) failed");
        EXIT_FAILED
    }
}
