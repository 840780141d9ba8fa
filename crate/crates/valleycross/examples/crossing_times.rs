//! Replicated valley crossings against the predicted exponential law:
//! rescaled invasion times, their mean, and the KS shape test.
//!
//! Run with: `cargo run --release --example crossing_times`
//! (takes a few seconds; simulates ~40 rare-event trajectories)

use std::path::PathBuf;

use valleycross::config::{Config, ExperimentSettings, StopSettings};
use valleycross::harness;

fn main() -> valleycross::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/strict_valley.json");
    let loaded = Config::from_path(&path)?;
    let model = loaded.config.model();
    let scaling = loaded.config.scaling();
    let settings = ExperimentSettings {
        replicas: 40,
        ..loaded.config.experiment.clone()
    };

    println!("running {} replicas to invasion...", settings.replicas);
    let stats = harness::run_crossing_experiment(
        &model,
        &scaling,
        &settings,
        &StopSettings::default(),
        7,
        None,
    )?;

    println!("landscape: {}", stats.landscape);
    println!(
        "predicted: rate {:.4} on the K mu^L clock, mean crossing time {:.1} simulation units",
        stats.predicted_rate, stats.predicted_mean_time
    );
    let ci = stats.mean_ci.unwrap();
    println!(
        "empirical rescaled mean: {:.3} (95% CI [{:.3}, {:.3}]), predicted {:.3}",
        ci.mean, ci.lo, ci.hi, stats.predicted_mean_rescaled
    );
    if let Some(ks) = &stats.ks {
        println!(
            "KS against Exponential(rate): D = {:.4}, p = {:.3}",
            ks.statistic, ks.p_value
        );
    }
    println!("censored replicas: {}", stats.censored);
    for c in &stats.criteria {
        println!("{} {}: {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}
