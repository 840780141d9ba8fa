//! Law of large numbers at work: rescaled stochastic paths against the
//! deterministic limit system, with sup-distance statistics.
//!
//! Run with: `cargo run --release --example deterministic_limit`

use std::path::PathBuf;

use valleycross::config::Config;
use valleycross::harness;
use valleycross::ode;

fn main() -> valleycross::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/logistic.json");
    let loaded = Config::from_path(&path)?;
    let model = loaded.config.model();
    let scaling = loaded.config.scaling();

    // The limit trajectory from the same rounded start.
    let n0 = vec![
        (scaling.carrying_capacity as f64 * 1.0).floor() / scaling.carrying_capacity as f64,
        0.0,
    ];
    let reference = ode::integrate(&n0, 0.0, 10.0, &model, &scaling, 1e-3)?;
    println!(
        "deterministic limit: n(0) = {:.4} -> n(10) = {:.6}",
        n0[0],
        reference.final_state().densities[0]
    );

    let stats = harness::ode_comparison_experiment(
        &model,
        &scaling,
        &loaded.config.experiment,
        5,
        None,
    )?;
    let mut sorted = stats.sup_distances.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| sorted[((sorted.len() - 1) as f64 * q) as usize];
    println!(
        "{} replicas at K = {}: sup-distance quartiles {:.4} / {:.4} / {:.4}, max {:.4}",
        stats.replicas,
        scaling.carrying_capacity,
        pick(0.25),
        pick(0.5),
        pick(0.75),
        sorted[sorted.len() - 1]
    );
    println!(
        "{} of {} replicas stayed within epsilon = {} of the limit path",
        stats
            .sup_distances
            .iter()
            .filter(|&&d| d < stats.epsilon)
            .count(),
        stats.replicas,
        stats.epsilon
    );
    Ok(())
}
