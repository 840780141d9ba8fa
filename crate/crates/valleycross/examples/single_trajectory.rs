//! One exact trajectory of the strict-valley model: watch the resident
//! fluctuate, the chain trait hover at mesoscopic size, and (with luck)
//! the target trait take over.
//!
//! Run with: `cargo run --release --example single_trajectory`

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use valleycross::config::Config;
use valleycross::engine::{default_stride, Engine, RecordSpec, StopSpec};

fn main() -> valleycross::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/strict_valley.json");
    let loaded = Config::from_path(&path)?;
    let model = loaded.config.model();
    let scaling = loaded.config.scaling();

    let engine = Engine::new(&model, &scaling)?;
    let mut state = engine.initial_state()?;
    let stop = StopSpec {
        invasion_epsilon: Some(0.05),
        max_time: 2000.0,
        ..StopSpec::default()
    };
    let record = RecordSpec {
        stride: Some(default_stride(&scaling)),
        arrival_log: false,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let result = engine.run(&mut state, &stop, &record, &mut rng);

    println!(
        "run ended: {:?} at t = {:.2} after {} events",
        result.reason, state.time, result.events
    );
    println!("final counts: {:?}", state.counts);
    println!("per-trait peaks: {:?}", result.observables.peak);
    for (v, t) in result.observables.first_arrival.iter().enumerate() {
        if let Some(t) = t {
            println!("first mutant of trait {v} arrived at t = {t:.2}");
        }
    }

    // Coarse sparkline of the target trait on a log scale.
    let traj = &result.observables.trajectory;
    let glyphs = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    let step = (traj.len() / 72).max(1);
    let line: String = traj
        .iter()
        .step_by(step)
        .map(|p| {
            let n = p.counts[model.num_traits] as f64;
            let level = if n < 1.0 {
                0
            } else {
                ((n.ln() / (scaling.carrying_capacity as f64).ln()) * 9.0).ceil() as usize
            };
            glyphs[level.min(9)]
        })
        .collect();
    println!("target-trait size over time (log scale, 0..K):");
    println!("[{line}]");
    Ok(())
}
