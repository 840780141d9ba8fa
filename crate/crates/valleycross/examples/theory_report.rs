//! Closed-form layer on the two bundled landscapes: fitness tables,
//! classification, crossing rates and predicted time scales.
//!
//! Run with: `cargo run --release --example theory_report`

use std::path::PathBuf;

use valleycross::config::Config;
use valleycross::model::{classify, Landscape};
use valleycross::theory;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn main() -> valleycross::Result<()> {
    for name in ["strict_valley.json", "pitstop.json"] {
        let loaded = Config::from_path(&config(name))?;
        let model = loaded.config.model();
        let scaling = loaded.config.scaling();
        let (table, landscape) = classify(&model, &scaling)?;

        println!("── {name} ──");
        println!("classification: {landscape}");
        println!("resident equilibria per phase: {:?}",
            (1..=model.num_phases()).map(|i| table.equilibrium(i, 0)).collect::<Vec<_>>());
        for w in 1..=model.num_traits {
            let per_phase: Vec<f64> = (1..=model.num_phases())
                .map(|i| table.fitness_vs_resident(i, w).unwrap())
                .collect();
            println!(
                "trait {w}: phase fitness {per_phase:?}, average {:+.3}",
                table.average_fitness[w]
            );
        }

        match landscape {
            Landscape::StrictValley => {
                let report = theory::rate_report(&model, &scaling)?;
                println!("phase crossing rates: {:?}", report.phase_rates);
                println!(
                    "arrival windows (mod period): {:?} (measure {:.4})",
                    report.arrival_set.intervals, report.arrival_set.total_measure
                );
                println!("effective rate R_eff = {}", report.effective_rate);
                println!(
                    "predicted mean crossing time: {:.1} simulation units ({:.2} on the K mu^L clock)",
                    report.timescale,
                    1.0 / report.effective_rate
                );
            }
            Landscape::Pitstop { w } => {
                let report = theory::pitstop_crossing_rate(&model, &scaling)?;
                println!("pit stop at trait {w}: R_pitstop = {}", report.rate);
                println!(
                    "peak exponent lambda_K T1 f = {:.2} (typical peak size e^{:.2} ~ {:.0})",
                    report.peak_exponent,
                    report.peak_exponent,
                    report.peak_exponent.exp()
                );
                println!(
                    "predicted extinction offset of a fit-phase-start line: {:.3} of a period",
                    report.h_zero / 2.0
                );
                println!("predicted mean crossing time: {:.1} simulation units", report.timescale);
                let fit = table.resident_fitness_row(w)?;
                let profile = theory::pitstop_growth_profile(&fit, &table.durations)?;
                println!(
                    "growth optimizer: arrive at t* = {}, grow for s* = {} (peak integrated fitness {:.3})",
                    profile.t_star, profile.s_star, profile.peak
                );
            }
            Landscape::Unsupported { .. } => {}
        }
        println!();
    }
    Ok(())
}
