//! The excursion law behind the valley-hopping weights: birth counts of
//! subcritical lines against the closed-form Catalan distribution.
//!
//! Run with: `cargo run --release --example excursion_law`

use valleycross::bdp;
use valleycross::config::ExperimentSettings;
use valleycross::harness;
use valleycross::theory;

fn main() -> valleycross::Result<()> {
    let (b, d) = (1.0, 2.0);
    let settings = ExperimentSettings {
        excursion_birth: b,
        excursion_death: d,
        excursion_runs: 100_000,
        ..ExperimentSettings::default()
    };
    let stats = harness::excursion_experiment(&settings, 42)?;

    println!("subcritical line with b = {b}, d = {d}; {} simulated excursions", stats.runs);
    println!("births  simulated  closed-form");
    for k in 0..=8u64 {
        let pmf = bdp::excursion_pmf(k, b, d)?;
        let emp = stats.histogram[k as usize] as f64 / stats.runs as f64;
        let bar = "#".repeat((pmf * 120.0).round() as usize);
        println!("{k:>6}  {emp:>9.5}  {pmf:>11.5}  {bar}");
    }
    println!(
        "total variation over 0..=20: {:.5}; mean {:.4} vs b/(d-b) = {:.4}",
        stats.tv_distance, stats.empirical_mean, stats.predicted_mean
    );

    // The same quantity drives the hop weight: lambda(rho) equals the
    // expected birth count of one excursion.
    let rho = b / (b + d);
    println!(
        "hop weight lambda(rho) at rho = {rho:.4}: closed form {:.4}, series {:.4}",
        theory::lambda_of_rho(rho)?,
        theory::lambda_series(rho, 10_000)
    );
    Ok(())
}
