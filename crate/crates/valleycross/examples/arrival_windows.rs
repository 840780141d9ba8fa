//! Arrival-time windows of successful mutants in a four-phase landscape,
//! plus the constrained growth optimizer for a transient trait.
//!
//! Run with: `cargo run --release --example arrival_windows`

use valleycross::theory;

fn main() -> valleycross::Result<()> {
    // Target-trait fitness over a four-season cycle: two good seasons,
    // two bad, positive on average.
    let fit = [1.0, -0.25, 0.5, -0.5];
    let durations = [1.0, 1.0, 1.0, 1.0];

    let set = theory::compute_arrival_set(&fit, &durations)?;
    println!("phase fitness {fit:?}, durations {durations:?}");
    println!(
        "arrival windows (mod period {}): {:?}",
        set.period, set.intervals
    );
    println!(
        "a newborn line founded inside these windows outgrows every later bad stretch; total measure {:.3} of {:.1}",
        set.total_measure, set.period
    );

    for t in [0.0, 0.4, 1.2, 2.2] {
        match theory::arrival_growth_slope(&set, &fit, &durations, t) {
            Some(gamma) => println!(
                "t = {t}: inside, certified growth slope gamma = {gamma:.4} (g(t+s) >= g(t) + gamma s)"
            ),
            None => println!("t = {t}: outside the arrival set"),
        }
    }

    // The same landscape as a pit stop with negative average: where should
    // a transient mutant arrive and how long can it grow?
    let transient = [1.0, -0.25, 0.5, -2.5]; // push the average below zero
    let avg = theory::average_fitness(&transient, &durations);
    let profile = theory::pitstop_growth_profile(&transient, &durations)?;
    println!();
    println!("transient trait fitness {transient:?} (average {avg:+.3})");
    println!(
        "optimal arrival t* = {}, growth span s* = {}, peak integrated fitness {:.3}",
        profile.t_star, profile.s_star, profile.peak
    );
    println!(
        "with a clock stretch lambda_K the peak population size scales like e^(lambda_K * {:.3})",
        profile.peak
    );
    Ok(())
}
