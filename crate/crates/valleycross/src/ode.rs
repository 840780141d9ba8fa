//! Deterministic Lotka-Volterra limit of the rescaled process.
//!
//! Classical fixed-step 4th-order integration. The step sequence is split
//! exactly at rescaled phase boundaries so no step straddles a parameter
//! jump, keeping the piecewise system piecewise-smooth per step. Mutation
//! terms are omitted: the limit equation is mutation-free.

use serde::Serialize;

use crate::model::{phase_at, ModelSpec, PhaseSpec, ScalingSpec};
use crate::{Error, Result};

/// Densities of all traits at one instant.
#[derive(Debug, Clone, Serialize)]
pub struct DensityState {
    pub time: f64,
    pub densities: Vec<f64>,
}

/// Dense output of [`integrate`]: states at every accepted step.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub states: Vec<DensityState>,
}

const BLOWUP_GUARD: f64 = 1e12;

/// `dn_v/dt = (b_v - d_v - sum_w c_vw n_w) n_v` with the given phase
/// parameters.
pub fn lv_derivative(densities: &[f64], phase: &PhaseSpec) -> Vec<f64> {
    let n = densities.len();
    let mut out = vec![0.0; n];
    for v in 0..n {
        let load: f64 = phase.competition[v]
            .iter()
            .zip(densities)
            .map(|(c, d)| c * d)
            .sum();
        out[v] = (phase.birth[v] - phase.death[v] - load) * densities[v];
    }
    out
}

fn rk4_step(phase: &PhaseSpec, y: &mut [f64], h: f64) {
    let k1 = lv_derivative(y, phase);
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(y, k)| y + 0.5 * h * k).collect();
    let k2 = lv_derivative(&y2, phase);
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(y, k)| y + 0.5 * h * k).collect();
    let k3 = lv_derivative(&y3, phase);
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(y, k)| y + h * k).collect();
    let k4 = lv_derivative(&y4, phase);
    for v in 0..y.len() {
        y[v] += h / 6.0 * (k1[v] + 2.0 * k2[v] + 2.0 * k3[v] + k4[v]);
        // Non-negativity is clamped; with positive self-competition the
        // exact flow never crosses zero, so this only absorbs round-off.
        if y[v] < 0.0 {
            y[v] = 0.0;
        }
    }
}

/// Integrates the limit system from `t0` to `t1` (simulation clock) with
/// nominal step `step`, splitting at every rescaled phase boundary.
pub fn integrate(
    densities0: &[f64],
    t0: f64,
    t1: f64,
    model: &ModelSpec,
    scaling: &ScalingSpec,
    step: f64,
) -> Result<Trajectory> {
    if t1 < t0 {
        return Err(Error::InvalidParameter("t1 must be >= t0".into()));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    if densities0.len() != model.num_types() {
        return Err(Error::InvalidParameter(
            "density vector does not match the trait count".into(),
        ));
    }
    let clock = model.phase_clock(scaling);
    let period_r = clock.rescaled_period();
    let mut states = Vec::with_capacity(((t1 - t0) / step) as usize + 2);
    let mut y = densities0.to_vec();
    let mut t = t0;
    states.push(DensityState {
        time: t,
        densities: y.clone(),
    });
    while t < t1 {
        let pos = phase_at(&clock, t);
        let phase = &model.phases[pos.phase - 1];
        // Simulation time of the next parameter switch.
        let into = pos.time_into_phase * scaling.lambda_k;
        let phase_span = clock.duration(pos.phase) * scaling.lambda_k;
        let mut next_switch = t + (phase_span - into);
        if next_switch <= t {
            // Squashed by rounding at a boundary: nudge into the next phase.
            next_switch = t + period_r * 1e-12;
        }
        let window_end = t1.min(next_switch);
        let span = window_end - t;
        let n_steps = (span / step).ceil().max(1.0) as usize;
        let h = span / n_steps as f64;
        for _ in 0..n_steps {
            rk4_step(phase, &mut y, h);
            t += h;
            if y.iter().any(|&d| d > BLOWUP_GUARD || !d.is_finite()) {
                return Err(Error::Numerics(format!(
                    "density blow-up at t = {t}: {y:?}"
                )));
            }
            states.push(DensityState {
                time: t,
                densities: y.clone(),
            });
        }
        t = window_end;
        if let Some(last) = states.last_mut() {
            last.time = t;
        }
    }
    Ok(Trajectory { states })
}

impl Trajectory {
    /// Linear interpolation of the density vector at time `t`.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let states = &self.states;
        if t <= states[0].time {
            return states[0].densities.clone();
        }
        if t >= states[states.len() - 1].time {
            return states[states.len() - 1].densities.clone();
        }
        let idx = states.partition_point(|s| s.time <= t);
        let (a, b) = (&states[idx - 1], &states[idx]);
        let span = b.time - a.time;
        if span <= 0.0 {
            return b.densities.clone();
        }
        let w = (t - a.time) / span;
        a.densities
            .iter()
            .zip(&b.densities)
            .map(|(x, y)| x + w * (y - x))
            .collect()
    }

    /// First time component `v` reaches `level`, by linear interpolation
    /// between bracketing steps.
    pub fn hitting_time(&self, v: usize, level: f64) -> Option<f64> {
        let mut prev = &self.states[0];
        if prev.densities[v] >= level {
            return Some(prev.time);
        }
        for s in &self.states[1..] {
            if s.densities[v] >= level {
                let (y0, y1) = (prev.densities[v], s.densities[v]);
                let w = (level - y0) / (y1 - y0);
                return Some(prev.time + w * (s.time - prev.time));
            }
            prev = s;
        }
        None
    }

    pub fn final_state(&self) -> &DensityState {
        self.states.last().unwrap()
    }
}
