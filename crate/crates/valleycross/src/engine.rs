//! Exact event-driven simulation of the multi-type logistic birth-death
//! process with mutation under a periodically switching environment.
//!
//! The simulator is a direct-method SSA with two refinements:
//!
//! * mutation is resolved at birth-event time: every individual of trait
//!   `v` fires a birth channel at rate `N_v b_v`, and the offspring is a
//!   clone with probability `1 - mu` or drawn from the kernel row with
//!   probability `mu`. Summing over parents shows the per-trait inflow is
//!   exactly the generator's `(1-mu) N_v b_v + mu * sum_w N_w b_w m_{w,v}`,
//!   so the law is unchanged while the channel count stays at `2(L+1)`;
//! * phase boundaries truncate waiting times: when a drawn waiting time
//!   would cross the next parameter switch, the clock advances to the
//!   boundary and no event is applied. Exponential waits are memoryless,
//!   so conditioning on "no event before the boundary" leaves the
//!   post-boundary law exactly exponential in the new rates.
//!
//! Competition loads are maintained incrementally (O(L) per event) and
//! re-derived from scratch every 2^20 events as a drift audit.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::model::{ModelSpec, ScalingSpec};
use crate::{Error, Result};

const AUDIT_INTERVAL_MASK: u64 = (1 << 20) - 1;
const AUDIT_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Which stopping condition ended a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    /// The target trait is within epsilon of its equilibrium density while
    /// every other trait is below epsilon density.
    Invasion,
    /// Total mutant mass reached `epsilon * K`.
    MutantMassExceeded,
    /// First mutant arrival into the watched trait.
    FirstArrival,
    /// Whole population died out.
    Extinct,
    MaxTime,
    /// Event budget exhausted; reported distinctly from stopping times.
    MaxEvents,
}

/// Stopping-time configuration. `None` disables a predicate.
#[derive(Debug, Clone, Copy)]
pub struct StopSpec {
    pub invasion_epsilon: Option<f64>,
    pub mutant_mass_epsilon: Option<f64>,
    /// Stop as soon as a mutant first arrives into this trait.
    pub watch_arrival: Option<usize>,
    pub max_time: f64,
    pub max_events: u64,
}

impl Default for StopSpec {
    fn default() -> Self {
        StopSpec {
            invasion_epsilon: None,
            mutant_mass_epsilon: None,
            watch_arrival: None,
            max_time: f64::INFINITY,
            max_events: u64::MAX,
        }
    }
}

/// What to record along a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RecordSpec {
    /// Sampling stride for the trajectory, in simulation time units.
    pub stride: Option<f64>,
    /// Keep the full log of mutant arrival times per trait.
    pub arrival_log: bool,
}

/// One sampled trajectory point.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub counts: Vec<u64>,
    pub phase: usize,
}

/// Everything observed during one run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Observables {
    pub trajectory: Vec<TrajectoryPoint>,
    /// First mutant arrival time per trait.
    pub first_arrival: Vec<Option<f64>>,
    /// Most recent time the trait count went from zero to positive.
    pub last_seeding: Vec<Option<f64>>,
    /// Running maximum count per trait.
    pub peak: Vec<u64>,
    /// Cumulative number of mutant births into each trait.
    pub mutant_arrivals: Vec<u64>,
    /// Optional full arrival log `(trait, time)`.
    pub arrival_log: Option<Vec<(usize, f64)>>,
}

/// Result of one run segment.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub reason: StopReason,
    pub observables: Observables,
    /// Events applied during this run segment.
    pub events: u64,
}

/// Mutable simulation state with incrementally maintained rate caches.
#[derive(Debug, Clone)]
pub struct PopulationState {
    pub counts: Vec<u64>,
    pub time: f64,
    /// Current phase, 1-based.
    pub phase: usize,
    pub events: u64,
    /// Ready-to-use death-rate addend: `comp_load[v] = sum_w c_vw N_w / K`.
    pub comp_load: Vec<f64>,
    pub total_rate: f64,
    birth_rates: Vec<f64>,
    death_rates: Vec<f64>,
    total_pop: u64,
    cycle: u64,
    /// Index into the boundary table of the next switch, `1..=ell`.
    next_boundary_idx: usize,
    next_boundary: f64,
}

impl PopulationState {
    pub fn total_population(&self) -> u64 {
        self.total_pop
    }

    pub fn mutant_population(&self) -> u64 {
        self.total_pop - self.counts[0]
    }
}

/// Precompiled simulator for one (model, scaling) pair.
#[derive(Debug, Clone)]
pub struct Engine {
    num_types: usize,
    ell: usize,
    k: f64,
    mu: f64,
    lambda_k: f64,
    /// `birth[phase][v]`, `death[phase][v]`.
    birth: Vec<Vec<f64>>,
    death: Vec<Vec<f64>>,
    /// `comp_over_k[phase][v * n + w] = c_vw / K`.
    comp_over_k: Vec<Vec<f64>>,
    /// Monomorphic equilibrium density of the target trait per phase.
    target_eq: Vec<f64>,
    resident_eq_phase1: f64,
    /// Cumulative unrescaled boundaries `0 = T0 < ... < T_ell`.
    boundaries: Vec<f64>,
    period: f64,
    /// Deterministic kernel target per row, if the row is a point mass.
    kernel_point: Vec<Option<usize>>,
    kernel: Vec<Vec<f64>>,
}

impl Engine {
    pub fn new(model: &ModelSpec, scaling: &ScalingSpec) -> Result<Self> {
        let n = model.num_types();
        let ell = model.num_phases();
        if ell == 0 {
            return Err(Error::InvalidParameter("model has no phases".into()));
        }
        for p in &model.phases {
            if p.birth.len() != n || p.death.len() != n || p.competition.len() != n {
                return Err(Error::InvalidParameter(
                    "phase arrays do not match the trait count".into(),
                ));
            }
        }
        let k = scaling.carrying_capacity as f64;
        let mut boundaries = vec![0.0];
        for p in &model.phases {
            boundaries.push(boundaries.last().unwrap() + p.duration);
        }
        let comp_over_k = model
            .phases
            .iter()
            .map(|p| {
                let mut flat = Vec::with_capacity(n * n);
                for row in &p.competition {
                    for &c in row {
                        flat.push(c / k);
                    }
                }
                flat
            })
            .collect();
        let target_eq = model
            .phases
            .iter()
            .map(|p| (p.birth[n - 1] - p.death[n - 1]) / p.competition[n - 1][n - 1])
            .collect();
        let resident_eq_phase1 =
            (model.phases[0].birth[0] - model.phases[0].death[0]) / model.phases[0].competition[0][0];
        let kernel_point = model
            .mutation_kernel
            .iter()
            .map(|row| {
                let nz: Vec<usize> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(i, _)| i)
                    .collect();
                if nz.len() == 1 && row[nz[0]] == 1.0 {
                    Some(nz[0])
                } else {
                    None
                }
            })
            .collect();
        Ok(Engine {
            num_types: n,
            ell,
            k,
            mu: scaling.mutation_probability(),
            lambda_k: scaling.lambda_k,
            birth: model.phases.iter().map(|p| p.birth.clone()).collect(),
            death: model.phases.iter().map(|p| p.death.clone()).collect(),
            comp_over_k,
            target_eq,
            resident_eq_phase1,
            period: *boundaries.last().unwrap(),
            boundaries,
            kernel_point,
            kernel: model.mutation_kernel.clone(),
        })
    }

    /// Overrides the mutation probability (the deterministic-limit and
    /// pure-birth-death experiments run with mutation switched off).
    pub fn with_mutation_probability(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn mutation_probability(&self) -> f64 {
        self.mu
    }

    pub fn carrying_capacity(&self) -> f64 {
        self.k
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    /// Simulation time of the phase switch with boundary index `idx` in
    /// cycle `cycle`.
    fn boundary_time(&self, cycle: u64, idx: usize) -> f64 {
        (cycle as f64 * self.period + self.boundaries[idx]) * self.lambda_k
    }

    /// Monomorphic start: resident at `floor(eq * K)`, everything else
    /// empty.
    pub fn initial_state(&self) -> Result<PopulationState> {
        if !(self.resident_eq_phase1 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "resident equilibrium must be positive, got {}",
                self.resident_eq_phase1
            )));
        }
        let mut counts = vec![0u64; self.num_types];
        counts[0] = (self.resident_eq_phase1 * self.k).floor() as u64;
        Ok(self.state_with_counts(counts))
    }

    /// Arbitrary start at time zero with freshly built caches.
    pub fn state_with_counts(&self, counts: Vec<u64>) -> PopulationState {
        assert_eq!(counts.len(), self.num_types);
        let mut state = PopulationState {
            total_pop: counts.iter().sum(),
            counts,
            time: 0.0,
            phase: 1,
            events: 0,
            comp_load: vec![0.0; self.num_types],
            birth_rates: vec![0.0; self.num_types],
            death_rates: vec![0.0; self.num_types],
            total_rate: 0.0,
            cycle: 0,
            next_boundary_idx: 1,
            next_boundary: 0.0,
        };
        state.next_boundary = self.boundary_time(0, 1);
        self.rebuild_caches(&mut state);
        state
    }

    /// From-scratch per-channel rates for the state's current phase:
    /// birth channel `N_v b_v`, death channel `N_v (d_v + comp_load_v)`.
    pub fn channel_rates(&self, state: &PopulationState) -> (Vec<f64>, Vec<f64>) {
        let p = state.phase - 1;
        let n = self.num_types;
        let mut births = vec![0.0; n];
        let mut deaths = vec![0.0; n];
        for v in 0..n {
            let nv = state.counts[v] as f64;
            let mut load = 0.0;
            for w in 0..n {
                load += self.comp_over_k[p][v * n + w] * state.counts[w] as f64;
            }
            births[v] = nv * self.birth[p][v];
            deaths[v] = nv * (self.death[p][v] + load);
        }
        (births, deaths)
    }

    fn rebuild_caches(&self, state: &mut PopulationState) {
        let p = state.phase - 1;
        let n = self.num_types;
        let mut total = 0.0;
        for v in 0..n {
            let mut load = 0.0;
            for w in 0..n {
                load += self.comp_over_k[p][v * n + w] * state.counts[w] as f64;
            }
            state.comp_load[v] = load;
            let nv = state.counts[v] as f64;
            state.birth_rates[v] = nv * self.birth[p][v];
            state.death_rates[v] = nv * (self.death[p][v] + load);
            total += state.birth_rates[v] + state.death_rates[v];
        }
        state.total_rate = total;
    }

    /// Verifies the incremental caches against a from-scratch
    /// recomputation, then adopts the fresh values. Panics on divergence
    /// beyond the audit tolerance: that is a correctness bug, not noise.
    fn audit_caches(&self, state: &mut PopulationState) {
        let (births, deaths) = self.channel_rates(state);
        let fresh_total: f64 = births.iter().sum::<f64>() + deaths.iter().sum::<f64>();
        let scale = fresh_total.abs().max(1e-300);
        let rel = (state.total_rate - fresh_total).abs() / scale;
        assert!(
            rel <= AUDIT_RELATIVE_TOLERANCE,
            "rate cache drifted beyond tolerance: incremental {} vs fresh {} (rel {rel})",
            state.total_rate,
            fresh_total
        );
        self.rebuild_caches(state);
    }

    /// Advances the clock to the next phase boundary without applying an
    /// event and re-derives the phase-dependent caches.
    fn cross_boundary(&self, state: &mut PopulationState) {
        state.time = state.next_boundary;
        state.next_boundary_idx += 1;
        if state.next_boundary_idx > self.ell {
            state.next_boundary_idx = 1;
            state.cycle += 1;
            state.phase = 1;
        } else {
            state.phase = state.next_boundary_idx;
        }
        state.next_boundary = self.boundary_time(state.cycle, state.next_boundary_idx);
        self.rebuild_caches(state);
    }

    fn apply_event<R: Rng + ?Sized>(
        &self,
        state: &mut PopulationState,
        rng: &mut R,
    ) -> AppliedEvent {
        let n = self.num_types;
        let p = state.phase - 1;
        let mut r = rng.gen::<f64>() * state.total_rate;
        let mut selected = None;
        for v in 0..n {
            if r < state.birth_rates[v] {
                selected = Some(v);
                break;
            }
            r -= state.birth_rates[v];
        }
        if selected.is_none() {
            for v in 0..n {
                if r < state.death_rates[v] {
                    selected = Some(n + v);
                    break;
                }
                r -= state.death_rates[v];
            }
        }
        // Float remainder can run past the end; land on the last channel
        // with positive rate.
        let channel = selected.unwrap_or_else(|| {
            let mut ch = 0;
            for v in 0..n {
                if state.birth_rates[v] > 0.0 {
                    ch = v;
                }
                if state.death_rates[v] > 0.0 {
                    ch = n + v;
                }
            }
            ch
        });

        let applied = if channel < n {
            let parent = channel;
            let child = if self.mu > 0.0 && rng.gen::<f64>() < self.mu {
                self.sample_kernel(parent, rng)
            } else {
                parent
            };
            let seeded = state.counts[child] == 0;
            state.counts[child] += 1;
            state.total_pop += 1;
            self.bump_loads(state, p, child, 1.0);
            AppliedEvent {
                trait_changed: child,
                mutation_parent: if child != parent { Some(parent) } else { None },
                seeded,
                is_birth: true,
            }
        } else {
            let v = channel - n;
            debug_assert!(state.counts[v] > 0);
            state.counts[v] -= 1;
            state.total_pop -= 1;
            self.bump_loads(state, p, v, -1.0);
            AppliedEvent {
                trait_changed: v,
                mutation_parent: None,
                seeded: false,
                is_birth: false,
            }
        };
        state.events += 1;
        if state.events & AUDIT_INTERVAL_MASK == 0 {
            self.audit_caches(state);
        }
        applied
    }

    /// Incremental O(L) cache update after `delta = ±1` on trait `u`.
    fn bump_loads(&self, state: &mut PopulationState, p: usize, u: usize, delta: f64) {
        let n = self.num_types;
        let comp = &self.comp_over_k[p];
        for v in 0..n {
            state.comp_load[v] += delta * comp[v * n + u];
            state.death_rates[v] = state.counts[v] as f64 * (self.death[p][v] + state.comp_load[v]);
        }
        state.birth_rates[u] = state.counts[u] as f64 * self.birth[p][u];
        state.total_rate = state
            .birth_rates
            .iter()
            .zip(&state.death_rates)
            .map(|(b, d)| b + d)
            .sum();
    }

    fn sample_kernel<R: Rng + ?Sized>(&self, parent: usize, rng: &mut R) -> usize {
        if let Some(target) = self.kernel_point[parent] {
            return target;
        }
        let row = &self.kernel[parent];
        let mut u = rng.gen::<f64>();
        for (child, &p) in row.iter().enumerate() {
            if u < p {
                return child;
            }
            u -= p;
        }
        row.len() - 1
    }

    /// Runs until a stopping condition fires. Stopping predicates are
    /// evaluated after every event and after every boundary crossing.
    pub fn run<R: Rng + ?Sized>(
        &self,
        state: &mut PopulationState,
        stop: &StopSpec,
        record: &RecordSpec,
        rng: &mut R,
    ) -> RunResult {
        let n = self.num_types;
        let start_events = state.events;
        let mut obs = Observables {
            trajectory: Vec::new(),
            first_arrival: vec![None; n],
            last_seeding: vec![None; n],
            peak: state.counts.clone(),
            mutant_arrivals: vec![0; n],
            arrival_log: if record.arrival_log {
                Some(Vec::new())
            } else {
                None
            },
        };
        let mut next_sample = record.stride.map(|_| state.time);
        if let Some(ns) = next_sample.as_mut() {
            obs.trajectory.push(TrajectoryPoint {
                time: state.time,
                counts: state.counts.clone(),
                phase: state.phase,
            });
            *ns += record.stride.unwrap();
        }

        let reason = loop {
            if state.total_pop == 0 {
                break StopReason::Extinct;
            }
            if state.events - start_events >= stop.max_events {
                break StopReason::MaxEvents;
            }

            let proposed = if state.total_rate > 0.0 {
                let wait: f64 = Exp1.sample(rng);
                state.time + wait / state.total_rate
            } else {
                f64::INFINITY
            };

            if proposed >= state.next_boundary {
                // Cross the boundary; the drawn waiting time is discarded,
                // which is exact by memorylessness.
                if state.next_boundary > stop.max_time {
                    self.record_until(&mut obs, state, &mut next_sample, record, stop.max_time);
                    state.time = stop.max_time;
                    break StopReason::MaxTime;
                }
                self.record_until(&mut obs, state, &mut next_sample, record, state.next_boundary);
                self.cross_boundary(state);
                if self.invasion_reached(state, stop) {
                    break StopReason::Invasion;
                }
                continue;
            }
            if proposed > stop.max_time {
                self.record_until(&mut obs, state, &mut next_sample, record, stop.max_time);
                state.time = stop.max_time;
                break StopReason::MaxTime;
            }

            self.record_until(&mut obs, state, &mut next_sample, record, proposed);
            state.time = proposed;
            let applied = self.apply_event(state, rng);

            let v = applied.trait_changed;
            if state.counts[v] > obs.peak[v] {
                obs.peak[v] = state.counts[v];
            }
            if applied.mutation_parent.is_some() {
                obs.mutant_arrivals[v] += 1;
                if obs.first_arrival[v].is_none() {
                    obs.first_arrival[v] = Some(state.time);
                }
                if let Some(log) = obs.arrival_log.as_mut() {
                    log.push((v, state.time));
                }
            }
            if applied.is_birth && applied.seeded {
                obs.last_seeding[v] = Some(state.time);
            }

            if let Some(watch) = stop.watch_arrival {
                if applied.mutation_parent.is_some() && v == watch {
                    break StopReason::FirstArrival;
                }
            }
            if let Some(eps) = stop.mutant_mass_epsilon {
                if state.mutant_population() as f64 >= eps * self.k {
                    break StopReason::MutantMassExceeded;
                }
            }
            if self.invasion_reached(state, stop) {
                break StopReason::Invasion;
            }
        };

        RunResult {
            reason,
            observables: obs,
            events: state.events - start_events,
        }
    }

    fn invasion_reached(&self, state: &PopulationState, stop: &StopSpec) -> bool {
        let eps = match stop.invasion_epsilon {
            Some(e) => e,
            None => return false,
        };
        let n = self.num_types;
        let target_density = state.counts[n - 1] as f64 / self.k;
        // The boundary instant uses the incoming phase's equilibrium,
        // consistent with left-closed phase intervals.
        let eq = self.target_eq[state.phase - 1];
        let rest = (state.total_pop - state.counts[n - 1]) as f64 / self.k;
        (target_density - eq).abs() < eps && rest < eps
    }

    fn record_until(
        &self,
        obs: &mut Observables,
        state: &PopulationState,
        next_sample: &mut Option<f64>,
        record: &RecordSpec,
        until: f64,
    ) {
        let (stride, ns) = match (record.stride, next_sample.as_mut()) {
            (Some(s), Some(ns)) => (s, ns),
            _ => return,
        };
        while *ns < until {
            obs.trajectory.push(TrajectoryPoint {
                time: *ns,
                counts: state.counts.clone(),
                phase: state.phase,
            });
            *ns += stride;
        }
    }
}

struct AppliedEvent {
    trait_changed: usize,
    mutation_parent: Option<usize>,
    seeded: bool,
    is_birth: bool,
}

/// Default trajectory stride: a hundredth of the rescaled phase unit.
pub fn default_stride(scaling: &ScalingSpec) -> f64 {
    scaling.lambda_k / 100.0
}
