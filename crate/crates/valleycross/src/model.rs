//! Parameter schema, validation, the periodic phase clock, and
//! classification of the fitness landscape.
//!
//! A model describes `L+1` trait types (`0..=L`) living in an environment
//! that cycles through `ell` phases. Each phase carries its own birth,
//! death and competition rates and lasts `T_i` unrescaled time units; on
//! the simulation clock a phase lasts `T_i * lambda_k`. Mutation happens
//! at birth with probability `mu_k = K^(-1/alpha)` and is always derived
//! from `(K, alpha)`, never supplied directly, so the scaling triple cannot
//! be inconsistent.

use serde::{Deserialize, Serialize};

use crate::theory::FitnessTable;
use crate::{Error, Result};

/// Rates and duration of one environmental phase.
///
/// `birth[v]`, `death[v]` and `competition[v][w]` are indexed by trait;
/// `competition[v][w]` is the pressure an individual of trait `w` exerts on
/// one of trait `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub duration: f64,
    pub birth: Vec<f64>,
    pub death: Vec<f64>,
    pub competition: Vec<Vec<f64>>,
}

/// The full multi-type model: trait count, phase cycle and mutation kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Highest trait index; traits are `0..=num_traits`.
    pub num_traits: usize,
    pub phases: Vec<PhaseSpec>,
    /// Row-stochastic matrix; row `v` is the offspring-trait law of a
    /// mutant born to a `v` parent.
    pub mutation_kernel: Vec<Vec<f64>>,
}

/// Scale parameters: carrying capacity, mutation exponent, clock stretch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub carrying_capacity: u64,
    pub alpha: f64,
    pub lambda_k: f64,
}

impl ScalingSpec {
    /// Mutation probability per birth, `K^(-1/alpha)`.
    pub fn mutation_probability(&self) -> f64 {
        (self.carrying_capacity as f64).powf(-1.0 / self.alpha)
    }

    /// `floor(alpha)`, the number of traits kept at mesoscopic size by the
    /// mutation influx.
    pub fn alpha_floor(&self) -> usize {
        self.alpha.floor() as usize
    }

    /// `K * mu_K^power`.
    pub fn k_mu_pow(&self, power: u32) -> f64 {
        self.carrying_capacity as f64 * self.mutation_probability().powi(power as i32)
    }
}

impl ModelSpec {
    /// Number of trait types, `L + 1`.
    pub fn num_types(&self) -> usize {
        self.num_traits + 1
    }

    pub fn num_phases(&self) -> usize {
        self.phases.len()
    }

    /// The nearest-neighbour forward kernel: trait `v < L` mutates to
    /// `v + 1`, trait `L` reproduces only clonally.
    pub fn default_kernel(num_traits: usize) -> Vec<Vec<f64>> {
        let n = num_traits + 1;
        let mut kernel = vec![vec![0.0; n]; n];
        for (v, row) in kernel.iter_mut().enumerate() {
            let target = if v < num_traits { v + 1 } else { v };
            row[target] = 1.0;
        }
        kernel
    }

    pub fn has_default_kernel(&self) -> bool {
        self.mutation_kernel == Self::default_kernel(self.num_traits)
    }

    /// Cumulative phase endpoints and period, packaged with the clock
    /// stretch factor.
    pub fn phase_clock(&self, scaling: &ScalingSpec) -> PhaseClock {
        let mut boundaries = Vec::with_capacity(self.phases.len() + 1);
        let mut acc = 0.0;
        boundaries.push(0.0);
        for phase in &self.phases {
            acc += phase.duration;
            boundaries.push(acc);
        }
        PhaseClock {
            boundaries,
            lambda_k: scaling.lambda_k,
        }
    }
}

/// Cumulative phase boundaries `0 = T0 < T1 < ... < T_ell` in unrescaled
/// time, plus the stretch factor mapping them onto the simulation clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseClock {
    pub boundaries: Vec<f64>,
    pub lambda_k: f64,
}

impl PhaseClock {
    /// Unrescaled period length `T_ell`.
    pub fn period(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    /// Period length on the simulation clock.
    pub fn rescaled_period(&self) -> f64 {
        self.period() * self.lambda_k
    }

    pub fn num_phases(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Duration of phase `i` (1-based) in unrescaled time.
    pub fn duration(&self, phase: usize) -> f64 {
        self.boundaries[phase] - self.boundaries[phase - 1]
    }
}

/// Phase lookup result: 1-based phase index and the time already spent in
/// that phase (unrescaled units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePosition {
    pub phase: usize,
    pub time_into_phase: f64,
}

/// Locates simulation time `t` in the periodic phase cycle.
///
/// Intervals are left-closed right-open: a boundary instant belongs to the
/// incoming phase.
pub fn phase_at(clock: &PhaseClock, t: f64) -> PhasePosition {
    debug_assert!(t >= 0.0, "phase_at expects t >= 0");
    let period = clock.period();
    let folded = (t / clock.lambda_k).rem_euclid(period);
    // rem_euclid can return `period` itself when rounding bites; fold it.
    let folded = if folded >= period { 0.0 } else { folded };
    for i in 1..clock.boundaries.len() {
        if folded < clock.boundaries[i] {
            return PhasePosition {
                phase: i,
                time_into_phase: folded - clock.boundaries[i - 1],
            };
        }
    }
    PhasePosition {
        phase: clock.num_phases(),
        time_into_phase: folded - clock.boundaries[clock.num_phases() - 1],
    }
}

/// Outcome of `validate_model`: hard violations and advisory warnings.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn is_row_stochastic(row: &[f64]) -> bool {
    row.iter().all(|&p| (0.0..=1.0).contains(&p)) && (row.iter().sum::<f64>() - 1.0).abs() < 1e-12
}

/// Checks every structural invariant of the model and scaling parameters.
///
/// Violations are data, not failures: the list is empty exactly when all
/// invariants hold. `lambda_k >= ln K` only produces a warning because the
/// theory requires `1 << lambda_k << ln K` asymptotically and no finite-K
/// rule exists.
pub fn validate_model(model: &ModelSpec, scaling: &ScalingSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = model.num_types();

    if model.num_traits < 1 {
        report.violations.push("num_traits must be >= 1".into());
    }
    if model.phases.is_empty() {
        report.violations.push("at least one phase is required".into());
    }
    for (idx, phase) in model.phases.iter().enumerate() {
        let i = idx + 1;
        if !(phase.duration > 0.0) {
            report
                .violations
                .push(format!("phase {i}: duration must be positive"));
        }
        if phase.birth.len() != n || phase.death.len() != n {
            report.violations.push(format!(
                "phase {i}: birth/death arrays must have length {n}"
            ));
        }
        if phase.birth.iter().any(|&b| !(b >= 0.0)) || phase.death.iter().any(|&d| !(d >= 0.0)) {
            report
                .violations
                .push(format!("phase {i}: rates must be non-negative"));
        }
        if phase.competition.len() != n || phase.competition.iter().any(|row| row.len() != n) {
            report.violations.push(format!(
                "phase {i}: competition matrix must be {n}x{n}"
            ));
        } else {
            if phase
                .competition
                .iter()
                .any(|row| row.iter().any(|&c| !(c >= 0.0)))
            {
                report
                    .violations
                    .push(format!("phase {i}: competition entries must be non-negative"));
            }
            if (0..n).any(|v| !(phase.competition[v][v] > 0.0)) {
                report
                    .violations
                    .push(format!("phase {i}: competition diagonal must be positive"));
            }
        }
    }

    if model.mutation_kernel.len() != n || model.mutation_kernel.iter().any(|r| r.len() != n) {
        report
            .violations
            .push(format!("mutation kernel must be {n}x{n}"));
    } else if !model.mutation_kernel.iter().all(|r| is_row_stochastic(r)) {
        report
            .violations
            .push("mutation kernel rows must sum to 1".into());
    }

    if scaling.carrying_capacity < 1 {
        report
            .violations
            .push("carrying capacity must be at least 1".into());
    }
    if !(scaling.alpha > 0.0) || !scaling.alpha.is_finite() {
        report
            .violations
            .push("alpha must be positive and finite".into());
    } else if scaling.alpha.fract() == 0.0 {
        report.violations.push("alpha must be non-integer".into());
    }
    if !(scaling.lambda_k > 0.0) || !scaling.lambda_k.is_finite() {
        report.violations.push("lambda_K must be positive".into());
    } else {
        let ln_k = (scaling.carrying_capacity as f64).ln();
        if scaling.lambda_k >= ln_k {
            report.warnings.push(format!(
                "lambda_K = {} is not << ln K = {ln_k:.3}; asymptotic predictions may degrade",
                scaling.lambda_k
            ));
        }
    }

    report
}

/// Landscape classification against the standing assumptions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Landscape {
    /// Every interior trait is unfit in every phase and the target trait
    /// is fit on average.
    StrictValley,
    /// Exactly one interior trait `w` is fit in phase 1 while unfit on
    /// average; requires a two-phase cycle with equal resident equilibria.
    Pitstop { w: usize },
    /// Neither set of assumptions holds; the reason names the first failed
    /// clause.
    Unsupported { reason: String },
}

impl Landscape {
    pub fn is_supported(&self) -> bool {
        !matches!(self, Landscape::Unsupported { .. })
    }
}

fn unsupported(reason: impl Into<String>) -> Landscape {
    Landscape::Unsupported {
        reason: reason.into(),
    }
}

/// Decides whether the fitness landscape is a strict valley, a valley with
/// a pit stop, or out of scope. Deterministic in the fitness tables and
/// `alpha`.
pub fn classify_landscape(
    model: &ModelSpec,
    scaling: &ScalingSpec,
    table: &FitnessTable,
) -> Landscape {
    let big_l = model.num_traits;
    let ell = model.num_phases();
    let floor_alpha = scaling.alpha_floor();

    if !model.has_default_kernel() {
        return unsupported("classification requires the nearest-neighbor forward kernel");
    }
    for i in 1..=ell {
        if !(table.equilibrium(i, 0) > 0.0) {
            return unsupported(format!("resident equilibrium must be positive in phase {i}"));
        }
    }
    for i in 1..=ell {
        match table.fitness_vs_resident(i, big_l) {
            Some(f) if f != 0.0 => {}
            _ => {
                return unsupported(format!(
                    "target fitness must be nonzero in phase {i}"
                ))
            }
        }
    }

    // Traits with a fit phase inside the valley decide which branch applies.
    let mut fit_interior: Vec<usize> = Vec::new();
    for w in 1..big_l {
        let fit_somewhere = (1..=ell).any(|i| table.fitness_vs_resident(i, w).unwrap() > 0.0);
        if fit_somewhere {
            fit_interior.push(w);
        }
        if (1..=ell).any(|i| table.fitness_vs_resident(i, w).unwrap() == 0.0) {
            return unsupported(format!("interior trait {w} has a phase of exactly zero fitness"));
        }
    }

    if fit_interior.is_empty() {
        // Strict valley candidate.
        if !(table.average_fitness[big_l] > 0.0) {
            return unsupported("average fitness of the target trait must be positive");
        }
        for i in 1..=ell {
            if table.fitness_vs_resident(i, big_l).unwrap() > 0.0 {
                match table.fitness(i, 0, big_l) {
                    Some(f) if f < 0.0 => {}
                    _ => {
                        return unsupported(format!(
                            "resident must be unfit against the target in fit phase {i}"
                        ))
                    }
                }
            }
        }
        return Landscape::StrictValley;
    }

    // Pit stop candidate.
    if ell != 2 {
        return unsupported("pitstop requires ℓ=2");
    }
    if fit_interior.len() > 1 {
        return unsupported(format!(
            "more than one interior trait has a fit phase: {fit_interior:?}"
        ));
    }
    let w = fit_interior[0];
    if w < floor_alpha + 1 {
        return unsupported(format!(
            "pit-stop trait {w} must exceed floor(alpha) = {floor_alpha}"
        ));
    }
    if !(table.fitness_vs_resident(1, w).unwrap() > 0.0) {
        return unsupported("pit-stop trait must be fit in phase 1");
    }
    if !(table.average_fitness[w] < 0.0) {
        return unsupported("pit-stop trait must be unfit on average");
    }
    let (eq1, eq2) = (table.equilibrium(1, 0), table.equilibrium(2, 0));
    if (eq1 - eq2).abs() > 1e-12 * eq1.abs().max(1.0) {
        return unsupported("resident equilibria must agree across both phases");
    }
    for i in 1..=2 {
        if !(table.fitness_vs_resident(i, big_l).unwrap() > 0.0) {
            return unsupported(format!("target trait must be fit in phase {i}"));
        }
        match table.fitness(i, 0, big_l) {
            Some(f) if f < 0.0 => {}
            _ => {
                return unsupported(format!(
                    "resident must be unfit against the target in phase {i}"
                ))
            }
        }
    }
    Landscape::Pitstop { w }
}

/// Convenience: fitness table plus classification in one call.
pub fn classify(model: &ModelSpec, scaling: &ScalingSpec) -> Result<(FitnessTable, Landscape)> {
    let table = FitnessTable::compute(model)?;
    let landscape = classify_landscape(model, scaling, &table);
    Ok((table, landscape))
}

impl ModelSpec {
    /// Builds a model with the default forward kernel.
    pub fn new(num_traits: usize, phases: Vec<PhaseSpec>) -> Self {
        ModelSpec {
            num_traits,
            mutation_kernel: Self::default_kernel(num_traits),
            phases,
        }
    }
}

impl std::fmt::Display for Landscape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Landscape::StrictValley => write!(f, "strict valley"),
            Landscape::Pitstop { w } => write!(f, "pit stop at trait {w}"),
            Landscape::Unsupported { reason } => write!(f, "unsupported ({reason})"),
        }
    }
}

/// Validates and errors out on the first violation; used by entry points
/// that need a hard guarantee before running.
pub fn require_valid(model: &ModelSpec, scaling: &ScalingSpec) -> Result<()> {
    let report = validate_model(model, scaling);
    if let Some(first) = report.violations.first() {
        return Err(Error::InvalidParameter(first.clone()));
    }
    Ok(())
}
