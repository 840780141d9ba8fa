//! Closed-form layer: equilibria, invasion fitness, the arrival-time set of
//! successful mutants, valley-crossing rates for the strict valley and the
//! pit stop, mesoscopic equilibria, and the multi-phase growth optimizer.
//!
//! Everything here is a pure function of the model parameters. Rates are
//! assembled from explicit factor lists so reports can be diffed factor by
//! factor, and products switch to log space when any factor leaves
//! `e^[-30, 30]`.

use serde::{Deserialize, Serialize};

use crate::model::{classify_landscape, Landscape, ModelSpec, ScalingSpec};
use crate::{Error, Result};

/// Threshold above which |ln factor| forces log-space accumulation.
const LOG_SPACE_THRESHOLD: f64 = 30.0;

/// Multiplies non-negative factors, falling back to exp(sum of logs) when
/// any factor is extreme enough to overflow a direct product.
pub fn stable_product(factors: &[f64]) -> f64 {
    debug_assert!(factors.iter().all(|&x| x >= 0.0));
    if factors.contains(&0.0) {
        return 0.0;
    }
    let extreme = factors
        .iter()
        .any(|&x| x.ln().abs() > LOG_SPACE_THRESHOLD);
    if extreme {
        factors.iter().map(|&x| x.ln()).sum::<f64>().exp()
    } else {
        factors.iter().product()
    }
}

/// `(b - d) / c_self`, the stable density of a single-type logistic
/// population. The caller decides what a non-positive value means.
pub fn monomorphic_equilibrium(birth: f64, death: f64, c_self: f64) -> Result<f64> {
    if !(c_self > 0.0) {
        return Err(Error::InvalidParameter(
            "self-competition must be positive".into(),
        ));
    }
    Ok((birth - death) / c_self)
}

/// Initial per-capita growth rate of a rare `w` individual against a
/// resident `v` sitting at its equilibrium in phase `i` (1-based).
pub fn invasion_fitness(model: &ModelSpec, w: usize, v: usize, phase: usize) -> Result<f64> {
    let p = &model.phases[phase - 1];
    let resident_eq = monomorphic_equilibrium(p.birth[v], p.death[v], p.competition[v][v])?;
    if !(resident_eq > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fitness vs trait {v} undefined in phase {phase}: equilibrium {resident_eq} <= 0"
        )));
    }
    Ok(p.birth[w] - p.death[w] - p.competition[w][v] * resident_eq)
}

/// Duration-weighted mean of phase fitnesses over one period.
pub fn average_fitness(phase_fitness: &[f64], durations: &[f64]) -> f64 {
    let total: f64 = durations.iter().sum();
    phase_fitness
        .iter()
        .zip(durations)
        .map(|(f, t)| f * t)
        .sum::<f64>()
        / total
}

/// All per-phase equilibria and invasion fitnesses of a model.
///
/// `fitness[i-1][w][v]` is `None` whenever the resident equilibrium of `v`
/// in phase `i` is non-positive (the fitness is undefined there).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitnessTable {
    pub durations: Vec<f64>,
    /// `equilibria[i-1][v]`, possibly non-positive (flagged invalid).
    pub equilibria: Vec<Vec<f64>>,
    /// `fitness[i-1][w][v]`.
    pub fitness: Vec<Vec<Vec<Option<f64>>>>,
    /// Duration-weighted fitness against the resident trait 0; NaN when
    /// undefined in some phase.
    pub average_fitness: Vec<f64>,
}

impl FitnessTable {
    pub fn compute(model: &ModelSpec) -> Result<Self> {
        let n = model.num_types();
        let ell = model.num_phases();
        let mut equilibria = Vec::with_capacity(ell);
        let mut fitness = Vec::with_capacity(ell);
        for p in &model.phases {
            let eq: Vec<f64> = (0..n)
                .map(|v| monomorphic_equilibrium(p.birth[v], p.death[v], p.competition[v][v]))
                .collect::<Result<_>>()?;
            let mut grid = vec![vec![None; n]; n];
            for v in 0..n {
                if eq[v] > 0.0 {
                    for (w, row) in grid.iter_mut().enumerate() {
                        row[v] = Some(p.birth[w] - p.death[w] - p.competition[w][v] * eq[v]);
                    }
                }
            }
            equilibria.push(eq);
            fitness.push(grid);
        }
        let durations: Vec<f64> = model.phases.iter().map(|p| p.duration).collect();
        let average_fitness = (0..n)
            .map(|w| {
                let per_phase: Option<Vec<f64>> =
                    (0..ell).map(|i| fitness[i][w][0]).collect();
                match per_phase {
                    Some(fs) => average_fitness(&fs, &durations),
                    None => f64::NAN,
                }
            })
            .collect();
        Ok(FitnessTable {
            durations,
            equilibria,
            fitness,
            average_fitness,
        })
    }

    /// `n̄^i_v` with 1-based phase index.
    pub fn equilibrium(&self, phase: usize, v: usize) -> f64 {
        self.equilibria[phase - 1][v]
    }

    /// `f^i_{w,v}` with 1-based phase index.
    pub fn fitness(&self, phase: usize, w: usize, v: usize) -> Option<f64> {
        self.fitness[phase - 1][w][v]
    }

    /// Fitness against the resident trait 0.
    pub fn fitness_vs_resident(&self, phase: usize, w: usize) -> Option<f64> {
        self.fitness(phase, w, 0)
    }

    /// Per-phase fitness of `w` against the resident, erroring if undefined.
    pub fn resident_fitness_row(&self, w: usize) -> Result<Vec<f64>> {
        (1..=self.durations.len())
            .map(|i| {
                self.fitness_vs_resident(i, w).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "fitness of trait {w} undefined in phase {i}"
                    ))
                })
            })
            .collect()
    }
}

/// Expected number of birth events during one excursion of a subcritical
/// line whose per-event birth probability is `rho`: `rho / (1 - 2 rho)`.
pub fn lambda_of_rho(rho: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "rho = {rho} must lie in [0, 1/2); the excursion mean diverges otherwise"
        )));
    }
    Ok(rho / (1.0 - 2.0 * rho))
}

/// Partial sum of the combinatorial series for [`lambda_of_rho`]:
/// `sum_k (2k)!/((k-1)!(k+1)!) rho^k (1-rho)^(k+1)`.
pub fn lambda_series(rho: f64, n_terms: usize) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    use statrs::function::gamma::ln_gamma;
    let ln_rho = rho.ln();
    let ln_one_minus = (1.0 - rho).ln();
    let mut sum = 0.0;
    for k in 1..=n_terms {
        let kf = k as f64;
        let ln_term = ln_gamma(2.0 * kf + 1.0) - ln_gamma(kf) - ln_gamma(kf + 2.0)
            + kf * ln_rho
            + (kf + 1.0) * ln_one_minus;
        sum += ln_term.exp();
    }
    sum
}

/// The set of arrival times (mod one period, unrescaled) at which a newborn
/// target-trait line keeps a strictly positive integrated fitness over every
/// partial horizon, so it can survive all subsequent unfit stretches.
///
/// Stored as disjoint half-open intervals on `[0, period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSet {
    pub intervals: Vec<(f64, f64)>,
    pub total_measure: f64,
    pub period: f64,
}

impl ArrivalSet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Membership of `t` (any non-negative time, folded into one period).
    pub fn contains(&self, t: f64) -> bool {
        let folded = t.rem_euclid(self.period);
        self.intervals
            .iter()
            .any(|&(a, b)| folded >= a && folded < b)
    }

    /// Exact measure of the intersection with the window `[lo, hi)`.
    pub fn measure_within(&self, lo: f64, hi: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
            .sum()
    }
}

/// Integral of a piecewise-constant periodic fitness: `g(t) = ∫_0^t f`.
/// `t` is unrescaled.
pub fn fitness_integral(fit: &[f64], durations: &[f64], t: f64) -> f64 {
    let period: f64 = durations.iter().sum();
    let cycles = (t / period).floor();
    let mut rem = t - cycles * period;
    let per_period: f64 = fit
        .iter()
        .zip(durations)
        .map(|(f, d)| f * d)
        .sum();
    let mut acc = cycles * per_period;
    for (f, d) in fit.iter().zip(durations) {
        if rem <= 0.0 {
            break;
        }
        let span = rem.min(*d);
        acc += f * span;
        rem -= span;
    }
    acc
}

/// Computes the arrival set exactly by piecewise-linear analysis.
///
/// Within a phase of positive slope the binding constraints are the values
/// of `g` at the finitely many phase boundaries inside the look-ahead
/// window of one period, so each interval endpoint solves a linear
/// equation. Returns the empty set when the period integral is
/// non-positive.
pub fn compute_arrival_set(fit: &[f64], durations: &[f64]) -> Result<ArrivalSet> {
    if fit.len() != durations.len() || fit.is_empty() {
        return Err(Error::InvalidParameter(
            "fitness and duration lists must be non-empty and equal-length".into(),
        ));
    }
    if fit.contains(&0.0) {
        return Err(Error::InvalidParameter(
            "arrival set undefined: some phase has exactly zero fitness".into(),
        ));
    }
    let ell = fit.len();
    let period: f64 = durations.iter().sum();
    let per_period: f64 = fit.iter().zip(durations).map(|(f, d)| f * d).sum();
    let empty = ArrivalSet {
        intervals: vec![],
        total_measure: 0.0,
        period,
    };
    if per_period <= 0.0 {
        return Ok(empty);
    }

    // g at phase boundaries over two periods.
    let mut bounds = vec![0.0]; // boundary times, 2*ell + 1 entries
    let mut g = vec![0.0];
    for j in 0..2 * ell {
        let i = j % ell;
        bounds.push(bounds[j] + durations[i]);
        g.push(g[j] + fit[i] * durations[i]);
    }

    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for i in 0..ell {
        if fit[i] <= 0.0 {
            continue;
        }
        let a = bounds[i];
        let b = bounds[i + 1];
        // Binding candidates: boundary values of g in (t, t + period] for
        // t in this phase, i.e. boundaries i+1 ..= i+ell.
        let m = (i + 1..=i + ell)
            .map(|j| g[j])
            .fold(f64::INFINITY, f64::min);
        if m <= g[i] {
            continue;
        }
        let t_max = (a + (m - g[i]) / fit[i]).min(b);
        if t_max > a {
            // Merge with the previous interval when they abut exactly.
            if let Some(last) = intervals.last_mut() {
                if last.1 == a {
                    last.1 = t_max;
                    continue;
                }
            }
            intervals.push((a, t_max));
        }
    }
    let total_measure = intervals.iter().map(|&(a, b)| b - a).sum();
    Ok(ArrivalSet {
        intervals,
        total_measure,
        period,
    })
}

/// A certified linear lower-bound slope for `g(t+s) - g(t)` at a point of
/// the arrival set: the minimum of the three constructive bounds (local
/// slope over one look-ahead period, the local slope itself, and half the
/// average fitness). Returns `None` when `t` is outside the set.
pub fn arrival_growth_slope(
    arrival: &ArrivalSet,
    fit: &[f64],
    durations: &[f64],
    t: f64,
) -> Option<f64> {
    let folded = t.rem_euclid(arrival.period);
    let (_, interval_end) = *arrival
        .intervals
        .iter()
        .find(|&&(a, b)| folded >= a && folded < b)?;
    // Phase containing t and its end.
    let mut acc = 0.0;
    let mut slope = fit[fit.len() - 1];
    let mut phase_end = arrival.period;
    for (f, d) in fit.iter().zip(durations) {
        if folded < acc + d {
            slope = *f;
            phase_end = acc + d;
            break;
        }
        acc += d;
    }
    let eps = 0.5 * (interval_end - folded).min(phase_end - folded);
    let f_av = fit
        .iter()
        .zip(durations)
        .map(|(f, d)| f * d)
        .sum::<f64>()
        / arrival.period;
    Some(
        (slope * eps / arrival.period)
            .min(slope)
            .min(f_av / 2.0),
    )
}

/// Factor-by-factor breakdown of one phase crossing rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseRateFactors {
    pub phase: usize,
    /// Resident equilibrium density.
    pub resident_equilibrium: f64,
    /// Product of `b_{v-1}/|f_v|` over the mesoscopic chain `v = 1..=floor(alpha)`.
    pub chain_product: f64,
    /// Birth rate of the last mesoscopic trait.
    pub launch_birth: f64,
    /// Product of excursion weights over the stochastic part of the valley.
    pub hop_product: f64,
    /// Survival chance `(f_L)_+ / b_L` of a newborn target mutant.
    pub survival: f64,
    pub rate: f64,
}

/// Strict-valley crossing report with every intermediate factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub floor_alpha: usize,
    pub mutation_probability: f64,
    /// `K * mu_K^L`, the inverse of the macroscopic time unit.
    pub k_mu_l: f64,
    /// Per-event birth probability `rho^i_w` of interior traits
    /// (`None` for the resident and the target).
    pub rho: Vec<Vec<Option<f64>>>,
    /// Excursion weights `lambda(rho^i_w)`.
    pub lam: Vec<Vec<Option<f64>>>,
    pub factors: Vec<PhaseRateFactors>,
    pub phase_rates: Vec<f64>,
    pub effective_rate: f64,
    /// Mean crossing time in simulation units; infinite when no crossing
    /// is predicted.
    pub timescale: f64,
    pub no_crossing_predicted: bool,
    pub arrival_set: ArrivalSet,
}

/// Computes the crossing rate contributed by phase `i` (1-based):
/// resident density, mesoscopic chain, launch rate, excursion weights and
/// the survival factor of the target trait. Empty products are 1.
pub fn phase_crossing_rate(
    model: &ModelSpec,
    scaling: &ScalingSpec,
    table: &FitnessTable,
    phase: usize,
) -> Result<PhaseRateFactors> {
    let big_l = model.num_traits;
    let floor_alpha = scaling.alpha_floor();
    if floor_alpha >= big_l {
        return Err(Error::InvalidParameter(format!(
            "floor(alpha) = {floor_alpha} must be below the valley width {big_l}"
        )));
    }
    let p = &model.phases[phase - 1];
    let resident_equilibrium = table.equilibrium(phase, 0);

    let mut chain = Vec::new();
    for v in 1..=floor_alpha {
        let f = table.fitness_vs_resident(phase, v).ok_or_else(|| {
            Error::InvalidParameter(format!("fitness of trait {v} undefined in phase {phase}"))
        })?;
        if f == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "zero fitness denominator for trait {v} in phase {phase}"
            )));
        }
        chain.push(p.birth[v - 1] / f.abs());
    }
    let chain_product = stable_product(&chain);

    let mut hops = Vec::new();
    for w in floor_alpha + 1..big_l {
        let f = table.fitness_vs_resident(phase, w).ok_or_else(|| {
            Error::InvalidParameter(format!("fitness of trait {w} undefined in phase {phase}"))
        })?;
        if f == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "zero fitness denominator for trait {w} in phase {phase}"
            )));
        }
        hops.push(p.birth[w] / f.abs());
    }
    let hop_product = stable_product(&hops);

    let f_target = table.fitness_vs_resident(phase, big_l).ok_or_else(|| {
        Error::InvalidParameter(format!("target fitness undefined in phase {phase}"))
    })?;
    let survival = if p.birth[big_l] > 0.0 {
        f_target.max(0.0) / p.birth[big_l]
    } else {
        0.0
    };

    let launch_birth = p.birth[floor_alpha];
    let rate = stable_product(&[
        resident_equilibrium,
        chain_product,
        launch_birth,
        hop_product,
        survival,
    ]);
    Ok(PhaseRateFactors {
        phase,
        resident_equilibrium,
        chain_product,
        launch_birth,
        hop_product,
        survival,
        rate,
    })
}

/// Duration-weighted average of the phase rates restricted to the arrival
/// set, by exact interval intersection.
pub fn effective_crossing_rate(
    phase_rates: &[f64],
    durations: &[f64],
    arrival: &ArrivalSet,
) -> f64 {
    let mut acc = 0.0;
    let mut lo = 0.0;
    for (rate, d) in phase_rates.iter().zip(durations) {
        acc += rate * arrival.measure_within(lo, lo + d);
        lo += d;
    }
    acc / arrival.period
}

/// Per-event birth probability of a rare `w` individual against the
/// resident background in phase `i`.
pub fn birth_fraction(model: &ModelSpec, table: &FitnessTable, phase: usize, w: usize) -> f64 {
    let p = &model.phases[phase - 1];
    let eq0 = table.equilibrium(phase, 0);
    p.birth[w] / (p.birth[w] + p.death[w] + p.competition[w][0] * eq0)
}

/// Full strict-valley report: phase rates, arrival set, effective rate and
/// the predicted time scale `1 / (K mu^L R_eff)`.
pub fn rate_report(model: &ModelSpec, scaling: &ScalingSpec) -> Result<RateReport> {
    let table = FitnessTable::compute(model)?;
    match classify_landscape(model, scaling, &table) {
        Landscape::StrictValley => {}
        other => {
            return Err(Error::Unsupported(format!(
                "strict-valley rate requires a strict valley, got: {other}"
            )))
        }
    }
    let big_l = model.num_traits;
    let ell = model.num_phases();
    let durations = table.durations.clone();

    let factors: Vec<PhaseRateFactors> = (1..=ell)
        .map(|i| phase_crossing_rate(model, scaling, &table, i))
        .collect::<Result<_>>()?;
    let phase_rates: Vec<f64> = factors.iter().map(|f| f.rate).collect();

    let target_fitness = table.resident_fitness_row(big_l)?;
    let arrival_set = compute_arrival_set(&target_fitness, &durations)?;
    let effective_rate = effective_crossing_rate(&phase_rates, &durations, &arrival_set);

    let mut rho = vec![vec![None; big_l + 1]; ell];
    let mut lam = vec![vec![None; big_l + 1]; ell];
    for i in 1..=ell {
        for w in 1..big_l {
            let r = birth_fraction(model, &table, i, w);
            rho[i - 1][w] = Some(r);
            lam[i - 1][w] = lambda_of_rho(r).ok();
        }
    }

    let mutation_probability = scaling.mutation_probability();
    let k_mu_l = scaling.k_mu_pow(big_l as u32);
    let no_crossing_predicted = effective_rate <= 0.0;
    let timescale = if no_crossing_predicted {
        f64::INFINITY
    } else {
        1.0 / (k_mu_l * effective_rate)
    };
    Ok(RateReport {
        floor_alpha: scaling.alpha_floor(),
        mutation_probability,
        k_mu_l,
        rho,
        lam,
        factors,
        phase_rates,
        effective_rate,
        timescale,
        no_crossing_predicted,
        arrival_set,
    })
}

/// Pit-stop crossing report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PitstopReport {
    /// The pit-stop trait.
    pub w: usize,
    pub floor_alpha: usize,
    pub mutation_probability: f64,
    pub k_mu_l: f64,
    /// `Lambda^i`: probability weight of hopping from `w+1` to the target
    /// within one chain of excursions, per phase.
    #[serde(rename = "Lambda")]
    pub big_lambda: Vec<f64>,
    /// Upstream factor shared by both phase terms: resident, chain,
    /// launch, hops below `w`.
    pub upstream_factor: f64,
    /// The bracketed per-phase contributions.
    pub phase_terms: Vec<f64>,
    pub rate: f64,
    /// `lambda_K * T_1 * f^1_{w,0}`: log of the typical peak size of the
    /// pit-stop population.
    pub peak_exponent: f64,
    /// Mean crossing time in simulation units.
    pub timescale: f64,
    /// Predicted extinction offset (unrescaled) of a pit-stop line founded
    /// at the start of its fit phase.
    pub h_zero: f64,
    pub fit_phase_fitness: f64,
    pub unfit_phase_fitness: f64,
}

/// Crossing rate for a valley with one pit stop (two phases, trait `w` fit
/// in phase 1 only) plus the accelerated time scale
/// `lambda_K e^{-lambda_K T_1 f^1_w} / (K mu^L R)`.
pub fn pitstop_crossing_rate(model: &ModelSpec, scaling: &ScalingSpec) -> Result<PitstopReport> {
    let table = FitnessTable::compute(model)?;
    let w = match classify_landscape(model, scaling, &table) {
        Landscape::Pitstop { w } => w,
        other => {
            return Err(Error::Unsupported(format!(
                "pit-stop rate requires a pit-stop landscape, got: {other}"
            )))
        }
    };
    let big_l = model.num_traits;
    let floor_alpha = scaling.alpha_floor();
    let p1 = &model.phases[0];

    // Upstream of the pit stop everything happens in phase 1.
    let mut upstream = vec![table.equilibrium(1, 0)];
    for v in 1..=floor_alpha {
        let f = table.fitness_vs_resident(1, v).unwrap();
        upstream.push(p1.birth[v - 1] / f.abs());
    }
    upstream.push(p1.birth[floor_alpha]);
    for z in floor_alpha + 1..w {
        let f = table.fitness_vs_resident(1, z).unwrap();
        upstream.push(p1.birth[z] / f.abs());
    }
    let f1_w = table.fitness_vs_resident(1, w).unwrap();
    let f2_w = table.fitness_vs_resident(2, w).unwrap();
    upstream.push(1.0 / f1_w);
    let upstream_factor = stable_product(&upstream);

    // Downstream weight per phase: birth-rate ratio at w, excursion chain
    // above w, survival of the target.
    let mut big_lambda = Vec::with_capacity(2);
    let mut phase_terms = Vec::with_capacity(2);
    for i in 1..=2usize {
        let p = &model.phases[i - 1];
        let mut hops = Vec::new();
        for z in w + 1..big_l {
            let f = table.fitness_vs_resident(i, z).unwrap();
            hops.push(p.birth[z] / f.abs());
        }
        let lam_i = stable_product(&hops);
        big_lambda.push(lam_i);
        let f_w = table.fitness_vs_resident(i, w).unwrap();
        let f_l = table.fitness_vs_resident(i, big_l).unwrap();
        phase_terms.push(stable_product(&[
            p.birth[w] / f_w.abs(),
            lam_i,
            f_l / p.birth[big_l],
        ]));
    }

    let period: f64 = table.durations.iter().sum();
    let rate = upstream_factor * (phase_terms[0] + phase_terms[1]) / period;

    let t1 = table.durations[0];
    let peak_exponent = scaling.lambda_k * t1 * f1_w;
    let k_mu_l = scaling.k_mu_pow(big_l as u32);
    let timescale = pitstop_timescale(scaling.lambda_k, peak_exponent, k_mu_l, rate);
    let h_zero = t1 * (1.0 + f1_w / f2_w.abs());

    Ok(PitstopReport {
        w,
        floor_alpha,
        mutation_probability: scaling.mutation_probability(),
        k_mu_l,
        big_lambda,
        upstream_factor,
        phase_terms,
        rate,
        peak_exponent,
        timescale,
        h_zero,
        fit_phase_fitness: f1_w,
        unfit_phase_fitness: f2_w,
    })
}

/// `lambda_K e^{-peak_exponent} / (K mu^L R)`, in log space to survive
/// large exponents.
pub fn pitstop_timescale(lambda_k: f64, peak_exponent: f64, k_mu_l: f64, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    (lambda_k.ln() - peak_exponent - (k_mu_l * rate).ln()).exp()
}

/// Mean strict-valley crossing time `1 / (K mu^L R_eff)`.
pub fn strict_timescale(k_mu_l: f64, effective_rate: f64) -> f64 {
    if effective_rate <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / (k_mu_l * effective_rate)
    }
}

/// Arrival time and growth duration maximizing the integrated fitness of a
/// transient trait, subject to the running integral staying positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub t_star: f64,
    pub s_star: f64,
    pub peak: f64,
}

/// Maximizes `g_w(t, s) = ∫_t^{t+s} f_w` over one period subject to
/// `g_w(t, s') > 0` for all `s' ∈ (0, s]`.
///
/// Both optimizers lie on phase boundaries, so the search is exact over
/// the finite candidate set.
pub fn pitstop_growth_profile(fit: &[f64], durations: &[f64]) -> Result<GrowthProfile> {
    if fit.len() != durations.len() || fit.is_empty() {
        return Err(Error::InvalidParameter(
            "fitness and duration lists must be non-empty and equal-length".into(),
        ));
    }
    let f_av = average_fitness(fit, durations);
    if f_av >= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "growth profile requires negative average fitness, got {f_av}"
        )));
    }
    let ell = fit.len();
    let mut bounds = vec![0.0];
    let mut g = vec![0.0];
    for j in 0..2 * ell {
        let i = j % ell;
        bounds.push(bounds[j] + durations[i]);
        g.push(g[j] + fit[i] * durations[i]);
    }

    let mut best = GrowthProfile {
        t_star: 0.0,
        s_star: 0.0,
        peak: 0.0,
    };
    for i in 0..ell {
        if fit[i] <= 0.0 {
            continue;
        }
        // Extend the growth window breakpoint by breakpoint while the
        // running integral stays strictly positive.
        for j in i + 1..=i + ell {
            let gain = g[j] - g[i];
            if gain <= 0.0 {
                break;
            }
            if gain > best.peak {
                best = GrowthProfile {
                    t_star: bounds[i],
                    s_star: bounds[j] - bounds[i],
                    peak: gain,
                };
            }
        }
    }
    Ok(best)
}

/// Center values of the mesoscopic equilibria `a^i_v` for the traits fed by
/// the mutation influx, `v = 0..=floor(alpha)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MesoscopicTable {
    pub floor_alpha: usize,
    /// `values[i-1][v]`.
    pub values: Vec<Vec<f64>>,
}

pub fn mesoscopic_equilibria(model: &ModelSpec, scaling: &ScalingSpec) -> Result<MesoscopicTable> {
    let table = FitnessTable::compute(model)?;
    let floor_alpha = scaling.alpha_floor();
    if floor_alpha >= model.num_traits {
        return Err(Error::InvalidParameter(format!(
            "floor(alpha) = {floor_alpha} must be below the valley width {}",
            model.num_traits
        )));
    }
    let ell = model.num_phases();
    let mut values = Vec::with_capacity(ell);
    for i in 1..=ell {
        let eq0 = table.equilibrium(i, 0);
        if !(eq0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "resident equilibrium non-positive in phase {i}"
            )));
        }
        let mut row = vec![eq0];
        for v in 1..=floor_alpha {
            let f = table.fitness_vs_resident(i, v).ok_or_else(|| {
                Error::InvalidParameter(format!("fitness of trait {v} undefined in phase {i}"))
            })?;
            if f >= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "mesoscopic equilibria require trait {v} unfit in phase {i}, got f = {f}"
                )));
            }
            let prev = row[v - 1];
            row.push(prev * model.phases[i - 1].birth[v - 1] / f.abs());
        }
        values.push(row);
    }
    Ok(MesoscopicTable {
        floor_alpha,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, PhaseSpec, ScalingSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn monomorphic_equilibrium_examples() {
        assert_relative_eq!(monomorphic_equilibrium(2.0, 1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(monomorphic_equilibrium(1.0, 1.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(monomorphic_equilibrium(3.0, 1.0, 0.5).unwrap(), 4.0);
        assert!(monomorphic_equilibrium(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn invasion_fitness_examples() {
        // Single phase, two traits; resident 1 has equilibrium 1.
        let phase = PhaseSpec {
            duration: 1.0,
            birth: vec![1.0, 2.0],
            death: vec![1.0, 1.0],
            competition: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        let model = ModelSpec::new(1, vec![phase]);
        // b_w=1, d_w=1, c=1, eq=1 -> -1
        let mut m = model.clone();
        m.phases[0].birth = vec![1.0, 2.0];
        m.phases[0].death = vec![1.0, 1.0];
        // trait 1 is the resident here: eq = (2-1)/1 = 1
        let f = invasion_fitness(&m, 0, 1, 1).unwrap();
        assert_relative_eq!(f, 1.0 - 1.0 - 1.0);
        // own fitness at own equilibrium is zero
        let f_self = invasion_fitness(&m, 1, 1, 1).unwrap();
        assert_relative_eq!(f_self, 0.0, epsilon = 1e-14);
        // b_w=2, d_w=0.5, c=1, eq=1 -> 0.5
        m.phases[0].birth = vec![2.0, 2.0];
        m.phases[0].death = vec![0.5, 1.0];
        assert_relative_eq!(invasion_fitness(&m, 0, 1, 1).unwrap(), 0.5);
    }

    #[test]
    fn average_fitness_examples() {
        assert_relative_eq!(average_fitness(&[1.0, -0.5], &[1.0, 1.0]), 0.25);
        assert_relative_eq!(average_fitness(&[0.7, 0.7, 0.7], &[0.3, 1.0, 2.0]), 0.7);
        assert_relative_eq!(average_fitness(&[1.0, -2.0], &[2.0, 1.0]), 0.0);
    }

    #[test]
    fn lambda_closed_form_examples() {
        assert_relative_eq!(lambda_of_rho(0.25).unwrap(), 0.5);
        assert_relative_eq!(lambda_of_rho(0.0).unwrap(), 0.0);
        assert!(lambda_of_rho(0.5).is_err());
        assert!(lambda_of_rho(0.7).is_err());
    }

    #[test]
    fn lambda_series_converges_to_closed_form() {
        // Oracle: the combinatorial series summed directly.
        let s = lambda_series(1.0 / 3.0, 200);
        assert!((s - 1.0).abs() < 1e-9, "series = {s}");
        for k in 1..=9 {
            let rho = 0.05 * k as f64;
            let closed = lambda_of_rho(rho).unwrap();
            let series = lambda_series(rho, 10_000);
            assert!(
                (series - closed).abs() < 1e-9,
                "rho={rho}: series {series} vs closed {closed}"
            );
        }
    }

    proptest! {
        #[test]
        fn lambda_series_is_monotone_in_terms(rho in 0.01f64..0.45) {
            let a = lambda_series(rho, 50);
            let b = lambda_series(rho, 200);
            let c = lambda_series(rho, 1000);
            prop_assert!(a <= b + 1e-15);
            prop_assert!(b <= c + 1e-15);
            prop_assert!(c <= lambda_of_rho(rho).unwrap() + 1e-12);
        }
    }

    #[test]
    fn arrival_set_two_phase_example() {
        let set = compute_arrival_set(&[1.0, -0.5], &[1.0, 1.0]).unwrap();
        assert_eq!(set.intervals.len(), 1);
        let (a, b) = set.intervals[0];
        assert_relative_eq!(a, 0.0);
        assert_relative_eq!(b, 0.5);
        assert_relative_eq!(set.total_measure, 0.5);
        // Strictness at the stored endpoints.
        assert!(set.contains(0.0));
        assert!(!set.contains(0.5));
    }

    #[test]
    fn arrival_set_all_fit_is_full_period() {
        let set = compute_arrival_set(&[0.3, 0.7, 0.1], &[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(set.intervals, vec![(0.0, 3.5)]);
        assert_relative_eq!(set.total_measure, 3.5);
    }

    #[test]
    fn arrival_set_nonpositive_average_is_empty() {
        let set = compute_arrival_set(&[1.0, -2.0], &[1.0, 1.0]).unwrap();
        assert!(set.is_empty());
        assert!(compute_arrival_set(&[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn effective_rate_example() {
        let arrival = ArrivalSet {
            intervals: vec![(0.0, 0.5)],
            total_measure: 0.5,
            period: 2.0,
        };
        // Exact interval arithmetic; quadrature cross-check lives in the
        // acceptance suite.
        let r = effective_crossing_rate(&[0.5, 0.0], &[1.0, 1.0], &arrival);
        assert_relative_eq!(r, 0.125);
        let empty = ArrivalSet {
            intervals: vec![],
            total_measure: 0.0,
            period: 2.0,
        };
        assert_relative_eq!(effective_crossing_rate(&[0.5, 0.0], &[1.0, 1.0], &empty), 0.0);
        // Single phase, full set: averaging is the identity.
        let full = ArrivalSet {
            intervals: vec![(0.0, 1.0)],
            total_measure: 1.0,
            period: 1.0,
        };
        assert_relative_eq!(effective_crossing_rate(&[0.7], &[1.0], &full), 0.7);
    }

    /// Synthetic strict-valley model matching the spec walk-through:
    /// L=3, alpha=1.5, unit birth rates, f_{1,0}=f_{2,0}=-1, f_{3,0}=+0.5
    /// in phase 1.
    fn synthetic_l3() -> (ModelSpec, ScalingSpec) {
        let phase1 = PhaseSpec {
            duration: 1.0,
            birth: vec![1.0, 1.0, 1.0, 1.0],
            death: vec![0.0, 1.5, 1.5, 0.25],
            competition: vec![
                vec![1.0, 0.5, 0.5, 1.5],
                vec![0.5, 1.0, 0.5, 0.5],
                vec![0.5, 0.5, 1.0, 0.5],
                vec![0.25, 0.5, 0.5, 0.75],
            ],
        };
        let mut phase2 = phase1.clone();
        phase2.competition[3][0] = 1.25; // f2_{3,0} = 1 - 0.25 - 1.25 = -0.5
        let model = ModelSpec::new(3, vec![phase1, phase2]);
        let scaling = ScalingSpec {
            carrying_capacity: 10_000,
            alpha: 1.5,
            lambda_k: 5.0,
        };
        (model, scaling)
    }

    #[test]
    fn phase_rate_factor_recomputation() {
        let (model, scaling) = synthetic_l3();
        let table = FitnessTable::compute(&model).unwrap();
        assert_relative_eq!(table.equilibrium(1, 0), 1.0);
        assert_relative_eq!(table.fitness_vs_resident(1, 1).unwrap(), -1.0);
        assert_relative_eq!(table.fitness_vs_resident(1, 2).unwrap(), -1.0);
        assert_relative_eq!(table.fitness_vs_resident(1, 3).unwrap(), 0.5);
        let f = phase_crossing_rate(&model, &scaling, &table, 1).unwrap();
        // Independent factor-by-factor recomputation.
        assert_relative_eq!(f.resident_equilibrium, 1.0);
        assert_relative_eq!(f.chain_product, 1.0);
        assert_relative_eq!(f.launch_birth, 1.0);
        assert_relative_eq!(f.hop_product, 1.0);
        assert_relative_eq!(f.survival, 0.5);
        assert_relative_eq!(f.rate, 0.5);
        // Negative target fitness gives a zero rate via the positive part.
        let f2 = phase_crossing_rate(&model, &scaling, &table, 2).unwrap();
        assert_relative_eq!(f2.rate, 0.0);
    }

    #[test]
    fn single_step_valley_uses_empty_products() {
        // L=1, alpha=0.5: both interior products are empty.
        let phase = PhaseSpec {
            duration: 1.0,
            birth: vec![2.0, 3.0],
            death: vec![1.0, 0.5],
            competition: vec![vec![1.0, 2.0], vec![0.5, 1.0]],
        };
        let model = ModelSpec::new(1, vec![phase]);
        let scaling = ScalingSpec {
            carrying_capacity: 1000,
            alpha: 0.5,
            lambda_k: 2.0,
        };
        let table = FitnessTable::compute(&model).unwrap();
        let f = phase_crossing_rate(&model, &scaling, &table, 1).unwrap();
        // n0 = 1, f_{1,0} = 3 - 0.5 - 0.5 = 2 -> survival 2/3.
        assert_relative_eq!(f.chain_product, 1.0);
        assert_relative_eq!(f.hop_product, 1.0);
        assert_relative_eq!(f.rate, 1.0 * 2.0 * (2.0 / 3.0));
    }

    #[test]
    fn excursion_weight_matches_birth_fraction_identity() {
        // lambda(rho) = b/|f| when rho is the per-event birth probability.
        let (model, _scaling) = synthetic_l3();
        let table = FitnessTable::compute(&model).unwrap();
        for w in 1..3 {
            let rho = birth_fraction(&model, &table, 1, w);
            let via_rho = lambda_of_rho(rho).unwrap();
            let f = table.fitness_vs_resident(1, w).unwrap();
            let direct = model.phases[0].birth[w] / f.abs();
            assert_relative_eq!(via_rho, direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn strict_report_on_sample_model() {
        let (model, scaling) = crate::model::tests::two_phase_model();
        let report = rate_report(&model, &scaling).unwrap();
        assert_relative_eq!(report.phase_rates[0], 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(report.phase_rates[1], 0.0);
        assert_eq!(report.arrival_set.intervals.len(), 1);
        assert_relative_eq!(report.arrival_set.intervals[0].1, 0.75);
        assert_relative_eq!(report.effective_rate, 0.125, max_relative = 1e-12);
        // K=1e4, alpha=1.5, L=2: timescale = 8 * K^(1/3).
        assert_relative_eq!(
            report.timescale,
            8.0 * 1e4f64.powf(1.0 / 3.0),
            max_relative = 1e-10
        );
    }

    #[test]
    fn zero_effective_rate_flags_no_crossing() {
        assert!(strict_timescale(0.1, 0.0).is_infinite());
        // Single phase degenerates to the constant-environment scale.
        assert_relative_eq!(strict_timescale(0.5, 0.7), 1.0 / (0.5 * 0.7));
    }

    proptest! {
        /// Rotating the phase list (starting the period in phase i) leaves
        /// the effective rate invariant.
        #[test]
        fn effective_rate_is_rotation_invariant(shift in 0usize..4, seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let ell = rng.gen_range(2usize..=4);
            let shift = shift % ell;
            let fit: Vec<f64> = (0..ell)
                .map(|_| {
                    let f: f64 = rng.gen_range(-2.0..2.0);
                    if f.abs() < 0.05 { 0.5 } else { f }
                })
                .collect();
            let durations: Vec<f64> = (0..ell).map(|_| rng.gen_range(0.3..2.0)).collect();
            let rates: Vec<f64> = (0..ell).map(|_| rng.gen_range(0.0..1.0)).collect();

            let base_set = compute_arrival_set(&fit, &durations).unwrap();
            let base = effective_crossing_rate(&rates, &durations, &base_set);

            let rotate = |v: &Vec<f64>| -> Vec<f64> {
                v[shift..].iter().chain(v[..shift].iter()).copied().collect()
            };
            let fit_r = rotate(&fit);
            let dur_r = rotate(&durations);
            let rates_r = rotate(&rates);
            let set_r = compute_arrival_set(&fit_r, &dur_r).unwrap();
            let rotated = effective_crossing_rate(&rates_r, &dur_r, &set_r);
            prop_assert!((base - rotated).abs() < 1e-10, "base {base} vs rotated {rotated}");
        }

        /// The effective rate never exceeds the largest phase rate.
        #[test]
        fn effective_rate_bounded_by_max_phase_rate(seed in 0u64..300) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let ell = rng.gen_range(1usize..=4);
            let fit: Vec<f64> = (0..ell)
                .map(|_| {
                    let f: f64 = rng.gen_range(-2.0..2.0);
                    if f.abs() < 0.05 { 0.5 } else { f }
                })
                .collect();
            let durations: Vec<f64> = (0..ell).map(|_| rng.gen_range(0.3..2.0)).collect();
            let rates: Vec<f64> = (0..ell).map(|_| rng.gen_range(0.0..1.0)).collect();
            let set = compute_arrival_set(&fit, &durations).unwrap();
            let eff = effective_crossing_rate(&rates, &durations, &set);
            let max = rates.iter().cloned().fold(0.0, f64::max);
            prop_assert!(eff <= max + 1e-12);
        }
    }

    #[test]
    fn pitstop_toy_rate_is_three_halves() {
        // Symmetric toy from the factor walk-through: all birth rates 1,
        // f1_w = 0.5, f2_w = -1, one interior trait on each side of w with
        // unit excursion weight, target survival 0.5 in both phases.
        let phase1 = PhaseSpec {
            duration: 1.0,
            birth: vec![1.0; 6],
            death: vec![0.0, 1.5, 1.5, 0.25, 1.5, 0.25],
            competition: vec![
                vec![1.0, 0.5, 0.5, 0.5, 0.5, 1.5],
                vec![0.5, 1.0, 0.5, 0.5, 0.5, 0.5],
                vec![0.5, 0.5, 1.0, 0.5, 0.5, 0.5],
                vec![0.25, 0.5, 0.5, 1.0, 0.5, 0.5],
                vec![0.5, 0.5, 0.5, 0.5, 1.0, 0.5],
                vec![0.25, 0.5, 0.5, 0.5, 0.5, 0.75],
            ],
        };
        let mut phase2 = phase1.clone();
        phase2.competition[3][0] = 1.75; // f2_w = 1 - 0.25 - 1.75 = -1
        let model = ModelSpec::new(5, vec![phase1, phase2]);
        let scaling = ScalingSpec {
            carrying_capacity: 10_000,
            alpha: 1.5,
            lambda_k: 10.0,
        };
        let report = pitstop_crossing_rate(&model, &scaling).unwrap();
        assert_eq!(report.w, 3);
        assert_relative_eq!(report.big_lambda[0], 1.0);
        assert_relative_eq!(report.big_lambda[1], 1.0);
        assert_relative_eq!(report.rate, 1.5, max_relative = 1e-12);
        // peak exponent: lambda_K * T_1 * f1_w = 10 * 1 * 0.5.
        assert_relative_eq!(report.peak_exponent, 5.0);
        // h_zero = T_1 (1 + f1/|f2|) = 1.5, inside the period.
        assert_relative_eq!(report.h_zero, 1.5);
        assert!(report.h_zero < 2.0);
    }

    #[test]
    fn pitstop_rejects_strict_valley() {
        let (model, scaling) = crate::model::tests::two_phase_model();
        assert!(matches!(
            pitstop_crossing_rate(&model, &scaling),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn growth_profile_examples() {
        let p = pitstop_growth_profile(&[0.5, -1.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(p.t_star, 0.0);
        assert_relative_eq!(p.s_star, 1.0);
        assert_relative_eq!(p.peak, 0.5);

        let p = pitstop_growth_profile(&[1.0, -0.25, 0.5, -2.0], &[1.0; 4]).unwrap();
        assert_relative_eq!(p.t_star, 0.0);
        assert_relative_eq!(p.s_star, 3.0);
        assert_relative_eq!(p.peak, 1.25);

        let p = pitstop_growth_profile(&[-0.5, -1.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(p.peak, 0.0);
        assert_relative_eq!(p.s_star, 0.0);

        assert!(pitstop_growth_profile(&[1.0, -0.5], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn mesoscopic_table_examples() {
        let (model, scaling) = synthetic_l3();
        let table = mesoscopic_equilibria(&model, &scaling).unwrap();
        // v=0 is the resident equilibrium; v=1 chains one step.
        assert_relative_eq!(table.values[0][0], 1.0);
        assert_relative_eq!(table.values[0][1], 1.0 * 1.0 / 1.0);

        // Independent recursion oracle: N_v = N_{v-1} b_{v-1} / |f_v|.
        let scaling25 = ScalingSpec {
            alpha: 2.5,
            ..scaling
        };
        let t2 = mesoscopic_equilibria(&model, &scaling25).unwrap();
        let ft = FitnessTable::compute(&model).unwrap();
        for i in 1..=2usize {
            let mut expect = ft.equilibrium(i, 0);
            for v in 1..=2usize {
                expect *= model.phases[i - 1].birth[v - 1]
                    / ft.fitness_vs_resident(i, v).unwrap().abs();
                assert_relative_eq!(t2.values[i - 1][v], expect, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn mesoscopic_rejects_fit_chain_trait() {
        let (mut model, scaling) = synthetic_l3();
        model.phases[0].death[1] = 0.1; // trait 1 becomes fit in phase 1
        assert!(mesoscopic_equilibria(&model, &scaling).is_err());
    }

    #[test]
    fn arrival_growth_slope_is_positive_inside_the_set() {
        let fit = [1.0, -0.5];
        let dur = [1.0, 1.0];
        let set = compute_arrival_set(&fit, &dur).unwrap();
        for &t in &[0.0, 0.1, 0.25, 0.49] {
            let gamma = arrival_growth_slope(&set, &fit, &dur, t).unwrap();
            assert!(gamma > 0.0);
        }
        assert!(arrival_growth_slope(&set, &fit, &dur, 0.6).is_none());
    }

    #[test]
    fn stable_product_switches_to_log_space() {
        let big = (40.0f64).exp();
        let tiny = (-40.0f64).exp();
        let p = stable_product(&[big, tiny, 2.0]);
        assert_relative_eq!(p, 2.0, max_relative = 1e-12);
        assert_eq!(stable_product(&[3.0, 0.0]), 0.0);
        assert_eq!(stable_product(&[]), 1.0);
    }
}
