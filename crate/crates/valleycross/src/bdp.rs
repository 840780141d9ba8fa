//! Constant-rate and time-dependent birth-death analytics and samplers.
//!
//! These are the oracles the harness checks the full engine against:
//! the excursion law of a subcritical line (number of birth events before
//! extinction), extinction probabilities of linear birth-death processes,
//! survival chances, and the exponential-growth martingale limit.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::model::{ModelSpec, ScalingSpec};
use crate::theory::FitnessTable;
use crate::{Error, Result};

/// Individual birth and death rates of a linear birth-death process. The
/// death rate may include a frozen competition term `c * n̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BDParams {
    pub birth: f64,
    pub death: f64,
}

impl BDParams {
    pub fn new(birth: f64, death: f64) -> Result<Self> {
        if !(birth >= 0.0 && death >= 0.0 && birth + death > 0.0) {
            return Err(Error::InvalidParameter(
                "birth and death rates must be non-negative and not both zero".into(),
            ));
        }
        Ok(BDParams { birth, death })
    }

    /// Probability that the next event of a single line is a birth.
    pub fn birth_fraction(&self) -> f64 {
        self.birth / (self.birth + self.death)
    }
}

fn require_subcritical(b: f64, d: f64) -> Result<()> {
    if !(b > 0.0) || !(d > 0.0) || b >= d {
        return Err(Error::InvalidParameter(format!(
            "requires 0 < b < d, got b = {b}, d = {d}"
        )));
    }
    Ok(())
}

/// Probability that a subcritical line started from one individual sees
/// exactly `k` birth events before dying out:
/// `(2k)!/(k!(k+1)!) rho^k (1-rho)^(k+1)` with `rho = b/(b+d)`.
pub fn excursion_pmf(k: u64, b: f64, d: f64) -> Result<f64> {
    Ok(excursion_log_pmf(k, b, d)?.exp())
}

/// Natural log of [`excursion_pmf`], via log-gamma; stays finite for `k`
/// up to 1e5 even where the probability itself underflows.
pub fn excursion_log_pmf(k: u64, b: f64, d: f64) -> Result<f64> {
    require_subcritical(b, d)?;
    let rho = b / (b + d);
    let kf = k as f64;
    Ok(ln_gamma(2.0 * kf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(kf + 2.0)
        + kf * rho.ln()
        + (kf + 1.0) * (1.0 - rho).ln())
}

/// Expected number of birth events in one excursion: `b / (d - b)`.
pub fn excursion_mean(b: f64, d: f64) -> Result<f64> {
    require_subcritical(b, d)?;
    Ok(b / (d - b))
}

/// Simulates one excursion of the embedded jump chain, returning the number
/// of birth events and the total lifetime. Only the birth count matters for
/// the valley-hopping weights; the lifetime comes from summing the
/// exponential holding times along the way.
pub fn simulate_excursion<R: Rng + ?Sized>(b: f64, d: f64, rng: &mut R) -> Result<(u64, f64)> {
    require_subcritical(b, d)?;
    let rho = b / (b + d);
    let total = b + d;
    let mut n: u64 = 1;
    let mut births: u64 = 0;
    let mut lifetime = 0.0;
    while n > 0 {
        let u: f64 = rng.gen::<f64>();
        lifetime += exp_variate(rng, n as f64 * total);
        if u < rho {
            births += 1;
            n += 1;
        } else {
            n -= 1;
        }
    }
    Ok((births, lifetime))
}

fn exp_variate<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    // Inverse CDF on (0, 1]; guards the zero draw.
    let u: f64 = rng.gen::<f64>();
    let u = if u <= 0.0 { f64::MIN_POSITIVE } else { u };
    -u.ln() / rate
}

/// Probability that a linear birth-death process started from one
/// individual is extinct by time `t`:
/// `1 - |f| e^{ft} / (D - B e^{ft})` with `f = B - D`.
///
/// The formula is stated for the subcritical case; for `B > D` the
/// algebraically equivalent standard form is used. The critical case
/// `B = D` is rejected.
pub fn extinction_cdf(t: f64, b: f64, d: f64) -> Result<f64> {
    if b == d {
        return Err(Error::InvalidParameter(
            "critical case B = D is out of scope".into(),
        ));
    }
    if t < 0.0 {
        return Err(Error::InvalidParameter("time must be non-negative".into()));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let f = b - d;
    if b < d {
        let e = (f * t).exp();
        Ok(1.0 - f.abs() * e / (d - b * e))
    } else {
        Ok(extinction_cdf_standard(t, b, d))
    }
}

/// The textbook form `d (e^{rt} - 1) / (b e^{rt} - d)`, `r = b - d`. Valid
/// for any `b != d`; used as the cross-check route.
pub fn extinction_cdf_standard(t: f64, b: f64, d: f64) -> f64 {
    let r = b - d;
    let e = (r * t).exp();
    d * (e - 1.0) / (b * e - d)
}

/// One piecewise-constant segment of a time-dependent linear birth-death
/// process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BDSegment {
    pub birth: f64,
    pub death: f64,
    pub duration: f64,
}

/// Extinction probability by time `t` for a time-dependent linear process
/// (piecewise-constant rates), started from one individual:
/// `1 - (1 + ∫_0^t d(s) e^{-g(s)} ds)^{-1}` with `g(s) = ∫_0^s (b - d)`.
///
/// The integral is evaluated in closed form per segment, so this is the
/// exact multi-segment composition of [`extinction_cdf`].
pub fn extinction_cdf_piecewise(t: f64, segments: &[BDSegment]) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidParameter("time must be non-negative".into()));
    }
    let total_span: f64 = segments.iter().map(|s| s.duration).sum();
    if t > total_span + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "t = {t} exceeds the covered span {total_span}"
        )));
    }
    let mut integral = 0.0;
    let mut g0: f64 = 0.0;
    let mut remaining = t;
    for seg in segments {
        if remaining <= 0.0 {
            break;
        }
        let span = remaining.min(seg.duration);
        let r = seg.birth - seg.death;
        let piece = if r.abs() < 1e-14 {
            seg.death * (-g0).exp() * span
        } else {
            // ∫_0^span d e^{-(g0 + r s)} ds
            seg.death * (-g0).exp() * (1.0 - (-r * span).exp()) / r
        };
        integral += piece;
        g0 += r * span;
        remaining -= span;
    }
    Ok(1.0 - 1.0 / (1.0 + integral))
}

/// Probability that one individual with birth rate `b` and effective death
/// rate `d_eff` founds a surviving line: `(b - d_eff)_+ / b`.
pub fn survival_probability(b: f64, d_eff: f64) -> f64 {
    debug_assert!(b > 0.0);
    ((b - d_eff).max(0.0)) / b
}

/// A draw of the exponential-growth martingale limit `W`.
///
/// `W = 0` with probability `1 - f/b`; conditionally on survival it is
/// exponential with rate `f/b` (mean `b/f`), so `E[W] = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WSample {
    pub value: f64,
}

pub fn sample_w<R: Rng + ?Sized>(b: f64, d_eff: f64, rng: &mut R) -> Result<WSample> {
    if !(b > d_eff) {
        return Err(Error::InvalidParameter(format!(
            "W is defined for supercritical lines only: b = {b}, d_eff = {d_eff}"
        )));
    }
    let p = (b - d_eff) / b;
    let u: f64 = rng.gen::<f64>();
    let value = if u < 1.0 - p {
        0.0
    } else {
        exp_variate(rng, p)
    };
    Ok(WSample { value })
}

/// Exact integral of the rescaled invasion fitness of trait `w` against the
/// resident over `[t0, t1]` on the simulation clock.
pub fn growth_exponent(
    model: &ModelSpec,
    scaling: &ScalingSpec,
    w: usize,
    t0: f64,
    t1: f64,
) -> Result<f64> {
    if t1 < t0 {
        return Err(Error::InvalidParameter("t1 must be >= t0".into()));
    }
    let table = FitnessTable::compute(model)?;
    let fit = table.resident_fitness_row(w)?;
    // The rescaled fitness is f(t / lambda_K); substitute u = t / lambda_K.
    let g = |t: f64| {
        crate::theory::fitness_integral(&fit, &table.durations, t / scaling.lambda_k)
            * scaling.lambda_k
    };
    Ok(g(t1) - g(t0))
}
