//! Scaling laws for the logical failure rate and their validity bounds.
//!
//! Two regimes are modelled:
//!
//! - near and below threshold, the universal scaling law
//!   `P_fail = A exp(-a (p_c0 - p)^ν₀ L)`, with `A`, `p_c0` and `ν₀` fixed by
//!   a fit to data around the crossing ([`fit_threshold`]) and `a` by
//!   [`fit_decay_constant`];
//! - as `p → 0`, the counting formula
//!   `P_fail = 2L · C(L, ⌈L/2⌉) · p^⌈L/2⌉` ([`p_fail_lowp`]).
//!
//! [`p_ush`] and [`p_lp`] bound the error rates where each regime applies;
//! [`classify_regime`] places a point `(L, p)` relative to them.

mod fit;
pub mod lm;

pub use fit::{
    collapse, fit_decay_constant, fit_quadratic_log_l, fit_threshold, DecayFit, FilteredRow, QuadraticFit,
    ThresholdFit, ThresholdFitOptions, ThresholdParams, ValidityRule,
};

use std::fmt;

use crate::error::{Error, Result};

/// One measured `(L, p, P_fail, σ)` point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub size: usize,
    pub p: f64,
    pub p_fail: f64,
    pub sigma: f64,
}

/// Constants of the universal scaling law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniversalScalingParams {
    /// Prefactor `A`, the failure rate at threshold for large `L`.
    pub amplitude: f64,
    /// Decay constant `a`.
    pub decay: f64,
    pub p_c0: f64,
    pub nu0: f64,
}

impl UniversalScalingParams {
    /// Reference values for this decoder: `A = 0.246`, `a = 32.31`,
    /// `p_c0 = 0.1028`, `ν₀ = 1.530`.
    pub const REFERENCE: UniversalScalingParams = UniversalScalingParams {
        amplitude: 0.246,
        decay: 32.31,
        p_c0: 0.1028,
        nu0: 1.530,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude > 0.0
            && self.decay > 0.0
            && self.p_c0 > 0.0
            && self.p_c0 < 0.5
            && self.nu0 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid universal scaling constants {self:?}")))
        }
    }

    /// Correlation length `ξ = |p - p_c0|^(-ν₀)`.
    pub fn correlation_length(&self, p: f64) -> f64 {
        (p - self.p_c0).abs().powf(-self.nu0)
    }
}

/// Rescaled variable `x = (p - p_c0) L^(1/ν₀)`.
pub fn rescale(size: usize, p: f64, p_c0: f64, nu0: f64) -> f64 {
    (p - p_c0) * (size as f64).powf(1.0 / nu0)
}

/// `A exp(-a (p_c0 - p)^ν₀ L)` for `p < p_c0`.
///
/// The distance to threshold enters as a magnitude: `(p - p_c0)^ν₀` is not
/// real below threshold for non-integer `ν₀`.
pub fn p_fail_ush(size: f64, p: f64, params: &UniversalScalingParams) -> Result<f64> {
    if p >= params.p_c0 {
        return Err(Error::AboveThreshold { p, p_c0: params.p_c0 });
    }
    if !(p >= 0.0) {
        return Err(Error::InvalidErrorRate(p));
    }
    Ok(params.amplitude * (-params.decay * (params.p_c0 - p).powf(params.nu0) * size).exp())
}

/// `ln C(n, k)` summed term by term.
fn ln_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Natural log of the low-p prefactor `2L · L! / (⌈L/2⌉! ⌊L/2⌋!)`.
pub fn ln_lowp_prefactor(size: usize) -> f64 {
    let l = size as u64;
    (2.0 * size as f64).ln() + ln_binomial(l, l.div_ceil(2))
}

/// Exact integer prefactor where it fits in 128 bits.
pub fn lowp_prefactor(size: usize) -> Option<u128> {
    let l = size as u128;
    let k = l.div_ceil(2).min(l / 2);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul(l - i)? / (i + 1);
    }
    c.checked_mul(2 * l)
}

/// Low-p counting law `2L · C(L, ⌈L/2⌉) · p^⌈L/2⌉`, evaluated in log space.
pub fn p_fail_lowp(size: usize, p: f64) -> Result<f64> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(Error::InvalidLatticeSize(size));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidErrorRate(p));
    }
    let half = size.div_ceil(2) as f64;
    Ok((ln_lowp_prefactor(size) + half * p.ln()).exp())
}

/// Lower edge of the universal-scaling regime,
/// `(L² + √(2L³) + 2L) / (4L³)`.
pub fn p_ush(size: f64) -> f64 {
    let l = size;
    (l * l + (2.0 * l.powi(3)).sqrt() + 2.0 * l) / (4.0 * l.powi(3))
}

/// Upper edge of the low-p regime, `(L² - √(2L³) + 2L) / (4L³)`.
pub fn p_lp(size: f64) -> f64 {
    let l = size;
    (l * l - (2.0 * l.powi(3)).sqrt() + 2.0 * l) / (4.0 * l.powi(3))
}

/// Which side of a binomial error-weight bound to solve for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    /// `μ - (n/2) σ = ⌈L/2⌉`: typical errors exceed half the distance.
    UniversalScaling,
    /// `μ + (n/2) σ = ⌈L/2⌉`: typical errors stay below half the distance.
    LowP,
}

/// Solves the validity condition without the large-L simplification.
///
/// The error weight is Binomial(2L², p) with mean `μ = 2L²p` and variance
/// `σ² = 2L²p(1 - p)`. With `n_sigma = 2` this is the condition whose
/// leading-order solution is [`p_ush`] (resp. [`p_lp`]).
pub fn validity_bound_numeric(size: usize, n_sigma: f64, side: BoundSide) -> Result<f64> {
    if size < 3 {
        return Err(Error::InvalidLatticeSize(size));
    }
    let n = 2.0 * (size * size) as f64;
    let half = size.div_ceil(2) as f64;
    let k = n_sigma / 2.0;
    let g = |p: f64| {
        let mu = n * p;
        let sd = (n * p * (1.0 - p)).sqrt();
        match side {
            BoundSide::UniversalScaling => mu - k * sd - half,
            BoundSide::LowP => mu + k * sd - half,
        }
    };
    // g is increasing on the bracket below; bisection to machine precision.
    let (mut lo, mut hi) = (1e-15, 0.5);
    if g(lo) > 0.0 || g(hi) < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "no validity bound in (0, 0.5] for L = {size}, n = {n_sigma}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    UniversalScaling,
    LowP,
    Crossover,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::UniversalScaling => "UniversalScaling",
            Regime::LowP => "LowP",
            Regime::Crossover => "Crossover",
        })
    }
}

pub fn classify_regime(size: f64, p: f64) -> Regime {
    if p > p_ush(size) {
        Regime::UniversalScaling
    } else if p < p_lp(size) {
        Regime::LowP
    } else {
        Regime::Crossover
    }
}
