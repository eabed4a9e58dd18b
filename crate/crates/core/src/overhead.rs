//! Physical-qubit overhead `Ω = 2L²` for a target logical failure rate.
//!
//! Each regime law is inverted for a continuous `L`. The universal-scaling
//! law inverts exactly; the low-p inversion uses a Stirling estimate of the
//! prefactor and the leading terms of the lower Lambert-W branch, so it is
//! approximate. [`plan_overhead`] picks whichever regime is self-consistent
//! at its own candidate size.

use std::fmt;

use crate::error::{Error, Result};
use crate::scaling::{p_fail_lowp, p_fail_ush, p_lp, p_ush, Regime, UniversalScalingParams};

/// One regime's answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadEstimate {
    /// `2 L_real²`.
    pub omega: f64,
    pub l_real: f64,
    /// Smallest odd size `≥ L_real`, at least 3.
    pub l_code: usize,
    /// The regime law evaluated at `l_code`.
    pub achieved_p_fail: f64,
}

impl OverheadEstimate {
    fn new(l_real: f64, achieved: impl FnOnce(usize) -> Result<f64>) -> Result<Self> {
        let l_code = odd_ceiling(l_real);
        Ok(OverheadEstimate {
            omega: 2.0 * l_real * l_real,
            l_real,
            l_code,
            achieved_p_fail: achieved(l_code)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadResult {
    pub regime: Regime,
    /// The selected estimate. In the crossover band this is the larger of
    /// the two candidates.
    pub estimate: OverheadEstimate,
    pub ush: Option<OverheadEstimate>,
    pub low_p: Option<OverheadEstimate>,
}

impl OverheadResult {
    pub fn omega(&self) -> f64 {
        self.estimate.omega
    }

    pub fn l_real(&self) -> f64 {
        self.estimate.l_real
    }

    pub fn l_code(&self) -> usize {
        self.estimate.l_code
    }

    pub fn achieved_p_fail(&self) -> f64 {
        self.estimate.achieved_p_fail
    }

    fn single(regime: Regime, estimate: OverheadEstimate) -> Self {
        let (ush, low_p) = match regime {
            Regime::LowP => (None, Some(estimate)),
            _ => (Some(estimate), None),
        };
        OverheadResult { regime, estimate, ush, low_p }
    }
}

impl fmt::Display for OverheadResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "regime={} omega={} L_real={} L_code={} achieved_p_fail={}",
            self.regime,
            self.omega(),
            self.l_real(),
            self.l_code(),
            self.achieved_p_fail()
        )
    }
}

/// Smallest odd integer `≥ l`, never below 3.
pub fn odd_ceiling(l: f64) -> usize {
    let c = l.ceil().max(3.0) as usize;
    if c.is_multiple_of(2) {
        c + 1
    } else {
        c
    }
}

fn check_target(target: f64) -> Result<()> {
    if target > 0.0 && target < 1.0 {
        Ok(())
    } else {
        Err(Error::UnreachableTarget {
            target,
            reason: "target failure rate must lie in (0, 1)".into(),
        })
    }
}

/// Inverts `P = A exp(-a (p_c0 - p)^ν₀ L)` for `L`.
pub fn omega_ush(target: f64, p: f64, params: &UniversalScalingParams) -> Result<OverheadResult> {
    params.validate()?;
    check_target(target)?;
    if !(p > 0.0) {
        return Err(Error::InvalidErrorRate(p));
    }
    if p >= params.p_c0 {
        return Err(Error::AboveThreshold { p, p_c0: params.p_c0 });
    }
    if target >= params.amplitude {
        return Err(Error::UnreachableTarget {
            target,
            reason: format!("the universal-scaling law never falls below A = {}", params.amplitude),
        });
    }
    let l_real = (params.amplitude / target).ln() / (params.decay * (params.p_c0 - p).powf(params.nu0));
    let est = OverheadEstimate::new(l_real, |l| p_fail_ush(l as f64, p, params))?;
    Ok(OverheadResult::single(Regime::UniversalScaling, est))
}

/// Approximate inversion of the low-p counting law,
/// `L = |(2 ln P - ln(-2 ln P)) / ln 4p|`.
pub fn omega_lp(target: f64, p: f64) -> Result<OverheadResult> {
    check_target(target)?;
    if !(p > 0.0 && p < 0.25) {
        return Err(Error::InvalidParameter(format!(
            "low-p overhead needs 0 < p < 1/4, got {p}"
        )));
    }
    let lp = target.ln();
    let l_real = ((2.0 * lp - (-2.0 * lp).ln()) / (4.0 * p).ln()).abs();
    let est = OverheadEstimate::new(l_real, |l| p_fail_lowp(l, p))?;
    Ok(OverheadResult::single(Regime::LowP, est))
}

/// Picks the regime whose validity condition holds at its own candidate
/// size. When both or neither hold the result is [`Regime::Crossover`]
/// and carries both candidates.
pub fn plan_overhead(target: f64, p: f64, params: &UniversalScalingParams) -> Result<OverheadResult> {
    let ush = omega_ush(target, p, params)?.estimate;
    let low_p = if p < 0.25 { Some(omega_lp(target, p)?.estimate) } else { None };

    let ush_ok = p > p_ush(ush.l_real);
    let lp_ok = low_p.is_some_and(|e| p < p_lp(e.l_real));
    let (regime, estimate) = match (ush_ok, lp_ok, low_p) {
        (true, false, _) => (Regime::UniversalScaling, ush),
        (false, true, Some(lp)) => (Regime::LowP, lp),
        (_, _, Some(lp)) if lp.omega > ush.omega => (Regime::Crossover, lp),
        _ => (Regime::Crossover, ush),
    };
    Ok(OverheadResult { regime, estimate, ush: Some(ush), low_p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const REF: UniversalScalingParams = UniversalScalingParams::REFERENCE;

    #[test]
    fn odd_rounding() {
        assert_eq!(odd_ceiling(0.5), 3);
        assert_eq!(odd_ceiling(3.0), 3);
        assert_eq!(odd_ceiling(3.2), 5);
        assert_eq!(odd_ceiling(10.0), 11);
        assert_eq!(odd_ceiling(11.0), 11);
    }

    #[test]
    fn ush_round_trip_at_eleven() {
        let p = 0.06;
        let target = p_fail_ush(11.0, p, &REF).unwrap();
        let r = omega_ush(target, p, &REF).unwrap();
        assert_relative_eq!(r.l_real(), 11.0, max_relative = 1e-12);
        assert_relative_eq!(r.omega(), 242.0, max_relative = 1e-12);
        assert_eq!(r.l_code(), 11);
        assert_relative_eq!(r.achieved_p_fail(), target, max_relative = 1e-12);
    }

    #[test]
    fn ush_matches_bisection_oracle() {
        let r = omega_ush(1e-7, 0.05, &REF).unwrap();
        assert_relative_eq!(r.l_real(), 41.002_773_767_723_21, max_relative = 1e-12);
        assert_relative_eq!(r.omega(), 3_362.454_913_294_182, max_relative = 1e-12);
        assert_eq!(r.l_code(), 43);
        assert!(r.achieved_p_fail() <= 1e-7);
    }

    #[test]
    fn ush_rejections() {
        assert!(matches!(omega_ush(1e-6, 0.11, &REF), Err(Error::AboveThreshold { .. })));
        assert!(matches!(omega_ush(0.3, 0.05, &REF), Err(Error::UnreachableTarget { .. })));
        assert!(omega_ush(0.0, 0.05, &REF).is_err());
        assert!(omega_ush(1e-6, 0.0, &REF).is_err());
    }

    #[test]
    fn lowp_round_trip_accuracy() {
        // Relative errors of the closed form against the exact forward law
        // at p = 1e-3, from a 40-digit evaluation: (L, L_real error, omega error).
        let frozen = [
            (11usize, 0.129_568_981_984_958, 0.275_926_085_062_535),
            (15, 0.094_386_020_721_897_8, 0.197_680_762_351_51),
            (21, 0.067_066_884_272_826_6, 0.138_631_735_511_718),
        ];
        for (l, l_err, omega_err) in frozen {
            let target = p_fail_lowp(l, 1e-3).unwrap();
            let r = omega_lp(target, 1e-3).unwrap();
            let lf = l as f64;
            assert_relative_eq!(r.l_real() / lf - 1.0, l_err, max_relative = 1e-9);
            assert_relative_eq!(r.omega() / (2.0 * lf * lf) - 1.0, omega_err, max_relative = 1e-9);
            assert!(r.l_real() > lf, "the closed form overestimates L");
        }
        assert!(omega_lp(1e-6, 0.25).is_err());
        assert!(omega_lp(1.0, 0.01).is_err());
    }

    #[test]
    fn ordering_and_monotonicity() {
        let ps: Vec<f64> = (0..=15).map(|i| 0.005 + 0.005 * i as f64).collect();
        let targets: Vec<f64> = (0..=8).map(|i| 10f64.powf(-7.0 + 0.5 * i as f64)).collect();
        for &p in &ps {
            let mut prev = (f64::INFINITY, f64::INFINITY);
            for &t in &targets {
                let u = omega_ush(t, p, &REF).unwrap().omega();
                let l = omega_lp(t, p).unwrap().omega();
                assert!(l < u, "p = {p}, target = {t}: lp {l} vs ush {u}");
                assert!(u <= prev.0 && l <= prev.1);
                prev = (u, l);
            }
        }
        for &t in &targets {
            let mut prev = (0.0, 0.0);
            for &p in &ps {
                let u = omega_ush(t, p, &REF).unwrap().omega();
                let l = omega_lp(t, p).unwrap().omega();
                assert!(u >= prev.0 && l >= prev.1);
                prev = (u, l);
            }
        }
    }

    #[test]
    fn planning_selects_regimes() {
        let r = plan_overhead(1e-6, 1e-4, &REF).unwrap();
        assert_eq!(r.regime, Regime::LowP);
        assert_eq!(r.estimate, r.low_p.unwrap());

        let r = plan_overhead(1e-4, 0.05, &REF).unwrap();
        let ush = r.ush.unwrap();
        let expected = if 0.05 > p_ush(ush.l_real) { Regime::UniversalScaling } else { Regime::Crossover };
        assert_eq!(r.regime, expected);
        assert_eq!(r.regime, Regime::UniversalScaling);

        let r = plan_overhead(1e-6, 0.01, &REF).unwrap();
        if r.regime == Regime::Crossover {
            let both = [r.ush.unwrap().omega, r.low_p.unwrap().omega];
            assert_eq!(r.omega(), both[0].max(both[1]));
        }
        assert!(matches!(plan_overhead(1e-6, 0.2, &REF), Err(Error::AboveThreshold { .. })));
    }
}
