use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lm::{self, LmOptions};
use super::{p_ush, rescale, validity_bound_numeric, BoundSide, DataPoint, UniversalScalingParams};
use crate::error::{Error, Result};

/// Parameters of the near-threshold ansatz
/// `P_fail = A + B x + C x² + D L^(-1/μ)` with `x = (p - p_c0) L^(1/ν₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub p_c0: f64,
    pub nu0: f64,
    pub mu: f64,
}

impl ThresholdParams {
    /// Reference fit for this decoder at large N.
    pub const REFERENCE: ThresholdParams = ThresholdParams {
        a: 0.246,
        b: 1.87,
        c: 2.16,
        d: -0.026,
        p_c0: 0.1028,
        nu0: 1.530,
        mu: 1.15,
    };

    /// One-standard-error uncertainties of the reference fit.
    pub const REFERENCE_UNCERTAINTY: ThresholdParams = ThresholdParams {
        a: 0.006,
        b: 0.01,
        c: 0.06,
        d: 0.008,
        p_c0: 0.0002,
        nu0: 0.006,
        mu: 0.8,
    };

    pub const NAMES: [&'static str; 7] = ["A", "B", "C", "D", "p_c0", "nu0", "mu"];

    pub fn evaluate(&self, size: usize, p: f64) -> f64 {
        let x = rescale(size, p, self.p_c0, self.nu0);
        self.a + self.b * x + self.c * x * x + self.finite_size_term(size)
    }

    /// Non-universal correction `D L^(-1/μ)`.
    pub fn finite_size_term(&self, size: usize) -> f64 {
        self.d * (size as f64).powf(-1.0 / self.mu)
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.a, self.b, self.c, self.d, self.p_c0, self.nu0, self.mu]
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        ThresholdParams {
            a: v[0],
            b: v[1],
            c: v[2],
            d: v[3],
            p_c0: v[4],
            nu0: v[5],
            mu: v[6],
        }
    }

    fn feasible(&self) -> bool {
        self.p_c0 > 0.0 && self.p_c0 < 0.5 && self.nu0 > 0.0 && self.mu > 0.0
    }

    /// The universal-scaling constants implied by this fit (`A`, `p_c0`,
    /// `ν₀`) together with a decay constant.
    pub fn universal(&self, decay: f64) -> UniversalScalingParams {
        UniversalScalingParams {
            amplitude: self.a,
            decay,
            p_c0: self.p_c0,
            nu0: self.nu0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdFitOptions {
    /// Number of starting points: the reference values, then random
    /// perturbations of them.
    pub starts: usize,
    /// Relative half-width of the random perturbations.
    pub spread: f64,
    pub seed: u64,
    /// Holds `μ` at this value instead of fitting it.
    pub fix_mu: Option<f64>,
    pub initial: ThresholdParams,
    pub lm: LmOptions,
}

impl Default for ThresholdFitOptions {
    fn default() -> Self {
        ThresholdFitOptions {
            starts: 16,
            spread: 0.2,
            seed: 0,
            fix_mu: None,
            initial: ThresholdParams::REFERENCE,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdFit {
    pub params: ThresholdParams,
    /// One-standard-error uncertainties; zero for held parameters.
    pub uncertainties: ThresholdParams,
    pub chi2: f64,
    pub dof: usize,
    pub mu_fixed: bool,
    /// Index of the start that produced the accepted minimum.
    pub start: usize,
}

impl ThresholdFit {
    pub fn chi2_per_dof(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }
}

fn covariance_or_pinv(cov: Option<DMatrix<f64>>, residuals: impl Fn(&[f64]) -> DVector<f64>, x: &[f64]) -> DMatrix<f64> {
    if let Some(c) = cov {
        return c;
    }
    // Singular normal matrix: fall back to the pseudo-inverse.
    let r0 = residuals(x);
    let m = r0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1e-4);
        probe[j] = x[j] + h;
        let rp = residuals(&probe);
        probe[j] = x[j] - h;
        let rm = residuals(&probe);
        probe[j] = x[j];
        jac.set_column(j, &((rp - rm) / (2.0 * h)));
    }
    (jac.transpose() * jac)
        .pseudo_inverse(1e-12)
        .unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN))
}

/// Weighted (1/σ²) multi-start fit of the near-threshold ansatz.
///
/// Every start runs Levenberg–Marquardt to convergence; the converged
/// result with the lowest χ² wins, ties going to the earlier start.
pub fn fit_threshold(data: &[DataPoint], options: &ThresholdFitOptions) -> Result<ThresholdFit> {
    let mut sizes: Vec<usize> = data.iter().map(|d| d.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "threshold fit needs at least 4 lattice sizes, got {}",
            sizes.len()
        )));
    }
    if let Some(bad) = data.iter().find(|d| !(d.sigma > 0.0) || !d.p_fail.is_finite()) {
        return Err(Error::InsufficientData(format!(
            "threshold fit needs sigma > 0 at every point (L = {}, p = {})",
            bad.size, bad.p
        )));
    }
    let n_free = if options.fix_mu.is_some() { 6 } else { 7 };
    if data.len() <= n_free {
        return Err(Error::InsufficientData(format!(
            "{} points for {n_free} parameters",
            data.len()
        )));
    }

    let unpack = |v: &[f64]| -> ThresholdParams {
        let mu = options.fix_mu.unwrap_or_else(|| v.get(6).copied().unwrap_or(f64::NAN));
        ThresholdParams::from_array([v[0], v[1], v[2], v[3], v[4], v[5], mu])
    };
    let residuals = |v: &[f64]| -> DVector<f64> {
        let params = unpack(v);
        if !params.feasible() {
            return DVector::from_element(data.len(), f64::NAN);
        }
        DVector::from_iterator(
            data.len(),
            data.iter().map(|d| (d.p_fail - params.evaluate(d.size, d.p)) / d.sigma),
        )
    };

    let mut init = options.initial;
    if let Some(mu) = options.fix_mu {
        init.mu = mu;
    }
    let base = &init.to_array()[..n_free];
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let starts: Vec<Vec<f64>> = (0..options.starts.max(1))
        .map(|i| {
            if i == 0 {
                base.to_vec()
            } else {
                base.iter()
                    .map(|&v| v * (1.0 + options.spread * rng.gen_range(-1.0..1.0)))
                    .collect()
            }
        })
        .collect();

    let mut best: Option<(usize, lm::LmResult)> = None;
    for (i, x0) in starts.iter().enumerate() {
        let res = lm::minimize(residuals, x0, &options.lm);
        if !res.converged || !res.chi2.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| res.chi2 < b.chi2) {
            best = Some((i, res));
        }
    }
    let Some((start, res)) = best else {
        return Err(Error::FitFailed(format!(
            "threshold fit: none of {} starts converged",
            starts.len()
        )));
    };

    let cov = covariance_or_pinv(res.covariance.clone(), residuals, &res.params);
    let mut sig = [0.0; 7];
    for (i, s) in sig.iter_mut().enumerate().take(n_free) {
        *s = cov[(i, i)].max(0.0).sqrt();
    }
    Ok(ThresholdFit {
        params: unpack(&res.params),
        uncertainties: ThresholdParams::from_array(sig),
        chi2: res.chi2,
        dof: data.len() - n_free,
        mu_fixed: options.fix_mu.is_some(),
        start,
    })
}

/// Rows of a data collapse: `(L, x, P_fail - D L^(-1/μ), σ)`.
pub fn collapse(data: &[DataPoint], params: &ThresholdParams) -> Vec<(usize, f64, f64, f64)> {
    data.iter()
        .map(|d| {
            (
                d.size,
                rescale(d.size, d.p, params.p_c0, params.nu0),
                d.p_fail - params.finite_size_term(d.size),
                d.sigma,
            )
        })
        .collect()
}

/// `ln P_fail = α + β L + γ L²` at a single `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha_err: f64,
    pub beta_err: f64,
    pub gamma_err: f64,
    pub chi2: f64,
    pub dof: usize,
    pub points: usize,
    /// Points dropped because `P_fail = 0` has no logarithm.
    pub excluded_zero: usize,
}

impl QuadraticFit {
    pub fn gamma_over_beta(&self) -> f64 {
        (self.gamma / self.beta).abs()
    }

    pub fn chi2_per_dof(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }
}

/// Weighted polynomial fit of `ln P_fail` in `L`, with `σ_ln = σ / P_fail`.
pub fn fit_quadratic_log_l(data: &[DataPoint]) -> Result<QuadraticFit> {
    let excluded_zero = data.iter().filter(|d| d.p_fail <= 0.0).count();
    let pts: Vec<&DataPoint> = data.iter().filter(|d| d.p_fail > 0.0).collect();
    let mut sizes: Vec<usize> = pts.iter().map(|d| d.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "quadratic fit needs >= 4 lattice sizes with P_fail > 0, got {} ({excluded_zero} zero points excluded)",
            sizes.len()
        )));
    }
    if let Some(bad) = pts.iter().find(|d| !(d.sigma > 0.0)) {
        return Err(Error::InsufficientData(format!("sigma must be > 0 (L = {})", bad.size)));
    }
    let m = pts.len();
    let mut design = DMatrix::zeros(m, 3);
    let mut rhs = DVector::zeros(m);
    for (i, d) in pts.iter().enumerate() {
        let w = d.p_fail / d.sigma;
        let l = d.size as f64;
        design[(i, 0)] = w;
        design[(i, 1)] = w * l;
        design[(i, 2)] = w * l * l;
        rhs[i] = w * d.p_fail.ln();
    }
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::FitFailed(format!("quadratic fit: {e}")))?;
    let resid = &design * &coef - &rhs;
    let cov = (design.transpose() * &design)
        .try_inverse()
        .ok_or_else(|| Error::FitFailed("quadratic fit: singular normal matrix".into()))?;
    Ok(QuadraticFit {
        alpha: coef[0],
        beta: coef[1],
        gamma: coef[2],
        alpha_err: cov[(0, 0)].sqrt(),
        beta_err: cov[(1, 1)].sqrt(),
        gamma_err: cov[(2, 2)].sqrt(),
        chi2: resid.norm_squared(),
        dof: m.saturating_sub(3),
        points: m,
        excluded_zero,
    })
}

/// Which rows the decay-constant fit keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValidityRule {
    /// `p > p_USH(L)` with the closed-form bound (two standard deviations).
    ClosedForm,
    /// `p` above the exact root of `μ - (n/2) σ = ⌈L/2⌉`.
    Numeric { n_sigma: f64 },
    /// Keep every sub-threshold row.
    None,
}

/// A data row left out of a fit, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredRow {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub decay: f64,
    pub decay_err: f64,
    pub chi2: f64,
    pub dof: usize,
    pub used: Vec<usize>,
    pub filtered: Vec<FilteredRow>,
}

impl DecayFit {
    pub fn chi2_per_dof(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }
}

/// One-parameter weighted fit of `ln(P_fail / A) = -a (p_c0 - p)^ν₀ L`
/// with `A`, `p_c0`, `ν₀` held at the values in `fixed`.
///
/// The model is linear in `a`, so the weighted least-squares solution is
/// closed form: `a = -Σ w t y / Σ w t²` with `t = (p_c0 - p)^ν₀ L`,
/// `y = ln(P_fail / A)` and `w = (P_fail / σ)²`.
pub fn fit_decay_constant(data: &[DataPoint], fixed: &UniversalScalingParams, rule: ValidityRule) -> Result<DecayFit> {
    let mut filtered = Vec::new();
    let mut used = Vec::new();
    for (i, d) in data.iter().enumerate() {
        let reason = if d.p >= fixed.p_c0 {
            Some(format!("p = {} at or above p_c0 = {}", d.p, fixed.p_c0))
        } else if d.p_fail <= 0.0 {
            Some("P_fail = 0".to_string())
        } else if !(d.sigma > 0.0) {
            Some("sigma = 0".to_string())
        } else {
            match rule {
                ValidityRule::None => None,
                ValidityRule::ClosedForm => {
                    let bound = p_ush(d.size as f64);
                    (d.p <= bound).then(|| format!("p = {} <= p_USH({}) = {bound:.6}", d.p, d.size))
                }
                ValidityRule::Numeric { n_sigma } => {
                    let bound = validity_bound_numeric(d.size, n_sigma, BoundSide::UniversalScaling)?;
                    (d.p <= bound).then(|| format!("p = {} <= bound({}, n = {n_sigma}) = {bound:.6}", d.p, d.size))
                }
            }
        };
        match reason {
            Some(reason) => filtered.push(FilteredRow { index: i, reason }),
            None => used.push(i),
        }
    }
    if used.is_empty() {
        return Err(Error::InsufficientData("no rows satisfy the validity condition".into()));
    }
    let (mut stt, mut sty) = (0.0, 0.0);
    for &i in &used {
        let d = &data[i];
        let t = (fixed.p_c0 - d.p).powf(fixed.nu0) * d.size as f64;
        let y = (d.p_fail / fixed.amplitude).ln();
        let w = (d.p_fail / d.sigma).powi(2);
        stt += w * t * t;
        sty += w * t * y;
    }
    let decay = -sty / stt;
    let chi2: f64 = used
        .iter()
        .map(|&i| {
            let d = &data[i];
            let t = (fixed.p_c0 - d.p).powf(fixed.nu0) * d.size as f64;
            let y = (d.p_fail / fixed.amplitude).ln();
            let w = (d.p_fail / d.sigma).powi(2);
            w * (y + decay * t).powi(2)
        })
        .sum();
    Ok(DecayFit {
        decay,
        decay_err: stt.sqrt().recip(),
        chi2,
        dof: used.len().saturating_sub(1),
        used,
        filtered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::p_fail_ush;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand_distr_like::binomial_fraction;

    /// Tiny binomial sampler for synthetic data (sum of Bernoulli draws is
    /// too slow at N = 10⁶, so use the normal approximation with a fixed
    /// stream).
    mod rand_distr_like {
        use rand::Rng;
        pub fn binomial_fraction<R: Rng>(rng: &mut R, p: f64, n: f64) -> f64 {
            // Box-Muller.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            (p + z * (p * (1.0 - p) / n).sqrt()).clamp(0.0, 1.0)
        }
    }

    fn threshold_grid(params: &ThresholdParams, trials: f64) -> Vec<DataPoint> {
        let mut out = Vec::new();
        for size in [5, 7, 9, 11, 13] {
            for k in 0..=17 {
                let p = 0.095 + 0.001 * k as f64;
                let pf = params.evaluate(size, p);
                out.push(DataPoint {
                    size,
                    p,
                    p_fail: pf,
                    sigma: (pf * (1.0 - pf) / trials).sqrt(),
                });
            }
        }
        out
    }

    #[test]
    fn threshold_fit_recovers_exact_data() {
        let truth = ThresholdParams::REFERENCE;
        let data = threshold_grid(&truth, 1e6);
        let initial = ThresholdParams::from_array(truth.to_array().map(|v| v * 1.05));
        let fit = fit_threshold(&data, &ThresholdFitOptions { initial, ..Default::default() }).unwrap();
        let got = fit.params.to_array();
        for (g, t) in got.iter().zip(truth.to_array()) {
            assert_abs_diff_eq!(*g, t, epsilon = 1e-6);
        }
        assert!(fit.chi2 < 1e-12);
    }

    #[test]
    fn threshold_fit_with_noise_and_fixed_mu() {
        let truth = ThresholdParams::REFERENCE;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 1e6;
        let data: Vec<DataPoint> = threshold_grid(&truth, trials)
            .into_iter()
            .map(|d| {
                let pf = binomial_fraction(&mut rng, d.p_fail, trials);
                DataPoint { p_fail: pf, sigma: (pf * (1.0 - pf) / trials).sqrt(), ..d }
            })
            .collect();
        let fit = fit_threshold(&data, &ThresholdFitOptions { fix_mu: Some(1.15), ..Default::default() }).unwrap();
        assert!(fit.mu_fixed);
        assert_eq!(fit.params.mu, 1.15);
        assert_eq!(fit.uncertainties.mu, 0.0);
        assert!((fit.params.p_c0 - truth.p_c0).abs() < 2.0 * fit.uncertainties.p_c0.max(2e-4));
        assert!(fit.chi2_per_dof() < 2.0, "chi2/dof = {}", fit.chi2_per_dof());
        let rows = collapse(&data, &fit.params);
        assert_eq!(rows.len(), data.len());
    }

    #[test]
    fn threshold_fit_input_checks() {
        let data = threshold_grid(&ThresholdParams::REFERENCE, 1e4);
        let three: Vec<_> = data.iter().copied().filter(|d| d.size <= 9).collect();
        assert!(matches!(fit_threshold(&three, &Default::default()), Err(Error::InsufficientData(_))));
        let mut zero = data.clone();
        zero[3].sigma = 0.0;
        assert!(matches!(fit_threshold(&zero, &Default::default()), Err(Error::InsufficientData(_))));
        let bad = ThresholdFitOptions {
            lm: LmOptions { max_iterations: 1, ..Default::default() },
            ..Default::default()
        };
        let shifted = ThresholdParams { p_c0: 0.09, ..ThresholdParams::REFERENCE };
        assert!(matches!(
            fit_threshold(&threshold_grid(&shifted, 1e4), &bad),
            Err(Error::FitFailed(_))
        ));
    }

    #[test]
    fn quadratic_fit_on_pure_exponential() {
        let data: Vec<DataPoint> = [5, 7, 9, 11, 13]
            .iter()
            .map(|&size| {
                let pf = (-1.0 - 0.3 * size as f64).exp();
                DataPoint { size, p: 0.05, p_fail: pf, sigma: 0.1 * pf }
            })
            .collect();
        let fit = fit_quadratic_log_l(&data).unwrap();
        assert_abs_diff_eq!(fit.gamma, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.beta, -0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.alpha, -1.0, epsilon = 1e-8);
        assert_eq!(fit.excluded_zero, 0);
        assert!(fit.gamma_err > 0.0);
    }

    #[test]
    fn quadratic_fit_recovers_curvature_and_drops_zeros() {
        let mut data: Vec<DataPoint> = [3, 5, 7, 9, 11]
            .iter()
            .map(|&size| {
                let l = size as f64;
                let pf = (0.5 - 0.8 * l + 0.02 * l * l).exp();
                DataPoint { size, p: 0.02, p_fail: pf, sigma: 0.05 * pf }
            })
            .collect();
        data.push(DataPoint { size: 13, p: 0.02, p_fail: 0.0, sigma: 0.0 });
        let fit = fit_quadratic_log_l(&data).unwrap();
        assert_eq!(fit.excluded_zero, 1);
        assert_eq!(fit.points, 5);
        assert_relative_eq!(fit.gamma, 0.02, max_relative = 1e-8);
        data.truncate(3);
        assert!(matches!(fit_quadratic_log_l(&data), Err(Error::InsufficientData(_))));
    }

    fn ush_data(params: &UniversalScalingParams) -> Vec<DataPoint> {
        let mut out = Vec::new();
        for size in [7, 9, 11, 13, 15] {
            for p in [0.04, 0.05, 0.06, 0.07, 0.08] {
                let pf = p_fail_ush(size as f64, p, params).unwrap();
                out.push(DataPoint { size, p, p_fail: pf, sigma: pf * 0.05 });
            }
        }
        out
    }

    #[test]
    fn decay_fit_is_exact_on_synthetic_data() {
        let params = UniversalScalingParams::REFERENCE;
        let data = ush_data(&params);
        let fit = fit_decay_constant(&data, &params, ValidityRule::ClosedForm).unwrap();
        assert_relative_eq!(fit.decay, 32.31, max_relative = 1e-12);
        assert!(fit.chi2 < 1e-18);
        // p = 0.04 at L = 7 sits below p_USH(7) ≈ 0.068.
        assert!(fit.filtered.iter().any(|f| f.index == 0));
        assert_eq!(fit.used.len() + fit.filtered.len(), data.len());
    }

    #[test]
    fn decay_fit_filters() {
        let params = UniversalScalingParams::REFERENCE;
        let mut data = ush_data(&params);
        data.push(DataPoint { size: 9, p: 0.11, p_fail: 0.3, sigma: 0.01 });
        data.push(DataPoint { size: 9, p: 0.07, p_fail: 0.0, sigma: 0.0 });
        let fit = fit_decay_constant(&data, &params, ValidityRule::None).unwrap();
        assert_eq!(fit.filtered.len(), 2);
        let numeric = fit_decay_constant(&data, &params, ValidityRule::Numeric { n_sigma: 2.0 }).unwrap();
        assert!(numeric.used.len() < fit.used.len());

        let low: Vec<DataPoint> = data.iter().copied().filter(|d| d.p < 0.03).collect();
        assert!(matches!(
            fit_decay_constant(&low, &params, ValidityRule::ClosedForm),
            Err(Error::InsufficientData(_))
        ));
    }
}
