//! Saddle point, tilt data and the expansion pipeline
//! `A_k -> P_m -> D_m`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{ldp_range, nonlattice_check, AnalyticFamily, Model};
use crate::quad::integrate;
use crate::series::{exp_moment, integrate_against_gaussian, GradedSeries, Polynomial};
use crate::spectral::{perron, taylor_via_cauchy, CauchyOptions, TaylorData};
use crate::{PolynomialC, PolynomialR};

pub const DEFAULT_ORDER: usize = 4;
pub const MAX_ORDER: usize = 10;
/// Orders above this lose noticeable accuracy to Cauchy differentiation.
pub const CONDITIONING_WARN_ORDER: usize = 6;
pub const SADDLE_TOLERANCE: f64 = 1e-12;
pub const MIN_VARIANCE: f64 = 1e-10;
/// Largest allowed mismatch in the first- and second-order cancellations.
pub const CANCELLATION_TOLERANCE: f64 = 1e-8;
/// Relative size of imaginary parts tolerated when `P_m` is made real.
pub const REALNESS_TOLERANCE: f64 = 1e-8;
/// Closest approach to the strip boundary.
pub const BOUNDARY_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default)]
pub struct EngineOptions {
    pub cauchy: CauchyOptions,
    /// Upper bound on `B`; levels at or above it are rejected.
    pub range_upper: Option<f64>,
}

/// Saddle-point data for the excess level `a` over the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltData {
    /// Excess over the mean.
    pub a: f64,
    /// Asymptotic mean `(log lambda)'(0)`.
    pub mean: f64,
    /// Absolute level `mean + a`.
    pub level: f64,
    pub theta: f64,
    pub rate: f64,
    pub sigma2: f64,
    pub log_lambda: f64,
    pub z0: f64,
}

/// `(log lambda)'` and `(log lambda)''` at a real point.
fn slope_and_curvature(family: &dyn AnalyticFamily, theta: f64, opts: &EngineOptions) -> Result<(f64, f64, f64)> {
    let td = taylor_via_cauchy(family, theta, 2, opts.cauchy)?;
    Ok((td.log_lambda[0].re, td.log_lambda[1].re, td.log_lambda[2].re))
}

/// Asymptotic mean `(log lambda)'(0)`.
pub fn asymptotic_mean(family: &dyn AnalyticFamily, opts: &EngineOptions) -> Result<f64> {
    Ok(slope_and_curvature(family, 0.0, opts)?.1)
}

/// Solves `(log lambda)'(theta) = mean + a` by Newton's method safeguarded
/// with bisection on a bracket grown by doubling from 0.
pub fn solve_tilt(family: &dyn AnalyticFamily, a: f64, opts: &EngineOptions) -> Result<TiltData> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Range(format!(
            "excess level a = {a} must be positive (a = 0 is the central-limit regime)"
        )));
    }
    let mean = asymptotic_mean(family, opts)?;
    let level = mean + a;
    if let Some(b) = opts.range_upper {
        if level >= b {
            return Err(Error::Range(format!(
                "level {level} (mean {mean} + a {a}) is not below the range end B = {b}"
            )));
        }
    }
    let delta = family.domain_halfwidth();
    let cap = if delta.is_finite() { delta - 2.0 * BOUNDARY_MARGIN } else { f64::INFINITY };
    if !(cap > 0.0) {
        return Err(Error::Range("analyticity strip too narrow".into()));
    }

    let f = |theta: f64| -> Result<(f64, f64, f64)> {
        let (l0, l1, l2) = slope_and_curvature(family, theta, opts)?;
        if !(l2 > MIN_VARIANCE) {
            return Err(Error::DegenerateVariance(format!(
                "(log lambda)''({theta}) = {l2:e}; the observable may be a coboundary"
            )));
        }
        Ok((l0, l1 - level, l2))
    };

    let (_, f0, d0) = f(0.0)?;
    let mut lo = 0.0;
    let mut hi = (-f0 / d0).min(cap);
    let mut fhi;
    loop {
        let (_, fh, _) = f(hi)?;
        fhi = fh;
        if fhi > 0.0 {
            break;
        }
        lo = hi;
        if hi >= cap {
            return Err(Error::Range(format!(
                "no saddle point for level {level} inside the strip |Re z| < {delta}"
            )));
        }
        hi = (2.0 * hi).min(cap);
        if !hi.is_finite() || hi > 1e8 {
            return Err(Error::Range(format!("no saddle point found for level {level}")));
        }
    }

    let mut theta = 0.5 * (lo + hi);
    let mut converged = false;
    for _ in 0..200 {
        let (_, ft, dt) = f(theta)?;
        if ft == 0.0 {
            converged = true;
            break;
        }
        if ft > 0.0 {
            hi = theta;
        } else {
            lo = theta;
        }
        let mut next = theta - ft / dt;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - theta).abs() <= SADDLE_TOLERANCE * theta.abs();
        theta = next;
        if done || hi - lo <= SADDLE_TOLERANCE * theta.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!("saddle iteration did not converge for level {level}")));
    }
    let (log_lambda, _, sigma2) = f(theta)?;
    let z0 = perron(&family.evaluate(Complex64::new(theta, 0.0))?)?.z;
    if !(z0.re > 0.0) || z0.im.abs() > 1e-10 * z0.norm() {
        return Err(Error::Numerical(format!("amplitude Z(0) = {z0} is not positive")));
    }
    Ok(TiltData {
        a,
        mean,
        level,
        theta,
        rate: level * theta - log_lambda,
        sigma2,
        log_lambda,
        z0: z0.re,
    })
}

/// `A(s, eps) = exp(psi) Z` with `psi = sum_{j>=3} i^j L[j]/j! s^j eps^{j-2}`
/// and `Z = sum_j F[j] i^j/j! s^j eps^j`, truncated at `eps^r`.
pub fn build_graded(taylor: &TaylorData, tilt: &TiltData, r: usize) -> Result<GradedSeries<Complex64>> {
    let l = &taylor.log_lambda;
    let f = &taylor.amplitude;
    if l.len() < r + 3 || f.len() < r + 1 {
        return Err(Error::Config(format!("Taylor data of order {} too short for r = {r}", taylor.order)));
    }
    let residual1 = (l[1] - tilt.level).norm();
    let residual2 = (l[2] - tilt.sigma2).norm();
    if residual1 > CANCELLATION_TOLERANCE * tilt.level.abs().max(1.0)
        || residual2 > CANCELLATION_TOLERANCE * tilt.sigma2.max(1.0)
    {
        return Err(Error::Numerical(format!(
            "saddle and Taylor data disagree: |L1 - level| = {residual1:e}, |L2 - sigma2| = {residual2:e}"
        )));
    }
    let order_s = 4 * r + 1;
    let i_pow = |j: usize| Complex64::i().powu(j as u32);
    let mut fact = 1.0;
    let mut psi_terms = Vec::new();
    let mut z_terms = Vec::new();
    for j in 0..=(r + 2) {
        if j > 0 {
            fact *= j as f64;
        }
        if j >= 3 {
            psi_terms.push((j - 2, j, i_pow(j) * l[j] / fact));
        }
        if j <= r {
            z_terms.push((j, j, i_pow(j) * f[j] / fact));
        }
    }
    let psi = GradedSeries::from_terms(r, order_s, psi_terms);
    let z = GradedSeries::from_terms(r, order_s, z_terms);
    Ok(psi.exp()?.mul(&z))
}

/// `P_m(s) = sum_{k + j = 2m} b_{kj}/j! (-i s)^j`, with
/// `b_{kj} = ∫ s^j A_k(s) exp(-sigma2 s^2/2) ds`, for `m <= r/2`.
/// Also returns the largest imaginary part discarded.
pub fn assemble_p(g: &GradedSeries<Complex64>, sigma2: f64, r: usize) -> Result<(Vec<PolynomialR>, f64)> {
    let r = r.min(g.order_eps());
    let a: Vec<PolynomialC> = (0..=r).map(|k| g.eps_coefficient(k)).collect();
    let b = |k: usize, j: usize| -> Result<Complex64> {
        integrate_against_gaussian(&a[k].mul(&Polynomial::monomial(Complex64::new(1.0, 0.0), j)), sigma2)
    };
    // Odd total degree integrates to zero by parity.
    for k in 0..=r {
        for j in 0..=(r - k) {
            if (k + j) % 2 == 1 {
                let v = b(k, j)?;
                let scale = a[k].max_abs().max(1.0);
                if v.norm() > 1e-10 * scale {
                    return Err(Error::Numerical(format!("b[{k}][{j}] = {v} should vanish by parity")));
                }
            }
        }
    }
    let mut out = Vec::with_capacity(r / 2 + 1);
    let mut max_imag: f64 = 0.0;
    for m in 0..=(r / 2) {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
        let mut jfact = 1.0;
        for j in 0..=(2 * m) {
            if j > 0 {
                jfact *= j as f64;
            }
            let k = 2 * m - j;
            if k > r {
                continue;
            }
            coeffs[j] = b(k, j)? / jfact * (-Complex64::i()).powu(j as u32);
        }
        let (p, imag) = Polynomial::new(coeffs).to_real(REALNESS_TOLERANCE)?;
        if p.degree().is_some_and(|d| d > 2 * m) {
            return Err(Error::Numerical(format!("P_{m} has degree above {}", 2 * m)));
        }
        max_imag = max_imag.max(imag);
        out.push(p);
    }
    Ok((out, max_imag))
}

/// `D_m = (1/2 pi) ∫_0^∞ e^{-theta x} P_m(x) dx`.
pub fn strong_coefficients(p: &[PolynomialR], theta: f64) -> Result<Vec<f64>> {
    p.iter()
        .map(|pm| {
            let mut acc = 0.0;
            for (j, c) in pm.coeffs().iter().enumerate() {
                acc += c * exp_moment(j, theta)?;
            }
            Ok(acc / (2.0 * PI))
        })
        .collect()
}

/// Closed-form leading coefficient `Z(0) / (theta sqrt(2 pi sigma2))`.
pub fn first_order(tilt: &TiltData) -> f64 {
    tilt.z0 / (tilt.theta * (2.0 * PI * tilt.sigma2).sqrt())
}

/// `sum_{m <= orders} D_m / N^{m + 1/2}`.
pub fn evaluate_expansion(d: &[f64], n: u64, orders: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Range("N must be at least 1".into()));
    }
    if orders >= d.len() {
        return Err(Error::Range(format!(
            "requested {} orders but only {} coefficients are available",
            orders + 1,
            d.len()
        )));
    }
    let nf = n as f64;
    Ok((0..=orders).map(|m| d[m] / nf.powf(m as f64 + 0.5)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakCoefficient {
    pub m: usize,
    pub value: f64,
}

/// `(1/2 pi) ∫ P_m(x) e^{-theta x} f(x) dx` over `support`, to 1e-10
/// absolute, with the support first split into `panels` pieces. An
/// infinite upper end is mapped to a finite interval.
pub fn weak_coefficients(
    p: &[PolynomialR],
    theta: f64,
    f: &dyn Fn(f64) -> f64,
    support: (f64, f64),
    panels: usize,
) -> Result<Vec<WeakCoefficient>> {
    let (lo, hi) = support;
    if !(hi > lo) || !lo.is_finite() {
        return Err(Error::Config(format!("invalid support ({lo}, {hi})")));
    }
    let panels = panels.max(1);
    p.iter()
        .enumerate()
        .map(|(m, pm)| {
            let g = |x: f64| pm.eval(&x) * (-theta * x).exp() * f(x);
            let mut total = 0.0;
            if hi.is_finite() {
                let w = (hi - lo) / panels as f64;
                for i in 0..panels {
                    let a = lo + w * i as f64;
                    total += integrate(g, a, a + w, 1e-11 / panels as f64, 1e-14)?;
                }
            } else {
                // x = lo + t / (1 - t)
                let h = |t: f64| {
                    if t >= 1.0 {
                        return 0.0;
                    }
                    let d = 1.0 - t;
                    let v = g(lo + t / d) / (d * d);
                    if v.is_finite() {
                        v
                    } else {
                        0.0
                    }
                };
                let w = 1.0 / panels as f64;
                for i in 0..panels {
                    let a = w * i as f64;
                    total += integrate(h, a, a + w, 1e-11 / panels as f64, 1e-14)?;
                }
            }
            Ok(WeakCoefficient { m, value: total / (2.0 * PI) })
        })
        .collect()
}

/// Smooth approximation of the indicator of `[0, ∞)`: `atan(k x)/pi + 1/2`
/// on `[-1, k]`, joined to zero by cubic Hermite pieces on `[-2, -1]` and
/// `[k, k + 1]`, so it is C^1 with support `[-2, k + 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothStep {
    pub k: f64,
}

pub fn smooth_step(k: f64) -> SmoothStep {
    SmoothStep { k }
}

impl SmoothStep {
    fn core(&self, x: f64) -> (f64, f64) {
        let k = self.k;
        ((k * x).atan() / PI + 0.5, k / (PI * (1.0 + k * k * x * x)))
    }

    /// Cubic on `[x0, x0 + 1]` with given end values and slopes.
    fn hermite(t: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * d1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.k;
        if x <= -2.0 || x >= k + 1.0 {
            0.0
        } else if x < -1.0 {
            let (y, d) = self.core(-1.0);
            Self::hermite(x + 2.0, 0.0, 0.0, y, d)
        } else if x > k {
            let (y, d) = self.core(k);
            Self::hermite(x - k, y, d, 0.0, 0.0)
        } else {
            self.core(x).0
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (-2.0, self.k + 1.0)
    }

    /// Points where the definition changes, for splitting quadrature.
    pub fn breakpoints(&self) -> [f64; 4] {
        [-2.0, -1.0, self.k, self.k + 1.0]
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExpansionDiagnostics {
    pub gap: f64,
    pub max_imag_discarded: f64,
    pub continuation_radius: f64,
    pub cauchy_nodes: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExpansionResult {
    pub tilt: TiltData,
    pub order: usize,
    pub a: Vec<PolynomialC>,
    pub p: Vec<PolynomialR>,
    pub d: Vec<f64>,
    pub taylor: TaylorData,
    pub diagnostics: ExpansionDiagnostics,
}

impl ExpansionResult {
    pub fn first_order(&self) -> f64 {
        first_order(&self.tilt)
    }

    pub fn evaluate(&self, n: u64, orders: usize) -> Result<f64> {
        evaluate_expansion(&self.d, n, orders)
    }
}

/// Full pipeline for an analytic family: saddle, Taylor data at
/// `theta_a`, `A_k`, `P_m` and `D_m` for `m <= r/2`.
pub fn expand(family: &dyn AnalyticFamily, a: f64, r: usize, opts: &EngineOptions) -> Result<ExpansionResult> {
    if r > MAX_ORDER {
        return Err(Error::Range(format!("order {r} exceeds the maximum {MAX_ORDER}")));
    }
    let mut warnings = Vec::new();
    if r > CONDITIONING_WARN_ORDER {
        let w = format!("order {r} is poorly conditioned: Cauchy differentiation loses about one digit per two orders");
        log::warn!("{w}");
        warnings.push(w);
    }
    let tilt = solve_tilt(family, a, opts)?;
    let taylor = taylor_via_cauchy(family, tilt.theta, 3 * r + 2, opts.cauchy)?;
    let g = build_graded(&taylor, &tilt, r)?;
    g.check_expansion_structure(1e-12)?;
    let a_polys: Vec<PolynomialC> = (0..=r).map(|k| g.eps_coefficient(k)).collect();
    let (p, max_imag) = assemble_p(&g, tilt.sigma2, r)?;
    let d = strong_coefficients(&p, tilt.theta)?;
    let closed = first_order(&tilt);
    if (d[0] - closed).abs() > 1e-10 * closed.abs() {
        return Err(Error::Numerical(format!(
            "series D_0 = {} disagrees with closed form {closed}",
            d[0]
        )));
    }
    let diagnostics = ExpansionDiagnostics {
        gap: taylor.gap,
        max_imag_discarded: max_imag.max(taylor.max_imag),
        continuation_radius: taylor.radius,
        cauchy_nodes: taylor.nodes,
        warnings,
    };
    Ok(ExpansionResult { tilt, order: r, a: a_polys, p, d, taylor, diagnostics })
}

/// Warnings about violated structural hypotheses that do not stop the run.
pub fn model_warnings(model: &Model) -> Vec<String> {
    let mut out = Vec::new();
    let values: Option<Vec<f64>> = match model {
        Model::IidFinite(m) => Some(m.atoms().to_vec()),
        Model::FiniteMarkov(m) => Some(m.observable().iter().flatten().copied().collect()),
        _ => None,
    };
    if let Some(values) = values {
        let check = nonlattice_check(&values);
        if !check.nonlattice {
            let step = check.step.map_or("none".to_string(), |s| format!("{s}"));
            out.push(format!(
                "lattice observable (step {step}): the non-lattice hypothesis fails and the expansion is not expected to hold"
            ));
        }
    }
    out
}

/// [`expand`] for a concrete model, with the range check and lattice warnings.
pub fn expand_model(model: &Model, a: f64, r: usize, opts: &EngineOptions) -> Result<ExpansionResult> {
    let range = ldp_range(model)?;
    let mut opts = *opts;
    opts.range_upper = Some(opts.range_upper.map_or(range.upper, |u| u.min(range.upper)));
    let warnings = model_warnings(model);
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut res = expand(model.family(), a, r, &opts)?;
    if !range.exact && res.tilt.level >= range.lower {
        let w = format!(
            "level {} is above the certified lower bound {} of the range end; B is only bracketed",
            res.tilt.level, range.lower
        );
        log::warn!("{w}");
        res.diagnostics.warnings.push(w);
    }
    res.diagnostics.warnings.splice(0..0, warnings);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FiniteMarkovModel, IidFiniteModel, IidMgfModel};
    use approx::assert_relative_eq;

    fn opts() -> EngineOptions {
        EngineOptions::default()
    }

    fn mills(m: usize, a: f64) -> f64 {
        let mut df = 1.0;
        let mut k = 2 * m as i64 - 1;
        while k > 1 {
            df *= k as f64;
            k -= 2;
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        sign * df / ((2.0 * PI).sqrt() * a.powi(2 * m as i32 + 1))
    }

    #[test]
    fn gaussian_tilt() {
        let g = IidMgfModel::gaussian(0.0, 1.0).unwrap();
        let t = solve_tilt(&g, 0.5, &opts()).unwrap();
        assert_relative_eq!(t.theta, 0.5, max_relative = 1e-12);
        assert_relative_eq!(t.rate, 0.125, max_relative = 1e-12);
        assert_relative_eq!(t.sigma2, 1.0, max_relative = 1e-12);
        assert_relative_eq!(t.z0, 1.0, max_relative = 1e-12);
        let t = solve_tilt(&g, 2.0, &opts()).unwrap();
        assert_relative_eq!(t.theta, 2.0, max_relative = 1e-12);
        assert_relative_eq!(t.rate, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_coin_tilt() {
        let m = IidFiniteModel::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let t = solve_tilt(&m, 0.5, &opts()).unwrap();
        // Independent bisection on tanh(theta) = 0.5.
        let (mut lo, mut hi) = (0.0f64, 5.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.tanh() < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(t.theta, lo, max_relative = 1e-12);
        assert_relative_eq!(t.theta, 0.5f64.atanh(), max_relative = 1e-12);
        assert_relative_eq!(t.rate, 0.5 * t.theta - t.theta.cosh().ln(), max_relative = 1e-11);
    }

    #[test]
    fn gaussian_series_is_trivial() {
        let g = IidMgfModel::gaussian(0.0, 1.0).unwrap();
        let res = expand(&g, 1.0, 4, &opts()).unwrap();
        assert!((res.a[0].coeff(0) - 1.0).norm() < 1e-12);
        for k in 1..=4 {
            assert!(res.a[k].max_abs() < 1e-9, "A_{k} = {:?}", res.a[k]);
        }
        for m in 0..=2 {
            assert_relative_eq!(res.d[m], mills(m, 1.0), max_relative = 1e-9);
        }
    }

    #[test]
    fn gaussian_p_polynomials() {
        let g = IidMgfModel::gaussian(0.0, 1.0).unwrap();
        let res = expand(&g, 0.7, 6, &opts()).unwrap();
        for m in 0..=3 {
            let mut df = 1.0;
            let mut k = 2 * m as i64 - 1;
            while k > 1 {
                df *= k as f64;
                k -= 2;
            }
            let fact: f64 = (1..=2 * m).map(|x| x as f64).product();
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let expected = (2.0 * PI).sqrt() * sign * df / fact;
            assert_eq!(res.p[m].degree(), Some(2 * m));
            assert_relative_eq!(res.p[m].coeff(2 * m), expected, max_relative = 1e-10);
            for j in 0..2 * m {
                assert!(res.p[m].coeff(j).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn iid_first_correction_is_third_cumulant() {
        let m = IidFiniteModel::new(vec![0.0, 1.0, 2f64.sqrt()], vec![0.2, 0.5, 0.3]).unwrap();
        let res = expand(&m, 0.3, 2, &opts()).unwrap();
        let l3 = res.taylor.log_lambda[3].re;
        let a1 = &res.a[1];
        assert_eq!(a1.degree(), Some(3));
        assert!((a1.coeff(3) - Complex64::new(0.0, -l3 / 6.0)).norm() < 1e-12);
        assert!(a1.coeff(0).norm() + a1.coeff(1).norm() + a1.coeff(2).norm() < 1e-12);
    }

    #[test]
    fn order_zero_is_constant() {
        let m = IidFiniteModel::new(vec![0.0, 1.0, 2f64.sqrt()], vec![0.2, 0.5, 0.3]).unwrap();
        let res = expand(&m, 0.3, 0, &opts()).unwrap();
        assert_eq!(res.a.len(), 1);
        assert_eq!(res.p.len(), 1);
        assert_eq!(res.p[0].degree(), Some(0));
        assert_relative_eq!(res.p[0].coeff(0), res.tilt.z0 * (2.0 * PI / res.tilt.sigma2).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(res.d[0], res.first_order(), max_relative = 1e-12);
    }

    #[test]
    fn strong_coefficient_of_constant() {
        let p = vec![Polynomial::constant(3.0)];
        let d = strong_coefficients(&p, 1.5).unwrap();
        assert_relative_eq!(d[0], 3.0 / (2.0 * PI * 1.5), max_relative = 1e-15);
    }

    #[test]
    fn first_order_plug_in() {
        let t = TiltData { a: 1.0, mean: 0.0, level: 1.0, theta: 1.0, rate: 0.5, sigma2: 1.0, log_lambda: 0.5, z0: 1.0 };
        assert_relative_eq!(first_order(&t), 1.0 / (2.0 * PI).sqrt(), max_relative = 1e-15);
        let g = IidMgfModel::gaussian(0.0, 1.0).unwrap();
        let t = solve_tilt(&g, 2.0, &opts()).unwrap();
        assert_relative_eq!(first_order(&t), 0.5 / (2.0 * PI).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn expansion_partial_sums() {
        let d: Vec<f64> = (0..3).map(|m| mills(m, 1.0)).collect();
        assert_relative_eq!(evaluate_expansion(&d, 100, 0).unwrap(), 0.039894228040143274, max_relative = 1e-12);
        let v = evaluate_expansion(&d, 100, 2).unwrap();
        assert_relative_eq!(v, (1.0 - 0.01 + 3e-4) / (2.0 * PI * 100.0).sqrt(), max_relative = 1e-12);
        assert_eq!(evaluate_expansion(&[2.5], 1, 0).unwrap(), 2.5);
        assert!(matches!(evaluate_expansion(&d, 100, 3), Err(Error::Range(_))));
    }

    #[test]
    fn zero_excess_is_rejected() {
        let g = IidMgfModel::gaussian(0.0, 1.0).unwrap();
        assert!(matches!(solve_tilt(&g, 0.0, &opts()), Err(Error::Range(_))));
    }

    #[test]
    fn coboundary_is_degenerate() {
        // h_jk = H(k) - H(j) telescopes.
        let hv = [0.0, 1.0];
        let h: Vec<Vec<f64>> = (0..2).map(|j| (0..2).map(|k| hv[k] - hv[j]).collect()).collect();
        let m = FiniteMarkovModel::new(vec![vec![0.6, 0.4], vec![0.3, 0.7]], h, vec![0.5, 0.5]).unwrap();
        assert!(matches!(solve_tilt(&m, 0.1, &opts()), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn level_beyond_range_is_rejected() {
        let model = Model::IidFinite(IidFiniteModel::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap());
        assert!(matches!(expand_model(&model, 1.2, 2, &opts()), Err(Error::Range(_))));
    }

    #[test]
    fn smooth_step_shape() {
        let f = smooth_step(50.0);
        assert_eq!(f.eval(-3.0), 0.0);
        assert_eq!(f.eval(52.0), 0.0);
        assert_relative_eq!(f.eval(0.0), 0.5);
        assert!(f.eval(1.0) > 0.99);
        // Continuity at the joins.
        for x in f.breakpoints() {
            assert!((f.eval(x - 1e-9) - f.eval(x + 1e-9)).abs() < 1e-6);
        }
    }

    #[test]
    fn weak_coefficients_of_zero_function() {
        let p = vec![Polynomial::constant(1.0), Polynomial::new(vec![0.0, 0.0, 2.0])];
        let w = weak_coefficients(&p, 0.5, &|_| 0.0, (-1.0, 3.0), 4).unwrap();
        assert!(w.iter().all(|c| c.value == 0.0));
    }

    #[test]
    fn weak_coefficient_tilt_cancellation() {
        // f = e^{theta x} on [0, 1] leaves (1/2 pi) ∫_0^1 P_0.
        let theta = 0.7;
        let p = vec![Polynomial::constant(2.0)];
        let w = weak_coefficients(&p, theta, &|x: f64| (theta * x).exp(), (0.0, 1.0), 1).unwrap();
        assert_relative_eq!(w[0].value, 2.0 / (2.0 * PI), max_relative = 1e-12);
    }
}
