//! Polynomial and bivariate truncated-series algebra, plus the closed-form
//! moment integrals used to integrate expansion polynomials.
//!
//! Everything here is generic over the coefficient ring. Polynomials and
//! graded series only need `Num + Clone`, so they work over `f64`,
//! `Complex<f64>` and exact rationals alike; the Gaussian moments need a
//! real floating-point scalar.

use num_complex::Complex;
use num_traits::{Num, Zero};

use crate::error::{Error, Result};
use crate::scalar::{ring_count, Real};

/// Largest moment order for which the double factorial is tabulated.
pub const MAX_MOMENT_ORDER: usize = 40;

/// Dense univariate polynomial; `coeffs()[j]` multiplies `s^j`.
///
/// The coefficient vector never carries trailing zeros, so the zero
/// polynomial has no coefficients and no degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<C> {
    coeffs: Vec<C>,
}

impl<C: Num + Clone> Polynomial<C> {
    pub fn new(mut coeffs: Vec<C>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(C::one())
    }

    pub fn constant(c: C) -> Self {
        Self::new(vec![c])
    }

    /// `c * s^power`.
    pub fn monomial(c: C, power: usize) -> Self {
        let mut coeffs = vec![C::zero(); power + 1];
        coeffs[power] = c;
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C> {
        self.coeffs
    }

    /// Coefficient of `s^j`, zero beyond the degree.
    pub fn coeff(&self, j: usize) -> C {
        self.coeffs.get(j).cloned().unwrap_or_else(C::zero)
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new((0..n).map(|j| self.coeff(j) + other.coeff(j)).collect())
    }

    pub fn scale(&self, c: &C) -> Self {
        Self::new(self.coeffs.iter().map(|a| a.clone() * c.clone()).collect())
    }

    /// Convolution product.
    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![C::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Self::new(out)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: &C) -> C {
        self.coeffs
            .iter()
            .rev()
            .fold(C::zero(), |acc, c| acc * x.clone() + c.clone())
    }
}

/// Product of two polynomials.
pub fn poly_mul<C: Num + Clone>(p: &Polynomial<C>, q: &Polynomial<C>) -> Polynomial<C> {
    p.mul(q)
}

impl<T: Real> Polynomial<T> {
    pub fn max_abs(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, c| m.max(c.abs()))
    }
}

impl<T: Real> Polynomial<Complex<T>> {
    pub fn max_abs(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, c| m.max(c.norm()))
    }

    /// Drops imaginary parts, provided each is at most `rel_tol` times the
    /// largest coefficient modulus. Returns the real polynomial together with
    /// the largest imaginary part discarded.
    pub fn to_real(&self, rel_tol: T) -> Result<(Polynomial<T>, T)> {
        let scale = self.max_abs();
        let max_imag = self.coeffs.iter().fold(T::zero(), |m, c| m.max(c.im.abs()));
        if max_imag > rel_tol * scale {
            return Err(Error::Numerical(format!(
                "polynomial is not real: imaginary residue {max_imag:e} exceeds {:e}",
                rel_tol * scale
            )));
        }
        let real = Polynomial::new(self.coeffs.iter().map(|c| c.re).collect());
        Ok((real, max_imag))
    }
}

/// Truncated bivariate series `sum_{k,j} c[k][j] eps^k s^j` with
/// `k <= order_eps` and `j <= order_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedSeries<C> {
    order_eps: usize,
    order_s: usize,
    coeffs: Vec<Vec<C>>,
}

impl<C: Num + Clone> GradedSeries<C> {
    pub fn zero(order_eps: usize, order_s: usize) -> Self {
        Self {
            order_eps,
            order_s,
            coeffs: vec![vec![C::zero(); order_s + 1]; order_eps + 1],
        }
    }

    pub fn one(order_eps: usize, order_s: usize) -> Self {
        let mut g = Self::zero(order_eps, order_s);
        g.coeffs[0][0] = C::one();
        g
    }

    /// Builds a series from `(eps_power, s_power, coefficient)` triples;
    /// terms outside the truncation window are dropped, repeated terms add.
    pub fn from_terms<I>(order_eps: usize, order_s: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, C)>,
    {
        let mut g = Self::zero(order_eps, order_s);
        for (k, j, c) in terms {
            g.add_term(k, j, c);
        }
        g
    }

    pub fn order_eps(&self) -> usize {
        self.order_eps
    }

    pub fn order_s(&self) -> usize {
        self.order_s
    }

    /// Coefficient of `eps^k s^j`; zero outside the window.
    pub fn coeff(&self, k: usize, j: usize) -> C {
        self.coeffs
            .get(k)
            .and_then(|row| row.get(j))
            .cloned()
            .unwrap_or_else(C::zero)
    }

    pub fn add_term(&mut self, k: usize, j: usize, c: C) {
        if k <= self.order_eps && j <= self.order_s {
            self.coeffs[k][j] = self.coeffs[k][j].clone() + c;
        }
    }

    /// Coefficient of `eps^k` as a polynomial in `s`.
    pub fn eps_coefficient(&self, k: usize) -> Polynomial<C> {
        match self.coeffs.get(k) {
            Some(row) => Polynomial::new(row.clone()),
            None => Polynomial::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().flatten().all(|c| c.is_zero())
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = self.clone();
        for x in out.coeffs.iter_mut().flatten() {
            *x = x.clone() * c.clone();
        }
        out
    }

    /// Sum, truncated to the smaller of the two windows.
    pub fn add(&self, other: &Self) -> Self {
        let oe = self.order_eps.min(other.order_eps);
        let os = self.order_s.min(other.order_s);
        let mut out = Self::zero(oe, os);
        for k in 0..=oe {
            for j in 0..=os {
                out.coeffs[k][j] = self.coeff(k, j) + other.coeff(k, j);
            }
        }
        out
    }

    /// Product, truncated to the smaller of the two windows.
    pub fn mul(&self, other: &Self) -> Self {
        let oe = self.order_eps.min(other.order_eps);
        let os = self.order_s.min(other.order_s);
        let mut out = Self::zero(oe, os);
        for k1 in 0..=oe {
            for j1 in 0..=os {
                let a = self.coeff(k1, j1);
                if a.is_zero() {
                    continue;
                }
                for k2 in 0..=(oe - k1) {
                    for j2 in 0..=(os - j1) {
                        let b = other.coeff(k2, j2);
                        if b.is_zero() {
                            continue;
                        }
                        out.coeffs[k1 + k2][j1 + j2] =
                            out.coeffs[k1 + k2][j1 + j2].clone() + a.clone() * b;
                    }
                }
            }
        }
        out
    }

    /// Formal exponential. The constant term must vanish; a unit factor has
    /// to be pulled out by the caller.
    pub fn exp(&self) -> Result<Self> {
        if !self.coeffs[0][0].is_zero() {
            return Err(Error::Numerical(
                "formal exponential needs a series without constant term".into(),
            ));
        }
        let mut result = Self::one(self.order_eps, self.order_s);
        let mut term = Self::one(self.order_eps, self.order_s);
        // Every factor raises the total (eps, s) degree by at least one.
        for m in 1..=(self.order_eps + self.order_s) {
            term = term.mul(self);
            let inv_m = C::one() / ring_count::<C>(m);
            term = term.scale(&inv_m);
            if term.is_zero() {
                break;
            }
            result = result.add(&term);
        }
        Ok(result)
    }
}

/// Product of two graded series.
pub fn graded_mul<C: Num + Clone>(g: &GradedSeries<C>, h: &GradedSeries<C>) -> GradedSeries<C> {
    g.mul(h)
}

/// Formal exponential of a graded series with zero constant term.
pub fn graded_exp<C: Num + Clone>(g: &GradedSeries<C>) -> Result<GradedSeries<C>> {
    g.exp()
}

impl<T: Real> GradedSeries<Complex<T>> {
    /// Largest modulus among all coefficients.
    pub fn max_abs(&self) -> T {
        self.coeffs
            .iter()
            .flatten()
            .fold(T::zero(), |m, c| m.max(c.norm()))
    }

    /// Checks the structure of an expansion in `eps = n^{-1/2}`: the
    /// `eps^k` coefficient has degree at most `3k` and the parity of `k`.
    /// Entries violating this must be below `tol` times the largest
    /// coefficient.
    pub fn check_expansion_structure(&self, tol: T) -> Result<()> {
        let bound = tol * self.max_abs().max(T::one());
        for (k, row) in self.coeffs.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                let forbidden = j > 3 * k || (j + k) % 2 == 1;
                if forbidden && c.norm() > bound {
                    return Err(Error::Numerical(format!(
                        "expansion coefficient eps^{k} s^{j} = {c:e} violates degree/parity structure"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn double_factorial(m: usize) -> Result<u128> {
    if m > MAX_MOMENT_ORDER {
        return Err(Error::Range(format!(
            "moment order {m} exceeds supported maximum {MAX_MOMENT_ORDER}"
        )));
    }
    let mut acc: u128 = 1;
    let mut k = m;
    while k > 1 {
        acc *= k as u128;
        k -= 2;
    }
    Ok(acc)
}

/// `∫_R s^m exp(-sigma2 s^2 / 2) ds` in closed form.
pub fn gaussian_moment<T: Real>(m: usize, sigma2: T) -> Result<T> {
    if !(sigma2 > T::zero()) {
        return Err(Error::Domain(format!("gaussian_moment needs sigma2 > 0, got {sigma2}")));
    }
    if m % 2 == 1 {
        // Still validate the order bound.
        double_factorial(m)?;
        return Ok(T::zero());
    }
    let dfact = T::from_u128(double_factorial(m.saturating_sub(1))?)
        .ok_or_else(|| Error::Numerical("double factorial overflow".into()))?;
    let two_pi = T::PI() + T::PI();
    let sigma = sigma2.sqrt();
    Ok((two_pi / sigma2).sqrt() * dfact / sigma.powi(m as i32))
}

/// `∫_0^∞ x^j exp(-theta x) dx = j! / theta^(j+1)`.
///
/// Generic over any ordered field so that it can be checked exactly over
/// the rationals.
pub fn exp_moment<C: Num + Clone + PartialOrd>(j: usize, theta: C) -> Result<C> {
    if !(theta > C::zero()) {
        return Err(Error::Domain("exp_moment needs theta > 0".into()));
    }
    let mut value = C::one() / theta.clone();
    for i in 1..=j {
        value = value * ring_count::<C>(i) / theta.clone();
    }
    Ok(value)
}

/// `∫_R p(s) exp(-sigma2 s^2 / 2) ds` for a complex polynomial.
pub fn integrate_against_gaussian<T: Real>(p: &Polynomial<Complex<T>>, sigma2: T) -> Result<Complex<T>> {
    let mut acc = Complex::<T>::zero();
    for (j, c) in p.coeffs().iter().enumerate() {
        acc = acc + *c * gaussian_moment(j, sigma2)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_real_line;
    use approx::assert_relative_eq;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type C64 = Complex<f64>;

    fn c(re: f64, im: f64) -> C64 {
        Complex::new(re, im)
    }

    #[test]
    fn poly_mul_examples() {
        let p = Polynomial::new(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let q = Polynomial::new(vec![c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(
            poly_mul(&p, &q),
            Polynomial::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
        );
        assert!(poly_mul(&p, &Polynomial::zero()).is_zero());
        let is = Polynomial::monomial(c(0.0, 1.0), 1);
        assert_eq!(poly_mul(&is, &is), Polynomial::monomial(c(-1.0, 0.0), 2));
        assert_eq!(poly_mul(&p, &q).degree(), Some(2));
    }

    #[test]
    fn zero_polynomial_has_no_degree() {
        let z: Polynomial<f64> = Polynomial::new(vec![0.0, 0.0]);
        assert!(z.is_zero());
        assert_eq!(z.degree(), None);
        assert_eq!(Polynomial::new(vec![1.0, 2.0, 0.0]).degree(), Some(1));
    }

    #[test]
    fn to_real_rejects_imaginary_residue() {
        let p = Polynomial::new(vec![c(1.0, 1e-12), c(2.0, 0.0)]);
        let (r, im) = p.to_real(1e-8).unwrap();
        assert_eq!(r.coeffs(), &[1.0, 2.0]);
        assert!(im > 0.0);
        let bad = Polynomial::new(vec![c(1.0, 1e-3), c(2.0, 0.0)]);
        assert!(bad.to_real(1e-8).is_err());
    }

    #[test]
    fn graded_exp_of_cubic_term() {
        let psi3 = c(0.0, -0.7);
        let g = GradedSeries::from_terms(3, 9, [(1, 3, psi3)]);
        let e = graded_exp(&g).unwrap();
        assert_eq!(e.coeff(0, 0), c(1.0, 0.0));
        assert_eq!(e.coeff(1, 3), psi3);
        assert_relative_eq!((e.coeff(2, 6) - psi3 * psi3 / 2.0).norm(), 0.0);
        assert_relative_eq!((e.coeff(3, 9) - psi3 * psi3 * psi3 / 6.0).norm(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn graded_exp_of_zero_is_one() {
        let g: GradedSeries<C64> = GradedSeries::zero(4, 12);
        assert_eq!(graded_exp(&g).unwrap(), GradedSeries::one(4, 12));
    }

    #[test]
    fn graded_exp_truncates_in_eps() {
        let g = GradedSeries::from_terms(3, 12, [(2, 4, c(1.0, 0.0))]);
        let e = graded_exp(&g).unwrap();
        let expected = GradedSeries::from_terms(3, 12, [(0, 0, c(1.0, 0.0)), (2, 4, c(1.0, 0.0))]);
        assert_eq!(e, expected);
    }

    #[test]
    fn graded_exp_rejects_constant_term() {
        let g = GradedSeries::from_terms(2, 2, [(0, 0, c(0.5, 0.0))]);
        assert!(matches!(graded_exp(&g), Err(Error::Numerical(_))));
    }

    #[test]
    fn graded_mul_examples() {
        let g = GradedSeries::from_terms(3, 6, [(0, 0, 1.0), (1, 1, 2.5), (2, 4, -1.0)]);
        assert_eq!(graded_mul(&g, &GradedSeries::one(3, 6)), g);

        let p = GradedSeries::from_terms(3, 6, [(0, 0, 1.0), (1, 1, 1.0)]);
        let m = GradedSeries::from_terms(3, 6, [(0, 0, 1.0), (1, 1, -1.0)]);
        let expected = GradedSeries::from_terms(3, 6, [(0, 0, 1.0), (2, 2, -1.0)]);
        assert_eq!(graded_mul(&p, &m), expected);

        // order_eps = 0 on one side keeps only the eps^0 row of the other.
        let scalar = GradedSeries::from_terms(0, 6, [(0, 0, 3.0)]);
        let prod = graded_mul(&scalar, &g);
        assert_eq!(prod.order_eps(), 0);
        assert_eq!(prod.coeff(0, 0), 3.0);
        assert_eq!(prod.coeff(1, 1), 0.0);
    }

    #[test]
    fn gaussian_moment_examples() {
        let root_two_pi = (2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(gaussian_moment(0, 1.0).unwrap(), 2.5066282746, epsilon = 1e-10);
        assert_eq!(gaussian_moment(1, 4.0).unwrap(), 0.0);
        assert_relative_eq!(gaussian_moment(4, 1.0).unwrap(), 3.0 * root_two_pi, max_relative = 1e-15);
        assert_relative_eq!(gaussian_moment(4, 1.0).unwrap(), 7.5198848239, epsilon = 1e-9);
        assert!(gaussian_moment(2, 0.0).is_err());
        assert!(gaussian_moment(2, -1.0).is_err());
        assert!(gaussian_moment(40, 1.0).is_ok());
        assert!(matches!(gaussian_moment(42, 1.0), Err(Error::Range(_))));
    }

    #[test]
    fn gaussian_moment_matches_quadrature() {
        for &sigma2 in &[0.25, 1.0, 4.0] {
            for m in 0..=12usize {
                let exact = gaussian_moment(m, sigma2).unwrap();
                let numeric = integrate_real_line(
                    |s: f64| s.powi(m as i32) * (-sigma2 * s * s / 2.0).exp(),
                    1e-14,
                )
                .unwrap();
                if m % 2 == 1 {
                    assert!(numeric.abs() < 1e-10 * gaussian_moment(m + 1, sigma2).unwrap());
                } else {
                    assert_relative_eq!(numeric, exact, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn gaussian_moment_in_single_precision() {
        let v: f32 = gaussian_moment(2, 1.0f32).unwrap();
        assert!((v - (2.0 * std::f32::consts::PI).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn exp_moment_examples() {
        assert_eq!(exp_moment(0, 2.0).unwrap(), 0.5);
        assert_eq!(exp_moment(1, 1.0).unwrap(), 1.0);
        assert_relative_eq!(exp_moment(3, 0.5).unwrap(), 96.0, max_relative = 1e-15);
        assert!(exp_moment(2, 0.0).is_err());
        assert!(exp_moment(2, -0.3).is_err());
    }

    #[test]
    fn exp_moment_is_exact_over_rationals() {
        for j in 0..12usize {
            for (p, q) in [(1i64, 2i64), (3, 7), (5, 3)] {
                let theta = Ratio::new(p as i128, q as i128);
                let m = exp_moment(j, theta).unwrap();
                let mut fact = Ratio::from_integer(1i128);
                for i in 1..=j {
                    fact *= Ratio::from_integer(i as i128);
                }
                let mut pow = Ratio::from_integer(1i128);
                for _ in 0..=j {
                    pow *= theta;
                }
                assert_eq!(m * pow / fact, Ratio::from_integer(1));
            }
        }
    }

    #[test]
    fn integrate_against_gaussian_examples() {
        let root_two_pi = (2.0 * std::f64::consts::PI).sqrt();
        let one = Polynomial::constant(c(1.0, 0.0));
        assert_relative_eq!(integrate_against_gaussian(&one, 1.0).unwrap().re, root_two_pi);
        let s = Polynomial::monomial(c(1.0, 0.0), 1);
        assert_eq!(integrate_against_gaussian(&s, 3.0).unwrap(), c(0.0, 0.0));
        let half_sq = Polynomial::monomial(c(-0.5, 0.0), 2);
        assert_relative_eq!(
            integrate_against_gaussian(&half_sq, 1.0).unwrap().re,
            -root_two_pi / 2.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn structure_check_flags_parity_violation() {
        let good = GradedSeries::from_terms(2, 8, [(0, 0, c(1.0, 0.0)), (1, 3, c(0.0, 0.2)), (2, 6, c(-0.02, 0.0))]);
        assert!(good.check_expansion_structure(1e-12).is_ok());
        let bad = GradedSeries::from_terms(2, 8, [(0, 0, c(1.0, 0.0)), (1, 2, c(0.1, 0.0))]);
        assert!(bad.check_expansion_structure(1e-12).is_err());
        let too_high = GradedSeries::from_terms(2, 8, [(0, 0, c(1.0, 0.0)), (1, 5, c(0.1, 0.0))]);
        assert!(too_high.check_expansion_structure(1e-12).is_err());
    }

    fn small_series() -> impl Strategy<Value = GradedSeries<Ratio<i128>>> {
        prop::collection::vec((0usize..=2, 0usize..=3, -4i128..=4, 1i128..=3), 0..4).prop_map(|terms| {
            GradedSeries::from_terms(
                3,
                6,
                terms
                    .into_iter()
                    .filter(|(k, j, _, _)| k + j > 0)
                    .map(|(k, j, p, q)| (k, j, Ratio::new(p, q))),
            )
        })
    }

    proptest! {
        #[test]
        fn exp_turns_sums_into_products(g in small_series(), h in small_series()) {
            let lhs = graded_exp(&g.add(&h)).unwrap();
            let rhs = graded_mul(&graded_exp(&g).unwrap(), &graded_exp(&h).unwrap());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn exp_moment_normalises(j in 0usize..20, theta in 0.05f64..5.0) {
            let m = exp_moment(j, theta).unwrap();
            let fact: f64 = (1..=j).map(|i| i as f64).product();
            let back = m * theta.powi(j as i32 + 1) / fact;
            prop_assert!((back - 1.0).abs() < 1e-14);
        }
    }
}
