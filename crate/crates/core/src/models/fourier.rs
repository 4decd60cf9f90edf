use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{check_domain, param_f64, spread_radius, AnalyticFamily};
use crate::error::{Error, Result};
use crate::spectral::{CMatrix, CVector, OperatorTriple};

/// Real trigonometric polynomial
/// `sum_k cos[k] cos(2 pi k x) + sin[k] sin(2 pi k x)` on the circle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigPolynomial {
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigPolynomial {
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Self {
        Self { cos, sin }
    }

    pub fn one() -> Self {
        Self { cos: vec![1.0], sin: vec![] }
    }

    pub fn degree(&self) -> usize {
        let last = |v: &[f64]| v.iter().rposition(|c| *c != 0.0).unwrap_or(0);
        last(&self.cos).max(last(&self.sin))
    }

    pub fn mean(&self) -> f64 {
        self.cos.first().copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = self.mean();
        for (k, c) in self.cos.iter().enumerate().skip(1) {
            acc += c * (2.0 * PI * k as f64 * x).cos();
        }
        for (k, s) in self.sin.iter().enumerate().skip(1) {
            acc += s * (2.0 * PI * k as f64 * x).sin();
        }
        acc
    }

    /// Bound on `|g'|`.
    pub fn lipschitz(&self) -> f64 {
        let mut acc = 0.0;
        for (k, c) in self.cos.iter().enumerate() {
            acc += 2.0 * PI * k as f64 * c.abs();
        }
        for (k, s) in self.sin.iter().enumerate() {
            acc += 2.0 * PI * k as f64 * s.abs();
        }
        acc
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut acc = self.mean() * (b - a);
        for (k, c) in self.cos.iter().enumerate().skip(1) {
            let w = 2.0 * PI * k as f64;
            acc += c * ((w * b).sin() - (w * a).sin()) / w;
        }
        for (k, s) in self.sin.iter().enumerate().skip(1) {
            let w = 2.0 * PI * k as f64;
            acc -= s * ((w * b).cos() - (w * a).cos()) / w;
        }
        acc
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.cos.iter().chain(&self.sin).any(|c| !c.is_finite()) {
            return Err(Error::Model(format!("{name} has non-finite coefficients")));
        }
        if self.sin.first().is_some_and(|s| *s != 0.0) {
            return Err(Error::Model(format!("{name}: sin[0] must be 0")));
        }
        Ok(())
    }
}

/// Full-branch analytic expanding maps of degree two on the circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpandingMap {
    /// `x -> 2x mod 1`.
    Doubling,
    /// `x -> 2x + eps sin(2 pi x) / (2 pi) mod 1`, with `|eps| < 1`.
    PerturbedDoubling { eps: f64 },
}

impl ExpandingMap {
    pub fn from_named(name: &str, params: &Value) -> Result<Self> {
        match name {
            "doubling" => Ok(Self::Doubling),
            "perturbed_doubling" => {
                let eps = param_f64(params, "eps", None)?;
                if !(eps.abs() < 1.0) {
                    return Err(Error::Model("perturbed_doubling needs |eps| < 1".into()));
                }
                Ok(Self::PerturbedDoubling { eps })
            }
            other => Err(Error::Config(format!(
                "unknown map `{other}` (known: doubling, perturbed_doubling)"
            ))),
        }
    }

    pub fn branches(&self) -> usize {
        2
    }

    /// The lift `F` with `F(0) = 0`, `F(1) = 2`.
    pub fn lift(&self, y: f64) -> f64 {
        match self {
            Self::Doubling => 2.0 * y,
            Self::PerturbedDoubling { eps } => 2.0 * y + eps * (2.0 * PI * y).sin() / (2.0 * PI),
        }
    }

    pub fn apply(&self, y: f64) -> f64 {
        let x = self.lift(y).rem_euclid(1.0);
        if x >= 1.0 {
            0.0
        } else {
            x
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            Self::Doubling => 2.0,
            Self::PerturbedDoubling { eps } => 2.0 + eps * (2.0 * PI * y).cos(),
        }
    }

    /// `inf |f'|`.
    pub fn min_expansion(&self) -> f64 {
        match self {
            Self::Doubling => 2.0,
            Self::PerturbedDoubling { eps } => 2.0 - eps.abs(),
        }
    }

    /// Preimage of `x` in branch `b`, i.e. the `y` in `[b/2, (b+1)/2]`-ish
    /// interval with `F(y) = x + b`.
    pub fn inverse(&self, b: usize, x: f64) -> f64 {
        let target = x + b as f64;
        match self {
            Self::Doubling => target / 2.0,
            Self::PerturbedDoubling { .. } => {
                // F is increasing from F(0) = 0 to F(1) = 2 with F' >= 1.
                let (mut lo, mut hi) = (0.0, 1.0);
                let mut y = target / 2.0;
                for _ in 0..100 {
                    let f = self.lift(y) - target;
                    if f > 0.0 {
                        hi = y;
                    } else {
                        lo = y;
                    }
                    let step = f / self.derivative(y);
                    let mut next = y - step;
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - y).abs() <= 1e-16 * y.abs().max(1.0) {
                        y = next;
                        break;
                    }
                    y = next;
                }
                y
            }
        }
    }
}

/// Birkhoff sums of an observable `g` along an expanding circle map, with
/// the initial point drawn from density `rho`. The twisted transfer
/// operator `L_z h(x) = sum_{f(y) = x} e^{z g(y)} h(y) / f'(y)` is
/// discretised by Galerkin projection onto the real trigonometric basis
/// `1, sqrt2 cos 2 pi n x, sqrt2 sin 2 pi n x` (`n <= m_max`), with inner
/// products computed on `K` equispaced collocation points.
#[derive(Debug, Clone)]
pub struct FourierTransferModel {
    map: ExpandingMap,
    g: TrigPolynomial,
    rho: TrigPolynomial,
    m_max: usize,
    collocation: usize,
    /// `phi_a(x_k) / K`, basis by collocation point.
    project: CMatrix,
    /// Per branch: `phi_a(y_kb) / f'(y_kb)`, collocation point by basis.
    lift: Vec<CMatrix>,
    /// Per branch: `g(y_kb)`.
    g_at: Vec<Vec<f64>>,
    v: CVector,
}

fn basis(a: usize, x: f64) -> f64 {
    if a == 0 {
        1.0
    } else {
        let n = a.div_ceil(2) as f64;
        if a % 2 == 1 {
            SQRT_2 * (2.0 * PI * n * x).cos()
        } else {
            SQRT_2 * (2.0 * PI * n * x).sin()
        }
    }
}

impl FourierTransferModel {
    pub fn new(
        map: ExpandingMap,
        g: TrigPolynomial,
        rho: TrigPolynomial,
        m_max: usize,
        collocation: Option<usize>,
    ) -> Result<Self> {
        g.validate("g")?;
        rho.validate("rho")?;
        if m_max == 0 {
            return Err(Error::Config("m_max must be positive".into()));
        }
        let k = collocation.unwrap_or(4 * m_max);
        if k < 4 * m_max {
            return Err(Error::Config(format!(
                "collocation grid K = {k} is below 4 m_max = {}",
                4 * m_max
            )));
        }
        if (rho.mean() - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!("rho integrates to {}, not 1", rho.mean())));
        }
        if rho.degree() > m_max {
            return Err(Error::Config(format!(
                "rho has degree {} above m_max = {m_max}",
                rho.degree()
            )));
        }
        if (0..4096).any(|i| rho.eval(i as f64 / 4096.0) < -1e-12) {
            return Err(Error::Model("rho takes negative values".into()));
        }
        if !(map.min_expansion() > 1.0) {
            return Err(Error::Model("map is not expanding".into()));
        }
        let dim = 2 * m_max + 1;
        let xs: Vec<f64> = (0..k).map(|i| i as f64 / k as f64).collect();
        let project = CMatrix::from_fn(dim, k, |a, i| Complex64::new(basis(a, xs[i]) / k as f64, 0.0));
        let mut lift = Vec::new();
        let mut g_at = Vec::new();
        for b in 0..map.branches() {
            let ys: Vec<f64> = xs.iter().map(|&x| map.inverse(b, x)).collect();
            lift.push(CMatrix::from_fn(k, dim, |i, a| {
                Complex64::new(basis(a, ys[i]) / map.derivative(ys[i]), 0.0)
            }));
            g_at.push(ys.iter().map(|&y| g.eval(y)).collect());
        }
        let v = CVector::from_fn(dim, |a, _| {
            let n = a.div_ceil(2);
            let c = if a == 0 {
                rho.mean()
            } else if a % 2 == 1 {
                rho.cos.get(n).copied().unwrap_or(0.0) / SQRT_2
            } else {
                rho.sin.get(n).copied().unwrap_or(0.0) / SQRT_2
            };
            Complex64::new(c, 0.0)
        });
        Ok(Self { map, g, rho, m_max, collocation: k, project, lift, g_at, v })
    }

    pub fn map(&self) -> ExpandingMap {
        self.map
    }

    pub fn observable(&self) -> &TrigPolynomial {
        &self.g
    }

    pub fn density(&self) -> &TrigPolynomial {
        &self.rho
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn collocation(&self) -> usize {
        self.collocation
    }

    /// The same model with a different mode cutoff (and default `K`).
    pub fn with_m_max(&self, m_max: usize) -> Result<Self> {
        Self::new(self.map, self.g.clone(), self.rho.clone(), m_max, None)
    }
}

impl AnalyticFamily for FourierTransferModel {
    fn evaluate(&self, z: Complex64) -> Result<OperatorTriple> {
        check_domain(z, f64::INFINITY)?;
        let k = self.collocation;
        let dim = 2 * self.m_max + 1;
        let mut t = CMatrix::zeros(k, dim);
        for (lift, g) in self.lift.iter().zip(&self.g_at) {
            for i in 0..k {
                let w = (z * g[i]).exp();
                for a in 0..dim {
                    t[(i, a)] += lift[(i, a)] * w;
                }
            }
        }
        let m = &self.project * t;
        let mut ell = CVector::zeros(dim);
        ell[0] = Complex64::new(1.0, 0.0);
        OperatorTriple::new(m, ell, self.v.clone())
    }

    fn dim(&self) -> usize {
        2 * self.m_max + 1
    }

    fn natural_radius(&self) -> f64 {
        spread_radius((0..1024).map(|i| self.g.eval(i as f64 / 1024.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::perron;

    fn doubling(g: TrigPolynomial, m_max: usize) -> FourierTransferModel {
        FourierTransferModel::new(ExpandingMap::Doubling, g, TrigPolynomial::one(), m_max, None).unwrap()
    }

    #[test]
    fn trig_polynomial_basics() {
        let p = TrigPolynomial::new(vec![0.5, 1.0], vec![0.0, 2.0]);
        assert!((p.eval(0.25) - 2.5).abs() < 1e-15);
        assert!((p.integral(0.0, 1.0) - 0.5).abs() < 1e-15);
        let q = crate::quad::integrate(|x| p.eval(x), 0.1, 0.37, 1e-15, 1e-15).unwrap();
        assert!((p.integral(0.1, 0.37) - q).abs() < 1e-14);
        assert_eq!(p.degree(), 1);
    }

    #[test]
    fn normalised_at_zero() {
        for g in [TrigPolynomial::default(), TrigPolynomial::new(vec![0.0, 1.0], vec![])] {
            let m = doubling(g, 16);
            let p = perron(&m.evaluate(Complex64::new(0.0, 0.0)).unwrap()).unwrap();
            assert!((p.lambda - 1.0).norm() < 1e-12);
            assert!((p.z - 1.0).norm() < 1e-12);
        }
        let m = doubling(TrigPolynomial::default(), 8);
        let p = perron(&m.evaluate(Complex64::new(0.0, 0.0)).unwrap()).unwrap();
        // Eigenfunction is the constant mode.
        let w0 = p.right[0].norm();
        assert!(p.right.iter().skip(1).all(|c| c.norm() < 1e-12 * w0));
    }

    #[test]
    fn perturbed_map_inverse_and_normalisation() {
        let map = ExpandingMap::PerturbedDoubling { eps: 0.3 };
        for b in 0..2 {
            for i in 0..20 {
                let x = i as f64 / 20.0;
                let y = map.inverse(b, x);
                assert!((map.lift(y) - x - b as f64).abs() < 1e-14);
            }
        }
        let m = FourierTransferModel::new(map, TrigPolynomial::new(vec![0.0, 1.0], vec![]), TrigPolynomial::one(), 24, None)
            .unwrap();
        let p = perron(&m.evaluate(Complex64::new(0.0, 0.0)).unwrap()).unwrap();
        assert!((p.lambda - 1.0).norm() < 1e-12);
    }

    #[test]
    fn mode_cutoff_convergence() {
        let g = TrigPolynomial::new(vec![0.0, 1.0], vec![]);
        let z = Complex64::new(0.5, 0.0);
        let a = perron(&doubling(g.clone(), 32).evaluate(z).unwrap()).unwrap();
        let b = perron(&doubling(g, 64).evaluate(z).unwrap()).unwrap();
        assert!((a.lambda - b.lambda).norm() < 1e-10);
        assert!((a.z - b.z).norm() < 1e-10);
    }

    #[test]
    fn aliasing_guard() {
        let e = FourierTransferModel::new(ExpandingMap::Doubling, TrigPolynomial::one(), TrigPolynomial::one(), 16, Some(40));
        assert!(matches!(e, Err(Error::Config(_))));
    }
}
