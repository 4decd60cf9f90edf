use num_complex::Complex64;

use super::{check_domain, spread_radius, AnalyticFamily};
use crate::error::{Error, Result};
use crate::spectral::{CMatrix, CVector, OperatorTriple};

/// Additive functional `S_N = sum h(x_{k-1}, x_k)` of a finite Markov chain
/// with positive transition matrix `P` and initial law `mu0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMarkovModel {
    p: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    mu0: Vec<f64>,
}

fn check_square(name: &str, m: &[Vec<f64>], d: usize) -> Result<()> {
    if m.len() != d || m.iter().any(|row| row.len() != d) {
        return Err(Error::Model(format!("{name} must be {d}x{d}")));
    }
    if m.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Model(format!("{name} has non-finite entries")));
    }
    Ok(())
}

impl FiniteMarkovModel {
    pub fn new(p: Vec<Vec<f64>>, h: Vec<Vec<f64>>, mu0: Vec<f64>) -> Result<Self> {
        let d = p.len();
        if d == 0 {
            return Err(Error::Model("empty transition matrix".into()));
        }
        check_square("P", &p, d)?;
        check_square("h", &h, d)?;
        for (j, row) in p.iter().enumerate() {
            if row.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::Model(format!("row {j} of P has a nonpositive entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Model(format!("row {j} of P sums to {s}, not 1")));
            }
        }
        if mu0.len() != d || mu0.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Model("mu0 must be a nonnegative vector of length d".into()));
        }
        let s: f64 = mu0.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!("mu0 sums to {s}, not 1")));
        }
        Ok(Self { p, h, mu0 })
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn observable(&self) -> &[Vec<f64>] {
        &self.h
    }

    pub fn initial(&self) -> &[f64] {
        &self.mu0
    }

    pub fn states(&self) -> usize {
        self.p.len()
    }
}

impl AnalyticFamily for FiniteMarkovModel {
    fn evaluate(&self, z: Complex64) -> Result<OperatorTriple> {
        check_domain(z, f64::INFINITY)?;
        let d = self.states();
        let m = CMatrix::from_fn(d, d, |j, k| (z * self.h[j][k]).exp() * self.p[j][k]);
        let ell = CVector::from_fn(d, |j, _| Complex64::new(self.mu0[j], 0.0));
        let v = CVector::from_element(d, Complex64::new(1.0, 0.0));
        OperatorTriple::new(m, ell, v)
    }

    fn dim(&self) -> usize {
        self.states()
    }

    fn natural_radius(&self) -> f64 {
        spread_radius(self.h.iter().flatten().copied())
    }
}
