use num_complex::Complex64;
use serde_json::Value;

use super::{check_domain, param_f64, param_vec, spread_radius, AnalyticFamily};
use crate::error::{Error, Result};
use crate::quad::gauss_legendre_on;
use crate::spectral::OperatorTriple;

/// Sums of iid copies of a finitely supported random variable.
#[derive(Debug, Clone, PartialEq)]
pub struct IidFiniteModel {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl IidFiniteModel {
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.len() < 2 {
            return Err(Error::Model("an iid law needs at least two atoms".into()));
        }
        if atoms.len() != probs.len() {
            return Err(Error::Model(format!(
                "{} atoms but {} probabilities",
                atoms.len(),
                probs.len()
            )));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::Model("atoms must be finite".into()));
        }
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Model("probabilities must be positive".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!("probabilities sum to {total}, not 1")));
        }
        for i in 0..atoms.len() {
            for j in 0..i {
                if atoms[i] == atoms[j] {
                    return Err(Error::Model(format!("atom {} listed twice", atoms[i])));
                }
            }
        }
        Ok(Self { atoms, probs })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mgf(&self, z: Complex64) -> Complex64 {
        self.atoms.iter().zip(&self.probs).map(|(&a, &p)| (z * a).exp() * p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(a, p)| a * p).sum()
    }

    /// The same law translated by `c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.atoms.iter().map(|a| a + c).collect(), self.probs.clone())
    }
}

impl AnalyticFamily for IidFiniteModel {
    fn evaluate(&self, z: Complex64) -> Result<OperatorTriple> {
        check_domain(z, f64::INFINITY)?;
        Ok(OperatorTriple::scalar(self.mgf(z)))
    }

    fn dim(&self) -> usize {
        1
    }

    fn natural_radius(&self) -> f64 {
        spread_radius(self.atoms.iter().copied())
    }
}

/// Builtin analytic moment generating functions.
#[derive(Debug, Clone, PartialEq)]
pub enum MgfFamily {
    Gaussian { mu: f64, sigma2: f64 },
    /// Exponential law with the given rate; analytic for `Re z < rate`.
    Exponential { rate: f64 },
    /// Compactly supported density, piecewise linear between table points,
    /// integrated by Gauss-Legendre on each piece. Stored as a discrete rule.
    Tabulated { nodes: Vec<f64>, weights: Vec<f64> },
}

/// Sums of iid copies of a variable given through its MGF.
#[derive(Debug, Clone, PartialEq)]
pub struct IidMgfModel {
    family: MgfFamily,
    delta: f64,
}

const TABLE_POINTS_PER_PIECE: usize = 24;

impl IidMgfModel {
    pub fn new(family: MgfFamily, delta: Option<f64>) -> Result<Self> {
        let limit = match &family {
            MgfFamily::Gaussian { mu, sigma2 } => {
                if !(*sigma2 > 0.0) || !mu.is_finite() || !sigma2.is_finite() {
                    return Err(Error::Model("gaussian needs finite mu and sigma2 > 0".into()));
                }
                f64::INFINITY
            }
            MgfFamily::Exponential { rate } => {
                if !(*rate > 0.0) || !rate.is_finite() {
                    return Err(Error::Model("exponential needs rate > 0".into()));
                }
                *rate
            }
            MgfFamily::Tabulated { nodes, weights } => {
                if nodes.is_empty() || nodes.len() != weights.len() {
                    return Err(Error::Model("empty density table".into()));
                }
                f64::INFINITY
            }
        };
        let delta = match delta {
            None => limit,
            Some(d) if d > 0.0 && d <= limit => d,
            Some(d) => {
                return Err(Error::Model(format!(
                    "declared delta = {d} is not in (0, {limit}]"
                )))
            }
        };
        Ok(Self { family, delta })
    }

    pub fn gaussian(mu: f64, sigma2: f64) -> Result<Self> {
        Self::new(MgfFamily::Gaussian { mu, sigma2 }, None)
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(MgfFamily::Exponential { rate }, None)
    }

    /// Density proportional to the piecewise-linear interpolant of
    /// `(x[i], density[i])`, normalised to integrate to one.
    pub fn tabulated(x: &[f64], density: &[f64]) -> Result<Self> {
        if x.len() < 2 || x.len() != density.len() {
            return Err(Error::Model("tabulated density needs matching x and density of length >= 2".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("tabulated x must be finite and strictly increasing".into()));
        }
        if density.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::Model("tabulated density must be nonnegative".into()));
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for i in 0..x.len() - 1 {
            let (t, w) = gauss_legendre_on(TABLE_POINTS_PER_PIECE, x[i], x[i + 1]);
            for (ti, wi) in t.into_iter().zip(w) {
                let frac = (ti - x[i]) / (x[i + 1] - x[i]);
                let d = density[i] * (1.0 - frac) + density[i + 1] * frac;
                nodes.push(ti);
                weights.push(wi * d);
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Model("tabulated density has zero mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(MgfFamily::Tabulated { nodes, weights }, None)
    }

    pub fn from_named(name: &str, params: &Value, delta: Option<f64>) -> Result<Self> {
        let model = match name {
            "gaussian" => {
                let mu = param_f64(params, "mu", Some(0.0))?;
                let sigma2 = param_f64(params, "sigma2", Some(1.0))?;
                Self::gaussian(mu, sigma2)?
            }
            "exponential" => Self::exponential(param_f64(params, "rate", Some(1.0))?)?,
            "tabulated" => {
                let x = param_vec(params, "x")?
                    .ok_or_else(|| Error::Config("tabulated MGF needs `x`".into()))?;
                let d = param_vec(params, "density")?
                    .ok_or_else(|| Error::Config("tabulated MGF needs `density`".into()))?;
                Self::tabulated(&x, &d)?
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown MGF family `{other}` (known: gaussian, exponential, tabulated)"
                )))
            }
        };
        match delta {
            Some(_) => Self::new(model.family, delta),
            None => Ok(model),
        }
    }

    pub fn family(&self) -> &MgfFamily {
        &self.family
    }

    pub fn mgf(&self, z: Complex64) -> Complex64 {
        match &self.family {
            MgfFamily::Gaussian { mu, sigma2 } => (z * *mu + z * z * (*sigma2 / 2.0)).exp(),
            MgfFamily::Exponential { rate } => Complex64::new(*rate, 0.0) / (Complex64::new(*rate, 0.0) - z),
            MgfFamily::Tabulated { nodes, weights } => {
                nodes.iter().zip(weights).map(|(&x, &w)| (z * x).exp() * w).sum()
            }
        }
    }

    /// Supremum of the support (`INFINITY` for unbounded laws).
    pub fn support_max(&self) -> f64 {
        match &self.family {
            MgfFamily::Tabulated { nodes, .. } => nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            _ => f64::INFINITY,
        }
    }
}

impl AnalyticFamily for IidMgfModel {
    fn evaluate(&self, z: Complex64) -> Result<OperatorTriple> {
        check_domain(z, self.delta)?;
        Ok(OperatorTriple::scalar(self.mgf(z)))
    }

    fn domain_halfwidth(&self) -> f64 {
        self.delta
    }

    fn dim(&self) -> usize {
        1
    }

    fn natural_radius(&self) -> f64 {
        match &self.family {
            MgfFamily::Gaussian { .. } => 1.0,
            MgfFamily::Exponential { rate } => *rate,
            MgfFamily::Tabulated { nodes, .. } => spread_radius(nodes.iter().copied()),
        }
    }
}
