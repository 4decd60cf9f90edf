//! Analytic operator families `z -> (L(z), ell, v)` with
//! `E exp(z S_N) = ell(L(z)^N v)`, and the JSON model-file format.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::spectral::OperatorTriple;

mod diagnostics;
mod fourier;
mod iid;
mod markov;
mod nystrom;

pub use diagnostics::{
    diophantine_scan, karp_max_mean_cycle, ldp_range, nonlattice_check, DiophantineReport, LatticeCheck,
    LdpRange,
};
pub use fourier::{ExpandingMap, FourierTransferModel, TrigPolynomial};
pub use iid::{IidFiniteModel, IidMgfModel, MgfFamily};
pub use markov::FiniteMarkovModel;
pub use nystrom::{NystromGrid, NystromKernelModel, RealFn2, RealFn1};

/// An operator family that is analytic in `z` on the strip
/// `|Re z| < domain_halfwidth()` and real on the real axis.
pub trait AnalyticFamily: Send + Sync {
    fn evaluate(&self, z: Complex64) -> Result<OperatorTriple>;

    /// Half-width `delta` of the analyticity strip; `INFINITY` for entire families.
    fn domain_halfwidth(&self) -> f64 {
        f64::INFINITY
    }

    fn dim(&self) -> usize;

    /// Cauchy-circle radius used when the strip gives no scale.
    fn natural_radius(&self) -> f64 {
        0.5
    }

    /// `evaluate(conj z) = conj evaluate(z)`.
    fn is_real(&self) -> bool {
        true
    }
}

pub(crate) fn check_domain(z: Complex64, delta: f64) -> Result<()> {
    if !(z.re.abs() < delta) || !z.is_finite() {
        return Err(Error::Domain(format!("z = {z} outside the strip |Re z| < {delta}")));
    }
    Ok(())
}

/// `1 / (max - min)` over observable values, or 1 when they are all equal.
pub(crate) fn spread_radius<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let spread = hi - lo;
    if spread > 1e-12 && spread.is_finite() {
        1.0 / spread
    } else {
        1.0
    }
}

/// Model description as stored in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    IidFinite {
        atoms: Vec<f64>,
        probs: Vec<f64>,
    },
    IidMgf {
        family: String,
        #[serde(default)]
        params: Value,
        #[serde(default)]
        delta: Option<f64>,
    },
    FiniteMarkov {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        h: Vec<Vec<f64>>,
        mu0: Vec<f64>,
    },
    Nystrom {
        kernel: String,
        h: String,
        rho: String,
        #[serde(default)]
        nq: Option<usize>,
        #[serde(default)]
        params: Value,
    },
    Fourier {
        map: String,
        g: TrigPolynomial,
        #[serde(default)]
        rho: Option<TrigPolynomial>,
        m_max: usize,
        #[serde(default, rename = "K")]
        k: Option<usize>,
        #[serde(default)]
        params: Value,
    },
}

/// A concrete model built from a [`ModelSpec`].
#[derive(Debug, Clone)]
pub enum Model {
    IidFinite(IidFiniteModel),
    IidMgf(IidMgfModel),
    FiniteMarkov(FiniteMarkovModel),
    Nystrom(NystromKernelModel),
    Fourier(FourierTransferModel),
}

impl Model {
    pub fn family(&self) -> &dyn AnalyticFamily {
        match self {
            Model::IidFinite(m) => m,
            Model::IidMgf(m) => m,
            Model::FiniteMarkov(m) => m,
            Model::Nystrom(m) => m,
            Model::Fourier(m) => m,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::IidFinite(_) => "iid_finite",
            Model::IidMgf(_) => "iid_mgf",
            Model::FiniteMarkov(_) => "finite_markov",
            Model::Nystrom(_) => "nystrom",
            Model::Fourier(_) => "fourier",
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Ok(match spec {
            ModelSpec::IidFinite { atoms, probs } => {
                Model::IidFinite(IidFiniteModel::new(atoms.clone(), probs.clone())?)
            }
            ModelSpec::IidMgf { family, params, delta } => {
                Model::IidMgf(IidMgfModel::from_named(family, params, *delta)?)
            }
            ModelSpec::FiniteMarkov { p, h, mu0 } => {
                Model::FiniteMarkov(FiniteMarkovModel::new(p.clone(), h.clone(), mu0.clone())?)
            }
            ModelSpec::Nystrom { kernel, h, rho, nq, params } => {
                Model::Nystrom(NystromKernelModel::from_named(kernel, h, rho, *nq, params)?)
            }
            ModelSpec::Fourier { map, g, rho, m_max, k, params } => {
                let map = ExpandingMap::from_named(map, params)?;
                let rho = rho.clone().unwrap_or_else(TrigPolynomial::one);
                Model::Fourier(FourierTransferModel::new(map, g.clone(), rho, *m_max, *k)?)
            }
        })
    }

    /// Parses a JSON model document. Parse errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("model file line {}, column {}: {e}", e.line(), e.column()))
        })?;
        Self::from_spec(&spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read model file {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Reads a named parameter from a JSON object, falling back to `default`.
pub(crate) fn param_f64(params: &Value, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key) {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::Config(format!("parameter `{key}` must be a number"))),
        None => default.ok_or_else(|| Error::Config(format!("missing parameter `{key}`"))),
    }
}

pub(crate) fn param_vec(params: &Value, key: &str) -> Result<Option<Vec<f64>>> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::Config(format!("parameter `{key}`: {e}"))),
    }
}

pub(crate) fn param_matrix(params: &Value, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::Config(format!("parameter `{key}`: {e}"))),
    }
}
