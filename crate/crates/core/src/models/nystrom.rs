use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde_json::Value;

use super::{check_domain, param_f64, param_matrix, param_vec, spread_radius, AnalyticFamily};
use crate::error::{Error, Result};
use crate::quad::gauss_legendre_on;
use crate::spectral::{CMatrix, CVector, OperatorTriple};

pub type RealFn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type RealFn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Quadrature used to discretise `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NystromGrid {
    /// Composite Gauss-Legendre with `cells` equal cells; kernels that are
    /// smooth on each cell are integrated spectrally.
    GaussLegendre { cells: usize },
    /// Periodic trapezoid rule, for kernels periodic in both arguments.
    Periodic,
}

pub const DEFAULT_NQ: usize = 64;

/// Markov chain on `[0, 1]` with transition density `p(x, y)`, observable
/// `h(x, y)` and initial density `rho`, discretised by the Nyström method.
#[derive(Clone)]
pub struct NystromKernelModel {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `p(x_i, x_j) w_j`, row-major.
    kernel: Vec<f64>,
    /// `h(x_i, x_j)`, row-major.
    h: Vec<f64>,
    /// `rho(x_i) w_i`.
    ell: Vec<f64>,
    label: String,
}

impl fmt::Debug for NystromKernelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NystromKernelModel")
            .field("label", &self.label)
            .field("nq", &self.nodes.len())
            .finish()
    }
}

impl NystromKernelModel {
    pub fn new(kernel: RealFn2, h: RealFn2, rho: RealFn1, grid: NystromGrid, nq: usize) -> Result<Self> {
        Self::build(kernel, h, rho, grid, nq, "custom".into())
    }

    fn build(kernel: RealFn2, h: RealFn2, rho: RealFn1, grid: NystromGrid, nq: usize, label: String) -> Result<Self> {
        let (nodes, weights) = match grid {
            NystromGrid::Periodic => {
                if nq < 2 {
                    return Err(Error::Config("nq must be at least 2".into()));
                }
                let n = nq as f64;
                ((0..nq).map(|i| i as f64 / n).collect(), vec![1.0 / n; nq])
            }
            NystromGrid::GaussLegendre { cells } => {
                if cells == 0 || nq < cells {
                    return Err(Error::Config(format!("nq = {nq} too small for {cells} cells")));
                }
                let per = nq.div_ceil(cells);
                let mut nodes = Vec::with_capacity(per * cells);
                let mut weights = Vec::with_capacity(per * cells);
                for c in 0..cells {
                    let a = c as f64 / cells as f64;
                    let b = (c + 1) as f64 / cells as f64;
                    let (x, w) = gauss_legendre_on(per, a, b);
                    nodes.extend(x);
                    weights.extend(w);
                }
                (nodes, weights)
            }
        };
        let n = nodes.len();
        let wsum: f64 = weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-12 {
            return Err(Error::Numerical(format!("quadrature weights sum to {wsum}")));
        }
        let mut kmat = Vec::with_capacity(n * n);
        let mut hmat = Vec::with_capacity(n * n);
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let p = kernel(nodes[i], nodes[j]);
                if !(p > 0.0) || !p.is_finite() {
                    return Err(Error::Model(format!(
                        "kernel value {p} at ({}, {}) is not positive",
                        nodes[i], nodes[j]
                    )));
                }
                let hv = h(nodes[i], nodes[j]);
                if !hv.is_finite() {
                    return Err(Error::Model("observable is not finite on the grid".into()));
                }
                kmat.push(p * weights[j]);
                hmat.push(hv);
                row += p * weights[j];
            }
            if (row - 1.0).abs() > 1e-6 {
                return Err(Error::Model(format!(
                    "kernel row at x = {} integrates to {row}, not 1",
                    nodes[i]
                )));
            }
        }
        let mut ell = Vec::with_capacity(n);
        for i in 0..n {
            let r = rho(nodes[i]);
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::Model(format!("initial density {r} at x = {} is negative", nodes[i])));
            }
            ell.push(r * weights[i]);
        }
        let mass: f64 = ell.iter().sum();
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::Model(format!("initial density integrates to {mass}, not 1")));
        }
        Ok(Self { nodes, weights, kernel: kmat, h: hmat, ell, label })
    }

    /// Builds a model from the builtin registry.
    ///
    /// Kernels: `uniform` (p = 1), `cosine` (1 + c cos 2pi(x - y), |c| < 1),
    /// `linear_coupling` (1 + 12 c (x - 1/2)(y - 1/2), |c| < 1/3) and `block`
    /// (p = k Q[cell x][cell y] for a k x k stochastic `Q`).
    /// Observables: `y`, `xy`, `cos_diff` (cos 2pi(x - y)), `block` (cell
    /// constant, matrix `H`). Densities: `uniform`, `block` (`rho_cells`).
    pub fn from_named(kernel: &str, h: &str, rho: &str, nq: Option<usize>, params: &Value) -> Result<Self> {
        let nq = nq.unwrap_or(DEFAULT_NQ);
        let mut cells: Option<usize> = None;
        let mut set_cells = |k: usize, what: &str| -> Result<()> {
            match cells {
                Some(c) if c != k => Err(Error::Config(format!(
                    "{what} uses {k} blocks but another component uses {c}"
                ))),
                _ => {
                    cells = Some(k);
                    Ok(())
                }
            }
        };
        let cell_of = |x: f64, k: usize| ((x * k as f64).floor() as usize).min(k - 1);

        let (kfn, kernel_periodic): (RealFn2, bool) = match kernel {
            "uniform" => (Arc::new(|_, _| 1.0), true),
            "cosine" => {
                let c = param_f64(params, "c", Some(0.5))?;
                if !(c.abs() < 1.0) {
                    return Err(Error::Model("cosine kernel needs |c| < 1".into()));
                }
                (Arc::new(move |x: f64, y: f64| 1.0 + c * (2.0 * std::f64::consts::PI * (x - y)).cos()), true)
            }
            "linear_coupling" => {
                let c = param_f64(params, "c", Some(0.2))?;
                if !(c.abs() < 1.0 / 3.0) {
                    return Err(Error::Model("linear_coupling kernel needs |c| < 1/3".into()));
                }
                (Arc::new(move |x: f64, y: f64| 1.0 + 12.0 * c * (x - 0.5) * (y - 0.5)), false)
            }
            "block" => {
                let q = param_matrix(params, "Q")?.ok_or_else(|| Error::Config("block kernel needs `Q`".into()))?;
                let k = q.len();
                if k == 0 || q.iter().any(|r| r.len() != k) {
                    return Err(Error::Model("block kernel `Q` must be square".into()));
                }
                for row in &q {
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-12 || row.iter().any(|&v| !(v > 0.0)) {
                        return Err(Error::Model("block kernel `Q` must be positive stochastic".into()));
                    }
                }
                set_cells(k, "kernel")?;
                (Arc::new(move |x: f64, y: f64| k as f64 * q[cell_of(x, k)][cell_of(y, k)]), false)
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown kernel `{other}` (known: uniform, cosine, linear_coupling, block)"
                )))
            }
        };
        let (hfn, h_periodic): (RealFn2, bool) = match h {
            "y" => (Arc::new(|_, y| y), false),
            "xy" => (Arc::new(|x, y| x * y), false),
            "cos_diff" => (Arc::new(|x: f64, y: f64| (2.0 * std::f64::consts::PI * (x - y)).cos()), true),
            "block" => {
                let hm = param_matrix(params, "H")?.ok_or_else(|| Error::Config("block observable needs `H`".into()))?;
                let k = hm.len();
                if k == 0 || hm.iter().any(|r| r.len() != k) {
                    return Err(Error::Model("block observable `H` must be square".into()));
                }
                set_cells(k, "observable")?;
                (Arc::new(move |x: f64, y: f64| hm[cell_of(x, k)][cell_of(y, k)]), false)
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown observable `{other}` (known: y, xy, cos_diff, block)"
                )))
            }
        };
        let (rfn, rho_periodic): (RealFn1, bool) = match rho {
            "uniform" => (Arc::new(|_| 1.0), true),
            "block" => {
                let r = param_vec(params, "rho_cells")?
                    .ok_or_else(|| Error::Config("block density needs `rho_cells`".into()))?;
                let k = r.len();
                if k == 0 {
                    return Err(Error::Model("`rho_cells` is empty".into()));
                }
                set_cells(k, "density")?;
                (Arc::new(move |x: f64| k as f64 * r[cell_of(x, k)]), false)
            }
            other => {
                return Err(Error::Config(format!("unknown density `{other}` (known: uniform, block)")))
            }
        };
        let grid = if kernel_periodic && h_periodic && rho_periodic && cells.is_none() {
            NystromGrid::Periodic
        } else {
            NystromGrid::GaussLegendre { cells: cells.unwrap_or(1) }
        };
        Self::build(kfn, hfn, rfn, grid, nq, format!("{kernel}/{h}/{rho}"))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn observable_values(&self) -> &[f64] {
        &self.h
    }
}

impl AnalyticFamily for NystromKernelModel {
    fn evaluate(&self, z: Complex64) -> Result<OperatorTriple> {
        check_domain(z, f64::INFINITY)?;
        let n = self.nodes.len();
        let m = CMatrix::from_fn(n, n, |i, j| (z * self.h[i * n + j]).exp() * self.kernel[i * n + j]);
        let ell = CVector::from_fn(n, |i, _| Complex64::new(self.ell[i], 0.0));
        let v = CVector::from_element(n, Complex64::new(1.0, 0.0));
        OperatorTriple::new(m, ell, v)
    }

    fn dim(&self) -> usize {
        self.nodes.len()
    }

    fn natural_radius(&self) -> f64 {
        spread_radius(self.h.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FiniteMarkovModel;
    use crate::spectral::perron;
    use approx::assert_relative_eq;
    use serde_json::json;

    #[test]
    fn rank_one_kernel_is_iid() {
        let m = NystromKernelModel::from_named("uniform", "y", "uniform", Some(32), &Value::Null).unwrap();
        let theta = 0.8f64;
        let p = perron(&m.evaluate(Complex64::new(theta, 0.0)).unwrap()).unwrap();
        let quad: f64 = m.nodes().iter().zip(m.weights()).map(|(x, w)| w * (theta * x).exp()).sum();
        assert_relative_eq!(p.lambda.re, quad, max_relative = 1e-13);
        assert_relative_eq!(p.lambda.re, (theta.exp() - 1.0) / theta, max_relative = 1e-13);
    }

    #[test]
    fn markov_kernel_at_zero() {
        let m = NystromKernelModel::from_named("linear_coupling", "xy", "uniform", None, &json!({"c": 0.25})).unwrap();
        let p = perron(&m.evaluate(Complex64::new(0.0, 0.0)).unwrap()).unwrap();
        assert_relative_eq!(p.lambda.re, 1.0, epsilon = 1e-12);
        let m = NystromKernelModel::from_named("cosine", "cos_diff", "uniform", Some(16), &json!({"c": 0.5})).unwrap();
        let p = perron(&m.evaluate(Complex64::new(0.0, 0.0)).unwrap()).unwrap();
        assert_relative_eq!(p.lambda.re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn block_kernel_reduces_to_finite_chain() {
        let q = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let hm = vec![vec![0.0, 1.0], vec![0.5, 2.0]];
        let params = json!({"Q": q, "H": hm, "rho_cells": [0.25, 0.75]});
        let ny = NystromKernelModel::from_named("block", "block", "block", Some(16), &params).unwrap();
        let fm = FiniteMarkovModel::new(q, hm, vec![0.25, 0.75]).unwrap();
        for theta in [-0.5, 0.3, 1.0] {
            let z = Complex64::new(theta, 0.0);
            let a = perron(&ny.evaluate(z).unwrap()).unwrap();
            let b = perron(&fm.evaluate(z).unwrap()).unwrap();
            assert!((a.lambda - b.lambda).norm() < 1e-10 * b.lambda.norm());
            assert!((a.z - b.z).norm() < 1e-10 * b.z.norm());
        }
    }

    #[test]
    fn registry_errors() {
        assert!(matches!(
            NystromKernelModel::from_named("nope", "y", "uniform", None, &Value::Null),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            NystromKernelModel::from_named("cosine", "y", "uniform", None, &json!({"c": 1.5})),
            Err(Error::Model(_))
        ));
    }
}
